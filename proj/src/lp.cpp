#include "v2b/lp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "v2b/common.hpp"

namespace v2b::lp {

int LinearProgram::add_var(double lower, double upper, double c) {
    lo.push_back(lower);
    hi.push_back(upper);
    cost.push_back(c);
    return n_vars() - 1;
}

void LinearProgram::add_row(std::vector<std::pair<int, double>> terms, double lower,
                            double upper) {
    rows.push_back({std::move(terms), lower, upper});
}

void LinearProgram::validate() const {
    if (lo.size() != cost.size() || hi.size() != cost.size())
        throw ConfigError("lp: bound arrays out of sync with costs");
    for (int j = 0; j < n_vars(); ++j) {
        if (std::isnan(lo[j]) || std::isnan(hi[j]) || !std::isfinite(cost[j]))
            throw ConfigError("lp: non-finite cost or NaN bound on variable " +
                              std::to_string(j));
        if (lo[j] > hi[j]) throw ConfigError("lp: empty range on variable " + std::to_string(j));
    }
    for (int r = 0; r < n_rows(); ++r) {
        const Row& row = rows[r];
        if (std::isnan(row.lo) || std::isnan(row.hi) || row.lo > row.hi)
            throw ConfigError("lp: bad bounds on row " + std::to_string(r));
        if (row.lo == -kInf && row.hi == kInf)
            throw ConfigError("lp: row " + std::to_string(r) + " constrains nothing");
        for (auto [j, a] : row.terms) {
            if (j < 0 || j >= n_vars())
                throw ConfigError("lp: row " + std::to_string(r) + " references variable " +
                                  std::to_string(j));
            if (!std::isfinite(a))
                throw ConfigError("lp: non-finite coefficient in row " + std::to_string(r));
        }
    }
}

const char* to_string(Status s) {
    switch (s) {
        case Status::Optimal: return "optimal";
        case Status::Infeasible: return "infeasible";
        case Status::Unbounded: return "unbounded";
        case Status::IterationLimit: return "iteration_limit";
    }
    return "?";
}

namespace {

enum class VarState : unsigned char { Basic, AtLo, AtHi, Free };

// Work representation: structural variables, one slack per row (a·x - s = 0,
// s in [row.lo, row.hi]), one artificial per row for phase 1.
class Simplex {
  public:
    Simplex(const LinearProgram& lp, const Options& opts)
        : nv_(lp.n_vars()), m_(lp.n_rows()), n_(nv_ + 2 * m_), tol_(opts.tol) {
        max_iter_ = opts.max_iterations > 0 ? opts.max_iterations : 10000 + 20 * (n_ + m_);
        cols_.resize(n_);
        lo_.assign(n_, 0.0);
        hi_.assign(n_, 0.0);
        cost_.assign(n_, 0.0);
        for (int j = 0; j < nv_; ++j) {
            lo_[j] = lp.lo[j];
            hi_[j] = lp.hi[j];
            cost_[j] = lp.cost[j];
        }
        for (int r = 0; r < m_; ++r) {
            for (auto [j, a] : lp.rows[r].terms) cols_[j].push_back({r, a});
            cols_[slack(r)].push_back({r, -1.0});
            lo_[slack(r)] = lp.rows[r].lo;
            hi_[slack(r)] = lp.rows[r].hi;
        }
    }

    Solution run(const LinearProgram& lp) {
        Solution sol;
        place_nonbasic();
        install_artificials();

        Status s1 = iterate(/*phase1=*/true);
        sol.iterations = iters_;
        if (s1 == Status::IterationLimit) {
            sol.status = s1;
            return sol;
        }
        double infeas = 0;
        for (int r = 0; r < m_; ++r) infeas += value_[art(r)];
        if (infeas > tol_ * (1.0 + scale_)) {
            sol.status = Status::Infeasible;
            return sol;
        }
        expel_artificials();

        Status s2 = iterate(/*phase1=*/false);
        sol.iterations = iters_;
        sol.status = s2;
        if (s2 != Status::Optimal) return sol;

        sol.x.assign(value_.begin(), value_.begin() + nv_);
        sol.objective = lp.constant;
        for (int j = 0; j < nv_; ++j) sol.objective += lp.cost[j] * sol.x[j];
        sol.row_value.assign(m_, 0.0);
        for (int r = 0; r < m_; ++r)
            for (auto [j, a] : lp.rows[r].terms) sol.row_value[r] += a * sol.x[j];
        sol.row_dual.assign(m_, 0.0);
        Eigen::VectorXd y = duals(/*phase1=*/false);
        for (int r = 0; r < m_; ++r) sol.row_dual[r] = y[r];
        return sol;
    }

  private:
    int slack(int r) const { return nv_ + r; }
    int art(int r) const { return nv_ + m_ + r; }
    bool is_art(int j) const { return j >= nv_ + m_; }
    bool fixed(int j) const { return lo_[j] == hi_[j]; }

    void place_nonbasic() {
        value_.assign(n_, 0.0);
        state_.assign(n_, VarState::Free);
        for (int j = 0; j < nv_ + m_; ++j) {
            bool lo_ok = std::isfinite(lo_[j]), hi_ok = std::isfinite(hi_[j]);
            if (lo_ok && (!hi_ok || std::abs(lo_[j]) <= std::abs(hi_[j]))) {
                state_[j] = VarState::AtLo;
                value_[j] = lo_[j];
            } else if (hi_ok) {
                state_[j] = VarState::AtHi;
                value_[j] = hi_[j];
            } else {
                state_[j] = VarState::Free;
                value_[j] = 0.0;
            }
            scale_ = std::max(scale_, std::abs(value_[j]));
        }
    }

    void install_artificials() {
        std::vector<double> resid(m_, 0.0);  // rows read  a·x - s + sign*art = 0
        for (int j = 0; j < nv_ + m_; ++j) {
            if (value_[j] == 0.0) continue;
            for (auto [r, a] : cols_[j]) resid[r] += a * value_[j];
        }
        basis_.resize(m_);
        in_basis_.assign(n_, -1);
        binv_ = Eigen::MatrixXd::Zero(m_, m_);
        for (int r = 0; r < m_; ++r) {
            double sign = resid[r] > 0 ? -1.0 : 1.0;
            cols_[art(r)] = {{r, sign}};
            lo_[art(r)] = 0.0;
            hi_[art(r)] = kInf;
            value_[art(r)] = std::abs(resid[r]);
            state_[art(r)] = VarState::Basic;
            basis_[r] = art(r);
            in_basis_[art(r)] = r;
            binv_(r, r) = sign;  // B = diag(sign), its own inverse
        }
    }

    // Basic artificials left at zero after phase 1 are swapped for any real
    // column with weight in their row; rows with none are redundant and keep a
    // pinned artificial.
    void expel_artificials() {
        for (int r = 0; r < m_; ++r) {
            lo_[art(r)] = hi_[art(r)] = 0.0;
            if (state_[art(r)] != VarState::Basic) state_[art(r)] = VarState::AtLo;
        }
        for (int pos = 0; pos < m_; ++pos) {
            if (!is_art(basis_[pos])) continue;
            for (int j = 0; j < nv_ + m_; ++j) {
                if (state_[j] == VarState::Basic || fixed(j)) continue;
                Eigen::VectorXd w = ftran(j);
                if (std::abs(w[pos]) > 1e2 * tol_) {
                    pivot(j, direction_of(j), 0.0, pos, w);
                    break;
                }
            }
        }
    }

    double direction_of(int j) const { return state_[j] == VarState::AtHi ? -1.0 : 1.0; }

    Eigen::VectorXd ftran(int j) const {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(m_);
        for (auto [r, a] : cols_[j]) w += a * binv_.col(r);
        return w;
    }

    Eigen::VectorXd duals(bool phase1) const {
        Eigen::VectorXd cb(m_);
        for (int r = 0; r < m_; ++r)
            cb[r] = phase1 ? (is_art(basis_[r]) ? 1.0 : 0.0) : cost_of(basis_[r]);
        return binv_.transpose() * cb;
    }

    double cost_of(int j) const { return is_art(j) || j >= nv_ ? 0.0 : cost_[j]; }

    double objective(bool phase1) const {
        double o = 0;
        if (phase1) {
            for (int r = 0; r < m_; ++r) o += value_[art(r)] > 0 ? value_[art(r)] : 0.0;
        } else {
            for (int j = 0; j < nv_; ++j) o += cost_[j] * value_[j];
        }
        return o;
    }

    void refactor() {
        if (m_ == 0) return;
        Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m_, m_);
        for (int pos = 0; pos < m_; ++pos)
            for (auto [r, a] : cols_[basis_[pos]]) b(r, pos) = a;
        binv_ = Eigen::PartialPivLU<Eigen::MatrixXd>(b).inverse();
        // rebuild basic values from the nonbasic ones: B x_B = -N x_N
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m_);
        for (int j = 0; j < n_; ++j) {
            if (state_[j] == VarState::Basic || value_[j] == 0.0) continue;
            for (auto [r, a] : cols_[j]) rhs[r] -= a * value_[j];
        }
        Eigen::VectorXd xb = binv_ * rhs;
        for (int pos = 0; pos < m_; ++pos) value_[basis_[pos]] = xb[pos];
    }

    void pivot(int q, double dir, double t, int leave_pos, const Eigen::VectorXd& w) {
        for (int pos = 0; pos < m_; ++pos) value_[basis_[pos]] -= dir * t * w[pos];
        value_[q] += dir * t;

        int out = basis_[leave_pos];
        // snap the leaving variable to the bound it reached
        double dl = std::isfinite(lo_[out]) ? std::abs(value_[out] - lo_[out]) : kInf;
        double dh = std::isfinite(hi_[out]) ? std::abs(value_[out] - hi_[out]) : kInf;
        if (dl <= dh) {
            state_[out] = VarState::AtLo;
            value_[out] = lo_[out];
        } else {
            state_[out] = VarState::AtHi;
            value_[out] = hi_[out];
        }
        in_basis_[out] = -1;
        basis_[leave_pos] = q;
        in_basis_[q] = leave_pos;
        state_[q] = VarState::Basic;

        double piv = w[leave_pos];
        Eigen::RowVectorXd prow = binv_.row(leave_pos) / piv;
        for (int i = 0; i < m_; ++i) {
            if (i == leave_pos) continue;
            double wi = w[i];
            if (wi != 0.0) binv_.row(i) -= wi * prow;
        }
        binv_.row(leave_pos) = prow;
        if (++pivots_since_refactor_ >= 100) {
            refactor();
            pivots_since_refactor_ = 0;
        }
    }

    Status iterate(bool phase1) {
        refactor();
        int stall = 0;
        bool bland = false;
        double best = objective(phase1);
        while (true) {
            if (++iters_ > max_iter_) return Status::IterationLimit;
            Eigen::VectorXd y = duals(phase1);

            int q = -1;
            double qdir = 0, best_score = tol_;
            for (int j = 0; j < n_; ++j) {
                if (state_[j] == VarState::Basic || fixed(j)) continue;
                if (!phase1 && is_art(j)) continue;
                double d = (phase1 ? (is_art(j) ? 1.0 : 0.0) : cost_of(j));
                for (auto [r, a] : cols_[j]) d -= y[r] * a;
                double score = 0, dir = 0;
                if (state_[j] == VarState::AtLo && d < -tol_) {
                    score = -d;
                    dir = 1;
                } else if (state_[j] == VarState::AtHi && d > tol_) {
                    score = d;
                    dir = -1;
                } else if (state_[j] == VarState::Free && std::abs(d) > tol_) {
                    score = std::abs(d);
                    dir = d > 0 ? -1 : 1;
                }
                if (score > best_score) {
                    q = j;
                    qdir = dir;
                    best_score = score;
                    if (bland) break;  // first eligible index wins
                }
            }
            if (q < 0) {
                if (phase1) return Status::Optimal;  // phase-1 minimum reached
                return Status::Optimal;
            }

            Eigen::VectorXd w = ftran(q);
            double t = kInf;  // own-range flip distance
            if (std::isfinite(lo_[q]) && std::isfinite(hi_[q])) t = hi_[q] - lo_[q];
            int leave = -1;
            double leave_weight = 0;
            for (int pos = 0; pos < m_; ++pos) {
                double delta = -qdir * w[pos];
                if (std::abs(delta) <= 1e-11) continue;
                int b = basis_[pos];
                double room = delta > 0 ? hi_[b] - value_[b] : lo_[b] - value_[b];
                if (!std::isfinite(room / delta)) continue;
                double cand = std::max(0.0, room / delta);
                double window = 1e-9 * (1.0 + std::min(std::abs(t), 1e12));
                if (cand < t - window ||
                    (cand < t + window && std::abs(w[pos]) > leave_weight)) {
                    t = cand;
                    leave = pos;
                    leave_weight = std::abs(w[pos]);
                }
            }
            if (!std::isfinite(t)) return Status::Unbounded;

            if (leave < 0) {  // bound flip, basis unchanged
                for (int pos = 0; pos < m_; ++pos) value_[basis_[pos]] -= qdir * t * w[pos];
                value_[q] += qdir * t;
                state_[q] = state_[q] == VarState::AtLo ? VarState::AtHi : VarState::AtLo;
            } else {
                pivot(q, qdir, t, leave, w);
            }

            double now = objective(phase1);
            if (now < best - 1e-10 * (1.0 + std::abs(best))) {
                best = now;
                stall = 0;
                bland = false;
            } else if (++stall > 200) {
                bland = true;  // anti-cycling fallback
            }
        }
    }

    int nv_, m_, n_;
    double tol_;
    int max_iter_ = 0;
    int iters_ = 0;
    int pivots_since_refactor_ = 0;
    double scale_ = 1.0;
    std::vector<std::vector<std::pair<int, double>>> cols_;
    std::vector<double> lo_, hi_, cost_, value_;
    std::vector<VarState> state_;
    std::vector<int> basis_, in_basis_;
    Eigen::MatrixXd binv_;
};

}  // namespace

Solution solve(const LinearProgram& lp, const Options& opts) {
    lp.validate();
    Simplex s(lp, opts);
    return s.run(lp);
}

std::string to_text(const LinearProgram& lp) {
    auto num = [](double v) {
        if (v == kInf) return std::string("inf");
        if (v == -kInf) return std::string("-inf");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.12g", v);
        return std::string(buf);
    };
    std::string out = "minimize";
    for (int j = 0; j < lp.n_vars(); ++j) {
        if (lp.cost[j] == 0) continue;
        out += " + " + num(lp.cost[j]) + " x" + std::to_string(j);
    }
    if (lp.constant != 0) out += " + " + num(lp.constant);
    out += "\nvars " + std::to_string(lp.n_vars()) + "\n";
    for (int j = 0; j < lp.n_vars(); ++j)
        out += "  x" + std::to_string(j) + " in [" + num(lp.lo[j]) + ", " + num(lp.hi[j]) +
               "]\n";
    out += "rows " + std::to_string(lp.n_rows()) + "\n";
    for (int r = 0; r < lp.n_rows(); ++r) {
        out += "  r" + std::to_string(r) + ":";
        for (auto [j, a] : lp.rows[r].terms) out += " + " + num(a) + " x" + std::to_string(j);
        out += " in [" + num(lp.rows[r].lo) + ", " + num(lp.rows[r].hi) + "]\n";
    }
    return out;
}

}  // namespace v2b::lp
