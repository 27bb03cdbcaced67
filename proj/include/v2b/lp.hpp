#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace v2b::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// minimize cost·x + constant  subject to  row.lo <= a·x <= row.hi  and
// lo <= x <= hi.  Row bounds may be infinite; equality rows use lo == hi.
struct LinearProgram {
    std::vector<double> cost;
    std::vector<double> lo, hi;
    double constant = 0;

    struct Row {
        std::vector<std::pair<int, double>> terms;  // (variable, coefficient)
        double lo = -kInf;
        double hi = kInf;
    };
    std::vector<Row> rows;

    int n_vars() const { return static_cast<int>(cost.size()); }
    int n_rows() const { return static_cast<int>(rows.size()); }

    int add_var(double lower, double upper, double c);
    void add_row(std::vector<std::pair<int, double>> terms, double lower, double upper);
    void validate() const;  // throws ConfigError on malformed input
};

enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };

const char* to_string(Status s);

struct Solution {
    Status status = Status::IterationLimit;
    double objective = 0;  // includes the constant term
    std::vector<double> x;
    std::vector<double> row_value;  // a·x per row
    // Shadow price: derivative of the optimum w.r.t. the row's active bound
    // (zero for inactive rows).
    std::vector<double> row_dual;
    int iterations = 0;
};

struct Options {
    double tol = 1e-7;
    int max_iterations = 0;  // 0 picks a size-based default
};

// Two-phase bounded-variable primal simplex with a dense basis inverse.
// Dantzig pricing, switching to Bland's rule when the objective stalls.
Solution solve(const LinearProgram& lp, const Options& opts = {});

// Plain-text dump for eyeballing or feeding to an external solver.
std::string to_text(const LinearProgram& lp);

}  // namespace v2b::lp
