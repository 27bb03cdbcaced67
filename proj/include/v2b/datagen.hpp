#pragma once

#include <random>
#include <string>
#include <vector>

#include "v2b/core.hpp"
#include "v2b/oracle.hpp"

namespace v2b::datagen {

// 99% confidence, two-sided: z at the 0.995 quantile.
inline constexpr double kZ99 = 2.5758293035489004;

// Generative model for one synthetic month.  Distribution families are
// configurable defaults, not ground truth: arrivals cluster mid-morning,
// stays run into the afternoon, and the building follows an office curve.
struct ScenarioSpec {
    double arrival_rate = 10.0;  // mean sessions per weekday (Poisson)
    double arrival_hour_mean = 9.5;
    double arrival_hour_sd = 1.5;
    double stay_hours_mean = 6.5;
    double stay_hours_sd = 1.5;
    double stay_hours_min = 0.5;
    double soc_init_mean = 0.35;
    double soc_init_sd = 0.10;
    double soc_req_mean = 0.80;
    double soc_req_sd = 0.05;
    std::vector<double> capacities_kwh = {40.0, 62.0};
    std::vector<double> capacity_weights = {2.0, 1.0};
    std::vector<double> building_base_kw;  // one-day shape; empty = default curve
    double building_noise_kw = 4.0;
    int weekdays = 22;
    Tariff tariff;
    unsigned long long seed = 0;

    void validate() const;
};

std::vector<double> default_building_curve(int slots_per_day);

// Months start on a Monday and end on the last required weekday; weekend days
// in between carry building load but no arrivals.  Sessions depart the same
// day they arrive.  history_peaks_kw comes from seven building-only warmup
// days drawn before the month.
Episode sample_month(const ScenarioSpec& spec, unsigned long long seed);

// Weekday days only.  Each daily episode inherits the month's estimated peak
// and the rolling window of the seven preceding daily building peaks.
// Sessions that span midnight are cut at day end; weekend arrivals are
// dropped and counted into *dropped when given.
std::vector<Episode> split_daily(const Episode& monthly, int* dropped = nullptr);

// Lower edge of the 99% confidence interval over the months' optimal peaks,
// optionally inflated by e.g. 0.05; a single month degenerates to its peak.
double estimate_peak(const std::vector<Episode>& monthly, const std::vector<ChargerSpec>& chargers,
                     const oracle::Weights& weights = {}, double inflate = 0.0);

struct KMeansResult {
    std::vector<int> labels;
    std::vector<double> centers;
    std::vector<double> objective_per_iter;  // after each assignment pass
    int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding on scalar features; stops on an
// assignment fixpoint or after 100 passes.
KMeansResult kmeans_1d(const std::vector<double>& values, int k, std::mt19937_64& rng);

struct SampleSet {
    std::vector<Episode> episodes;          // monthly
    std::vector<double> demand_charges_usd;  // from the per-episode optimal plan
    std::vector<int> labels;                // filled by downsample
};

SampleSet make_sample_set(std::vector<Episode> episodes, const std::vector<ChargerSpec>& chargers,
                          const oracle::Weights& weights = {});

struct Split {
    std::vector<int> train_indices;  // into the sample set
    std::vector<int> test_indices;
};

// Cluster on the demand charge, then draw train/test proportionally to
// cluster sizes (remainders go to the largest clusters), disjoint.
Split downsample(SampleSet& set, int k, int n_train, int n_test, unsigned long long seed);

// ---- serialization (versioned JSON) ----

struct EpisodeFile {
    Episode episode;
    std::vector<ChargerSpec> chargers;
    unsigned long long seed = 0;  // provenance of the draw
};

std::string episode_to_json(const EpisodeFile& file);
EpisodeFile episode_from_json(const std::string& text);
void save_episode(const std::string& path, const EpisodeFile& file);
EpisodeFile load_episode(const std::string& path);

std::string scenario_to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const std::string& text);  // absent fields keep defaults

}  // namespace v2b::datagen
