#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "smatch/matching.hpp"
#include "smatch/ratio_estim.hpp"
#include "smatch/scores.hpp"

namespace smatch {

struct GaussianMixture {
    Eigen::VectorXd weights;              // sum to 1
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covs;

    Eigen::VectorXd mean() const;  // E[X]
    Eigen::VectorXd sample(std::mt19937_64& rng) const;
};

struct OutcomeModel {
    // linear: intercept + slope' x; otherwise a user polynomial in x
    bool linear = true;
    double intercept = 0.0;
    Eigen::VectorXd slope;
    Polynomial poly;

    double mu(const Eigen::VectorXd& x) const;
};

struct SimulationScenario {
    int k = 2, p = 1;
    GaussianMixture covariate_law;
    Eigen::MatrixXd assignment_coef;  // k x (p+1) logit matrix B*
    std::vector<OutcomeModel> outcomes;  // one per arm
    double sigma_y = 1.0;
    std::uint64_t seed = 0;
    std::vector<std::string> level_labels;  // defaults t1..tk

    void validate() const;
};

// The reference confounded scenario fixed in this repo: k=3, p=2,
// X ~ N(0, I), logit rows (0,0,0), (0.5,1,0), (-0.5,0,1), linear outcomes
// a=(0,1,2) with unit slopes, sigma_y=1. True effects 1, 1, 2.
SimulationScenario reference_confounded_scenario();

// Full potential-outcome table; available to oracle code only, never to
// estimators (they receive the Dataset).
struct PotentialOutcomes {
    Eigen::MatrixXd responses;  // n x k
};

struct GeneratedData {
    Dataset data;
    PotentialOutcomes potential;
};

GeneratedData generate(const SimulationScenario& sc, int n, std::uint64_t seed);

struct TrueAte {
    double value = 0.0;
    double mc_error = 0.0;  // 0 for the closed form
    std::string method;     // "closed_form" or "monte_carlo"
};

TrueAte true_ate(const SimulationScenario& sc, int arm_a, int arm_b);

enum class ScoreModelKind { Glm, KnownTrue, Ratio };

struct PipelineConfig {
    ScoreModelKind model = ScoreModelKind::Glm;
    LogitFitOptions logit;
    BasisConfig ratio;
    MatchSpec match;
    bool standardize_covariates = true;
};

struct PairReport {
    int arm_a = 0, arm_b = 0;
    double true_effect = 0.0;
    double mean_bias = 0.0;       // matched estimator
    double sd = 0.0;              // empirical sd of matched estimates
    double mc_se = 0.0;           // sd / sqrt(reps)
    double naive_mean_bias = 0.0; // unmatched arm-mean difference
    double naive_sd = 0.0;
    double naive_mc_se = 0.0;
};

struct ExperimentReport {
    std::vector<PairReport> pairs;
    int reps = 0;
    int failed_reps = 0;
    int n = 0;
    std::uint64_t seed = 0;
};

// Per rep (independent seeded substream): generate -> score -> match ->
// estimate; aggregates bias vs true_ate for every pair plus the naive
// unmatched comparison. Throws NumericError when more than 10% of reps fail.
ExperimentReport run_experiment(const SimulationScenario& sc, const PipelineConfig& cfg, int n,
                                int reps, std::uint64_t seed);

}  // namespace smatch
