#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smatch/scores.hpp"

namespace smatch {

enum class Metric { LogScore, RatioScore };
enum class MeanNorm { Euclidean, Sup };

struct MatchSpec {
    int pivot = 0;
    std::optional<int> anchor_arm;  // defaults to pivot
    int neighbors_per_arm = 1;
    bool with_replacement = true;
    std::optional<double> caliper;  // max allowed (unsquared) distance
    Metric metric = Metric::LogScore;
    bool use_index = false;  // k-d tree; results identical to the scan

    int anchor() const { return anchor_arm.value_or(pivot); }
};

struct Match {
    std::string unit_id;
    double distance = 0.0;  // Euclidean (not squared)
};

struct MatchedGroup {
    std::string anchor_id;
    // one entry per non-anchor arm, increasing arm index; each sorted
    // ascending by (distance, id)
    std::map<int, std::vector<Match>> matches;
};

struct Unmatched {
    std::string anchor_id;
    std::string reason;  // "caliper" or "pool exhausted"
};

struct MatchingResult {
    std::vector<MatchedGroup> groups;
    std::vector<Unmatched> unmatched;
    MatchSpec spec;
    std::map<std::string, int> reuse_counts;  // per matched unit id
};

using ScoreMap = std::map<std::string, ScoreVector>;  // unit id -> score

// Nearest-neighbor matching. Ties break on lexicographic unit id; the caliper
// rejects a whole group when any arm fails it.
MatchingResult match_units(const Dataset& d, const ScoreMap& scores, const MatchSpec& spec);

using ScoreProvider = std::function<ScoreMap(int pivot)>;

std::vector<std::pair<int, MatchingResult>> match_all_pivots(const Dataset& d,
                                                             const ScoreProvider& provider,
                                                             const MatchSpec& spec);

// Best matching set: minimizer over results of the chosen norm of
// (matched-units covariate mean) - (anchor covariate mean); ties to the
// smaller pivot index.
std::pair<int, MatchingResult> select_best_pivot(
    const std::vector<std::pair<int, MatchingResult>>& results, const Dataset& d, MeanNorm norm);

struct PcaReduction {
    Eigen::MatrixXd loadings;          // d x (k-1), orthonormal rows
    Eigen::VectorXd explained;         // per-component variance fractions
    Eigen::VectorXd center;
    int retained = 0;
};

struct PcaTarget {
    std::optional<int> dimension;
    std::optional<double> variance_fraction;  // in (0, 1]
};

std::pair<PcaReduction, Eigen::MatrixXd> reduce_scores_pca(const Eigen::MatrixXd& scores,
                                                           const PcaTarget& target);

}  // namespace smatch
