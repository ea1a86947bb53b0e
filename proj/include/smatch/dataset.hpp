#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "smatch/common.hpp"

namespace smatch {

// Contiguous 0-based arm index with its external label.
struct TreatmentId {
    int index = -1;
    std::string label;

    friend bool operator==(const TreatmentId& a, const TreatmentId& b) {
        return a.index == b.index;
    }
};

struct Unit {
    std::string id;
    int treatment = -1;  // index into Dataset::levels
    Eigen::VectorXd covariates;
    std::optional<double> response;
};

// Per-covariate location/scale used by standardize(); population-sd
// convention (divide by n).
struct ScalingParams {
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;
};

// Immutable after construction; safe to share across concurrent readers.
class Dataset {
public:
    Dataset(std::vector<Unit> units, std::vector<TreatmentId> levels,
            std::vector<std::string> covariate_names);

    const std::vector<Unit>& units() const { return units_; }
    const std::vector<TreatmentId>& levels() const { return levels_; }
    const std::vector<std::string>& covariate_names() const { return covariate_names_; }
    int k() const { return static_cast<int>(levels_.size()); }
    int p() const { return static_cast<int>(covariate_names_.size()); }
    std::size_t n() const { return units_.size(); }

    // Unit indices of one arm, in dataset order.
    const std::vector<std::size_t>& arm(int treatment_index) const;

    const TreatmentId& level_by_label(const std::string& label) const;
    const Unit& unit_by_id(const std::string& id) const;

    // Covariates of one arm as an (n_t x p) matrix.
    Eigen::MatrixXd arm_covariates(int treatment_index) const;

private:
    std::vector<Unit> units_;
    std::vector<TreatmentId> levels_;
    std::vector<std::string> covariate_names_;
    std::vector<std::vector<std::size_t>> arms_;
    std::vector<std::pair<std::string, std::size_t>> id_index_;  // sorted by id
};

struct CsvSchema {
    std::string id_col;  // empty: synthesize row-number ids
    std::string treatment_col;
    std::vector<std::string> covariate_cols;
    std::string response_col;                  // empty: no responses
    std::vector<std::string> level_order;      // empty: first-appearance order
};

Dataset load_csv(const std::string& path, const CsvSchema& schema);

// Pooled standardization across all arms: per-covariate mean 0, population
// sd 1. Throws InputError naming the column when a covariate is constant.
std::pair<Dataset, ScalingParams> standardize(const Dataset& d);

// Inverse of standardize via the recorded parameters.
Dataset unstandardize(const Dataset& d, const ScalingParams& sp);

}  // namespace smatch
