#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "smatch/scores.hpp"

namespace smatch {

// Least-squares density-ratio model: r(x) = sum_l alpha_l K_sigma(x, c_l)
// with Gaussian kernels at centers subsampled from the numerator sample.
struct DensityRatioModel {
    Eigen::MatrixXd centers;  // n_centers x p
    double bandwidth = 1.0;
    Eigen::VectorXd alpha;    // nonnegative after clamping
    double ridge = 0.0;
    int numerator_arm = -1;
    int denominator_arm = -1;
};

struct BasisConfig {
    int max_centers = 100;
    std::vector<double> bandwidth_grid = {0.1, 0.2, 0.5, 0.8, 1.2, 2.0};
    std::vector<double> ridge_grid = {1e-3, 1e-2, 1e-1, 1.0};
    int folds = 5;
    std::uint64_t seed = 0;
};

// Fits (H + lambda I) alpha = h where H is the denominator-sample second
// moment of the basis and h the numerator-sample first moment; negative
// coefficients are clamped to zero. (sigma, lambda) picked from the grids by
// k-fold cross-validated squared-error, lexicographic tie-break.
DensityRatioModel fit_ratio(const Eigen::MatrixXd& numerator_sample,
                            const Eigen::MatrixXd& denominator_sample, const BasisConfig& cfg);

// Single-candidate fit at fixed (sigma, lambda); no cross-validation.
DensityRatioModel fit_ratio_fixed(const Eigen::MatrixXd& numerator_sample,
                                  const Eigen::MatrixXd& denominator_sample, double bandwidth,
                                  double ridge, int max_centers, std::uint64_t seed);

double predict_ratio(const DensityRatioModel& m, const Eigen::VectorXd& x);

// Residual of the linear solve before clamping; used by the solve-correctness
// invariant.
double solve_residual(const DensityRatioModel& m, const Eigen::MatrixXd& numerator_sample,
                      const Eigen::MatrixXd& denominator_sample);

// Score model assembled from one fitted ratio per non-pivot arm, with log
// floor 1e-12 when converting ratios to log scores.
class RatioScoreModel : public ScoreModel {
public:
    RatioScoreModel(const Dataset& d, int pivot, const BasisConfig& cfg);
    int k() const override { return k_; }
    ScoreVector score(const Eigen::VectorXd& x, int pivot) const override;
    const std::vector<DensityRatioModel>& models() const { return models_; }

    static constexpr double kLogFloor = 1e-12;

private:
    int k_ = 0;
    int fit_pivot_ = 0;
    std::vector<DensityRatioModel> models_;  // one per non-pivot arm, arm-index order
};

}  // namespace smatch
