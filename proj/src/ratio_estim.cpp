#include "smatch/ratio_estim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace smatch {

namespace {

// n x L kernel design matrix.
Eigen::MatrixXd kernel_design(const Eigen::MatrixXd& sample, const Eigen::MatrixXd& centers,
                              double sigma) {
    const auto n = sample.rows();
    const auto L = centers.rows();
    Eigen::MatrixXd phi(n, L);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index l = 0; l < L; ++l)
            phi(i, l) = std::exp(-(sample.row(i) - centers.row(l)).squaredNorm() * inv);
    return phi;
}

Eigen::VectorXd solve_alpha(const Eigen::MatrixXd& phi_den, const Eigen::MatrixXd& phi_num,
                            double ridge) {
    const auto L = phi_den.cols();
    Eigen::MatrixXd H =
        phi_den.transpose() * phi_den / static_cast<double>(phi_den.rows());
    Eigen::VectorXd h = phi_num.colwise().mean().transpose();
    Eigen::MatrixXd A = H + ridge * Eigen::MatrixXd::Identity(L, L);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    Eigen::VectorXd diag = ldlt.vectorD().cwiseAbs();
    // a rank-deficient Gram matrix can still yield a consistent system, so
    // the residual alone does not expose it
    if (diag.minCoeff() <= 1e-12 * std::max(1.0, diag.maxCoeff()))
        throw NumericError("density-ratio solve is singular; use a positive ridge");
    Eigen::VectorXd alpha = ldlt.solve(h);
    const double resid = (A * alpha - h).cwiseAbs().maxCoeff();
    if (!alpha.allFinite() || resid > 1e-6 * std::max(1.0, h.cwiseAbs().maxCoeff()))
        throw NumericError("density-ratio solve is singular; use a positive ridge");
    return alpha;
}

// Squared-error CV criterion J = 1/2 a'Ha - h'a on the validation parts.
double cv_score(const Eigen::MatrixXd& phi_num, const Eigen::MatrixXd& phi_den, double ridge,
                int folds) {
    const auto n_num = phi_num.rows();
    const auto n_den = phi_den.rows();
    double total = 0.0;
    for (int f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> num_tr, num_va, den_tr, den_va;
        for (Eigen::Index i = 0; i < n_num; ++i)
            (i % folds == f ? num_va : num_tr).push_back(i);
        for (Eigen::Index i = 0; i < n_den; ++i)
            (i % folds == f ? den_va : den_tr).push_back(i);
        if (num_tr.empty() || num_va.empty() || den_tr.empty() || den_va.empty())
            return std::numeric_limits<double>::infinity();

        auto take = [](const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
            Eigen::MatrixXd out(rows.size(), m.cols());
            for (std::size_t r = 0; r < rows.size(); ++r) out.row(r) = m.row(rows[r]);
            return out;
        };
        Eigen::MatrixXd pn_tr = take(phi_num, num_tr), pn_va = take(phi_num, num_va);
        Eigen::MatrixXd pd_tr = take(phi_den, den_tr), pd_va = take(phi_den, den_va);

        Eigen::VectorXd alpha;
        try {
            alpha = solve_alpha(pd_tr, pn_tr, ridge);
        } catch (const NumericError&) {
            return std::numeric_limits<double>::infinity();
        }
        alpha = alpha.cwiseMax(0.0);
        Eigen::MatrixXd H_va =
            pd_va.transpose() * pd_va / static_cast<double>(pd_va.rows());
        Eigen::VectorXd h_va = pn_va.colwise().mean().transpose();
        total += 0.5 * alpha.dot(H_va * alpha) - h_va.dot(alpha);
    }
    return total / folds;
}

Eigen::MatrixXd pick_centers(const Eigen::MatrixXd& numerator_sample, int max_centers,
                             std::uint64_t seed) {
    const auto n = numerator_sample.rows();
    const auto L = std::min<Eigen::Index>(n, std::max(1, max_centers));
    auto rng = make_rng(seed, /*stream=*/0x9e3779b9u);
    auto idx = sample_without_replacement(static_cast<std::size_t>(n),
                                          static_cast<std::size_t>(L), rng);
    std::sort(idx.begin(), idx.end());
    Eigen::MatrixXd centers(L, numerator_sample.cols());
    for (Eigen::Index l = 0; l < L; ++l)
        centers.row(l) = numerator_sample.row(static_cast<Eigen::Index>(idx[l]));
    return centers;
}

}  // namespace

DensityRatioModel fit_ratio_fixed(const Eigen::MatrixXd& numerator_sample,
                                  const Eigen::MatrixXd& denominator_sample, double bandwidth,
                                  double ridge, int max_centers, std::uint64_t seed) {
    if (numerator_sample.rows() == 0 || denominator_sample.rows() == 0)
        throw InputError("fit_ratio: empty sample");
    if (numerator_sample.cols() != denominator_sample.cols())
        throw InputError("fit_ratio: sample dimension mismatch");
    if (bandwidth <= 0.0) throw InputError("fit_ratio: bandwidth must be positive");

    DensityRatioModel m;
    m.centers = pick_centers(numerator_sample, max_centers, seed);
    m.bandwidth = bandwidth;
    m.ridge = ridge;
    Eigen::MatrixXd phi_num = kernel_design(numerator_sample, m.centers, bandwidth);
    Eigen::MatrixXd phi_den = kernel_design(denominator_sample, m.centers, bandwidth);
    m.alpha = solve_alpha(phi_den, phi_num, ridge).cwiseMax(0.0);
    return m;
}

DensityRatioModel fit_ratio(const Eigen::MatrixXd& numerator_sample,
                            const Eigen::MatrixXd& denominator_sample, const BasisConfig& cfg) {
    if (numerator_sample.rows() == 0 || denominator_sample.rows() == 0)
        throw InputError("fit_ratio: empty sample");
    if (numerator_sample.cols() != denominator_sample.cols())
        throw InputError("fit_ratio: sample dimension mismatch");
    if (cfg.bandwidth_grid.empty() || cfg.ridge_grid.empty())
        throw InputError("fit_ratio: empty hyperparameter grid");
    if (cfg.folds < 2) throw InputError("fit_ratio: folds must be >= 2");

    std::vector<double> sigmas = cfg.bandwidth_grid;
    std::vector<double> ridges = cfg.ridge_grid;
    std::sort(sigmas.begin(), sigmas.end());
    std::sort(ridges.begin(), ridges.end());

    Eigen::MatrixXd centers = pick_centers(numerator_sample, cfg.max_centers, cfg.seed);

    double best = std::numeric_limits<double>::infinity();
    double best_sigma = sigmas.front(), best_ridge = ridges.front();
    for (double sigma : sigmas) {
        Eigen::MatrixXd phi_num = kernel_design(numerator_sample, centers, sigma);
        Eigen::MatrixXd phi_den = kernel_design(denominator_sample, centers, sigma);
        for (double ridge : ridges) {
            const double score = cv_score(phi_num, phi_den, ridge, cfg.folds);
            if (score < best) {  // strict: lexicographic (sigma, ridge) tie-break
                best = score;
                best_sigma = sigma;
                best_ridge = ridge;
            }
        }
    }
    if (!std::isfinite(best))
        throw NumericError("density-ratio cross-validation failed for every grid point");
    return fit_ratio_fixed(numerator_sample, denominator_sample, best_sigma, best_ridge,
                           cfg.max_centers, cfg.seed);
}

double predict_ratio(const DensityRatioModel& m, const Eigen::VectorXd& x) {
    if (x.size() != m.centers.cols()) throw InputError("predict_ratio: dimension mismatch");
    const double inv = 1.0 / (2.0 * m.bandwidth * m.bandwidth);
    double v = 0.0;
    for (Eigen::Index l = 0; l < m.centers.rows(); ++l)
        v += m.alpha[l] * std::exp(-(x.transpose() - m.centers.row(l)).squaredNorm() * inv);
    return v;
}

double solve_residual(const DensityRatioModel& m, const Eigen::MatrixXd& numerator_sample,
                      const Eigen::MatrixXd& denominator_sample) {
    Eigen::MatrixXd phi_num = kernel_design(numerator_sample, m.centers, m.bandwidth);
    Eigen::MatrixXd phi_den = kernel_design(denominator_sample, m.centers, m.bandwidth);
    const auto L = m.centers.rows();
    Eigen::MatrixXd A = phi_den.transpose() * phi_den / static_cast<double>(phi_den.rows()) +
                        m.ridge * Eigen::MatrixXd::Identity(L, L);
    Eigen::VectorXd h = phi_num.colwise().mean().transpose();
    Eigen::VectorXd pre = A.ldlt().solve(h);
    return (A * pre - h).cwiseAbs().maxCoeff();
}

RatioScoreModel::RatioScoreModel(const Dataset& d, int pivot, const BasisConfig& cfg)
    : k_(d.k()), fit_pivot_(pivot) {
    if (pivot < 0 || pivot >= k_) throw InputError("ratio score model: invalid pivot");
    Eigen::MatrixXd denom = d.arm_covariates(pivot);
    for (int t = 0; t < k_; ++t) {
        if (t == pivot) continue;
        BasisConfig arm_cfg = cfg;
        arm_cfg.seed = cfg.seed + static_cast<std::uint64_t>(t) + 1;
        DensityRatioModel m = fit_ratio(d.arm_covariates(t), denom, arm_cfg);
        m.numerator_arm = t;
        m.denominator_arm = pivot;
        models_.push_back(std::move(m));
    }
}

ScoreVector RatioScoreModel::score(const Eigen::VectorXd& x, int pivot) const {
    ScoreVector sv;
    sv.pivot = fit_pivot_;
    sv.k = k_;
    sv.log_values.resize(k_ - 1);
    int pos = 0;
    for (const DensityRatioModel& m : models_)
        sv.log_values[pos++] = std::log(std::max(predict_ratio(m, x), kLogFloor));
    return pivot == fit_pivot_ ? sv : pivot_transform(sv, pivot);
}

}  // namespace smatch
