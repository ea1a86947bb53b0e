#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "smatch/dataset.hpp"

namespace smatch {

// The (k-1)-dimensional log likelihood-ratio statistic. Entry for arm i
// (i != pivot) is log p(x|t_i) - log p(x|t_pivot), stored in increasing
// arm-index order with the pivot skipped.
struct ScoreVector {
    int pivot = 0;
    int k = 0;
    Eigen::VectorXd log_values;  // length k-1

    // log ratio against the pivot for any arm; 0 for the pivot itself.
    double log_ratio(int arm) const;
};

// Re-expresses a score vector against a new pivot arm. Exact log-space
// algebra: new entry for arm i is old(i) - old(new_pivot).
ScoreVector pivot_transform(const ScoreVector& sv, int new_pivot);

// -------------------------------------------------------------------------
// Known-density models

class ArmDensity {
public:
    virtual ~ArmDensity() = default;
    virtual double log_density(const Eigen::VectorXd& x) const = 0;
};

class MvnDensity : public ArmDensity {
public:
    MvnDensity(Eigen::VectorXd mean, Eigen::MatrixXd cov);
    double log_density(const Eigen::VectorXd& x) const override;

private:
    Eigen::VectorXd mean_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double log_norm_;
};

// A monomial term c * prod_j x_j^e_j.
struct Monomial {
    double coeff = 0.0;
    std::vector<int> exponents;
};

using Polynomial = std::vector<Monomial>;

double eval_polynomial(const Polynomial& poly, const Eigen::VectorXd& x);

// p(x|t) = h(x) exp{P_t(x)} / Z_t on a bounded box; the normalizer Z_t is
// computed by adaptive quadrature (p <= 2 only). h defaults to 1.
class PolynomialFamilyDensity : public ArmDensity {
public:
    PolynomialFamilyDensity(Polynomial poly, Eigen::VectorXd box_lo, Eigen::VectorXd box_hi,
                            std::function<double(const Eigen::VectorXd&)> log_h = nullptr);
    double log_density(const Eigen::VectorXd& x) const override;
    double log_normalizer() const { return log_z_; }

private:
    Polynomial poly_;
    Eigen::VectorXd lo_, hi_;
    std::function<double(const Eigen::VectorXd&)> log_h_;
    double log_z_;
};

// One density per arm, indexable by arm index.
class KnownDensityModel {
public:
    explicit KnownDensityModel(std::vector<std::shared_ptr<const ArmDensity>> arms)
        : arms_(std::move(arms)) {}
    int k() const { return static_cast<int>(arms_.size()); }
    const ArmDensity& arm(int i) const { return *arms_.at(i); }

private:
    std::vector<std::shared_ptr<const ArmDensity>> arms_;
};

// Score from known arm densities. Throws NumericError citing the arm when a
// log-density is non-finite at x.
ScoreVector score_known(const KnownDensityModel& m, const Eigen::VectorXd& x, int pivot);

// -------------------------------------------------------------------------
// Multinomial-logit posterior model

struct PriorWeights {
    Eigen::VectorXd pi;  // per-arm probabilities, sum 1 within 1e-12

    static PriorWeights uniform(int k);
    static PriorWeights empirical(const Dataset& d);
    void validate() const;
};

struct MultinomialLogitModel {
    // k x (p+1), intercept-first columns; the pivot row is exactly zero.
    Eigen::MatrixXd coef;
    int pivot = 0;
    int iterations = 0;
    double final_loglik = 0.0;
    double gradient_norm = 0.0;
};

struct LogitFitOptions {
    double ridge = 1e-6;
    double tol = 1e-8;       // gradient max-norm
    int max_iter = 200;
    double coef_bound = 50.0;  // separation guard on max |coefficient|
};

// Ridge-penalized MLE of q(t|x) by damped Newton from zero initialization.
// Deterministic. Throws NumericError advising a larger ridge on
// non-convergence or detected separation.
MultinomialLogitModel fit_multinomial_logit(const Dataset& d, int pivot,
                                            const LogitFitOptions& opts = {});

// Posterior probabilities q(.|x) under the model (softmax over rows).
Eigen::VectorXd logit_probabilities(const MultinomialLogitModel& m, const Eigen::VectorXd& x);

// Density log-ratio score recovered from the posterior model:
// entry i = (B_i - B_pivot)' x~  -  log(pi_i / pi_pivot).
ScoreVector glm_score(const MultinomialLogitModel& m, const Eigen::VectorXd& x,
                      const PriorWeights& priors);

// Penalized log-likelihood and its gradient at arbitrary coefficients
// (pivot row ignored, treated as zero). Exposed for verification.
double logit_loglik(const Dataset& d, const Eigen::MatrixXd& coef, int pivot, double ridge);
Eigen::MatrixXd logit_gradient(const Dataset& d, const Eigen::MatrixXd& coef, int pivot,
                               double ridge);

// k = 2 propensity score e(x) = pi_1 / (pi_1 + pi_2 exp(log_ratio)).
double binary_propensity(const ScoreVector& sv, const PriorWeights& priors);

// -------------------------------------------------------------------------
// Factorization criteria on a finite grid

struct PfcViolation {
    std::size_t x1 = 0, x2 = 0;  // grid indices of the witness pair
    bool sufficiency = true;     // false: coarseness direction
};

struct PfcResult {
    bool sufficient = true;
    bool coarse = true;
    std::vector<PfcViolation> violations;
    bool pass(bool require_coarse) const { return sufficient && (!require_coarse || coarse); }
};

// q_table: n x k, strictly positive rows summing to 1 within tol.
// Sufficiency direction: s(x1)=s(x2) (within tol) implies q(t|x1)/q(t|x2)
// constant over t (within tol). Coarseness: the converse.
PfcResult check_pfc(const Eigen::MatrixXd& q_table, const std::vector<ScoreVector>& s_values,
                    double tol, bool check_coarseness = true);

// Generic score-model interface used by matching and the CLI.
class ScoreModel {
public:
    virtual ~ScoreModel() = default;
    virtual int k() const = 0;
    virtual ScoreVector score(const Eigen::VectorXd& x, int pivot) const = 0;
};

class KnownScoreModel : public ScoreModel {
public:
    explicit KnownScoreModel(KnownDensityModel m) : m_(std::move(m)) {}
    int k() const override { return m_.k(); }
    ScoreVector score(const Eigen::VectorXd& x, int pivot) const override {
        return score_known(m_, x, pivot);
    }

private:
    KnownDensityModel m_;
};

class GlmScoreModel : public ScoreModel {
public:
    GlmScoreModel(MultinomialLogitModel m, PriorWeights priors)
        : m_(std::move(m)), priors_(std::move(priors)) {}
    int k() const override { return static_cast<int>(m_.coef.rows()); }
    ScoreVector score(const Eigen::VectorXd& x, int pivot) const override {
        ScoreVector sv = glm_score(m_, x, priors_);
        return pivot_transform(sv, pivot);
    }
    const MultinomialLogitModel& model() const { return m_; }

private:
    MultinomialLogitModel m_;
    PriorWeights priors_;
};

}  // namespace smatch
