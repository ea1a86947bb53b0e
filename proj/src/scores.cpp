#include "smatch/scores.hpp"

#include <algorithm>
#include <cmath>

namespace smatch {

double ScoreVector::log_ratio(int arm) const {
    if (arm == pivot) return 0.0;
    int pos = arm < pivot ? arm : arm - 1;
    return log_values[pos];
}

ScoreVector pivot_transform(const ScoreVector& sv, int new_pivot) {
    if (new_pivot < 0 || new_pivot >= sv.k) throw InputError("pivot_transform: invalid pivot");
    if (new_pivot == sv.pivot) return sv;
    const double shift = sv.log_ratio(new_pivot);
    ScoreVector out;
    out.pivot = new_pivot;
    out.k = sv.k;
    out.log_values.resize(sv.k - 1);
    int pos = 0;
    for (int arm = 0; arm < sv.k; ++arm) {
        if (arm == new_pivot) continue;
        out.log_values[pos++] = sv.log_ratio(arm) - shift;
    }
    return out;
}

// -------------------------------------------------------------------------
// Known densities

MvnDensity::MvnDensity(Eigen::VectorXd mean, Eigen::MatrixXd cov) : mean_(std::move(mean)) {
    llt_.compute(cov);
    if (llt_.info() != Eigen::Success)
        throw NumericError("covariance matrix is not positive definite");
    const double log_det = 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
    log_norm_ = -0.5 * (mean_.size() * std::log(2.0 * M_PI) + log_det);
}

double MvnDensity::log_density(const Eigen::VectorXd& x) const {
    Eigen::VectorXd diff = x - mean_;
    Eigen::VectorXd z = llt_.matrixL().solve(diff);
    return log_norm_ - 0.5 * z.squaredNorm();
}

double eval_polynomial(const Polynomial& poly, const Eigen::VectorXd& x) {
    double v = 0.0;
    for (const Monomial& m : poly) {
        double term = m.coeff;
        for (std::size_t j = 0; j < m.exponents.size(); ++j)
            term *= std::pow(x[static_cast<int>(j)], m.exponents[j]);
        v += term;
    }
    return v;
}

namespace {

// Adaptive Simpson on [a, b].
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double eps, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double h = b - a;
    const double left = h / 12.0 * (fa + 4.0 * flm + fm);
    const double right = h / 12.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * eps)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, eps * 0.5, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, eps * 0.5, depth - 1);
}

double integrate_1d(const std::function<double(double)>& f, double a, double b,
                    double eps = 1e-10) {
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, eps, 40);
}

}  // namespace

PolynomialFamilyDensity::PolynomialFamilyDensity(Polynomial poly, Eigen::VectorXd box_lo,
                                                 Eigen::VectorXd box_hi,
                                                 std::function<double(const Eigen::VectorXd&)> log_h)
    : poly_(std::move(poly)), lo_(std::move(box_lo)), hi_(std::move(box_hi)),
      log_h_(std::move(log_h)) {
    const int p = static_cast<int>(lo_.size());
    if (p < 1 || p > 2)
        throw InputError("polynomial-family normalizers support dimension 1 or 2 only");
    if (hi_.size() != p || ((hi_ - lo_).array() <= 0).any())
        throw InputError("invalid integration box");
    auto integrand_at = [this](const Eigen::VectorXd& x) {
        double lp = eval_polynomial(poly_, x);
        if (log_h_) lp += log_h_(x);
        return std::exp(lp);
    };
    double z;
    if (p == 1) {
        z = integrate_1d(
            [&](double x0) {
                Eigen::VectorXd x(1);
                x << x0;
                return integrand_at(x);
            },
            lo_[0], hi_[0]);
    } else {
        z = integrate_1d(
            [&](double x0) {
                return integrate_1d(
                    [&](double x1) {
                        Eigen::VectorXd x(2);
                        x << x0, x1;
                        return integrand_at(x);
                    },
                    lo_[1], hi_[1], 1e-11);
            },
            lo_[0], hi_[0], 1e-9);
    }
    if (!(z > 0.0) || !std::isfinite(z))
        throw NumericError("polynomial-family normalizer is non-finite or non-positive");
    log_z_ = std::log(z);
}

double PolynomialFamilyDensity::log_density(const Eigen::VectorXd& x) const {
    double lp = eval_polynomial(poly_, x);
    if (log_h_) lp += log_h_(x);
    return lp - log_z_;
}

ScoreVector score_known(const KnownDensityModel& m, const Eigen::VectorXd& x, int pivot) {
    const int k = m.k();
    if (pivot < 0 || pivot >= k) throw InputError("score_known: invalid pivot");
    Eigen::VectorXd logp(k);
    for (int t = 0; t < k; ++t) {
        logp[t] = m.arm(t).log_density(x);
        if (!std::isfinite(logp[t]))
            throw NumericError("density for arm " + std::to_string(t) +
                               " is zero or non-finite at the evaluation point");
    }
    ScoreVector sv;
    sv.pivot = pivot;
    sv.k = k;
    sv.log_values.resize(k - 1);
    int pos = 0;
    for (int t = 0; t < k; ++t) {
        if (t == pivot) continue;
        sv.log_values[pos++] = logp[t] - logp[pivot];
    }
    return sv;
}

// -------------------------------------------------------------------------
// Multinomial logit

PriorWeights PriorWeights::uniform(int k) {
    PriorWeights w;
    w.pi = Eigen::VectorXd::Constant(k, 1.0 / k);
    return w;
}

PriorWeights PriorWeights::empirical(const Dataset& d) {
    PriorWeights w;
    w.pi.resize(d.k());
    for (int t = 0; t < d.k(); ++t)
        w.pi[t] = static_cast<double>(d.arm(t).size()) / static_cast<double>(d.n());
    return w;
}

void PriorWeights::validate() const {
    if ((pi.array() < 0).any()) throw InputError("prior weights must be nonnegative");
    if (std::abs(pi.sum() - 1.0) > 1e-12) throw InputError("prior weights must sum to 1");
}

namespace {

Eigen::VectorXd augmented(const Eigen::VectorXd& x) {
    Eigen::VectorXd xa(x.size() + 1);
    xa[0] = 1.0;
    xa.tail(x.size()) = x;
    return xa;
}

// Row-wise softmax of the linear predictors B x~.
Eigen::VectorXd softmax(const Eigen::VectorXd& eta) {
    Eigen::VectorXd z = (eta.array() - eta.maxCoeff()).exp();
    return z / z.sum();
}

}  // namespace

double logit_loglik(const Dataset& d, const Eigen::MatrixXd& coef, int pivot, double ridge) {
    const int k = d.k();
    double ll = 0.0;
    for (const Unit& u : d.units()) {
        Eigen::VectorXd xa = augmented(u.covariates);
        Eigen::VectorXd eta = coef * xa;
        const double m = eta.maxCoeff();
        const double lse = m + std::log((eta.array() - m).exp().sum());
        ll += eta[u.treatment] - lse;
    }
    for (int t = 0; t < k; ++t)
        if (t != pivot) ll -= 0.5 * ridge * coef.row(t).squaredNorm();
    return ll;
}

Eigen::MatrixXd logit_gradient(const Dataset& d, const Eigen::MatrixXd& coef, int pivot,
                               double ridge) {
    const int k = d.k();
    const int q = static_cast<int>(coef.cols());
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(k, q);
    for (const Unit& u : d.units()) {
        Eigen::VectorXd xa = augmented(u.covariates);
        Eigen::VectorXd prob = softmax(coef * xa);
        for (int t = 0; t < k; ++t) {
            const double w = (t == u.treatment ? 1.0 : 0.0) - prob[t];
            g.row(t) += w * xa.transpose();
        }
    }
    for (int t = 0; t < k; ++t)
        if (t != pivot) g.row(t) -= ridge * coef.row(t);
    g.row(pivot).setZero();
    return g;
}

MultinomialLogitModel fit_multinomial_logit(const Dataset& d, int pivot,
                                            const LogitFitOptions& opts) {
    const int k = d.k();
    const int q = d.p() + 1;
    if (pivot < 0 || pivot >= k) throw InputError("fit_multinomial_logit: invalid pivot");

    // free parameters: (k-1) x q, row-major over non-pivot arms
    std::vector<int> free_arms;
    for (int t = 0; t < k; ++t)
        if (t != pivot) free_arms.push_back(t);
    const int dim = static_cast<int>(free_arms.size()) * q;

    Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(k, q);
    double ll = logit_loglik(d, coef, pivot, opts.ridge);

    auto pack = [&](const Eigen::MatrixXd& m) {
        Eigen::VectorXd v(dim);
        for (std::size_t a = 0; a < free_arms.size(); ++a)
            v.segment(static_cast<int>(a) * q, q) = m.row(free_arms[a]).transpose();
        return v;
    };

    int iter = 0;
    double gnorm = 0.0;
    for (; iter < opts.max_iter; ++iter) {
        Eigen::MatrixXd grad = logit_gradient(d, coef, pivot, opts.ridge);
        Eigen::VectorXd g = pack(grad);
        gnorm = g.cwiseAbs().maxCoeff();
        if (gnorm < opts.tol) break;

        // Negative Hessian of the penalized likelihood (positive definite).
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
        for (const Unit& u : d.units()) {
            Eigen::VectorXd xa = augmented(u.covariates);
            Eigen::VectorXd prob = softmax(coef * xa);
            Eigen::MatrixXd xx = xa * xa.transpose();
            for (std::size_t a = 0; a < free_arms.size(); ++a) {
                for (std::size_t b = 0; b < free_arms.size(); ++b) {
                    const double pa = prob[free_arms[a]], pb = prob[free_arms[b]];
                    const double w = (a == b ? pa * (1.0 - pa) : -pa * pb);
                    H.block(static_cast<int>(a) * q, static_cast<int>(b) * q, q, q) += w * xx;
                }
            }
        }
        H += opts.ridge * Eigen::MatrixXd::Identity(dim, dim);

        Eigen::VectorXd step = H.ldlt().solve(g);
        if (!step.allFinite())
            throw NumericError("logit fit: singular Newton system; try a larger ridge");

        // damped Newton: halve until the objective does not decrease. The
        // acceptance slack absorbs rounding noise of the summed likelihood,
        // which otherwise stalls the final near-optimum step.
        const double slack = 1e-11 * (1.0 + std::abs(ll));
        double scale = 1.0;
        Eigen::MatrixXd trial = coef;
        double ll_new = ll;
        for (int h = 0; h < 40; ++h) {
            trial = coef;
            for (std::size_t a = 0; a < free_arms.size(); ++a)
                trial.row(free_arms[a]) +=
                    scale * step.segment(static_cast<int>(a) * q, q).transpose();
            ll_new = logit_loglik(d, trial, pivot, opts.ridge);
            if (ll_new >= ll - slack) break;
            scale *= 0.5;
        }
        coef = trial;
        ll = ll_new;
        if (coef.cwiseAbs().maxCoeff() > opts.coef_bound)
            throw NumericError(
                "logit fit: coefficients diverging (separation?); try a larger ridge");
    }
    if (gnorm >= opts.tol) {
        Eigen::MatrixXd grad = logit_gradient(d, coef, pivot, opts.ridge);
        gnorm = pack(grad).cwiseAbs().maxCoeff();
        if (gnorm >= opts.tol)
            throw NumericError("logit fit did not converge in " + std::to_string(opts.max_iter) +
                               " iterations; try a larger ridge");
    }

    MultinomialLogitModel m;
    m.coef = coef;
    m.pivot = pivot;
    m.iterations = iter;
    m.final_loglik = ll;
    m.gradient_norm = gnorm;
    return m;
}

Eigen::VectorXd logit_probabilities(const MultinomialLogitModel& m, const Eigen::VectorXd& x) {
    return softmax(m.coef * augmented(x));
}

ScoreVector glm_score(const MultinomialLogitModel& m, const Eigen::VectorXd& x,
                      const PriorWeights& priors) {
    const int k = static_cast<int>(m.coef.rows());
    if (x.size() + 1 != m.coef.cols())
        throw InputError("glm_score: covariate dimension mismatch");
    priors.validate();
    Eigen::VectorXd xa = augmented(x);
    Eigen::VectorXd eta = m.coef * xa;
    ScoreVector sv;
    sv.pivot = m.pivot;
    sv.k = k;
    sv.log_values.resize(k - 1);
    int pos = 0;
    for (int t = 0; t < k; ++t) {
        if (t == m.pivot) continue;
        sv.log_values[pos++] =
            (eta[t] - eta[m.pivot]) - std::log(priors.pi[t] / priors.pi[m.pivot]);
    }
    return sv;
}

double binary_propensity(const ScoreVector& sv, const PriorWeights& priors) {
    if (sv.k != 2) throw InputError("binary_propensity requires k = 2");
    if (sv.pivot != 0) throw InputError("binary_propensity requires pivot t1");
    priors.validate();
    const double r = std::exp(sv.log_values[0]);
    return priors.pi[0] / (priors.pi[0] + priors.pi[1] * r);
}

// -------------------------------------------------------------------------
// Factorization criteria

PfcResult check_pfc(const Eigen::MatrixXd& q_table, const std::vector<ScoreVector>& s_values,
                    double tol, bool check_coarseness) {
    const auto n = static_cast<std::size_t>(q_table.rows());
    const int k = static_cast<int>(q_table.cols());
    if (s_values.size() != n) throw InputError("check_pfc: grid size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if ((q_table.row(i).array() <= 0).any())
            throw InputError("check_pfc: q row " + std::to_string(i) + " is not strictly positive");
        if (std::abs(q_table.row(i).sum() - 1.0) > tol * 10 + 1e-9)
            throw InputError("check_pfc: q row " + std::to_string(i) + " does not sum to 1");
    }

    Eigen::MatrixXd logq = q_table.array().log();
    PfcResult res;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool s_equal =
                (s_values[i].log_values - s_values[j].log_values).cwiseAbs().maxCoeff() <= tol;
            Eigen::VectorXd diff = logq.row(i) - logq.row(j);
            const bool ratio_tfree = (diff.maxCoeff() - diff.minCoeff()) <= tol;
            if (s_equal && !ratio_tfree) {
                res.sufficient = false;
                res.violations.push_back({i, j, true});
            }
            if (check_coarseness && ratio_tfree && !s_equal) {
                res.coarse = false;
                res.violations.push_back({i, j, false});
            }
        }
    }
    (void)k;
    return res;
}

}  // namespace smatch
