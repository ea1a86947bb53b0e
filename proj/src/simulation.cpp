#include "smatch/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "smatch/effects.hpp"

namespace smatch {

Eigen::VectorXd GaussianMixture::mean() const {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(means.at(0).size());
    for (std::size_t c = 0; c < means.size(); ++c) m += weights[static_cast<int>(c)] * means[c];
    return m;
}

Eigen::VectorXd GaussianMixture::sample(std::mt19937_64& rng) const {
    const double u = draw_uniform(rng);
    std::size_t comp = means.size() - 1;
    double cum = 0.0;
    for (std::size_t c = 0; c < means.size(); ++c) {
        cum += weights[static_cast<int>(c)];
        if (u < cum) {
            comp = c;
            break;
        }
    }
    const auto p = means[comp].size();
    Eigen::VectorXd z(p);
    for (Eigen::Index j = 0; j < p; ++j) z[j] = draw_normal(rng);
    Eigen::LLT<Eigen::MatrixXd> llt(covs[comp]);
    if (llt.info() != Eigen::Success)
        throw NumericError("degenerate mixture covariance");
    return means[comp] + llt.matrixL() * z;
}

double OutcomeModel::mu(const Eigen::VectorXd& x) const {
    if (linear) return intercept + slope.dot(x);
    return eval_polynomial(poly, x);
}

void SimulationScenario::validate() const {
    if (k < 2) throw InputError("scenario: k must be >= 2");
    if (p < 1) throw InputError("scenario: p must be >= 1");
    if (std::abs(covariate_law.weights.sum() - 1.0) > 1e-9)
        throw InputError("scenario: mixture weights must sum to 1");
    if (covariate_law.means.size() != covariate_law.covs.size() ||
        covariate_law.means.size() != static_cast<std::size_t>(covariate_law.weights.size()))
        throw InputError("scenario: mixture component count mismatch");
    if (assignment_coef.rows() != k || assignment_coef.cols() != p + 1)
        throw InputError("scenario: assignment matrix must be k x (p+1)");
    if (static_cast<int>(outcomes.size()) != k)
        throw InputError("scenario: need one outcome model per arm");
    for (const auto& om : outcomes)
        if (om.linear && om.slope.size() != p)
            throw InputError("scenario: outcome slope dimension mismatch");
    if (sigma_y < 0) throw InputError("scenario: sigma_y must be >= 0");
}

SimulationScenario reference_confounded_scenario() {
    SimulationScenario sc;
    sc.k = 3;
    sc.p = 2;
    sc.covariate_law.weights = Eigen::VectorXd::Ones(1);
    sc.covariate_law.means = {Eigen::VectorXd::Zero(2)};
    sc.covariate_law.covs = {Eigen::MatrixXd::Identity(2, 2)};
    sc.assignment_coef.resize(3, 3);
    sc.assignment_coef << 0.0, 0.0, 0.0,
                          0.5, 1.0, 0.0,
                         -0.5, 0.0, 1.0;
    for (int t = 0; t < 3; ++t) {
        OutcomeModel om;
        om.linear = true;
        om.intercept = static_cast<double>(t);
        om.slope = Eigen::VectorXd::Ones(2);
        sc.outcomes.push_back(om);
    }
    sc.sigma_y = 1.0;
    sc.level_labels = {"t1", "t2", "t3"};
    return sc;
}

GeneratedData generate(const SimulationScenario& sc, int n, std::uint64_t seed) {
    sc.validate();
    if (n < sc.k) throw InputError("generate: n must be >= k");
    auto rng = make_rng(seed);

    std::vector<TreatmentId> levels;
    for (int t = 0; t < sc.k; ++t) {
        std::string label = t < static_cast<int>(sc.level_labels.size())
                                ? sc.level_labels[t]
                                : "t" + std::to_string(t + 1);
        levels.push_back({t, label});
    }
    std::vector<std::string> names;
    for (int j = 0; j < sc.p; ++j) names.push_back("x" + std::to_string(j + 1));

    // fixed-width ids keep lexicographic == numeric order
    const int width = static_cast<int>(std::to_string(n).size());
    auto make_id = [&](int i) {
        std::string s = std::to_string(i + 1);
        return "u" + std::string(width - s.size(), '0') + s;
    };

    std::vector<Unit> units;
    Eigen::MatrixXd potential(n, sc.k);
    int attempts = 0;
    while (static_cast<int>(units.size()) < n) {
        // rejection-free draw; re-drawing only guards against empty arms
        // being possible at tiny n
        units.clear();
        for (int i = 0; i < n; ++i) {
            Unit u;
            u.id = make_id(i);
            u.covariates = sc.covariate_law.sample(rng);

            Eigen::VectorXd xa(sc.p + 1);
            xa[0] = 1.0;
            xa.tail(sc.p) = u.covariates;
            Eigen::VectorXd eta = sc.assignment_coef * xa;
            Eigen::VectorXd prob = (eta.array() - eta.maxCoeff()).exp();
            prob /= prob.sum();
            const double uu = draw_uniform(rng);
            int t = sc.k - 1;
            double cum = 0.0;
            for (int a = 0; a < sc.k; ++a) {
                cum += prob[a];
                if (uu < cum) {
                    t = a;
                    break;
                }
            }
            u.treatment = t;
            for (int a = 0; a < sc.k; ++a) {
                const double eps = sc.sigma_y > 0 ? sc.sigma_y * draw_normal(rng) : 0.0;
                potential(i, a) = sc.outcomes[a].mu(u.covariates) + eps;
            }
            u.response = potential(i, t);
            units.push_back(std::move(u));
        }
        std::vector<int> counts(sc.k, 0);
        for (const Unit& u : units) counts[u.treatment] += 1;
        if (*std::min_element(counts.begin(), counts.end()) > 0) break;
        units.clear();
        if (++attempts > 100) throw NumericError("generate: could not populate every arm");
    }

    return {Dataset(std::move(units), std::move(levels), std::move(names)),
            PotentialOutcomes{std::move(potential)}};
}

TrueAte true_ate(const SimulationScenario& sc, int arm_a, int arm_b) {
    sc.validate();
    if (arm_a < 0 || arm_a >= sc.k || arm_b < 0 || arm_b >= sc.k)
        throw InputError("true_ate: invalid pair");
    const OutcomeModel& a = sc.outcomes[arm_a];
    const OutcomeModel& b = sc.outcomes[arm_b];
    TrueAte out;
    if (a.linear && b.linear) {
        const Eigen::VectorXd ex = sc.covariate_law.mean();
        out.value = (a.intercept - b.intercept) + (a.slope - b.slope).dot(ex);
        out.method = "closed_form";
        return out;
    }
    // Monte Carlo over the covariate law
    constexpr int kDraws = 1000000;
    auto rng = make_rng(sc.seed, /*stream=*/0xa7e);
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < kDraws; ++i) {
        Eigen::VectorXd x = sc.covariate_law.sample(rng);
        const double diff = a.mu(x) - b.mu(x);
        sum += diff;
        sumsq += diff * diff;
    }
    const double mean = sum / kDraws;
    const double var = std::max(0.0, sumsq / kDraws - mean * mean);
    out.value = mean;
    out.mc_error = std::sqrt(var / kDraws);
    out.method = "monte_carlo";
    return out;
}

namespace {

ScoreMap all_scores(const Dataset& d, const ScoreModel& model, int pivot) {
    ScoreMap scores;
    for (const Unit& u : d.units()) scores.emplace(u.id, model.score(u.covariates, pivot));
    return scores;
}

}  // namespace

ExperimentReport run_experiment(const SimulationScenario& sc, const PipelineConfig& cfg, int n,
                                int reps, std::uint64_t seed) {
    sc.validate();
    if (reps < 2) throw InputError("run_experiment: reps must be >= 2");

    const int k = sc.k;
    std::vector<std::pair<int, int>> pairs;
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b) pairs.emplace_back(b, a);  // higher minus lower

    const std::size_t np = pairs.size();
    std::vector<double> sum_bias(np, 0.0), sumsq_bias(np, 0.0);
    std::vector<double> naive_sum(np, 0.0), naive_sumsq(np, 0.0);
    int failed = 0, done = 0;

    for (int rep = 0; rep < reps; ++rep) {
        try {
            auto gen = generate(sc, n, seed + 0x51a5 * static_cast<std::uint64_t>(rep + 1));
            const Dataset* data = &gen.data;
            Dataset standardized = gen.data;
            if (cfg.standardize_covariates) {
                standardized = standardize(gen.data).first;
                data = &standardized;
            }

            std::unique_ptr<ScoreModel> model;
            switch (cfg.model) {
                case ScoreModelKind::Glm: {
                    auto fit = fit_multinomial_logit(*data, cfg.match.pivot, cfg.logit);
                    model = std::make_unique<GlmScoreModel>(std::move(fit),
                                                            PriorWeights::empirical(*data));
                    break;
                }
                case ScoreModelKind::KnownTrue: {
                    // analytic posterior scores from the true assignment law;
                    // evaluated on the raw covariates
                    MultinomialLogitModel true_model;
                    true_model.coef = sc.assignment_coef;
                    true_model.pivot = cfg.match.pivot;
                    model = std::make_unique<GlmScoreModel>(std::move(true_model),
                                                            PriorWeights::uniform(k));
                    data = &gen.data;
                    break;
                }
                case ScoreModelKind::Ratio: {
                    BasisConfig bc = cfg.ratio;
                    bc.seed = seed + 7777u * static_cast<std::uint64_t>(rep + 1);
                    model = std::make_unique<RatioScoreModel>(*data, cfg.match.pivot, bc);
                    break;
                }
            }

            ScoreMap scores = all_scores(*data, *model, cfg.match.pivot);
            MatchingResult matched = match_units(*data, scores, cfg.match);
            std::vector<EffectEstimate> effects = estimate_pairwise(matched, gen.data);

            // naive unmatched arm-mean differences
            Eigen::VectorXd arm_mean(k);
            for (int t = 0; t < k; ++t) {
                double s = 0.0;
                for (std::size_t i : gen.data.arm(t)) s += *gen.data.units()[i].response;
                arm_mean[t] = s / static_cast<double>(gen.data.arm(t).size());
            }

            for (std::size_t pi = 0; pi < np; ++pi) {
                const auto [a, b] = pairs[pi];
                const double truth = true_ate(sc, a, b).value;
                double est = 0.0;
                for (const EffectEstimate& e : effects)
                    if (e.arm_a == a && e.arm_b == b) est = e.estimate;
                const double bias = est - truth;
                sum_bias[pi] += bias;
                sumsq_bias[pi] += bias * bias;
                const double naive = (arm_mean[a] - arm_mean[b]) - truth;
                naive_sum[pi] += naive;
                naive_sumsq[pi] += naive * naive;
            }
            ++done;
        } catch (const std::exception&) {
            ++failed;
        }
    }

    if (failed * 10 > reps)
        throw NumericError("run_experiment: more than 10% of replications failed");

    ExperimentReport report;
    report.reps = reps;
    report.failed_reps = failed;
    report.n = n;
    report.seed = seed;
    for (std::size_t pi = 0; pi < np; ++pi) {
        const auto [a, b] = pairs[pi];
        PairReport pr;
        pr.arm_a = a;
        pr.arm_b = b;
        pr.true_effect = true_ate(sc, a, b).value;
        const double m = sum_bias[pi] / done;
        const double var = std::max(0.0, (sumsq_bias[pi] - done * m * m) / std::max(1, done - 1));
        pr.mean_bias = m;
        pr.sd = std::sqrt(var);
        pr.mc_se = pr.sd / std::sqrt(static_cast<double>(done));
        const double nm = naive_sum[pi] / done;
        const double nvar =
            std::max(0.0, (naive_sumsq[pi] - done * nm * nm) / std::max(1, done - 1));
        pr.naive_mean_bias = nm;
        pr.naive_sd = std::sqrt(nvar);
        pr.naive_mc_se = pr.naive_sd / std::sqrt(static_cast<double>(done));
        report.pairs.push_back(pr);
    }
    return report;
}

}  // namespace smatch
