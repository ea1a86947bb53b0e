#include "smatch/effects.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace smatch {

namespace {

// Response a group contributes for one arm: the anchor's own response when
// the arm is the anchor arm, otherwise the mean over the arm's k matches.
double group_response(const MatchedGroup& g, const Dataset& d, int arm, int anchor_arm) {
    auto resp = [&](const std::string& id) {
        const Unit& u = d.unit_by_id(id);
        if (!u.response)
            throw InputError("unit '" + id + "' has no observed response");
        return *u.response;
    };
    if (arm == anchor_arm) return resp(g.anchor_id);
    auto it = g.matches.find(arm);
    if (it == g.matches.end())
        throw InputError("matched group for anchor '" + g.anchor_id + "' has no arm " +
                         std::to_string(arm));
    double sum = 0.0;
    for (const Match& m : it->second) sum += resp(m.unit_id);
    return sum / static_cast<double>(it->second.size());
}

}  // namespace

EffectEstimate estimate_pair(const MatchingResult& result, const Dataset& d, int arm_a,
                             int arm_b) {
    if (result.groups.empty()) throw InputError("estimate_pair: zero matched groups");
    const int anchor_arm = result.spec.anchor();
    const auto n = result.groups.size();

    // fixed summation order (ascending anchor id), so results are invariant
    // to group permutation and estimate(a,b) == -estimate(b,a) bitwise
    std::vector<std::pair<std::string, double>> ordered;
    ordered.reserve(n);
    for (const MatchedGroup& g : result.groups)
        ordered.emplace_back(g.anchor_id, group_response(g, d, arm_a, anchor_arm) -
                                              group_response(g, d, arm_b, anchor_arm));
    std::sort(ordered.begin(), ordered.end());
    std::vector<double> diffs;
    diffs.reserve(n);
    for (const auto& [id, v] : ordered) diffs.push_back(v);

    double sum = 0.0;
    for (double v : diffs) sum += v;
    const double mean = sum / static_cast<double>(n);

    double se = 0.0;
    if (n > 1) {
        double ss = 0.0;
        for (double v : diffs) ss += (v - mean) * (v - mean);
        se = std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
    }

    EffectEstimate e;
    e.arm_a = arm_a;
    e.arm_b = arm_b;
    e.estimate = mean;
    e.std_error = se;
    e.n_groups = static_cast<int>(n);
    return e;
}

std::vector<EffectEstimate> estimate_pairwise(const MatchingResult& result, const Dataset& d) {
    std::vector<EffectEstimate> out;
    for (int a = 0; a < d.k(); ++a)
        for (int b = a + 1; b < d.k(); ++b) out.push_back(estimate_pair(result, d, b, a));
    return out;
}

DoseResponseChain dose_chain(const MatchingResult& result, const Dataset& d,
                             const std::vector<int>& dose_order) {
    if (static_cast<int>(dose_order.size()) != d.k())
        throw InputError("dose_chain: dose order must be a permutation of the levels");
    std::vector<bool> seen(d.k(), false);
    for (int t : dose_order) {
        if (t < 0 || t >= d.k() || seen[t])
            throw InputError("dose_chain: dose order must be a permutation of the levels");
        seen[t] = true;
    }
    DoseResponseChain chain;
    chain.ordered_levels = dose_order;
    for (std::size_t i = 1; i < dose_order.size(); ++i)
        chain.steps.push_back(estimate_pair(result, d, dose_order[i], dose_order[i - 1]));
    return chain;
}

double BalanceReport::max_abs_pre() const {
    double v = 0.0;
    for (const BalanceRow& r : rows) v = std::max(v, std::abs(r.smd_pre));
    return v;
}

double BalanceReport::max_abs_post() const {
    double v = 0.0;
    for (const BalanceRow& r : rows) v = std::max(v, std::abs(r.smd_post));
    return v;
}

BalanceReport balance_report(const Dataset& d, const MatchingResult& result) {
    if (result.groups.empty()) throw InputError("balance_report: zero matched groups");
    const int k = d.k();
    const int p = d.p();
    const int anchor_arm = result.spec.anchor();

    // pre-match arm means and sds (sample convention, n-1)
    std::vector<Eigen::VectorXd> pre_mean(k), pre_var(k);
    for (int t = 0; t < k; ++t) {
        Eigen::MatrixXd X = d.arm_covariates(t);
        pre_mean[t] = X.colwise().mean().transpose();
        Eigen::MatrixXd c = X.rowwise() - pre_mean[t].transpose();
        const double denom = std::max<double>(1.0, static_cast<double>(X.rows()) - 1.0);
        pre_var[t] = (c.array().square().colwise().sum() / denom).transpose();
    }

    // post-match covariate sums per arm, matched units counted with multiplicity
    std::vector<Eigen::VectorXd> post_sum(k, Eigen::VectorXd::Zero(p));
    std::vector<double> post_n(k, 0.0);
    for (const MatchedGroup& g : result.groups) {
        post_sum[anchor_arm] += d.unit_by_id(g.anchor_id).covariates;
        post_n[anchor_arm] += 1;
        for (const auto& [t, lst] : g.matches)
            for (const Match& m : lst) {
                post_sum[t] += d.unit_by_id(m.unit_id).covariates;
                post_n[t] += 1;
            }
    }

    BalanceReport report;
    for (int j = 0; j < p; ++j) {
        for (int a = 0; a < k; ++a) {
            for (int b = a + 1; b < k; ++b) {
                // pooled sd from pre-match arm sds, used in both phases
                const double pooled = std::sqrt(0.5 * (pre_var[a][j] + pre_var[b][j]));
                BalanceRow row;
                row.covariate = d.covariate_names()[j];
                row.arm_a = a;
                row.arm_b = b;
                const double pre_diff = pre_mean[a][j] - pre_mean[b][j];
                const double post_diff =
                    post_sum[a][j] / post_n[a] - post_sum[b][j] / post_n[b];
                if (pooled > 0.0) {
                    row.smd_pre = pre_diff / pooled;
                    row.smd_post = post_diff / pooled;
                } else {
                    row.smd_pre = pre_diff == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
                    row.smd_post =
                        post_diff == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
                }
                report.rows.push_back(row);
            }
        }
    }
    return report;
}

}  // namespace smatch
