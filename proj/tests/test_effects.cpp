#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "smatch/effects.hpp"
#include "test_util.hpp"

using namespace smatch;

namespace {

// Matched 1:1 groups over a 3-arm dataset with dyadic responses: exact
// floating-point arithmetic throughout.
struct Fixture {
    Dataset data;
    MatchingResult result;
};

Fixture dyadic_fixture() {
    std::vector<std::string> ids;
    std::vector<int> treatments;
    std::vector<std::vector<double>> covs;
    std::vector<double> resp;
    // 4 groups x 3 arms; responses are multiples of 0.25
    const double r1[4] = {0.25, 1.0, -0.5, 2.0};
    for (int g = 0; g < 4; ++g)
        for (int t = 0; t < 3; ++t) {
            ids.push_back("g" + std::to_string(g) + "t" + std::to_string(t));
            treatments.push_back(t);
            covs.push_back({static_cast<double>(g)});
            resp.push_back(r1[g] + 1.5 * t);  // r(t2)=r(t1)+1.5, r(t3)=r(t1)+3
        }
    Fixture f{test_util::make_dataset(ids, treatments, covs, resp), {}};
    MatchSpec spec;
    f.result.spec = spec;
    for (int g = 0; g < 4; ++g) {
        MatchedGroup grp;
        grp.anchor_id = "g" + std::to_string(g) + "t0";
        grp.matches[1] = {{"g" + std::to_string(g) + "t1", 0.0}};
        grp.matches[2] = {{"g" + std::to_string(g) + "t2", 0.0}};
        f.result.groups.push_back(grp);
    }
    return f;
}

}  // namespace

TEST_CASE("constant treatment effect is recovered exactly with zero se") {
    auto f = dyadic_fixture();
    EffectEstimate e = estimate_pair(f.result, f.data, 1, 0);
    CHECK(e.estimate == 1.5);
    CHECK(e.std_error == 0.0);
    CHECK(e.n_groups == 4);
}

TEST_CASE("antisymmetry is exact") {
    auto f = dyadic_fixture();
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            if (a == b) continue;
            EffectEstimate ab = estimate_pair(f.result, f.data, a, b);
            EffectEstimate ba = estimate_pair(f.result, f.data, b, a);
            CHECK(ab.estimate + ba.estimate == 0.0);
            CHECK(ab.std_error == ba.std_error);
        }
}

TEST_CASE("telescoping holds exactly on the same groups") {
    auto f = dyadic_fixture();
    const double e13 = estimate_pair(f.result, f.data, 0, 2).estimate;
    const double e12 = estimate_pair(f.result, f.data, 0, 1).estimate;
    const double e23 = estimate_pair(f.result, f.data, 1, 2).estimate;
    CHECK(e13 == e12 + e23);
}

TEST_CASE("permutation invariance: group order does not change estimates") {
    auto f = dyadic_fixture();
    // make responses non-dyadic so ordering would matter for a naive sum
    std::vector<Unit> units = f.data.units();
    auto rng = make_rng(5);
    for (Unit& u : units) u.response = *u.response + 0.1 * draw_normal(rng);
    Dataset d2(units, f.data.levels(), f.data.covariate_names());

    EffectEstimate before = estimate_pair(f.result, d2, 1, 0);
    MatchingResult shuffled = f.result;
    std::reverse(shuffled.groups.begin(), shuffled.groups.end());
    std::swap(shuffled.groups[0], shuffled.groups[2]);
    EffectEstimate after = estimate_pair(shuffled, d2, 1, 0);
    CHECK(before.estimate == after.estimate);
    CHECK(before.std_error == after.std_error);
}

TEST_CASE("adding tau to one arm shifts that pair's estimate by tau") {
    auto f = dyadic_fixture();
    const double tau = 0.75;  // dyadic: exact shift
    std::vector<Unit> units = f.data.units();
    for (Unit& u : units)
        if (u.treatment == 1) u.response = *u.response + tau;
    Dataset shifted(units, f.data.levels(), f.data.covariate_names());
    const double before = estimate_pair(f.result, f.data, 1, 0).estimate;
    CHECK(estimate_pair(f.result, shifted, 1, 0).estimate == before + tau);
}

TEST_CASE("estimate_pairwise returns all unordered pairs as higher-minus-lower") {
    auto f = dyadic_fixture();
    auto effects = estimate_pairwise(f.result, f.data);
    REQUIRE(effects.size() == 3);
    CHECK(effects[0].arm_a == 1);
    CHECK(effects[0].arm_b == 0);
    CHECK(effects[0].estimate == 1.5);
    CHECK(effects[2].arm_a == 2);
    CHECK(effects[2].arm_b == 1);
    CHECK(effects[2].estimate == 1.5);
}

TEST_CASE("missing response on a matched unit is an error naming the unit") {
    auto f = dyadic_fixture();
    std::vector<Unit> units = f.data.units();
    for (Unit& u : units)
        if (u.id == "g2t1") u.response.reset();
    Dataset broken(units, f.data.levels(), f.data.covariate_names());
    CHECK_THROWS_WITH_AS(estimate_pair(f.result, broken, 1, 0), doctest::Contains("g2t1"),
                         InputError);

    MatchingResult empty;
    empty.spec = f.result.spec;
    CHECK_THROWS_AS(estimate_pair(empty, f.data, 1, 0), InputError);
}

TEST_CASE("1:k matching averages the k matched responses first") {
    // one group, arm 1 matched twice with responses 1.0 and 3.0 -> mean 2.0
    auto d = test_util::make_dataset({"a", "m1", "m2"}, {0, 1, 1},
                                     {{0.0}, {0.0}, {0.0}},
                                     {1.0, 1.0, 3.0}, 2);
    MatchingResult r;
    r.spec = MatchSpec{};
    MatchedGroup g;
    g.anchor_id = "a";
    g.matches[1] = {{"m1", 0.0}, {"m2", 0.0}};
    r.groups.push_back(g);
    EffectEstimate e = estimate_pair(r, d, 1, 0);
    CHECK(e.estimate == doctest::Approx(1.0));
}

TEST_CASE("dose_chain: degenerate k=2 chain and telescoping") {
    auto f = dyadic_fixture();
    DoseResponseChain chain = dose_chain(f.result, f.data, {0, 1, 2});
    REQUIRE(chain.steps.size() == 2);
    CHECK(chain.steps[0].estimate == 1.5);
    CHECK(chain.steps[1].estimate == 1.5);
    // telescoping across the chain
    CHECK(chain.steps[0].estimate + chain.steps[1].estimate ==
          estimate_pair(f.result, f.data, 2, 0).estimate);

    CHECK_THROWS_AS(dose_chain(f.result, f.data, {0, 1}), InputError);
    CHECK_THROWS_AS(dose_chain(f.result, f.data, {0, 1, 1}), InputError);
}

TEST_CASE("balance: exact-match groups give zero post-match SMD") {
    // duplicated covariates across arms, matched exactly
    std::vector<std::string> ids;
    std::vector<int> treatments;
    std::vector<std::vector<double>> covs;
    for (int g = 0; g < 5; ++g)
        for (int t = 0; t < 2; ++t) {
            ids.push_back("g" + std::to_string(g) + "t" + std::to_string(t));
            treatments.push_back(t);
            covs.push_back({static_cast<double>(g), 2.0 * g - 1.0});
        }
    auto d = test_util::make_dataset(ids, treatments, covs);
    MatchingResult r;
    r.spec = MatchSpec{};
    for (int g = 0; g < 5; ++g) {
        MatchedGroup grp;
        grp.anchor_id = "g" + std::to_string(g) + "t0";
        grp.matches[1] = {{"g" + std::to_string(g) + "t1", 0.0}};
        r.groups.push_back(grp);
    }
    BalanceReport rep = balance_report(d, r);
    CHECK(rep.max_abs_post() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("unbiasedness on an exactly-matchable confounded scenario") {
    // x takes 3 values; assignment and outcome both depend on x. Matching on
    // x is exact, so matched differences are unbiased for the ATE while the
    // naive arm-mean difference is not.
    const double true_ate_21 = 1.0;  // intercepts 0 and 1, shared slope
    const int reps = 200, n = 300;
    double sum = 0.0, sumsq = 0.0;
    double naive_sum = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
        auto rng = make_rng(9000, rep + 1);
        std::vector<std::string> ids;
        std::vector<int> treatments;
        std::vector<std::vector<double>> covs;
        std::vector<double> resp;
        for (int i = 0; i < n; ++i) {
            std::string s = std::to_string(i);
            ids.push_back("u" + std::string(4 - s.size(), '0') + s);
            const double x = static_cast<double>(draw_below(rng, 3));  // {0,1,2}
            // confounding: higher x favors arm 1
            const double p1 = 0.2 + 0.25 * x;
            int t = draw_uniform(rng) < p1 ? 1 : 0;
            if (i < 2) t = i;
            treatments.push_back(t);
            covs.push_back({x});
            resp.push_back(t == 1 ? 1.0 + 2.0 * x + 0.5 * draw_normal(rng)
                                  : 0.0 + 2.0 * x + 0.5 * draw_normal(rng));
        }
        Dataset d = test_util::make_dataset(ids, treatments, covs, resp);
        ScoreMap scores;
        for (const Unit& u : d.units())
            scores.emplace(u.id, test_util::make_score(0, 2, {u.covariates[0]}));
        MatchSpec spec;
        auto r = match_units(d, scores, spec);
        sum += estimate_pair(r, d, 1, 0).estimate;
        sumsq += estimate_pair(r, d, 1, 0).estimate * estimate_pair(r, d, 1, 0).estimate;
        double m1 = 0, m0 = 0;
        int n1 = 0, n0 = 0;
        for (const Unit& u : d.units())
            (u.treatment == 1 ? (m1 += *u.response, ++n1) : (m0 += *u.response, ++n0));
        naive_sum += m1 / n1 - m0 / n0;
    }
    const double mean = sum / reps;
    const double sd = std::sqrt(std::max(0.0, sumsq / reps - mean * mean));
    const double mc_se = sd / std::sqrt(static_cast<double>(reps));
    CHECK(std::abs(mean - true_ate_21) < 3.0 * mc_se + 1e-9);
    // negative control: the naive estimator is visibly biased here
    CHECK(std::abs(naive_sum / reps - true_ate_21) > 10.0 * mc_se);
}

TEST_CASE("balance: matching on a constant score does not balance") {
    auto rng = make_rng(9100);
    std::vector<std::string> ids;
    std::vector<int> treatments;
    std::vector<std::vector<double>> covs;
    for (int i = 0; i < 400; ++i) {
        std::string s = std::to_string(i);
        ids.push_back("u" + std::string(4 - s.size(), '0') + s);
        const double x = draw_normal(rng);
        const int t = (draw_uniform(rng) < 1.0 / (1.0 + std::exp(-1.5 * x))) ? 1 : 0;
        treatments.push_back(i < 2 ? i : t);
        covs.push_back({x});
    }
    Dataset d = test_util::make_dataset(ids, treatments, covs);
    ScoreMap constant, informative;
    for (const Unit& u : d.units()) {
        constant.emplace(u.id, test_util::make_score(0, 2, {0.0}));
        informative.emplace(u.id, test_util::make_score(0, 2, {1.5 * u.covariates[0]}));
    }
    MatchSpec spec;
    auto rc = match_units(d, constant, spec);
    auto ri = match_units(d, informative, spec);
    BalanceReport pre_like = balance_report(d, rc);
    BalanceReport balanced = balance_report(d, ri);
    // constant-score matching leaves imbalance near the pre-match level
    CHECK(std::abs(pre_like.max_abs_post() - pre_like.max_abs_pre()) <
          0.35 * pre_like.max_abs_pre() + 0.1);
    // informative-score matching reduces it substantially
    CHECK(balanced.max_abs_post() < 0.5 * balanced.max_abs_pre());
}
