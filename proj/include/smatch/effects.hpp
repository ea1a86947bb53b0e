#pragma once

#include <string>
#include <vector>

#include "smatch/dataset.hpp"
#include "smatch/matching.hpp"

namespace smatch {

struct EffectEstimate {
    int arm_a = 0, arm_b = 0;  // estimate is mean of per-group r(a) - r(b)
    double estimate = 0.0;
    double std_error = 0.0;  // sample sd of group differences / sqrt(n_groups)
    int n_groups = 0;
};

// All unordered pairs (a < b by arm index). With-replacement reuse makes the
// group differences dependent; the reported std_error ignores that (see the
// `independence_caveat` flag written by the report serializer).
std::vector<EffectEstimate> estimate_pairwise(const MatchingResult& result, const Dataset& d);

// Directed estimate for one pair from the same matched groups; exact
// antisymmetry: estimate(a,b) == -estimate(b,a) bitwise.
EffectEstimate estimate_pair(const MatchingResult& result, const Dataset& d, int arm_a, int arm_b);

struct DoseResponseChain {
    std::vector<int> ordered_levels;
    std::vector<EffectEstimate> steps;  // (t2 - t1), ..., (tk - t_{k-1})
};

DoseResponseChain dose_chain(const MatchingResult& result, const Dataset& d,
                             const std::vector<int>& dose_order);

struct BalanceRow {
    std::string covariate;
    int arm_a = 0, arm_b = 0;
    double smd_pre = 0.0;
    double smd_post = 0.0;
};

struct BalanceReport {
    std::vector<BalanceRow> rows;
    double max_abs_pre() const;
    double max_abs_post() const;
};

// Standardized mean differences per covariate and arm pair, before matching
// (full arms) and after (matched units with multiplicity). Pooled sd uses
// pre-match arm sds in both phases.
BalanceReport balance_report(const Dataset& d, const MatchingResult& result);

}  // namespace smatch
