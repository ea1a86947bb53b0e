#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "smatch/effects.hpp"
#include "smatch/matching.hpp"
#include "smatch/ratio_estim.hpp"
#include "smatch/simulation.hpp"

namespace smatch::io {

// Shortest round-trippable decimal representation.
std::string fmt_double(double v);

// Metadata echoed at the top of every output file: tool version, seed, and
// the options the run used.
struct Meta {
    std::uint64_t seed = 0;
    std::map<std::string, std::string> options;
};

// CSV comment block ("# key=value" lines) for the metadata.
std::string meta_csv_block(const Meta& meta);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Score dump: id, pivot_label, s_log_1..s_log_{k-1}.
std::string scores_to_csv(const Dataset& d, const ScoreMap& scores, const Meta& meta);
ScoreMap scores_from_csv(const std::string& content, const Dataset& d);

std::string matching_to_json(const MatchingResult& r, const Dataset& d, const Meta& meta);
MatchingResult matching_from_json(const std::string& content, const Dataset& d);
std::string matching_to_csv(const MatchingResult& r, const Dataset& d, const Meta& meta);

std::string effects_to_json(const std::vector<EffectEstimate>& effects, const Dataset& d,
                            const Meta& meta);
std::string effects_to_csv(const std::vector<EffectEstimate>& effects, const Dataset& d,
                           const Meta& meta);
std::string chain_to_csv(const DoseResponseChain& chain, const Dataset& d, const Meta& meta);

// Long format: covariate, arm_pair, phase, smd.
std::string balance_to_csv(const BalanceReport& report, const Dataset& d, const Meta& meta);

std::string ratio_model_to_json(const DensityRatioModel& m, const Dataset& d, const Meta& meta);

SimulationScenario scenario_from_json(const std::string& content);
std::string scenario_to_json(const SimulationScenario& sc);

std::string experiment_to_json(const ExperimentReport& r, const SimulationScenario& sc,
                               const Meta& meta);
std::string experiment_to_csv(const ExperimentReport& r, const SimulationScenario& sc,
                              const Meta& meta);

}  // namespace smatch::io
