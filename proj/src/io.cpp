#include "smatch/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace smatch::io {

using nlohmann::json;

std::string fmt_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string meta_csv_block(const Meta& meta) {
    std::ostringstream out;
    out << "# tool=smatch " << kVersion << "\n";
    out << "# seed=" << meta.seed << "\n";
    for (const auto& [key, value] : meta.options) out << "# " << key << "=" << value << "\n";
    return out.str();
}

namespace {

json meta_json(const Meta& meta) {
    json j;
    j["tool"] = std::string("smatch ") + kVersion;
    j["seed"] = meta.seed;
    for (const auto& [key, value] : meta.options) j["options"][key] = value;
    return j;
}

}  // namespace

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write file '" + path + "'");
    out << content;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string scores_to_csv(const Dataset& d, const ScoreMap& scores, const Meta& meta) {
    std::ostringstream out;
    out << meta_csv_block(meta);
    const int k = d.k();
    out << "id,pivot_label";
    for (int i = 1; i < k; ++i) out << ",s_log_" << i;
    out << "\n";
    for (const Unit& u : d.units()) {
        auto it = scores.find(u.id);
        if (it == scores.end()) throw InputError("missing score for unit '" + u.id + "'");
        const ScoreVector& sv = it->second;
        out << u.id << "," << d.levels()[sv.pivot].label;
        for (int i = 0; i < sv.log_values.size(); ++i) out << "," << fmt_double(sv.log_values[i]);
        out << "\n";
    }
    return out.str();
}

ScoreMap scores_from_csv(const std::string& content, const Dataset& d) {
    std::istringstream in(content);
    std::string line;
    ScoreMap scores;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::vector<std::string> cells;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                cells.push_back(cur);
                cur.clear();
            } else if (c != '\r') {
                cur.push_back(c);
            }
        }
        cells.push_back(cur);
        if (cells.size() != static_cast<std::size_t>(d.k() + 1))
            throw InputError("score file row has wrong cell count");
        ScoreVector sv;
        sv.pivot = d.level_by_label(cells[1]).index;
        sv.k = d.k();
        sv.log_values.resize(d.k() - 1);
        for (int i = 0; i < d.k() - 1; ++i) {
            const std::string& cell = cells[2 + i];
            double v;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc{} || ptr != cell.data() + cell.size())
                throw InputError("unparsable score value '" + cell + "'");
            sv.log_values[i] = v;
        }
        scores.emplace(cells[0], std::move(sv));
    }
    if (scores.size() != d.n()) throw InputError("score file does not cover every unit");
    return scores;
}

namespace {

json spec_to_json(const MatchSpec& spec, const Dataset& d) {
    json j;
    j["pivot"] = d.levels()[spec.pivot].label;
    j["anchor_arm"] = d.levels()[spec.anchor()].label;
    j["neighbors_per_arm"] = spec.neighbors_per_arm;
    j["with_replacement"] = spec.with_replacement;
    if (spec.caliper) j["caliper"] = *spec.caliper;
    j["metric"] = spec.metric == Metric::LogScore ? "log" : "ratio";
    return j;
}

MatchSpec spec_from_json(const json& j, const Dataset& d) {
    MatchSpec spec;
    spec.pivot = d.level_by_label(j.at("pivot").get<std::string>()).index;
    spec.anchor_arm = d.level_by_label(j.at("anchor_arm").get<std::string>()).index;
    spec.neighbors_per_arm = j.at("neighbors_per_arm").get<int>();
    spec.with_replacement = j.at("with_replacement").get<bool>();
    if (j.contains("caliper")) spec.caliper = j.at("caliper").get<double>();
    spec.metric = j.at("metric").get<std::string>() == "ratio" ? Metric::RatioScore
                                                               : Metric::LogScore;
    return spec;
}

}  // namespace

std::string matching_to_json(const MatchingResult& r, const Dataset& d, const Meta& meta) {
    json j;
    j["meta"] = meta_json(meta);
    j["spec"] = spec_to_json(r.spec, d);
    j["groups"] = json::array();
    for (const MatchedGroup& g : r.groups) {
        json jg;
        jg["anchor"] = g.anchor_id;
        for (const auto& [t, lst] : g.matches) {
            json arm = json::array();
            for (const Match& m : lst)
                arm.push_back({{"id", m.unit_id}, {"distance", m.distance}});
            jg["matches"][d.levels()[t].label] = arm;
        }
        j["groups"].push_back(jg);
    }
    j["unmatched"] = json::array();
    for (const Unmatched& u : r.unmatched)
        j["unmatched"].push_back({{"anchor", u.anchor_id}, {"reason", u.reason}});
    json reuse = json::object();
    for (const auto& [id, count] : r.reuse_counts) reuse[id] = count;
    j["reuse_counts"] = reuse;
    return j.dump(2) + "\n";
}

MatchingResult matching_from_json(const std::string& content, const Dataset& d) {
    json j;
    try {
        j = json::parse(content);
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed match file: ") + e.what());
    }
    MatchingResult r;
    r.spec = spec_from_json(j.at("spec"), d);
    for (const auto& jg : j.at("groups")) {
        MatchedGroup g;
        g.anchor_id = jg.at("anchor").get<std::string>();
        if (jg.contains("matches")) {
            for (const auto& [label, arm] : jg.at("matches").items()) {
                const int t = d.level_by_label(label).index;
                for (const auto& jm : arm)
                    g.matches[t].push_back(
                        {jm.at("id").get<std::string>(), jm.at("distance").get<double>()});
            }
        }
        r.groups.push_back(std::move(g));
    }
    for (const auto& ju : j.at("unmatched"))
        r.unmatched.push_back(
            {ju.at("anchor").get<std::string>(), ju.at("reason").get<std::string>()});
    if (j.contains("reuse_counts"))
        for (const auto& [id, count] : j.at("reuse_counts").items())
            r.reuse_counts[id] = count.get<int>();
    return r;
}

std::string matching_to_csv(const MatchingResult& r, const Dataset& d, const Meta& meta) {
    std::ostringstream out;
    out << meta_csv_block(meta);
    out << "anchor_id,arm,match_id,distance\n";
    for (const MatchedGroup& g : r.groups)
        for (const auto& [t, lst] : g.matches)
            for (const Match& m : lst)
                out << g.anchor_id << "," << d.levels()[t].label << "," << m.unit_id << ","
                    << fmt_double(m.distance) << "\n";
    return out.str();
}

std::string effects_to_json(const std::vector<EffectEstimate>& effects, const Dataset& d,
                            const Meta& meta) {
    json j;
    j["meta"] = meta_json(meta);
    // group differences are treated as independent; with-replacement reuse
    // makes that optimistic
    j["std_error_caveat"] = "independent-groups approximation";
    j["effects"] = json::array();
    for (const EffectEstimate& e : effects)
        j["effects"].push_back({{"arm_a", d.levels()[e.arm_a].label},
                                {"arm_b", d.levels()[e.arm_b].label},
                                {"estimate", e.estimate},
                                {"std_error", e.std_error},
                                {"n_groups", e.n_groups}});
    return j.dump(2) + "\n";
}

std::string effects_to_csv(const std::vector<EffectEstimate>& effects, const Dataset& d,
                           const Meta& meta) {
    std::ostringstream out;
    out << meta_csv_block(meta);
    out << "arm_a,arm_b,estimate,std_error,n_groups\n";
    for (const EffectEstimate& e : effects)
        out << d.levels()[e.arm_a].label << "," << d.levels()[e.arm_b].label << ","
            << fmt_double(e.estimate) << "," << fmt_double(e.std_error) << "," << e.n_groups
            << "\n";
    return out.str();
}

std::string chain_to_csv(const DoseResponseChain& chain, const Dataset& d, const Meta& meta) {
    std::ostringstream out;
    out << meta_csv_block(meta);
    out << "step,arm_a,arm_b,estimate,std_error,n_groups\n";
    for (std::size_t i = 0; i < chain.steps.size(); ++i) {
        const EffectEstimate& e = chain.steps[i];
        out << (i + 1) << "," << d.levels()[e.arm_a].label << "," << d.levels()[e.arm_b].label
            << "," << fmt_double(e.estimate) << "," << fmt_double(e.std_error) << ","
            << e.n_groups << "\n";
    }
    return out.str();
}

std::string balance_to_csv(const BalanceReport& report, const Dataset& d, const Meta& meta) {
    std::ostringstream out;
    out << meta_csv_block(meta);
    out << "covariate,arm_pair,phase,smd\n";
    for (const BalanceRow& r : report.rows) {
        const std::string pair =
            d.levels()[r.arm_a].label + ":" + d.levels()[r.arm_b].label;
        out << r.covariate << "," << pair << ",pre," << fmt_double(r.smd_pre) << "\n";
        out << r.covariate << "," << pair << ",post," << fmt_double(r.smd_post) << "\n";
    }
    return out.str();
}

std::string ratio_model_to_json(const DensityRatioModel& m, const Dataset& d, const Meta& meta) {
    json j;
    j["meta"] = meta_json(meta);
    j["numerator_arm"] = d.levels()[m.numerator_arm].label;
    j["denominator_arm"] = d.levels()[m.denominator_arm].label;
    j["bandwidth"] = m.bandwidth;
    j["ridge"] = m.ridge;
    j["alpha"] = std::vector<double>(m.alpha.data(), m.alpha.data() + m.alpha.size());
    j["centers"] = json::array();
    for (Eigen::Index r = 0; r < m.centers.rows(); ++r) {
        std::vector<double> row(m.centers.cols());
        for (Eigen::Index c = 0; c < m.centers.cols(); ++c) row[c] = m.centers(r, c);
        j["centers"].push_back(row);
    }
    return j.dump(2) + "\n";
}

SimulationScenario scenario_from_json(const std::string& content) {
    json j;
    try {
        j = json::parse(content);
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed scenario file: ") + e.what());
    }
    try {
        SimulationScenario sc;
        sc.k = j.at("k").get<int>();
        sc.p = j.at("p").get<int>();
        const auto& law = j.at("covariate_law");
        auto w = law.at("weights").get<std::vector<double>>();
        sc.covariate_law.weights = Eigen::Map<Eigen::VectorXd>(w.data(), w.size());
        for (const auto& jm : law.at("means")) {
            auto v = jm.get<std::vector<double>>();
            sc.covariate_law.means.push_back(Eigen::Map<Eigen::VectorXd>(v.data(), v.size()));
        }
        for (const auto& jc : law.at("covariances")) {
            auto rows = jc.get<std::vector<std::vector<double>>>();
            Eigen::MatrixXd cov(rows.size(), rows.empty() ? 0 : rows[0].size());
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t c = 0; c < rows[r].size(); ++c) cov(r, c) = rows[r][c];
            sc.covariate_law.covs.push_back(cov);
        }
        auto bs = j.at("assignment_coef").get<std::vector<std::vector<double>>>();
        sc.assignment_coef.resize(bs.size(), bs.empty() ? 0 : bs[0].size());
        for (std::size_t r = 0; r < bs.size(); ++r)
            for (std::size_t c = 0; c < bs[r].size(); ++c) sc.assignment_coef(r, c) = bs[r][c];
        for (const auto& jo : j.at("outcomes")) {
            OutcomeModel om;
            const std::string type = jo.at("type").get<std::string>();
            if (type == "linear") {
                om.linear = true;
                om.intercept = jo.at("intercept").get<double>();
                auto s = jo.at("slope").get<std::vector<double>>();
                om.slope = Eigen::Map<Eigen::VectorXd>(s.data(), s.size());
            } else if (type == "polynomial") {
                om.linear = false;
                for (const auto& jt : jo.at("terms")) {
                    Monomial m;
                    m.coeff = jt.at("coeff").get<double>();
                    m.exponents = jt.at("exponents").get<std::vector<int>>();
                    om.poly.push_back(std::move(m));
                }
            } else {
                throw InputError("unknown outcome model type '" + type + "'");
            }
            sc.outcomes.push_back(std::move(om));
        }
        sc.sigma_y = j.at("sigma_y").get<double>();
        if (j.contains("seed")) sc.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("level_labels"))
            sc.level_labels = j.at("level_labels").get<std::vector<std::string>>();
        sc.validate();
        return sc;
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed scenario file: ") + e.what());
    }
}

std::string scenario_to_json(const SimulationScenario& sc) {
    json j;
    j["k"] = sc.k;
    j["p"] = sc.p;
    j["covariate_law"]["weights"] = std::vector<double>(
        sc.covariate_law.weights.data(),
        sc.covariate_law.weights.data() + sc.covariate_law.weights.size());
    j["covariate_law"]["means"] = json::array();
    for (const auto& m : sc.covariate_law.means)
        j["covariate_law"]["means"].push_back(
            std::vector<double>(m.data(), m.data() + m.size()));
    j["covariate_law"]["covariances"] = json::array();
    for (const auto& cov : sc.covariate_law.covs) {
        json rows = json::array();
        for (Eigen::Index r = 0; r < cov.rows(); ++r) {
            std::vector<double> row(cov.cols());
            for (Eigen::Index c = 0; c < cov.cols(); ++c) row[c] = cov(r, c);
            rows.push_back(row);
        }
        j["covariate_law"]["covariances"].push_back(rows);
    }
    j["assignment_coef"] = json::array();
    for (Eigen::Index r = 0; r < sc.assignment_coef.rows(); ++r) {
        std::vector<double> row(sc.assignment_coef.cols());
        for (Eigen::Index c = 0; c < sc.assignment_coef.cols(); ++c)
            row[c] = sc.assignment_coef(r, c);
        j["assignment_coef"].push_back(row);
    }
    j["outcomes"] = json::array();
    for (const OutcomeModel& om : sc.outcomes) {
        json jo;
        if (om.linear) {
            jo["type"] = "linear";
            jo["intercept"] = om.intercept;
            jo["slope"] = std::vector<double>(om.slope.data(), om.slope.data() + om.slope.size());
        } else {
            jo["type"] = "polynomial";
            jo["terms"] = json::array();
            for (const Monomial& m : om.poly)
                jo["terms"].push_back({{"coeff", m.coeff}, {"exponents", m.exponents}});
        }
        j["outcomes"].push_back(jo);
    }
    j["sigma_y"] = sc.sigma_y;
    j["seed"] = sc.seed;
    j["level_labels"] = sc.level_labels;
    return j.dump(2) + "\n";
}

namespace {

std::string pair_label(const SimulationScenario& sc, int a, int b) {
    auto name = [&](int t) {
        return t < static_cast<int>(sc.level_labels.size()) ? sc.level_labels[t]
                                                            : "t" + std::to_string(t + 1);
    };
    return name(a) + "-" + name(b);
}

}  // namespace

std::string experiment_to_json(const ExperimentReport& r, const SimulationScenario& sc,
                               const Meta& meta) {
    json j;
    j["meta"] = meta_json(meta);
    j["n"] = r.n;
    j["reps"] = r.reps;
    j["failed_reps"] = r.failed_reps;
    j["pairs"] = json::array();
    for (const PairReport& pr : r.pairs)
        j["pairs"].push_back({{"pair", pair_label(sc, pr.arm_a, pr.arm_b)},
                              {"true_effect", pr.true_effect},
                              {"mean_bias", pr.mean_bias},
                              {"sd", pr.sd},
                              {"mc_se", pr.mc_se},
                              {"naive_mean_bias", pr.naive_mean_bias},
                              {"naive_sd", pr.naive_sd},
                              {"naive_mc_se", pr.naive_mc_se}});
    return j.dump(2) + "\n";
}

std::string experiment_to_csv(const ExperimentReport& r, const SimulationScenario& sc,
                              const Meta& meta) {
    std::ostringstream out;
    out << meta_csv_block(meta);
    out << "pair,true_effect,mean_bias,sd,mc_se,naive_mean_bias,naive_sd,naive_mc_se\n";
    for (const PairReport& pr : r.pairs)
        out << pair_label(sc, pr.arm_a, pr.arm_b) << "," << fmt_double(pr.true_effect) << ","
            << fmt_double(pr.mean_bias) << "," << fmt_double(pr.sd) << ","
            << fmt_double(pr.mc_se) << "," << fmt_double(pr.naive_mean_bias) << ","
            << fmt_double(pr.naive_sd) << "," << fmt_double(pr.naive_mc_se) << "\n";
    return out.str();
}

}  // namespace smatch::io
