// smatch: balancing-score matching and treatment-effect estimation CLI.
//
// Subcommands: score, match, estimate, diagnose, simulate.
// Exit codes: 0 success, 2 input error, 3 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "smatch/effects.hpp"
#include "smatch/io.hpp"
#include "smatch/matching.hpp"
#include "smatch/ratio_estim.hpp"
#include "smatch/scores.hpp"
#include "smatch/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace smatch;

namespace {

struct CommonOpts {
    std::string input;
    std::string id_col;
    std::string treatment_col = "treatment";
    std::string covariate_cols;  // comma-separated
    std::string response_col;
    std::string out_dir = ".";
    std::string format = "csv,json";
    std::uint64_t seed = 0;
    bool seed_given = false;
};

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void add_common(CLI::App* cmd, CommonOpts& o, bool need_input = true) {
    auto* in = cmd->add_option("--input", o.input, "input CSV file");
    if (need_input) in->required();
    cmd->add_option("--id-col", o.id_col, "unit id column (default: row numbers)");
    cmd->add_option("--treatment-col", o.treatment_col, "treatment column name");
    cmd->add_option("--covariate-cols", o.covariate_cols, "comma-separated covariate columns");
    cmd->add_option("--response-col", o.response_col, "response column name");
    cmd->add_option("--out-dir", o.out_dir, "output directory");
    cmd->add_option("--format", o.format, "output formats: csv,json");
    cmd->add_option("--seed", o.seed, "RNG seed (SMATCH_SEED is the fallback)")
        ->each([&o](const std::string&) { o.seed_given = true; });
}

std::uint64_t resolve_seed(const CommonOpts& o) {
    if (o.seed_given) return o.seed;
    if (const char* env = std::getenv("SMATCH_SEED")) return std::strtoull(env, nullptr, 10);
    return o.seed;
}

Dataset load_input(const CommonOpts& o) {
    if (o.covariate_cols.empty()) throw InputError("--covariate-cols is required");
    CsvSchema schema;
    schema.id_col = o.id_col;
    schema.treatment_col = o.treatment_col;
    schema.covariate_cols = split_commas(o.covariate_cols);
    schema.response_col = o.response_col;
    return load_csv(o.input, schema);
}

bool wants(const CommonOpts& o, const std::string& fmt) {
    for (const auto& f : split_commas(o.format))
        if (f == fmt) return true;
    return false;
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec && !fs::is_directory(dir))
        throw InputError("cannot create output directory '" + dir + "'");
}

KnownDensityModel known_model_from_json(const std::string& path, int k, int p) {
    json j;
    try {
        j = json::parse(io::read_text_file(path));
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed model file: ") + e.what());
    }
    std::vector<std::shared_ptr<const ArmDensity>> arms;
    for (const auto& ja : j.at("arms")) {
        const std::string type = ja.at("type").get<std::string>();
        if (type == "normal") {
            auto mv = ja.at("mean").get<std::vector<double>>();
            Eigen::VectorXd mean = Eigen::Map<Eigen::VectorXd>(mv.data(), mv.size());
            auto rows = ja.at("cov").get<std::vector<std::vector<double>>>();
            Eigen::MatrixXd cov(rows.size(), rows.empty() ? 0 : rows[0].size());
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t c = 0; c < rows[r].size(); ++c) cov(r, c) = rows[r][c];
            arms.push_back(std::make_shared<MvnDensity>(mean, cov));
        } else if (type == "polynomial") {
            Polynomial poly;
            for (const auto& jt : ja.at("terms")) {
                Monomial m;
                m.coeff = jt.at("coeff").get<double>();
                m.exponents = jt.at("exponents").get<std::vector<int>>();
                poly.push_back(std::move(m));
            }
            auto lo = ja.at("box_lo").get<std::vector<double>>();
            auto hi = ja.at("box_hi").get<std::vector<double>>();
            arms.push_back(std::make_shared<PolynomialFamilyDensity>(
                poly, Eigen::Map<Eigen::VectorXd>(lo.data(), lo.size()),
                Eigen::Map<Eigen::VectorXd>(hi.data(), hi.size())));
        } else {
            throw InputError("unknown arm density type '" + type + "'");
        }
    }
    if (static_cast<int>(arms.size()) != k)
        throw InputError("model file arm count does not match the data");
    (void)p;
    return KnownDensityModel(std::move(arms));
}

struct ModelOpts {
    std::string model = "glm";
    std::string model_file;
    double ridge = 1e-6;
    int max_centers = 100;
    bool standardize = false;
};

void add_model_opts(CLI::App* cmd, ModelOpts& m) {
    cmd->add_option("--model", m.model, "score model: known|glm|ratio");
    cmd->add_option("--model-file", m.model_file, "JSON arm densities for --model known");
    cmd->add_option("--ridge", m.ridge, "ridge penalty for the glm fit");
    cmd->add_option("--max-centers", m.max_centers, "kernel centers for --model ratio");
    cmd->add_flag("--standardize", m.standardize, "standardize covariates first");
}

std::unique_ptr<ScoreModel> build_model(const ModelOpts& m, const Dataset& d, int pivot,
                                        std::uint64_t seed) {
    if (m.model == "glm") {
        LogitFitOptions opts;
        opts.ridge = m.ridge;
        return std::make_unique<GlmScoreModel>(fit_multinomial_logit(d, pivot, opts),
                                               PriorWeights::empirical(d));
    }
    if (m.model == "ratio") {
        BasisConfig cfg;
        cfg.max_centers = m.max_centers;
        cfg.seed = seed;
        return std::make_unique<RatioScoreModel>(d, pivot, cfg);
    }
    if (m.model == "known") {
        if (m.model_file.empty()) throw InputError("--model known requires --model-file");
        return std::make_unique<KnownScoreModel>(known_model_from_json(m.model_file, d.k(), d.p()));
    }
    throw InputError("unknown model '" + m.model + "' (expected known|glm|ratio)");
}

ScoreMap compute_scores(const ScoreModel& model, const Dataset& d, int pivot) {
    ScoreMap scores;
    for (const Unit& u : d.units()) scores.emplace(u.id, model.score(u.covariates, pivot));
    return scores;
}

// ---------------------------------------------------------------------------

int cmd_score(const CommonOpts& common, const ModelOpts& model_opts,
              const std::string& pivot_label) {
    Dataset d = load_input(common);
    if (model_opts.standardize) d = standardize(d).first;
    const int pivot = pivot_label.empty() ? 0 : d.level_by_label(pivot_label).index;
    const std::uint64_t seed = resolve_seed(common);
    auto model = build_model(model_opts, d, pivot, seed);
    ScoreMap scores = compute_scores(*model, d, pivot);

    ensure_out_dir(common.out_dir);
    io::Meta meta{seed, {{"command", "score"},
                         {"model", model_opts.model},
                         {"pivot", d.levels()[pivot].label},
                         {"standardize", model_opts.standardize ? "true" : "false"},
                         {"sd_convention", "population"}}};
    io::write_text_file(common.out_dir + "/scores.csv", io::scores_to_csv(d, scores, meta));
    std::cout << "wrote " << common.out_dir << "/scores.csv (" << d.n() << " units, k="
              << d.k() << ")\n";
    return 0;
}

struct MatchOpts {
    std::string scores_file;
    std::string pivot_label;
    bool all_pivots = false;
    std::string select_best;  // euclidean|sup
    int ratio_k = 1;
    bool with_replacement = true;
    bool no_replacement = false;
    std::optional<double> caliper;
    std::string metric = "log";
    bool brute_force = false;
};

int cmd_match(const CommonOpts& common, const ModelOpts& model_opts, const MatchOpts& mo) {
    Dataset d = load_input(common);
    if (model_opts.standardize) d = standardize(d).first;
    const std::uint64_t seed = resolve_seed(common);
    const int pivot = mo.pivot_label.empty() ? 0 : d.level_by_label(mo.pivot_label).index;

    MatchSpec spec;
    spec.pivot = pivot;
    spec.neighbors_per_arm = mo.ratio_k;
    spec.with_replacement = !mo.no_replacement;
    spec.caliper = mo.caliper;
    spec.metric = mo.metric == "ratio" ? Metric::RatioScore : Metric::LogScore;
    spec.use_index = !mo.brute_force;
    if (mo.metric != "log" && mo.metric != "ratio")
        throw InputError("unknown metric '" + mo.metric + "' (expected log|ratio)");

    // score provider: either pivot-transformed file scores or a fitted model
    std::unique_ptr<ScoreModel> model;
    ScoreMap base_scores;
    if (!mo.scores_file.empty()) {
        base_scores = io::scores_from_csv(io::read_text_file(mo.scores_file), d);
    } else {
        model = build_model(model_opts, d, pivot, seed);
    }
    auto provider = [&](int j) {
        if (model) return compute_scores(*model, d, j);
        ScoreMap out;
        for (const auto& [id, sv] : base_scores) out.emplace(id, pivot_transform(sv, j));
        return out;
    };

    MatchingResult result;
    int selected_pivot = pivot;
    if (mo.all_pivots) {
        spec.anchor_arm = pivot;  // anchor arm held fixed across pivots
        auto results = match_all_pivots(d, provider, spec);
        const MeanNorm norm = mo.select_best == "sup" ? MeanNorm::Sup : MeanNorm::Euclidean;
        auto [best, best_result] = select_best_pivot(results, d, norm);
        selected_pivot = best;
        result = std::move(best_result);
    } else {
        result = match_units(d, provider(pivot), spec);
    }

    if (result.groups.empty())
        std::cerr << "warning: no anchors matched (" << result.unmatched.size()
                  << " unmatched)\n";

    ensure_out_dir(common.out_dir);
    io::Meta meta{seed, {{"command", "match"},
                         {"selected_pivot", d.levels()[selected_pivot].label},
                         {"metric", mo.metric},
                         {"neighbors_per_arm", std::to_string(mo.ratio_k)},
                         {"with_replacement", spec.with_replacement ? "true" : "false"}}};
    if (mo.all_pivots) meta.options["select_best"] = mo.select_best.empty() ? "euclidean"
                                                                            : mo.select_best;
    if (wants(common, "json"))
        io::write_text_file(common.out_dir + "/match.json", io::matching_to_json(result, d, meta));
    if (wants(common, "csv"))
        io::write_text_file(common.out_dir + "/match.csv", io::matching_to_csv(result, d, meta));
    std::cout << "selected pivot: " << d.levels()[selected_pivot].label << "; matched "
              << result.groups.size() << " groups, " << result.unmatched.size()
              << " unmatched\n";
    return 0;
}

int cmd_estimate(const CommonOpts& common, const std::string& match_file,
                 const std::string& dose_order) {
    Dataset d = load_input(common);
    MatchingResult result = io::matching_from_json(io::read_text_file(match_file), d);
    auto effects = estimate_pairwise(result, d);
    const std::uint64_t seed = resolve_seed(common);

    ensure_out_dir(common.out_dir);
    io::Meta meta{seed, {{"command", "estimate"}}};
    if (wants(common, "json"))
        io::write_text_file(common.out_dir + "/effects.json",
                            io::effects_to_json(effects, d, meta));
    if (wants(common, "csv"))
        io::write_text_file(common.out_dir + "/effects.csv",
                            io::effects_to_csv(effects, d, meta));
    if (!dose_order.empty()) {
        std::vector<int> order;
        for (const auto& lbl : split_commas(dose_order))
            order.push_back(d.level_by_label(lbl).index);
        DoseResponseChain chain = dose_chain(result, d, order);
        io::write_text_file(common.out_dir + "/chain.csv", io::chain_to_csv(chain, d, meta));
    }
    std::cout << "estimated " << effects.size() << " pairwise effects over "
              << result.groups.size() << " groups\n";
    return 0;
}

int cmd_diagnose(const CommonOpts& common, const std::string& match_file) {
    Dataset d = load_input(common);
    MatchingResult result = io::matching_from_json(io::read_text_file(match_file), d);
    BalanceReport report = balance_report(d, result);
    ensure_out_dir(common.out_dir);
    io::Meta meta{resolve_seed(common), {{"command", "diagnose"}}};
    io::write_text_file(common.out_dir + "/balance.csv", io::balance_to_csv(report, d, meta));
    std::cout << "max |SMD| pre=" << report.max_abs_pre() << " post=" << report.max_abs_post()
              << "\n";
    return 0;
}

int cmd_simulate(const CommonOpts& common, const std::string& scenario_file, bool reference,
                 int n, int reps, const ModelOpts& model_opts, const MatchOpts& mo) {
    SimulationScenario sc;
    if (reference)
        sc = reference_confounded_scenario();
    else if (!scenario_file.empty())
        sc = io::scenario_from_json(io::read_text_file(scenario_file));
    else
        throw InputError("simulate needs --scenario or --reference");

    PipelineConfig cfg;
    if (model_opts.model == "glm")
        cfg.model = ScoreModelKind::Glm;
    else if (model_opts.model == "ratio")
        cfg.model = ScoreModelKind::Ratio;
    else if (model_opts.model == "known")
        cfg.model = ScoreModelKind::KnownTrue;
    else
        throw InputError("unknown model '" + model_opts.model + "' (expected known|glm|ratio)");
    cfg.logit.ridge = model_opts.ridge;
    cfg.ratio.max_centers = model_opts.max_centers;
    cfg.standardize_covariates = true;
    cfg.match.neighbors_per_arm = mo.ratio_k;
    cfg.match.with_replacement = !mo.no_replacement;
    cfg.match.caliper = mo.caliper;
    cfg.match.metric = mo.metric == "ratio" ? Metric::RatioScore : Metric::LogScore;
    if (!mo.pivot_label.empty()) {
        for (int t = 0; t < sc.k; ++t)
            if (t < static_cast<int>(sc.level_labels.size()) &&
                sc.level_labels[t] == mo.pivot_label)
                cfg.match.pivot = t;
    }

    const std::uint64_t seed = resolve_seed(common);
    ExperimentReport report = run_experiment(sc, cfg, n, reps, seed);

    ensure_out_dir(common.out_dir);
    io::Meta meta{seed, {{"command", "simulate"},
                         {"model", model_opts.model},
                         {"n", std::to_string(n)},
                         {"reps", std::to_string(reps)}}};
    if (wants(common, "json"))
        io::write_text_file(common.out_dir + "/report.json",
                            io::experiment_to_json(report, sc, meta));
    if (wants(common, "csv"))
        io::write_text_file(common.out_dir + "/report.csv",
                            io::experiment_to_csv(report, sc, meta));
    for (const PairReport& pr : report.pairs)
        std::cout << "pair " << pr.arm_a << "-" << pr.arm_b << ": bias=" << pr.mean_bias
                  << " (naive " << pr.naive_mean_bias << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"smatch: balancing-score matching for multi-treatment causal inference"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key=value configuration file (flags win)");
    app.allow_config_extras(true);

    CommonOpts common;
    ModelOpts model_opts;
    MatchOpts match_opts;
    std::string pivot_label, match_file, dose_order, scenario_file;
    bool reference = false;
    int n = 1000, reps = 10;

    auto* score = app.add_subcommand("score", "compute balancing scores");
    add_common(score, common);
    add_model_opts(score, model_opts);
    score->add_option("--pivot", pivot_label, "pivot treatment label");

    auto* match = app.add_subcommand("match", "nearest-neighbor matching on scores");
    add_common(match, common);
    add_model_opts(match, model_opts);
    match->add_option("--scores", match_opts.scores_file, "precomputed score CSV");
    match->add_option("--pivot", match_opts.pivot_label, "pivot treatment label");
    match->add_flag("--all-pivots", match_opts.all_pivots, "match under every pivot");
    match->add_option("--select-best", match_opts.select_best,
                      "best-set selection norm: euclidean|sup");
    match->add_option("--ratio-k", match_opts.ratio_k, "matches per arm (1:k)");
    match->add_flag("--with-replacement", match_opts.with_replacement, "match with replacement");
    match->add_flag("--no-replacement", match_opts.no_replacement, "match without replacement");
    double caliper_val = -1;
    match->add_option("--caliper", caliper_val, "maximum score distance");
    match->add_option("--metric", match_opts.metric, "distance space: log|ratio");
    match->add_flag("--brute-force", match_opts.brute_force, "force the exhaustive scan");

    auto* estimate = app.add_subcommand("estimate", "pairwise effects from a match file");
    add_common(estimate, common);
    estimate->add_option("--match", match_file, "match JSON file")->required();
    estimate->add_option("--dose-order", dose_order, "comma-separated dose-ordered labels");

    auto* diagnose = app.add_subcommand("diagnose", "covariate balance report");
    add_common(diagnose, common);
    diagnose->add_option("--match", match_file, "match JSON file")->required();

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo verification runs");
    add_common(simulate, common, /*need_input=*/false);
    add_model_opts(simulate, model_opts);
    simulate->add_option("--scenario", scenario_file, "scenario JSON file");
    simulate->add_flag("--reference", reference, "use the built-in confounded scenario");
    simulate->add_option("--n", n, "units per replication");
    simulate->add_option("--reps", reps, "replications");
    simulate->add_option("--pivot", match_opts.pivot_label, "pivot treatment label");
    simulate->add_option("--ratio-k", match_opts.ratio_k, "matches per arm (1:k)");
    simulate->add_flag("--no-replacement", match_opts.no_replacement, "match without replacement");
    double sim_caliper = -1;
    simulate->add_option("--caliper", sim_caliper, "maximum score distance");
    simulate->add_option("--metric", match_opts.metric, "distance space: log|ratio");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    if (match->parsed() && caliper_val >= 0) match_opts.caliper = caliper_val;
    if (simulate->parsed() && sim_caliper >= 0) match_opts.caliper = sim_caliper;

    try {
        if (score->parsed()) return cmd_score(common, model_opts, pivot_label);
        if (match->parsed()) return cmd_match(common, model_opts, match_opts);
        if (estimate->parsed()) return cmd_estimate(common, match_file, dose_order);
        if (diagnose->parsed()) return cmd_diagnose(common, match_file);
        if (simulate->parsed())
            return cmd_simulate(common, scenario_file, reference, n, reps, model_opts,
                                match_opts);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
