#pragma once

// `ck` command-line front end. parse_and_dispatch is kept separate from main()
// so tests can drive it with captured streams.

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ck/ck.hpp"
#include "ck/io.hpp"

namespace ck::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kFileNotFound = 3,
    kMalformedInput = 4,
    kInvalidInput = 5,
    kLayerCap = 6,
    kOracleMismatch = 7,
};

inline constexpr const char* kSeedEnv = "CK_SEED";

inline std::uint64_t default_seed(std::uint64_t fallback) {
    if (const char* env = std::getenv(kSeedEnv); env && *env) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw ValidationError(std::string(kSeedEnv) + " is not an unsigned integer: '" + env +
                                  "'");
        }
    }
    return fallback;
}

inline Cell parse_cell(const std::string& text, const char* flag) {
    std::size_t x = 0, y = 0;
    char comma = 0;
    std::istringstream in(text);
    if (!(in >> x >> comma >> y) || comma != ',' || !in.eof())
        throw ValidationError(std::string(flag) + " expects x,y but got '" + text + "'");
    return {x, y};
}

struct Options {
    int verbosity = 1;

    struct {
        std::size_t width = 10, height = 10;
        std::string goal = "4,4";
        double reward = 10.0;
        double delta = 0.5;
        std::string initial = "uniform-all";
        std::string start = "0,0";
        std::string output;
    } grid;

    struct {
        std::string mdp, init_q, output, policy_out, curve_out;
        LearnParams learn;
        bool no_terminate = false;
        std::optional<std::uint64_t> seed;
    } train;

    struct {
        std::string mdp_a, mdp_b, policy_a, policy_b, increments_csv;
        std::size_t horizon = 8;
        bool oracle_check = false;
        std::size_t max_layer = CkOptions{}.max_layer_entries;
        unsigned threads = 1;
    } distance;

    struct {
        std::string config, output, plot_data;
        std::optional<unsigned> jobs;
        std::optional<std::uint64_t> seed;
    } experiment;

    struct {
        std::string results, plot_data;
    } report;
};

// Per-group summary used by `ck report`.
inline std::string report_text(const std::vector<ExperimentRecord>& records) {
    std::ostringstream os;
    os << std::setprecision(6);
    std::size_t failed = 0;
    for (const auto& r : records) failed += r.error.empty() ? 0 : 1;
    os << "records: " << records.size() << " (" << failed << " with errors)\n";

    struct Group {
        const char* name;
        std::function<bool(const ExperimentRecord&)> keep;
    };
    const std::vector<Group> groups = {
        {"green (delta < 1/2)", [](const ExperimentRecord& r) { return r.green(); }},
        {"red (delta >= 1/2)", [](const ExperimentRecord& r) { return !r.green(); }},
        {"all", [](const ExperimentRecord&) { return true; }},
    };
    for (const auto& g : groups) {
        std::size_t n = 0;
        double sum_d = 0, sum_j = 0, min_j = std::numeric_limits<double>::infinity();
        double max_j = -min_j;
        for (const auto& r : records) {
            if (!r.error.empty() || !g.keep(r)) continue;
            ++n;
            sum_d += r.ck_distance;
            sum_j += r.jumpstart;
            min_j = std::min(min_j, r.jumpstart);
            max_j = std::max(max_j, r.jumpstart);
        }
        os << g.name << ": n=" << n;
        if (n > 0)
            os << " mean_distance=" << sum_d / n << " mean_jumpstart=" << sum_j / n
               << " min_jumpstart=" << min_j << " max_jumpstart=" << max_j;
        try {
            const Correlation c = correlation(records, g.keep);
            os << " pearson=" << c.pearson << " spearman=" << c.spearman;
        } catch (const std::exception& e) {
            os << " correlation: " << e.what();
        }
        os << "\n";
    }
    return os.str();
}

namespace detail {

inline void log_config(std::ostream& err, const Options& o, const std::string& what,
                       const json& resolved) {
    if (o.verbosity > 0) err << "[ck] " << what << " resolved configuration: " << resolved.dump()
                             << "\n";
}

inline int run_gridworld(const Options& o, std::ostream& out, std::ostream& err) {
    GridSpec g;
    g.width = o.grid.width;
    g.height = o.grid.height;
    g.goal = parse_cell(o.grid.goal, "--goal");
    g.goal_reward = o.grid.reward;
    g.delta = o.grid.delta;
    g.initial_mode = initial_mode_from_string(o.grid.initial);
    g.initial_cell = parse_cell(o.grid.start, "--start");
    log_config(err, o, "gridworld", to_json(g));
    const Mdp m = make_gridworld(g);
    if (o.grid.output.empty() || o.grid.output == "-")
        out << to_json(m).dump(1) << "\n";
    else
        save_mdp(o.grid.output, m);
    return kOk;
}

inline int run_train(const Options& o, std::ostream& out, std::ostream& err) {
    const Mdp m = load_mdp(o.train.mdp);
    QTable q0 = QTable::zeros_like(m);
    if (!o.train.init_q.empty()) q0 = load_qtable(o.train.init_q);
    LearnParams params = o.train.learn;
    params.terminate_on_goal = !o.train.no_terminate;
    const std::uint64_t seed = o.train.seed ? *o.train.seed : default_seed(0);
    json resolved = to_json(params);
    resolved["seed"] = seed;
    resolved["mdp"] = o.train.mdp;
    resolved["init_q"] = o.train.init_q.empty() ? json(nullptr) : json(o.train.init_q);
    log_config(err, o, "train", resolved);

    const LearnResult r = q_learning(m, params, std::move(q0), Rng(seed));
    save_qtable(o.train.output, r.q);
    if (!o.train.policy_out.empty()) save_policy(o.train.policy_out, greedy_policy(r.q));
    if (!o.train.curve_out.empty()) {
        std::string csv = "episode,return\n";
        for (std::size_t i = 0; i < r.episode_returns.size(); ++i)
            csv += std::to_string(i) + "," + format_double(r.episode_returns[i]) + "\n";
        write_text(o.train.curve_out, csv);
    }
    double tail = 0.0;
    const std::size_t window = std::min<std::size_t>(100, r.episode_returns.size());
    for (std::size_t i = r.episode_returns.size() - window; i < r.episode_returns.size(); ++i)
        tail += r.episode_returns[i];
    out << "episodes: " << r.episode_returns.size() << "\n";
    if (window > 0) out << "mean return (last " << window << "): " << tail / window << "\n";
    return kOk;
}

inline int run_distance(const Options& o, std::ostream& out, std::ostream& err) {
    const Mdp a = load_mdp(o.distance.mdp_a);
    const Mdp b = load_mdp(o.distance.mdp_b);
    const Policy p = load_policy(o.distance.policy_a);
    const Policy q = load_policy(o.distance.policy_b);
    CkOptions opts;
    opts.max_layer_entries = o.distance.max_layer;
    opts.threads = o.distance.threads;
    log_config(err, o, "distance",
               {{"mdp_a", o.distance.mdp_a},
                {"mdp_b", o.distance.mdp_b},
                {"policy_a", o.distance.policy_a},
                {"policy_b", o.distance.policy_b},
                {"horizon", o.distance.horizon},
                {"max_layer_entries", opts.max_layer_entries},
                {"threads", opts.threads}});

    const CkResult r = ck_distance_between_mdps(a, b, p, q, o.distance.horizon, opts);
    out << std::setprecision(17);
    out << "value: " << r.value << "\n";
    out << "truncation_bound: " << r.truncation_bound << "\n";
    out << "horizon: " << r.horizon << "\n";
    out << "level,increment,overlap_before,overlap_after,layer_size\n";
    for (std::size_t k = 0; k < r.increments.size(); ++k)
        out << k << "," << r.increments[k] << "," << r.overlaps[k] << "," << r.overlaps[k + 1]
            << "," << r.layer_sizes[k] << "\n";

    if (!o.distance.increments_csv.empty()) {
        std::string csv = "level,increment,overlap_before,overlap_after,layer_size\n";
        for (std::size_t k = 0; k < r.increments.size(); ++k)
            csv += std::to_string(k) + "," + format_double(r.increments[k]) + "," +
                   format_double(r.overlaps[k]) + "," + format_double(r.overlaps[k + 1]) + "," +
                   std::to_string(r.layer_sizes[k]) + "\n";
        write_text(o.distance.increments_csv, csv);
    }

    if (o.distance.oracle_check) {
        const auto pa = enumerate_distribution(induced_chain(a, p), o.distance.horizon);
        const auto pb = enumerate_distribution(induced_chain(b, q), o.distance.horizon);
        const double oracle = exact_ot_oracle(pa, pb, [](const auto& x, const auto& y) {
            return cantor_distance(x, y);
        });
        const double gap = std::abs(oracle - r.value);
        out << "oracle: " << oracle << "\n";
        out << "oracle_gap: " << gap << "\n";
        if (!(gap <= kMarginalTolerance)) {
            err << "ck: oracle check failed: |recursion - exact OT| = " << gap << " > 1e-9\n";
            return kOracleMismatch;
        }
        out << "oracle_check: pass\n";
    }
    return kOk;
}

inline int run_experiment_cmd(const Options& o, std::ostream& out, std::ostream& err) {
    json raw = parse_json(read_text(o.experiment.config), "config file '" + o.experiment.config + "'");
    if (raw.is_object() && !raw.contains("master_seed") && std::getenv(kSeedEnv))
        raw["master_seed"] = default_seed(0);
    ExperimentConfig cfg = config_from_json(raw);
    if (o.experiment.seed) cfg.master_seed = *o.experiment.seed;
    if (o.experiment.jobs) cfg.jobs = *o.experiment.jobs;

    json resolved = to_json(cfg);
    resolved["derived_seeds"] = {
        {"sources", derive_seed(cfg.master_seed, 0, stage::sources)}, {"per_source", json::array()}};
    for (std::size_t i = 0; i < cfg.n_sources; ++i) {
        const SourceSeeds s = source_seeds(cfg.master_seed, i);
        resolved["derived_seeds"]["per_source"].push_back({{"train", s.train}, {"eval", s.eval}});
    }
    log_config(err, o, "experiment", resolved);

    const auto records = run_experiment(cfg, [&](const ExperimentRecord& r) {
        if (o.verbosity > 1)
            err << "[ck] source " << r.source_id << " delta=" << r.delta
                << " distance=" << r.ck_distance << " jumpstart=" << r.jumpstart
                << (r.error.empty() ? "" : " error=" + r.error) << "\n";
    });
    write_text(o.experiment.output, results_csv(records));
    if (!o.experiment.plot_data.empty()) write_text(o.experiment.plot_data, scatter_csv(records));
    out << report_text(records);
    return kOk;
}

inline int run_report(const Options& o, std::ostream& out, std::ostream&) {
    const auto records = load_results(o.report.results);
    out << report_text(records);
    if (!o.report.plot_data.empty()) write_text(o.report.plot_data, scatter_csv(records));
    return kOk;
}

} // namespace detail

// Runs one `ck` invocation; args excludes the program name.
inline int parse_and_dispatch(const std::vector<std::string>& args, std::ostream& out,
                              std::ostream& err) {
    Options o;
    CLI::App app{"Cantor-Kantorovich distances between MDPs and transfer-learning experiments",
                 "ck"};
    app.set_version_flag("--version", std::string("ck ") + CK_VERSION_STRING);
    app.require_subcommand(1);
    int verbose = 0;
    bool quiet = false;
    app.add_flag("-v,--verbose", verbose, "More log output on stderr (repeatable)");
    app.add_flag("-q,--quiet", quiet, "No log output");

    auto* grid = app.add_subcommand("gridworld", "Write a slip grid-world MDP file");
    grid->add_option("--width", o.grid.width, "Grid width")->capture_default_str();
    grid->add_option("--height", o.grid.height, "Grid height")->capture_default_str();
    grid->add_option("--goal", o.grid.goal, "Goal cell x,y")->capture_default_str();
    grid->add_option("--reward", o.grid.reward, "Goal reward")->capture_default_str();
    grid->add_option("--delta", o.grid.delta, "Probability of the chosen direction")
        ->capture_default_str();
    grid->add_option("--initial", o.grid.initial,
                     "Initial distribution: uniform-all, uniform-non-goal or fixed-cell")
        ->capture_default_str();
    grid->add_option("--start", o.grid.start, "Start cell x,y for --initial fixed-cell")
        ->capture_default_str();
    grid->add_option("-o,--output", o.grid.output, "Output MDP file (stdout if omitted)");

    auto* train = app.add_subcommand("train", "Tabular Q-learning on an MDP file");
    train->add_option("--mdp", o.train.mdp, "MDP file")->required();
    train->add_option("--init-q", o.train.init_q, "Initial Q-table file (zeros if omitted)");
    train->add_option("--episodes", o.train.learn.episodes)->capture_default_str();
    train->add_option("--len", o.train.learn.episode_len, "Episode length")->capture_default_str();
    train->add_option("--alpha", o.train.learn.learning_rate, "Learning rate")
        ->capture_default_str();
    train->add_option("--gamma", o.train.learn.discount, "Discount factor")->capture_default_str();
    train->add_option("--epsilon", o.train.learn.epsilon, "Exploration rate")
        ->capture_default_str();
    train->add_flag("--no-terminate", o.train.no_terminate,
                    "Do not end episodes on entering a terminal state");
    train->add_option("--seed", o.train.seed, "RNG seed (default: $CK_SEED or 0)");
    train->add_option("-o,--output", o.train.output, "Output Q-table file")->required();
    train->add_option("--policy-out", o.train.policy_out, "Also write the greedy policy");
    train->add_option("--curve-out", o.train.curve_out, "Write per-episode returns as CSV");

    auto* dist = app.add_subcommand("distance", "Cantor-Kantorovich distance between two MDPs");
    dist->add_option("--mdp-a", o.distance.mdp_a)->required();
    dist->add_option("--mdp-b", o.distance.mdp_b)->required();
    dist->add_option("--policy-a", o.distance.policy_a)->required();
    dist->add_option("--policy-b", o.distance.policy_b)->required();
    dist->add_option("-N,--horizon", o.distance.horizon, "Trajectory length")->required();
    dist->add_flag("--oracle-check", o.distance.oracle_check,
                   "Cross-check against exact optimal transport (small instances only)");
    dist->add_option("--emit-increments", o.distance.increments_csv,
                     "Write per-level increments as CSV");
    dist->add_option("--max-layer", o.distance.max_layer, "Prefix layer size cap")
        ->capture_default_str();
    dist->add_option("--threads", o.distance.threads, "Workers for layer expansion")
        ->capture_default_str();

    auto* exp = app.add_subcommand("experiment", "Run the transfer-learning experiment");
    exp->add_option("--config", o.experiment.config, "Experiment config (JSON)")->required();
    exp->add_option("-o,--output", o.experiment.output, "Results CSV")->required();
    exp->add_option("--plot-data", o.experiment.plot_data, "Scatter data CSV");
    exp->add_option("--jobs", o.experiment.jobs, "Worker count (0 = all cores)");
    exp->add_option("--seed", o.experiment.seed, "Override master_seed");

    auto* rep = app.add_subcommand("report", "Summarize a results CSV");
    rep->add_option("results", o.report.results, "Results CSV")->required();
    rep->add_option("--plot-data", o.report.plot_data, "Scatter data CSV");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }
    o.verbosity = quiet ? 0 : 1 + verbose;

    try {
        if (grid->parsed()) return detail::run_gridworld(o, out, err);
        if (train->parsed()) return detail::run_train(o, out, err);
        if (dist->parsed()) return detail::run_distance(o, out, err);
        if (exp->parsed()) return detail::run_experiment_cmd(o, out, err);
        if (rep->parsed()) return detail::run_report(o, out, err);
    } catch (const FileError& e) {
        err << "ck: file error: " << e.what() << "\n";
        return kFileNotFound;
    } catch (const FormatError& e) {
        err << "ck: malformed input: " << e.what() << "\n";
        return kMalformedInput;
    } catch (const LayerCapExceeded& e) {
        err << "ck: resource limit: " << e.what() << "\n";
        return kLayerCap;
    } catch (const std::invalid_argument& e) {
        err << "ck: invalid input: " << e.what() << "\n";
        return kInvalidInput;
    } catch (const std::exception& e) {
        err << "ck: error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}

} // namespace ck::cli
