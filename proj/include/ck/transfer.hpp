#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ck/cantor_kantorovich.hpp"
#include "ck/gridworld.hpp"
#include "ck/qlearning.hpp"
#include "ck/rng.hpp"

namespace ck {

enum class Baseline { zero_q_greedy, uniform_random };

struct ExperimentConfig {
    GridSpec target{};  // delta = 1/2, goal (4,4), reward 10 on a 10x10 grid
    InitialMode distance_initial = InitialMode::uniform_all;
    InitialMode rl_initial = InitialMode::uniform_non_goal;
    std::size_t n_sources = 100;
    std::size_t horizon = 8;
    LearnParams learn{};
    std::size_t eval_episodes = 10000;
    std::size_t eval_episode_len = 100;
    std::optional<double> eval_discount;  // undiscounted returns when empty
    Baseline baseline = Baseline::zero_q_greedy;
    std::uint64_t master_seed = 2024;
    unsigned jobs = 1;  // 0 selects the hardware concurrency
    std::size_t max_layer_entries = CkOptions{}.max_layer_entries;
};

inline std::vector<std::string> validate_experiment(const ExperimentConfig& cfg) {
    std::vector<std::string> errors = validate_grid(cfg.target);
    for (auto& e : validate_learn_params(cfg.learn)) errors.push_back(std::move(e));
    if (cfg.n_sources == 0) errors.push_back("n_sources must be at least 1");
    if (cfg.horizon == 0) errors.push_back("horizon must be at least 1");
    if (cfg.eval_episodes == 0) errors.push_back("eval_episodes must be at least 1");
    if (cfg.eval_episode_len == 0) errors.push_back("eval_episode_len must be at least 1");
    if (cfg.eval_discount && !(*cfg.eval_discount >= 0.0 && *cfg.eval_discount <= 1.0))
        errors.push_back("eval_discount must lie in [0, 1]");
    if (cfg.max_layer_entries == 0) errors.push_back("max_layer_entries must be positive");
    return errors;
}

// Stream tags for per-source seeds: derive_seed(master_seed, source_id, tag).
namespace stage {
inline constexpr const char* sources = "sources";
inline constexpr const char* train = "train";
inline constexpr const char* eval = "eval";
} // namespace stage

struct SourceSeeds {
    std::uint64_t train;
    std::uint64_t eval;
};

inline SourceSeeds source_seeds(std::uint64_t master, std::size_t source_id) {
    return {derive_seed(master, source_id, stage::train),
            derive_seed(master, source_id, stage::eval)};
}

// Deltas of all sources, drawn in source_id order from one stream.
inline std::vector<double> experiment_deltas(const ExperimentConfig& cfg) {
    return sample_deltas(cfg.n_sources, Rng(derive_seed(cfg.master_seed, 0, stage::sources)));
}

struct ExperimentRecord {
    std::size_t source_id = 0;
    double delta = 0.0;
    double ck_distance = std::numeric_limits<double>::quiet_NaN();
    double jumpstart = std::numeric_limits<double>::quiet_NaN();
    double baseline_return = std::numeric_limits<double>::quiet_NaN();
    double transfer_return = std::numeric_limits<double>::quiet_NaN();
    double wall_time = 0.0;  // seconds
    std::string error;
    Policy policy;  // greedy policy of the source Q-table, used as p = q

    bool green() const { return delta < 0.5; }
    const char* group() const { return green() ? "green" : "red"; }
};

struct JumpstartResult {
    double jumpstart = 0.0;
    double baseline_return = 0.0;
    double transfer_return = 0.0;
};

// Initial performance on the target of the greedy policy of q_init, minus
// that of the no-transfer baseline. Both evaluations replay the same random
// stream. No learning update is made.
inline JumpstartResult jumpstart(const Mdp& target, const QTable& q_init,
                                 const EvalSettings& settings, Rng rng,
                                 Baseline baseline = Baseline::zero_q_greedy) {
    require_table_fits(target, q_init);
    JumpstartResult r;
    r.transfer_return = evaluate_policy(target, greedy_policy(q_init), settings, rng).mean;
    if (baseline == Baseline::zero_q_greedy)
        r.baseline_return =
            evaluate_policy(target, greedy_policy(QTable::zeros_like(target)), settings, rng).mean;
    else
        r.baseline_return = evaluate_uniform_random(target, settings, rng).mean;
    r.jumpstart = r.transfer_return - r.baseline_return;
    return r;
}

// The target in the two start-distribution variants used by the experiment.
struct TargetModels {
    Mdp for_distance;
    Mdp for_learning;
};

inline GridSpec with_initial(GridSpec g, InitialMode mode) {
    g.initial_mode = mode;
    return g;
}

inline TargetModels make_targets(const ExperimentConfig& cfg) {
    return {make_gridworld(with_initial(cfg.target, cfg.distance_initial)),
            make_gridworld(with_initial(cfg.target, cfg.rl_initial))};
}

inline EvalSettings eval_settings(const ExperimentConfig& cfg) {
    return {cfg.eval_episodes, cfg.eval_episode_len, cfg.learn.terminate_on_goal,
            cfg.eval_discount};
}

// One source: train on the source, fix p = q = greedy(Q*_S), measure the
// distance to the target, then the jumpstart of the transferred table.
// Depends only on (cfg, targets, source_id, delta).
inline ExperimentRecord run_source(const ExperimentConfig& cfg, const TargetModels& targets,
                                   std::size_t source_id, double delta) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentRecord rec;
    rec.source_id = source_id;
    rec.delta = delta;
    const SourceSeeds seeds = source_seeds(cfg.master_seed, source_id);
    try {
        GridSpec spec = cfg.target;
        spec.delta = delta;
        const Mdp source_rl = make_gridworld(with_initial(spec, cfg.rl_initial));
        const Mdp source_dist = make_gridworld(with_initial(spec, cfg.distance_initial));

        LearnResult learned =
            q_learning(source_rl, cfg.learn, QTable::zeros_like(source_rl), Rng(seeds.train));
        rec.policy = greedy_policy(learned.q);

        try {
            CkOptions opts;
            opts.max_layer_entries = cfg.max_layer_entries;
            rec.ck_distance = ck_distance_between_mdps(targets.for_distance, source_dist,
                                                       rec.policy, rec.policy, cfg.horizon, opts)
                                  .value;
        } catch (const std::exception& e) {
            rec.error = std::string("distance: ") + e.what();
        }

        const JumpstartResult js = jumpstart(targets.for_learning, learned.q, eval_settings(cfg),
                                             Rng(seeds.eval), cfg.baseline);
        rec.jumpstart = js.jumpstart;
        rec.baseline_return = js.baseline_return;
        rec.transfer_return = js.transfer_return;
    } catch (const std::exception& e) {
        if (!rec.error.empty()) rec.error += "; ";
        rec.error += e.what();
    }
    rec.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

inline unsigned resolve_jobs(unsigned jobs) {
    if (jobs != 0) return jobs;
    return std::max(1u, std::thread::hardware_concurrency());
}

using ProgressCallback = std::function<void(const ExperimentRecord&)>;

// All sources, one record each, in source_id order. Sources are processed by
// a pool of cfg.jobs workers; each task shares only read-only inputs.
inline std::vector<ExperimentRecord> run_experiment(const ExperimentConfig& cfg,
                                                    const ProgressCallback& progress = {}) {
    if (auto errors = validate_experiment(cfg); !errors.empty())
        throw ValidationError("invalid experiment config: " + errors.front());
    const TargetModels targets = make_targets(cfg);
    const std::vector<double> deltas = experiment_deltas(cfg);
    std::vector<ExperimentRecord> records(cfg.n_sources);

    const unsigned workers =
        std::min<unsigned>(resolve_jobs(cfg.jobs), static_cast<unsigned>(cfg.n_sources));
    std::atomic<std::size_t> next{0};
    std::mutex progress_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < cfg.n_sources; i = next++) {
            records[i] = run_source(cfg, targets, i, deltas[i]);
            if (progress) {
                std::lock_guard lock(progress_mutex);
                progress(records[i]);
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    return records;
}

struct DegenerateSeries : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct Correlation {
    double pearson = 0.0;
    double spearman = 0.0;
    std::size_t count = 0;
};

// 1-based ranks; tied values share the average of their ranks.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw DegenerateSeries("degenerate series");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline Correlation correlation(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw DimensionError("correlation: series lengths differ");
    if (x.size() < 3)
        throw DegenerateSeries("degenerate series: need at least 3 points, got " +
                               std::to_string(x.size()));
    const auto constant = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
    };
    if (constant(x) || constant(y)) throw DegenerateSeries("degenerate series");
    return {pearson(x, y), pearson(average_ranks(x), average_ranks(y)), x.size()};
}

// Correlation of (ck_distance, jumpstart) over the records selected by `keep`.
// Records carrying an error are skipped.
template <class Predicate>
Correlation correlation(const std::vector<ExperimentRecord>& records, Predicate&& keep) {
    std::vector<double> x, y;
    for (const auto& r : records) {
        if (!r.error.empty() || !keep(r)) continue;
        x.push_back(r.ck_distance);
        y.push_back(r.jumpstart);
    }
    return correlation(x, y);
}

} // namespace ck
