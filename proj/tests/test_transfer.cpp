#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "ck/transfer.hpp"
#include "support/oracles.hpp"

using namespace ck;

namespace {

// Small and fast: 5x5 grid, short training and evaluation.
ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.target.width = cfg.target.height = 5;
    cfg.target.goal = {2, 2};
    cfg.n_sources = 6;
    cfg.horizon = 5;
    cfg.learn.episodes = 200;
    cfg.learn.episode_len = 40;
    cfg.eval_episodes = 200;
    cfg.eval_episode_len = 40;
    cfg.master_seed = 99;
    return cfg;
}

EvalSettings eval(std::size_t episodes) { return {episodes, 100, true, {}}; }

Mdp rl_target() {
    GridSpec g;
    g.initial_mode = InitialMode::uniform_non_goal;
    return make_gridworld(g);
}

} // namespace

TEST(Jumpstart, ZeroTableIsExactlyZero) {
    const Mdp m = rl_target();
    const JumpstartResult r = jumpstart(m, QTable::zeros_like(m), eval(2000), Rng(3));
    EXPECT_EQ(r.jumpstart, 0.0);
    EXPECT_EQ(r.baseline_return, r.transfer_return);
}

TEST(Jumpstart, OptimalTableIsPositive) {
    const Mdp m = rl_target();
    const QTable optimal = oracles::value_iteration(m, 0.95, true);
    const JumpstartResult r = jumpstart(m, optimal, eval(2000), Rng(4));
    EXPECT_GT(r.jumpstart, 0.0);
    EXPECT_EQ(r.jumpstart, r.transfer_return - r.baseline_return);
}

TEST(Jumpstart, AdversarialTableIsNegative) {
    // greedy action is the worst one under the target's optimal values
    GridSpec g;
    g.delta = 0.9;
    g.initial_mode = InitialMode::uniform_non_goal;
    const Mdp m = make_gridworld(g);
    const QTable optimal = oracles::value_iteration(m, 0.95, true);
    QTable adversarial = QTable::zeros_like(m);
    for (StateIndex s = 0; s < m.n_states; ++s) {
        const ActionIndex worst = static_cast<ActionIndex>(
            std::min_element(optimal.row(s).begin(), optimal.row(s).end()) -
            optimal.row(s).begin());
        adversarial(s, worst) = 1.0;
    }
    const JumpstartResult r = jumpstart(m, adversarial, eval(2000), Rng(5));
    EXPECT_LT(r.jumpstart, 0.0);
}

TEST(Jumpstart, UniformRandomBaseline) {
    const Mdp m = rl_target();
    const JumpstartResult r =
        jumpstart(m, QTable::zeros_like(m), eval(500), Rng(6), Baseline::uniform_random);
    EXPECT_EQ(r.jumpstart, r.transfer_return - r.baseline_return);
    EXPECT_GT(r.baseline_return, 0.0);
}

TEST(Jumpstart, RejectsWrongShape) {
    EXPECT_THROW(jumpstart(rl_target(), QTable(4, 4), eval(10), Rng(1)), DimensionError);
}

TEST(Correlation, PerfectLine) {
    const std::vector<double> x{0, 1, 2, 3, 4.5};
    std::vector<double> y;
    for (double v : x) y.push_back(-2 * v + 3);
    const Correlation c = correlation(x, y);
    EXPECT_NEAR(c.pearson, -1.0, 1e-12);
    EXPECT_NEAR(c.spearman, -1.0, 1e-12);
    EXPECT_EQ(c.count, 5u);
}

TEST(Correlation, SpearmanByHand) {
    const Correlation c = correlation({1, 2, 3}, {3, 1, 2});
    EXPECT_NEAR(c.spearman, -0.5, 1e-12);
}

TEST(Correlation, TiesShareAverageRank) {
    EXPECT_EQ(average_ranks({5, 1, 5, 2}), (std::vector<double>{3.5, 1, 3.5, 2}));
}

TEST(Correlation, DegenerateSeriesThrows) {
    EXPECT_THROW(correlation({1, 2, 3}, {4, 4, 4}), DegenerateSeries);
    EXPECT_THROW(correlation({1, 2}, {1, 2}), DegenerateSeries);
    try {
        correlation({1, 2, 3}, {4, 4, 4});
    } catch (const DegenerateSeries& e) {
        EXPECT_NE(std::string(e.what()).find("degenerate series"), std::string::npos);
    }
}

TEST(Correlation, RecordsSkipErrors) {
    std::vector<ExperimentRecord> recs(4);
    for (std::size_t i = 0; i < 4; ++i) {
        recs[i].delta = 0.1;
        recs[i].ck_distance = static_cast<double>(i);
        recs[i].jumpstart = static_cast<double>(10 - i);
    }
    recs[3].error = "distance: cap";
    recs[3].jumpstart = 100;
    const Correlation c = correlation(recs, [](const ExperimentRecord& r) { return r.green(); });
    EXPECT_EQ(c.count, 3u);
    EXPECT_NEAR(c.pearson, -1.0, 1e-12);
}

TEST(Groups, PartitionAtOneHalf) {
    ExperimentRecord r;
    r.delta = 0.4999;
    EXPECT_STREQ(r.group(), "green");
    r.delta = 0.5;
    EXPECT_STREQ(r.group(), "red");
}

TEST(RunSource, TargetDynamicsGiveZeroDistance) {
    const ExperimentConfig cfg = small_config();
    const ExperimentRecord r = run_source(cfg, make_targets(cfg), 0, 0.5);
    EXPECT_TRUE(r.error.empty()) << r.error;
    EXPECT_EQ(r.ck_distance, 0.0);
}

TEST(RunSource, LayerCapBecomesErrorRecord) {
    ExperimentConfig cfg = small_config();
    cfg.max_layer_entries = 10;
    const ExperimentRecord r = run_source(cfg, make_targets(cfg), 1, 0.3);
    EXPECT_NE(r.error.find("distance"), std::string::npos);
    EXPECT_TRUE(std::isnan(r.ck_distance));
    EXPECT_FALSE(std::isnan(r.jumpstart));
}

TEST(RunExperiment, RecordInvariants) {
    const ExperimentConfig cfg = small_config();
    const auto records = run_experiment(cfg);
    ASSERT_EQ(records.size(), cfg.n_sources);
    const Mdp target = make_targets(cfg).for_distance;
    const auto deltas = experiment_deltas(cfg);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        ASSERT_TRUE(r.error.empty()) << r.error;
        EXPECT_EQ(r.source_id, i);
        EXPECT_EQ(r.delta, deltas[i]);
        EXPECT_GE(r.ck_distance, 0.0);
        EXPECT_EQ(r.jumpstart, r.transfer_return - r.baseline_return);

        GridSpec spec = with_initial(cfg.target, cfg.distance_initial);
        spec.delta = r.delta;
        const double again =
            ck_distance_between_mdps(target, make_gridworld(spec), r.policy, r.policy, cfg.horizon)
                .value;
        EXPECT_EQ(again, r.ck_distance);
    }
}

TEST(RunExperiment, OrderAndThreadInvariance) {
    ExperimentConfig cfg = small_config();
    const auto serial = run_experiment(cfg);
    cfg.jobs = 3;
    const auto parallel = run_experiment(cfg);
    const TargetModels targets = make_targets(cfg);
    const auto deltas = experiment_deltas(cfg);
    ASSERT_EQ(serial.size(), parallel.size());
    // reverse order, one at a time
    for (std::size_t k = serial.size(); k-- > 0;) {
        const ExperimentRecord alone = run_source(cfg, targets, k, deltas[k]);
        for (const auto* r : {&parallel[k], &alone}) {
            EXPECT_EQ(r->delta, serial[k].delta);
            EXPECT_EQ(r->ck_distance, serial[k].ck_distance);
            EXPECT_EQ(r->jumpstart, serial[k].jumpstart);
            EXPECT_EQ(r->policy, serial[k].policy);
        }
    }
}

TEST(RunExperiment, SeedChangesResults) {
    ExperimentConfig cfg = small_config();
    const auto a = run_experiment(cfg);
    cfg.master_seed = 100;
    const auto b = run_experiment(cfg);
    EXPECT_NE(a[0].delta, b[0].delta);
}

TEST(RunExperiment, RejectsInvalidConfig) {
    ExperimentConfig cfg = small_config();
    cfg.n_sources = 0;
    EXPECT_THROW(run_experiment(cfg), ValidationError);
}

TEST(SourceSeeds, DependOnlyOnIdAndMaster) {
    EXPECT_EQ(source_seeds(7, 3).train, derive_seed(7, 3, "train"));
    EXPECT_EQ(source_seeds(7, 3).eval, derive_seed(7, 3, "eval"));
    EXPECT_NE(source_seeds(7, 3).train, source_seeds(7, 3).eval);
}

constexpr double kPinnedDistance = 0.125621271875;

// Pinned output of the full pipeline on the default 10x10 target for one
// source. Guards against silent changes to sampling, learning or the distance.
TEST(Regression, TenByTenSourceAtPointNine) {
    ExperimentConfig cfg;
    cfg.learn.episodes = 300;
    cfg.eval_episodes = 500;
    cfg.master_seed = 2024;
    const ExperimentRecord r = run_source(cfg, make_targets(cfg), 0, 0.9);
    ASSERT_TRUE(r.error.empty()) << r.error;
    EXPECT_NEAR(r.ck_distance, kPinnedDistance, 1e-12);
}
