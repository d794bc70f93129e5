#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "ck/io.hpp"

using namespace ck;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("ck_io_" + name)).string();
}

json tiny_mdp_json() {
    return json::parse(R"({
        "format_version": 1, "n_states": 2, "n_actions": 1,
        "kernel": [[[0.25, 0.75], [1, 0]]],
        "reward": [0, 1], "initial": [1, 0]
    })");
}

} // namespace

TEST(MdpJson, RoundTripGridworld) {
    const Mdp m = make_gridworld(GridSpec{});
    const Mdp back = mdp_from_json(json::parse(to_json(m).dump()));
    EXPECT_EQ(back.kernel, m.kernel);
    EXPECT_EQ(back.reward, m.reward);
    EXPECT_EQ(back.initial, m.initial);
    EXPECT_EQ(back.labels, m.labels);
    EXPECT_EQ(back.terminal, m.terminal);
}

TEST(MdpJson, FileRoundTrip) {
    const std::string path = temp_path("mdp.json");
    const Mdp m = mdp_from_json(tiny_mdp_json());
    save_mdp(path, m);
    EXPECT_EQ(load_mdp(path).kernel, m.kernel);
    std::filesystem::remove(path);
}

TEST(MdpJson, StructuralErrorsAreFormatErrors) {
    json j = tiny_mdp_json();
    j["extra"] = 1;
    EXPECT_THROW(mdp_from_json(j), FormatError);

    j = tiny_mdp_json();
    j.erase("reward");
    EXPECT_THROW(mdp_from_json(j), FormatError);

    j = tiny_mdp_json();
    j["kernel"][0][1] = {1.0};
    EXPECT_THROW(mdp_from_json(j), FormatError);

    j = tiny_mdp_json();
    j["format_version"] = 2;
    EXPECT_THROW(mdp_from_json(j), FormatError);

    EXPECT_THROW(mdp_from_json(json::array()), FormatError);
    EXPECT_THROW(parse_json("{not json", "MDP"), FormatError);
}

TEST(MdpJson, NumericErrorsAreValidationErrors) {
    json j = tiny_mdp_json();
    j["kernel"][0][0] = {0.5, 0.4};
    EXPECT_THROW(mdp_from_json(j), ValidationError);
    j = tiny_mdp_json();
    j["initial"] = {1.0, 0.1};
    EXPECT_THROW(mdp_from_json(j), ValidationError);
}

TEST(MdpJson, MissingFile) {
    EXPECT_THROW(load_mdp("/nonexistent/dir/mdp.json"), FileError);
}

TEST(PolicyJson, RoundTrip) {
    const Policy p{{0, 3, 2, 1}};
    EXPECT_EQ(policy_from_json(to_json(p)), p);
    EXPECT_THROW(policy_from_json(json::parse(R"({"a": 1})")), FormatError);
    EXPECT_THROW(policy_from_json(json::parse("[0, -1]")), FormatError);
}

TEST(QTableJson, RoundTrip) {
    QTable q(3, 2);
    q(0, 1) = 0.1;
    q(2, 0) = -7.25;
    EXPECT_EQ(qtable_from_json(json::parse(to_json(q).dump())), q);
    EXPECT_THROW(qtable_from_json(json::parse("[[1, 2], [3]]")), FormatError);
    EXPECT_THROW(qtable_from_json(json::parse("[]")), FormatError);
}

TEST(ConfigJson, DefaultsAndOverrides) {
    const ExperimentConfig c = config_from_json(json::parse(R"({
        "comment": "small", "n_sources": 7, "learn": {"episodes": 12},
        "target": {"delta": 0.5, "goal": [1, 2]}, "eval_discount": null
    })"));
    EXPECT_EQ(c.n_sources, 7u);
    EXPECT_EQ(c.learn.episodes, 12u);
    EXPECT_EQ(c.learn.discount, 0.95);
    EXPECT_EQ(c.target.goal.x, 1u);
    EXPECT_EQ(c.target.goal.y, 2u);
    EXPECT_EQ(c.horizon, 8u);
    EXPECT_FALSE(c.eval_discount.has_value());
}

TEST(ConfigJson, RoundTrip) {
    ExperimentConfig c;
    c.eval_discount = 0.9;
    c.baseline = Baseline::uniform_random;
    c.rl_initial = InitialMode::uniform_all;
    const ExperimentConfig back = config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
}

TEST(ConfigJson, Rejections) {
    EXPECT_THROW(config_from_json(json::parse(R"({"n_source": 3})")), FormatError);
    EXPECT_THROW(config_from_json(json::parse(R"({"baseline": "none"})")), FormatError);
    EXPECT_THROW(config_from_json(json::parse(R"({"horizon": "eight"})")), FormatError);
    EXPECT_THROW(config_from_json(json::parse(R"({"target": {"delta": 2}})")), ValidationError);
    EXPECT_THROW(config_from_json(json::parse(R"({"learn": {"discount": 1}})")), ValidationError);
}

TEST(FormatDouble, ShortestRoundTrip) {
    for (double v : {0.1, 1.0 / 3, 1e-300, -2.5, 0.0, 123456789.125}) {
        const std::string s = format_double(v);
        EXPECT_EQ(std::strtod(s.c_str(), nullptr), v) << s;
    }
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(std::numeric_limits<double>::quiet_NaN()), "");
}

TEST(ResultsCsv, RoundTrip) {
    std::vector<ExperimentRecord> recs(3);
    recs[0] = {0, 0.25, 0.125, 1.5, 2.0, 3.5, 0.0, "", {}};
    recs[1] = {1, 0.75, 1.0 / 3, -0.1, 0.3, 0.2, 0.0, "", {}};
    recs[2].source_id = 2;
    recs[2].delta = 0.5;
    recs[2].jumpstart = 0.0;
    recs[2].error = "distance: layer at depth 8 exceeds cap, \"oops\"";
    const std::string text = results_csv(recs);
    EXPECT_EQ(text.substr(0, text.find('\n')), kResultsHeader);
    const auto back = parse_results_csv(text);
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back[i].source_id, recs[i].source_id);
        EXPECT_EQ(back[i].delta, recs[i].delta);
        EXPECT_EQ(back[i].jumpstart, recs[i].jumpstart);
        EXPECT_EQ(back[i].error, recs[i].error);
    }
    EXPECT_EQ(back[1].ck_distance, 1.0 / 3);
    EXPECT_TRUE(std::isnan(back[2].ck_distance));
    EXPECT_EQ(results_csv(back), text);
}

TEST(ResultsCsv, Rejections) {
    EXPECT_THROW(parse_results_csv(""), FormatError);
    EXPECT_THROW(parse_results_csv("a,b\n"), FormatError);
    const std::string head = std::string(kResultsHeader) + "\n";
    EXPECT_THROW(parse_results_csv(head + "0,0.2,0.1,1,1,2,red,\n"), FormatError);
    EXPECT_THROW(parse_results_csv(head + "0,0.2,x,1,1,2,green,\n"), FormatError);
    EXPECT_THROW(parse_results_csv(head + "0,0.2,0.1\n"), FormatError);
}

TEST(ScatterCsv, TwoSeriesWithoutErrors) {
    std::vector<ExperimentRecord> recs(3);
    recs[0].delta = 0.7;
    recs[0].ck_distance = 0.5;
    recs[0].jumpstart = 1;
    recs[1].delta = 0.2;
    recs[1].ck_distance = 0.25;
    recs[1].jumpstart = 2;
    recs[2].delta = 0.1;
    recs[2].error = "x";
    EXPECT_EQ(scatter_csv(recs), "series,ck_distance,jumpstart\ngreen,0.25,2\nred,0.5,1\n");
}
