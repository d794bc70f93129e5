#pragma once

// File formats.
//
//   MDP      JSON object, see docs/formats.md
//   policy   JSON array [state] of action indices
//   Q-table  JSON array [state][action]
//   config   JSON object mirroring ExperimentConfig
//   results  CSV with the fixed header kResultsHeader

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "ck/gridworld.hpp"
#include "ck/mdp.hpp"
#include "ck/qlearning.hpp"
#include "ck/transfer.hpp"

namespace ck {

using json = nlohmann::json;

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kMdpFormatVersion = 1;
inline constexpr int kConfigFormatVersion = 1;

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw FileError("failed writing '" + path + "'");
}

inline json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError("malformed " + what + ": " + e.what());
    }
}

// ---- MDP -------------------------------------------------------------------

inline json to_json(const Mdp& m) {
    json kernel = json::array();
    for (ActionIndex a = 0; a < m.n_actions; ++a) {
        json rows = json::array();
        for (StateIndex s = 0; s < m.n_states; ++s) {
            auto r = m.row(a, s);
            rows.push_back(std::vector<double>(r.begin(), r.end()));
        }
        kernel.push_back(std::move(rows));
    }
    json j = {{"format_version", kMdpFormatVersion},
              {"n_states", m.n_states},
              {"n_actions", m.n_actions},
              {"kernel", std::move(kernel)},
              {"reward", m.reward},
              {"initial", m.initial}};
    if (!m.labels.empty()) j["labels"] = m.labels;
    if (!m.terminal.empty()) j["terminal"] = m.terminal;
    return j;
}

namespace detail {

template <class T>
T get_field(const json& j, const char* key, const std::string& what) {
    if (!j.contains(key)) throw FormatError(what + ": missing field '" + key + "'");
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>)
        if (!j.at(key).is_number_unsigned())
            throw FormatError(what + ": field '" + key + "' must be a non-negative integer");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(what + ": bad field '" + key + "': " + e.what());
    }
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known,
                           const std::string& what) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw FormatError(what + ": unknown field '" + it.key() + "'");
    }
}

} // namespace detail

// Structural problems raise FormatError; a well-formed file whose numbers
// violate the simplex constraints raises ValidationError.
inline Mdp mdp_from_json(const json& j) {
    const std::string what = "MDP";
    if (!j.is_object()) throw FormatError("MDP: expected a JSON object");
    detail::reject_unknown(j, {"format_version", "n_states", "n_actions", "kernel", "reward",
                               "initial", "labels", "terminal"},
                           what);
    if (j.contains("format_version") &&
        detail::get_field<int>(j, "format_version", what) != kMdpFormatVersion)
        throw FormatError("MDP: unsupported format_version");
    Mdp m;
    m.n_states = detail::get_field<std::size_t>(j, "n_states", what);
    m.n_actions = detail::get_field<std::size_t>(j, "n_actions", what);
    const auto kernel =
        detail::get_field<std::vector<std::vector<std::vector<double>>>>(j, "kernel", what);
    if (kernel.size() != m.n_actions)
        throw FormatError("MDP: kernel has " + std::to_string(kernel.size()) +
                          " action blocks, expected " + std::to_string(m.n_actions));
    m.kernel.reserve(m.n_actions * m.n_states * m.n_states);
    for (std::size_t a = 0; a < kernel.size(); ++a) {
        if (kernel[a].size() != m.n_states)
            throw FormatError("MDP: kernel[" + std::to_string(a) + "] has wrong row count");
        for (std::size_t s = 0; s < kernel[a].size(); ++s) {
            if (kernel[a][s].size() != m.n_states)
                throw FormatError("MDP: kernel[" + std::to_string(a) + "][" + std::to_string(s) +
                                  "] has wrong length");
            m.kernel.insert(m.kernel.end(), kernel[a][s].begin(), kernel[a][s].end());
        }
    }
    m.reward = detail::get_field<std::vector<double>>(j, "reward", what);
    m.initial = detail::get_field<std::vector<double>>(j, "initial", what);
    if (j.contains("labels")) m.labels = detail::get_field<std::vector<std::string>>(j, "labels", what);
    if (j.contains("terminal"))
        m.terminal = detail::get_field<std::vector<StateIndex>>(j, "terminal", what);
    require_valid(m);
    return m;
}

inline Mdp load_mdp(const std::string& path) {
    return mdp_from_json(parse_json(read_text(path), "MDP file '" + path + "'"));
}

inline void save_mdp(const std::string& path, const Mdp& m) {
    write_text(path, to_json(m).dump(1) + "\n");
}

// ---- policy / Q-table ------------------------------------------------------

inline json to_json(const Policy& p) { return p.action_of; }

inline Policy policy_from_json(const json& j) {
    if (!j.is_array()) throw FormatError("policy: expected a JSON array of action indices");
    Policy p;
    for (const auto& e : j) {
        if (!e.is_number_unsigned())
            throw FormatError("policy: entries must be non-negative integers, got " + e.dump());
        p.action_of.push_back(e.get<ActionIndex>());
    }
    return p;
}

inline Policy load_policy(const std::string& path) {
    return policy_from_json(parse_json(read_text(path), "policy file '" + path + "'"));
}

inline void save_policy(const std::string& path, const Policy& p) {
    write_text(path, to_json(p).dump() + "\n");
}

inline json to_json(const QTable& q) {
    json rows = json::array();
    for (StateIndex s = 0; s < q.n_states(); ++s) {
        auto r = q.row(s);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return rows;
}

inline QTable qtable_from_json(const json& j) {
    std::vector<std::vector<double>> rows;
    try {
        rows = j.get<std::vector<std::vector<double>>>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("Q-table: expected [state][action] numbers: ") + e.what());
    }
    if (rows.empty() || rows.front().empty()) throw FormatError("Q-table: empty table");
    QTable q(rows.size(), rows.front().size());
    for (StateIndex s = 0; s < rows.size(); ++s) {
        if (rows[s].size() != q.n_actions()) throw FormatError("Q-table: ragged rows");
        for (ActionIndex a = 0; a < q.n_actions(); ++a) {
            if (!std::isfinite(rows[s][a])) throw FormatError("Q-table: non-finite value");
            q(s, a) = rows[s][a];
        }
    }
    return q;
}

inline QTable load_qtable(const std::string& path) {
    return qtable_from_json(parse_json(read_text(path), "Q-table file '" + path + "'"));
}

inline void save_qtable(const std::string& path, const QTable& q) {
    write_text(path, to_json(q).dump(1) + "\n");
}

// ---- experiment config -----------------------------------------------------

inline const char* to_string(InitialMode m) {
    switch (m) {
    case InitialMode::uniform_non_goal: return "uniform-non-goal";
    case InitialMode::fixed_cell: return "fixed-cell";
    case InitialMode::uniform_all: return "uniform-all";
    }
    return "?";
}

inline InitialMode initial_mode_from_string(const std::string& s) {
    if (s == "uniform-non-goal") return InitialMode::uniform_non_goal;
    if (s == "fixed-cell") return InitialMode::fixed_cell;
    if (s == "uniform-all") return InitialMode::uniform_all;
    throw FormatError("unknown initial mode '" + s +
                      "' (expected uniform-all, uniform-non-goal or fixed-cell)");
}

inline const char* to_string(Baseline b) {
    return b == Baseline::zero_q_greedy ? "zero-q-greedy" : "uniform-random";
}

inline Baseline baseline_from_string(const std::string& s) {
    if (s == "zero-q-greedy") return Baseline::zero_q_greedy;
    if (s == "uniform-random") return Baseline::uniform_random;
    throw FormatError("unknown baseline '" + s + "' (expected zero-q-greedy or uniform-random)");
}

inline json to_json(const GridSpec& g) {
    return {{"width", g.width},
            {"height", g.height},
            {"goal", {g.goal.x, g.goal.y}},
            {"goal_reward", g.goal_reward},
            {"delta", g.delta},
            {"initial_mode", to_string(g.initial_mode)},
            {"initial_cell", {g.initial_cell.x, g.initial_cell.y}}};
}

inline Cell cell_from_json(const json& j, const std::string& what) {
    try {
        auto v = j.get<std::vector<std::size_t>>();
        if (v.size() == 2) return {v[0], v[1]};
    } catch (const json::exception&) {
    }
    throw FormatError(what + ": expected [x, y]");
}

inline GridSpec grid_from_json(const json& j) {
    const std::string what = "grid";
    if (!j.is_object()) throw FormatError("grid: expected a JSON object");
    detail::reject_unknown(
        j, {"width", "height", "goal", "goal_reward", "delta", "initial_mode", "initial_cell"},
        what);
    GridSpec g;
    if (j.contains("width")) g.width = detail::get_field<std::size_t>(j, "width", what);
    if (j.contains("height")) g.height = detail::get_field<std::size_t>(j, "height", what);
    if (j.contains("goal")) g.goal = cell_from_json(j["goal"], "grid.goal");
    if (j.contains("goal_reward")) g.goal_reward = detail::get_field<double>(j, "goal_reward", what);
    if (j.contains("delta")) g.delta = detail::get_field<double>(j, "delta", what);
    if (j.contains("initial_mode"))
        g.initial_mode =
            initial_mode_from_string(detail::get_field<std::string>(j, "initial_mode", what));
    if (j.contains("initial_cell")) g.initial_cell = cell_from_json(j["initial_cell"], "grid.initial_cell");
    return g;
}

inline json to_json(const LearnParams& p) {
    return {{"episodes", p.episodes},           {"episode_len", p.episode_len},
            {"learning_rate", p.learning_rate}, {"discount", p.discount},
            {"epsilon", p.epsilon},             {"terminate_on_goal", p.terminate_on_goal}};
}

inline LearnParams learn_from_json(const json& j) {
    const std::string what = "learn";
    if (!j.is_object()) throw FormatError("learn: expected a JSON object");
    detail::reject_unknown(j, {"episodes", "episode_len", "learning_rate", "discount", "epsilon",
                               "terminate_on_goal"},
                           what);
    LearnParams p;
    if (j.contains("episodes")) p.episodes = detail::get_field<std::size_t>(j, "episodes", what);
    if (j.contains("episode_len"))
        p.episode_len = detail::get_field<std::size_t>(j, "episode_len", what);
    if (j.contains("learning_rate"))
        p.learning_rate = detail::get_field<double>(j, "learning_rate", what);
    if (j.contains("discount")) p.discount = detail::get_field<double>(j, "discount", what);
    if (j.contains("epsilon")) p.epsilon = detail::get_field<double>(j, "epsilon", what);
    if (j.contains("terminate_on_goal"))
        p.terminate_on_goal = detail::get_field<bool>(j, "terminate_on_goal", what);
    return p;
}

inline json to_json(const ExperimentConfig& c) {
    return {{"format_version", kConfigFormatVersion},
            {"target", to_json(c.target)},
            {"distance_initial", to_string(c.distance_initial)},
            {"rl_initial", to_string(c.rl_initial)},
            {"n_sources", c.n_sources},
            {"horizon", c.horizon},
            {"learn", to_json(c.learn)},
            {"eval_episodes", c.eval_episodes},
            {"eval_episode_len", c.eval_episode_len},
            {"eval_discount", c.eval_discount ? json(*c.eval_discount) : json(nullptr)},
            {"baseline", to_string(c.baseline)},
            {"master_seed", c.master_seed},
            {"jobs", c.jobs},
            {"max_layer_entries", c.max_layer_entries}};
}

// Missing fields keep their defaults; unknown fields are rejected.
inline ExperimentConfig config_from_json(const json& j) {
    const std::string what = "config";
    if (!j.is_object()) throw FormatError("config: expected a JSON object");
    detail::reject_unknown(j, {"format_version", "target", "distance_initial", "rl_initial",
                               "n_sources", "horizon", "learn", "eval_episodes",
                               "eval_episode_len", "eval_discount", "baseline", "master_seed",
                               "jobs", "max_layer_entries", "comment"},
                           what);
    if (j.contains("format_version") &&
        detail::get_field<int>(j, "format_version", what) != kConfigFormatVersion)
        throw FormatError("config: unsupported format_version");
    ExperimentConfig c;
    if (j.contains("target")) c.target = grid_from_json(j["target"]);
    if (j.contains("distance_initial"))
        c.distance_initial =
            initial_mode_from_string(detail::get_field<std::string>(j, "distance_initial", what));
    if (j.contains("rl_initial"))
        c.rl_initial = initial_mode_from_string(detail::get_field<std::string>(j, "rl_initial", what));
    if (j.contains("n_sources")) c.n_sources = detail::get_field<std::size_t>(j, "n_sources", what);
    if (j.contains("horizon")) c.horizon = detail::get_field<std::size_t>(j, "horizon", what);
    if (j.contains("learn")) c.learn = learn_from_json(j["learn"]);
    if (j.contains("eval_episodes"))
        c.eval_episodes = detail::get_field<std::size_t>(j, "eval_episodes", what);
    if (j.contains("eval_episode_len"))
        c.eval_episode_len = detail::get_field<std::size_t>(j, "eval_episode_len", what);
    if (j.contains("eval_discount") && !j["eval_discount"].is_null())
        c.eval_discount = detail::get_field<double>(j, "eval_discount", what);
    if (j.contains("baseline"))
        c.baseline = baseline_from_string(detail::get_field<std::string>(j, "baseline", what));
    if (j.contains("master_seed"))
        c.master_seed = detail::get_field<std::uint64_t>(j, "master_seed", what);
    if (j.contains("jobs")) c.jobs = detail::get_field<unsigned>(j, "jobs", what);
    if (j.contains("max_layer_entries"))
        c.max_layer_entries = detail::get_field<std::size_t>(j, "max_layer_entries", what);
    if (auto errors = validate_experiment(c); !errors.empty()) {
        std::string text;
        for (const auto& e : errors) text += (text.empty() ? "" : "; ") + e;
        throw ValidationError("invalid experiment config: " + text);
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    return config_from_json(parse_json(read_text(path), "config file '" + path + "'"));
}

// ---- results CSV -----------------------------------------------------------

inline constexpr const char* kResultsHeader =
    "source_id,delta,ck_distance,jumpstart,baseline_return,transfer_return,group,error";

// Shortest text that reads back to the same double; empty for NaN.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' || c == '\r' ? ' ' : c;
    }
    return out + "\"";
}

inline std::string results_csv(const std::vector<ExperimentRecord>& records) {
    std::string out = std::string(kResultsHeader) + "\n";
    for (const auto& r : records) {
        out += std::to_string(r.source_id) + "," + format_double(r.delta) + "," +
               format_double(r.ck_distance) + "," + format_double(r.jumpstart) + "," +
               format_double(r.baseline_return) + "," + format_double(r.transfer_return) + "," +
               r.group() + "," + csv_quote(r.error) + "\n";
    }
    return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else if (c != '\r') {
            fields.back() += c;
        }
    }
    return fields;
}

inline double parse_csv_double(const std::string& field, std::size_t line) {
    if (field.empty()) return std::numeric_limits<double>::quiet_NaN();
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end != field.c_str() + field.size())
        throw FormatError("results CSV line " + std::to_string(line) + ": bad number '" + field +
                          "'");
    return v;
}

} // namespace detail

// Reads what results_csv writes. The policy field of each record stays empty.
inline std::vector<ExperimentRecord> parse_results_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("results CSV: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kResultsHeader)
        throw FormatError("results CSV: unexpected header '" + line + "'");
    std::vector<ExperimentRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 8)
            throw FormatError("results CSV line " + std::to_string(line_no) + ": expected 8 fields");
        ExperimentRecord r;
        try {
            r.source_id = std::stoull(f[0]);
        } catch (const std::exception&) {
            throw FormatError("results CSV line " + std::to_string(line_no) + ": bad source_id");
        }
        r.delta = detail::parse_csv_double(f[1], line_no);
        r.ck_distance = detail::parse_csv_double(f[2], line_no);
        r.jumpstart = detail::parse_csv_double(f[3], line_no);
        r.baseline_return = detail::parse_csv_double(f[4], line_no);
        r.transfer_return = detail::parse_csv_double(f[5], line_no);
        if (f[6] != r.group())
            throw FormatError("results CSV line " + std::to_string(line_no) +
                              ": group does not match delta");
        r.error = f[7];
        records.push_back(std::move(r));
    }
    return records;
}

inline std::vector<ExperimentRecord> load_results(const std::string& path) {
    return parse_results_csv(read_text(path));
}

// Two-series scatter data: one row per successful record.
inline std::string scatter_csv(const std::vector<ExperimentRecord>& records) {
    std::string out = "series,ck_distance,jumpstart\n";
    for (const char* series : {"green", "red"})
        for (const auto& r : records)
            if (r.error.empty() && std::string(r.group()) == series)
                out += std::string(series) + "," + format_double(r.ck_distance) + "," +
                       format_double(r.jumpstart) + "\n";
    return out;
}

} // namespace ck
