#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ck/mdp.hpp"
#include "ck/rng.hpp"

namespace ck {

// Cell coordinates: x is the column, y the row. Cells are indexed row-major,
// index = y * width + x.
struct Cell {
    std::size_t x = 0;
    std::size_t y = 0;
    bool operator==(const Cell&) const = default;
};

enum class InitialMode { uniform_non_goal, fixed_cell, uniform_all };

// Action order is fixed: left (x-1), right (x+1), up (y-1), down (y+1).
enum class Move : ActionIndex { left = 0, right = 1, up = 2, down = 3 };
inline constexpr std::size_t kGridActions = 4;
inline constexpr std::array<const char*, kGridActions> kMoveNames{"left", "right", "up", "down"};

struct GridSpec {
    std::size_t width = 10;
    std::size_t height = 10;
    Cell goal{4, 4};
    double goal_reward = 10.0;
    double delta = 0.5;  // probability of moving in the chosen direction
    InitialMode initial_mode = InitialMode::uniform_all;
    Cell initial_cell{0, 0};  // used when initial_mode == fixed_cell
};

inline std::vector<std::string> validate_grid(const GridSpec& g) {
    std::vector<std::string> errors;
    if (g.width == 0 || g.height == 0) errors.push_back("grid dimensions must be positive");
    if (g.goal.x >= g.width || g.goal.y >= g.height) errors.push_back("goal lies outside the grid");
    if (!(g.delta >= 0.0 && g.delta <= 1.0))
        errors.push_back("delta must lie in [0, 1], got " + detail::format_number(g.delta));
    if (!std::isfinite(g.goal_reward)) errors.push_back("goal reward must be finite");
    if (g.initial_mode == InitialMode::fixed_cell &&
        (g.initial_cell.x >= g.width || g.initial_cell.y >= g.height))
        errors.push_back("initial cell lies outside the grid");
    if (g.initial_mode == InitialMode::uniform_non_goal && g.width * g.height < 2)
        errors.push_back("uniform-non-goal start needs at least two cells");
    return errors;
}

inline StateIndex cell_index(const GridSpec& g, Cell c) { return c.y * g.width + c.x; }
inline Cell cell_of(const GridSpec& g, StateIndex s) { return {s % g.width, s / g.width}; }

// Destination of a move; off-grid moves stay in place.
inline Cell step_cell(const GridSpec& g, Cell c, Move m) {
    switch (m) {
    case Move::left: return c.x > 0 ? Cell{c.x - 1, c.y} : c;
    case Move::right: return c.x + 1 < g.width ? Cell{c.x + 1, c.y} : c;
    case Move::up: return c.y > 0 ? Cell{c.x, c.y - 1} : c;
    case Move::down: return c.y + 1 < g.height ? Cell{c.x, c.y + 1} : c;
    }
    return c;
}

inline Mdp make_gridworld(const GridSpec& g) {
    if (auto errors = validate_grid(g); !errors.empty()) {
        std::string text;
        for (const auto& e : errors) text += (text.empty() ? "" : "; ") + e;
        throw ValidationError("invalid grid: " + text);
    }
    const std::size_t n = g.width * g.height;
    Mdp m;
    m.n_states = n;
    m.n_actions = kGridActions;
    m.kernel.assign(kGridActions * n * n, 0.0);
    const double other = (1.0 - g.delta) / 3.0;
    for (ActionIndex a = 0; a < kGridActions; ++a) {
        for (StateIndex s = 0; s < n; ++s) {
            auto row = m.row(a, s);
            const Cell c = cell_of(g, s);
            for (ActionIndex dir = 0; dir < kGridActions; ++dir) {
                const double w = dir == a ? g.delta : other;
                row[cell_index(g, step_cell(g, c, static_cast<Move>(dir)))] += w;
            }
        }
    }
    m.reward.assign(n, 0.0);
    const StateIndex goal = cell_index(g, g.goal);
    m.reward[goal] = g.goal_reward;
    m.terminal = {goal};

    m.initial.assign(n, 0.0);
    switch (g.initial_mode) {
    case InitialMode::uniform_all:
        m.initial.assign(n, 1.0 / static_cast<double>(n));
        break;
    case InitialMode::uniform_non_goal:
        for (StateIndex s = 0; s < n; ++s)
            if (s != goal) m.initial[s] = 1.0 / static_cast<double>(n - 1);
        break;
    case InitialMode::fixed_cell:
        m.initial[cell_index(g, g.initial_cell)] = 1.0;
        break;
    }

    m.labels.reserve(n);
    for (StateIndex s = 0; s < n; ++s) {
        const Cell c = cell_of(g, s);
        m.labels.push_back("(" + std::to_string(c.x) + "," + std::to_string(c.y) + ")");
    }
    return m;
}

struct SourceTask {
    double delta;
    Mdp mdp;
};

// `count` copies of `base` with delta ~ Uniform[0, 1), drawn in order.
inline std::vector<SourceTask> sample_sources(std::size_t count, const GridSpec& base, Rng rng) {
    if (count == 0) throw std::invalid_argument("sample_sources: count must be positive");
    std::vector<SourceTask> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        GridSpec spec = base;
        spec.delta = rng.uniform01();
        out.push_back({spec.delta, make_gridworld(spec)});
    }
    return out;
}

// Only the deltas of sample_sources, without building the MDPs.
inline std::vector<double> sample_deltas(std::size_t count, Rng rng) {
    std::vector<double> out(count);
    for (auto& d : out) d = rng.uniform01();
    return out;
}

} // namespace ck
