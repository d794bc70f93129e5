#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ck/rng.hpp"

namespace ck {

inline constexpr double kSimplexTolerance = 1e-12;

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

using StateIndex = std::size_t;
using ActionIndex = std::size_t;

// Finite MDP with dense state/action indices.
//
// kernel is stored flat as [action][from][to]; reward is granted on entering
// a state. terminal lists states at which an episode may stop (used by the
// learning code when terminate_on_goal is set); it plays no part in the
// kernel or in distances.
struct Mdp {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<double> kernel;
    std::vector<double> reward;
    std::vector<double> initial;
    std::vector<std::string> labels;
    std::vector<StateIndex> terminal;

    std::span<const double> row(ActionIndex a, StateIndex s) const {
        return {kernel.data() + (a * n_states + s) * n_states, n_states};
    }
    std::span<double> row(ActionIndex a, StateIndex s) {
        return {kernel.data() + (a * n_states + s) * n_states, n_states};
    }

    bool is_terminal(StateIndex s) const {
        for (StateIndex t : terminal)
            if (t == s) return true;
        return false;
    }
};

// Deterministic stationary policy.
struct Policy {
    std::vector<ActionIndex> action_of;

    std::size_t size() const { return action_of.size(); }
    ActionIndex operator[](StateIndex s) const { return action_of[s]; }
    bool operator==(const Policy&) const = default;
};

struct MarkovChain {
    std::size_t n_states = 0;
    std::vector<double> transition; // [from][to]
    std::vector<double> initial;

    std::span<const double> row(StateIndex s) const {
        return {transition.data() + s * n_states, n_states};
    }
};

struct Trajectory {
    std::vector<StateIndex> states;
    double return_undiscounted = 0.0;
    double return_discounted = 0.0;

    std::size_t size() const { return states.size(); }
};

struct Violation {
    std::string location;
    std::string message;
};

using ValidationReport = std::vector<Violation>;

namespace detail {

inline std::string format_number(double v) {
    std::ostringstream os;
    os.precision(15);
    os << v;
    return os.str();
}

inline void check_simplex(std::span<const double> v, const std::string& where,
                          const char* what, ValidationReport& out) {
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i]))
            out.push_back({where + "[" + std::to_string(i) + "]", "non-finite entry"});
        else if (v[i] < 0.0)
            out.push_back({where + "[" + std::to_string(i) + "]",
                           "negative entry " + format_number(v[i])});
        sum += v[i];
    }
    if (!(std::abs(sum - 1.0) <= kSimplexTolerance))
        out.push_back({where, std::string(what) + " sum " + format_number(sum) + " != 1"});
}

} // namespace detail

inline ValidationReport validate_mdp(const Mdp& m) {
    ValidationReport out;
    if (m.n_states == 0) out.push_back({"n_states", "must be positive"});
    if (m.n_actions == 0) out.push_back({"n_actions", "must be positive"});
    const std::size_t n = m.n_states;
    if (m.kernel.size() != m.n_actions * n * n) {
        out.push_back({"kernel", "expected " + std::to_string(m.n_actions * n * n) +
                                     " entries, got " + std::to_string(m.kernel.size())});
    } else {
        for (ActionIndex a = 0; a < m.n_actions; ++a)
            for (StateIndex s = 0; s < n; ++s)
                detail::check_simplex(m.row(a, s),
                                      "kernel[" + std::to_string(a) + "][" + std::to_string(s) + "]",
                                      "row", out);
    }
    if (m.reward.size() != n) {
        out.push_back({"reward", "expected " + std::to_string(n) + " entries, got " +
                                     std::to_string(m.reward.size())});
    } else {
        for (StateIndex s = 0; s < n; ++s)
            if (!std::isfinite(m.reward[s]))
                out.push_back({"reward[" + std::to_string(s) + "]", "non-finite reward"});
    }
    if (m.initial.size() != n)
        out.push_back({"initial", "expected " + std::to_string(n) + " entries, got " +
                                      std::to_string(m.initial.size())});
    else
        detail::check_simplex(m.initial, "initial", "initial", out);
    if (!m.labels.empty() && m.labels.size() != n)
        out.push_back({"labels", "expected " + std::to_string(n) + " labels"});
    for (StateIndex t : m.terminal)
        if (t >= n) out.push_back({"terminal", "state " + std::to_string(t) + " out of range"});
    return out;
}

inline ValidationReport validate_chain(const MarkovChain& c) {
    ValidationReport out;
    const std::size_t n = c.n_states;
    if (n == 0) out.push_back({"n_states", "must be positive"});
    if (c.transition.size() != n * n) {
        out.push_back({"transition", "expected " + std::to_string(n * n) + " entries"});
    } else {
        for (StateIndex s = 0; s < n; ++s)
            detail::check_simplex(c.row(s), "transition[" + std::to_string(s) + "]", "row", out);
    }
    if (c.initial.size() != n)
        out.push_back({"initial", "expected " + std::to_string(n) + " entries"});
    else
        detail::check_simplex(c.initial, "initial", "initial", out);
    return out;
}

inline std::string describe(const ValidationReport& report) {
    std::string text;
    for (const auto& v : report) {
        if (!text.empty()) text += "; ";
        text += v.location + ": " + v.message;
    }
    return text;
}

inline void require_valid(const Mdp& m) {
    if (auto report = validate_mdp(m); !report.empty())
        throw ValidationError("invalid MDP: " + describe(report));
}

inline void require_valid(const MarkovChain& c) {
    if (auto report = validate_chain(c); !report.empty())
        throw ValidationError("invalid Markov chain: " + describe(report));
}

inline void require_policy_fits(const Mdp& m, const Policy& p) {
    if (p.size() != m.n_states)
        throw DimensionError("policy has " + std::to_string(p.size()) + " entries, MDP has " +
                             std::to_string(m.n_states) + " states");
    for (StateIndex s = 0; s < p.size(); ++s)
        if (p[s] >= m.n_actions)
            throw DimensionError("policy action " + std::to_string(p[s]) + " at state " +
                                 std::to_string(s) + " exceeds n_actions " +
                                 std::to_string(m.n_actions));
}

// Closed-loop chain: row s is kernel[p(s)][s].
inline MarkovChain induced_chain(const Mdp& m, const Policy& p) {
    require_policy_fits(m, p);
    MarkovChain c;
    c.n_states = m.n_states;
    c.transition.resize(m.n_states * m.n_states);
    for (StateIndex s = 0; s < m.n_states; ++s) {
        auto src = m.row(p[s], s);
        std::copy(src.begin(), src.end(), c.transition.begin() + s * m.n_states);
    }
    c.initial = m.initial;
    return c;
}

// Inverse-CDF draw. Falls back to the last positive entry when rounding
// leaves u above the accumulated total.
inline StateIndex sample_categorical(std::span<const double> probs, Rng& rng) {
    const double u = rng.uniform01();
    double acc = 0.0;
    StateIndex last_positive = 0;
    for (StateIndex i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        acc += probs[i];
        last_positive = i;
        if (u < acc) return i;
    }
    return last_positive;
}

inline void require_horizon(std::size_t horizon) {
    if (horizon == 0) throw std::invalid_argument("horizon must be at least 1");
}

inline Trajectory sample_trajectory(const MarkovChain& c, std::size_t horizon, Rng rng) {
    require_horizon(horizon);
    Trajectory t;
    t.states.reserve(horizon);
    t.states.push_back(sample_categorical(c.initial, rng));
    for (std::size_t k = 1; k < horizon; ++k)
        t.states.push_back(sample_categorical(c.row(t.states.back()), rng));
    return t;
}

// Rollout of m under p. Reward R(s') is collected on every transition into s'.
inline Trajectory sample_trajectory(const Mdp& m, const Policy& p, std::size_t horizon, Rng rng,
                                    double discount = 1.0) {
    require_horizon(horizon);
    require_policy_fits(m, p);
    Trajectory t;
    t.states.reserve(horizon);
    t.states.push_back(sample_categorical(m.initial, rng));
    double weight = 1.0;
    for (std::size_t k = 1; k < horizon; ++k) {
        const StateIndex s = t.states.back();
        const StateIndex next = sample_categorical(m.row(p[s], s), rng);
        t.states.push_back(next);
        t.return_undiscounted += m.reward[next];
        t.return_discounted += weight * m.reward[next];
        weight *= discount;
    }
    return t;
}

} // namespace ck
