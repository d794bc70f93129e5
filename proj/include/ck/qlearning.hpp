#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ck/mdp.hpp"
#include "ck/numeric.hpp"
#include "ck/rng.hpp"

namespace ck {

class QTable {
public:
    QTable() = default;
    QTable(std::size_t n_states, std::size_t n_actions, double fill = 0.0)
        : n_states_(n_states), n_actions_(n_actions), values_(n_states * n_actions, fill) {}

    static QTable zeros_like(const Mdp& m) { return QTable(m.n_states, m.n_actions); }

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }

    double& operator()(StateIndex s, ActionIndex a) { return values_[s * n_actions_ + a]; }
    double operator()(StateIndex s, ActionIndex a) const { return values_[s * n_actions_ + a]; }

    std::span<const double> row(StateIndex s) const {
        return {values_.data() + s * n_actions_, n_actions_};
    }
    std::span<double> row(StateIndex s) { return {values_.data() + s * n_actions_, n_actions_}; }

    const std::vector<double>& values() const { return values_; }

    bool operator==(const QTable&) const = default;

private:
    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    std::vector<double> values_;
};

struct LearnParams {
    std::size_t episodes = 4000;
    std::size_t episode_len = 100;
    double learning_rate = 0.01;
    double discount = 0.95;
    double epsilon = 0.5;
    bool terminate_on_goal = true;
};

inline std::vector<std::string> validate_learn_params(const LearnParams& p) {
    std::vector<std::string> errors;
    if (p.episode_len == 0) errors.push_back("episode_len must be at least 1");
    if (!(p.learning_rate > 0.0 && p.learning_rate <= 1.0))
        errors.push_back("learning rate must lie in (0, 1]");
    if (!(p.discount >= 0.0 && p.discount < 1.0)) errors.push_back("discount must lie in [0, 1)");
    if (!(p.epsilon >= 0.0 && p.epsilon <= 1.0)) errors.push_back("epsilon must lie in [0, 1]");
    return errors;
}

// First maximizer of the row.
inline ActionIndex argmax_action(std::span<const double> row) {
    ActionIndex best = 0;
    for (ActionIndex a = 1; a < row.size(); ++a)
        if (row[a] > row[best]) best = a;
    return best;
}

inline Policy greedy_policy(const QTable& q) {
    Policy p;
    p.action_of.resize(q.n_states());
    for (StateIndex s = 0; s < q.n_states(); ++s) p.action_of[s] = argmax_action(q.row(s));
    return p;
}

// Behaviour policy: uniform random action with probability epsilon, greedy otherwise.
inline ActionIndex epsilon_greedy_action(const QTable& q, StateIndex s, double epsilon, Rng& rng) {
    if (rng.bernoulli(epsilon)) return rng.index(q.n_actions());
    return argmax_action(q.row(s));
}

struct LearnResult {
    QTable q;
    std::vector<double> episode_returns;  // undiscounted
};

// Called after every episode with (episode index, current table).
using EpisodeObserver = std::function<void(std::size_t, const QTable&)>;

inline void require_table_fits(const Mdp& m, const QTable& q) {
    if (q.n_states() != m.n_states || q.n_actions() != m.n_actions)
        throw DimensionError("Q-table is " + std::to_string(q.n_states()) + "x" +
                             std::to_string(q.n_actions()) + ", MDP is " +
                             std::to_string(m.n_states) + "x" + std::to_string(m.n_actions));
}

// Tabular Q-learning with a constant learning rate. Reward R(s') is received
// on entering s'. When terminate_on_goal is set, entering a terminal state
// ends the episode and the update target is r alone.
inline LearnResult q_learning(const Mdp& m, const LearnParams& params, QTable q0, Rng rng,
                              const EpisodeObserver& observer = {}) {
    require_table_fits(m, q0);
    if (auto errors = validate_learn_params(params); !errors.empty())
        throw ValidationError("invalid learning parameters: " + errors.front());

    LearnResult result{std::move(q0), {}};
    QTable& q = result.q;
    result.episode_returns.reserve(params.episodes);
    for (std::size_t ep = 0; ep < params.episodes; ++ep) {
        StateIndex s = sample_categorical(m.initial, rng);
        double ret = 0.0;
        for (std::size_t t = 0; t < params.episode_len; ++t) {
            const ActionIndex a = epsilon_greedy_action(q, s, params.epsilon, rng);
            const StateIndex next = sample_categorical(m.row(a, s), rng);
            const double r = m.reward[next];
            const bool stop = params.terminate_on_goal && m.is_terminal(next);
            double target = r;
            if (!stop) {
                const auto next_row = q.row(next);
                target += params.discount * *std::max_element(next_row.begin(), next_row.end());
            }
            q(s, a) += params.learning_rate * (target - q(s, a));
            ret += r;
            s = next;
            if (stop) break;
        }
        result.episode_returns.push_back(ret);
        if (observer) observer(ep, q);
    }
    return result;
}

struct EvalResult {
    double mean = 0.0;
    double standard_error = 0.0;
};

struct EvalSettings {
    std::size_t episodes = 10000;
    std::size_t episode_len = 100;
    bool terminate_on_goal = true;
    std::optional<double> discount;  // undiscounted when empty
};

// Monte-Carlo estimate of the episode return under a behaviour given as
// select(state, rng) -> action.
template <class Select>
EvalResult evaluate_behavior(const Mdp& m, Select&& select, const EvalSettings& settings, Rng rng) {
    if (settings.episode_len == 0) throw std::invalid_argument("episode_len must be at least 1");
    if (settings.episodes == 0) return {};
    const double gamma = settings.discount.value_or(1.0);
    CompensatedSum sum, sum_sq;
    for (std::size_t ep = 0; ep < settings.episodes; ++ep) {
        StateIndex s = sample_categorical(m.initial, rng);
        double ret = 0.0, weight = 1.0;
        for (std::size_t t = 0; t < settings.episode_len; ++t) {
            const ActionIndex a = select(s, rng);
            const StateIndex next = sample_categorical(m.row(a, s), rng);
            ret += weight * m.reward[next];
            weight *= gamma;
            s = next;
            if (settings.terminate_on_goal && m.is_terminal(next)) break;
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    const double n = static_cast<double>(settings.episodes);
    EvalResult out;
    out.mean = sum.value() / n;
    if (settings.episodes > 1) {
        const double var = std::max(0.0, (sum_sq.value() - n * out.mean * out.mean) / (n - 1.0));
        out.standard_error = std::sqrt(var / n);
    }
    return out;
}

inline EvalResult evaluate_policy(const Mdp& m, const Policy& p, const EvalSettings& settings,
                                  Rng rng) {
    require_policy_fits(m, p);
    return evaluate_behavior(
        m, [&p](StateIndex s, Rng&) { return p[s]; }, settings, rng);
}

inline EvalResult evaluate_uniform_random(const Mdp& m, const EvalSettings& settings, Rng rng) {
    const std::size_t actions = m.n_actions;
    return evaluate_behavior(
        m, [actions](StateIndex, Rng& r) { return r.index(actions); }, settings, rng);
}

} // namespace ck
