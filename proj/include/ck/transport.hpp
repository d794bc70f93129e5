#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ck/mdp.hpp"

// Brute-force reference path: explicit trajectory distributions and an exact
// transportation solver. Shares no code with the prefix-layer recursion.

namespace ck {

struct CapExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct WeightedTrajectory {
    std::vector<StateIndex> states;
    double probability;
};

// Support of a finite trajectory distribution, in lexicographic order.
using ExplicitDistribution = std::vector<WeightedTrajectory>;

inline constexpr std::size_t kDefaultEnumerationCap = 1'000'000;

// P(s^N) = mu(s_0) * prod_i T(s_i, s_{i+1}) for every positive-probability s^N.
inline ExplicitDistribution enumerate_distribution(const MarkovChain& c, std::size_t horizon,
                                                   std::size_t cap = kDefaultEnumerationCap) {
    require_horizon(horizon);
    require_valid(c);
    double total = 1.0;
    for (std::size_t k = 0; k < horizon; ++k) {
        total *= static_cast<double>(c.n_states);
        if (total > static_cast<double>(cap))
            throw CapExceeded("enumerate_distribution: |S|^N = " + std::to_string(c.n_states) +
                              "^" + std::to_string(horizon) + " exceeds cap " +
                              std::to_string(cap));
    }

    ExplicitDistribution out;
    std::vector<StateIndex> path;
    path.reserve(horizon);
    auto visit = [&](auto&& self, double prob) -> void {
        if (path.size() == horizon) {
            out.push_back({path, prob});
            return;
        }
        for (StateIndex s = 0; s < c.n_states; ++s) {
            const double w = path.empty() ? c.initial[s] : c.row(path.back())[s];
            if (w <= 0.0) continue;
            path.push_back(s);
            self(self, prob * w);
            path.pop_back();
        }
    };
    visit(visit, 1.0);
    return out;
}

namespace detail {

// Successive shortest paths on a residual graph with real capacities.
// Dijkstra runs on reduced costs with node potentials; reduced costs above
// -kReducedCostTolerance are treated as nonnegative.
class MinCostFlow {
public:
    static constexpr double kReducedCostTolerance = 1e-12;
    static constexpr double kCapacityEpsilon = 1e-18;

    explicit MinCostFlow(std::size_t nodes) : adjacency_(nodes) {}

    std::size_t add_arc(std::size_t from, std::size_t to, double capacity, double cost) {
        adjacency_[from].push_back(arcs_.size());
        arcs_.push_back({to, capacity, cost});
        adjacency_[to].push_back(arcs_.size());
        arcs_.push_back({from, 0.0, -cost});
        return arcs_.size() - 2;
    }

    double flow_on(std::size_t arc) const { return arcs_[arc ^ 1].residual; }

    // Pushes up to `amount` units from source to sink at minimum cost.
    // Returns the amount actually sent.
    double solve(std::size_t source, std::size_t sink, double amount) {
        const std::size_t n = adjacency_.size();
        std::vector<double> potential(n, 0.0), dist(n);
        std::vector<std::size_t> via(n);
        std::vector<char> done(n);
        constexpr double inf = std::numeric_limits<double>::infinity();
        constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
        double sent = 0.0;

        while (amount - sent > kCapacityEpsilon) {
            std::fill(dist.begin(), dist.end(), inf);
            std::fill(via.begin(), via.end(), none);
            std::fill(done.begin(), done.end(), 0);
            dist[source] = 0.0;
            // Dense O(V^2) Dijkstra; supports here are at most a few thousand nodes.
            for (;;) {
                std::size_t u = none;
                for (std::size_t v = 0; v < n; ++v)
                    if (!done[v] && dist[v] < inf && (u == none || dist[v] < dist[u])) u = v;
                if (u == none) break;
                done[u] = 1;
                for (std::size_t id : adjacency_[u]) {
                    const Arc& a = arcs_[id];
                    if (a.residual <= kCapacityEpsilon || done[a.to]) continue;
                    double reduced = a.cost + potential[u] - potential[a.to];
                    if (reduced < 0.0) {
                        if (reduced < -kReducedCostTolerance)
                            throw std::logic_error("min-cost flow: negative reduced cost");
                        reduced = 0.0;
                    }
                    if (dist[u] + reduced < dist[a.to]) {
                        dist[a.to] = dist[u] + reduced;
                        via[a.to] = id;
                    }
                }
            }
            if (dist[sink] == inf) break;
            // Capping at dist[sink] keeps every residual reduced cost nonnegative,
            // including arcs leaving nodes the search did not reach.
            for (std::size_t v = 0; v < n; ++v) potential[v] += std::min(dist[v], dist[sink]);

            double push = amount - sent;
            for (std::size_t v = sink; v != source; v = arcs_[via[v] ^ 1].to)
                push = std::min(push, arcs_[via[v]].residual);
            for (std::size_t v = sink; v != source; v = arcs_[via[v] ^ 1].to) {
                arcs_[via[v]].residual -= push;
                arcs_[via[v] ^ 1].residual += push;
            }
            sent += push;
        }
        return sent;
    }

private:
    struct Arc {
        std::size_t to;
        double residual;
        double cost;
    };
    std::vector<std::vector<std::size_t>> adjacency_;
    std::vector<Arc> arcs_;
};

} // namespace detail

inline constexpr double kMarginalTolerance = 1e-9;

// min over couplings pi of sum cost(x, y) pi(x, y), solved as a transportation
// problem. `cost` is called as cost(const std::vector<StateIndex>&, same).
template <class Cost>
double exact_ot_oracle(const ExplicitDistribution& a, const ExplicitDistribution& b, Cost&& cost) {
    double mass_a = 0.0, mass_b = 0.0;
    for (const auto& x : a) mass_a += x.probability;
    for (const auto& y : b) mass_b += y.probability;
    if (std::abs(mass_a - mass_b) > kMarginalTolerance)
        throw std::invalid_argument("exact_ot_oracle: marginal masses " + std::to_string(mass_a) +
                                    " and " + std::to_string(mass_b) + " differ");

    const std::size_t na = a.size(), nb = b.size();
    const std::size_t source = na + nb, sink = source + 1;
    detail::MinCostFlow flow(na + nb + 2);
    const double unbounded = 2.0 * std::max(mass_a, mass_b) + 1.0;

    for (std::size_t i = 0; i < na; ++i) flow.add_arc(source, i, a[i].probability, 0.0);
    for (std::size_t j = 0; j < nb; ++j) flow.add_arc(na + j, sink, b[j].probability, 0.0);
    std::vector<std::size_t> transport_arcs;
    std::vector<double> costs;
    transport_arcs.reserve(na * nb);
    costs.reserve(na * nb);
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j) {
            const double c = cost(a[i].states, b[j].states);
            if (!(c >= 0.0)) throw std::invalid_argument("exact_ot_oracle: negative cost");
            transport_arcs.push_back(flow.add_arc(i, na + j, unbounded, c));
            costs.push_back(c);
        }

    flow.solve(source, sink, std::min(mass_a, mass_b));

    double total = 0.0;
    for (std::size_t k = 0; k < transport_arcs.size(); ++k)
        total += costs[k] * flow.flow_on(transport_arcs[k]);
    return total;
}

} // namespace ck
