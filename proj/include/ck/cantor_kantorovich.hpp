#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ck/mdp.hpp"
#include "ck/numeric.hpp"

namespace ck {

// Cantor distance between equal-length state sequences: 2^-(j+1) where j is
// the first 0-based index at which they differ, 0 if they are identical.
inline double cantor_distance(std::span<const StateIndex> a, std::span<const StateIndex> b) {
    if (a.size() != b.size())
        throw DimensionError("cantor_distance: lengths " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()) + " differ");
    if (a.empty()) throw std::invalid_argument("cantor_distance: empty sequences");
    for (std::size_t j = 0; j < a.size(); ++j)
        if (a[j] != b[j]) return std::ldexp(1.0, -static_cast<int>(j + 1));
    return 0.0;
}

inline double cantor_distance(const Trajectory& a, const Trajectory& b) {
    return cantor_distance(a.states, b.states);
}

// Raised when a prefix layer would grow beyond CkOptions::max_layer_entries.
class LayerCapExceeded : public std::runtime_error {
public:
    LayerCapExceeded(std::size_t depth, std::size_t cap)
        : std::runtime_error("prefix layer at depth " + std::to_string(depth) +
                             " exceeds the cap of " + std::to_string(cap) + " entries"),
          depth_(depth), cap_(cap) {}

    std::size_t depth() const { return depth_; }
    std::size_t cap() const { return cap_; }

private:
    std::size_t depth_;
    std::size_t cap_;
};

struct CkOptions {
    std::size_t max_layer_entries = 100'000'000;
    // Workers used to expand a layer. Results do not depend on this value.
    unsigned threads = 1;
};

// One length-k prefix with positive mass under both distributions. Only the
// last state is kept; equal last states are never merged since min() is not
// additive.
struct PrefixEntry {
    StateIndex last;
    double p_mass;
    double q_mass;
};

struct PrefixLayer {
    std::size_t depth = 0;
    std::vector<PrefixEntry> entries;
    double overlap = 1.0;
};

struct CkResult {
    double value = 0.0;
    std::size_t horizon = 0;
    std::vector<double> increments;  // level k contributes 2^-(k+1) (M_k - M_{k+1})
    std::vector<double> overlaps;    // M_0 .. M_horizon
    double truncation_bound = 1.0;   // 2^-horizon
    std::vector<std::size_t> layer_sizes;  // entries at depth 1 .. horizon
};

namespace detail {

// Union of nonzero columns of both chains, per state. Entry `n` holds the
// union of the two initial supports.
class PairSupport {
public:
    PairSupport(const MarkovChain& c1, const MarkovChain& c2) : n_(c1.n_states), offsets_{0} {
        for (StateIndex s = 0; s <= n_; ++s) {
            std::span<const double> r1 = s < n_ ? c1.row(s) : std::span<const double>(c1.initial);
            std::span<const double> r2 = s < n_ ? c2.row(s) : std::span<const double>(c2.initial);
            for (StateIndex t = 0; t < n_; ++t)
                if (r1[t] > 0.0 || r2[t] > 0.0) columns_.push_back(t);
            offsets_.push_back(columns_.size());
        }
    }

    std::span<const StateIndex> of(StateIndex s) const {
        return {columns_.data() + offsets_[s], offsets_[s + 1] - offsets_[s]};
    }
    std::span<const StateIndex> initial() const { return of(n_); }

private:
    std::size_t n_;
    std::vector<std::size_t> offsets_;
    std::vector<StateIndex> columns_;
};

inline void require_same_space(const MarkovChain& c1, const MarkovChain& c2) {
    if (c1.n_states != c2.n_states)
        throw DimensionError("chains have " + std::to_string(c1.n_states) + " and " +
                             std::to_string(c2.n_states) + " states");
}

// Overlap lost by one parent when it is extended by one step:
//   min(p, q) - sum_s min(p a_s, q b_s) = (sum_s |p a_s - q b_s| - |p - q|) / 2
// (using sum a = sum b = 1). This form is exactly zero whenever both sides
// produce identical child masses.
inline double parent_deficit(double p, double q, double abs_diff_sum) {
    const double d = 0.5 * (abs_diff_sum - std::abs(p - q));
    return std::clamp(d, 0.0, std::min(p, q));
}

// Expands parents[begin, end). Deficits are written per parent so the caller
// can sum them in a fixed order.
inline void expand_range(std::span<const PrefixEntry> parents, std::size_t begin, std::size_t end,
                         const MarkovChain& c1, const MarkovChain& c2, const PairSupport& support,
                         std::span<double> deficits, std::vector<PrefixEntry>& children,
                         std::size_t cap, std::size_t depth) {
    for (std::size_t i = begin; i < end; ++i) {
        const PrefixEntry& e = parents[i];
        const auto r1 = c1.row(e.last);
        const auto r2 = c2.row(e.last);
        double abs_diff = 0.0;
        for (StateIndex t : support.of(e.last)) {
            const double cp = e.p_mass * r1[t];
            const double cq = e.q_mass * r2[t];
            abs_diff += std::abs(cp - cq);
            if (std::min(cp, cq) > 0.0) {
                if (children.size() >= cap) throw LayerCapExceeded(depth, cap);
                children.push_back({t, cp, cq});
            }
        }
        deficits[i] = parent_deficit(e.p_mass, e.q_mass, abs_diff);
    }
}

} // namespace detail

// Result of extending a layer by one step.
struct LayerStep {
    PrefixLayer next;
    double lost_overlap = 0.0;  // sum of parent deficits, M_k - M_{k+1}
};

// Depth-1 layer grown from the virtual empty prefix (p = q = 1).
inline LayerStep first_layer(const MarkovChain& c1, const MarkovChain& c2,
                             const CkOptions& opts = {}) {
    detail::require_same_space(c1, c2);
    LayerStep step;
    step.next.depth = 1;
    double abs_diff = 0.0;
    CompensatedSum overlap;
    for (StateIndex s = 0; s < c1.n_states; ++s) {
        const double p = c1.initial[s];
        const double q = c2.initial[s];
        abs_diff += std::abs(p - q);
        const double m = std::min(p, q);
        overlap += m;
        if (m > 0.0) {
            if (step.next.entries.size() >= opts.max_layer_entries)
                throw LayerCapExceeded(1, opts.max_layer_entries);
            step.next.entries.push_back({s, p, q});
        }
    }
    step.lost_overlap = detail::parent_deficit(1.0, 1.0, abs_diff);
    step.next.overlap = std::min(1.0, overlap.value());
    return step;
}

namespace detail {

inline LayerStep next_layer_impl(const PrefixLayer& layer, const MarkovChain& c1,
                                 const MarkovChain& c2, const PairSupport& support,
                                 const CkOptions& opts) {
    const std::size_t depth = layer.depth + 1;
    const std::size_t n = layer.entries.size();
    std::vector<double> deficits(n, 0.0);

    const std::size_t workers =
        std::max<std::size_t>(1, std::min<std::size_t>(opts.threads, n / 4096 + 1));
    std::vector<std::vector<PrefixEntry>> parts(workers);

    if (workers == 1) {
        parts[0].reserve(std::min(n * 2, opts.max_layer_entries));
        expand_range(layer.entries, 0, n, c1, c2, support, deficits, parts[0],
                     opts.max_layer_entries, depth);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        const std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                const std::size_t b = std::min(n, w * chunk);
                const std::size_t e = std::min(n, b + chunk);
                try {
                    expand_range(layer.entries, b, e, c1, c2, support, deficits, parts[w],
                                 opts.max_layer_entries, depth);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& err : errors)
            if (err) std::rethrow_exception(err);
    }

    LayerStep step;
    step.next.depth = depth;
    std::size_t total = 0;
    for (const auto& part : parts) total += part.size();
    if (total > opts.max_layer_entries) throw LayerCapExceeded(depth, opts.max_layer_entries);

    if (workers == 1) {
        step.next.entries = std::move(parts[0]);
    } else {
        step.next.entries.reserve(total);
        for (auto& part : parts) {
            step.next.entries.insert(step.next.entries.end(), part.begin(), part.end());
            std::vector<PrefixEntry>().swap(part);
        }
    }

    CompensatedSum lost;
    for (double d : deficits) lost += d;
    step.lost_overlap = std::clamp(lost.value(), 0.0, 1.0);

    CompensatedSum overlap;
    for (const auto& e : step.next.entries) overlap += std::min(e.p_mass, e.q_mass);
    // Rounding in the row sums can push the direct sum a few ulps above M_k.
    step.next.overlap = std::min(layer.overlap, overlap.value());
    return step;
}

} // namespace detail

inline LayerStep next_layer(const PrefixLayer& layer, const MarkovChain& c1,
                            const MarkovChain& c2, const CkOptions& opts = {}) {
    detail::require_same_space(c1, c2);
    if (layer.depth == 0) return first_layer(c1, c2, opts);
    return detail::next_layer_impl(layer, c1, c2, detail::PairSupport(c1, c2), opts);
}

// Cantor-Kantorovich distance between the length-`horizon` trajectory
// distributions of two chains on the same state space.
//
//   K(N) = sum_{k=0}^{N-1} 2^-(k+1) (M_k - M_{k+1}),   M_k = sum_{s^k} min(P(s^k), Q(s^k))
//
// Layers are expanded breadth first, one depth in memory at a time, and
// prefixes with min(P, Q) == 0 are dropped. The limit over N lies in
// [value, value + truncation_bound].
inline CkResult ck_distance(const MarkovChain& c1, const MarkovChain& c2, std::size_t horizon,
                            const CkOptions& opts = {}) {
    detail::require_same_space(c1, c2);
    if (horizon == 0) throw std::invalid_argument("ck_distance: horizon must be at least 1");
    require_valid(c1);
    require_valid(c2);

    const detail::PairSupport support(c1, c2);
    CkResult result;
    result.horizon = horizon;
    result.truncation_bound = std::ldexp(1.0, -static_cast<int>(horizon));
    result.overlaps.reserve(horizon + 1);
    result.overlaps.push_back(1.0);

    PrefixLayer layer;  // depth 0: the empty prefix
    for (std::size_t k = 0; k < horizon; ++k) {
        LayerStep step;
        if (k == 0)
            step = first_layer(c1, c2, opts);
        else if (layer.entries.empty())
            step.next = PrefixLayer{k + 1, {}, 0.0};
        else
            step = detail::next_layer_impl(layer, c1, c2, support, opts);

        const double inc = std::ldexp(step.lost_overlap, -static_cast<int>(k + 1));
        result.increments.push_back(inc);
        result.value += inc;
        result.overlaps.push_back(step.next.overlap);
        result.layer_sizes.push_back(step.next.entries.size());
        layer = std::move(step.next);
    }
    return result;
}

// M_0 .. M_horizon.
inline std::vector<double> prefix_overlaps(const MarkovChain& c1, const MarkovChain& c2,
                                           std::size_t horizon, const CkOptions& opts = {}) {
    return ck_distance(c1, c2, horizon, opts).overlaps;
}

inline void require_homogeneous(const Mdp& m1, const Mdp& m2) {
    if (m1.n_states != m2.n_states || m1.n_actions != m2.n_actions)
        throw DimensionError("MDPs are not homogeneous: (" + std::to_string(m1.n_states) + ", " +
                             std::to_string(m1.n_actions) + ") vs (" +
                             std::to_string(m2.n_states) + ", " + std::to_string(m2.n_actions) +
                             ") states/actions");
}

// Distance between the dynamics of m1 under p and m2 under q.
inline CkResult ck_distance_between_mdps(const Mdp& m1, const Mdp& m2, const Policy& p,
                                         const Policy& q, std::size_t horizon,
                                         const CkOptions& opts = {}) {
    require_homogeneous(m1, m2);
    return ck_distance(induced_chain(m1, p), induced_chain(m2, q), horizon, opts);
}

} // namespace ck
