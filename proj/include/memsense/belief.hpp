#pragma once

// Belief-state MDP over the auxiliary states: Bayes filter, exact per-step
// reward (information minus weighted distortion) and the observation/action
// adapters for the unbounded, limited and degenerate agent views.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "memsense/unifilar.hpp"

namespace memsense {

/// Distribution of U_{i-1} given the past outputs, indexed by aux_index().
struct Belief {
    std::vector<double> probs;

    [[nodiscard]] double operator[](std::size_t i) const { return probs[i]; }
    [[nodiscard]] std::size_t size() const { return probs.size(); }
};

/// Pr[X = 1 | u] for every auxiliary state, indexed by aux_index().
struct ActionMap {
    std::vector<double> prob_one;

    [[nodiscard]] double operator[](std::size_t i) const { return prob_one[i]; }
    [[nodiscard]] std::size_t size() const { return prob_one.size(); }

    [[nodiscard]] static ActionMap constant(const ChannelParams& params, double q) {
        return ActionMap{std::vector<double>(params.aux_count(), q)};
    }
};

struct RewardBreakdown {
    double info = 0.0;        // bits
    double distortion = 0.0;  // expected Hamming distortion
    double combined = 0.0;    // info - beta * distortion
};

struct Unbounded {
    friend bool operator==(const Unbounded&, const Unbounded&) = default;
};
struct Limited {
    double k = 0.5;
    friend bool operator==(const Limited&, const Limited&) = default;
};
struct Degenerate {
    friend bool operator==(const Degenerate&, const Degenerate&) = default;
};

class StateSpaceMode {
public:
    StateSpaceMode() = default;
    StateSpaceMode(Unbounded m) : mode_(m) {}
    StateSpaceMode(Degenerate m) : mode_(m) {}
    StateSpaceMode(Limited m) : mode_(m) {
        if (!(m.k > 0.0 && m.k < 1.0))
            throw std::invalid_argument("limited state space needs 0 < k < 1, got " + std::to_string(m.k));
    }

    [[nodiscard]] bool is_unbounded() const { return std::holds_alternative<Unbounded>(mode_); }
    [[nodiscard]] bool is_limited() const { return std::holds_alternative<Limited>(mode_); }
    [[nodiscard]] bool is_degenerate() const { return std::holds_alternative<Degenerate>(mode_); }
    [[nodiscard]] double k() const { return is_limited() ? std::get<Limited>(mode_).k : 0.0; }

    [[nodiscard]] std::string name() const {
        if (is_unbounded()) return "unbounded";
        if (is_degenerate()) return "degenerate";
        return "limited";
    }

    friend bool operator==(const StateSpaceMode&, const StateSpaceMode&) = default;

private:
    std::variant<Unbounded, Limited, Degenerate> mode_{Unbounded{}};
};

[[nodiscard]] inline StateSpaceMode parse_mode(const std::string& name, double k = 0.5) {
    if (name == "unbounded") return Unbounded{};
    if (name == "degenerate") return Degenerate{};
    if (name == "limited") return Limited{k};
    throw std::invalid_argument("unknown state-space mode '" + name + "'");
}

/// Binary entropy in bits with H(0) = H(1) = 0.
[[nodiscard]] inline double binary_entropy(double q) {
    if (q <= 0.0 || q >= 1.0) return 0.0;
    return -q * std::log2(q) - (1.0 - q) * std::log2(1.0 - q);
}

namespace detail {
inline void require_sizes(const ChannelParams& params, std::size_t belief, std::size_t action) {
    const std::size_t n = params.aux_count();
    if (belief != n || action != n)
        throw std::invalid_argument("belief/action size mismatch: expected " + std::to_string(n) + ", got " +
                                    std::to_string(belief) + "/" + std::to_string(action));
}
}  // namespace detail

[[nodiscard]] inline Belief initial_belief(const ChannelParams& params) {
    Belief b{std::vector<double>(params.aux_count(), 0.0)};
    b.probs[aux_index(params, AuxState{0, 0})] = 1.0;
    return b;
}

/// Pr[Y = 1] under belief `belief` and action map `action`.
[[nodiscard]] inline double output_prob(const Belief& belief, const ActionMap& action, const ChannelParams& params) {
    detail::require_sizes(params, belief.size(), action.size());
    double total = 0.0;
    for (std::size_t i = 0; i < belief.size(); ++i) {
        if (belief[i] == 0.0) continue;
        total += belief[i] * action[i] * output_prob_one(params, aux_at(params, i), 1);
    }
    return total;
}

/// Posterior over U_i after observing y. Throws ImpossibleObservation when y has
/// zero probability under (belief, action).
[[nodiscard]] inline Belief belief_update(const Belief& belief, const ActionMap& action, Bit y,
                                          const ChannelParams& params) {
    detail::require_sizes(params, belief.size(), action.size());
    Belief next{std::vector<double>(belief.size(), 0.0)};
    double norm = 0.0;
    for (std::size_t i = 0; i < belief.size(); ++i) {
        const double mass = belief[i];
        if (mass == 0.0) continue;
        const AuxState u = aux_at(params, i);
        // x = 1
        const double p1 = output_prob_one(params, u, 1);
        const double w1 = mass * action[i] * (y == 1 ? p1 : 1.0 - p1);
        if (w1 > 0.0) {
            next.probs[aux_index(params, aux_update(params, u, 1, y))] += w1;
            norm += w1;
        }
        // x = 0 only explains y = 0
        if (y == 0) {
            const double w0 = mass * (1.0 - action[i]);
            if (w0 > 0.0) {
                next.probs[aux_index(params, aux_update(params, u, 0, 0))] += w0;
                norm += w0;
            }
        }
    }
    if (!(norm > 0.0))
        throw ImpossibleObservation("output y = " + std::to_string(int{y}) + " has zero probability under the belief");
    for (double& v : next.probs) v /= norm;
    return next;
}

[[nodiscard]] inline double expected_distortion(const Belief& belief, const ActionMap& action,
                                                const ChannelParams& params) {
    detail::require_sizes(params, belief.size(), action.size());
    double d = 0.0;
    for (std::size_t i = 0; i < belief.size(); ++i) {
        if (belief[i] == 0.0) continue;
        const double pl = flip_prob(params, effective_lag(params, aux_at(params, i)));
        d += belief[i] * (1.0 - action[i]) * std::min(pl, 1.0 - pl);
    }
    return d;
}

/// Exact reward for one channel use:
///   info = H_b(Pr[Y=0]) - sum_u delta(u) a(u) H_b(p_lambda(u)),
///   distortion = sum_u delta(u) (1 - a(u)) min(p_lambda, 1 - p_lambda).
[[nodiscard]] inline RewardBreakdown step_reward(const Belief& belief, const ActionMap& action,
                                                 const ChannelParams& params, double beta) {
    detail::require_sizes(params, belief.size(), action.size());
    double prob_zero = 0.0;
    double cond_entropy = 0.0;
    double distortion = 0.0;
    for (std::size_t i = 0; i < belief.size(); ++i) {
        const double mass = belief[i];
        if (mass == 0.0) continue;
        const AuxState u = aux_at(params, i);
        const double pl = flip_prob(params, effective_lag(params, u));
        const double send = mass * action[i];
        const double idle = mass - send;
        prob_zero += idle + send * (u.anchor == 1 ? pl : 1.0 - pl);
        cond_entropy += send * binary_entropy(pl);
        distortion += idle * std::min(pl, 1.0 - pl);
    }
    RewardBreakdown r;
    r.info = std::max(0.0, binary_entropy(std::clamp(prob_zero, 0.0, 1.0)) - cond_entropy);
    r.distortion = distortion;
    r.combined = r.info - beta * r.distortion;
    return r;
}

/// Largest lag the limited view resolves individually: ceil(k * l_max).
[[nodiscard]] inline int limited_cutoff(const ChannelParams& params, double k) {
    const int c = static_cast<int>(std::ceil(k * params.l_max - 1e-12));
    return std::clamp(c, 0, params.l_max);
}

/// Dimension of the agent's observation and raw action vectors.
[[nodiscard]] inline std::size_t view_dim(const ChannelParams& params, const StateSpaceMode& mode) {
    if (mode.is_degenerate()) return 1;
    if (mode.is_unbounded()) return params.aux_count();
    const int c = limited_cutoff(params, mode.k());
    const int per_anchor = c + 1 + (c < params.l_max ? 1 : 0);
    return 2 * static_cast<std::size_t>(per_anchor);
}

namespace detail {
/// Maps an aux index to its slot in the limited view.
inline std::size_t limited_slot(const ChannelParams& params, int cutoff, std::size_t aux) {
    const AuxState u = aux_at(params, aux);
    const int per_anchor = cutoff + 1 + (cutoff < params.l_max ? 1 : 0);
    const int bucket = std::min(u.lag, cutoff + 1);
    return static_cast<std::size_t>(u.anchor) * static_cast<std::size_t>(per_anchor) + static_cast<std::size_t>(bucket);
}
}  // namespace detail

/// Agent observation. Limited mode reports lags <= ceil(k l_max) individually and
/// one aggregated tail mass per anchor (no renormalization).
[[nodiscard]] inline std::vector<double> observe(const Belief& belief, const StateSpaceMode& mode,
                                                 const ChannelParams& params) {
    if (mode.is_degenerate()) return {1.0};
    if (mode.is_unbounded()) return belief.probs;
    const int c = limited_cutoff(params, mode.k());
    std::vector<double> obs(view_dim(params, mode), 0.0);
    for (std::size_t i = 0; i < belief.size(); ++i) obs[detail::limited_slot(params, c, i)] += belief[i];
    return obs;
}

[[nodiscard]] inline ActionMap action_from_raw(std::span<const double> raw, const StateSpaceMode& mode,
                                               const ChannelParams& params) {
    const std::size_t dim = view_dim(params, mode);
    if (raw.size() != dim)
        throw std::invalid_argument("raw action has dimension " + std::to_string(raw.size()) + ", mode " +
                                    mode.name() + " expects " + std::to_string(dim));
    auto clip = [](double v) { return std::clamp(v, 0.0, 1.0); };
    ActionMap a{std::vector<double>(params.aux_count(), 0.0)};
    if (mode.is_degenerate()) {
        std::fill(a.prob_one.begin(), a.prob_one.end(), clip(raw[0]));
    } else if (mode.is_unbounded()) {
        std::transform(raw.begin(), raw.end(), a.prob_one.begin(), clip);
    } else {
        const int c = limited_cutoff(params, mode.k());
        for (std::size_t i = 0; i < a.size(); ++i) a.prob_one[i] = clip(raw[detail::limited_slot(params, c, i)]);
    }
    return a;
}

}  // namespace memsense
