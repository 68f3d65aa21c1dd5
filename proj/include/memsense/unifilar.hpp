#pragma once

// Binary multiplicative-state channel Y = S * X with a Markov state
// S_i = S_{i-1} xor Bernoulli(p), and the auxiliary state machine
// U = (lag since last transmitted 1, state observed at that time).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "memsense/random.hpp"

namespace memsense {

using Bit = std::uint8_t;

/// Raised when an observation has zero probability under the model, e.g. y = 1
/// after x = 0. Always a harness bug, never silently ignored.
class ImpossibleObservation : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct ChannelParams {
    double p = 0.1;    // state flip probability
    int l_max = 16;    // lag truncation

    ChannelParams() = default;
    ChannelParams(double flip, int lag_cap) : p(flip), l_max(lag_cap) { validate(); }

    void validate() const {
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("ChannelParams: p must lie in [0,1], got " + std::to_string(p));
        if (l_max < 1)
            throw std::invalid_argument("ChannelParams: l_max must be >= 1, got " + std::to_string(l_max));
    }

    /// Number of auxiliary states, 2 (l_max + 1).
    [[nodiscard]] std::size_t aux_count() const { return 2 * static_cast<std::size_t>(l_max + 1); }
};

struct AuxState {
    int lag = 0;
    Bit anchor = 0;

    friend bool operator==(const AuxState&, const AuxState&) = default;
};

/// Flat index of an auxiliary state: anchor-major, lag-minor.
[[nodiscard]] inline std::size_t aux_index(const ChannelParams& params, AuxState u) {
    return static_cast<std::size_t>(u.anchor) * static_cast<std::size_t>(params.l_max + 1) +
           static_cast<std::size_t>(u.lag);
}

[[nodiscard]] inline AuxState aux_at(const ChannelParams& params, std::size_t index) {
    const auto row = static_cast<std::size_t>(params.l_max + 1);
    return AuxState{static_cast<int>(index % row), static_cast<Bit>(index / row)};
}

struct EnvState {
    Bit s = 0;
    AuxState aux{};
    std::int64_t time = 0;
};

struct EstimateResult {
    Bit s_hat = 0;
    double expected_distortion = 0.0;
};

namespace detail {
inline void require_positive_lag(int lag) {
    if (lag < 1) throw std::invalid_argument("flip probability needs lag >= 1, got " + std::to_string(lag));
}
inline void require_consistent(Bit x, Bit y) {
    if (x == 0 && y == 1) throw ImpossibleObservation("observed y = 1 with x = 0");
}
}  // namespace detail

/// Probability that the xor of `lag` independent Bernoulli(p) bits is 1.
[[nodiscard]] inline double flip_prob(const ChannelParams& params, int lag) {
    detail::require_positive_lag(lag);
    return 0.5 - 0.5 * std::pow(1.0 - 2.0 * params.p, lag);
}

/// Same quantity through p_l = (1-p) p_{l-1} + p (1 - p_{l-1}), p_0 = 0.
[[nodiscard]] inline double flip_prob_recursive(const ChannelParams& params, int lag) {
    detail::require_positive_lag(lag);
    double q = 0.0;
    for (int l = 1; l <= lag; ++l) q = (1.0 - params.p) * q + params.p * (1.0 - q);
    return q;
}

/// Number of flips separating the anchor from the next channel state, capped at l_max.
[[nodiscard]] inline int effective_lag(const ChannelParams& params, AuxState u) {
    return std::min(u.lag + 1, params.l_max);
}

[[nodiscard]] inline AuxState aux_update(const ChannelParams& params, AuxState u, Bit x, Bit y) {
    detail::require_consistent(x, y);
    if (x == 1) return AuxState{0, y};
    return AuxState{std::min(u.lag + 1, params.l_max), u.anchor};
}

/// Pr[Y = 1 | U_{i-1} = u, X_i = x].
[[nodiscard]] inline double output_prob_one(const ChannelParams& params, AuxState u, Bit x) {
    if (x == 0) return 0.0;
    const double pl = flip_prob(params, effective_lag(params, u));
    return u.anchor == 1 ? 1.0 - pl : pl;
}

struct StepOutcome {
    Bit y;
    EnvState next;
    Bit s_true;
};

/// Advances the channel by one use. The flip is drawn from `rng`; once the lag has
/// saturated at l_max the state is redrawn from the truncated law anchor xor
/// Bernoulli(p_{l_max}) so the simulated chain is exactly the one the belief tracks.
template <typename Rng>
[[nodiscard]] StepOutcome env_step(const ChannelParams& params, const EnvState& state, Bit x, Rng& rng) {
    EnvState next = state;
    if (state.aux.lag >= params.l_max) {
        const Bit flip = bernoulli(rng, flip_prob(params, params.l_max)) ? 1 : 0;
        next.s = static_cast<Bit>(state.aux.anchor ^ flip);
    } else {
        const Bit flip = bernoulli(rng, params.p) ? 1 : 0;
        next.s = static_cast<Bit>(state.s ^ flip);
    }
    const Bit y = static_cast<Bit>(next.s & x);
    next.aux = aux_update(params, state.aux, x, y);
    next.time = state.time + 1;
    return {y, next, next.s};
}

/// Minimum-distortion estimate of S_i from (U_{i-1}, X_i, Y_i). Ties keep the anchor.
[[nodiscard]] inline EstimateResult optimal_estimate(const ChannelParams& params, AuxState u_prev, Bit x, Bit y) {
    detail::require_consistent(x, y);
    if (x == 1) return {y, 0.0};
    const double pl = flip_prob(params, effective_lag(params, u_prev));
    const Bit flip = pl > 1.0 - pl ? 1 : 0;
    return {static_cast<Bit>(u_prev.anchor ^ flip), std::min(pl, 1.0 - pl)};
}

}  // namespace memsense
