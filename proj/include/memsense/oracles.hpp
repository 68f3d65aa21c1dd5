#pragma once

// Independent ground truth for the belief MDP: brute-force joint enumeration of
// the one-step reward, a Monte Carlo check of the Bayes filter, exact
// finite-horizon dynamic programming, the memoryless (constant-action) scan and
// a central-difference check of backpropagation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "memsense/belief.hpp"
#include "memsense/ddpg.hpp"
#include "memsense/neural.hpp"
#include "memsense/random.hpp"
#include "memsense/unifilar.hpp"

namespace memsense::oracles {

class BudgetExceeded : public std::runtime_error {
public:
    BudgetExceeded(const std::string& what, double estimated_nodes)
        : std::runtime_error(what), estimated_nodes_(estimated_nodes) {}
    [[nodiscard]] double estimated_nodes() const { return estimated_nodes_; }

private:
    double estimated_nodes_;
};

// ---------------------------------------------------------------------------
// brute_reward

namespace detail {
/// Pr[xor of `lag` Bernoulli(p) bits = 1] by enumerating all 2^lag flip patterns.
inline double enumerate_flip_prob(double p, int lag) {
    double total = 0.0;
    for (std::uint32_t pattern = 0; pattern < (1u << lag); ++pattern) {
        const int ones = __builtin_popcount(pattern);
        if (ones % 2 == 1) total += std::pow(p, ones) * std::pow(1.0 - p, lag - ones);
    }
    return total;
}
}  // namespace detail

/// One-step information and distortion from the joint law of (U, S, X, Y),
/// with I(X,U;Y) taken straight from its definition.
[[nodiscard]] inline RewardBreakdown brute_reward(const Belief& belief, const ActionMap& action,
                                                  const ChannelParams& params, double beta) {
    if (params.l_max > 8) throw std::invalid_argument("brute_reward: l_max <= 8 required");
    const std::size_t n = params.aux_count();
    if (belief.size() != n || action.size() != n) throw std::invalid_argument("brute_reward: size mismatch");

    // joint[u][x][y][s]
    std::vector<double> joint(n * 8, 0.0);
    auto at = [&](std::size_t u, int x, int y, int s) -> double& {
        return joint[u * 8 + static_cast<std::size_t>(x * 4 + y * 2 + s)];
    };
    for (std::size_t u = 0; u < n; ++u) {
        const AuxState aux = aux_at(params, u);
        // flips between the anchor and the next state; the lag saturates at l_max
        const int flips = std::min(aux.lag + 1, params.l_max);
        const double pf = detail::enumerate_flip_prob(params.p, flips);
        for (int s = 0; s < 2; ++s) {
            const double ps = s != aux.anchor ? pf : 1.0 - pf;
            for (int x = 0; x < 2; ++x) {
                const double px = x == 1 ? action[u] : 1.0 - action[u];
                const int y = s * x;
                at(u, x, y, s) += belief[u] * ps * px;
            }
        }
    }
    double py[2] = {0.0, 0.0};
    for (std::size_t u = 0; u < n; ++u)
        for (int x = 0; x < 2; ++x)
            for (int y = 0; y < 2; ++y) py[y] += at(u, x, y, 0) + at(u, x, y, 1);

    double info = 0.0, distortion = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
        for (int x = 0; x < 2; ++x) {
            double pux = 0.0;
            for (int y = 0; y < 2; ++y) pux += at(u, x, y, 0) + at(u, x, y, 1);
            for (int y = 0; y < 2; ++y) {
                const double puxy = at(u, x, y, 0) + at(u, x, y, 1);
                if (puxy > 0.0) info += puxy * std::log2(puxy / (pux * py[y]));
                // best estimate of s from (u, x, y): pick the guess with the smaller error mass
                double err_guess0 = at(u, x, y, 1);
                double err_guess1 = at(u, x, y, 0);
                distortion += std::min(err_guess0, err_guess1);
            }
        }
    }
    RewardBreakdown r;
    r.info = info;
    r.distortion = distortion;
    r.combined = info - beta * distortion;
    return r;
}

// ---------------------------------------------------------------------------
// mc_belief_check

/// Policy used by the Monte Carlo check: action map for step t given the belief.
using BeliefPolicy = std::function<ActionMap(const Belief&, int)>;

struct BeliefCheckResult {
    double max_tv = 0.0;
    long prefixes_checked = 0;
};

/// Simulates full paths through the true channel, bins the realized U_t by output
/// prefix and compares the empirical posterior with the Bayes filter. Only
/// prefixes with at least `min_count` paths enter the maximum; below a few
/// thousand paths the sampling noise alone exceeds 0.02 in TV.
[[nodiscard]] inline BeliefCheckResult mc_belief_check(const BeliefPolicy& policy, const ChannelParams& params,
                                                       int horizon, long n_samples, Rng& rng,
                                                       long min_count = 5000) {
    if (horizon < 1 || horizon > 8) throw std::invalid_argument("mc_belief_check: horizon must lie in [1,8]");
    struct Bin {
        std::vector<long> counts;
        Belief belief;
        long total = 0;
    };
    std::map<std::uint32_t, Bin> bins;
    const std::size_t n = params.aux_count();
    for (long path = 0; path < n_samples; ++path) {
        EnvState env{};
        Belief belief = initial_belief(params);
        std::uint32_t key = 1;  // leading 1 marks the prefix length
        for (int t = 0; t < horizon; ++t) {
            const ActionMap a = policy(belief, t);
            const Bit x = bernoulli(rng, a[aux_index(params, env.aux)]) ? 1 : 0;
            const auto o = env_step(params, env, x, rng);
            belief = belief_update(belief, a, o.y, params);
            env = o.next;
            key = (key << 1) | o.y;
            Bin& bin = bins[key];
            if (bin.counts.empty()) {
                bin.counts.assign(n, 0);
                bin.belief = belief;
            }
            ++bin.counts[aux_index(params, env.aux)];
            ++bin.total;
        }
    }
    BeliefCheckResult result;
    for (const auto& [key, bin] : bins) {
        if (bin.total < min_count) continue;
        double tv = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            tv += std::abs(static_cast<double>(bin.counts[i]) / static_cast<double>(bin.total) - bin.belief[i]);
        result.max_tv = std::max(result.max_tv, 0.5 * tv);
        ++result.prefixes_checked;
    }
    return result;
}

/// Time-varying policy with independent uniform action maps per step.
[[nodiscard]] inline BeliefPolicy random_policy(const ChannelParams& params, int horizon, Rng& rng) {
    std::vector<ActionMap> maps;
    for (int t = 0; t < horizon; ++t) {
        ActionMap a{std::vector<double>(params.aux_count())};
        for (double& v : a.prob_one) v = uniform01(rng);
        maps.push_back(std::move(a));
    }
    return [maps](const Belief&, int t) { return maps[static_cast<std::size_t>(t)]; };
}

// ---------------------------------------------------------------------------
// dp_optimal

struct DpResult {
    int horizon = 0;
    int l_max = 0;
    int grid_size = 0;
    double value = 0.0;           // optimal total reward / horizon
    int first_action_index = 0;   // grid index chosen for U_0 = (0, 0)
    long reachable_beliefs = 0;
};

struct DpBudget {
    long max_evaluations = 50'000'000;
};

/// Exact optimum of the horizon-n average reward over policies whose action at
/// each step is a function of the current belief and assigns a grid value to each
/// lag bucket. The channel law is exact (no lag truncation within the horizon);
/// `params.l_max` sets the policy resolution: lags >= l_max share one action per
/// anchor.
[[nodiscard]] inline DpResult dp_optimal(const ChannelParams& params, int horizon, double beta,
                                         const std::vector<double>& action_grid, DpBudget budget = {}) {
    if (horizon < 1 || horizon > 8) throw std::invalid_argument("dp_optimal: horizon must lie in [1,8]");
    if (params.l_max > 2) throw std::invalid_argument("dp_optimal: l_max <= 2 required");
    if (action_grid.empty() || action_grid.size() > 5)
        throw std::invalid_argument("dp_optimal: action grid must hold 1..5 points");

    const ChannelParams exact(params.p, horizon + 1);
    const std::size_t n = exact.aux_count();
    const int buckets_per_anchor = params.l_max + 1;
    const auto bucket_of = [&](std::size_t i) {
        const AuxState u = aux_at(exact, i);
        return static_cast<int>(u.anchor) * buckets_per_anchor + std::min(u.lag, params.l_max);
    };
    const int n_buckets = 2 * buckets_per_anchor;
    const auto grid_size = static_cast<long>(action_grid.size());

    // worst-case node estimate: every step multiplies by (actions * outputs)
    double estimate = 1.0, level = 1.0;
    for (int t = 0; t < horizon; ++t) {
        const int present = std::min(n_buckets, t + 1);
        level *= std::pow(static_cast<double>(grid_size), present) * 2.0;
        estimate += level;
    }

    struct Key {
        std::vector<std::int64_t> q;
        int t;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            std::uint64_t h = mix_seed(static_cast<std::uint64_t>(k.t));
            for (auto v : k.q) h = mix_seed(h ^ static_cast<std::uint64_t>(v));
            return h;
        }
    };
    std::unordered_map<Key, double, KeyHash> memo;
    long evaluations = 0;
    int first_action = 0;

    std::function<double(const Belief&, int)> solve = [&](const Belief& belief, int t) -> double {
        if (t == horizon) return 0.0;
        Key key{std::vector<std::int64_t>(n), t};
        for (std::size_t i = 0; i < n; ++i) key.q[i] = std::llround(belief[i] * 1e10);
        if (auto it = memo.find(key); it != memo.end()) return it->second;

        std::vector<int> present;
        for (std::size_t i = 0; i < n; ++i)
            if (belief[i] > 0.0 && std::find(present.begin(), present.end(), bucket_of(i)) == present.end())
                present.push_back(bucket_of(i));
        std::vector<int> digit(present.size(), 0);
        std::vector<double> bucket_action(static_cast<std::size_t>(n_buckets), 0.0);
        double best = -INFINITY;
        int best_first = 0;
        while (true) {
            if (++evaluations > budget.max_evaluations)
                throw BudgetExceeded("dp_optimal: evaluation budget exceeded (estimated " +
                                         std::to_string(static_cast<long long>(estimate)) + " nodes)",
                                     estimate);
            for (std::size_t j = 0; j < present.size(); ++j)
                bucket_action[static_cast<std::size_t>(present[j])] = action_grid[static_cast<std::size_t>(digit[j])];
            ActionMap a{std::vector<double>(n)};
            for (std::size_t i = 0; i < n; ++i) a.prob_one[i] = bucket_action[static_cast<std::size_t>(bucket_of(i))];

            double value = step_reward(belief, a, exact, beta).combined;
            if (t + 1 < horizon) {
                const double p1 = output_prob(belief, a, exact);
                if (p1 > 0.0) value += p1 * solve(belief_update(belief, a, 1, exact), t + 1);
                if (p1 < 1.0) value += (1.0 - p1) * solve(belief_update(belief, a, 0, exact), t + 1);
            }
            if (value > best) {
                best = value;
                best_first = present.empty() ? 0 : digit[0];
            }
            std::size_t j = 0;
            while (j < digit.size() && ++digit[j] == grid_size) digit[j++] = 0;
            if (j == digit.size()) break;
        }
        if (t == 0) first_action = best_first;
        memo.emplace(std::move(key), best);
        return best;
    };

    DpResult r;
    r.horizon = horizon;
    r.l_max = params.l_max;
    r.grid_size = static_cast<int>(grid_size);
    r.value = solve(initial_belief(exact), 0) / horizon;
    r.first_action_index = first_action;
    r.reachable_beliefs = static_cast<long>(memo.size());
    return r;
}

/// Evenly spaced grid {0, 1/(m-1), ..., 1}.
[[nodiscard]] inline std::vector<double> uniform_grid(int points) {
    if (points < 2) throw std::invalid_argument("uniform_grid: need at least 2 points");
    std::vector<double> g(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) g[static_cast<std::size_t>(i)] = static_cast<double>(i) / (points - 1);
    return g;
}

// ---------------------------------------------------------------------------
// memoryless_optimal

struct ScanResult {
    std::vector<double> q;
    std::vector<double> value;
    double q_star = 0.0;
    double value_star = 0.0;
    /// Largest |simulated - closed form| at p = 1/2, negative when not applicable.
    double closed_form_gap = -1.0;
};

/// Long-run average reward of X independent of U with Pr[X=1] = q.
[[nodiscard]] inline double constant_policy_reward(const ChannelParams& params, double beta, double q, long steps,
                                                   std::uint64_t seed) {
    Rng rng(seed);
    ddpg::BeliefEnvironment env(params, beta, Degenerate{});
    const std::vector<double> raw{q};
    double total = 0.0;
    for (long t = 0; t < steps; ++t) total += env.step(raw, rng).reward.combined;
    return total / static_cast<double>(steps);
}

/// Reward of the memoryless policy q when every flip probability is 1/2.
[[nodiscard]] inline double memoryless_closed_form_half(double q, double beta) {
    return binary_entropy(q / 2.0) - q - beta * (1.0 - q) / 2.0;
}

[[nodiscard]] inline ScanResult memoryless_optimal(const ChannelParams& params, double beta, int grid_resolution,
                                                   long horizon_long, Rng& rng) {
    if (grid_resolution < 2) throw std::invalid_argument("memoryless_optimal: grid_resolution >= 2 required");
    ScanResult r;
    r.q = uniform_grid(grid_resolution);
    const std::uint64_t seed = rng();  // common random numbers across the grid
    r.value_star = -INFINITY;
    const bool half = params.p == 0.5;
    if (half) r.closed_form_gap = 0.0;
    for (double q : r.q) {
        const double v = constant_policy_reward(params, beta, q, horizon_long, seed);
        r.value.push_back(v);
        if (v > r.value_star) {
            r.value_star = v;
            r.q_star = q;
        }
        if (half) r.closed_form_gap = std::max(r.closed_form_gap, std::abs(v - memoryless_closed_form_half(q, beta)));
    }
    return r;
}

// ---------------------------------------------------------------------------
// finite-difference gradient check

struct GradientCheck {
    double max_rel_error = 0.0;
    long checked = 0;  // coordinates compared (rectifier kink crossings are skipped)
};

/// Compares backward() against central differences of sum(weights .* output)
/// for every parameter and input coordinate. Relative errors use a 1e-6 floor in
/// the denominator: below that the difference quotient's rounding noise
/// (about 1e-11 at step 1e-5) dominates.
[[nodiscard]] inline GradientCheck finite_difference_check(nn::Mlp<double> net, const nn::Matrix<double>& input,
                                                           const nn::Matrix<double>& weights, double step = 1e-5) {
    using M = nn::Matrix<double>;
    auto objective = [&](const nn::Mlp<double>& n, const M& x) { return nn::forward(n, x).output().cwiseProduct(weights).sum(); };
    auto crosses_kink = [](const nn::Mlp<double>& a, const M& xa, const nn::Mlp<double>& b, const M& xb) {
        const auto ta = nn::forward(a, xa), tb = nn::forward(b, xb);
        for (std::size_t l = 0; l < ta.pre.size(); ++l) {
            if (a.layers[l].activation != nn::Activation::relu) continue;
            if (((ta.pre[l].array() > 0) != (tb.pre[l].array() > 0)).any()) return true;
        }
        return false;
    };
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); };

    const auto g = nn::backward(net, nn::forward(net, input), weights);
    GradientCheck out;
    auto compare = [&](double analytic, double fd) {
        out.max_rel_error = std::max(out.max_rel_error, rel(analytic, fd));
        ++out.checked;
    };
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto probe = [&](double& param, double analytic) {
            const double keep = param;
            param = keep + step;
            const nn::Mlp<double> plus = net;
            param = keep - step;
            const nn::Mlp<double> minus = net;
            param = keep;
            if (crosses_kink(plus, input, minus, input)) return;
            compare(analytic, (objective(plus, input) - objective(minus, input)) / (2 * step));
        };
        auto& layer = net.layers[l];
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) probe(layer.weight.data()[i], g.weight[l].data()[i]);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) probe(layer.bias.data()[i], g.bias[l](i));
    }
    for (Eigen::Index i = 0; i < input.size(); ++i) {
        M plus = input, minus = input;
        plus.data()[i] += step;
        minus.data()[i] -= step;
        if (crosses_kink(net, plus, net, minus)) continue;
        compare(g.input.data()[i], (objective(net, plus) - objective(net, minus)) / (2 * step));
    }
    return out;
}

/// Random relu network with nonzero biases, for gradient checks.
[[nodiscard]] inline nn::Mlp<double> random_network(Rng& rng, std::vector<int> widths, nn::Activation output) {
    auto net = nn::init_params<double>(nn::LayerSpec{std::move(widths), nn::Activation::relu, output}, rng);
    for (auto& layer : net.layers)
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = 0.2 * (uniform01(rng) - 0.5);
    return net;
}

/// Worst relative error over `n_nets` random networks (widths up to 8-16-16-4).
[[nodiscard]] inline GradientCheck random_gradient_checks(int n_nets, Rng& rng) {
    GradientCheck total;
    auto uniform_matrix = [&](Eigen::Index r, Eigen::Index c) {
        nn::Matrix<double> m(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 2.0 * uniform01(rng) - 1.0;
        return m;
    };
    for (int trial = 0; trial < n_nets; ++trial) {
        const int in = 1 + static_cast<int>(uniform_index(rng, 8));
        const int h1 = 1 + static_cast<int>(uniform_index(rng, 16));
        const int h2 = 1 + static_cast<int>(uniform_index(rng, 16));
        const int out = 1 + static_cast<int>(uniform_index(rng, 4));
        const auto act = trial % 2 ? nn::Activation::sigmoid : nn::Activation::identity;
        const auto net = random_network(rng, {in, h1, h2, out}, act);
        const auto x = uniform_matrix(in, 3);
        const auto w = uniform_matrix(out, 3);
        const auto r = finite_difference_check(net, x, w);
        total.max_rel_error = std::max(total.max_rel_error, r.max_rel_error);
        total.checked += r.checked;
    }
    return total;
}

}  // namespace memsense::oracles
