#pragma once

// Deterministic policy-gradient actor-critic over the belief MDP: epsilon-greedy
// collection into a replay buffer, bootstrapped critic regression, policy-gradient
// actor ascent and soft target tracking.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "memsense/belief.hpp"
#include "memsense/neural.hpp"
#include "memsense/random.hpp"
#include "memsense/unifilar.hpp"

namespace memsense::ddpg {

using Real = float;
using Net = nn::Mlp<Real>;
using Mat = nn::Matrix<Real>;

struct Transition {
    std::vector<double> obs_prev;
    std::vector<double> action_raw;
    double reward = 0.0;
    std::vector<double> obs_next;
};

/// Fixed-capacity ring buffer; the oldest transition is overwritten first.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, std::size_t obs_dim, std::size_t action_dim)
        : capacity_(capacity), obs_dim_(obs_dim), action_dim_(action_dim) {
        if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
        obs_prev_.reserve(std::min<std::size_t>(capacity, 4096) * obs_dim);
    }

    void push(const Transition& t) {
        if (t.obs_prev.size() != obs_dim_ || t.obs_next.size() != obs_dim_ || t.action_raw.size() != action_dim_)
            throw std::invalid_argument("ReplayBuffer: transition dimensions do not match the buffer");
        if (!std::isfinite(t.reward)) throw std::invalid_argument("ReplayBuffer: non-finite reward");
        if (size_ < capacity_) {
            obs_prev_.insert(obs_prev_.end(), t.obs_prev.begin(), t.obs_prev.end());
            actions_.insert(actions_.end(), t.action_raw.begin(), t.action_raw.end());
            obs_next_.insert(obs_next_.end(), t.obs_next.begin(), t.obs_next.end());
            rewards_.push_back(t.reward);
            ++size_;
        } else {
            std::copy(t.obs_prev.begin(), t.obs_prev.end(), obs_prev_.begin() + static_cast<long>(head_ * obs_dim_));
            std::copy(t.action_raw.begin(), t.action_raw.end(),
                      actions_.begin() + static_cast<long>(head_ * action_dim_));
            std::copy(t.obs_next.begin(), t.obs_next.end(), obs_next_.begin() + static_cast<long>(head_ * obs_dim_));
            rewards_[head_] = t.reward;
        }
        head_ = (head_ + 1) % capacity_;
        ++inserted_;
    }

    [[nodiscard]] Transition at(std::size_t i) const {
        if (i >= size_) throw std::out_of_range("ReplayBuffer::at");
        auto slice = [](const std::vector<double>& v, std::size_t pos, std::size_t n) {
            return std::vector<double>(v.begin() + static_cast<long>(pos * n), v.begin() + static_cast<long>((pos + 1) * n));
        };
        return {slice(obs_prev_, i, obs_dim_), slice(actions_, i, action_dim_), rewards_[i], slice(obs_next_, i, obs_dim_)};
    }

    [[nodiscard]] std::size_t size() const { return size_; }
    [[nodiscard]] std::size_t capacity() const { return capacity_; }
    [[nodiscard]] std::uint64_t inserted() const { return inserted_; }
    [[nodiscard]] std::size_t obs_dim() const { return obs_dim_; }
    [[nodiscard]] std::size_t action_dim() const { return action_dim_; }

    /// Columns of the returned batch are transitions at `indices`.
    struct Batch {
        Mat obs_prev, actions, obs_next;
        std::vector<double> rewards;
        [[nodiscard]] Eigen::Index size() const { return obs_prev.cols(); }
    };

    [[nodiscard]] Batch gather(std::span<const std::size_t> indices) const {
        const auto n = static_cast<Eigen::Index>(indices.size());
        Batch b{Mat(obs_dim_, n), Mat(action_dim_, n), Mat(obs_dim_, n), std::vector<double>(indices.size())};
        for (Eigen::Index j = 0; j < n; ++j) {
            const std::size_t i = indices[static_cast<std::size_t>(j)];
            for (std::size_t r = 0; r < obs_dim_; ++r) {
                b.obs_prev(static_cast<Eigen::Index>(r), j) = static_cast<Real>(obs_prev_[i * obs_dim_ + r]);
                b.obs_next(static_cast<Eigen::Index>(r), j) = static_cast<Real>(obs_next_[i * obs_dim_ + r]);
            }
            for (std::size_t r = 0; r < action_dim_; ++r)
                b.actions(static_cast<Eigen::Index>(r), j) = static_cast<Real>(actions_[i * action_dim_ + r]);
            b.rewards[static_cast<std::size_t>(j)] = rewards_[i];
        }
        return b;
    }

    /// Uniform sample with replacement. Requires size() >= n.
    template <typename Engine>
    [[nodiscard]] Batch sample(std::size_t n, Engine& rng) const {
        if (n == 0 || size_ < n)
            throw std::logic_error("ReplayBuffer: cannot sample " + std::to_string(n) + " from " + std::to_string(size_));
        std::vector<std::size_t> idx(n);
        for (auto& i : idx) i = uniform_index(rng, size_);
        return gather(idx);
    }

private:
    std::size_t capacity_;
    std::size_t obs_dim_;
    std::size_t action_dim_;
    std::size_t size_ = 0;
    std::size_t head_ = 0;
    std::uint64_t inserted_ = 0;
    std::vector<double> obs_prev_, actions_, obs_next_, rewards_;
};

struct AgentBundle {
    Net actor, critic, target_actor, target_critic;
    nn::OptimizerState<Real> actor_opt, critic_opt;
    bool product_features = false;  // critic also sees obs .* action

    [[nodiscard]] Eigen::Index obs_dim() const { return actor.input_dim(); }
    [[nodiscard]] Eigen::Index action_dim() const { return actor.output_dim(); }
};

struct EpsilonSchedule {
    double start = 0.9;
    double decay = 0.995;  // per episode
    double floor = 0.05;

    [[nodiscard]] double at(int episode) const {
        return std::max(floor, start * std::pow(decay, static_cast<double>(episode)));
    }
};

struct TrainConfig {
    ChannelParams params{};
    double beta = 0.5;
    StateSpaceMode mode{};
    int episodes = 500;
    int steps = 100;
    int batch = 64;
    std::size_t buffer_capacity = 100000;
    double gamma = 0.95;
    double tau = 0.005;
    EpsilonSchedule epsilon{};
    double actor_step = 1e-4;
    double critic_step = 1e-3;
    std::vector<int> hidden{64, 64};
    nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
    bool literal_loss = false;
    bool product_features = false;
    std::uint64_t seed = 1;

    void validate() const {
        params.validate();
        auto fail = [](const std::string& key, const std::string& why) {
            throw std::invalid_argument("invalid config '" + key + "': " + why);
        };
        if (episodes < 1) fail("episodes", "must be >= 1");
        if (steps < 1) fail("steps", "must be >= 1");
        if (batch < 1) fail("batch", "must be >= 1");
        if (buffer_capacity < static_cast<std::size_t>(batch)) fail("buffer", "must hold at least one batch");
        if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma", "must lie in [0,1)");
        if (!(tau > 0.0 && tau <= 1.0)) fail("tau", "must lie in (0,1]");
        for (double e : {epsilon.start, epsilon.floor})
            if (!(e >= 0.0 && e <= 1.0)) fail("epsilon", "must lie in [0,1]");
        if (!(epsilon.decay > 0.0 && epsilon.decay <= 1.0)) fail("epsilon_decay", "must lie in (0,1]");
        if (!(actor_step >= 0.0) || !(critic_step >= 0.0)) fail("step_size", "must be nonnegative");
        if (!(beta >= 0.0)) fail("beta", "must be nonnegative");
    }
};

struct EvalReport {
    double avg_reward = 0.0;
    double avg_info = 0.0;
    double avg_distortion = 0.0;
    double epsilon = 0.0;  // exploration rate in force (0 for greedy evaluation)
    long mc_length = 0;
    std::uint64_t seed = 0;
};

[[nodiscard]] inline AgentBundle make_agent(const TrainConfig& cfg, Rng& rng) {
    const auto obs = static_cast<int>(view_dim(cfg.params, cfg.mode));
    const int act = obs;
    nn::LayerSpec actor_spec{{obs}, nn::Activation::relu, nn::Activation::sigmoid};
    const int critic_in = obs + act + (cfg.product_features ? act : 0);
    nn::LayerSpec critic_spec{{critic_in}, nn::Activation::relu, nn::Activation::identity};
    for (int h : cfg.hidden) {
        actor_spec.widths.push_back(h);
        critic_spec.widths.push_back(h);
    }
    actor_spec.widths.push_back(act);
    critic_spec.widths.push_back(1);
    AgentBundle b;
    b.actor = nn::init_params<Real>(actor_spec, rng);
    b.critic = nn::init_params<Real>(critic_spec, rng);
    b.target_actor = b.actor;
    b.target_critic = b.critic;
    b.actor_opt = nn::make_optimizer(b.actor, cfg.optimizer);
    b.critic_opt = nn::make_optimizer(b.critic, cfg.optimizer);
    b.product_features = cfg.product_features;
    return b;
}

[[nodiscard]] inline Mat to_column(std::span<const double> v) {
    Mat m(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = static_cast<Real>(v[i]);
    return m;
}

[[nodiscard]] inline std::vector<double> greedy_action(const AgentBundle& agent, std::span<const double> obs) {
    const Mat out = nn::forward(agent.actor, to_column(obs)).output();
    std::vector<double> a(static_cast<std::size_t>(out.rows()));
    for (Eigen::Index i = 0; i < out.rows(); ++i) a[static_cast<std::size_t>(i)] = static_cast<double>(out(i, 0));
    return a;
}

/// With probability eps a uniform point of [0,1]^dim, otherwise the actor output.
[[nodiscard]] inline std::vector<double> select_action(const AgentBundle& agent, std::span<const double> obs,
                                                       double eps, Rng& rng) {
    if (uniform01(rng) < eps) {
        std::vector<double> a(static_cast<std::size_t>(agent.action_dim()));
        for (double& v : a) v = uniform01(rng);
        return a;
    }
    return greedy_action(agent, obs);
}

namespace detail {
/// Critic input: [obs; action], plus obs .* action when the bundle asks for it.
inline Mat critic_input(const AgentBundle& agent, const Mat& obs, const Mat& action) {
    const Eigen::Index extra = agent.product_features ? action.rows() : 0;
    Mat m(obs.rows() + action.rows() + extra, obs.cols());
    if (extra) m << obs, action, obs.cwiseProduct(action);
    else m << obs, action;
    return m;
}
}  // namespace detail

/// b_j = r_j + gamma * Q'(s'_j, A'(s'_j)).
[[nodiscard]] inline std::vector<double> td_target(const ReplayBuffer::Batch& batch, const AgentBundle& agent,
                                                   double gamma) {
    std::vector<double> b(batch.rewards);
    if (gamma == 0.0) return b;
    const Mat next_actions = nn::forward(agent.target_actor, batch.obs_next).output();
    const Mat q = nn::forward(agent.target_critic, detail::critic_input(agent, batch.obs_next, next_actions)).output();
    for (std::size_t j = 0; j < b.size(); ++j) b[j] += gamma * static_cast<double>(q(0, static_cast<Eigen::Index>(j)));
    return b;
}

/// One gradient step on (1/N) sum (Q(s, a) - b)^2; returns the pre-update loss.
/// The regressed action is the stored behavior action, or A(s) with `literal`.
inline double critic_step(AgentBundle& agent, const ReplayBuffer::Batch& batch, std::span<const double> targets,
                          double step_size, bool literal = false) {
    const Eigen::Index n = batch.size();
    const Mat actions = literal ? Mat(nn::forward(agent.actor, batch.obs_prev).output()) : batch.actions;
    const auto trace = nn::forward(agent.critic, detail::critic_input(agent, batch.obs_prev, actions));
    Mat grad(1, n);
    double loss = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double err = static_cast<double>(trace.output()(0, j)) - targets[static_cast<std::size_t>(j)];
        loss += err * err;
        grad(0, j) = static_cast<Real>(2.0 * err / static_cast<double>(n));
    }
    const auto g = nn::backward(agent.critic, trace, grad);
    nn::apply_update(agent.critic, g, step_size, agent.critic_opt);
    return loss / static_cast<double>(n);
}

/// Ascent on the mean critic value (1/N) sum Q(s, A(s)); the critic is untouched.
inline void actor_step(AgentBundle& agent, const ReplayBuffer::Batch& batch, double step_size) {
    const Eigen::Index n = batch.size();
    const auto actor_trace = nn::forward(agent.actor, batch.obs_prev);
    const auto critic_trace = nn::forward(agent.critic, detail::critic_input(agent, batch.obs_prev, actor_trace.output()));
    const Mat ones = Mat::Constant(1, n, Real(1) / static_cast<Real>(n));
    const auto critic_grad = nn::backward(agent.critic, critic_trace, ones, false);
    // descent on -Q
    const Eigen::Index na = agent.action_dim();
    Mat dq_da = -critic_grad.input.middleRows(agent.obs_dim(), na);
    if (agent.product_features) dq_da -= batch.obs_prev.cwiseProduct(critic_grad.input.bottomRows(na));
    const auto g = nn::backward(agent.actor, actor_trace, dq_da);
    nn::apply_update(agent.actor, g, step_size, agent.actor_opt);
}

inline void soft_update(AgentBundle& agent, double tau) {
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must lie in (0,1]");
    nn::blend_into(agent.target_actor, agent.actor, tau);
    nn::blend_into(agent.target_critic, agent.critic, tau);
}

/// Belief-MDP environment the agent interacts with: true channel state plus the
/// receiver-side belief it induces.
class BeliefEnvironment {
public:
    BeliefEnvironment(const ChannelParams& params, double beta, const StateSpaceMode& mode)
        : params_(params), beta_(beta), mode_(mode) {
        reset();
    }

    void reset() {
        env_ = EnvState{};
        belief_ = initial_belief(params_);
    }

    [[nodiscard]] std::vector<double> observation() const { return observe(belief_, mode_, params_); }
    [[nodiscard]] const Belief& belief() const { return belief_; }
    [[nodiscard]] const EnvState& state() const { return env_; }

    struct Step {
        ActionMap action;
        RewardBreakdown reward;
        Bit x = 0, y = 0;
        double realized_distortion = 0.0;
    };

    Step step(std::span<const double> raw, Rng& rng) {
        Step out;
        out.action = action_from_raw(raw, mode_, params_);
        out.reward = step_reward(belief_, out.action, params_, beta_);
        const AuxState u = env_.aux;
        out.x = bernoulli(rng, out.action[aux_index(params_, u)]) ? 1 : 0;
        const auto o = env_step(params_, env_, out.x, rng);
        out.y = o.y;
        out.realized_distortion = optimal_estimate(params_, u, out.x, o.y).s_hat != o.s_true ? 1.0 : 0.0;
        belief_ = belief_update(belief_, out.action, o.y, params_);
        env_ = o.next;
        return out;
    }

private:
    ChannelParams params_;
    double beta_;
    StateSpaceMode mode_;
    EnvState env_{};
    Belief belief_;
};

/// Greedy rollout of `mc_length` steps from a fresh environment, averaging the
/// exact per-step rewards.
[[nodiscard]] inline EvalReport evaluate(const AgentBundle& agent, const TrainConfig& cfg, long mc_length,
                                         std::uint64_t seed) {
    if (mc_length < 1) throw std::invalid_argument("evaluate: mc_length must be >= 1");
    Rng rng(seed);
    BeliefEnvironment env(cfg.params, cfg.beta, cfg.mode);
    double info = 0.0, dist = 0.0;
    for (long t = 0; t < mc_length; ++t) {
        const auto s = env.step(greedy_action(agent, env.observation()), rng);
        info += s.reward.info;
        dist += s.reward.distortion;
    }
    EvalReport r;
    r.avg_info = info / static_cast<double>(mc_length);
    r.avg_distortion = dist / static_cast<double>(mc_length);
    r.avg_reward = r.avg_info - cfg.beta * r.avg_distortion;
    r.mc_length = mc_length;
    r.seed = seed;
    return r;
}

struct TrainResult {
    AgentBundle agent;
    std::vector<EvalReport> curve;  // per-episode means of the exact training rewards
};

/// Called once per stored transition; used by audits and tests.
using TransitionHook = std::function<void(const Belief&, const ActionMap&, const Transition&)>;
/// Called after every episode with its index and training-reward summary.
using EpisodeHook = std::function<void(int, const EvalReport&)>;

[[nodiscard]] inline TrainResult train(const TrainConfig& cfg, const TransitionHook& hook = {},
                                       const EpisodeHook& on_episode = {}) {
    cfg.validate();
    Rng rng(mix_seed(cfg.seed));
    TrainResult result{make_agent(cfg, rng), {}};
    AgentBundle& agent = result.agent;
    const std::size_t dim = view_dim(cfg.params, cfg.mode);
    ReplayBuffer buffer(cfg.buffer_capacity, dim, dim);
    BeliefEnvironment env(cfg.params, cfg.beta, cfg.mode);
    const auto batch_size = static_cast<std::size_t>(cfg.batch);
    result.curve.reserve(static_cast<std::size_t>(cfg.episodes));

    for (int ep = 0; ep < cfg.episodes; ++ep) {
        const double eps = cfg.epsilon.at(ep);
        env.reset();
        double info = 0.0, dist = 0.0;
        for (int t = 0; t < cfg.steps; ++t) {
            Transition tr;
            tr.obs_prev = env.observation();
            tr.action_raw = select_action(agent, tr.obs_prev, eps, rng);
            const Belief before = hook ? env.belief() : Belief{};
            const auto s = env.step(tr.action_raw, rng);
            tr.reward = s.reward.combined;
            tr.obs_next = env.observation();
            info += s.reward.info;
            dist += s.reward.distortion;
            if (hook) hook(before, s.action, tr);
            buffer.push(tr);

            if (buffer.size() >= batch_size) {
                const auto batch = buffer.sample(batch_size, rng);
                const auto targets = td_target(batch, agent, cfg.gamma);
                critic_step(agent, batch, targets, cfg.critic_step, cfg.literal_loss);
                actor_step(agent, batch, cfg.actor_step);
                soft_update(agent, cfg.tau);
            }
        }
        EvalReport r;
        r.avg_info = info / cfg.steps;
        r.avg_distortion = dist / cfg.steps;
        r.avg_reward = r.avg_info - cfg.beta * r.avg_distortion;
        r.epsilon = eps;
        r.mc_length = cfg.steps;
        r.seed = cfg.seed;
        result.curve.push_back(r);
        if (on_episode) on_episode(ep, r);
    }
    return result;
}

}  // namespace memsense::ddpg
