// Acceptance gate: every primary criterion at its stated tolerance, one
// PASS/FAIL line each. Exit status is nonzero when any criterion fails.
//
//   acceptance                  run everything
//   acceptance NAME...          run only the named criteria (see kCriteria)
//   acceptance --log FILE ...   also write the report to FILE

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "memsense/harness.hpp"

using namespace memsense;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

/// Agent settings shared by every training criterion. A short discount and a
/// critic that sees obs .* action make training reliable across seeds.
ddpg::TrainConfig agent_config(double p, double beta, const StateSpaceMode& mode) {
    ddpg::TrainConfig c;
    c.params = ChannelParams(p, 16);
    c.gamma = 0.3;
    c.product_features = true;
    c.beta = beta;
    c.mode = mode;
    return c;
}

/// Evaluation reports for every (config, base seed) pair, trained in parallel.
std::vector<ddpg::EvalReport> train_all(const std::vector<ddpg::TrainConfig>& configs,
                                        const std::vector<std::uint64_t>& seeds, long mc_length) {
    std::vector<ddpg::EvalReport> out(configs.size() * seeds.size());
    harness::parallel_for(out.size(), harness::worker_count(), [&](std::size_t i) {
        harness::ExperimentConfig e;
        e.train = configs[i / seeds.size()];
        e.mc_length = mc_length;
        e.save_agents = false;
        out[i] = harness::run_single(e, seeds[i % seeds.size()]).eval;
    });
    return out;
}

const std::vector<std::uint64_t> kSeeds5{1, 2, 3, 4, 5};

Outcome flip_recursion() {
    double worst = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const ChannelParams c(i / 100.0, 64);
        for (int lag = 1; lag <= 64; ++lag) worst = std::max(worst, std::abs(flip_prob(c, lag) - flip_prob_recursive(c, lag)));
    }
    return {worst <= 1e-12, "max |closed form - recursion| " + sci(worst)};
}

Outcome reward_oracle() {
    Rng rng(2024);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const ChannelParams c(uniform01(rng), 1 + static_cast<int>(uniform_index(rng, 3)));
        const auto b = harness::detail::random_belief(c, rng);
        const auto a = harness::detail::random_action(c, rng);
        const double beta = 2.0 * uniform01(rng);
        const auto x = step_reward(b, a, c, beta);
        const auto y = oracles::brute_reward(b, a, c, beta);
        worst = std::max({worst, std::abs(x.info - y.info), std::abs(x.distortion - y.distortion),
                          std::abs(x.combined - y.combined)});
    }
    return {worst <= 1e-9, "max |step_reward - brute force| " + sci(worst) + " over 1e4 instances"};
}

Outcome bayes() {
    Rng rng(7);
    double worst = 0.0;
    std::string detail;
    for (double p : {0.1, 0.3, 0.5}) {
        const ChannelParams c(p, 5);
        const auto policy = oracles::random_policy(c, 4, rng);
        const auto r = oracles::mc_belief_check(policy, c, 4, 100000, rng);
        worst = std::max(worst, r.max_tv);
        detail += "p=" + num(p, 1) + " TV " + num(r.max_tv) + " (" + std::to_string(r.prefixes_checked) + " prefixes)  ";
    }
    return {worst <= 0.02, detail};
}

Outcome gradients() {
    Rng rng(99);
    const auto g = oracles::random_gradient_checks(100, rng);
    return {g.checked > 0 && g.max_rel_error < 1e-4,
            "max relative error " + sci(g.max_rel_error) + " over " + std::to_string(g.checked) + " coordinates"};
}

Outcome degenerate_optimum() {
    Rng rng(11);
    const double target = oracles::memoryless_optimal(ChannelParams(0.5, 16), 1.0, 301, 20000, rng).value_star;
    const auto evals = train_all({agent_config(0.5, 1.0, Degenerate{})}, {1, 2, 3}, 1000);
    bool ok = true;
    std::string detail = "oracle " + num(target) + ", agents";
    for (const auto& e : evals) {
        ok = ok && std::abs(e.avg_reward - target) <= 0.02;
        detail += " " + num(e.avg_reward);
    }
    return {ok, detail};
}

Outcome alternating_capacity() {
    const double target = oracles::dp_optimal(ChannelParams(1.0, 2), 4, 0.0, {0.0, 0.5, 1.0}).value;
    const auto evals = train_all({agent_config(1.0, 0.0, Unbounded{})}, {1}, 1000);
    const double info = evals[0].avg_info;
    return {std::abs(info - target) <= 0.05, "oracle " + num(target) + ", agent info " + num(info)};
}

Outcome ordering() {
    const std::vector<double> betas{0.0, 0.25, 0.5, 0.75, 1.0};
    const std::vector<StateSpaceMode> modes{Degenerate{}, Limited{0.1}, Limited{0.4}, Unbounded{}};
    std::vector<ddpg::TrainConfig> configs;
    for (double b : betas)
        for (const auto& m : modes) configs.push_back(agent_config(0.1, b, m));
    const auto evals = train_all(configs, kSeeds5, 1000);
    bool ok = true;
    std::string detail;
    for (std::size_t bi = 0; bi < betas.size(); ++bi) {
        std::vector<double> mean(modes.size(), 0.0);
        for (std::size_t m = 0; m < modes.size(); ++m)
            for (std::size_t s = 0; s < kSeeds5.size(); ++s)
                mean[m] += evals[(bi * modes.size() + m) * kSeeds5.size() + s].avg_reward / kSeeds5.size();
        detail += "\n      beta " + num(betas[bi], 2) + ":";
        for (std::size_t m = 0; m < modes.size(); ++m) {
            const bool step_ok = m == 0 || mean[m] - mean[m - 1] >= -0.01;
            ok = ok && step_ok;
            detail += std::string(m ? (step_ok ? " <= " : " !<= ") : " ") + num(mean[m]);
        }
    }
    return {ok, "degenerate <= limited(0.1) <= limited(0.4) <= unbounded, slack 0.01" + detail};
}

Outcome collapse() {
    const std::vector<double> betas{0.0, 0.5, 1.0};
    std::vector<ddpg::TrainConfig> configs;
    for (double b : betas) {
        configs.push_back(agent_config(0.5, b, Unbounded{}));
        configs.push_back(agent_config(0.5, b, Degenerate{}));
    }
    const auto evals = train_all(configs, kSeeds5, 1000);
    bool ok = true;
    std::string detail;
    for (std::size_t bi = 0; bi < betas.size(); ++bi) {
        double unb = 0.0, deg = 0.0;
        for (std::size_t s = 0; s < kSeeds5.size(); ++s) {
            unb += evals[(2 * bi) * kSeeds5.size() + s].avg_reward / kSeeds5.size();
            deg += evals[(2 * bi + 1) * kSeeds5.size() + s].avg_reward / kSeeds5.size();
        }
        ok = ok && std::abs(unb - deg) <= 0.02;
        detail += "beta " + num(betas[bi], 1) + ": unbounded " + num(unb) + " degenerate " + num(deg) + "  ";
    }
    return {ok, detail};
}

Outcome dominance() {
    const std::vector<double> betas{0.0, 0.5, 1.0, 2.0, 4.0, 8.0};
    const std::vector<StateSpaceMode> modes{Degenerate{}, Unbounded{}};
    std::vector<ddpg::TrainConfig> configs;
    for (const auto& m : modes)
        for (double b : betas) configs.push_back(agent_config(0.3, b, m));
    const auto evals = train_all(configs, kSeeds5, 1000);
    std::vector<harness::TradeOffCurve> curves;
    for (std::size_t m = 0; m < modes.size(); ++m) {
        harness::TradeOffCurve c{modes[m], {}};
        for (std::size_t bi = 0; bi < betas.size(); ++bi) {
            harness::TradeOffPoint pt{betas[bi], 0, 0, 0};
            for (std::size_t s = 0; s < kSeeds5.size(); ++s) {
                const auto& e = evals[(m * betas.size() + bi) * kSeeds5.size() + s];
                pt.distortion += e.avg_distortion / kSeeds5.size();
                pt.info += e.avg_info / kSeeds5.size();
                pt.reward += e.avg_reward / kSeeds5.size();
            }
            c.points.push_back(pt);
        }
        std::sort(c.points.begin(), c.points.end(),
                  [](const auto& a, const auto& b) { return a.distortion < b.distortion; });
        curves.push_back(c);
    }
    const auto d = harness::weakly_dominates(curves[1], curves[0], 0.01);
    std::string detail = "worst info gap " + num(d.worst_gap);
    for (const auto& c : curves) {
        detail += "\n      " + c.mode.name() + ":";
        for (const auto& pt : c.points) detail += " (" + num(pt.distortion, 3) + ", " + num(pt.info, 3) + ")";
    }
    return {d.holds, detail};
}

Outcome dp_monotone() {
    Rng rng(5);
    const std::vector<std::vector<double>> grids{{0.0, 1.0}, {0.0, 0.5, 1.0}, oracles::uniform_grid(5)};
    double worst = INFINITY;
    for (int i = 0; i < 10; ++i) {
        const double p = uniform01(rng), beta = 1.5 * uniform01(rng);
        const int horizon = 3 + static_cast<int>(uniform_index(rng, 2));
        double prev = -INFINITY;
        for (const auto& g : grids) {
            const double v = oracles::dp_optimal({p, 2}, horizon, beta, g).value;
            worst = std::min(worst, v - prev);
            prev = v;
        }
        prev = -INFINITY;
        for (int lmax = 1; lmax <= 2; ++lmax) {
            const double v = oracles::dp_optimal({p, lmax}, horizon, beta, grids[1]).value;
            worst = std::min(worst, v - prev);
            prev = v;
        }
    }
    return {worst >= -1e-12, "smallest increment " + sci(worst) + " over 10 instances"};
}

struct Criterion {
    const char* name;
    const char* title;
    Outcome (*run)();
};

const Criterion kCriteria[] = {
    {"flip", "closed form vs recursion, |diff| <= 1e-12", flip_recursion},
    {"reward", "step_reward vs brute force, |diff| <= 1e-9", reward_oracle},
    {"bayes", "Monte Carlo posterior TV <= 0.02", bayes},
    {"gradient", "backprop vs finite differences < 1e-4", gradients},
    {"degenerate", "degenerate agent within 0.02 of memoryless optimum (p=0.5, beta=1)", degenerate_optimum},
    {"capacity", "alternating state info within 0.05 of DP value (p=1, beta=0)", alternating_capacity},
    {"ordering", "reward ordering across state spaces (p=0.1)", ordering},
    {"collapse", "|unbounded - degenerate| <= 0.02 at p=0.5", collapse},
    {"tradeoff", "unbounded trade-off curve dominates degenerate (p=0.3)", dominance},
    {"dp", "dp_optimal monotone in grid and lag resolution", dp_monotone},
};

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> wanted;
    std::FILE* log = nullptr;
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--log" && i + 1 < argc) log = std::fopen(argv[++i], "w");
        else wanted.emplace_back(argv[i]);
    }
    auto emit = [&](const std::string& text) {
        std::fputs(text.c_str(), stdout);
        std::fflush(stdout);
        if (log) {
            std::fputs(text.c_str(), log);
            std::fflush(log);
        }
    };
    int failures = 0, ran = 0;
    for (const auto& c : kCriteria) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.name) == wanted.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        char head[512];
        std::snprintf(head, sizeof head, "[%s] %-10s %s  (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.name, c.title, secs);
        emit(head + std::string("      ") + o.detail + "\n");
        failures += o.pass ? 0 : 1;
        ++ran;
    }
    emit(std::to_string(ran - failures) + " of " + std::to_string(ran) + " criteria passed\n");
    if (log) std::fclose(log);
    return failures == 0 ? 0 : 1;
}
