// Trains a degenerate (memoryless) agent and compares it with the brute-force
// memoryless optimum for the same channel.
//
//   degenerate_vs_oracle [p] [beta] [episodes]

#include <cstdio>
#include <cstdlib>

#include "memsense/ddpg.hpp"
#include "memsense/oracles.hpp"

using namespace memsense;

int main(int argc, char** argv) {
    ddpg::TrainConfig cfg;
    cfg.params = ChannelParams(argc > 1 ? std::atof(argv[1]) : 0.5, 16);
    cfg.beta = argc > 2 ? std::atof(argv[2]) : 1.0;
    cfg.episodes = argc > 3 ? std::atoi(argv[3]) : 200;
    cfg.mode = Degenerate{};
    cfg.gamma = 0.3;
    cfg.product_features = true;

    const auto trained = ddpg::train(cfg, {}, [](int episode, const ddpg::EvalReport& r) {
        if ((episode + 1) % 50 == 0) std::printf("episode %4d  mean reward %.4f\n", episode + 1, r.avg_reward);
    });
    const auto eval = ddpg::evaluate(trained.agent, cfg, 20000, 1);

    Rng rng(1);
    const auto scan = oracles::memoryless_optimal(cfg.params, cfg.beta, 101, 20000, rng);
    std::printf("agent  reward %.4f  info %.4f  distortion %.4f\n", eval.avg_reward, eval.avg_info, eval.avg_distortion);
    std::printf("oracle reward %.4f at Pr[X=1] = %.2f\n", scan.value_star, scan.q_star);
}
