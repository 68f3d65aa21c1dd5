// Runs the channel under a fixed sensing rule and prints how the belief over
// (lag, anchor) evolves alongside the per-step reward terms.
//
//   belief_trace [p] [steps]

#include <cstdio>
#include <cstdlib>

#include "memsense/belief.hpp"

using namespace memsense;

int main(int argc, char** argv) {
    const double p = argc > 1 ? std::atof(argv[1]) : 0.1;
    const int steps = argc > 2 ? std::atoi(argv[2]) : 12;
    const ChannelParams params(p, 4);
    const double beta = 0.5;

    // Sense with probability 1/2 whenever the last reading is at least a step old.
    ActionMap action = ActionMap::constant(params, 0.0);
    for (std::size_t i = 0; i < params.aux_count(); ++i)
        if (aux_at(params, i).lag >= 1) action.prob_one[i] = 0.5;

    Rng rng(3);
    EnvState env;
    Belief b = initial_belief(params);
    std::printf("step  x  y  s  info    dist    argmax(lag,anchor)\n");
    for (int t = 0; t < steps; ++t) {
        const auto r = step_reward(b, action, params, beta);
        const Bit x = bernoulli(rng, action[aux_index(params, env.aux)]) ? 1 : 0;
        const auto out = env_step(params, env, x, rng);
        b = belief_update(b, action, out.y, params);
        env = out.next;
        std::size_t best = 0;
        for (std::size_t i = 1; i < b.size(); ++i)
            if (b[i] > b[best]) best = i;
        const auto u = aux_at(params, best);
        std::printf("%4d  %d  %d  %d  %.4f  %.4f  (%d,%d) %.3f\n", t, x, out.y, out.s_true, r.info, r.distortion, u.lag,
                    u.anchor, b[best]);
    }
}
