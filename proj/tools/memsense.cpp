// memsense: command-line front end for training, evaluation, sweeps and oracles.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

#include "memsense/harness.hpp"

namespace {

using namespace memsense;
using harness::Settings;

/// Flags shared by train, sweep and tradeoff. Values stay textual until
/// resolution so that config files and flags go through one parser.
struct SettingFlags {
    std::map<std::string, std::string> values;
    std::string config;
    bool literal_loss = false;
    bool critic_products = false;
    bool no_timing = false;
    bool no_agents = false;

    void attach(CLI::App& app, bool lists) {
        const char* list_note = lists ? " (comma-separated list)" : "";
        auto opt = [&](const std::string& key, const std::string& help) {
            app.add_option("--" + key, values[key], help);
        };
        opt("p", std::string("state flip probability") + list_note);
        opt("beta", std::string("distortion weight") + list_note);
        opt("mode", std::string("unbounded | limited | degenerate, or limited:K") + list_note);
        opt("k", std::string("fraction of lags the limited view resolves") + list_note);
        opt("lmax", "lag truncation");
        opt("episodes", "training episodes");
        opt("steps", "steps per episode");
        opt("mc", "evaluation length");
        opt("seed", "base seed");
        opt("seeds", "seed list, e.g. 1,2,3 or 1-5");
        opt("out", "output directory");
        opt("gamma", "discount factor");
        opt("tau", "target tracking rate");
        opt("batch", "minibatch size");
        opt("buffer", "replay capacity");
        opt("actor-lr", "actor step size");
        opt("critic-lr", "critic step size");
        opt("hidden", "hidden widths, e.g. 64,64");
        opt("optimizer", "adam | sgd");
        opt("epsilon-start", "initial exploration rate");
        opt("epsilon-decay", "per-episode exploration decay");
        opt("epsilon-floor", "minimum exploration rate");
        app.add_option("--config", config, "key = value settings file; flags override it");
        app.add_flag("--literal-loss", literal_loss, "critic regresses Q at the actor's action instead of the stored one");
        app.add_flag("--critic-products", critic_products, "critic input also carries obs * action products");
        app.add_flag("--no-timing", no_timing, "write wall_seconds = 0 so outputs are byte-reproducible");
        app.add_flag("--no-agents", no_agents, "skip writing agent parameter files");
    }

    [[nodiscard]] Settings resolve() const {
        Settings s = config.empty() ? Settings{} : harness::parse_config_file(config);
        for (const auto& [k, v] : values)
            if (!v.empty()) s[k] = v;
        if (literal_loss) s["literal-loss"] = "true";
        if (critic_products) s["critic-products"] = "true";
        if (no_timing) s["timing"] = "false";
        if (no_agents) s["save-agents"] = "false";
        return s;
    }
};

void print_eval(const harness::RunRecord& r) {
    std::printf("%-40s reward %.6f  info %.6f  distortion %.6f\n", r.run_id.c_str(), r.avg_reward, r.avg_info,
                r.avg_distortion);
}

int cmd_train(const SettingFlags& flags) {
    const auto exp = harness::resolve_experiment(flags.resolve());
    const auto rows = harness::run_experiment(exp);
    for (const auto& r : harness::eval_rows(rows)) print_eval(r);
    std::printf("wrote %s\n", (exp.out_dir / "runs.csv").string().c_str());
    return 0;
}

int cmd_sweep(const SettingFlags& flags) {
    const auto [spec, base] = harness::resolve_sweep(flags.resolve());
    const auto res = harness::run_sweep(spec, base);
    std::printf("%-10s %5s %6s %6s %3s  %-18s %-18s %-18s\n", "mode", "k", "p", "beta", "n", "reward", "info",
                "distortion");
    for (const auto& s : res.summary)
        std::printf("%-10s %5.2f %6.3f %6.3f %3d  %.4f +- %.4f   %.4f +- %.4f   %.4f +- %.4f\n", s.mode.c_str(), s.k,
                    s.p, s.beta, s.n, s.mean_reward, s.sd_reward, s.mean_info, s.sd_info, s.mean_distortion,
                    s.sd_distortion);
    for (const auto& f : res.failures) std::fprintf(stderr, "failed %s: %s\n", f.run_id.c_str(), f.message.c_str());
    std::printf("wrote %s\n", (base.out_dir / "summary.csv").string().c_str());
    return res.failures.empty() ? 0 : 1;
}

int cmd_tradeoff(const SettingFlags& flags) {
    Settings s = flags.resolve();
    if (!s.count("mode")) s["mode"] = "degenerate,unbounded";
    if (!s.count("p")) s["p"] = "0.3";
    if (!s.count("beta")) s["beta"] = "0,0.25,0.5,1,2,4,8";
    const auto [spec, base] = harness::resolve_sweep(s);
    if (spec.ps.size() != 1) throw std::invalid_argument("invalid config 'p': tradeoff takes a single value");
    const auto curves = harness::trade_off_curve(spec.ps[0], spec.betas, spec.modes, spec.seeds, base);
    for (const auto& c : curves) {
        std::printf("%s%s\n", c.mode.name().c_str(),
                    c.mode.is_limited() ? (" k=" + harness::format_number(c.mode.k())).c_str() : "");
        for (const auto& pt : c.points)
            std::printf("  beta %-6g distortion %.4f  info %.4f\n", pt.beta, pt.distortion, pt.info);
    }
    const harness::TradeOffCurve* unb = nullptr;
    const harness::TradeOffCurve* deg = nullptr;
    for (const auto& c : curves) {
        if (c.mode.is_unbounded()) unb = &c;
        if (c.mode.is_degenerate()) deg = &c;
    }
    if (unb && deg) {
        const auto d = harness::weakly_dominates(*unb, *deg, 0.01);
        std::printf("unbounded dominates degenerate (slack 0.01): %s, worst gap %.4f\n", d.holds ? "yes" : "no",
                    d.worst_gap);
    }
    std::printf("wrote %s\n", (base.out_dir / "tradeoff.csv").string().c_str());
    return 0;
}

int cmd_eval(const std::string& agent_dir, long mc, std::uint64_t seed, const std::string& out) {
    const auto loaded = harness::load_agent(agent_dir);
    const auto rep = ddpg::evaluate(loaded.agent, loaded.config, mc, harness::eval_seed(seed));
    harness::RunRecord r;
    r.run_id = loaded.manifest.value("run_id", std::string("agent"));
    r.mode = loaded.config.mode.name();
    r.k = loaded.config.mode.k();
    r.p = loaded.config.params.p;
    r.beta = loaded.config.beta;
    r.seed = seed;
    r.phase = "eval";
    r.episode = loaded.config.episodes;
    r.avg_reward = rep.avg_reward;
    r.avg_info = rep.avg_info;
    r.avg_distortion = rep.avg_distortion;
    print_eval(r);
    if (!out.empty()) {
        harness::prepare_out_dir(out);
        harness::write_csv(std::filesystem::path(out) / "eval.csv", {r});
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Belief-state reinforcement learning for a sensing channel with memory"};
    app.require_subcommand(1);

    SettingFlags train_flags, sweep_flags, tradeoff_flags;
    auto* train = app.add_subcommand("train", "train and evaluate one configuration over one or more seeds");
    train_flags.attach(*train, false);
    auto* sweep = app.add_subcommand("sweep", "cross product over p, beta, mode and seeds");
    sweep_flags.attach(*sweep, true);
    auto* tradeoff = app.add_subcommand("tradeoff", "distortion / information curves from a beta sweep");
    tradeoff_flags.attach(*tradeoff, true);

    auto* eval = app.add_subcommand("eval", "evaluate a saved agent");
    std::string agent_dir, eval_out;
    long eval_mc = 1000;
    std::uint64_t eval_seed = 1;
    eval->add_option("--agent", agent_dir, "agent directory (holds manifest.json)")->required();
    eval->add_option("--mc", eval_mc, "evaluation length");
    eval->add_option("--seed", eval_seed, "base seed for the evaluation stream");
    eval->add_option("--out", eval_out, "write eval.csv into this directory");

    auto* oracle = app.add_subcommand("oracle", "exact and Monte Carlo reference computations");
    oracle->require_subcommand(1);
    double o_p = 0.1, o_beta = 0.5;
    int o_lmax = 2, o_horizon = 4, o_grid = 3;
    long o_steps = 100000, o_samples = 100000;
    std::uint64_t o_seed = 1;
    double o_budget = 5e7;
    std::string o_out;
    auto* dp = oracle->add_subcommand("dp", "finite-horizon optimum over a grid of action maps");
    dp->add_option("--p", o_p, "state flip probability");
    dp->add_option("--beta", o_beta, "distortion weight");
    dp->add_option("--lmax", o_lmax, "lag resolution of the policy");
    dp->add_option("--horizon", o_horizon, "horizon (1..8)");
    dp->add_option("--grid", o_grid, "action grid points per state (1..5)");
    dp->add_option("--budget", o_budget, "abort above this many estimated evaluations");
    auto* memoryless = oracle->add_subcommand("memoryless", "best constant transmission probability");
    memoryless->add_option("--p", o_p, "state flip probability");
    memoryless->add_option("--beta", o_beta, "distortion weight");
    memoryless->add_option("--lmax", o_lmax, "lag truncation");
    memoryless->add_option("--grid", o_grid, "grid resolution over q");
    memoryless->add_option("--steps", o_steps, "simulation length per grid point");
    memoryless->add_option("--seed", o_seed, "seed");
    memoryless->add_option("--out", o_out, "write scan.csv into this directory");
    auto* belief = oracle->add_subcommand("belief-check", "Monte Carlo check of the Bayes filter");
    belief->add_option("--p", o_p, "state flip probability");
    belief->add_option("--lmax", o_lmax, "lag truncation");
    belief->add_option("--horizon", o_horizon, "path length (1..8)");
    belief->add_option("--samples", o_samples, "number of simulated paths");
    belief->add_option("--seed", o_seed, "seed");

    auto* check = app.add_subcommand("check", "run the invariant and oracle checks");
    std::string level = "fast";
    check->add_option("--level", level, "fast | full")->check(CLI::IsMember({"fast", "full"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(train_flags);
        if (*sweep) return cmd_sweep(sweep_flags);
        if (*tradeoff) return cmd_tradeoff(tradeoff_flags);
        if (*eval) return cmd_eval(agent_dir, eval_mc, eval_seed, eval_out);
        if (*dp) {
            const auto r = oracles::dp_optimal(ChannelParams(o_p, o_lmax), o_horizon, o_beta,
                                               oracles::uniform_grid(o_grid), oracles::DpBudget{static_cast<long>(o_budget)});
            std::printf("value %.10f per step (horizon %d, lmax %d, grid %d, %ld reachable beliefs)\n", r.value,
                        r.horizon, r.l_max, r.grid_size, r.reachable_beliefs);
            return 0;
        }
        if (*memoryless) {
            Rng rng(o_seed);
            const auto r = oracles::memoryless_optimal(ChannelParams(o_p, o_lmax), o_beta, std::max(o_grid, 2), o_steps, rng);
            std::printf("q* %.6f  value %.6f\n", r.q_star, r.value_star);
            if (r.closed_form_gap >= 0.0) std::printf("max gap to closed form %.3g\n", r.closed_form_gap);
            if (!o_out.empty()) {
                harness::prepare_out_dir(o_out);
                std::ofstream f(std::filesystem::path(o_out) / "scan.csv", std::ios::binary);
                f << "q,avg_reward\n";
                for (std::size_t i = 0; i < r.q.size(); ++i)
                    f << harness::format_number(r.q[i]) << ',' << harness::format_number(r.value[i]) << '\n';
            }
            return 0;
        }
        if (*belief) {
            Rng rng(o_seed);
            const ChannelParams params(o_p, o_lmax);
            const auto policy = oracles::random_policy(params, o_horizon, rng);
            const auto r = oracles::mc_belief_check(policy, params, o_horizon, o_samples, rng);
            std::printf("max TV %.5f over %ld prefixes\n", r.max_tv, r.prefixes_checked);
            return r.max_tv <= 0.02 ? 0 : 1;
        }
        if (*check) {
            const auto report = harness::check_suite(level == "full" ? harness::CheckLevel::full
                                                                     : harness::CheckLevel::fast,
                                                     {}, &std::cout);
            std::printf("%s\n", report.passed() ? "all checks passed" : "checks FAILED");
            return report.passed() ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
