#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "memsense/harness.hpp"

using namespace memsense;
using namespace memsense::harness;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("memsense-test-" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig tiny(const std::string& name) {
    ExperimentConfig e;
    e.train.params = ChannelParams(0.2, 4);
    e.train.beta = 0.5;
    e.train.episodes = 3;
    e.train.steps = 20;
    e.train.batch = 8;
    e.train.hidden = {8};
    e.mc_length = 200;
    e.seeds = {1, 2};
    e.out_dir = scratch(name);
    e.record_timing = false;
    return e;
}

RunRecord sample_row() {
    return RunRecord{"limited-k0.4-p0.1-b0.5-L16-s3", "limited", 0.4, 0.1, 0.5, 3, "eval", 500,
                     0.1 - 0.5 * 0.3, 0.1, 0.3, 0.0, 12.5};
}

}  // namespace

TEST(Csv, HeaderMatchesSchema) {
    EXPECT_EQ(kCsvHeader,
              "run_id,mode,k,p,beta,seed,phase,episode,avg_reward,avg_info,avg_distortion,epsilon,wall_seconds");
}

TEST(Csv, RowRoundTripIsExact) {
    const auto r = sample_row();
    EXPECT_EQ(parse_csv_row(to_csv_row(r)), r);
    RunRecord odd = r;
    odd.avg_info = 1.0 / 3.0;
    odd.avg_distortion = 2.0 / 7.0;
    odd.avg_reward = odd.avg_info - odd.beta * odd.avg_distortion;
    EXPECT_EQ(parse_csv_row(to_csv_row(odd)), odd);
}

TEST(Csv, FileRoundTrip) {
    const auto dir = scratch("csv");
    fs::create_directories(dir);
    const std::vector<RunRecord> rows{sample_row(), sample_row()};
    write_csv(dir / "x.csv", rows);
    EXPECT_EQ(read_csv(dir / "x.csv"), rows);
    const auto text = slurp(dir / "x.csv");
    EXPECT_EQ(text.find('\r'), std::string::npos);
    EXPECT_EQ(text.substr(0, kCsvHeader.size()), kCsvHeader);
}

TEST(Csv, MalformedRowsAreRejected) {
    EXPECT_THROW((void)parse_csv_row("a,b,c"), std::runtime_error);
    auto line = to_csv_row(sample_row());
    line.replace(line.find(",0.4,"), 5, ",abc,");
    EXPECT_THROW((void)parse_csv_row(line), std::invalid_argument);
}

TEST(FormatNumber, ShortestRoundTrip) {
    EXPECT_EQ(format_number(0.1), "0.1");
    EXPECT_EQ(format_number(1.0), "1");
    EXPECT_EQ(format_number(0.0), "0");
    const double third = 1.0 / 3.0;
    EXPECT_EQ(std::stod(format_number(third)), third);
}

TEST(Seeds, PointSeedIsXorOfHash) {
    ddpg::TrainConfig c;
    c.mode = Limited{0.4};
    const auto key = point_key(c);
    EXPECT_EQ(key, "mode=limited;k=0.4;p=0.1;beta=0.5;lmax=16");
    EXPECT_EQ(point_seed(7, key), 7 ^ stable_hash(key));
    EXPECT_NE(point_seed(7, key), point_seed(8, key));
}

TEST(Seeds, RunIdsAreUniqueAcrossAGrid) {
    std::set<std::string> ids;
    int count = 0;
    for (double p : {0.1, 0.3})
        for (double b : {0.0, 0.25})
            for (const StateSpaceMode& m : {StateSpaceMode(Degenerate{}), StateSpaceMode(Limited{0.1}),
                                            StateSpaceMode(Limited{0.4}), StateSpaceMode(Unbounded{})})
                for (std::uint64_t s : {1, 2}) {
                    ddpg::TrainConfig c;
                    c.params.p = p;
                    c.beta = b;
                    c.mode = m;
                    ids.insert(run_id(c, s));
                    ++count;
                }
    EXPECT_EQ(static_cast<int>(ids.size()), count);
}

TEST(RunExperiment, WritesFilesAndSatisfiesAccounting) {
    const auto exp = tiny("files");
    const auto rows = run_experiment(exp, 1);
    EXPECT_EQ(rows.size(), 2u * (3 + 1));
    for (const auto& r : rows) EXPECT_NEAR(r.avg_reward, r.avg_info - r.beta * r.avg_distortion, 1e-9);
    EXPECT_EQ(read_csv(exp.out_dir / "runs.csv"), rows);
    const auto evals = read_csv(exp.out_dir / "eval.csv");
    ASSERT_EQ(evals.size(), 2u);
    EXPECT_EQ(evals[0].phase, "eval");
    EXPECT_EQ(evals[0].episode, 3);
    for (const auto& e : evals) {
        const auto dir = exp.out_dir / "agents" / e.run_id;
        for (const char* f : kAgentFiles) EXPECT_TRUE(fs::exists(dir / f)) << f;
        const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
        EXPECT_EQ(manifest.at("run_id"), e.run_id);
        EXPECT_EQ(manifest.at("config").at("episodes"), 3);
        EXPECT_EQ(manifest.at("config").at("lmax"), 4);
    }
}

TEST(RunExperiment, RepeatedRunsAreByteIdentical) {
    auto a = tiny("det-a"), b = tiny("det-b");
    (void)run_experiment(a, 1);
    (void)run_experiment(b, 2);
    for (const char* f : {"runs.csv", "eval.csv"}) EXPECT_EQ(slurp(a.out_dir / f), slurp(b.out_dir / f)) << f;
    const auto id = read_csv(a.out_dir / "eval.csv").front().run_id;
    EXPECT_EQ(slurp(a.out_dir / "agents" / id / "actor.mlp"), slurp(b.out_dir / "agents" / id / "actor.mlp"));
}

TEST(RunExperiment, DeadChannelEarnsNothing) {
    for (const StateSpaceMode& m : {StateSpaceMode(Degenerate{}), StateSpaceMode(Limited{0.5}), StateSpaceMode(Unbounded{})}) {
        auto exp = tiny("dead");
        exp.train.params.p = 0.0;
        exp.train.beta = 0.7;
        exp.train.mode = m;
        exp.save_agents = false;
        for (const auto& r : eval_rows(run_experiment(exp, 1))) EXPECT_NEAR(r.avg_reward, 0.0, 0.005) << m.name();
    }
}

TEST(RunExperiment, UnwritableOutputIsReported) {
    const auto dir = scratch("blocked");
    fs::create_directories(dir);
    std::ofstream(dir / "file") << "x";
    auto exp = tiny("unused");
    exp.out_dir = dir / "file" / "sub";
    EXPECT_THROW((void)run_experiment(exp, 1), std::runtime_error);
}

TEST(RunExperiment, InvalidConfigNamesKey) {
    auto exp = tiny("bad");
    exp.train.episodes = 0;
    try {
        (void)run_experiment(exp, 1);
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("'episodes'"), std::string::npos);
    }
    exp = tiny("bad");
    exp.seeds = {3, 3};
    EXPECT_THROW((void)run_experiment(exp, 1), std::invalid_argument);
}

TEST(Agent, SaveLoadPreservesPolicy) {
    auto exp = tiny("agent");
    exp.seeds = {4};
    exp.train.mode = Limited{0.5};
    const auto rows = run_experiment(exp, 1);
    const auto loaded = load_agent(exp.out_dir / "agents" / rows.back().run_id);
    EXPECT_EQ(loaded.config.mode, exp.train.mode);
    const auto rep = ddpg::evaluate(loaded.agent, loaded.config, exp.mc_length, eval_seed(4));
    EXPECT_NEAR(rep.avg_reward, rows.back().avg_reward, 1e-12);
}

TEST(Agent, SaveLoadKeepsCriticLayout) {
    for (bool products : {false, true}) {
        auto exp = tiny(products ? "agent-products" : "agent-plain");
        exp.train.product_features = products;
        const auto rows = run_experiment(exp, 1);
        const auto loaded = load_agent(exp.out_dir / "agents" / rows.back().run_id);
        EXPECT_EQ(loaded.config.product_features, products);
        EXPECT_EQ(loaded.agent.product_features, products);
        const auto rep = ddpg::evaluate(loaded.agent, loaded.config, exp.mc_length, eval_seed(exp.seeds.back()));
        EXPECT_NEAR(rep.avg_reward, rows.back().avg_reward, 1e-12);
    }
}

TEST(Sweep, EmptyModeListIsRejected) {
    SweepSpec spec{{0.1}, {0.5}, {}, {1}};
    try {
        (void)run_sweep(spec, tiny("empty"), 1);
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("'mode'"), std::string::npos);
    }
}

TEST(Sweep, ResultsIndependentOfConcurrencyAndContext) {
    const SweepSpec spec{{0.1, 0.3}, {0.5}, {Degenerate{}, Limited{0.5}}, {1, 2}};
    auto a = tiny("sweep-a"), b = tiny("sweep-b");
    a.save_agents = b.save_agents = false;
    const auto ra = run_sweep(spec, a, 1);
    const auto rb = run_sweep(spec, b, 3);
    EXPECT_TRUE(ra.failures.empty());
    EXPECT_EQ(ra.rows, rb.rows);
    EXPECT_EQ(slurp(a.out_dir / "runs.csv"), slurp(b.out_dir / "runs.csv"));
    EXPECT_EQ(ra.summary.size(), 4u);
    EXPECT_EQ(ra.evals.size(), 8u);

    // the same point run on its own reproduces the sweep rows
    auto single = tiny("sweep-single");
    single.train.params.p = 0.3;
    single.train.mode = Limited{0.5};
    single.seeds = {2};
    single.save_agents = false;
    const auto alone = run_experiment(single, 1);
    const auto id = alone.front().run_id;
    std::vector<RunRecord> from_sweep;
    for (const auto& r : ra.rows)
        if (r.run_id == id) from_sweep.push_back(r);
    EXPECT_EQ(from_sweep, alone);
}

TEST(Sweep, FailingPointDoesNotAbortOthers) {
    // l_max = 1 with a limited view of k = 0.5 is fine; a buffer smaller than the
    // batch only fails at validation, so inject failure through an invalid beta.
    const SweepSpec spec{{0.1}, {0.5, -1.0}, {Degenerate{}}, {1}};
    auto base = tiny("fail");
    base.save_agents = false;
    EXPECT_THROW((void)run_sweep(spec, base, 1), std::invalid_argument);  // caught at expansion
    // runtime failure: output directory for agents blocked for one point only
    auto blocked = tiny("fail-rt");
    fs::create_directories(blocked.out_dir / "agents");
    ddpg::TrainConfig c = blocked.train;
    c.mode = Unbounded{};
    std::ofstream(blocked.out_dir / "agents" / run_id(c, 1)) << "not a directory";
    const auto res = run_sweep(SweepSpec{{0.2}, {0.5}, {Degenerate{}, Unbounded{}}, {1}}, blocked, 1);
    ASSERT_EQ(res.failures.size(), 1u);
    EXPECT_EQ(res.failures[0].run_id, run_id(c, 1));
    EXPECT_EQ(res.evals.size(), 1u);
    EXPECT_TRUE(fs::exists(blocked.out_dir / "failures.csv"));
}

TEST(Summary, MeanAndPopulationStddev) {
    std::vector<RunRecord> rows(3, sample_row());
    rows[0].avg_reward = 0.1;
    rows[1].avg_reward = 0.2;
    rows[2].avg_reward = 0.6;
    const auto s = summarize(rows);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].n, 3);
    EXPECT_NEAR(s[0].mean_reward, 0.3, 1e-12);
    EXPECT_NEAR(s[0].sd_reward, std::sqrt((0.04 + 0.01 + 0.09) / 3.0), 1e-12);
    EXPECT_NEAR(s[0].sd_info, 0.0, 1e-12);
}

TEST(TradeOff, TimeSharingEnvelope) {
    TradeOffCurve c{Unbounded{}, {{0, 0.0, 0.2, 0}, {0, 0.4, 0.6, 0}}};
    EXPECT_NEAR(achievable_info(c, 0.2), 0.4, 1e-12);
    EXPECT_NEAR(achievable_info(c, 1.0), 0.6, 1e-12);
    EXPECT_EQ(achievable_info(TradeOffCurve{Unbounded{}, {{0, 0.3, 0.5, 0}}}, 0.1), -INFINITY);
}

TEST(TradeOff, Dominance) {
    const TradeOffCurve upper{Unbounded{}, {{4, 0.0, 0.3, 0}, {0, 0.4, 0.7, 0}}};
    const TradeOffCurve lower{Degenerate{}, {{4, 0.0, 0.3, 0}, {0, 0.3, 0.55, 0}}};
    EXPECT_TRUE(weakly_dominates(upper, lower, 0.01).holds);
    const TradeOffCurve better{Degenerate{}, {{0, 0.2, 0.6, 0}}};
    EXPECT_FALSE(weakly_dominates(upper, better, 0.01).holds);
}

TEST(TradeOff, CurvesAreSortedByDistortion) {
    std::vector<SummaryRow> summary{{"unbounded", 0, 0.3, 0.0, 1, 0, 0, 0.9, 0, 0.4, 0},
                                    {"unbounded", 0, 0.3, 1.0, 1, 0, 0, 0.5, 0, 0.1, 0},
                                    {"degenerate", 0, 0.3, 1.0, 1, 0, 0, 0.5, 0, 0.2, 0}};
    const auto curves = curves_from_summary(summary, {Unbounded{}, Degenerate{}});
    ASSERT_EQ(curves[0].points.size(), 2u);
    EXPECT_EQ(curves[0].points[0].beta, 1.0);
    EXPECT_EQ(curves[1].points.size(), 1u);
}

TEST(Config, ParsesSectionsCommentsAndLists) {
    std::istringstream in(R"(# experiment
[channel]
p = 0.1, 0.3
lmax = 8      # short lags

[agent]
episodes = 20
hidden = 32,16
mode = degenerate, limited, unbounded
k = 0.1, 0.4
seeds = 1-3
)");
    const auto s = parse_config(in);
    EXPECT_EQ(s.at("p"), "0.1, 0.3");
    EXPECT_EQ(s.at("lmax"), "8");
    const auto [spec, base] = resolve_sweep(s);
    EXPECT_EQ(spec.ps, (std::vector<double>{0.1, 0.3}));
    EXPECT_EQ(spec.modes.size(), 4u);
    EXPECT_EQ(spec.modes[1], StateSpaceMode(Limited{0.1}));
    EXPECT_EQ(spec.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
    EXPECT_EQ(base.train.params.l_max, 8);
    EXPECT_EQ(base.train.episodes, 20);
    EXPECT_EQ(base.train.hidden, (std::vector<int>{32, 16}));
}

TEST(Config, LaterSourcesOverride) {
    std::istringstream in("beta = 0.25\nepisodes = 10\n");
    auto s = parse_config(in);
    s["beta"] = "0.75";  // a command-line flag
    const auto e = resolve_experiment(s);
    EXPECT_EQ(e.train.beta, 0.75);
    EXPECT_EQ(e.train.episodes, 10);
}

TEST(Config, CriticProductsKey) {
    EXPECT_TRUE(resolve_experiment({{"critic-products", "true"}}).train.product_features);
    EXPECT_FALSE(resolve_experiment({{"critic-products", "false"}}).train.product_features);
    EXPECT_THROW((void)resolve_experiment({{"critic-products", "maybe"}}), std::invalid_argument);
}

TEST(Config, ErrorsNameTheKey) {
    auto message = [](const std::string& text) {
        std::istringstream in(text);
        try {
            (void)resolve_experiment(parse_config(in));
        } catch (const std::exception& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(message("bogus = 1").find("'bogus'"), std::string::npos);
    EXPECT_NE(message("p = 0.1\np = 0.2").find("'p'"), std::string::npos);
    EXPECT_NE(message("gamma = 1").find("'gamma'"), std::string::npos);
    EXPECT_NE(message("episodes = many").find("'episodes'"), std::string::npos);
    EXPECT_NE(message("mode = limited\nk = 1.5").find("'k'"), std::string::npos);
    EXPECT_NE(message("mode = sideways").find("'mode'"), std::string::npos);
    EXPECT_NE(message("p = 2").find("'p'"), std::string::npos);
    EXPECT_NE(message("just words").find("line 1"), std::string::npos);
}

TEST(Config, SingleRunRejectsModeLists) {
    EXPECT_THROW((void)resolve_experiment({{"mode", "degenerate,unbounded"}}), std::invalid_argument);
    const auto e = resolve_experiment({{"mode", "limited"}, {"k", "0.4"}, {"seed", "9"}});
    EXPECT_EQ(e.train.mode, StateSpaceMode(Limited{0.4}));
    EXPECT_EQ(e.seeds, (std::vector<std::uint64_t>{9}));
}

TEST(Workers, EnvironmentVariableCapsThreads) {
    setenv("MEMSENSE_THREADS", "3", 1);
    EXPECT_EQ(worker_count(), 3);
    setenv("MEMSENSE_THREADS", "junk", 1);
    EXPECT_GE(worker_count(), 1);
    unsetenv("MEMSENSE_THREADS");
}

TEST(CheckSuite, FastLevelPasses) {
    const auto report = check_suite(CheckLevel::fast);
    for (const auto& r : report.results) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
    EXPECT_GE(report.results.size(), 5u);
}

TEST(CheckSuite, CorruptedFlipProbabilityIsCaught) {
    CheckHooks broken;
    broken.flip = [](const ChannelParams& c, int lag) { return flip_prob(c, lag + 1); };  // off by one
    const auto report = check_suite(CheckLevel::fast, broken);
    EXPECT_FALSE(report.passed());
    std::vector<std::string> failed;
    for (const auto& r : report.results)
        if (!r.passed) failed.push_back(r.name);
    EXPECT_EQ(failed, (std::vector<std::string>{"flip_prob matches recursion"}));
}
