#pragma once

// Experiment orchestration: configuration, single runs, concurrent sweeps,
// trade-off curves, CSV/agent persistence and the invariant check driver.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "memsense/belief.hpp"
#include "memsense/ddpg.hpp"
#include "memsense/neural.hpp"
#include "memsense/oracles.hpp"
#include "memsense/random.hpp"
#include "memsense/unifilar.hpp"

namespace memsense::harness {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// number formatting and parsing (locale independent)

/// Shortest decimal text that reads back to the same double.
[[nodiscard]] inline std::string format_number(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

[[nodiscard]] inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

[[nodiscard]] inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

[[noreturn]] inline void bad_key(const std::string& key, const std::string& why) {
    throw std::invalid_argument("invalid config '" + key + "': " + why);
}

[[nodiscard]] inline double parse_double(const std::string& key, const std::string& text) {
    double v = 0.0;
    const auto t = trim(text);
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc{} || r.ptr != t.data() + t.size() || t.empty()) bad_key(key, "not a number: '" + text + "'");
    return v;
}

template <typename Int>
[[nodiscard]] Int parse_int(const std::string& key, const std::string& text) {
    Int v{};
    const auto t = trim(text);
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc{} || r.ptr != t.data() + t.size() || t.empty()) bad_key(key, "not an integer: '" + text + "'");
    return v;
}

[[nodiscard]] inline bool parse_bool(const std::string& key, const std::string& text) {
    const auto t = trim(text);
    if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
    if (t == "0" || t == "false" || t == "no" || t == "off") return false;
    bad_key(key, "not a boolean: '" + text + "'");
}

// ---------------------------------------------------------------------------
// CSV records

struct RunRecord {
    std::string run_id;
    std::string mode;
    double k = 0.0;
    double p = 0.0;
    double beta = 0.0;
    std::uint64_t seed = 0;
    std::string phase;  // "train" or "eval"
    int episode = 0;
    double avg_reward = 0.0;
    double avg_info = 0.0;
    double avg_distortion = 0.0;
    double epsilon = 0.0;
    double wall_seconds = 0.0;

    friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

inline constexpr std::string_view kCsvHeader =
    "run_id,mode,k,p,beta,seed,phase,episode,avg_reward,avg_info,avg_distortion,epsilon,wall_seconds";

[[nodiscard]] inline std::string to_csv_row(const RunRecord& r) {
    std::string s;
    s += r.run_id + ',' + r.mode + ',' + format_number(r.k) + ',' + format_number(r.p) + ',' + format_number(r.beta) +
         ',' + std::to_string(r.seed) + ',' + r.phase + ',' + std::to_string(r.episode) + ',' +
         format_number(r.avg_reward) + ',' + format_number(r.avg_info) + ',' + format_number(r.avg_distortion) + ',' +
         format_number(r.epsilon) + ',' + format_number(r.wall_seconds);
    return s;
}

[[nodiscard]] inline RunRecord parse_csv_row(const std::string& line) {
    const auto f = split(line, ',');
    if (f.size() != 13) throw std::runtime_error("csv row has " + std::to_string(f.size()) + " fields, expected 13");
    RunRecord r;
    r.run_id = f[0];
    r.mode = f[1];
    r.k = parse_double("k", f[2]);
    r.p = parse_double("p", f[3]);
    r.beta = parse_double("beta", f[4]);
    r.seed = parse_int<std::uint64_t>("seed", f[5]);
    r.phase = f[6];
    r.episode = parse_int<int>("episode", f[7]);
    r.avg_reward = parse_double("avg_reward", f[8]);
    r.avg_info = parse_double("avg_info", f[9]);
    r.avg_distortion = parse_double("avg_distortion", f[10]);
    r.epsilon = parse_double("epsilon", f[11]);
    r.wall_seconds = parse_double("wall_seconds", f[12]);
    return r;
}

inline void write_csv(const fs::path& path, const std::vector<RunRecord>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kCsvHeader << '\n';
    for (const auto& r : rows) out << to_csv_row(r) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

[[nodiscard]] inline std::vector<RunRecord> read_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line) != kCsvHeader)
        throw std::runtime_error(path.string() + ": missing or unexpected header");
    std::vector<RunRecord> rows;
    while (std::getline(in, line))
        if (!trim(line).empty()) rows.push_back(parse_csv_row(trim(line)));
    return rows;
}

// ---------------------------------------------------------------------------
// experiment configuration

struct ExperimentConfig {
    ddpg::TrainConfig train{};
    long mc_length = 1000;
    std::vector<std::uint64_t> seeds{1};
    fs::path out_dir = "out";
    bool save_agents = true;
    bool record_timing = true;  // false writes wall_seconds = 0, making CSVs byte-reproducible

    void validate() const {
        train.validate();
        if (mc_length < 1) bad_key("mc", "must be >= 1");
        if (seeds.empty()) bad_key("seeds", "must not be empty");
        if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
            bad_key("seeds", "must be distinct");
    }
};

/// Identifies a sweep point independent of its seed.
[[nodiscard]] inline std::string point_key(const ddpg::TrainConfig& cfg) {
    return "mode=" + cfg.mode.name() + ";k=" + format_number(cfg.mode.k()) + ";p=" + format_number(cfg.params.p) +
           ";beta=" + format_number(cfg.beta) + ";lmax=" + std::to_string(cfg.params.l_max);
}

/// Training seed of one run: base seed xor the hash of its point key.
[[nodiscard]] inline std::uint64_t point_seed(std::uint64_t base_seed, const std::string& key) {
    return base_seed ^ stable_hash(key);
}

/// Evaluation seed depends on the base seed only, so all points of one seed are
/// evaluated on common random numbers.
[[nodiscard]] inline std::uint64_t eval_seed(std::uint64_t base_seed) { return mix_seed(base_seed ^ 0x5eedULL); }

[[nodiscard]] inline std::string run_id(const ddpg::TrainConfig& cfg, std::uint64_t base_seed) {
    std::string id = cfg.mode.name();
    if (cfg.mode.is_limited()) id += "-k" + format_number(cfg.mode.k());
    return id + "-p" + format_number(cfg.params.p) + "-b" + format_number(cfg.beta) + "-L" +
           std::to_string(cfg.params.l_max) + "-s" + std::to_string(base_seed);
}

// ---------------------------------------------------------------------------
// agent persistence

[[nodiscard]] inline nlohmann::json config_to_json(const ddpg::TrainConfig& c) {
    return {
        {"mode", c.mode.name()},
        {"k", c.mode.k()},
        {"p", c.params.p},
        {"lmax", c.params.l_max},
        {"beta", c.beta},
        {"episodes", c.episodes},
        {"steps", c.steps},
        {"batch", c.batch},
        {"buffer", c.buffer_capacity},
        {"gamma", c.gamma},
        {"tau", c.tau},
        {"epsilon_start", c.epsilon.start},
        {"epsilon_decay", c.epsilon.decay},
        {"epsilon_floor", c.epsilon.floor},
        {"actor_lr", c.actor_step},
        {"critic_lr", c.critic_step},
        {"hidden", c.hidden},
        {"optimizer", c.optimizer == nn::OptimizerKind::adam ? "adam" : "sgd"},
        {"literal_loss", c.literal_loss},
        {"critic_products", c.product_features},
        {"seed", c.seed},
    };
}

[[nodiscard]] inline ddpg::TrainConfig config_from_json(const nlohmann::json& j) {
    ddpg::TrainConfig c;
    const std::string mode = j.at("mode");
    c.mode = parse_mode(mode, mode == "limited" ? j.at("k").get<double>() : 0.5);
    c.params = ChannelParams(j.at("p").get<double>(), j.at("lmax").get<int>());
    c.beta = j.at("beta");
    c.episodes = j.at("episodes");
    c.steps = j.at("steps");
    c.batch = j.at("batch");
    c.buffer_capacity = j.at("buffer");
    c.gamma = j.at("gamma");
    c.tau = j.at("tau");
    c.epsilon.start = j.at("epsilon_start");
    c.epsilon.decay = j.at("epsilon_decay");
    c.epsilon.floor = j.at("epsilon_floor");
    c.actor_step = j.at("actor_lr");
    c.critic_step = j.at("critic_lr");
    c.hidden = j.at("hidden").get<std::vector<int>>();
    c.optimizer = j.at("optimizer") == "sgd" ? nn::OptimizerKind::sgd : nn::OptimizerKind::adam;
    c.literal_loss = j.at("literal_loss");
    c.product_features = j.value("critic_products", false);
    c.seed = j.at("seed");
    return c;
}

inline constexpr const char* kAgentFiles[] = {"actor.mlp", "critic.mlp", "target_actor.mlp", "target_critic.mlp"};

/// Writes the four networks and a manifest.json into `dir`. Optimizer moments
/// are not persisted; a reloaded agent is meant for evaluation.
inline void save_agent(const fs::path& dir, const ddpg::AgentBundle& agent, const ddpg::TrainConfig& cfg,
                       nlohmann::json manifest = nlohmann::json::object()) {
    fs::create_directories(dir);
    const ddpg::Net* nets[] = {&agent.actor, &agent.critic, &agent.target_actor, &agent.target_critic};
    for (int i = 0; i < 4; ++i) {
        std::ofstream out(dir / kAgentFiles[i], std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir / kAgentFiles[i]).string());
        nn::save(*nets[i], out);
    }
    manifest["format"] = "memsense-agent 1";
    manifest["config"] = config_to_json(cfg);
    manifest["obs_dim"] = agent.obs_dim();
    manifest["action_dim"] = agent.action_dim();
    manifest["files"] = {kAgentFiles[0], kAgentFiles[1], kAgentFiles[2], kAgentFiles[3]};
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
}

struct LoadedAgent {
    ddpg::AgentBundle agent;
    ddpg::TrainConfig config;
    nlohmann::json manifest;
};

[[nodiscard]] inline LoadedAgent load_agent(const fs::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("no manifest.json in " + dir.string());
    LoadedAgent la;
    la.manifest = nlohmann::json::parse(mf);
    la.config = config_from_json(la.manifest.at("config"));
    ddpg::Net* nets[] = {&la.agent.actor, &la.agent.critic, &la.agent.target_actor, &la.agent.target_critic};
    for (int i = 0; i < 4; ++i) {
        std::ifstream in(dir / kAgentFiles[i]);
        if (!in) throw std::runtime_error("missing " + (dir / kAgentFiles[i]).string());
        *nets[i] = nn::load<ddpg::Real>(in);
    }
    const auto dim = static_cast<Eigen::Index>(view_dim(la.config.params, la.config.mode));
    if (la.agent.obs_dim() != dim || la.agent.action_dim() != dim)
        throw std::runtime_error("agent dimensions do not match the manifest mode");
    la.agent.product_features = la.config.product_features;
    if (la.agent.critic.input_dim() != dim * (la.config.product_features ? 3 : 2))
        throw std::runtime_error("critic input width does not match the manifest");
    la.agent.actor_opt = nn::make_optimizer(la.agent.actor, la.config.optimizer);
    la.agent.critic_opt = nn::make_optimizer(la.agent.critic, la.config.optimizer);
    return la;
}

// ---------------------------------------------------------------------------
// single runs

struct RunOutput {
    std::string run_id;
    std::vector<RunRecord> rows;  // train rows followed by the eval row
    ddpg::EvalReport eval;
};

/// Trains and evaluates one (point, base seed). Agent files go to
/// out_dir/agents/<run_id>/ when enabled.
[[nodiscard]] inline RunOutput run_single(const ExperimentConfig& exp, std::uint64_t base_seed) {
    ddpg::TrainConfig cfg = exp.train;
    const std::string key = point_key(cfg);
    cfg.seed = point_seed(base_seed, key);
    RunOutput out;
    out.run_id = run_id(cfg, base_seed);

    RunRecord proto;
    proto.run_id = out.run_id;
    proto.mode = cfg.mode.name();
    proto.k = cfg.mode.k();
    proto.p = cfg.params.p;
    proto.beta = cfg.beta;
    proto.seed = base_seed;

    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();
    auto elapsed = [&] {
        return exp.record_timing ? std::chrono::duration<double>(Clock::now() - t0).count() : 0.0;
    };
    const auto result = ddpg::train(cfg, {}, [&](int ep, const ddpg::EvalReport& r) {
        RunRecord row = proto;
        row.phase = "train";
        row.episode = ep;
        row.avg_reward = r.avg_reward;
        row.avg_info = r.avg_info;
        row.avg_distortion = r.avg_distortion;
        row.epsilon = r.epsilon;
        row.wall_seconds = elapsed();
        out.rows.push_back(row);
    });
    out.eval = ddpg::evaluate(result.agent, cfg, exp.mc_length, eval_seed(base_seed));

    RunRecord row = proto;
    row.phase = "eval";
    row.episode = cfg.episodes;
    row.avg_reward = out.eval.avg_reward;
    row.avg_info = out.eval.avg_info;
    row.avg_distortion = out.eval.avg_distortion;
    row.epsilon = 0.0;
    row.wall_seconds = elapsed();
    out.rows.push_back(row);

    if (exp.save_agents) {
        nlohmann::json manifest = {
            {"run_id", out.run_id},
            {"point_key", key},
            {"base_seed", base_seed},
            {"eval_seed", eval_seed(base_seed)},
            {"mc_length", exp.mc_length},
            {"eval", {{"avg_reward", out.eval.avg_reward},
                      {"avg_info", out.eval.avg_info},
                      {"avg_distortion", out.eval.avg_distortion}}},
        };
        save_agent(exp.out_dir / "agents" / out.run_id, result.agent, cfg, std::move(manifest));
    }
    return out;
}

/// Worker count: MEMSENSE_THREADS when set, otherwise the hardware concurrency.
[[nodiscard]] inline int worker_count() {
    if (const char* env = std::getenv("MEMSENSE_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

/// Runs `jobs` indices on up to `threads` workers. Each job writes only its own slot.
inline void parallel_for(std::size_t jobs, int threads, const std::function<void(std::size_t)>& body) {
    const auto n = std::min<std::size_t>(jobs, static_cast<std::size_t>(std::max(1, threads)));
    if (n <= 1) {
        for (std::size_t i = 0; i < jobs; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < jobs; i = next++) body(i);
        });
    for (auto& t : pool) t.join();
}

struct PointFailure {
    std::string run_id;
    std::string message;
};

inline void prepare_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw std::runtime_error("output directory " + dir.string() + " is not writable");
    const auto probe = dir / ".write-test";
    {
        std::ofstream t(probe);
        if (!t) throw std::runtime_error("output directory " + dir.string() + " is not writable");
    }
    fs::remove(probe, ec);
}

[[nodiscard]] inline std::vector<RunRecord> eval_rows(const std::vector<RunRecord>& rows) {
    std::vector<RunRecord> out;
    std::copy_if(rows.begin(), rows.end(), std::back_inserter(out), [](const RunRecord& r) { return r.phase == "eval"; });
    return out;
}

/// Trains every seed of one configuration and writes runs.csv and eval.csv.
inline std::vector<RunRecord> run_experiment(const ExperimentConfig& exp, int threads = worker_count()) {
    exp.validate();
    prepare_out_dir(exp.out_dir);
    std::vector<RunOutput> outputs(exp.seeds.size());
    parallel_for(exp.seeds.size(), threads, [&](std::size_t i) { outputs[i] = run_single(exp, exp.seeds[i]); });
    std::vector<RunRecord> rows;
    for (auto& o : outputs) rows.insert(rows.end(), o.rows.begin(), o.rows.end());
    write_csv(exp.out_dir / "runs.csv", rows);
    write_csv(exp.out_dir / "eval.csv", eval_rows(rows));
    return rows;
}

// ---------------------------------------------------------------------------
// sweeps

struct SweepSpec {
    std::vector<double> ps;
    std::vector<double> betas;
    std::vector<StateSpaceMode> modes;
    std::vector<std::uint64_t> seeds;

    void validate() const {
        if (ps.empty()) bad_key("p", "sweep list must not be empty");
        if (betas.empty()) bad_key("beta", "sweep list must not be empty");
        if (modes.empty()) bad_key("mode", "sweep list must not be empty");
        if (seeds.empty()) bad_key("seeds", "sweep list must not be empty");
        if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
            bad_key("seeds", "must be distinct");
    }
};

struct SummaryRow {
    std::string mode;
    double k = 0.0, p = 0.0, beta = 0.0;
    int n = 0;
    double mean_reward = 0.0, sd_reward = 0.0;
    double mean_info = 0.0, sd_info = 0.0;
    double mean_distortion = 0.0, sd_distortion = 0.0;
};

/// Mean and population standard deviation over seeds, one row per point in
/// first-appearance order.
[[nodiscard]] inline std::vector<SummaryRow> summarize(const std::vector<RunRecord>& evals) {
    std::vector<SummaryRow> out;
    std::vector<std::vector<const RunRecord*>> groups;
    for (const auto& r : evals) {
        if (r.phase != "eval") continue;
        auto it = std::find_if(out.begin(), out.end(), [&](const SummaryRow& s) {
            return s.mode == r.mode && s.k == r.k && s.p == r.p && s.beta == r.beta;
        });
        if (it == out.end()) {
            out.push_back(SummaryRow{r.mode, r.k, r.p, r.beta});
            groups.emplace_back();
            it = out.end() - 1;
        }
        groups[static_cast<std::size_t>(it - out.begin())].push_back(&r);
    }
    auto stats = [](const std::vector<const RunRecord*>& g, double RunRecord::*field, double& mean, double& sd) {
        double s = 0.0;
        for (const auto* r : g) s += r->*field;
        mean = s / static_cast<double>(g.size());
        double v = 0.0;
        for (const auto* r : g) v += (r->*field - mean) * (r->*field - mean);
        sd = std::sqrt(v / static_cast<double>(g.size()));
    };
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].n = static_cast<int>(groups[i].size());
        stats(groups[i], &RunRecord::avg_reward, out[i].mean_reward, out[i].sd_reward);
        stats(groups[i], &RunRecord::avg_info, out[i].mean_info, out[i].sd_info);
        stats(groups[i], &RunRecord::avg_distortion, out[i].mean_distortion, out[i].sd_distortion);
    }
    return out;
}

inline void write_summary(const fs::path& path, const std::vector<SummaryRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "mode,k,p,beta,n,mean_reward,sd_reward,mean_info,sd_info,mean_distortion,sd_distortion\n";
    for (const auto& r : rows)
        out << r.mode << ',' << format_number(r.k) << ',' << format_number(r.p) << ',' << format_number(r.beta) << ','
            << r.n << ',' << format_number(r.mean_reward) << ',' << format_number(r.sd_reward) << ','
            << format_number(r.mean_info) << ',' << format_number(r.sd_info) << ','
            << format_number(r.mean_distortion) << ',' << format_number(r.sd_distortion) << '\n';
}

struct SweepResult {
    std::vector<RunRecord> rows;  // every phase, in cross-product order
    std::vector<RunRecord> evals;
    std::vector<SummaryRow> summary;
    std::vector<PointFailure> failures;
};

/// Cross product p x beta x mode x seed. Points run concurrently; a failing
/// point is recorded and does not stop the others. Writes runs.csv, eval.csv,
/// summary.csv and (when needed) failures.csv into base.out_dir.
inline SweepResult run_sweep(const SweepSpec& spec, const ExperimentConfig& base, int threads = worker_count()) {
    spec.validate();
    prepare_out_dir(base.out_dir);
    struct Point {
        ExperimentConfig exp;
        std::uint64_t seed;
    };
    std::vector<Point> points;
    for (double p : spec.ps)
        for (double beta : spec.betas)
            for (const auto& mode : spec.modes)
                for (auto seed : spec.seeds) {
                    ExperimentConfig e = base;
                    e.train.params.p = p;
                    e.train.beta = beta;
                    e.train.mode = mode;
                    e.seeds = {seed};
                    e.validate();
                    points.push_back({std::move(e), seed});
                }

    std::vector<RunOutput> outputs(points.size());
    std::vector<std::optional<std::string>> errors(points.size());
    parallel_for(points.size(), threads, [&](std::size_t i) {
        try {
            outputs[i] = run_single(points[i].exp, points[i].seed);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    SweepResult res;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (errors[i]) {
            res.failures.push_back({run_id(points[i].exp.train, points[i].seed), *errors[i]});
            continue;
        }
        res.rows.insert(res.rows.end(), outputs[i].rows.begin(), outputs[i].rows.end());
    }
    res.evals = eval_rows(res.rows);
    res.summary = summarize(res.evals);
    write_csv(base.out_dir / "runs.csv", res.rows);
    write_csv(base.out_dir / "eval.csv", res.evals);
    write_summary(base.out_dir / "summary.csv", res.summary);
    if (!res.failures.empty()) {
        std::ofstream f(base.out_dir / "failures.csv", std::ios::binary);
        f << "run_id,message\n";
        for (const auto& x : res.failures) f << x.run_id << ",\"" << x.message << "\"\n";
    }
    return res;
}

// ---------------------------------------------------------------------------
// trade-off curves

struct TradeOffPoint {
    double beta = 0.0;
    double distortion = 0.0;
    double info = 0.0;
    double reward = 0.0;
};

struct TradeOffCurve {
    StateSpaceMode mode;
    std::vector<TradeOffPoint> points;  // sorted by distortion
};

/// Seed-averaged (distortion, info) evaluation pairs per mode, one per beta.
[[nodiscard]] inline std::vector<TradeOffCurve> curves_from_summary(const std::vector<SummaryRow>& summary,
                                                                    const std::vector<StateSpaceMode>& modes) {
    std::vector<TradeOffCurve> curves;
    for (const auto& m : modes) {
        TradeOffCurve c{m, {}};
        for (const auto& s : summary)
            if (s.mode == m.name() && s.k == m.k())
                c.points.push_back({s.beta, s.mean_distortion, s.mean_info, s.mean_reward});
        std::sort(c.points.begin(), c.points.end(), [](const TradeOffPoint& a, const TradeOffPoint& b) {
            return a.distortion != b.distortion ? a.distortion < b.distortion : a.beta < b.beta;
        });
        curves.push_back(std::move(c));
    }
    return curves;
}

/// Lagrangian sweep over beta at fixed p. Writes the sweep files plus tradeoff.csv.
inline std::vector<TradeOffCurve> trade_off_curve(double p, const std::vector<double>& betas,
                                                  const std::vector<StateSpaceMode>& modes,
                                                  const std::vector<std::uint64_t>& seeds, const ExperimentConfig& base,
                                                  int threads = worker_count()) {
    if (betas.empty()) bad_key("beta", "trade-off needs at least one value");
    const auto sweep = run_sweep(SweepSpec{{p}, betas, modes, seeds}, base, threads);
    auto curves = curves_from_summary(sweep.summary, modes);
    std::ofstream out(base.out_dir / "tradeoff.csv", std::ios::binary);
    out << "mode,k,p,beta,avg_distortion,avg_info,avg_reward\n";
    for (const auto& c : curves)
        for (const auto& pt : c.points)
            out << c.mode.name() << ',' << format_number(c.mode.k()) << ',' << format_number(p) << ','
                << format_number(pt.beta) << ',' << format_number(pt.distortion) << ',' << format_number(pt.info)
                << ',' << format_number(pt.reward) << '\n';
    return curves;
}

/// Largest info achievable by time-sharing between curve points with average
/// distortion at most `max_distortion`; -infinity when no point qualifies.
[[nodiscard]] inline double achievable_info(const TradeOffCurve& curve, double max_distortion) {
    double best = -INFINITY;
    const auto& pts = curve.points;
    for (const auto& a : pts)
        if (a.distortion <= max_distortion) best = std::max(best, a.info);
    for (const auto& a : pts)
        for (const auto& b : pts) {
            if (!(a.distortion <= max_distortion && b.distortion > max_distortion)) continue;
            const double w = (max_distortion - a.distortion) / (b.distortion - a.distortion);
            best = std::max(best, a.info + w * (b.info - a.info));
        }
    return best;
}

struct Dominance {
    bool holds = true;
    double worst_gap = INFINITY;  // min over lower points of upper info - lower info
};

/// Upper weakly dominates lower when, for every lower point (d, i), upper
/// achieves at least i - slack with distortion at most d + slack.
[[nodiscard]] inline Dominance weakly_dominates(const TradeOffCurve& upper, const TradeOffCurve& lower, double slack) {
    Dominance d;
    for (const auto& pt : lower.points) {
        const double gap = achievable_info(upper, pt.distortion + slack) - pt.info;
        d.worst_gap = std::min(d.worst_gap, gap);
        if (gap < -slack) d.holds = false;
    }
    return d;
}

// ---------------------------------------------------------------------------
// configuration files and settings

/// Flat key -> value settings. Config files and command-line flags both land
/// here; later sources override earlier ones.
using Settings = std::map<std::string, std::string>;

inline const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "p",          "beta",          "mode",          "k",       "lmax",    "episodes",  "steps",
        "mc",         "seed",          "seeds",         "out",     "literal-loss", "gamma", "tau",
        "batch",      "buffer",        "actor-lr",      "critic-lr", "hidden", "optimizer", "epsilon-start",
        "epsilon-decay", "epsilon-floor", "timing",    "save-agents", "threads", "critic-products"};
    return keys;
}

/// Parses "key = value" lines. '#' starts a comment, "[section]" headers group
/// keys for readability and do not namespace them.
[[nodiscard]] inline Settings parse_config(std::istream& in) {
    Settings s;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw std::invalid_argument("config line " + std::to_string(line_no) + ": bad section");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        if (!known_keys().count(key)) bad_key(key, "unknown key (line " + std::to_string(line_no) + ")");
        if (s.count(key)) bad_key(key, "given twice (line " + std::to_string(line_no) + ")");
        s[key] = trim(std::string_view(t).substr(eq + 1));
    }
    return s;
}

[[nodiscard]] inline Settings parse_config_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file " + path.string());
    return parse_config(in);
}

[[nodiscard]] inline std::vector<double> parse_double_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    for (const auto& f : split(text, ',')) out.push_back(parse_double(key, f));
    return out;
}

[[nodiscard]] inline std::vector<std::uint64_t> parse_seed_list(const std::string& key, const std::string& text) {
    std::vector<std::uint64_t> out;
    for (const auto& f : split(text, ',')) {
        // "a-b" ranges are inclusive
        if (const auto dash = f.find('-'); dash != std::string::npos && dash > 0) {
            const auto lo = parse_int<std::uint64_t>(key, f.substr(0, dash));
            const auto hi = parse_int<std::uint64_t>(key, f.substr(dash + 1));
            if (hi < lo) bad_key(key, "empty range '" + f + "'");
            for (auto v = lo; v <= hi; ++v) out.push_back(v);
        } else {
            out.push_back(parse_int<std::uint64_t>(key, f));
        }
    }
    return out;
}

/// Mode list. Entries are "unbounded", "degenerate", "limited" (expanded over
/// the k list) or "limited:K".
[[nodiscard]] inline std::vector<StateSpaceMode> parse_mode_list(const std::string& modes, const std::vector<double>& ks) {
    std::vector<StateSpaceMode> out;
    for (const auto& entry : split(modes, ',')) {
        if (entry.empty()) bad_key("mode", "empty entry");
        const auto colon = entry.find(':');
        const std::string name = entry.substr(0, colon);
        try {
            if (colon != std::string::npos) {
                if (name != "limited") bad_key("mode", "only limited takes a k value");
                out.push_back(Limited{parse_double("k", entry.substr(colon + 1))});
            } else if (name == "limited") {
                for (double k : ks) out.push_back(Limited{k});
            } else {
                out.push_back(parse_mode(name));
            }
        } catch (const std::invalid_argument& e) {
            const std::string what = e.what();
            if (what.rfind("invalid config", 0) == 0) throw;
            bad_key(name == "limited" ? "k" : "mode", what);
        }
    }
    return out;
}

[[nodiscard]] inline ExperimentConfig resolve_experiment(const Settings& s) {
    ExperimentConfig e;
    auto& t = e.train;
    auto get = [&](const char* key) -> const std::string* {
        const auto it = s.find(key);
        return it == s.end() ? nullptr : &it->second;
    };
    if (auto v = get("p")) t.params.p = parse_double("p", *v);
    if (auto v = get("lmax")) t.params.l_max = parse_int<int>("lmax", *v);
    if (auto v = get("beta")) t.beta = parse_double("beta", *v);
    {
        const std::string mode = get("mode") ? *get("mode") : "unbounded";
        const double k = get("k") ? parse_double("k", *get("k")) : 0.5;
        const auto modes = parse_mode_list(mode, {k});
        if (modes.size() != 1) bad_key("mode", "a single run takes exactly one mode");
        t.mode = modes.front();
    }
    if (auto v = get("episodes")) t.episodes = parse_int<int>("episodes", *v);
    if (auto v = get("steps")) t.steps = parse_int<int>("steps", *v);
    if (auto v = get("batch")) t.batch = parse_int<int>("batch", *v);
    if (auto v = get("buffer")) t.buffer_capacity = parse_int<std::size_t>("buffer", *v);
    if (auto v = get("gamma")) t.gamma = parse_double("gamma", *v);
    if (auto v = get("tau")) t.tau = parse_double("tau", *v);
    if (auto v = get("actor-lr")) t.actor_step = parse_double("actor-lr", *v);
    if (auto v = get("critic-lr")) t.critic_step = parse_double("critic-lr", *v);
    if (auto v = get("epsilon-start")) t.epsilon.start = parse_double("epsilon-start", *v);
    if (auto v = get("epsilon-decay")) t.epsilon.decay = parse_double("epsilon-decay", *v);
    if (auto v = get("epsilon-floor")) t.epsilon.floor = parse_double("epsilon-floor", *v);
    if (auto v = get("literal-loss")) t.literal_loss = parse_bool("literal-loss", *v);
    if (auto v = get("critic-products")) t.product_features = parse_bool("critic-products", *v);
    if (auto v = get("optimizer")) {
        if (*v == "adam") t.optimizer = nn::OptimizerKind::adam;
        else if (*v == "sgd") t.optimizer = nn::OptimizerKind::sgd;
        else bad_key("optimizer", "expected adam or sgd");
    }
    if (auto v = get("hidden")) {
        t.hidden.clear();
        for (const auto& f : split(*v, ',')) {
            const int w = parse_int<int>("hidden", f);
            if (w < 1) bad_key("hidden", "widths must be >= 1");
            t.hidden.push_back(w);
        }
    }
    if (auto v = get("mc")) e.mc_length = parse_int<long>("mc", *v);
    if (auto v = get("seeds")) e.seeds = parse_seed_list("seeds", *v);
    else if (auto w = get("seed")) e.seeds = {parse_int<std::uint64_t>("seed", *w)};
    if (auto v = get("out")) e.out_dir = *v;
    if (auto v = get("timing")) e.record_timing = parse_bool("timing", *v);
    if (auto v = get("save-agents")) e.save_agents = parse_bool("save-agents", *v);
    if (!(t.params.p >= 0.0 && t.params.p <= 1.0)) bad_key("p", "must lie in [0,1]");
    if (t.params.l_max < 1) bad_key("lmax", "must be >= 1");
    e.validate();
    return e;
}

/// Sweep axes from list-valued p, beta, mode, k and seeds settings; every other
/// key configures the shared base experiment.
[[nodiscard]] inline std::pair<SweepSpec, ExperimentConfig> resolve_sweep(const Settings& s) {
    Settings scalar = s;
    for (const char* key : {"p", "beta", "mode", "k", "seeds", "seed"}) scalar.erase(key);
    ExperimentConfig base = resolve_experiment(scalar);
    SweepSpec spec;
    auto list_or = [&](const char* key, const std::string& fallback) {
        const auto it = s.find(key);
        return it == s.end() ? fallback : it->second;
    };
    spec.ps = parse_double_list("p", list_or("p", "0.1"));
    spec.betas = parse_double_list("beta", list_or("beta", "0.5"));
    spec.modes = parse_mode_list(list_or("mode", "unbounded"), parse_double_list("k", list_or("k", "0.5")));
    if (s.count("seeds")) spec.seeds = parse_seed_list("seeds", s.at("seeds"));
    else spec.seeds = parse_seed_list("seed", list_or("seed", "1"));
    for (double p : spec.ps)
        if (!(p >= 0.0 && p <= 1.0)) bad_key("p", "must lie in [0,1]");
    for (double b : spec.betas)
        if (!(b >= 0.0)) bad_key("beta", "must be nonnegative");
    spec.validate();
    return {spec, base};
}

// ---------------------------------------------------------------------------
// invariant check driver

enum class CheckLevel { fast, full };

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct CheckReport {
    std::vector<CheckResult> results;

    [[nodiscard]] bool passed() const {
        return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
    }
};

/// Substitutable pieces, so mutation tests can confirm a broken component is caught.
struct CheckHooks {
    std::function<double(const ChannelParams&, int)> flip = [](const ChannelParams& c, int lag) {
        return flip_prob(c, lag);
    };
};

namespace detail {

inline Belief random_belief(const ChannelParams& params, Rng& rng) {
    Belief b{std::vector<double>(params.aux_count(), 0.0)};
    double total = 0.0;
    for (double& v : b.probs) {
        v = uniform01(rng) < 0.3 ? 0.0 : uniform01(rng);
        total += v;
    }
    if (total == 0.0) {
        b.probs[0] = 1.0;
        return b;
    }
    for (double& v : b.probs) v /= total;
    return b;
}

inline ActionMap random_action(const ChannelParams& params, Rng& rng) {
    ActionMap a{std::vector<double>(params.aux_count())};
    for (double& v : a.prob_one) {
        const double r = uniform01(rng);
        v = r < 0.1 ? 0.0 : r < 0.2 ? 1.0 : uniform01(rng);
    }
    return a;
}

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

}  // namespace detail

/// Runs the oracle equivalences and invariants. `fast` covers the exact checks
/// and gradient checks; `full` adds the Monte Carlo and training checks.
[[nodiscard]] inline CheckReport check_suite(CheckLevel level, const CheckHooks& hooks = {},
                                             std::ostream* log = nullptr) {
    CheckReport report;
    auto run = [&](const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
        const auto t0 = std::chrono::steady_clock::now();
        CheckResult r{name, false, "", 0.0};
        try {
            std::tie(r.passed, r.detail) = body();
        } catch (const std::exception& e) {
            r.detail = std::string("exception: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (log) *log << (r.passed ? "PASS " : "FAIL ") << r.name << "  (" << r.detail << ", " << detail::fmt(r.seconds) << " s)\n";
        report.results.push_back(std::move(r));
    };

    run("flip_prob matches recursion", [&] {
        double worst = 0.0;
        for (int i = 0; i <= 100; ++i) {
            const ChannelParams c(i / 100.0, 64);
            for (int lag = 1; lag <= 64; ++lag)
                worst = std::max(worst, std::abs(hooks.flip(c, lag) - flip_prob_recursive(c, lag)));
        }
        return std::pair{worst <= 1e-12, "max |diff| " + detail::fmt(worst)};
    });

    run("step_reward matches brute force", [&] {
        Rng rng(101);
        double worst = 0.0;
        for (int i = 0; i < 10000; ++i) {
            const ChannelParams c(uniform01(rng), 1 + static_cast<int>(uniform_index(rng, 3)));
            const auto b = detail::random_belief(c, rng);
            const auto a = detail::random_action(c, rng);
            const double beta = 2.0 * uniform01(rng);
            const auto fast = step_reward(b, a, c, beta);
            const auto slow = oracles::brute_reward(b, a, c, beta);
            worst = std::max({worst, std::abs(fast.info - slow.info), std::abs(fast.distortion - slow.distortion),
                              std::abs(fast.combined - slow.combined)});
        }
        return std::pair{worst <= 1e-9, "max |diff| " + detail::fmt(worst)};
    });

    run("belief_update preserves normalization", [&] {
        Rng rng(102);
        double worst = 0.0;
        for (int i = 0; i < 2000; ++i) {
            const ChannelParams c(uniform01(rng), 1 + static_cast<int>(uniform_index(rng, 8)));
            const auto b = detail::random_belief(c, rng);
            const auto a = detail::random_action(c, rng);
            const double p1 = output_prob(b, a, c);
            const Bit y = p1 > 0.0 && (p1 >= 1.0 || bernoulli(rng, 0.5)) ? 1 : 0;
            const auto next = belief_update(b, a, y, c);
            double s = 0.0;
            for (double v : next.probs) {
                if (v < 0.0) return std::pair{false, std::string("negative posterior mass")};
                s += v;
            }
            worst = std::max(worst, std::abs(s - 1.0));
        }
        return std::pair{worst <= 1e-9, "max |sum - 1| " + detail::fmt(worst)};
    });

    run("backpropagation matches finite differences", [&] {
        Rng rng(103);
        const auto g = oracles::random_gradient_checks(100, rng);
        return std::pair{g.checked > 0 && g.max_rel_error < 1e-4, "max rel err " + detail::fmt(g.max_rel_error)};
    });

    run("replay buffer respects capacity", [&] {
        ddpg::ReplayBuffer buf(8, 1, 1);
        for (int i = 0; i < 20; ++i) {
            buf.push({{double(i)}, {0.5}, double(i), {double(i)}});
            if (buf.size() > buf.capacity()) return std::pair{false, std::string("size exceeded capacity")};
        }
        const bool oldest_evicted = buf.at(0).reward >= 12.0;
        return std::pair{oldest_evicted && buf.size() == 8, std::string("size 8 after 20 pushes")};
    });

    run("dp_optimal monotone in grid and lag resolution", [&] {
        Rng rng(104);
        double worst = INFINITY;
        for (int i = 0; i < 4; ++i) {
            const double p = 0.05 + 0.4 * uniform01(rng), beta = uniform01(rng);
            const double coarse = oracles::dp_optimal({p, 1}, 3, beta, oracles::uniform_grid(2)).value;
            const double fine = oracles::dp_optimal({p, 1}, 3, beta, oracles::uniform_grid(3)).value;
            const double deeper = oracles::dp_optimal({p, 2}, 3, beta, oracles::uniform_grid(3)).value;
            worst = std::min({worst, fine - coarse, deeper - fine});
        }
        return std::pair{worst >= -1e-12, "min increment " + detail::fmt(worst)};
    });

    if (level == CheckLevel::fast) return report;

    run("Bayes filter matches Monte Carlo posterior", [&] {
        Rng rng(105);
        double worst = 0.0;
        for (double p : {0.1, 0.3, 0.5}) {
            const ChannelParams c(p, 5);
            const auto policy = oracles::random_policy(c, 4, rng);
            worst = std::max(worst, oracles::mc_belief_check(policy, c, 4, 100000, rng).max_tv);
        }
        return std::pair{worst <= 0.02, "max TV " + detail::fmt(worst)};
    });

    run("memoryless scan matches closed form at p = 1/2", [&] {
        Rng rng(106);
        const auto r = oracles::memoryless_optimal({0.5, 16}, 1.0, 61, 20000, rng);
        return std::pair{r.closed_form_gap < 1e-9, "gap " + detail::fmt(r.closed_form_gap)};
    });

    run("degenerate agent reaches memoryless optimum", [&] {
        ddpg::TrainConfig cfg;
        cfg.params = ChannelParams(0.5, 16);
        cfg.beta = 1.0;
        cfg.mode = Degenerate{};
        cfg.gamma = 0.3;
        cfg.product_features = true;
        Rng rng(107);
        const double target = oracles::memoryless_optimal(cfg.params, 1.0, 301, 20000, rng).value_star;
        const auto trained = ddpg::train(cfg);
        const double got = ddpg::evaluate(trained.agent, cfg, 1000, eval_seed(1)).avg_reward;
        return std::pair{std::abs(got - target) <= 0.02, "eval " + detail::fmt(got) + " vs " + detail::fmt(target)};
    });

    run("reward ordering across state spaces (p = 0.1, beta = 0.5)", [&] {
        const std::vector<StateSpaceMode> modes{Degenerate{}, Limited{0.1}, Limited{0.4}, Unbounded{}};
        std::vector<double> means(modes.size(), 0.0);
        const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
        std::vector<double> rewards(modes.size() * seeds.size());
        parallel_for(rewards.size(), worker_count(), [&](std::size_t i) {
            ExperimentConfig e;
            e.train.params = ChannelParams(0.1, 16);
            e.train.beta = 0.5;
            e.train.mode = modes[i / seeds.size()];
            e.train.gamma = 0.3;
            e.train.product_features = true;
            e.save_agents = false;
            rewards[i] = run_single(e, seeds[i % seeds.size()]).eval.avg_reward;
        });
        std::string detail;
        for (std::size_t m = 0; m < modes.size(); ++m) {
            for (std::size_t s = 0; s < seeds.size(); ++s) means[m] += rewards[m * seeds.size() + s] / seeds.size();
            detail += (m ? " <= " : "") + detail::fmt(means[m]);
        }
        bool ok = true;
        for (std::size_t m = 1; m < modes.size(); ++m) ok = ok && means[m] - means[m - 1] >= -0.01;
        return std::pair{ok, detail};
    });

    return report;
}

}  // namespace memsense::harness
