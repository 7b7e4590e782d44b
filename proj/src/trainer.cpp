#include "abrforge/trainer.hpp"

#include "abrforge/util/error.hpp"
#include "abrforge/util/files.hpp"
#include "abrforge/util/hash.hpp"
#include "abrforge/util/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

namespace abrforge {

void TrainConfig::validate() const {
    if (n_epochs < 1) throw Error("n_epochs must be >= 1");
    if (ckpt_interval < 1) throw Error("ckpt_interval must be >= 1");
    if (n_seeds < 1) throw Error("n_seeds must be >= 1");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw Error("gamma must be in (0, 1]");
    if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw Error("learning rates must be > 0");
    if (entropy_start < 0.0 || entropy_end < 0.0) throw Error("entropy weights must be >= 0");
    if (early_stop && (early_stop->decision_epoch < 1 || !early_stop->should_stop)) {
        throw Error("early-stop hook needs a decision epoch >= 1 and a predicate");
    }
    policy.validate();
}

double TrainConfig::entropy_weight(std::size_t epoch) const {
    const std::size_t horizon = entropy_decay_epochs ? entropy_decay_epochs : n_epochs;
    if (horizon <= 1) return entropy_end;
    const double frac = std::min(1.0, static_cast<double>(epoch) / static_cast<double>(horizon - 1));
    return entropy_start + (entropy_end - entropy_start) * frac;
}

std::string make_run_id(const std::string& state_id, const std::string& network_id, std::uint64_t seed) {
    return state_id + "__" + network_id + "__s" + std::to_string(seed);
}

namespace {

constexpr char kMagic[8] = {'A', 'B', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put_le(std::string& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& off) {
    if (off + sizeof(T) > in.size()) throw Error("truncated checkpoint");
    unsigned char b[sizeof(T)];
    std::memcpy(b, in.data() + off, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    off += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

}  // namespace

std::string serialize_checkpoint(std::size_t epoch, const std::vector<double>& params) {
    std::string out(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, epoch);
    put_le<std::uint64_t>(out, params.size());
    for (double p : params) put_le<double>(out, p);
    return out;
}

std::pair<std::size_t, std::vector<double>> deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw Error("not a checkpoint file");
    }
    std::size_t off = sizeof(kMagic);
    const auto version = get_le<std::uint32_t>(bytes, off);
    if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
    const auto epoch = get_le<std::uint64_t>(bytes, off);
    const auto n = get_le<std::uint64_t>(bytes, off);
    if (bytes.size() != off + n * sizeof(double)) throw Error("checkpoint size does not match its header");
    std::vector<double> params(n);
    for (auto& p : params) p = get_le<double>(bytes, off);
    return {epoch, std::move(params)};
}

VideoManifest training_manifest(const BitrateLadder& ladder, const TrainConfig& cfg) {
    return synth_manifest(ladder, cfg.sim.n_chunks, cfg.sim.chunk_duration_s, cfg.manifest_jitter, cfg.manifest_seed);
}

namespace {

std::size_t argmax(const Eigen::VectorXd& v) {
    Eigen::Index i = 0;
    v.maxCoeff(&i);
    return static_cast<std::size_t>(i);
}

}  // namespace

double evaluate_fixed_policy(const DecisionFn& decide, const std::vector<Trace>& traces, const VideoManifest& manifest,
                             const BitrateLadder& ladder, const SimConfig& sim) {
    if (traces.empty()) throw Error("evaluation needs at least one test trace");
    double total = 0.0;
    std::size_t chunks = 0;
    for (const auto& trace : traces) {
        Session session(trace, manifest, ladder, sim);
        RolloutResult r;
        try {
            r = rollout(decide, session);
        } catch (const PolicyFailure& e) {
            throw Error("evaluation failed on trace " + trace.id() + ": " + e.what());
        }
        total += r.total_reward;
        chunks += r.steps.size();
    }
    return total / static_cast<double>(chunks);
}

double evaluate_checkpoint(const PolicyNetwork& policy, const CandidateDesign& state_c, const std::vector<Trace>& traces,
                           const VideoManifest& manifest, const BitrateLadder& ladder, const SimConfig& sim,
                           const SandboxPolicy& sandbox) {
    StateFunction fn(state_c, sandbox, ladder, sim);
    return evaluate_fixed_policy(
        [&](const StreamObservation& obs) {
            const StateTensor t = fn(obs);
            if (!t.all_finite()) throw Error("state produced non-finite values");
            return argmax(policy.forward(to_column(t.values)).probs.col(0));
        },
        traces, manifest, ladder, sim);
}

TrainingRun train(const CandidateDesign& state_c, const CandidateDesign& net_c, const TraceDataset& ds,
                  const TrainConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ds.validate();
    if (ds.train.empty()) throw Error("dataset " + ds.name + " has no training traces");
    if (ds.test.empty()) throw Error("dataset " + ds.name + " has no test traces");
    const BitrateLadder ladder = BitrateLadder::from_id(ds.bitrate_ladder_id);
    const VideoManifest manifest = training_manifest(ladder, cfg);
    std::vector<Trace> test = ds.test;
    if (cfg.max_test_traces && test.size() > cfg.max_test_traces) test.erase(test.begin() + static_cast<long>(cfg.max_test_traces), test.end());

    TrainingRun run;
    run.state_id = state_c.id;
    run.network_id = net_c.id;
    run.seed = seed;
    run.run_id = make_run_id(state_c.id, net_c.id, seed);

    std::size_t epoch = 0;
    auto fail = [&](const std::string& what) {
        run.failure = "epoch " + std::to_string(epoch) + ": " + what;
        return run;
    };

    std::optional<StateFunction> state_fn;
    std::unique_ptr<PolicyNetwork> net;
    try {
        state_fn.emplace(state_c, cfg.policy, ladder, cfg.sim);
        Session probe(ds.train.front(), manifest, ladder, cfg.sim);
        const StateTensor t = (*state_fn)(probe.observation());
        net = instantiate_network(net_c, t.shape(), ladder.size(), seed, cfg.policy, cfg.actor_lr, cfg.critic_lr);
    } catch (const script::ScriptError& e) {
        return fail(std::string(script::label(e.kind())) + ": " + e.detail());
    }
    const std::size_t rows = net->channels() * net->width();

    Rng rng(mix_seed(seed, 0xA2C));
    if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

    for (epoch = 0; epoch < cfg.n_epochs; ++epoch) {
        const Trace& trace = ds.train[rng.below(ds.train.size())];
        const double period = trace.cycle_period_s();
        const double start = std::isfinite(period) ? rng.uniform() * period : 0.0;
        Session session(trace, manifest, ladder, cfg.sim, start);

        nn::Matrix states(static_cast<long>(rows), static_cast<long>(cfg.sim.n_chunks));
        std::vector<std::size_t> actions;
        std::vector<double> rewards;
        try {
            while (!session.done()) {
                const StateTensor t = (*state_fn)(session.observation());
                if (!t.all_finite()) return fail("state produced non-finite values");
                const long col = static_cast<long>(actions.size());
                for (std::size_t r = 0; r < rows; ++r) states(static_cast<long>(r), col) = t.values[r];
                const PolicyOutput out = net->forward(states.col(col));
                const std::size_t a = rng.categorical(out.probs.col(0));
                actions.push_back(a);
                rewards.push_back(session.step(a).reward);
            }
        } catch (const script::ScriptError& e) {
            return fail(std::string(script::label(e.kind())) + ": " + e.detail());
        }
        const long T = static_cast<long>(actions.size());
        Eigen::VectorXd returns(T);
        double acc = 0.0;
        for (long t = T - 1; t >= 0; --t) {
            acc = rewards[static_cast<std::size_t>(t)] + cfg.gamma * acc;
            returns(t) = acc;
        }
        try {
            net->train_step(states.leftCols(T), actions, returns, cfg.entropy_weight(epoch));
        } catch (const Error& e) {
            return fail(std::string("divergence: ") + e.what());
        }
        double sum = 0.0;
        for (double r : rewards) sum += r;
        run.reward_curve.push_back(sum / static_cast<double>(T));

        const std::size_t done_epochs = epoch + 1;
        if (done_epochs % cfg.ckpt_interval == 0) {
            const std::string bytes = serialize_checkpoint(done_epochs, net->parameters());
            CheckpointRef ref{done_epochs, sha256_hex(bytes), {}};
            if (!cfg.checkpoint_dir.empty()) {
                ref.path = cfg.checkpoint_dir / (run.run_id + "_e" + std::to_string(done_epochs) + ".ckpt");
                write_file_atomic(ref.path, bytes);
            }
            run.checkpoints.push_back(std::move(ref));
            try {
                run.test_evals.emplace_back(done_epochs,
                                            evaluate_checkpoint(*net, state_c, test, manifest, ladder, cfg.sim, cfg.policy));
            } catch (const script::ScriptError& e) {
                return fail(std::string("test evaluation: ") + script::label(e.kind()) + ": " + e.detail());
            } catch (const Error& e) {
                return fail(std::string("test evaluation: ") + e.what());
            }
        }
        if (cfg.early_stop && done_epochs == cfg.early_stop->decision_epoch &&
            cfg.early_stop->should_stop(run.reward_curve)) {
            run.stopped_early = true;
            run.stop_epoch = done_epochs;
            break;
        }
    }
    return run;
}

double lower_median(std::vector<double> values) {
    if (values.empty()) throw Error("median of an empty set");
    std::sort(values.begin(), values.end());
    return values[(values.size() - 1) / 2];
}

ScoreReport final_score(const std::vector<TrainingRun>& runs, const std::string& dataset) {
    if (runs.empty()) throw Error("score requires at least one run");
    ScoreReport report;
    report.dataset = dataset;
    std::vector<double> smoothed;
    for (const auto& run : runs) {
        if (!run.completed()) throw Error("score requires full runs");
        if (run.test_evals.size() < kScoreWindow) {
            throw Error("run " + run.run_id + " has " + std::to_string(run.test_evals.size()) + " test evaluations; " +
                        std::to_string(kScoreWindow) + " are required");
        }
        double sum = 0.0;
        for (std::size_t i = run.test_evals.size() - kScoreWindow; i < run.test_evals.size(); ++i) {
            sum += run.test_evals[i].second;
        }
        const double mean = sum / static_cast<double>(kScoreWindow);
        report.per_seed.emplace_back(run.seed, mean);
        smoothed.push_back(mean);
    }
    std::sort(report.per_seed.begin(), report.per_seed.end());
    report.final_score = lower_median(smoothed);
    report.best_seed = *std::max_element(smoothed.begin(), smoothed.end());
    return report;
}

void write_run_artifacts(const std::filesystem::path& dir, const TrainingRun& run) {
    using nlohmann::json;
    std::filesystem::create_directories(dir);
    std::ostringstream curve, evals;
    for (std::size_t i = 0; i < run.reward_curve.size(); ++i) {
        curve << json{{"epoch", i + 1}, {"train_reward", run.reward_curve[i]}}.dump() << "\n";
    }
    for (const auto& [e, v] : run.test_evals) evals << json{{"epoch", e}, {"test_eval", v}}.dump() << "\n";
    json ckpts = json::array();
    for (const auto& c : run.checkpoints) {
        ckpts.push_back({{"epoch", c.epoch}, {"sha256", c.sha256}, {"path", c.path.string()}});
    }
    json summary = {{"run_id", run.run_id},
                    {"state_id", run.state_id},
                    {"network_id", run.network_id},
                    {"seed", run.seed},
                    {"epochs_completed", run.reward_curve.size()},
                    {"stopped_early", run.stopped_early},
                    {"stop_epoch", run.stop_epoch},
                    {"checkpoints", ckpts}};
    summary["failure"] = run.failure ? json(*run.failure) : json(nullptr);
    write_file_atomic(dir / "curve.jsonl", curve.str());
    write_file_atomic(dir / "test_evals.jsonl", evals.str());
    write_file_atomic(dir / "run.json", summary.dump(2) + "\n");
}

TrainingRun read_run_artifacts(const std::filesystem::path& dir) {
    using nlohmann::json;
    try {
        const json summary = json::parse(read_file(dir / "run.json"));
        TrainingRun run;
        run.run_id = summary.at("run_id");
        run.state_id = summary.at("state_id");
        run.network_id = summary.at("network_id");
        run.seed = summary.at("seed");
        run.stopped_early = summary.at("stopped_early");
        run.stop_epoch = summary.at("stop_epoch");
        if (!summary.at("failure").is_null()) run.failure = summary.at("failure").get<std::string>();
        for (const auto& c : summary.at("checkpoints")) {
            run.checkpoints.push_back({c.at("epoch"), c.at("sha256"), c.at("path").get<std::string>()});
        }
        std::istringstream curve(read_file(dir / "curve.jsonl"));
        for (std::string line; std::getline(curve, line);) {
            if (!line.empty()) run.reward_curve.push_back(json::parse(line).at("train_reward"));
        }
        std::istringstream evals(read_file(dir / "test_evals.jsonl"));
        for (std::string line; std::getline(evals, line);) {
            if (line.empty()) continue;
            const json e = json::parse(line);
            run.test_evals.emplace_back(e.at("epoch"), e.at("test_eval"));
        }
        if (run.reward_curve.size() != summary.at("epochs_completed").get<std::size_t>()) {
            throw Error("curve length does not match run.json in " + dir.string());
        }
        return run;
    } catch (const json::exception& e) {
        throw Error("malformed run artifacts in " + dir.string() + ": " + e.what());
    }
}

std::string score_report_json(const ScoreReport& report) {
    using nlohmann::json;
    json seeds = json::array();
    for (const auto& [s, v] : report.per_seed) seeds.push_back({{"seed", s}, {"smoothed", v}});
    return json{{"dataset", report.dataset},
                {"per_seed", seeds},
                {"final_score", report.final_score},
                {"best_seed", report.best_seed}}
        .dump(2);
}

}  // namespace abrforge
