#include "abrforge/campaign.hpp"

#include "abrforge/util/error.hpp"
#include "abrforge/util/files.hpp"
#include "abrforge/util/format.hpp"
#include "abrforge/util/hash.hpp"
#include "abrforge/util/worker_pool.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace abrforge {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw Error(where + " must be an object");
    for (const auto& [k, v] : obj.items()) {
        if (!allowed.count(k)) throw Error("unknown key '" + k + "' in " + where);
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    const fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

CampaignConfig CampaignConfig::from_json_file(const fs::path& path) {
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    return from_json_text(read_file(path), base);
}

CampaignConfig CampaignConfig::from_json_text(const std::string& text, const fs::path& base) {
    CampaignConfig c;
    try {
        const json j = json::parse(text);
        reject_unknown_keys(j,
                            {"name", "dataset", "ladder", "generation", "filter", "workers", "training", "sandbox",
                             "early_stop", "combination", "output_dir"},
                            "config");
        c.name = j.value("name", c.name);
        c.dataset = resolve(base, j.at("dataset").get<std::string>());
        c.ladder = j.value("ladder", "");
        c.workers = j.value("workers", c.workers);
        c.output_dir = resolve(base, j.at("output_dir").get<std::string>());

        if (j.contains("generation")) {
            const json& g = j["generation"];
            reject_unknown_keys(g, {"kind", "model", "n", "mode", "store", "prompt_dir", "temperature", "seed", "batch_id"},
                                "generation");
            auto& s = c.generation;
            s.kind = candidate_kind_from_string(g.value("kind", "state"));
            s.model = g.value("model", s.model);
            s.n = g.value("n", s.n);
            s.mode = client_mode_from_string(g.value("mode", "replay"));
            s.store = resolve(base, g.value("store", ""));
            s.prompt_dir = resolve(base, g.value("prompt_dir", ""));
            s.temperature = g.value("temperature", s.temperature);
            s.seed = g.value("seed", s.seed);
            s.batch_id = g.value("batch_id", "");
        }
        if (j.contains("filter")) {
            const json& f = j["filter"];
            reject_unknown_keys(f, {"n_samples", "threshold", "seed"}, "filter");
            c.filter.n_samples = f.value("n_samples", c.filter.n_samples);
            c.filter.threshold = f.value("threshold", c.filter.threshold);
            c.filter.seed = f.value("seed", c.filter.seed);
        }
        if (j.contains("training")) {
            const json& t = j["training"];
            reject_unknown_keys(t,
                                {"n_epochs", "ckpt_interval", "n_seeds", "gamma", "actor_lr", "critic_lr",
                                 "entropy_start", "entropy_end", "entropy_decay_epochs", "n_chunks", "max_test_traces",
                                 "manifest_jitter", "manifest_seed"},
                                "training");
            auto& s = c.training;
            s.n_epochs = t.value("n_epochs", s.n_epochs);
            s.ckpt_interval = t.value("ckpt_interval", s.ckpt_interval);
            s.n_seeds = t.value("n_seeds", s.n_seeds);
            s.gamma = t.value("gamma", s.gamma);
            s.actor_lr = t.value("actor_lr", s.actor_lr);
            s.critic_lr = t.value("critic_lr", s.critic_lr);
            s.entropy_start = t.value("entropy_start", s.entropy_start);
            s.entropy_end = t.value("entropy_end", s.entropy_end);
            s.entropy_decay_epochs = t.value("entropy_decay_epochs", s.entropy_decay_epochs);
            s.sim.n_chunks = t.value("n_chunks", s.sim.n_chunks);
            s.max_test_traces = t.value("max_test_traces", s.max_test_traces);
            s.manifest_jitter = t.value("manifest_jitter", s.manifest_jitter);
            s.manifest_seed = t.value("manifest_seed", s.manifest_seed);
        }
        if (j.contains("sandbox")) {
            const json& sb = j["sandbox"];
            reject_unknown_keys(sb, {"time_limit_s", "memory_limit_mb", "max_steps"}, "sandbox");
            auto& p = c.training.policy;
            p.time_limit_s = sb.value("time_limit_s", p.time_limit_s);
            if (sb.contains("memory_limit_mb")) p.memory_limit_bytes = sb["memory_limit_mb"].get<std::size_t>() << 20;
            p.max_steps = sb.value("max_steps", p.max_steps);
        }
        if (j.contains("early_stop")) {
            const json& e = j["early_stop"];
            reject_unknown_keys(e,
                                {"enabled", "method", "k_epochs", "length", "threshold", "predictor", "embedding_store",
                                 "apply_to_combinations"},
                                "early_stop");
            auto& s = c.early_stop;
            s.enabled = e.value("enabled", s.enabled);
            s.method = stop_method_from_string(e.value("method", to_string(s.method)));
            s.prefix.k_epochs = e.value("k_epochs", s.prefix.k_epochs);
            s.prefix.length = e.value("length", s.prefix.length);
            if (e.contains("threshold") && !e["threshold"].is_null()) s.threshold = e["threshold"].get<double>();
            s.predictor = resolve(base, e.value("predictor", ""));
            s.embedding_store = resolve(base, e.value("embedding_store", ""));
            s.apply_to_combinations = e.value("apply_to_combinations", s.apply_to_combinations);
        }
        if (j.contains("combination")) {
            const json& k = j["combination"];
            reject_unknown_keys(k, {"top_k_states", "top_k_nets"}, "combination");
            c.top_k_states = k.value("top_k_states", c.top_k_states);
            c.top_k_nets = k.value("top_k_nets", c.top_k_nets);
        }
    } catch (const json::exception& e) {
        throw Error(std::string("malformed campaign config: ") + e.what());
    }
    return c;
}

void CampaignConfig::validate() const {
    if (dataset.empty()) throw Error("config names no dataset");
    if (!fs::exists(dataset)) throw Error("dataset manifest not found: " + dataset.string());
    if (!ladder.empty()) BitrateLadder::from_id(ladder);
    if (generation.n < 1) throw Error("generation.n must be >= 1");
    if (generation.mode != ClientMode::live && generation.store.empty()) {
        throw Error("generation.store is required in " + to_string(generation.mode) + " mode");
    }
    if (generation.mode == ClientMode::replay && !fs::exists(generation.store)) {
        throw Error("replay store not found: " + generation.store.string());
    }
    if (generation.prompt_dir.empty()) throw Error("generation.prompt_dir is required");
    if (workers < 1) throw Error("workers must be >= 1");
    if (top_k_states < 1 || top_k_nets < 1) throw Error("top_k values must be >= 1");
    if (output_dir.empty()) throw Error("output_dir is required");
    filter.validate();
    training.validate();
    if (training.n_epochs / training.ckpt_interval < kScoreWindow) {
        throw Error("training must produce at least " + std::to_string(kScoreWindow) +
                    " test evaluations (n_epochs / ckpt_interval)");
    }
    if (early_stop.enabled) {
        early_stop.prefix.validate();
        if (early_stop.prefix.k_epochs > training.n_epochs) throw Error("early-stop K exceeds n_epochs");
        if (early_stop.predictor.empty()) {
            if (is_learned(early_stop.method)) {
                throw Error("learned early-stop method " + to_string(early_stop.method) + " needs a predictor file");
            }
            if (!early_stop.threshold) throw Error("heuristic early stop needs a threshold or a predictor file");
        } else if (!fs::exists(early_stop.predictor)) {
            throw Error("early-stop predictor not found: " + early_stop.predictor.string());
        }
    }
}

CampaignLedger::CampaignLedger(fs::path path) : path_(std::move(path)) {
    if (!fs::exists(path_)) return;
    std::istringstream in(read_file(path_));
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) lines_.push_back(line);
    }
}

bool CampaignLedger::contains(const std::string& line) const {
    return std::find(lines_.begin(), lines_.end(), line) != lines_.end();
}

void CampaignLedger::record(const std::string& line) { record_all({line}); }

void CampaignLedger::record_all(const std::vector<std::string>& lines) {
    std::string buf;
    std::vector<std::string> fresh;
    for (const auto& l : lines) {
        if (contains(l) || std::find(fresh.begin(), fresh.end(), l) != fresh.end()) continue;
        fresh.push_back(l);
    }
    if (fresh.empty()) return;
    for (std::size_t i = 0; i < fresh.size(); ++i) {
        if (i) buf += "\n";
        buf += fresh[i];
    }
    append_line(path_, buf);
    lines_.insert(lines_.end(), fresh.begin(), fresh.end());
}

const LeaderboardRow* Leaderboard::baseline() const {
    for (const auto& r : rows) {
        if (r.baseline) return &r;
    }
    return nullptr;
}

std::string Leaderboard::to_json() const {
    json rs = json::array();
    for (const auto& r : rows) {
        json seeds = json::array();
        for (const auto& [s, v] : r.per_seed) seeds.push_back({{"seed", s}, {"smoothed", v}});
        rs.push_back({{"candidate_id", r.candidate_id},
                      {"state_id", r.state_id},
                      {"network_id", r.network_id},
                      {"baseline", r.baseline},
                      {"final_score", r.final_score},
                      {"best_seed", r.best_seed},
                      {"per_seed", seeds}});
    }
    auto pairs = [](const std::vector<std::pair<std::string, std::string>>& v) {
        json a = json::array();
        for (const auto& [id, why] : v) a.push_back({{"candidate_id", id}, {"reason", why}});
        return a;
    };
    return json{{"kind", to_string(kind)},
                {"combined", combined},
                {"dataset", dataset},
                {"rows", rs},
                {"stopped", pairs(stopped)},
                {"failed", pairs(failed)}}
        .dump(2);
}

Leaderboard Leaderboard::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        Leaderboard b;
        b.kind = candidate_kind_from_string(j.at("kind"));
        b.combined = j.value("combined", false);
        b.dataset = j.value("dataset", "");
        for (const auto& r : j.at("rows")) {
            LeaderboardRow row;
            row.candidate_id = r.at("candidate_id");
            row.state_id = r.at("state_id");
            row.network_id = r.at("network_id");
            row.baseline = r.at("baseline");
            row.final_score = r.at("final_score");
            row.best_seed = r.at("best_seed");
            for (const auto& s : r.at("per_seed")) row.per_seed.emplace_back(s.at("seed"), s.at("smoothed"));
            b.rows.push_back(std::move(row));
        }
        for (const auto& s : j.value("stopped", json::array())) b.stopped.emplace_back(s.at("candidate_id"), s.at("reason"));
        for (const auto& s : j.value("failed", json::array())) b.failed.emplace_back(s.at("candidate_id"), s.at("reason"));
        return b;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed leaderboard: ") + e.what());
    }
}

CandidateDesign resolve_candidate(const std::string& ref, const std::vector<fs::path>& dirs) {
    const std::string prefix = "builtin:";
    if (ref.rfind(prefix, 0) == 0) return builtin(ref.substr(prefix.size()));
    const fs::path p(ref);
    if (p.extension() == ".code" && fs::exists(p)) {
        const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
        for (auto& c : load_corpus_dir(dir)) {
            if (c.id == p.stem().string()) return c;
        }
        throw Error("no sidecar metadata for " + ref);
    }
    for (const auto& dir : dirs) {
        if (fs::exists(dir / (ref + ".code")) && fs::exists(dir / (ref + ".json"))) {
            for (auto& c : load_corpus_dir(dir)) {
                if (c.id == ref) return c;
            }
        }
    }
    return builtin(ref);
}

namespace {

// One candidate pairing trained for every seed.
struct CandidateJob {
    std::string candidate_id;
    CandidateDesign state;
    CandidateDesign network;
    bool baseline = false;
    bool early_stop = false;
    std::optional<std::vector<double>> embedding;
};

struct JobOutcome {
    std::vector<TrainingRun> runs;
    std::optional<std::string> stopped;
    std::optional<std::string> failed;
};

struct EarlyStopRule {
    StopPredictor predictor;
    PrefixConfig prefix;
};

std::optional<EarlyStopRule> load_stop_rule(const EarlyStopSettings& s) {
    if (!s.enabled) return std::nullopt;
    EarlyStopRule rule;
    if (!s.predictor.empty()) {
        auto [pred, prefix] = predictor_from_json(read_file(s.predictor));
        rule.predictor = std::move(pred);
        rule.prefix = prefix;
        if (s.threshold) rule.predictor.decision_threshold = *s.threshold;
    } else {
        rule.predictor.method = s.method;
        rule.predictor.decision_threshold = *s.threshold;
        rule.prefix = s.prefix;
    }
    return rule;
}

std::string run_line(const TrainingRun& run, const fs::path& dir) {
    json j = {{"event", "run_finished"},
              {"run_id", run.run_id},
              {"epochs", run.reward_curve.size()},
              {"curve_sha256", sha256_hex(read_file(dir / "curve.jsonl"))},
              {"evals_sha256", sha256_hex(read_file(dir / "test_evals.jsonl"))}};
    if (run.failure) {
        j["status"] = "failed";
        j["reason"] = *run.failure;
    } else if (run.stopped_early) {
        j["status"] = "stopped";
        j["stop_epoch"] = run.stop_epoch;
    } else {
        j["status"] = "completed";
        if (!run.checkpoints.empty()) j["last_checkpoint_sha256"] = run.checkpoints.back().sha256;
    }
    return j.dump();
}

// Trains (or reloads) one seed and returns it with its ledger lines.
std::pair<TrainingRun, std::vector<std::string>> run_seed(const CandidateJob& job, const TraceDataset& ds,
                                                          TrainConfig cfg, std::uint64_t seed,
                                                          const std::optional<EarlyStopRule>& rule,
                                                          const fs::path& runs_dir) {
    const std::string run_id = make_run_id(job.state.id, job.network.id, seed);
    const fs::path dir = runs_dir / run_id;
    TrainingRun run;
    if (fs::exists(dir / "run.json")) {
        run = read_run_artifacts(dir);
    } else {
        cfg.early_stop.reset();
        if (rule && job.early_stop && seed == 0) {
            cfg.early_stop = make_early_stop_hook(rule->predictor, rule->prefix, job.embedding);
        }
        run = train(job.state, job.network, ds, cfg, seed);
        write_run_artifacts(dir, run);
    }
    const std::string started = json{{"event", "run_started"}, {"run_id", run_id}}.dump();
    return {run, {started, run_line(run, dir)}};
}

// Seed 0 of every job first (it carries the early-stop decision), then the
// remaining seeds of the jobs that survived. Ledger lines are written in job
// order regardless of the worker count.
std::vector<JobOutcome> train_jobs(const std::vector<CandidateJob>& jobs, const TraceDataset& ds,
                                   const TrainConfig& cfg, const std::optional<EarlyStopRule>& rule,
                                   const fs::path& runs_dir, std::size_t workers, CampaignLedger& ledger) {
    std::vector<JobOutcome> out(jobs.size());
    WorkerPool pool(workers);
    using Result = std::pair<TrainingRun, std::vector<std::string>>;
    {
        std::vector<std::future<Result>> futs;
        for (const auto& job : jobs) {
            futs.push_back(pool.submit([&, j = &job] { return run_seed(*j, ds, cfg, 0, rule, runs_dir); }));
        }
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            auto [run, lines] = futs[i].get();
            ledger.record_all(lines);
            if (run.failure) {
                out[i].failed = "training failed: " + *run.failure;
            } else if (run.stopped_early) {
                out[i].stopped = "early-stopped at epoch " + std::to_string(run.stop_epoch);
            }
            out[i].runs.push_back(std::move(run));
        }
    }
    std::vector<std::pair<std::size_t, std::future<Result>>> rest;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (out[i].failed || out[i].stopped) continue;
        for (std::uint64_t seed = 1; seed < cfg.n_seeds; ++seed) {
            rest.emplace_back(i, pool.submit([&, j = &jobs[i], seed] { return run_seed(*j, ds, cfg, seed, rule, runs_dir); }));
        }
    }
    for (auto& [i, fut] : rest) {
        auto [run, lines] = fut.get();
        ledger.record_all(lines);
        if (run.failure && !out[i].failed) out[i].failed = "training failed: " + *run.failure;
        out[i].runs.push_back(std::move(run));
    }
    return out;
}

std::string transition_line(const std::string& id, CandidateStatus from, CandidateStatus to,
                            const std::string& reason = {}) {
    json j = {{"event", "transition"}, {"candidate", id}, {"from", to_string(from)}, {"to", to_string(to)}};
    if (!reason.empty()) j["reason"] = reason;
    return j.dump();
}

void advance_logged(CandidateDesign& c, CandidateStatus to, CampaignLedger& ledger) {
    const CandidateStatus from = c.status;
    c.advance(to);
    ledger.record(transition_line(c.id, from, to));
}

void reject_logged(CandidateDesign& c, const std::string& reason, CampaignLedger& ledger) {
    const CandidateStatus from = c.status;
    c.reject(reason);
    ledger.record(transition_line(c.id, from, CandidateStatus::rejected, reason));
}

void sort_rows(std::vector<LeaderboardRow>& rows) {
    std::sort(rows.begin(), rows.end(), [](const LeaderboardRow& a, const LeaderboardRow& b) {
        if (a.final_score != b.final_score) return a.final_score > b.final_score;
        return a.candidate_id < b.candidate_id;
    });
}

LeaderboardRow make_row(const CandidateJob& job, const std::vector<TrainingRun>& runs, const std::string& dataset) {
    const ScoreReport report = final_score(runs, dataset);
    LeaderboardRow row;
    row.candidate_id = job.candidate_id;
    row.state_id = job.state.id;
    row.network_id = job.network.id;
    row.baseline = job.baseline;
    row.final_score = report.final_score;
    row.best_seed = report.best_seed;
    row.per_seed = report.per_seed;
    return row;
}

std::shared_ptr<EmbeddingClient> make_embedder(const EarlyStopSettings& s) {
    if (!s.enabled || !uses_text(s.method)) return nullptr;
    if (s.embedding_store.empty()) return std::make_shared<HashEmbedder>();
    return std::make_shared<CachedEmbedder>(nullptr, s.embedding_store);
}

GenerationBatch load_or_generate(const CampaignConfig& cfg) {
    const fs::path batch_file = cfg.output_dir / "batch.json";
    const fs::path gen_dir = cfg.output_dir / "generated";
    const auto& g = cfg.generation;
    if (fs::exists(batch_file) && fs::is_directory(gen_dir)) {
        const json j = json::parse(read_file(batch_file));
        GenerationBatch b;
        b.batch_id = j.at("batch_id");
        b.kind = candidate_kind_from_string(j.at("kind"));
        b.model_name = j.at("model");
        b.n_requested = j.at("n_requested");
        b.failures = j.at("failures");
        for (const auto& f : j.at("failure_reasons")) b.failure_reasons.emplace_back(f.at("index"), f.at("reason"));
        std::map<std::string, CandidateDesign> by_id;
        for (auto& c : load_corpus_dir(gen_dir)) by_id.emplace(c.id, std::move(c));
        for (const auto& c : j.at("candidates")) {
            auto it = by_id.find(c.at("id").get<std::string>());
            if (it == by_id.end()) throw InfrastructureError("generated candidate missing: " + c.at("id").get<std::string>());
            if (sha256_hex(it->second.source_text) != c.at("source_sha256").get<std::string>()) {
                throw InfrastructureError("generated candidate " + it->first + " does not match batch.json");
            }
            it->second.status = CandidateStatus::raw;
            it->second.rejection_reason.reset();
            b.candidates.push_back(it->second);
        }
        return b;
    }
    const PromptTemplate tmpl = load_prompt_template(g.prompt_dir, g.kind);
    std::shared_ptr<LLMClient> client;
    switch (g.mode) {
        case ClientMode::replay: client = std::make_shared<ReplayClient>(g.store); break;
        case ClientMode::record:
            client = std::make_shared<RecordingClient>(std::make_shared<LiveClient>(LiveClientConfig::from_env()), g.store);
            break;
        case ClientMode::live: client = std::make_shared<LiveClient>(LiveClientConfig::from_env()); break;
    }
    GenerationOptions opts;
    opts.model = g.model;
    opts.temperature = g.temperature;
    opts.seed = g.seed;
    opts.batch_id = g.batch_id;
    GenerationBatch batch = generate_batch(*client, g.kind, g.n, tmpl, opts);
    for (const auto& c : batch.candidates) save_candidate(gen_dir, c);
    const std::string text = batch_to_json(batch);
    write_file_atomic(batch_file, text + "\n");
    return batch;
}

}  // namespace

CampaignResult run_campaign(const CampaignConfig& cfg) {
    cfg.validate();
    TraceDataset ds = load_dataset(cfg.dataset);
    if (!cfg.ladder.empty()) ds.bitrate_ladder_id = cfg.ladder;
    ds.validate();
    const auto rule = load_stop_rule(cfg.early_stop);
    auto embedder = make_embedder(cfg.early_stop);

    fs::create_directories(cfg.output_dir);
    CampaignLedger ledger(cfg.output_dir / "ledger.jsonl");
    ledger.record(json{{"event", "campaign"}, {"name", cfg.name}, {"dataset", ds.name}}.dump());

    CampaignResult result;
    result.batch = load_or_generate(cfg);
    const GenerationBatch& batch = result.batch;
    ledger.record(json{{"event", "batch_created"},
                       {"batch_id", batch.batch_id},
                       {"kind", to_string(batch.kind)},
                       {"model", batch.model_name},
                       {"n_requested", batch.n_requested},
                       {"candidates", batch.candidates.size()},
                       {"failures", batch.failures},
                       {"sha256", sha256_hex(read_file(cfg.output_dir / "batch.json"))}}
                      .dump());

    // Prefilter.
    std::vector<CandidateDesign> cands = batch.candidates;
    GenerationBatch filtered = batch;
    CheckContext ctx;
    ctx.policy = cfg.training.policy;
    ctx.sim = cfg.training.sim;
    ctx.ladder = BitrateLadder::from_id(ds.bitrate_ladder_id);
    PrefilterOptions popts;
    popts.workers = cfg.workers;
    result.filter = run_prefilter(filtered, cfg.filter, ctx, popts);
    if (result.filter.infrastructure_errors > 0) {
        throw InfrastructureError(std::to_string(result.filter.infrastructure_errors) +
                                  " candidate checks hit infrastructure errors");
    }
    const std::string filter_json = result.filter.to_json();
    write_file_atomic(cfg.output_dir / "filter_report.json", filter_json + "\n");
    for (std::size_t i = 0; i < cands.size(); ++i) {
        CandidateDesign& c = cands[i];
        const CandidateDesign& f = filtered.candidates[i];
        const bool compiled = result.filter.outcomes[i].compiled;
        if (compiled) advance_logged(c, CandidateStatus::compiled, ledger);
        if (f.status == CandidateStatus::normalized) advance_logged(c, CandidateStatus::normalized, ledger);
        if (f.status == CandidateStatus::rejected) reject_logged(c, f.rejection_reason.value_or("rejected"), ledger);
    }
    ledger.record(json{{"event", "filter_report"},
                       {"total", result.filter.total},
                       {"compilable", result.filter.compilable},
                       {"well_normalized", result.filter.well_normalized ? json(*result.filter.well_normalized)
                                                                          : json(nullptr)},
                       {"sha256", sha256_hex(filter_json + "\n")}}
                      .dump());
    const fs::path accepted_dir = cfg.output_dir / "candidates";

    // Training jobs: the baseline pair first, then every survivor.
    const bool states = batch.kind == CandidateKind::state;
    std::vector<CandidateJob> jobs;
    CandidateJob base;
    base.candidate_id = states ? kOriginalStateId : kOriginalNetworkId;
    base.state = builtin(kOriginalStateId);
    base.network = builtin(kOriginalNetworkId);
    base.baseline = true;
    jobs.push_back(base);
    std::vector<CandidateDesign*> job_cands = {nullptr};
    for (auto& c : cands) {
        const CandidateStatus ready = states ? CandidateStatus::normalized : CandidateStatus::compiled;
        if (c.status != ready) continue;
        CandidateJob job;
        job.candidate_id = c.id;
        job.state = states ? c : builtin(kOriginalStateId);
        job.network = states ? builtin(kOriginalNetworkId) : c;
        job.early_stop = rule.has_value();
        if (job.early_stop && embedder) job.embedding = embedder->embed(c.source_text);
        jobs.push_back(std::move(job));
        job_cands.push_back(&c);
    }
    const auto outcomes = train_jobs(jobs, ds, cfg.training, rule, cfg.output_dir / "runs", cfg.workers, ledger);

    Leaderboard& board = result.leaderboard;
    board.kind = batch.kind;
    board.dataset = ds.name;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const JobOutcome& o = outcomes[i];
        for (const auto& r : o.runs) result.runs.push_back(r);
        CandidateDesign* c = job_cands[i];
        if (o.failed || o.stopped) {
            const std::string why = o.failed ? *o.failed : *o.stopped;
            if (!c) throw Error("baseline training did not complete: " + why);
            reject_logged(*c, why, ledger);
            (o.failed ? board.failed : board.stopped).emplace_back(c->id, why);
            continue;
        }
        LeaderboardRow row = make_row(jobs[i], o.runs, ds.name);
        if (c) {
            advance_logged(*c, CandidateStatus::trained, ledger);
            advance_logged(*c, CandidateStatus::scored, ledger);
        }
        ledger.record(json{{"event", "scored"},
                           {"candidate", row.candidate_id},
                           {"baseline", row.baseline},
                           {"final_score", row.final_score},
                           {"best_seed", row.best_seed}}
                          .dump());
        board.rows.push_back(std::move(row));
    }
    sort_rows(board.rows);
    for (const auto& c : cands) save_candidate(accepted_dir, c);
    const std::string board_json = board.to_json();
    write_file_atomic(cfg.output_dir / "leaderboard.json", board_json + "\n");
    ledger.record(json{{"event", "leaderboard"}, {"rows", board.rows.size()}, {"sha256", sha256_hex(board_json + "\n")}}
                      .dump());

    for (auto style : {ReportStyle::filter_table, ReportStyle::score_table, ReportStyle::improvement_table,
                       ReportStyle::curve_data}) {
        emit_report(cfg.output_dir, style);
    }
    if (fs::is_directory(cfg.output_dir / "cv")) emit_report(cfg.output_dir, ReportStyle::cv_table);
    return result;
}

std::vector<std::pair<std::string, std::string>> combine_top(const std::vector<ScoreEntry>& states,
                                                             const std::vector<ScoreEntry>& nets, std::size_t k) {
    if (k < 1) throw Error("k must be >= 1");
    auto top = [k](const std::vector<ScoreEntry>& list, const std::string& name) {
        std::vector<ScoreEntry> sorted;
        std::set<std::string> seen;
        for (const auto& e : list) {
            if (!std::isfinite(e.final_score)) continue;
            if (seen.insert(e.id).second) sorted.push_back(e);
        }
        if (sorted.size() < k) {
            throw Error(name + " list has " + std::to_string(sorted.size()) + " scored entries; k=" + std::to_string(k) +
                        " needs " + std::to_string(k));
        }
        std::sort(sorted.begin(), sorted.end(), [](const ScoreEntry& a, const ScoreEntry& b) {
            if (a.final_score != b.final_score) return a.final_score > b.final_score;
            return a.id < b.id;
        });
        sorted.resize(k);
        return sorted;
    };
    const auto s = top(states, "state");
    const auto n = top(nets, "network");
    std::vector<std::pair<std::string, std::string>> jobs;
    jobs.reserve(k * k);
    for (const auto& a : s) {
        for (const auto& b : n) jobs.emplace_back(a.id, b.id);
    }
    return jobs;
}

std::vector<ScoreEntry> score_entries(const Leaderboard& board, bool include_baseline) {
    std::vector<ScoreEntry> out;
    for (const auto& r : board.rows) {
        if (r.baseline && !include_baseline) continue;
        out.push_back({r.candidate_id, r.final_score});
    }
    return out;
}

Leaderboard run_combinations(const CampaignConfig& cfg, const std::vector<std::pair<std::string, std::string>>& jobs_in,
                             const std::vector<fs::path>& candidate_dirs) {
    cfg.validate();
    TraceDataset ds = load_dataset(cfg.dataset);
    if (!cfg.ladder.empty()) ds.bitrate_ladder_id = cfg.ladder;
    const auto rule = cfg.early_stop.apply_to_combinations ? load_stop_rule(cfg.early_stop) : std::nullopt;
    auto embedder = cfg.early_stop.apply_to_combinations ? make_embedder(cfg.early_stop) : nullptr;
    const fs::path dir = cfg.output_dir / "combinations";
    fs::create_directories(dir);
    CampaignLedger ledger(dir / "ledger.jsonl");
    ledger.record(json{{"event", "combination_study"}, {"jobs", jobs_in.size()}, {"dataset", ds.name}}.dump());

    std::vector<CandidateJob> jobs;
    CandidateJob base;
    base.candidate_id = std::string(kOriginalStateId) + "+" + kOriginalNetworkId;
    base.state = builtin(kOriginalStateId);
    base.network = builtin(kOriginalNetworkId);
    base.baseline = true;
    jobs.push_back(base);
    for (const auto& [s, n] : jobs_in) {
        CandidateJob job;
        job.state = resolve_candidate(s, candidate_dirs);
        job.network = resolve_candidate(n, candidate_dirs);
        if (job.state.kind != CandidateKind::state) throw Error(s + " is not a state candidate");
        if (job.network.kind != CandidateKind::network) throw Error(n + " is not a network candidate");
        job.candidate_id = job.state.id + "+" + job.network.id;
        job.early_stop = rule.has_value();
        if (job.early_stop && embedder) job.embedding = embedder->embed(job.state.source_text + "\n" + job.network.source_text);
        jobs.push_back(std::move(job));
    }
    const auto outcomes = train_jobs(jobs, ds, cfg.training, rule, cfg.output_dir / "runs", cfg.workers, ledger);
    Leaderboard board;
    board.kind = CandidateKind::state;
    board.combined = true;
    board.dataset = ds.name;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const JobOutcome& o = outcomes[i];
        if (o.failed || o.stopped) {
            if (jobs[i].baseline) throw Error("baseline training did not complete");
            (o.failed ? board.failed : board.stopped).emplace_back(jobs[i].candidate_id, o.failed ? *o.failed : *o.stopped);
            continue;
        }
        board.rows.push_back(make_row(jobs[i], o.runs, ds.name));
        ledger.record(json{{"event", "scored"},
                           {"candidate", board.rows.back().candidate_id},
                           {"final_score", board.rows.back().final_score},
                           {"best_seed", board.rows.back().best_seed}}
                          .dump());
    }
    sort_rows(board.rows);
    const std::string text = board.to_json();
    write_file_atomic(dir / "leaderboard.json", text + "\n");
    ledger.record(json{{"event", "leaderboard"}, {"rows", board.rows.size()}, {"sha256", sha256_hex(text + "\n")}}.dump());
    return board;
}

std::string to_string(ReportStyle s) {
    switch (s) {
        case ReportStyle::filter_table: return "filter_table";
        case ReportStyle::score_table: return "score_table";
        case ReportStyle::improvement_table: return "improvement_table";
        case ReportStyle::curve_data: return "curve_data";
        case ReportStyle::cv_table: return "cv_table";
    }
    return "?";
}

ReportStyle report_style_from_string(const std::string& s) {
    for (auto r : {ReportStyle::filter_table, ReportStyle::score_table, ReportStyle::improvement_table,
                   ReportStyle::curve_data, ReportStyle::cv_table}) {
        if (to_string(r) == s) return r;
    }
    throw Error("unknown report style '" + s + "'");
}

std::string format_improvement(double candidate, double baseline) {
    if (baseline == 0.0 || !std::isfinite(baseline)) throw Error("improvement needs a non-zero baseline");
    const double pct = 100.0 * (candidate - baseline) / std::abs(baseline);
    std::string s = fixed(pct, 1);
    if (s == "-0.0") s = "0.0";
    return s + "%";
}

namespace {

std::string fmt3(double v) { return fixed(v, 3); }

std::vector<fs::path> write_report(const fs::path& campaign_dir, ReportStyle style,
                                   const std::vector<std::pair<std::string, std::string>>& files) {
    const fs::path dir = campaign_dir / "reports";
    fs::create_directories(dir);
    std::vector<fs::path> paths;
    json listed = json::array();
    for (const auto& [name, contents] : files) {
        write_file_atomic(dir / name, contents);
        paths.push_back(dir / name);
        listed.push_back({{"file", "reports/" + name}, {"sha256", sha256_hex(contents)}});
    }
    CampaignLedger ledger(campaign_dir / "ledger.jsonl");
    ledger.record(json{{"event", "report_emitted"}, {"style", to_string(style)}, {"files", listed}}.dump());
    return paths;
}

Leaderboard read_board(const fs::path& path) {
    if (!fs::exists(path)) throw Error("campaign has no leaderboard yet: " + path.string());
    return Leaderboard::from_json(read_file(path));
}

}  // namespace

std::vector<fs::path> emit_report(const fs::path& campaign_dir, ReportStyle style) {
    switch (style) {
        case ReportStyle::filter_table: {
            const fs::path p = campaign_dir / "filter_report.json";
            if (!fs::exists(p)) throw Error("campaign has no filter report yet");
            const json j = json::parse(read_file(p));
            FilterReport r;
            r.total = j.at("total");
            r.compilable = j.at("compilable");
            if (!j.at("well_normalized").is_null()) r.well_normalized = j.at("well_normalized").get<std::size_t>();
            std::string label = "candidates";
            if (fs::exists(campaign_dir / "leaderboard.json")) {
                label = read_board(campaign_dir / "leaderboard.json").dataset;
            }
            json out = {{"total", r.total}, {"compilable", r.compilable}};
            out["well_normalized"] = r.well_normalized ? json(*r.well_normalized) : json(nullptr);
            return write_report(campaign_dir, style,
                                {{"filter_table.txt", r.to_table(label)}, {"filter_table.json", out.dump(2) + "\n"}});
        }
        case ReportStyle::score_table: {
            const Leaderboard b = read_board(campaign_dir / "leaderboard.json");
            const LeaderboardRow* base = b.baseline();
            std::vector<std::vector<std::string>> rows = {{"Rank", "Candidate", "Score", "Best seed", "Impr."}};
            json out = json::array();
            std::size_t rank = 0;
            for (const auto& r : b.rows) {
                ++rank;
                std::string impr = "n/a";
                json jr = {{"rank", rank}, {"candidate_id", r.candidate_id}, {"baseline", r.baseline},
                           {"final_score", r.final_score}, {"best_seed", r.best_seed}};
                if (base && !r.baseline && base->final_score != 0.0) {
                    impr = format_improvement(r.final_score, base->final_score);
                    jr["improvement"] = (r.final_score - base->final_score) / std::abs(base->final_score);
                }
                if (r.baseline) impr = "baseline";
                rows.push_back({std::to_string(rank), r.candidate_id, fmt3(r.final_score), fmt3(r.best_seed), impr});
                out.push_back(jr);
            }
            return write_report(campaign_dir, style,
                                {{"score_table.txt", text_table(rows, {true, false, true, true, true})},
                                 {"score_table.json", out.dump(2) + "\n"}});
        }
        case ReportStyle::improvement_table: {
            std::vector<std::pair<std::string, Leaderboard>> boards;
            if (fs::exists(campaign_dir / "leaderboard.json")) {
                Leaderboard b = read_board(campaign_dir / "leaderboard.json");
                boards.emplace_back(b.kind == CandidateKind::state ? "State" : "Neural Net", b);
            }
            if (fs::exists(campaign_dir / "combinations" / "leaderboard.json")) {
                boards.emplace_back("Combined", read_board(campaign_dir / "combinations" / "leaderboard.json"));
            }
            if (boards.empty()) throw Error("campaign has no leaderboard yet");
            std::vector<std::vector<std::string>> rows = {
                {"Design", "Dataset", "Original", "Best", "Impr. (median)", "Best seed", "Impr. (best seed)"}};
            json out = json::array();
            for (const auto& [label, b] : boards) {
                const LeaderboardRow* base = b.baseline();
                if (!base) throw Error("improvement_table needs the baseline row in the " + label + " leaderboard");
                const LeaderboardRow* best = nullptr;
                const LeaderboardRow* best_seed = nullptr;
                for (const auto& r : b.rows) {
                    if (r.baseline) continue;
                    if (!best) best = &r;  // rows are sorted by median score
                    if (!best_seed || r.best_seed > best_seed->best_seed) best_seed = &r;
                }
                if (!best) {
                    rows.push_back({label, b.dataset, fmt3(base->final_score), "n/a", "n/a", "n/a", "n/a"});
                    out.push_back({{"design", label}, {"dataset", b.dataset}, {"original", base->final_score}});
                    continue;
                }
                rows.push_back({label, b.dataset, fmt3(base->final_score), fmt3(best->final_score),
                                format_improvement(best->final_score, base->final_score), fmt3(best_seed->best_seed),
                                format_improvement(best_seed->best_seed, base->best_seed)});
                out.push_back({{"design", label},
                               {"dataset", b.dataset},
                               {"original", base->final_score},
                               {"original_best_seed", base->best_seed},
                               {"best_candidate", best->candidate_id},
                               {"best", best->final_score},
                               {"improvement", (best->final_score - base->final_score) / std::abs(base->final_score)},
                               {"best_seed_candidate", best_seed->candidate_id},
                               {"best_seed", best_seed->best_seed},
                               {"improvement_best_seed",
                                (best_seed->best_seed - base->best_seed) / std::abs(base->best_seed)}});
            }
            return write_report(campaign_dir, style,
                                {{"improvement_table.txt", text_table(rows, {false, false, true, true, true, true, true})},
                                 {"improvement_table.json", out.dump(2) + "\n"}});
        }
        case ReportStyle::curve_data: {
            const fs::path runs = campaign_dir / "runs";
            if (!fs::is_directory(runs)) throw Error("campaign has no training runs yet");
            std::vector<fs::path> dirs;
            for (const auto& e : fs::directory_iterator(runs)) {
                if (fs::exists(e.path() / "run.json")) dirs.push_back(e.path());
            }
            std::sort(dirs.begin(), dirs.end());
            std::ostringstream curves, evals;
            curves.precision(17);
            evals.precision(17);
            curves << "run_id,epoch,train_reward\n";
            evals << "run_id,epoch,test_eval\n";
            for (const auto& d : dirs) {
                const TrainingRun r = read_run_artifacts(d);
                for (std::size_t i = 0; i < r.reward_curve.size(); ++i) {
                    curves << r.run_id << "," << i + 1 << "," << r.reward_curve[i] << "\n";
                }
                for (const auto& [e, v] : r.test_evals) evals << r.run_id << "," << e << "," << v << "\n";
            }
            return write_report(campaign_dir, style, {{"curves.csv", curves.str()}, {"test_evals.csv", evals.str()}});
        }
        case ReportStyle::cv_table: {
            const fs::path cv = campaign_dir / "cv";
            if (!fs::is_directory(cv)) throw Error("campaign has no cross-validation results (run `abrforge cv`)");
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(cv)) {
                if (e.path().extension() == ".json") files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
            if (files.empty()) throw Error("campaign has no cross-validation results");
            std::vector<CVReport> reports;
            json out = json::array();
            for (const auto& f : files) {
                reports.push_back(cv_report_from_json(read_file(f)));
                out.push_back(json::parse(cv_report_json(reports.back())));
            }
            return write_report(campaign_dir, style,
                                {{"cv_table.txt", cv_table(reports)}, {"cv_table.json", out.dump(2) + "\n"}});
        }
    }
    throw Error("unhandled report style");
}

std::vector<std::string> reconcile(const fs::path& campaign_dir) {
    std::vector<std::string> issues;
    const CampaignLedger ledger(campaign_dir / "ledger.jsonl");
    std::optional<json> batch, filter, leaderboard;
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> history;
    std::size_t scored_events = 0, started = 0, finished = 0;
    for (const auto& line : ledger.lines()) {
        const json e = json::parse(line);
        const std::string ev = e.at("event");
        if (ev == "batch_created") batch = e;
        if (ev == "filter_report") filter = e;
        if (ev == "leaderboard") leaderboard = e;
        if (ev == "transition") history[e.at("candidate")].emplace_back(e.at("from"), e.at("to"));
        if (ev == "scored" && !e.value("baseline", false)) ++scored_events;
        if (ev == "run_started") ++started;
        if (ev == "run_finished") ++finished;
    }
    if (!batch) return {"ledger has no batch_created event"};
    if (!filter) return {"ledger has no filter_report event"};
    const std::size_t n_cands = batch->at("candidates");
    const std::size_t failures = batch->at("failures");
    const std::size_t total = filter->at("total");
    if (total != n_cands + failures) {
        issues.push_back("filter total " + std::to_string(total) + " != batch candidates + extraction failures " +
                         std::to_string(n_cands + failures));
    }
    std::size_t compiled = 0, normalized = 0, scored = 0, trained = 0;
    const CandidateKind kind = candidate_kind_from_string(batch->at("kind").get<std::string>());
    for (const auto& [id, steps] : history) {
        std::string at = "raw";
        for (const auto& [from, to] : steps) {
            if (from != at) issues.push_back("candidate " + id + " moves from " + from + " while at " + at);
            if (!transition_allowed(kind, candidate_status_from_string(from), candidate_status_from_string(to))) {
                issues.push_back("candidate " + id + " has an illegal transition " + from + " -> " + to);
            }
            at = to;
            compiled += to == "compiled";
            normalized += to == "normalized";
            trained += to == "trained";
            scored += to == "scored";
        }
    }
    if (history.size() > n_cands) issues.push_back("ledger tracks more candidates than the batch holds");
    if (compiled != filter->at("compilable").get<std::size_t>()) {
        issues.push_back("compiled transitions " + std::to_string(compiled) + " != filter compilable " +
                         filter->at("compilable").dump());
    }
    if (!filter->at("well_normalized").is_null() && normalized != filter->at("well_normalized").get<std::size_t>()) {
        issues.push_back("normalized transitions " + std::to_string(normalized) + " != filter well_normalized " +
                         filter->at("well_normalized").dump());
    }
    if (trained != scored || scored != scored_events) {
        issues.push_back("trained/scored transitions and scored events disagree");
    }
    if (started != finished) issues.push_back("runs started " + std::to_string(started) + " != finished " +
                                              std::to_string(finished));
    if (fs::exists(campaign_dir / "leaderboard.json")) {
        const Leaderboard b = Leaderboard::from_json(read_file(campaign_dir / "leaderboard.json"));
        std::size_t non_base = 0;
        for (const auto& r : b.rows) non_base += r.baseline ? 0 : 1;
        if (non_base != scored) {
            issues.push_back("leaderboard rows " + std::to_string(non_base) + " != scored candidates " +
                             std::to_string(scored));
        }
        if (!b.baseline()) issues.push_back("leaderboard lacks the baseline row");
        if (leaderboard && leaderboard->at("sha256") != sha256_hex(read_file(campaign_dir / "leaderboard.json"))) {
            issues.push_back("leaderboard.json does not match its ledger hash");
        }
    } else {
        issues.push_back("no leaderboard.json");
    }
    return issues;
}

}  // namespace abrforge
