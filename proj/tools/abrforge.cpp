// abrforge command-line entry point.
//
// Exit codes: 0 on success (candidate-level failures are reported as
// warnings), 1 for usage or configuration errors, 2 for infrastructure
// failures (I/O, missing replay records, unreachable endpoints).

#include "abrforge/campaign.hpp"
#include "abrforge/early_stop.hpp"
#include "abrforge/filters.hpp"
#include "abrforge/generator.hpp"
#include "abrforge/trace_store.hpp"
#include "abrforge/trainer.hpp"
#include "abrforge/util/error.hpp"
#include "abrforge/util/files.hpp"
#include "abrforge/util/format.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

using namespace abrforge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

int cmd_ingest(const fs::path& input, const std::string& format, const std::string& tag, double scale,
               const std::string& ladder, const std::string& name, double test_fraction, std::uint64_t seed,
               const fs::path& out) {
    const IngestResult r = ingest_directory(input, trace_format_from_string(format), scale, source_tag_from_string(tag));
    for (const auto& d : r.rejected) warn("skipped " + d.file.string() + ": " + d.reason);
    auto [train, test] = split_dataset(r.traces, test_fraction, seed);
    DatasetManifest m;
    m.name = name;
    const fs::path base = out.has_parent_path() ? out.parent_path() : fs::path(".");
    m.trace_dir = fs::relative(fs::absolute(input), fs::absolute(base));
    m.format = trace_format_from_string(format);
    m.source_tag = source_tag_from_string(tag);
    m.scale_factor = scale;
    m.ladder = ladder;
    for (const auto& t : train) m.train.push_back(t.id());
    for (const auto& t : test) m.test.push_back(t.id());
    write_dataset_manifest(out, m);
    const TraceDataset ds = load_dataset(out);
    const auto tr = dataset_stats(ds, Split::train);
    const auto te = dataset_stats(ds, Split::test);
    std::cout << text_table({{"split", "traces", "hours", "mean Mbps"},
                             {"train", std::to_string(tr.n_traces), fixed(tr.total_hours, 2),
                              fixed(tr.mean_throughput_mbps, 2)},
                             {"test", std::to_string(te.n_traces), fixed(te.total_hours, 2),
                              fixed(te.mean_throughput_mbps, 2)}},
                            {false, true, true, true});
    return 0;
}

std::shared_ptr<LLMClient> make_client(ClientMode mode, const fs::path& store, const fs::path& responses_dir) {
    std::shared_ptr<LLMClient> inner;
    if (!responses_dir.empty()) {
        inner = std::make_shared<DirectoryClient>(responses_dir);
    } else if (mode != ClientMode::replay) {
        inner = std::make_shared<LiveClient>(LiveClientConfig::from_env());
    }
    switch (mode) {
        case ClientMode::replay: return std::make_shared<ReplayClient>(store);
        case ClientMode::record: return std::make_shared<RecordingClient>(inner, store);
        case ClientMode::live: return inner;
    }
    return inner;
}

int cmd_generate(const std::string& kind, std::size_t n, const std::string& mode, const fs::path& store,
                 const fs::path& responses_dir, const std::string& model, std::uint64_t seed, double temperature,
                 const fs::path& prompts, const fs::path& out) {
    const CandidateKind k = candidate_kind_from_string(kind);
    auto client = make_client(client_mode_from_string(mode), store, responses_dir);
    GenerationOptions opts;
    opts.model = model;
    opts.seed = seed;
    opts.temperature = temperature;
    const GenerationBatch batch = generate_batch(*client, k, n, load_prompt_template(prompts, k), opts);
    if (!out.empty()) {
        for (const auto& c : batch.candidates) save_candidate(out / "candidates", c);
        write_file_atomic(out / "batch.json", batch_to_json(batch) + "\n");
    }
    for (const auto& [i, why] : batch.failure_reasons) warn("request " + std::to_string(i) + ": " + why);
    std::cout << "batch " << batch.batch_id << ": " << batch.candidates.size() << " candidates, " << batch.failures
              << " extraction failures\n";
    return 0;
}

int cmd_filter(const fs::path& dir, std::size_t samples, double threshold, std::uint64_t seed, std::size_t workers,
               const std::string& ladder, const fs::path& report) {
    FuzzConfig cfg;
    cfg.n_samples = samples;
    cfg.threshold = threshold;
    cfg.seed = seed;
    CheckContext ctx;
    ctx.ladder = BitrateLadder::from_id(ladder);
    PrefilterOptions opts;
    opts.workers = workers;
    FilterReport r;
    std::string label = dir.filename().string();
    if (fs::exists(dir / "batch.json")) {
        const json j = json::parse(read_file(dir / "batch.json"));
        GenerationBatch b;
        b.batch_id = j.at("batch_id");
        b.kind = candidate_kind_from_string(j.at("kind"));
        b.failures = j.at("failures");
        for (const auto& f : j.at("failure_reasons")) b.failure_reasons.emplace_back(f.at("index"), f.at("reason"));
        b.candidates = load_corpus_dir(dir / "candidates");
        std::sort(b.candidates.begin(), b.candidates.end(),
                  [](const CandidateDesign& a, const CandidateDesign& c) { return a.id < c.id; });
        for (auto& c : b.candidates) c.status = CandidateStatus::raw;
        label = b.batch_id;
        r = run_prefilter(b, cfg, ctx, opts);
    } else {
        auto cands = load_corpus_dir(dir);
        std::sort(cands.begin(), cands.end(), [](const CandidateDesign& a, const CandidateDesign& c) { return a.id < c.id; });
        for (auto& c : cands) c.status = CandidateStatus::raw;
        r = run_prefilter(cands, cfg, ctx, opts);
    }
    for (const auto& o : r.outcomes) {
        if (!o.compiled || (o.normalized && !*o.normalized)) warn(o.id + ": " + o.reason);
    }
    if (!report.empty()) write_file_atomic(report, r.to_json() + "\n");
    std::cout << r.to_table(label);
    return r.infrastructure_errors ? 2 : 0;
}

std::optional<EarlyStopHook> hook_from_options(const fs::path& predictor, const std::string& method,
                                               std::optional<double> threshold, std::size_t k, std::size_t l) {
    if (!predictor.empty()) {
        auto [pred, prefix] = predictor_from_json(read_file(predictor));
        if (threshold) pred.decision_threshold = *threshold;
        return make_early_stop_hook(pred, prefix);
    }
    if (!threshold) return std::nullopt;
    StopPredictor pred;
    pred.method = stop_method_from_string(method);
    if (is_learned(pred.method)) throw Error("learned methods need --predictor");
    pred.decision_threshold = *threshold;
    return make_early_stop_hook(pred, PrefixConfig{k, l});
}

int cmd_train(const std::string& state_ref, const std::string& net_ref, const fs::path& dataset, TrainConfig cfg,
              const std::vector<fs::path>& dirs, const fs::path& out, std::optional<EarlyStopHook> hook) {
    const CandidateDesign s = resolve_candidate(state_ref, dirs);
    const CandidateDesign n = resolve_candidate(net_ref, dirs);
    const TraceDataset ds = load_dataset(dataset);
    std::vector<TrainingRun> runs;
    bool complete = true;
    for (std::uint64_t seed = 0; seed < cfg.n_seeds; ++seed) {
        TrainConfig c = cfg;
        if (seed == 0) c.early_stop = hook;
        TrainingRun run = train(s, n, ds, c, seed);
        if (!out.empty()) write_run_artifacts(out / run.run_id, run);
        if (run.failure) {
            warn(run.run_id + " failed: " + *run.failure);
            complete = false;
            break;
        }
        if (run.stopped_early) {
            std::cout << run.run_id << " early-stopped at epoch " << run.stop_epoch << "\n";
            complete = false;
            break;
        }
        std::cout << run.run_id << ": last test eval " << fixed(run.test_evals.back().second, 4) << "\n";
        runs.push_back(std::move(run));
    }
    if (complete) {
        const ScoreReport r = final_score(runs, ds.name);
        std::cout << score_report_json(r) << "\n";
        if (!out.empty()) write_file_atomic(out / "score.json", score_report_json(r) + "\n");
    }
    return 0;
}

int cmd_score(const std::vector<fs::path>& run_dirs) {
    std::map<std::pair<std::string, std::string>, std::vector<TrainingRun>> groups;
    for (const auto& d : run_dirs) {
        std::vector<fs::path> dirs;
        if (fs::exists(d / "run.json")) {
            dirs.push_back(d);
        } else if (fs::is_directory(d)) {
            for (const auto& e : fs::directory_iterator(d)) {
                if (fs::exists(e.path() / "run.json")) dirs.push_back(e.path());
            }
        } else {
            throw Error("not a run directory: " + d.string());
        }
        std::sort(dirs.begin(), dirs.end());
        for (const auto& rd : dirs) {
            TrainingRun r = read_run_artifacts(rd);
            groups[{r.state_id, r.network_id}].push_back(std::move(r));
        }
    }
    json out = json::array();
    for (const auto& [key, runs] : groups) {
        try {
            json j = json::parse(score_report_json(final_score(runs)));
            j["state_id"] = key.first;
            j["network_id"] = key.second;
            out.push_back(j);
        } catch (const Error& e) {
            warn(key.first + " + " + key.second + ": " + e.what());
        }
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_combine(const fs::path& states, const fs::path& nets, std::size_t k, bool dry_run, const fs::path& config,
                const std::vector<fs::path>& dirs, const fs::path& jobs_out) {
    const auto jobs = combine_top(score_entries(Leaderboard::from_json(read_file(states))),
                                  score_entries(Leaderboard::from_json(read_file(nets))), k);
    json j = json::array();
    for (const auto& [s, n] : jobs) j.push_back({{"state", s}, {"network", n}});
    if (!jobs_out.empty()) write_file_atomic(jobs_out, j.dump(2) + "\n");
    std::cout << jobs.size() << " combination jobs\n";
    if (dry_run) return 0;
    if (config.empty()) throw Error("combine needs --config unless --dry-run");
    const Leaderboard board = run_combinations(CampaignConfig::from_json_file(config), jobs, dirs);
    std::cout << board.to_json() << "\n";
    return 0;
}

std::vector<ScoredRun> runs_from_dir(const fs::path& dir) {
    std::vector<ScoredRun> out;
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (fs::exists(e.path() / "run.json")) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
        const TrainingRun r = read_run_artifacts(d);
        if (!r.completed() || r.test_evals.size() < kScoreWindow) continue;
        ScoredRun s;
        s.run_id = r.run_id;
        s.curve = r.reward_curve;
        s.final_score = final_score({r}).final_score;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<ScoredRun> runs_from_jsonl(const fs::path& file) {
    std::vector<ScoredRun> out;
    std::istringstream in(read_file(file));
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        ScoredRun r;
        r.run_id = j.at("run_id");
        r.curve = j.at("curve").get<std::vector<double>>();
        if (!j.at("final_score").is_null()) r.final_score = j.at("final_score").get<double>();
        if (j.contains("embedding") && !j["embedding"].is_null()) {
            r.embedding = j["embedding"].get<std::vector<double>>();
        }
        out.push_back(std::move(r));
    }
    return out;
}

struct CvOptions {
    fs::path scored_runs;
    fs::path from_runs;
    std::size_t synthetic = 0;
    std::size_t synthetic_epochs = 200;
    bool separable = false;
    std::size_t embedding_dim = 0;
    std::vector<std::string> methods = {"reward_only", "heuristic_max", "heuristic_last"};
    std::size_t k_folds = 5;
    std::uint64_t seed = 0;
    std::size_t prefix_k = 100;
    std::size_t prefix_l = 50;
    std::size_t train_steps = 300;
    fs::path out;
    fs::path fit_output;
    std::string fit_method = "reward_only";
};

int cmd_cv(const CvOptions& o) {
    std::vector<ScoredRun> runs;
    if (!o.scored_runs.empty()) {
        runs = runs_from_jsonl(o.scored_runs);
    } else if (!o.from_runs.empty()) {
        runs = runs_from_dir(o.from_runs);
    } else if (o.synthetic) {
        runs = synthetic_runs(o.synthetic, o.synthetic_epochs, o.seed, o.separable, o.embedding_dim);
    } else {
        throw Error("cv needs --scored-runs, --from-runs or --synthetic");
    }
    CvConfig cfg;
    cfg.k_folds = o.k_folds;
    cfg.seed = o.seed;
    cfg.classifier.train_steps = o.train_steps;
    const PrefixConfig prefix{o.prefix_k, o.prefix_l};
    const auto labeled = label_runs(runs, cfg.smoothed_fraction, prefix);
    std::vector<CVReport> reports;
    for (const auto& m : o.methods) {
        reports.push_back(cross_validate(labeled, stop_method_from_string(m), cfg));
        for (const auto& f : reports.back().folds) {
            if (f.skipped) warn(m + ": " + f.warning);
        }
        if (!o.out.empty()) write_file_atomic(o.out / "cv" / (m + ".json"), cv_report_json(reports.back()) + "\n");
    }
    if (!o.out.empty()) {
        write_labeled_runs(o.out / "labeled_runs.jsonl", labeled, cfg.smoothed_fraction, cfg.true_fraction);
        write_file_atomic(o.out / "cv_table.txt", cv_table(reports));
    }
    std::cout << cv_table(reports);
    if (!o.fit_output.empty()) {
        const StopMethod m = stop_method_from_string(o.fit_method);
        StopPredictor pred = train_predictor(m, labeled, o.seed, cfg.classifier);
        pred.decision_threshold = tune_threshold(pred, labeled, cfg.true_fraction);
        write_file_atomic(o.fit_output, predictor_to_json(pred, prefix) + "\n");
        std::cout << "predictor " << to_string(m) << " threshold " << pred.decision_threshold << " written to "
                  << o.fit_output.string() << "\n";
    }
    return 0;
}

int cmd_report(const fs::path& dir, const std::vector<std::string>& styles, bool check) {
    for (const auto& s : styles) {
        for (const auto& p : emit_report(dir, report_style_from_string(s))) {
            if (p.extension() == ".txt") std::cout << read_file(p) << "\n";
            else std::cout << "wrote " << p.string() << "\n";
        }
    }
    if (check) {
        const auto issues = reconcile(dir);
        for (const auto& i : issues) std::cerr << "reconcile: " << i << "\n";
        if (!issues.empty()) return 1;
        std::cout << "ledger reconciles\n";
    }
    return 0;
}

int cmd_campaign(const fs::path& config, std::optional<std::size_t> workers) {
    CampaignConfig cfg = CampaignConfig::from_json_file(config);
    if (workers) cfg.workers = *workers;
    const CampaignResult r = run_campaign(cfg);
    std::cout << r.filter.to_table(cfg.name) << "\n";
    std::cout << read_file(cfg.output_dir / "reports" / "score_table.txt") << "\n";
    for (const auto& [id, why] : r.leaderboard.stopped) std::cout << id << ": " << why << "\n";
    for (const auto& [id, why] : r.leaderboard.failed) warn(id + ": " + why);
    const auto issues = reconcile(cfg.output_dir);
    for (const auto& i : issues) std::cerr << "reconcile: " << i << "\n";
    return issues.empty() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"abrforge: generate, filter, train and score adaptive-bitrate designs"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Parse a trace directory and write a dataset manifest");
    fs::path in_dir, in_out;
    std::string in_format = "two_column", in_tag = "custom", in_ladder = "low", in_name = "dataset";
    double in_scale = 1.0, in_test = 0.5;
    std::uint64_t in_seed = 0;
    ingest->add_option("--input", in_dir, "Trace directory")->required();
    ingest->add_option("--format", in_format, "two_column | mahimahi");
    ingest->add_option("--tag", in_tag, "Source tag");
    ingest->add_option("--scale", in_scale, "Throughput scale factor");
    ingest->add_option("--ladder", in_ladder, "Bitrate ladder id");
    ingest->add_option("--name", in_name, "Dataset name");
    ingest->add_option("--test-fraction", in_test, "Share of traces held out for testing");
    ingest->add_option("--seed", in_seed, "Split seed");
    ingest->add_option("--out", in_out, "Manifest path")->required();

    // generate
    auto* gen = app.add_subcommand("generate", "Request a batch of candidate designs");
    std::string g_kind = "state", g_mode = "replay", g_model = "recorded";
    std::size_t g_n = 50;
    fs::path g_store, g_responses, g_prompts = "prompts", g_out;
    std::uint64_t g_seed = 0;
    double g_temp = 1.0;
    gen->add_option("--kind", g_kind, "state | network");
    gen->add_option("--n", g_n, "Number of requests");
    gen->add_option("--mode", g_mode, "live | record | replay");
    gen->add_option("--store", g_store, "Record/replay JSONL store");
    gen->add_option("--responses-dir", g_responses, "Serve responses from files instead of a live endpoint");
    gen->add_option("--model", g_model, "Model name");
    gen->add_option("--seed", g_seed, "Batch seed");
    gen->add_option("--temperature", g_temp, "Sampling temperature");
    gen->add_option("--prompts", g_prompts, "Prompt template directory");
    gen->add_option("--out", g_out, "Output directory for batch.json and candidates/");

    // filter
    auto* filt = app.add_subcommand("filter", "Run compile and normalization checks");
    fs::path f_dir, f_report;
    std::size_t f_samples = 100, f_workers = 1;
    double f_threshold = 100.0;
    std::uint64_t f_seed = 0;
    std::string f_ladder = "low";
    filt->add_option("--candidates", f_dir, "Candidate directory or generate output")->required();
    filt->add_option("--fuzz-samples,--samples", f_samples, "Fuzz samples per state");
    filt->add_option("--threshold", f_threshold, "Normalization threshold T");
    filt->add_option("--seed", f_seed, "Fuzz seed");
    filt->add_option("--workers", f_workers, "Worker threads");
    filt->add_option("--ladder", f_ladder, "Ladder used for compile probes");
    filt->add_option("--report", f_report, "Write the JSON report here");

    // train
    auto* tr = app.add_subcommand("train", "Train a (state, network) pair for every seed");
    std::string t_state = "builtin:pensieve_original", t_net = "builtin:original_a2c", t_method = "heuristic_max";
    fs::path t_dataset, t_out, t_predictor;
    std::vector<fs::path> t_dirs;
    TrainConfig t_cfg;
    t_cfg.n_epochs = 2000;
    t_cfg.ckpt_interval = 100;
    std::optional<double> t_threshold;
    std::size_t t_k = 100, t_l = 50;
    tr->add_option("--state", t_state, "State candidate reference");
    tr->add_option("--network", t_net, "Network candidate reference");
    tr->add_option("--candidates", t_dirs, "Directories searched for candidate ids");
    tr->add_option("--dataset", t_dataset, "Dataset manifest")->required();
    tr->add_option("--epochs", t_cfg.n_epochs, "Training epochs");
    tr->add_option("--interval", t_cfg.ckpt_interval, "Epochs between checkpoints");
    tr->add_option("--seeds", t_cfg.n_seeds, "Number of seeds");
    tr->add_option("--n-chunks", t_cfg.sim.n_chunks, "Chunks per video");
    tr->add_option("--max-test-traces", t_cfg.max_test_traces, "Cap on test traces per evaluation");
    tr->add_option("--actor-lr", t_cfg.actor_lr, "Actor learning rate");
    tr->add_option("--critic-lr", t_cfg.critic_lr, "Critic learning rate");
    tr->add_option("--predictor", t_predictor, "Early-stop predictor file");
    tr->add_option("--stop-method", t_method, "Heuristic early-stop method");
    tr->add_option("--stop-threshold", t_threshold, "Early-stop threshold");
    tr->add_option("--stop-k", t_k, "Early-stop decision epoch");
    tr->add_option("--stop-l", t_l, "Early-stop prefix length");
    tr->add_option("--out", t_out, "Run artifact directory");

    // score
    auto* sc = app.add_subcommand("score", "Score run directories (median over seeds)");
    std::vector<fs::path> s_dirs;
    sc->add_option("runs", s_dirs, "Run directories or a parent of run directories")->required();

    // combine
    auto* comb = app.add_subcommand("combine", "Pair the top-k states with the top-k networks");
    fs::path c_states, c_nets, c_config, c_jobs;
    std::size_t c_k = 30;
    bool c_dry = false;
    std::vector<fs::path> c_dirs;
    comb->add_option("--states", c_states, "State leaderboard.json")->required();
    comb->add_option("--nets", c_nets, "Network leaderboard.json")->required();
    comb->add_option("--k", c_k, "Entries taken from each list");
    comb->add_flag("--dry-run", c_dry, "Only list the jobs");
    comb->add_option("--config", c_config, "Campaign config for training the jobs");
    comb->add_option("--candidates", c_dirs, "Directories holding the candidates");
    comb->add_option("--jobs-out", c_jobs, "Write the job list here");

    // cv
    auto* cv = app.add_subcommand("cv", "Cross-validate early-stop predictors");
    CvOptions cvo;
    cv->add_option("--scored-runs", cvo.scored_runs, "JSONL of {run_id, curve, final_score[, embedding]}");
    cv->add_option("--from-runs", cvo.from_runs, "Directory of run artifacts");
    cv->add_option("--synthetic", cvo.synthetic, "Generate this many synthetic runs");
    cv->add_option("--synthetic-epochs", cvo.synthetic_epochs, "Epochs per synthetic run");
    cv->add_flag("--separable", cvo.separable, "Separable synthetic family");
    cv->add_option("--embedding-dim", cvo.embedding_dim, "Synthetic embedding dimension");
    cv->add_option("--methods", cvo.methods, "Methods to compare");
    cv->add_option("--k", cvo.k_folds, "Folds");
    cv->add_option("--seed", cvo.seed, "Seed");
    cv->add_option("--prefix-k", cvo.prefix_k, "K: epochs observed");
    cv->add_option("--prefix-l", cvo.prefix_l, "L: pooled length");
    cv->add_option("--train-steps", cvo.train_steps, "Classifier optimization steps");
    cv->add_option("--out", cvo.out, "Output directory (cv/<method>.json, labeled_runs.jsonl)");
    cv->add_option("--fit-output", cvo.fit_output, "Fit one predictor on all runs and write it here");
    cv->add_option("--fit-method", cvo.fit_method, "Method for --fit-output");

    // report
    auto* rep = app.add_subcommand("report", "Emit campaign reports");
    fs::path r_dir;
    std::vector<std::string> r_styles;
    bool r_check = false;
    rep->add_option("--campaign", r_dir, "Campaign output directory")->required();
    rep->add_option("--style", r_styles,
                    "filter_table | score_table | improvement_table | curve_data | cv_table");
    rep->add_flag("--reconcile", r_check, "Check ledger accounting");

    // campaign
    auto* camp = app.add_subcommand("campaign", "Run or resume a full campaign from a config file");
    fs::path cp_config;
    std::optional<std::size_t> cp_workers;
    camp->add_option("--config", cp_config, "Campaign config (JSON)")->required();
    camp->add_option("--workers", cp_workers, "Override the worker count");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) return cmd_ingest(in_dir, in_format, in_tag, in_scale, in_ladder, in_name, in_test, in_seed, in_out);
        if (*gen) return cmd_generate(g_kind, g_n, g_mode, g_store, g_responses, g_model, g_seed, g_temp, g_prompts, g_out);
        if (*filt) return cmd_filter(f_dir, f_samples, f_threshold, f_seed, f_workers, f_ladder, f_report);
        if (*tr) {
            return cmd_train(t_state, t_net, t_dataset, t_cfg, t_dirs, t_out,
                             hook_from_options(t_predictor, t_method, t_threshold, t_k, t_l));
        }
        if (*sc) return cmd_score(s_dirs);
        if (*comb) return cmd_combine(c_states, c_nets, c_k, c_dry, c_config, c_dirs, c_jobs);
        if (*cv) return cmd_cv(cvo);
        if (*rep) return cmd_report(r_dir, r_styles, r_check);
        if (*camp) return cmd_campaign(cp_config, cp_workers);
    } catch (const InfrastructureError& e) {
        std::cerr << "infrastructure error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
