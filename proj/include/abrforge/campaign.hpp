#pragma once

// Campaign orchestration: generate -> prefilter -> train (with early stop)
// -> score -> report, plus the top-k x top-k combination study. All state
// lives in an output directory whose append-only ledger makes reruns resume.

#include "abrforge/early_stop.hpp"
#include "abrforge/filters.hpp"
#include "abrforge/generator.hpp"
#include "abrforge/trainer.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace abrforge {

struct GenerationSettings {
    CandidateKind kind = CandidateKind::state;
    std::string model = "recorded";
    std::size_t n = 50;
    ClientMode mode = ClientMode::replay;
    std::filesystem::path store;       // record/replay JSONL
    std::filesystem::path prompt_dir;  // <dir>/<kind>/*.txt
    double temperature = 1.0;
    std::uint64_t seed = 0;
    std::string batch_id;
};

struct EarlyStopSettings {
    bool enabled = false;
    StopMethod method = StopMethod::heuristic_max;
    PrefixConfig prefix{10000, 1000};
    std::optional<double> threshold;   // heuristics without a predictor file
    std::filesystem::path predictor;   // file written by `abrforge cv --fit-output`
    std::filesystem::path embedding_store;  // text methods; hashed embeddings when empty
    bool apply_to_combinations = true;
};

struct CampaignConfig {
    std::string name = "campaign";
    std::filesystem::path dataset;  // dataset manifest
    std::string ladder;             // overrides the dataset's ladder when set
    GenerationSettings generation;
    FuzzConfig filter;
    std::size_t workers = 1;
    TrainConfig training;
    EarlyStopSettings early_stop;
    std::size_t top_k_states = 30;
    std::size_t top_k_nets = 30;
    std::filesystem::path output_dir;

    // Relative paths are resolved against the config file's directory.
    static CampaignConfig from_json_file(const std::filesystem::path& path);
    static CampaignConfig from_json_text(const std::string& text, const std::filesystem::path& base_dir);
    // Checks values and that referenced files exist. Throws Error.
    void validate() const;
};

// Append-only JSONL event log. Every line is a JSON object with an "event"
// field; no timestamps, so identical work yields identical ledgers.
class CampaignLedger {
public:
    explicit CampaignLedger(std::filesystem::path path);

    const std::filesystem::path& path() const { return path_; }
    const std::vector<std::string>& lines() const { return lines_; }
    bool contains(const std::string& line) const;
    // Appends unless an identical line is already present.
    void record(const std::string& line);
    // Appends several lines in one write.
    void record_all(const std::vector<std::string>& lines);

private:
    std::filesystem::path path_;
    std::vector<std::string> lines_;
};

struct LeaderboardRow {
    std::string candidate_id;
    std::string state_id;
    std::string network_id;
    bool baseline = false;
    double final_score = 0.0;  // median over seeds
    double best_seed = 0.0;
    std::vector<std::pair<std::uint64_t, double>> per_seed;
};

struct Leaderboard {
    CandidateKind kind = CandidateKind::state;  // design space; "combined" boards use state
    bool combined = false;
    std::string dataset;
    std::vector<LeaderboardRow> rows;  // by score descending, ties by candidate id
    std::vector<std::pair<std::string, std::string>> stopped;  // (candidate id, reason)
    std::vector<std::pair<std::string, std::string>> failed;

    const LeaderboardRow* baseline() const;
    std::string to_json() const;
    static Leaderboard from_json(const std::string& text);
};

struct CampaignResult {
    GenerationBatch batch;
    FilterReport filter;
    Leaderboard leaderboard;
    std::vector<TrainingRun> runs;
};

// Runs (or resumes) a campaign. Candidate failures are isolated; an
// InfrastructureError aborts with the ledger left resumable.
CampaignResult run_campaign(const CampaignConfig& cfg);

struct ScoreEntry {
    std::string id;
    double final_score = 0.0;
};

// k * k (state, network) pairs, state rank major, network rank minor. Throws
// Error naming the list that has fewer than k entries.
std::vector<std::pair<std::string, std::string>> combine_top(const std::vector<ScoreEntry>& states,
                                                             const std::vector<ScoreEntry>& nets, std::size_t k);
std::vector<ScoreEntry> score_entries(const Leaderboard& board, bool include_baseline = false);

// Trains and scores combination jobs. Candidates are looked up in the given
// directories first, then among the builtins.
Leaderboard run_combinations(const CampaignConfig& cfg, const std::vector<std::pair<std::string, std::string>>& jobs,
                             const std::vector<std::filesystem::path>& candidate_dirs);

enum class ReportStyle { filter_table, score_table, improvement_table, curve_data, cv_table };
std::string to_string(ReportStyle s);
ReportStyle report_style_from_string(const std::string& s);

// "(new - base) / |base|" as a percentage with one decimal, e.g. "27.9%".
// Throws Error for a zero baseline.
std::string format_improvement(double candidate, double baseline);

// Writes <campaign_dir>/reports/<style>.{json,txt|csv} and records the
// emission in the ledger. Returns the written paths.
std::vector<std::filesystem::path> emit_report(const std::filesystem::path& campaign_dir, ReportStyle style);

// Cross-checks ledger events against the filter report and leaderboard.
// Returns human-readable discrepancies; empty when everything reconciles.
std::vector<std::string> reconcile(const std::filesystem::path& campaign_dir);

// "builtin:<id>", a .code file with its .json sidecar, or a bare builtin id.
CandidateDesign resolve_candidate(const std::string& ref, const std::vector<std::filesystem::path>& dirs = {});

}  // namespace abrforge
