#pragma once

// Synchronous advantage actor-critic training of (state, network) candidate
// pairs, checkpoint evaluation and the seed-median scoring protocol.

#include "abrforge/candidate_model.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace abrforge {

// Called once, right after `decision_epoch` epochs, with the reward curve so
// far. Returning true halts the run.
struct EarlyStopHook {
    std::size_t decision_epoch = 0;
    std::function<bool(const std::vector<double>& curve)> should_stop;
};

struct TrainConfig {
    std::size_t n_epochs = 40000;
    std::size_t ckpt_interval = 500;
    std::size_t n_seeds = 5;
    double gamma = 0.99;
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    double entropy_start = 1.0;
    double entropy_end = 0.1;
    std::size_t entropy_decay_epochs = 0;  // 0: decay over n_epochs
    SimConfig sim;
    double manifest_jitter = 0.1;
    std::uint64_t manifest_seed = 1;
    std::size_t max_test_traces = 0;  // 0: all test traces
    SandboxPolicy policy;
    std::optional<EarlyStopHook> early_stop;
    std::filesystem::path checkpoint_dir;  // empty: keep checkpoints in memory only

    // Throws Error on inconsistent settings.
    void validate() const;
    double entropy_weight(std::size_t epoch) const;
};

struct CheckpointRef {
    std::size_t epoch = 0;
    std::string sha256;           // digest of the serialized parameters
    std::filesystem::path path;   // empty when not written to disk
};

struct TrainingRun {
    std::string run_id;
    std::string state_id;
    std::string network_id;
    std::uint64_t seed = 0;
    std::vector<double> reward_curve;                        // mean per-chunk training reward per epoch
    std::vector<CheckpointRef> checkpoints;
    std::vector<std::pair<std::size_t, double>> test_evals;  // (epoch, mean per-chunk test reward)
    bool stopped_early = false;
    std::size_t stop_epoch = 0;
    std::optional<std::string> failure;  // candidate fault or divergence, with epoch

    bool completed() const { return !stopped_early && !failure; }
};

std::string make_run_id(const std::string& state_id, const std::string& network_id, std::uint64_t seed);

// Portable checkpoint layout: "ABRCKPT\0", u32 version, u64 epoch, u64 count,
// then count little-endian IEEE doubles.
std::string serialize_checkpoint(std::size_t epoch, const std::vector<double>& params);
std::pair<std::size_t, std::vector<double>> deserialize_checkpoint(const std::string& bytes);

// Video manifest used for every session of a run.
VideoManifest training_manifest(const BitrateLadder& ladder, const TrainConfig& cfg);

// Streams every trace once from its start with greedy (argmax) actions and
// returns the mean per-chunk reward. Throws Error naming the trace when the
// state function fails.
double evaluate_checkpoint(const PolicyNetwork& policy, const CandidateDesign& state_c, const std::vector<Trace>& traces,
                           const VideoManifest& manifest, const BitrateLadder& ladder, const SimConfig& sim,
                           const SandboxPolicy& sandbox = {});

// Mean per-chunk reward of a fixed decision rule on the same protocol.
double evaluate_fixed_policy(const DecisionFn& decide, const std::vector<Trace>& traces, const VideoManifest& manifest,
                             const BitrateLadder& ladder, const SimConfig& sim);

// Trains one seed. Candidate failures and divergence are reported in
// TrainingRun::failure rather than thrown.
TrainingRun train(const CandidateDesign& state_c, const CandidateDesign& net_c, const TraceDataset& ds,
                  const TrainConfig& cfg, std::uint64_t seed);

struct ScoreReport {
    std::string dataset;
    std::vector<std::pair<std::uint64_t, double>> per_seed;  // (seed, mean of the last 10 test evals)
    double final_score = 0.0;                                // lower median of per_seed
    double best_seed = 0.0;                                  // max of per_seed
};

inline constexpr std::size_t kScoreWindow = 10;

// Throws Error("score requires full runs") if any run stopped early or failed.
ScoreReport final_score(const std::vector<TrainingRun>& runs, const std::string& dataset = {});

// Lower median: element (n - 1) / 2 of the sorted values.
double lower_median(std::vector<double> values);

// run.json, curve.jsonl (epoch, train_reward) and test_evals.jsonl (epoch, test_eval).
void write_run_artifacts(const std::filesystem::path& dir, const TrainingRun& run);
// Inverse of write_run_artifacts. Throws Error for missing or malformed files.
TrainingRun read_run_artifacts(const std::filesystem::path& dir);
std::string score_report_json(const ScoreReport& report);

}  // namespace abrforge
