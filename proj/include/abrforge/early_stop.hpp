#pragma once

// Curve-prefix early stopping: labeling, predictors, zero-false-negative
// threshold tuning and k-fold comparison of predictor families.

#include "abrforge/nn.hpp"
#include "abrforge/trainer.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace abrforge {

enum class StopMethod { reward_only, text_only, text_reward, heuristic_max, heuristic_last };
enum class StopDecision { stop, proceed };

std::string to_string(StopMethod m);
StopMethod stop_method_from_string(const std::string& s);
std::string to_string(StopDecision d);
bool is_learned(StopMethod m);
bool uses_text(StopMethod m);
bool uses_rewards(StopMethod m);

struct PrefixConfig {
    std::size_t k_epochs = 10000;  // K: epochs observed before deciding
    std::size_t length = 1000;     // L: classifier input length after mean pooling

    void validate() const;
};

// Fixed-length view of the first K rewards of a run. max and last are taken
// from the raw prefix before pooling.
struct PrefixFeatures {
    std::vector<double> pooled;
    double max = 0.0;
    double last = 0.0;
};

// Mean-pools curve[0, K) into L bins; bin i covers [floor(iK/L), floor((i+1)K/L)),
// and when K < L each bin takes the sample at floor(iK/L). Throws Error if the
// curve holds fewer than K values.
PrefixFeatures make_prefix(const std::vector<double>& curve, const PrefixConfig& cfg);

// Input to labeling: a training curve with its final score.
struct ScoredRun {
    std::string run_id;
    std::vector<double> curve;
    std::optional<double> final_score;
    std::optional<std::vector<double>> embedding;
};

struct LabeledRun {
    std::string run_id;
    PrefixFeatures prefix;
    std::optional<std::vector<double>> embedding;
    double final_score = 0.0;
    std::size_t rank = 0;     // 0 = best; ties broken by run_id
    std::size_t n_runs = 0;
    double final_rank_percentile = 0.0;  // rank / n_runs
    bool label = false;                  // under the fraction used for labeling

    // Label under another fraction, from the same ranking.
    bool label_for(double positive_fraction) const;
};

// Number of positives for N runs: ceil(fraction * N), computed exactly for
// fractions given with up to 9 decimals.
std::size_t positive_count(std::size_t n, double positive_fraction);

// Ranks by final score (descending, ties by run_id) and marks the top
// ceil(fraction * N) positive. Throws Error for unscored runs or a fraction
// outside (0, 1).
std::vector<LabeledRun> label_runs(const std::vector<ScoredRun>& runs, double positive_fraction,
                                   const PrefixConfig& cfg);

struct ClassifierConfig {
    std::size_t conv1_filters = 8;
    std::size_t conv1_kernel = 5;
    std::size_t pool1 = 4;
    std::size_t conv2_filters = 8;
    std::size_t conv2_kernel = 5;
    std::size_t pool2 = 4;
    std::size_t dense_units = 16;
    std::size_t train_steps = 300;
    double lr = 3e-3;
    bool class_weighting = true;

    void validate() const;
};

class CurveClassifier;

struct StopPredictor {
    StopMethod method = StopMethod::heuristic_max;
    double decision_threshold = 0.0;
    std::shared_ptr<const CurveClassifier> model;  // null for heuristics

    // Score in the predictor's own units: raw rewards for heuristics, a
    // probability in [0, 1] for learned methods. Throws Error when the
    // embedding is required but absent or the prefix length is wrong.
    double score(const PrefixFeatures& prefix, const std::vector<double>* embedding = nullptr) const;
    double score(const LabeledRun& run) const;
};

// Fits a learned predictor on `label` of each run (the smoothed labels);
// heuristics are returned without fitting. Throws Error for single-class
// training sets of learned methods.
StopPredictor train_predictor(StopMethod method, const std::vector<LabeledRun>& train_set, std::uint64_t seed,
                              const ClassifierConfig& cfg = {});

// Smallest positive score: the largest threshold that keeps every positive.
// Labels under `true_fraction` are used. Throws Error without positives.
double tune_threshold(const StopPredictor& pred, const std::vector<LabeledRun>& tuning_set, double true_fraction);

// Continue iff score >= threshold.
StopDecision predict_stop(const StopPredictor& pred, const PrefixFeatures& prefix,
                          const std::vector<double>* embedding = nullptr);

struct StopRates {
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::size_t false_negatives = 0;  // positives stopped
    std::size_t true_negatives = 0;   // negatives stopped
    // Undefined (NaN) when the corresponding class is empty.
    double fnr() const;
    double tnr() const;
};

StopRates evaluate_predictor(const StopPredictor& pred, const std::vector<LabeledRun>& runs, double true_fraction);

struct CvConfig {
    std::size_t k_folds = 5;
    double smoothed_fraction = 0.20;
    double true_fraction = 0.01;
    std::uint64_t seed = 0;
    ClassifierConfig classifier;

    void validate() const;
};

struct FoldResult {
    std::size_t fold = 0;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    bool skipped = false;
    std::string warning;
    double threshold = 0.0;
    StopRates test;
};

struct CVReport {
    StopMethod method = StopMethod::reward_only;
    std::vector<std::size_t> fold_of;  // fold index per input run
    std::vector<FoldResult> folds;
    double mean_fnr = 0.0;    // equal weight per evaluated fold
    double mean_tnr = 0.0;
    double pooled_fnr = 0.0;  // counts summed over evaluated folds
    double pooled_tnr = 0.0;
};

// Each fold trains on its own 1/k share and is evaluated on the rest.
CVReport cross_validate(const std::vector<LabeledRun>& runs, StopMethod method, const CvConfig& cfg);

// Early-stop hook for the trainer. The embedding, when given, must outlive
// the hook's use only by value (it is copied).
EarlyStopHook make_early_stop_hook(const StopPredictor& pred, const PrefixConfig& cfg,
                                   std::optional<std::vector<double>> embedding = std::nullopt);

// JSON round trip, including learned parameters.
std::string predictor_to_json(const StopPredictor& pred, const PrefixConfig& prefix);
std::pair<StopPredictor, PrefixConfig> predictor_from_json(const std::string& text);

// Labeled-run store: one JSON object per line with run_id, prefix_sha256,
// final_score, rank, percentile and labels under both fractions.
void write_labeled_runs(const std::filesystem::path& path, const std::vector<LabeledRun>& runs,
                        double smoothed_fraction, double true_fraction);

// Two-panel (FNR, TNR) text table, one row per method.
std::string cv_table(const std::vector<CVReport>& reports);
std::string cv_report_json(const CVReport& report);
CVReport cv_report_from_json(const std::string& text);

// Synthetic campaign for exercising the predictors: each run's curve rises
// toward a latent quality, and its final score is a noisy function of the
// prefix. With `separable`, the top 1% share one noiseless curve that sits
// above every other run, and the top 20% sit above the remainder.
std::vector<ScoredRun> synthetic_runs(std::size_t n, std::size_t epochs, std::uint64_t seed, bool separable,
                                      std::size_t embedding_dim = 0);

}  // namespace abrforge
