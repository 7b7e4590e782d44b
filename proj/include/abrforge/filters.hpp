#pragma once

// Pre-training checks: a trial run (compile check) for every candidate and a
// fuzzing normalization check for state candidates.

#include "abrforge/candidate_model.hpp"
#include "abrforge/generator.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace abrforge {

struct SamplerRanges {
    double throughput_min_mbps = 0.1;
    double throughput_max_mbps = 100.0;
    double download_min_s = 0.05;
    double download_max_s = 60.0;
    double buffer_min_s = 0.0;
    double buffer_max_s = 60.0;
    double remaining_min = 0.0;
    double remaining_max = 48.0;
    double size_jitter = 0.1;              // relative noise on nominal chunk sizes
    double early_session_probability = 0.2;  // chance of zero-padded histories
};

struct FuzzConfig {
    std::size_t n_samples = 100;
    double threshold = 100.0;
    std::uint64_t seed = 0;
    SamplerRanges ranges;

    void validate() const;
};

// Draws one observation. Chunk sizes follow `ladder` with the nominal
// kbps * duration / 8 sizes perturbed by the configured jitter.
StreamObservation sample_observation(Rng& rng, const BitrateLadder& ladder, const SamplerRanges& ranges,
                                     std::size_t history_len, double chunk_duration_s);

struct CheckContext {
    SandboxPolicy policy;
    SimConfig sim;
    BitrateLadder ladder = BitrateLadder::low();
    // Ladders exercised by the fuzzer; chunk sizes from both reference ladders by default.
    std::vector<BitrateLadder> fuzz_ladders = {BitrateLadder::low(), BitrateLadder::high()};
    std::pair<std::size_t, std::size_t> network_state_shape = {6, 8};
    std::uint64_t network_seed = 0;
    // Test hook invoked before every attempt; may throw InfrastructureError.
    std::function<void(const CandidateDesign&)> before_attempt;
};

struct CheckOutcome {
    bool passed = false;
    bool infrastructure_error = false;
    std::optional<script::FailureKind> failure;
    std::string reason;
    std::optional<double> offending_value;
    std::optional<std::pair<std::size_t, std::size_t>> shape;
};

// Trial run: states on probe observations, networks instantiated and probed.
// Infrastructure failures are retried once.
CheckOutcome compile_check(const CandidateDesign& candidate, const CheckContext& ctx);

// Fails if any of n_samples random observations yields |value| > threshold or
// a non-finite value. Deterministic per seed.
CheckOutcome normalization_check(const CandidateDesign& candidate, const FuzzConfig& cfg, const CheckContext& ctx);

struct CandidateOutcome {
    std::string id;
    CandidateKind kind = CandidateKind::state;
    bool compiled = false;
    std::optional<bool> normalized;  // states that compiled only
    bool infrastructure_error = false;
    std::string reason;
    std::optional<double> offending_value;
};

struct FilterReport {
    std::size_t total = 0;
    std::size_t compilable = 0;
    std::optional<std::size_t> well_normalized;  // absent when no state candidates
    std::size_t infrastructure_errors = 0;
    std::vector<CandidateOutcome> outcomes;

    std::string to_json() const;
    // Table layout: Total | Compilable | Well Normalized, counts with percentages.
    std::string to_table(const std::string& label) const;
};

struct PrefilterOptions {
    std::size_t workers = 1;
    // Drop infrastructure errors from the denominators.
    bool exclude_infrastructure_errors = false;
};

// Runs compile_check on every candidate and normalization_check on states
// that compiled. Candidate statuses are advanced or rejected in place.
// Extraction failures recorded in the batch count toward the total as
// candidates that did not compile.
FilterReport run_prefilter(GenerationBatch& batch, const FuzzConfig& cfg, const CheckContext& ctx,
                           const PrefilterOptions& options = {});
FilterReport run_prefilter(std::vector<CandidateDesign>& candidates, const FuzzConfig& cfg, const CheckContext& ctx,
                           const PrefilterOptions& options = {});

}  // namespace abrforge
