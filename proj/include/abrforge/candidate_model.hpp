#pragma once

// Candidate designs: state functions and network factories written in the
// embedded script language, the sandbox policy they run under, and the
// built-in corpus of reference designs.
//
// A state candidate defines
//   fn state(throughput_mbps, download_time_s, next_chunk_sizes_bytes,
//            buffer_s, chunks_remaining, last_level, buffer_history_s)
// (the last parameter may be omitted) and returns a number, a vector or a
// list of rows. Rows are left-padded with zeros to the widest row.
//
// A network candidate defines
//   fn network(state_channels, state_width, n_actions)
// and returns nn.actor_critic(...).

#include "abrforge/abr_sim.hpp"
#include "abrforge/policy.hpp"
#include "abrforge/script.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace abrforge {

enum class CandidateKind { state, network };
enum class Provenance { llm, builtin, manual };
enum class CandidateStatus { raw, compiled, normalized, rejected, trained, scored };

std::string to_string(CandidateKind k);
std::string to_string(Provenance p);
std::string to_string(CandidateStatus s);
CandidateKind candidate_kind_from_string(const std::string& s);
Provenance provenance_from_string(const std::string& s);
CandidateStatus candidate_status_from_string(const std::string& s);

struct ProvenanceInfo {
    Provenance source = Provenance::manual;
    std::string model;
    std::string prompt_id;
    std::string batch_id;
    std::size_t index = 0;
};

// True if `from -> to` is a legal status transition for the given kind.
bool transition_allowed(CandidateKind kind, CandidateStatus from, CandidateStatus to);

struct CandidateDesign {
    std::string id;
    CandidateKind kind = CandidateKind::state;
    std::string source_text;
    ProvenanceInfo provenance;
    CandidateStatus status = CandidateStatus::raw;
    std::optional<std::string> rejection_reason;

    // Throws Error on an illegal transition.
    void advance(CandidateStatus next);
    void reject(std::string reason);
};

struct SandboxPolicy {
    double time_limit_s = 5.0;
    std::size_t memory_limit_bytes = 256u << 20;
    std::size_t max_steps = 50'000'000;
    std::vector<std::string> import_allowlist = {"numeric", "stats", "signal"};
    bool network_access = false;

    // Throws Error unless limits are positive and network access is denied.
    void validate() const;
    script::Limits limits(bool allow_nn) const;
};

struct StateTensor {
    std::size_t channels = 0;
    std::size_t width = 0;
    std::vector<double> values;  // row-major, channels x width

    double at(std::size_t c, std::size_t w) const { return values[c * width + w]; }
    std::pair<std::size_t, std::size_t> shape() const { return {channels, width}; }
    bool all_finite() const;
};

// Converts a script return value into a tensor. Throws ScriptError with
// non_numeric_output or invalid_output.
StateTensor tensor_from_value(const script::Value& value);

// Globals visible to state code, derived from the ladder and simulator settings.
std::map<std::string, script::Value, std::less<>> state_globals(const BitrateLadder& ladder, const SimConfig& sim);

// A compiled state candidate bound to a ladder. The first successful call
// fixes the tensor shape; later calls with a different shape fail with
// shape_drift. Failures are thrown as script::ScriptError.
class StateFunction {
public:
    StateFunction(const CandidateDesign& candidate, const SandboxPolicy& policy, const BitrateLadder& ladder,
                  const SimConfig& sim);

    StateTensor operator()(const StreamObservation& obs);
    std::optional<std::pair<std::size_t, std::size_t>> shape() const { return shape_; }

private:
    std::shared_ptr<script::Interpreter> interp_;
    std::size_t n_params_ = 7;
    std::optional<std::pair<std::size_t, std::size_t>> shape_;
};

// One-shot evaluation (compile + run) of a state candidate.
StateTensor execute_state(const CandidateDesign& candidate, const StreamObservation& obs, const SandboxPolicy& policy,
                          const BitrateLadder& ladder = BitrateLadder::low(), const SimConfig& sim = {});

// Runs the network factory, builds the policy and probes it. Throws
// script::ScriptError on construction failures or invalid probe output.
std::unique_ptr<PolicyNetwork> instantiate_network(const CandidateDesign& candidate,
                                                   std::pair<std::size_t, std::size_t> state_shape,
                                                   std::size_t n_actions, std::uint64_t seed,
                                                   const SandboxPolicy& policy, double actor_lr = 1e-4,
                                                   double critic_lr = 1e-3);

// Checks that `net` maps a probe input to a probability simplex (sum within
// 1e-6, entries >= 0) and a finite value. Returns an empty string on success.
std::string probe_policy(const PolicyNetwork& net);

// Shared registry with the default modules plus "nn".
std::shared_ptr<const script::ModuleRegistry> candidate_registry();

// Reference designs shipped with the library.
std::vector<CandidateDesign> load_builtin_corpus();
const CandidateDesign& builtin(const std::string& id);

inline constexpr const char* kOriginalStateId = "pensieve_original";
inline constexpr const char* kOriginalNetworkId = "original_a2c";

// Corpus directories hold <id>.code plus a <id>.json metadata sidecar.
void save_candidate(const std::filesystem::path& dir, const CandidateDesign& c);
std::vector<CandidateDesign> load_corpus_dir(const std::filesystem::path& dir);

}  // namespace abrforge
