#pragma once

#include "abrforge/trace_store.hpp"
#include "abrforge/util/error.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace abrforge {

struct BitrateLadder {
    std::vector<double> levels_kbps;

    // Throws unless strictly ascending, positive and at least two levels.
    void validate() const;
    std::size_t size() const { return levels_kbps.size(); }
    double max_kbps() const { return levels_kbps.back(); }

    static BitrateLadder low();   // 300 .. 4300 kbps
    static BitrateLadder high();  // 1850 .. 53000 kbps
    // "low" / "high", or a comma-separated list of kbps values.
    static BitrateLadder from_id(const std::string& id);
};

struct VideoManifest {
    std::size_t n_chunks = 0;
    double chunk_duration_s = 4.0;
    std::vector<std::vector<double>> sizes_bytes;  // [level][chunk]

    void validate(const BitrateLadder& ladder) const;
    double size(std::size_t level, std::size_t chunk) const { return sizes_bytes[level][chunk]; }
};

// sizes[l][c] = round(kbps_l * chunk_duration * 125 * (1 + u)), u ~ U[-jitter, jitter].
// Chunks whose sizes are not strictly increasing across levels are resampled.
VideoManifest synth_manifest(const BitrateLadder& ladder, std::size_t n_chunks,
                             double chunk_duration_s, double jitter, std::uint64_t seed);

void save_manifest(const std::filesystem::path& path, const BitrateLadder& ladder,
                   const VideoManifest& manifest);
std::pair<BitrateLadder, VideoManifest> load_manifest(const std::filesystem::path& path);

struct SimConfig {
    double chunk_duration_s = 4.0;
    std::size_t history_len = 8;
    double buffer_cap_s = 60.0;
    std::size_t n_chunks = 48;
    double rebuffer_penalty = 4.3;
    double smoothness_weight = 1.0;
    std::size_t default_level = 1;
};

// What the player knows after each chunk. Histories have exactly
// `history_len` entries, oldest first, zero-padded on the left.
struct StreamObservation {
    std::vector<double> throughput_hist_mbps;
    std::vector<double> download_time_hist_s;
    std::vector<double> buffer_hist_s;
    std::vector<double> next_sizes_bytes;  // one per ladder level; zeros when done
    double buffer_s = 0.0;
    std::size_t chunks_remaining = 0;
    std::size_t last_level = 0;
};

struct StepResult {
    std::size_t chunk_index = 0;
    std::size_t level = 0;
    double bitrate_mbps = 0.0;
    double switch_mbps = 0.0;  // |bitrate - previous bitrate|
    double buffer_before_s = 0.0;
    double download_time_s = 0.0;
    double rebuffer_s = 0.0;
    double idle_wait_s = 0.0;
    double reward = 0.0;
    bool done = false;
};

struct DownloadResult {
    double duration_s = 0.0;
    double mean_throughput_mbps = 0.0;
};

// Exact time to move `size_bytes` over the cyclically extended trace starting
// at `start_time_s`.
DownloadResult download_chunk(const Trace& trace, double size_bytes, double start_time_s);

// QoE_lin: bitrate (Mbps) - penalty * rebuffer - smoothness * |bitrate change|.
double qoe_lin(double level_kbps, double prev_level_kbps, double rebuffer_s,
               double rebuffer_penalty = 4.3, double smoothness_weight = 1.0);

// One streaming session over a trace. Holds non-owning references: the trace,
// manifest and ladder must outlive it.
class Session {
public:
    Session(const Trace& trace, const VideoManifest& manifest, const BitrateLadder& ladder,
            SimConfig config = {}, double start_time_s = 0.0);

    const StreamObservation& observation() const { return obs_; }
    StepResult step(std::size_t level);

    bool done() const { return chunk_index_ >= manifest_->n_chunks; }
    double clock_s() const { return clock_s_; }
    double buffer_s() const { return buffer_s_; }
    std::size_t chunk_index() const { return chunk_index_; }
    std::size_t last_level() const { return last_level_; }
    const SimConfig& config() const { return config_; }
    const BitrateLadder& ladder() const { return *ladder_; }

private:
    void refresh_next_sizes();

    const Trace* trace_;
    const VideoManifest* manifest_;
    const BitrateLadder* ladder_;
    SimConfig config_;
    double clock_s_;
    double buffer_s_ = 0.0;
    std::size_t chunk_index_ = 0;
    std::size_t last_level_;
    StreamObservation obs_;
};

using DecisionFn = std::function<std::size_t(const StreamObservation&)>;

class PolicyFailure : public Error {
public:
    PolicyFailure(std::size_t chunk, const std::string& what)
        : Error("policy failed at chunk " + std::to_string(chunk) + ": " + what), chunk_(chunk) {}
    std::size_t chunk() const { return chunk_; }

private:
    std::size_t chunk_;
};

struct RolloutResult {
    double total_reward = 0.0;
    double mean_reward = 0.0;  // per chunk
    std::vector<StepResult> steps;
};

// Runs `policy` over a fresh session until the video ends. Exceptions from
// the policy are rethrown as PolicyFailure naming the chunk index.
RolloutResult rollout(const DecisionFn& policy, Session& session);

// One JSON record per line: chunk, level, download_time, rebuffer, reward.
void write_rollout_log(std::ostream& out, const std::vector<StepResult>& steps);

}  // namespace abrforge
