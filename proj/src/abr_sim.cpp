#include "abrforge/abr_sim.hpp"

#include "abrforge/util/files.hpp"
#include "abrforge/util/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace abrforge {

using nlohmann::json;

void BitrateLadder::validate() const {
    if (levels_kbps.size() < 2) throw Error("bitrate ladder needs at least 2 levels");
    for (std::size_t i = 0; i < levels_kbps.size(); ++i) {
        if (!(levels_kbps[i] > 0.0)) throw Error("bitrate ladder levels must be > 0");
        if (i > 0 && !(levels_kbps[i] > levels_kbps[i - 1])) {
            throw Error("bitrate ladder must be strictly ascending");
        }
    }
}

BitrateLadder BitrateLadder::low() { return {{300, 750, 1200, 1850, 2850, 4300}}; }

BitrateLadder BitrateLadder::high() { return {{1850, 2850, 4300, 12000, 24000, 53000}}; }

BitrateLadder BitrateLadder::from_id(const std::string& id) {
    if (id == "low") return low();
    if (id == "high") return high();
    BitrateLadder ladder;
    std::stringstream ss(id);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            ladder.levels_kbps.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw Error("unknown bitrate ladder '" + id + "'");
        }
    }
    ladder.validate();
    return ladder;
}

void VideoManifest::validate(const BitrateLadder& ladder) const {
    if (n_chunks == 0) throw Error("manifest has no chunks");
    if (!(chunk_duration_s > 0.0)) throw Error("chunk duration must be > 0");
    if (sizes_bytes.size() != ladder.size()) throw Error("manifest level count does not match ladder");
    for (const auto& row : sizes_bytes) {
        if (row.size() != n_chunks) throw Error("manifest chunk count mismatch");
    }
    for (std::size_t c = 0; c < n_chunks; ++c) {
        for (std::size_t l = 0; l < sizes_bytes.size(); ++l) {
            if (!(sizes_bytes[l][c] > 0.0)) throw Error("chunk sizes must be > 0");
            if (l > 0 && !(sizes_bytes[l][c] > sizes_bytes[l - 1][c])) {
                throw Error("chunk " + std::to_string(c) + " sizes not increasing across levels");
            }
        }
    }
}

VideoManifest synth_manifest(const BitrateLadder& ladder, std::size_t n_chunks,
                             double chunk_duration_s, double jitter, std::uint64_t seed) {
    ladder.validate();
    if (!(jitter >= 0.0 && jitter < 0.5)) throw Error("jitter must be in [0, 0.5)");
    if (n_chunks == 0) throw Error("n_chunks must be >= 1");
    VideoManifest m;
    m.n_chunks = n_chunks;
    m.chunk_duration_s = chunk_duration_s;
    m.sizes_bytes.assign(ladder.size(), std::vector<double>(n_chunks, 0.0));
    Rng rng(seed);
    std::vector<double> column(ladder.size());
    for (std::size_t c = 0; c < n_chunks; ++c) {
        for (;;) {
            for (std::size_t l = 0; l < ladder.size(); ++l) {
                const double u = jitter > 0.0 ? rng.uniform(-jitter, jitter) : 0.0;
                column[l] = std::round(ladder.levels_kbps[l] * chunk_duration_s * 125.0 * (1.0 + u));
            }
            bool ok = column[0] > 0.0;
            for (std::size_t l = 1; ok && l < column.size(); ++l) ok = column[l] > column[l - 1];
            if (ok) break;
        }
        for (std::size_t l = 0; l < ladder.size(); ++l) m.sizes_bytes[l][c] = column[l];
    }
    return m;
}

void save_manifest(const std::filesystem::path& path, const BitrateLadder& ladder,
                   const VideoManifest& manifest) {
    json j;
    j["ladder_kbps"] = ladder.levels_kbps;
    j["n_chunks"] = manifest.n_chunks;
    j["chunk_duration_s"] = manifest.chunk_duration_s;
    j["sizes_bytes"] = manifest.sizes_bytes;
    write_file_atomic(path, j.dump(1) + "\n");
}

std::pair<BitrateLadder, VideoManifest> load_manifest(const std::filesystem::path& path) {
    try {
        const json j = json::parse(read_file(path));
        BitrateLadder ladder{j.at("ladder_kbps").get<std::vector<double>>()};
        VideoManifest m;
        m.n_chunks = j.at("n_chunks").get<std::size_t>();
        m.chunk_duration_s = j.at("chunk_duration_s").get<double>();
        m.sizes_bytes = j.at("sizes_bytes").get<std::vector<std::vector<double>>>();
        ladder.validate();
        m.validate(ladder);
        return {ladder, m};
    } catch (const json::exception& e) {
        throw Error("malformed video manifest " + path.string() + ": " + e.what());
    }
}

DownloadResult download_chunk(const Trace& trace, double size_bytes, double start_time_s) {
    if (!(size_bytes > 0.0)) throw Error("download_chunk requires size_bytes > 0");
    if (!(start_time_s >= 0.0)) throw Error("download_chunk requires start_time_s >= 0");
    const double bits = size_bytes * 8.0;
    const auto& samples = trace.samples();

    if (samples.size() == 1) {
        const double rate = samples.front().throughput_mbps * 1e6;
        if (rate <= 0.0) throw Error("link permanently dead in trace '" + trace.id() + "'");
        const double d = bits / rate;
        return {d, bits / d / 1e6};
    }

    const double period = trace.cycle_period_s();
    double cycle_bits = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        cycle_bits += samples[i].throughput_mbps * 1e6 * (trace.segment_end(i) - trace.offset(i));
    }
    if (cycle_bits <= 0.0) throw Error("link permanently dead in trace '" + trace.id() + "'");

    double remaining = bits;
    double elapsed = 0.0;
    double off = std::fmod(start_time_s, period);
    std::size_t seg = trace.segment_at(off);

    // Whole cycles can be skipped in one step; one spare cycle is kept so the
    // final partial segment is always resolved by the walk below.
    const double whole = std::floor(remaining / cycle_bits) - 1.0;
    if (whole >= 1.0) {
        remaining -= whole * cycle_bits;
        elapsed += whole * period;
    }

    for (;;) {
        const double rate = samples[seg].throughput_mbps * 1e6;
        const double end = trace.segment_end(seg);
        const double span = end - off;
        if (rate > 0.0 && rate * span >= remaining) {
            elapsed += remaining / rate;
            break;
        }
        remaining -= rate * span;
        elapsed += span;
        ++seg;
        off = end;
        if (seg == samples.size()) {
            seg = 0;
            off = 0.0;
        }
    }
    return {elapsed, bits / elapsed / 1e6};
}

double qoe_lin(double level_kbps, double prev_level_kbps, double rebuffer_s, double rebuffer_penalty,
               double smoothness_weight) {
    if (level_kbps < 0.0 || prev_level_kbps < 0.0 || rebuffer_s < 0.0) {
        throw Error("qoe_lin inputs must be non-negative");
    }
    // Combine the kbps terms before scaling so ladder values give exact results.
    const double quality_kbps = level_kbps - smoothness_weight * std::abs(level_kbps - prev_level_kbps);
    return quality_kbps / 1000.0 - rebuffer_penalty * rebuffer_s;
}

Session::Session(const Trace& trace, const VideoManifest& manifest, const BitrateLadder& ladder,
                 SimConfig config, double start_time_s)
    : trace_(&trace),
      manifest_(&manifest),
      ladder_(&ladder),
      config_(config),
      clock_s_(start_time_s),
      last_level_(config.default_level) {
    if (manifest.sizes_bytes.size() != ladder.size()) {
        throw Error("manifest and ladder disagree on level count");
    }
    if (config_.default_level >= ladder.size()) throw Error("default level outside the ladder");
    if (config_.history_len == 0) throw Error("history length must be >= 1");
    obs_.throughput_hist_mbps.assign(config_.history_len, 0.0);
    obs_.download_time_hist_s.assign(config_.history_len, 0.0);
    obs_.buffer_hist_s.assign(config_.history_len, 0.0);
    obs_.buffer_s = 0.0;
    obs_.chunks_remaining = manifest.n_chunks;
    obs_.last_level = last_level_;
    refresh_next_sizes();
}

void Session::refresh_next_sizes() {
    obs_.next_sizes_bytes.assign(ladder_->size(), 0.0);
    if (done()) return;
    for (std::size_t l = 0; l < ladder_->size(); ++l) {
        obs_.next_sizes_bytes[l] = manifest_->size(l, chunk_index_);
    }
}

namespace {
void push_history(std::vector<double>& hist, double value) {
    std::rotate(hist.begin(), hist.begin() + 1, hist.end());
    hist.back() = value;
}
}  // namespace

StepResult Session::step(std::size_t level) {
    if (done()) throw Error("step called on a finished session");
    if (level >= ladder_->size()) throw Error("bitrate level " + std::to_string(level) + " out of range");

    const double size = manifest_->size(level, chunk_index_);
    const auto dl = download_chunk(*trace_, size, clock_s_);

    StepResult r;
    r.chunk_index = chunk_index_;
    r.level = level;
    r.buffer_before_s = buffer_s_;
    r.download_time_s = dl.duration_s;
    r.rebuffer_s = std::max(dl.duration_s - buffer_s_, 0.0);
    double buffer = std::max(buffer_s_ - dl.duration_s, 0.0) + manifest_->chunk_duration_s;
    if (buffer > config_.buffer_cap_s) {
        r.idle_wait_s = buffer - config_.buffer_cap_s;
        buffer = config_.buffer_cap_s;
    }
    const double level_kbps = ladder_->levels_kbps[level];
    const double prev_kbps = ladder_->levels_kbps[last_level_];
    r.bitrate_mbps = level_kbps / 1000.0;
    r.switch_mbps = std::abs(level_kbps - prev_kbps) / 1000.0;
    r.reward = qoe_lin(level_kbps, prev_kbps, r.rebuffer_s, config_.rebuffer_penalty,
                       config_.smoothness_weight);

    clock_s_ += dl.duration_s + r.idle_wait_s;
    buffer_s_ = buffer;
    last_level_ = level;
    ++chunk_index_;
    r.done = done();

    push_history(obs_.throughput_hist_mbps, dl.mean_throughput_mbps);
    push_history(obs_.download_time_hist_s, dl.duration_s);
    push_history(obs_.buffer_hist_s, buffer_s_);
    obs_.buffer_s = buffer_s_;
    obs_.chunks_remaining = manifest_->n_chunks - chunk_index_;
    obs_.last_level = last_level_;
    refresh_next_sizes();
    return r;
}

RolloutResult rollout(const DecisionFn& policy, Session& session) {
    if (session.chunk_index() != 0) throw Error("rollout requires a fresh session");
    RolloutResult result;
    while (!session.done()) {
        const std::size_t chunk = session.chunk_index();
        std::size_t level = 0;
        try {
            level = policy(session.observation());
        } catch (const std::exception& e) {
            throw PolicyFailure(chunk, e.what());
        }
        if (level >= session.ladder().size()) {
            throw PolicyFailure(chunk, "level " + std::to_string(level) + " outside the ladder");
        }
        result.steps.push_back(session.step(level));
        result.total_reward += result.steps.back().reward;
    }
    result.mean_reward = result.steps.empty() ? 0.0 : result.total_reward / static_cast<double>(result.steps.size());
    return result;
}

void write_rollout_log(std::ostream& out, const std::vector<StepResult>& steps) {
    for (const auto& s : steps) {
        json j;
        j["chunk"] = s.chunk_index;
        j["level"] = s.level;
        j["download_time"] = s.download_time_s;
        j["rebuffer"] = s.rebuffer_s;
        j["reward"] = s.reward;
        out << j.dump() << '\n';
    }
}

}  // namespace abrforge
