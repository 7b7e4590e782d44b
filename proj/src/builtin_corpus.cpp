#include "abrforge/candidate_model.hpp"

#include "abrforge/util/error.hpp"

namespace abrforge {

namespace {

struct Entry {
    const char* id;
    CandidateKind kind;
    const char* source;
};

// Observation arguments shared by every state function:
//   throughput_mbps         measured throughput of the last HISTORY_LEN chunks (oldest first)
//   download_time_s         download time of the same chunks
//   next_chunk_sizes_bytes  size of the next chunk at every ladder level
//   buffer_s                seconds of video currently buffered
//   chunks_remaining        chunks left in the video
//   last_level              ladder index of the previous chunk
//   buffer_history_s        buffer level after each of the last HISTORY_LEN chunks

const Entry kEntries[] = {
    {"pensieve_original", CandidateKind::state, R"(# Reference state: six rows, scalars right-aligned in a HISTORY_LEN wide matrix.
fn state(throughput_mbps, download_time_s, next_chunk_sizes_bytes, buffer_s, chunks_remaining, last_level, buffer_history_s) {
    let last_bitrate = BITRATES_KBPS[last_level] / max(BITRATES_KBPS);
    let remaining = min(chunks_remaining, TOTAL_CHUNKS) / TOTAL_CHUNKS;
    return [
        last_bitrate,
        buffer_s / 10.0,
        throughput_mbps / 8.0,
        download_time_s / 10.0,
        next_chunk_sizes_bytes / 1000000.0,
        remaining,
    ];
}
)"},
    {"fcc_symmetric_range", CandidateKind::state, R"(# Every feature remapped to [-1, 1].
fn to_symmetric(x, scale) {
    return clip(x / scale, 0.0, 1.0) * 2.0 - 1.0;
}

fn state(throughput_mbps, download_time_s, next_chunk_sizes_bytes, buffer_s, chunks_remaining, last_level, buffer_history_s) {
    let top_mbps = max(BITRATES_KBPS) / 1000.0;
    let top_chunk_bytes = max(BITRATES_KBPS) * 125.0 * CHUNK_DURATION_S * 1.5;
    return [
        to_symmetric(last_level, len(BITRATES_KBPS) - 1),
        to_symmetric(buffer_s, BUFFER_CAP_S),
        to_symmetric(throughput_mbps, 2.0 * top_mbps),
        to_symmetric(download_time_s, 4.0 * CHUNK_DURATION_S),
        to_symmetric(next_chunk_sizes_bytes, top_chunk_bytes),
        to_symmetric(min(chunks_remaining, TOTAL_CHUNKS), TOTAL_CHUNKS),
    ];
}
)"},
    {"starlink_reduced", CandidateKind::state, R"(# Drops the download-time history and the next chunk sizes.
fn state(throughput_mbps, download_time_s, next_chunk_sizes_bytes, buffer_s, chunks_remaining, last_level, buffer_history_s) {
    return [
        BITRATES_KBPS[last_level] / max(BITRATES_KBPS),
        buffer_s / 10.0,
        throughput_mbps / 8.0,
        min(chunks_remaining, TOTAL_CHUNKS) / TOTAL_CHUNKS,
    ];
}
)"},
    {"starlink_smoothed", CandidateKind::state, R"(# Larger normalizing factors plus an exponentially smoothed throughput row.
import signal;

let THROUGHPUT_SCALE = 20.0;

fn state(throughput_mbps, download_time_s, next_chunk_sizes_bytes, buffer_s, chunks_remaining, last_level, buffer_history_s) {
    let smoothed = signal.ema(throughput_mbps, 0.5);
    return [
        BITRATES_KBPS[last_level] / max(BITRATES_KBPS),
        buffer_s / 30.0,
        throughput_mbps / THROUGHPUT_SCALE,
        smoothed / THROUGHPUT_SCALE,
        download_time_s / 20.0,
        next_chunk_sizes_bytes / 10000000.0,
        min(chunks_remaining, TOTAL_CHUNKS) / TOTAL_CHUNKS,
    ];
}
)"},
    {"cellular_regression_trend", CandidateKind::state, R"(# Adds linear-regression trends of throughput and download time.
import stats;

fn state(throughput_mbps, download_time_s, next_chunk_sizes_bytes, buffer_s, chunks_remaining, last_level, buffer_history_s) {
    let throughput_fit = stats.linregress(throughput_mbps);
    let download_fit = stats.linregress(download_time_s);
    let predicted = max(stats.predict_next(throughput_mbps), 0.0);
    return [
        BITRATES_KBPS[last_level] / max(BITRATES_KBPS),
        buffer_s / 10.0,
        throughput_mbps / 8.0,
        download_time_s / 10.0,
        next_chunk_sizes_bytes / 1000000.0,
        min(chunks_remaining, TOTAL_CHUNKS) / TOTAL_CHUNKS,
        [throughput_fit[0] / 8.0, predicted / 8.0],
        download_fit[0] / 10.0,
    ];
}
)"},
    {"buffer_trend_savgol", CandidateKind::state, R"(# Buffer history smoothed with a Savitzky-Golay filter, plus its slope.
import signal;
import stats;

fn state(throughput_mbps, download_time_s, next_chunk_sizes_bytes, buffer_s, chunks_remaining, last_level, buffer_history_s) {
    let smoothed = buffer_history_s;
    if len(buffer_history_s) >= 5 {
        smoothed = signal.savgol(buffer_history_s, 5, 2);
    }
    return [
        BITRATES_KBPS[last_level] / max(BITRATES_KBPS),
        buffer_s / 10.0,
        throughput_mbps / 8.0,
        download_time_s / 10.0,
        next_chunk_sizes_bytes / 1000000.0,
        min(chunks_remaining, TOTAL_CHUNKS) / TOTAL_CHUNKS,
        smoothed / 10.0,
        stats.slope(smoothed) / 10.0,
    ];
}
)"},
    {"buffer_difference", CandidateKind::state, R"(# Buffer change between adjacent chunks as an extra row.
fn state(throughput_mbps, download_time_s, next_chunk_sizes_bytes, buffer_s, chunks_remaining, last_level, buffer_history_s) {
    let change = pad_left(diff(buffer_history_s), HISTORY_LEN);
    return [
        BITRATES_KBPS[last_level] / max(BITRATES_KBPS),
        buffer_s / 10.0,
        throughput_mbps / 8.0,
        download_time_s / 10.0,
        next_chunk_sizes_bytes / 1000000.0,
        min(chunks_remaining, TOTAL_CHUNKS) / TOTAL_CHUNKS,
        change / 10.0,
    ];
}
)"},
    {"cellular_predicted_throughput", CandidateKind::state, R"(# Harmonic mean of the recent non-zero throughputs as a throughput forecast.
fn harmonic_mean(values) {
    let total = 0.0;
    let count = 0;
    for v in values {
        if v > 0 {
            total += 1.0 / v;
            count += 1;
        }
    }
    if count == 0 {
        return 0.0;
    }
    return count / total;
}

fn state(throughput_mbps, download_time_s, next_chunk_sizes_bytes, buffer_s, chunks_remaining, last_level, buffer_history_s) {
    let forecast = harmonic_mean(tail(throughput_mbps, 5));
    return [
        BITRATES_KBPS[last_level] / max(BITRATES_KBPS),
        buffer_s / 10.0,
        throughput_mbps / 8.0,
        download_time_s / 10.0,
        next_chunk_sizes_bytes / 1000000.0,
        min(chunks_remaining, TOTAL_CHUNKS) / TOTAL_CHUNKS,
        forecast / 8.0,
    ];
}
)"},
    {"original_a2c", CandidateKind::network, R"(# Reference actor-critic: per-row 1-D convolution, one hidden layer.
import nn;

fn network(state_channels, state_width, n_actions) {
    let encoder = nn.conv1d(128, 4, "relu");
    return nn.actor_critic(encoder, [128], "relu", n_actions);
}
)"},
    {"wide_leaky", CandidateKind::network, R"(# Wider hidden layer with leaky rectifiers.
import nn;

fn network(state_channels, state_width, n_actions) {
    return nn.actor_critic(nn.conv1d(128, 4, "leaky_relu"), [256], "leaky_relu", n_actions);
}
)"},
    {"recurrent_gru", CandidateKind::network, R"(# Gated recurrent unit over history positions instead of the convolution.
import nn;

fn network(state_channels, state_width, n_actions) {
    return nn.actor_critic(nn.gru(128), [128], "relu", n_actions);
}
)"},
    {"lstm_memory", CandidateKind::network, R"(# Recurrent memory cell encoder.
import nn;

fn network(state_channels, state_width, n_actions) {
    return nn.actor_critic(nn.lstm(128), [128], "relu", n_actions);
}
)"},
    {"shared_trunk", CandidateKind::network, R"(# Actor and critic share the encoder and hidden layer.
import nn;

fn network(state_channels, state_width, n_actions) {
    return nn.actor_critic(nn.conv1d(128, 4, "relu"), [128], "relu", n_actions, true);
}
)"},
};

}  // namespace

std::vector<CandidateDesign> load_builtin_corpus() {
    std::vector<CandidateDesign> out;
    for (const auto& e : kEntries) {
        CandidateDesign c;
        c.id = e.id;
        c.kind = e.kind;
        c.source_text = e.source;
        c.provenance.source = Provenance::builtin;
        c.provenance.batch_id = "builtin";
        c.provenance.index = out.size();
        out.push_back(std::move(c));
    }
    return out;
}

const CandidateDesign& builtin(const std::string& id) {
    static const std::vector<CandidateDesign> corpus = load_builtin_corpus();
    for (const auto& c : corpus) {
        if (c.id == id) return c;
    }
    throw Error("no builtin candidate '" + id + "'");
}

}  // namespace abrforge
