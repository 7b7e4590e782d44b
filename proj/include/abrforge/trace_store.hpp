#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace abrforge {

enum class SourceTag { fcc, starlink, cellular_4g, cellular_5g, custom };

std::string to_string(SourceTag tag);
SourceTag source_tag_from_string(const std::string& s);

struct TraceSample {
    double time_s = 0.0;
    double throughput_mbps = 0.0;
};

// One recorded throughput time series. Immutable once constructed; the
// constructor enforces strictly increasing timestamps starting at >= 0,
// non-negative throughput and at least one sample.
class Trace {
public:
    Trace(std::string id, std::vector<TraceSample> samples, SourceTag tag = SourceTag::custom);

    const std::string& id() const { return id_; }
    const std::vector<TraceSample>& samples() const { return samples_; }
    SourceTag source_tag() const { return tag_; }

    // Last timestamp minus first. Used for dataset accounting.
    double duration_s() const;

    // Length of one replay cycle: the final sample holds for the preceding
    // inter-sample gap. Infinite for single-sample traces (constant link).
    double cycle_period_s() const { return period_; }

    // Piecewise-constant, right-continuous capacity at time t (t >= 0), where
    // t = 0 is the first sample and the trace repeats every cycle_period_s().
    double throughput_at(double t) const;

    // Index of the sample in force at cycle offset `offset` in [0, period).
    std::size_t segment_at(double offset) const;
    // Offset of sample i from the first sample.
    double offset(std::size_t i) const { return samples_[i].time_s - samples_.front().time_s; }
    // Cycle offset at which segment i ends.
    double segment_end(std::size_t i) const;

    Trace scaled(double factor) const;

private:
    std::string id_;
    std::vector<TraceSample> samples_;
    SourceTag tag_;
    double period_;
};

double throughput_at(const Trace& trace, double t);

enum class TraceFormat {
    two_column,  // "time_s throughput_mbps" per line
    mahimahi,    // one millisecond timestamp per 1500-byte delivery opportunity
};

TraceFormat trace_format_from_string(const std::string& s);

struct IngestDiagnostic {
    std::filesystem::path file;
    std::string reason;
};

struct IngestResult {
    std::vector<Trace> traces;  // sorted by id
    std::vector<IngestDiagnostic> rejected;
};

// Parses one trace file. Throws Error with a diagnostic on malformed content.
Trace parse_trace_file(const std::filesystem::path& file, TraceFormat format, double scale_factor,
                       SourceTag tag, const std::string& id);

// Reads every regular file in `dir`. Files that fail to parse are reported in
// `rejected`. Throws if the directory is missing or yields no traces.
IngestResult ingest_directory(const std::filesystem::path& dir, TraceFormat format,
                              double scale_factor, SourceTag tag);

struct TraceDataset {
    std::string name;
    std::vector<Trace> train;
    std::vector<Trace> test;
    double scale_factor = 1.0;
    std::string bitrate_ladder_id = "low";

    // Throws on overlapping train/test ids or a non-positive scale factor.
    void validate() const;
};

enum class Split { train, test };

struct DatasetStats {
    std::size_t n_traces = 0;
    double total_hours = 0.0;
    double mean_throughput_mbps = 0.0;  // duration-weighted
};

DatasetStats trace_stats(std::span<const Trace> traces);
DatasetStats dataset_stats(const TraceDataset& ds, Split split);

// Deterministic partition: traces are ordered by id, shuffled with `seed`,
// and round(test_fraction * n) (clamped to [1, n-1]) go to test.
std::pair<std::vector<Trace>, std::vector<Trace>> split_dataset(std::vector<Trace> traces,
                                                                double test_fraction,
                                                                std::uint64_t seed);

// Picks a seeded random subset whose total duration first reaches `hours`.
std::vector<Trace> subsample_to_hours(std::vector<Trace> traces, double hours, std::uint64_t seed);

// Dataset manifest (JSON):
//   {"name", "trace_dir", "format", "source_tag", "scale_factor", "ladder",
//    "train": [ids], "test": [ids]}
// trace_dir is resolved relative to the manifest's directory. Trace ids are
// file names within trace_dir.
struct DatasetManifest {
    std::string name;
    std::filesystem::path trace_dir;
    TraceFormat format = TraceFormat::two_column;
    SourceTag source_tag = SourceTag::custom;
    double scale_factor = 1.0;
    std::string ladder = "low";
    std::vector<std::string> train;
    std::vector<std::string> test;
};

DatasetManifest read_dataset_manifest(const std::filesystem::path& path);
void write_dataset_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
TraceDataset load_dataset(const std::filesystem::path& manifest_path);

// Published corpus sizes and training budgets per environment.
struct DatasetProfile {
    std::string name;
    std::size_t train_traces;
    double train_hours;
    std::size_t test_traces;
    double test_hours;
    double mean_throughput_mbps;
    std::size_t train_epochs;
    std::size_t test_interval;
    std::string ladder;
    double scale_factor;
};

const std::vector<DatasetProfile>& reference_profiles();
const DatasetProfile& reference_profile(const std::string& name);

}  // namespace abrforge
