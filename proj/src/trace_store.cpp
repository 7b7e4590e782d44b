#include "abrforge/trace_store.hpp"

#include "abrforge/util/error.hpp"
#include "abrforge/util/files.hpp"
#include "abrforge/util/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace abrforge {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(SourceTag tag) {
    switch (tag) {
        case SourceTag::fcc: return "fcc";
        case SourceTag::starlink: return "starlink";
        case SourceTag::cellular_4g: return "cellular_4g";
        case SourceTag::cellular_5g: return "cellular_5g";
        case SourceTag::custom: return "custom";
    }
    return "custom";
}

SourceTag source_tag_from_string(const std::string& s) {
    if (s == "fcc") return SourceTag::fcc;
    if (s == "starlink") return SourceTag::starlink;
    if (s == "cellular_4g" || s == "4g") return SourceTag::cellular_4g;
    if (s == "cellular_5g" || s == "5g") return SourceTag::cellular_5g;
    if (s == "custom") return SourceTag::custom;
    throw Error("unknown source tag '" + s + "'");
}

TraceFormat trace_format_from_string(const std::string& s) {
    if (s == "two_column" || s == "columns") return TraceFormat::two_column;
    if (s == "mahimahi") return TraceFormat::mahimahi;
    throw Error("unknown trace format '" + s + "'");
}

Trace::Trace(std::string id, std::vector<TraceSample> samples, SourceTag tag)
    : id_(std::move(id)), samples_(std::move(samples)), tag_(tag) {
    if (samples_.empty()) throw Error("trace '" + id_ + "' has no samples");
    if (!(samples_.front().time_s >= 0.0)) {
        throw Error("trace '" + id_ + "' starts at negative time");
    }
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const auto& s = samples_[i];
        if (!std::isfinite(s.time_s) || !std::isfinite(s.throughput_mbps)) {
            throw Error("trace '" + id_ + "' has a non-finite value at sample " + std::to_string(i));
        }
        if (s.throughput_mbps < 0.0) {
            throw Error("trace '" + id_ + "' has negative throughput at sample " + std::to_string(i));
        }
        if (i > 0 && !(s.time_s > samples_[i - 1].time_s)) {
            throw Error("trace '" + id_ + "' has non-increasing timestamp at sample " +
                        std::to_string(i));
        }
    }
    if (samples_.size() == 1) {
        period_ = std::numeric_limits<double>::infinity();
    } else {
        const std::size_t n = samples_.size();
        const double last_gap = samples_[n - 1].time_s - samples_[n - 2].time_s;
        period_ = duration_s() + last_gap;
    }
}

double Trace::duration_s() const { return samples_.back().time_s - samples_.front().time_s; }

std::size_t Trace::segment_at(double off) const {
    // Largest i with offset(i) <= off.
    // Compare in offset space so offset(i) itself always maps back to segment i.
    const double t0 = samples_.front().time_s;
    auto it = std::upper_bound(samples_.begin(), samples_.end(), off,
                               [t0](double v, const TraceSample& s) { return v < s.time_s - t0; });
    if (it == samples_.begin()) return 0;
    return static_cast<std::size_t>(std::distance(samples_.begin(), it)) - 1;
}

double Trace::segment_end(std::size_t i) const {
    return i + 1 < samples_.size() ? offset(i + 1) : period_;
}

double Trace::throughput_at(double t) const {
    if (t < 0.0) throw Error("throughput_at requires t >= 0");
    if (samples_.size() == 1) return samples_.front().throughput_mbps;
    double off = std::fmod(t, period_);
    if (off < 0.0) off = 0.0;
    return samples_[segment_at(off)].throughput_mbps;
}

Trace Trace::scaled(double factor) const {
    auto samples = samples_;
    for (auto& s : samples) s.throughput_mbps *= factor;
    return Trace(id_, std::move(samples), tag_);
}

double throughput_at(const Trace& trace, double t) { return trace.throughput_at(t); }

namespace {

std::vector<TraceSample> parse_two_column(std::istream& in, const std::string& id) {
    std::vector<TraceSample> samples;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        TraceSample s;
        std::string extra;
        if (!(ls >> s.time_s >> s.throughput_mbps) || (ls >> extra)) {
            throw Error(id + ":" + std::to_string(lineno) + ": expected 'time_s throughput_mbps'");
        }
        if (s.throughput_mbps < 0.0) {
            throw Error(id + ":" + std::to_string(lineno) + ": negative throughput");
        }
        if (!samples.empty() && !(s.time_s > samples.back().time_s)) {
            throw Error(id + ":" + std::to_string(lineno) + ": non-monotone timestamp");
        }
        samples.push_back(s);
    }
    return samples;
}

std::vector<TraceSample> parse_mahimahi(std::istream& in, const std::string& id) {
    constexpr double kPacketBits = 1500.0 * 8.0;
    std::map<long long, std::size_t> per_second;
    std::string line;
    std::size_t lineno = 0;
    long long prev = -1;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        std::istringstream ls(line);
        long long ms = 0;
        if (!(ls >> ms) || ms < 0) {
            throw Error(id + ":" + std::to_string(lineno) + ": expected a millisecond timestamp");
        }
        if (ms < prev) throw Error(id + ":" + std::to_string(lineno) + ": non-monotone timestamp");
        prev = ms;
        ++per_second[ms / 1000];
    }
    std::vector<TraceSample> samples;
    if (per_second.empty()) return samples;
    const long long last = per_second.rbegin()->first;
    for (long long sec = 0; sec <= last; ++sec) {
        auto it = per_second.find(sec);
        const double count = it == per_second.end() ? 0.0 : static_cast<double>(it->second);
        samples.push_back({static_cast<double>(sec), count * kPacketBits / 1e6});
    }
    return samples;
}

}  // namespace

Trace parse_trace_file(const fs::path& file, TraceFormat format, double scale_factor, SourceTag tag,
                       const std::string& id) {
    if (!(scale_factor > 0.0)) throw Error("scale factor must be > 0");
    std::ifstream in(file);
    if (!in) throw Error("cannot open " + file.string());
    auto samples = format == TraceFormat::two_column ? parse_two_column(in, id) : parse_mahimahi(in, id);
    if (samples.empty()) throw Error(id + ": no samples");
    for (auto& s : samples) s.throughput_mbps *= scale_factor;
    return Trace(id, std::move(samples), tag);
}

IngestResult ingest_directory(const fs::path& dir, TraceFormat format, double scale_factor,
                              SourceTag tag) {
    if (!fs::is_directory(dir)) throw Error("trace directory not found: " + dir.string());
    if (!(scale_factor > 0.0)) throw Error("scale factor must be > 0");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    IngestResult result;
    for (const auto& f : files) {
        try {
            result.traces.push_back(parse_trace_file(f, format, scale_factor, tag, f.filename().string()));
        } catch (const Error& e) {
            result.rejected.push_back({f, e.what()});
        }
    }
    if (result.traces.empty()) {
        std::string msg = "no traces found in " + dir.string();
        if (!result.rejected.empty()) {
            msg += " (" + std::to_string(result.rejected.size()) + " files rejected; first: " +
                   result.rejected.front().reason + ")";
        }
        throw Error(msg);
    }
    std::sort(result.traces.begin(), result.traces.end(),
              [](const Trace& a, const Trace& b) { return a.id() < b.id(); });
    return result;
}

void TraceDataset::validate() const {
    if (!(scale_factor > 0.0)) throw Error("dataset '" + name + "': scale factor must be > 0");
    std::set<std::string> ids;
    for (const auto& t : train) ids.insert(t.id());
    for (const auto& t : test) {
        if (ids.count(t.id())) {
            throw Error("dataset '" + name + "': trace '" + t.id() + "' is in both train and test");
        }
    }
}

DatasetStats trace_stats(std::span<const Trace> traces) {
    DatasetStats stats;
    stats.n_traces = traces.size();
    double seconds = 0.0, megabits = 0.0, plain_sum = 0.0;
    std::size_t plain_n = 0;
    for (const auto& t : traces) {
        const auto& s = t.samples();
        for (std::size_t i = 0; i + 1 < s.size(); ++i) {
            megabits += s[i].throughput_mbps * (s[i + 1].time_s - s[i].time_s);
        }
        for (const auto& x : s) plain_sum += x.throughput_mbps;
        plain_n += s.size();
        seconds += t.duration_s();
    }
    stats.total_hours = seconds / 3600.0;
    if (seconds > 0.0) {
        stats.mean_throughput_mbps = megabits / seconds;
    } else if (plain_n > 0) {
        stats.mean_throughput_mbps = plain_sum / static_cast<double>(plain_n);
    }
    return stats;
}

DatasetStats dataset_stats(const TraceDataset& ds, Split split) {
    const auto& traces = split == Split::train ? ds.train : ds.test;
    if (traces.empty()) {
        throw Error("dataset '" + ds.name + "' has an empty " +
                    (split == Split::train ? "train" : "test") + " split");
    }
    return trace_stats(traces);
}

std::pair<std::vector<Trace>, std::vector<Trace>> split_dataset(std::vector<Trace> traces,
                                                                double test_fraction,
                                                                std::uint64_t seed) {
    if (traces.size() < 2) throw Error("split_dataset needs at least 2 traces");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw Error("test_fraction must be in (0, 1)");
    }
    std::sort(traces.begin(), traces.end(), [](const Trace& a, const Trace& b) { return a.id() < b.id(); });
    std::vector<std::size_t> order(traces.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    const auto n = traces.size();
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
    std::vector<std::size_t> test_idx(order.begin(), order.begin() + static_cast<long>(n_test));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_test), order.end());
    std::sort(test_idx.begin(), test_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::vector<Trace> train, test;
    for (auto i : train_idx) train.push_back(traces[i]);
    for (auto i : test_idx) test.push_back(traces[i]);
    return {std::move(train), std::move(test)};
}

std::vector<Trace> subsample_to_hours(std::vector<Trace> traces, double hours, std::uint64_t seed) {
    if (!(hours > 0.0)) throw Error("subsample target must be > 0 hours");
    std::sort(traces.begin(), traces.end(), [](const Trace& a, const Trace& b) { return a.id() < b.id(); });
    Rng rng(seed);
    rng.shuffle(traces);
    std::vector<Trace> picked;
    double seconds = 0.0;
    for (auto& t : traces) {
        if (seconds >= hours * 3600.0) break;
        seconds += t.duration_s();
        picked.push_back(std::move(t));
    }
    std::sort(picked.begin(), picked.end(), [](const Trace& a, const Trace& b) { return a.id() < b.id(); });
    return picked;
}

DatasetManifest read_dataset_manifest(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error("malformed dataset manifest " + path.string() + ": " + e.what());
    }
    DatasetManifest m;
    try {
        m.name = j.at("name").get<std::string>();
        m.trace_dir = j.at("trace_dir").get<std::string>();
        if (m.trace_dir.is_relative()) m.trace_dir = path.parent_path() / m.trace_dir;
        m.format = trace_format_from_string(j.value("format", "two_column"));
        m.source_tag = source_tag_from_string(j.value("source_tag", "custom"));
        m.scale_factor = j.value("scale_factor", 1.0);
        m.ladder = j.value("ladder", "low");
        m.train = j.at("train").get<std::vector<std::string>>();
        m.test = j.at("test").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw Error("dataset manifest " + path.string() + ": " + e.what());
    }
    return m;
}

void write_dataset_manifest(const fs::path& path, const DatasetManifest& m) {
    json j;
    j["name"] = m.name;
    j["trace_dir"] = m.trace_dir.string();
    j["format"] = m.format == TraceFormat::two_column ? "two_column" : "mahimahi";
    j["source_tag"] = to_string(m.source_tag);
    j["scale_factor"] = m.scale_factor;
    j["ladder"] = m.ladder;
    j["train"] = m.train;
    j["test"] = m.test;
    write_file_atomic(path, j.dump(2) + "\n");
}

TraceDataset load_dataset(const fs::path& manifest_path) {
    if (!fs::exists(manifest_path)) throw Error("dataset manifest not found: " + manifest_path.string());
    const auto m = read_dataset_manifest(manifest_path);
    TraceDataset ds;
    ds.name = m.name;
    ds.scale_factor = m.scale_factor;
    ds.bitrate_ladder_id = m.ladder;
    auto load = [&](const std::vector<std::string>& ids) {
        std::vector<Trace> out;
        for (const auto& id : ids) {
            out.push_back(parse_trace_file(m.trace_dir / id, m.format, m.scale_factor, m.source_tag, id));
        }
        return out;
    };
    ds.train = load(m.train);
    ds.test = load(m.test);
    ds.validate();
    return ds;
}

const std::vector<DatasetProfile>& reference_profiles() {
    static const std::vector<DatasetProfile> profiles = {
        {"fcc", 85, 10.0, 290, 25.7, 1.3, 40000, 500, "low", 1.0},
        {"starlink", 13, 0.9, 12, 0.8, 1.6, 4000, 100, "low", 0.125},
        {"4g", 119, 10.0, 121, 10.0, 19.8, 40000, 500, "high", 1.0},
        {"5g", 117, 10.0, 119, 10.0, 30.2, 40000, 500, "high", 1.0},
    };
    return profiles;
}

const DatasetProfile& reference_profile(const std::string& name) {
    for (const auto& p : reference_profiles()) {
        if (p.name == name) return p;
    }
    throw Error("unknown dataset profile '" + name + "'");
}

}  // namespace abrforge
