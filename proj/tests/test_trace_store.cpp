#include "abrforge/trace_store.hpp"
#include "abrforge/util/error.hpp"
#include "abrforge/util/files.hpp"
#include "abrforge/util/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

using namespace abrforge;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("abrforge_ts_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

Trace random_trace(Rng& rng, const std::string& id) {
    std::vector<TraceSample> s;
    double t = rng.uniform(0.0, 2.0);
    const std::size_t n = 2 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i) {
        s.push_back({t, rng.uniform(0.0, 10.0)});
        t += rng.uniform(0.1, 5.0);
    }
    return Trace(id, std::move(s));
}

}  // namespace

TEST(TraceInvariants, ConstructorRejectsBadSamples) {
    EXPECT_THROW(Trace("a", {}), Error);
    EXPECT_THROW(Trace("a", {{-1.0, 1.0}}), Error);
    EXPECT_THROW(Trace("a", {{0.0, -1.0}}), Error);
    EXPECT_THROW(Trace("a", {{0.0, 1.0}, {0.0, 2.0}}), Error);
    EXPECT_THROW(Trace("a", {{1.0, 1.0}, {0.5, 2.0}}), Error);
    EXPECT_NO_THROW(Trace("a", {{0.0, 0.0}}));
}

TEST(ThroughputAt, StepFunctionExamples) {
    const Trace t("x", {{0.0, 2.0}, {10.0, 4.0}});
    EXPECT_DOUBLE_EQ(t.cycle_period_s(), 20.0);
    EXPECT_DOUBLE_EQ(throughput_at(t, 0.0), 2.0);
    EXPECT_DOUBLE_EQ(throughput_at(t, 5.0), 2.0);
    EXPECT_DOUBLE_EQ(throughput_at(t, 10.0), 4.0);
    EXPECT_DOUBLE_EQ(throughput_at(t, 19.999), 4.0);
    EXPECT_DOUBLE_EQ(throughput_at(t, 25.0), 2.0);
    EXPECT_DOUBLE_EQ(throughput_at(t, 30.0), 4.0);
}

TEST(ThroughputAt, RightContinuousAtEverySampleTime) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Trace t = random_trace(rng, "r");
        const double t0 = t.samples().front().time_s;
        for (const auto& s : t.samples()) {
            EXPECT_DOUBLE_EQ(throughput_at(t, s.time_s - t0), s.throughput_mbps);
            // one full cycle later the same value holds
            EXPECT_NEAR(throughput_at(t, s.time_s - t0 + t.cycle_period_s() + 1e-9), s.throughput_mbps, 0.0);
        }
    }
}

TEST(Ingest, ScalesSortsAndRejectsMalformedFiles) {
    const fs::path d = fresh_dir("ingest");
    write_file_atomic(d / "b_star", "0 8\n10.0 16.0\n");
    write_file_atomic(d / "a_star", "0 1.0\n1 2.0\n");
    write_file_atomic(d / "neg", "0 1.0\n5.0 -1.0\n");
    write_file_atomic(d / "nonmono", "0 1.0\n2 1.0\n1 1.0\n");
    const IngestResult r = ingest_directory(d, TraceFormat::two_column, 1.0 / 8.0, SourceTag::starlink);
    ASSERT_EQ(r.traces.size(), 2u);
    EXPECT_EQ(r.traces[0].id(), "a_star");
    EXPECT_EQ(r.traces[1].id(), "b_star");
    EXPECT_DOUBLE_EQ(r.traces[1].samples()[1].time_s, 10.0);
    EXPECT_DOUBLE_EQ(r.traces[1].samples()[1].throughput_mbps, 2.0);
    EXPECT_EQ(r.traces[1].source_tag(), SourceTag::starlink);
    ASSERT_EQ(r.rejected.size(), 2u);
    for (const auto& diag : r.rejected) EXPECT_FALSE(diag.reason.empty());
}

TEST(Ingest, MissingOrEmptyDirectoryIsFatal) {
    EXPECT_THROW(ingest_directory(fs::temp_directory_path() / "abrforge_no_such_dir", TraceFormat::two_column, 1.0,
                                  SourceTag::custom),
                 Error);
    const fs::path d = fresh_dir("empty");
    try {
        ingest_directory(d, TraceFormat::two_column, 1.0, SourceTag::custom);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("no traces found"), std::string::npos);
    }
}

TEST(Ingest, ScaleThenInverseRecoversThroughput) {
    Rng rng(11);
    const fs::path d = fresh_dir("roundtrip");
    std::vector<Trace> originals;
    for (int i = 0; i < 10; ++i) originals.push_back(random_trace(rng, "t" + std::to_string(i)));
    for (const double s : {0.125, 3.0, 7.5}) {
        for (const auto& t : originals) {
            std::string text;
            char buf[64];
            const Trace scaled = t.scaled(s);
            for (const auto& smp : scaled.samples()) {
                std::snprintf(buf, sizeof buf, "%.17g %.17g\n", smp.time_s, smp.throughput_mbps);
                text += buf;
            }
            write_file_atomic(d / t.id(), text);
        }
        const auto back = ingest_directory(d, TraceFormat::two_column, 1.0 / s, SourceTag::custom).traces;
        ASSERT_EQ(back.size(), originals.size());
        for (std::size_t i = 0; i < back.size(); ++i) {
            for (std::size_t k = 0; k < back[i].samples().size(); ++k) {
                const double a = back[i].samples()[k].throughput_mbps;
                const double b = originals[i].samples()[k].throughput_mbps;
                EXPECT_LE(std::abs(a - b), 1e-12 * std::max(1.0, std::abs(b)));
            }
        }
    }
}

TEST(Ingest, MahimahiPacketsBecomePerSecondThroughput) {
    const fs::path d = fresh_dir("mm");
    std::string text;
    for (int i = 0; i < 100; ++i) text += std::to_string(i * 10) + "\n";  // 100 packets in second 0
    text += "1500\n";                                                    // one packet in second 1
    write_file_atomic(d / "link", text);
    const auto r = ingest_directory(d, TraceFormat::mahimahi, 1.0, SourceTag::cellular_4g);
    ASSERT_EQ(r.traces.size(), 1u);
    const auto& s = r.traces[0].samples();
    ASSERT_EQ(s.size(), 2u);
    EXPECT_DOUBLE_EQ(s[0].throughput_mbps, 100 * 1500 * 8 / 1e6);
    EXPECT_DOUBLE_EQ(s[1].throughput_mbps, 1500 * 8 / 1e6);
}

TEST(DatasetStats, ConstantHourTrace) {
    TraceDataset ds;
    ds.name = "one";
    ds.train.emplace_back("h", std::vector<TraceSample>{{0.0, 2.0}, {3600.0, 2.0}});
    ds.test.emplace_back("t", std::vector<TraceSample>{{0.0, 1.0}, {1.0, 1.0}});
    const auto st = dataset_stats(ds, Split::train);
    EXPECT_EQ(st.n_traces, 1u);
    EXPECT_DOUBLE_EQ(st.total_hours, 1.0);
    EXPECT_DOUBLE_EQ(st.mean_throughput_mbps, 2.0);
}

TEST(DatasetStats, DurationWeightedAndPermutationInvariant) {
    Rng rng(5);
    std::vector<Trace> traces;
    for (int i = 0; i < 20; ++i) traces.push_back(random_trace(rng, "p" + std::to_string(i)));
    // independent oracle: integrate the step function over [first, last)
    double secs = 0.0, bits = 0.0;
    for (const auto& t : traces) {
        const auto& s = t.samples();
        secs += s.back().time_s - s.front().time_s;
        for (std::size_t i = 0; i + 1 < s.size(); ++i) bits += s[i].throughput_mbps * (s[i + 1].time_s - s[i].time_s);
    }
    const auto a = trace_stats(traces);
    EXPECT_EQ(a.n_traces, 20u);
    EXPECT_NEAR(a.total_hours, secs / 3600.0, 1e-12);
    EXPECT_NEAR(a.mean_throughput_mbps, bits / secs, 1e-9);
    for (int k = 0; k < 5; ++k) {
        rng.shuffle(traces);
        const auto b = trace_stats(traces);
        EXPECT_EQ(b.n_traces, a.n_traces);
        EXPECT_NEAR(b.total_hours, a.total_hours, 1e-12);
        EXPECT_NEAR(b.mean_throughput_mbps, a.mean_throughput_mbps, 1e-12);
    }
}

TEST(DatasetStats, EmptySplitIsAnError) {
    TraceDataset ds;
    ds.train.emplace_back("h", std::vector<TraceSample>{{0.0, 2.0}, {1.0, 2.0}});
    EXPECT_THROW(dataset_stats(ds, Split::test), Error);
}

TEST(SplitDataset, DeterministicDisjointAndSized) {
    Rng rng(9);
    std::vector<Trace> traces;
    for (int i = 0; i < 10; ++i) traces.push_back(random_trace(rng, "s" + std::to_string(i)));
    const auto [tr1, te1] = split_dataset(traces, 0.5, 7);
    const auto [tr2, te2] = split_dataset(traces, 0.5, 7);
    EXPECT_EQ(tr1.size(), 5u);
    EXPECT_EQ(te1.size(), 5u);
    std::vector<std::string> a, b;
    for (const auto& t : te1) a.push_back(t.id());
    for (const auto& t : te2) b.push_back(t.id());
    EXPECT_EQ(a, b);
    for (const auto& t : tr1) EXPECT_EQ(std::find(a.begin(), a.end(), t.id()), a.end());
    for (double f : {0.1, 0.25, 0.33, 0.9}) {
        const auto [tr, te] = split_dataset(traces, f, 1);
        EXPECT_EQ(tr.size() + te.size(), 10u);
        EXPECT_LE(std::abs(static_cast<double>(te.size()) - f * 10.0), 1.0);
    }
    EXPECT_THROW(split_dataset({traces[0]}, 0.5, 0), Error);
    EXPECT_THROW(split_dataset(traces, 0.0, 0), Error);
    EXPECT_THROW(split_dataset(traces, 1.0, 0), Error);
}

TEST(Manifest, RoundTripAndValidation) {
    const fs::path d = fresh_dir("manifest");
    fs::create_directories(d / "traces");
    write_file_atomic(d / "traces" / "a", "0 1\n1 2\n");
    write_file_atomic(d / "traces" / "b", "0 3\n2 4\n");
    DatasetManifest m;
    m.name = "tiny";
    m.trace_dir = "traces";
    m.scale_factor = 0.5;
    m.train = {"a"};
    m.test = {"b"};
    write_dataset_manifest(d / "m.json", m);
    const auto back = read_dataset_manifest(d / "m.json");
    EXPECT_EQ(back.name, "tiny");
    EXPECT_EQ(back.train, m.train);
    const TraceDataset ds = load_dataset(d / "m.json");
    EXPECT_DOUBLE_EQ(ds.test[0].samples()[1].throughput_mbps, 2.0);

    m.test = {"a"};
    write_dataset_manifest(d / "bad.json", m);
    EXPECT_THROW(load_dataset(d / "bad.json"), Error);
}

TEST(ReferenceProfiles, MatchPublishedCorpusSizes) {
    const auto& fcc = reference_profile("fcc");
    EXPECT_EQ(fcc.train_traces, 85u);
    EXPECT_EQ(fcc.test_traces, 290u);
    EXPECT_DOUBLE_EQ(fcc.test_hours, 25.7);
    EXPECT_DOUBLE_EQ(fcc.mean_throughput_mbps, 1.3);
    EXPECT_EQ(fcc.train_epochs, 40000u);
    EXPECT_EQ(fcc.test_interval, 500u);
    const auto& sl = reference_profile("starlink");
    EXPECT_EQ(sl.train_traces, 13u);
    EXPECT_DOUBLE_EQ(sl.train_hours, 0.9);
    EXPECT_DOUBLE_EQ(sl.scale_factor, 0.125);
    EXPECT_EQ(sl.train_epochs, 4000u);
    EXPECT_EQ(sl.test_interval, 100u);
    EXPECT_THROW(reference_profile("dsl"), Error);
}

TEST(Subsample, ReachesRequestedHours) {
    Rng rng(2);
    std::vector<Trace> traces;
    for (int i = 0; i < 30; ++i) {
        traces.emplace_back("h" + std::to_string(i), std::vector<TraceSample>{{0.0, 1.0}, {600.0, 1.0}});
    }
    const auto sub = subsample_to_hours(traces, 1.0, 4);
    EXPECT_GE(trace_stats(sub).total_hours, 1.0);
    EXPECT_LT(trace_stats(sub).total_hours, 1.0 + 600.0 / 3600.0);
    const auto again = subsample_to_hours(traces, 1.0, 4);
    ASSERT_EQ(sub.size(), again.size());
    for (std::size_t i = 0; i < sub.size(); ++i) EXPECT_EQ(sub[i].id(), again[i].id());
}
