#include "abrforge/filters.hpp"
#include "abrforge/util/error.hpp"
#include "abrforge/util/files.hpp"

#include "json.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <set>

using namespace abrforge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = ABRFORGE_SOURCE_DIR;

constexpr const char* kSig =
    "fn state(throughput_mbps, download_time_s, next_chunk_sizes_bytes, buffer_s, chunks_remaining, last_level, "
    "buffer_history_s) {\n";

CandidateDesign state_candidate(const std::string& id, const std::string& body) {
    CandidateDesign c;
    c.id = id;
    c.kind = CandidateKind::state;
    c.source_text = std::string(kSig) + body + "}\n";
    return c;
}

GenerationBatch fixture_batch() {
    ReplayClient client(kRoot / "corpus" / "replay" / "state.jsonl");
    return generate_batch(client, CandidateKind::state, 50,
                          load_prompt_template(kRoot / "prompts", CandidateKind::state), {});
}

std::set<std::size_t> indices_in(const json& manifest, std::initializer_list<const char*> categories) {
    std::set<std::size_t> out;
    for (const auto& r : manifest.at("responses")) {
        for (const char* c : categories) {
            if (r.at("category") == c) out.insert(r.at("index").get<std::size_t>());
        }
    }
    return out;
}

std::size_t index_of(const std::string& id) { return std::stoul(id.substr(id.rfind('-') + 1)); }

}  // namespace

TEST(CompileCheck, BuiltinAndBrokenExamples) {
    const CheckContext ctx;
    EXPECT_TRUE(compile_check(builtin("pensieve_original"), ctx).passed);
    EXPECT_TRUE(compile_check(builtin("original_a2c"), ctx).passed);
    const auto bad = compile_check(state_candidate("u", "    return [undefined_thing];\n"), ctx);
    EXPECT_FALSE(bad.passed);
    EXPECT_NE(bad.reason.find("execution error"), std::string::npos);
    EXPECT_FALSE(bad.infrastructure_error);
}

TEST(NormalizationCheck, RawBytesFailPensieveAndConstantPass) {
    const CheckContext ctx;
    const FuzzConfig cfg;
    EXPECT_DOUBLE_EQ(cfg.threshold, 100.0);
    const auto raw = normalization_check(state_candidate("raw", "    return [next_chunk_sizes_bytes];\n"), cfg, ctx);
    EXPECT_FALSE(raw.passed);
    ASSERT_TRUE(raw.offending_value.has_value());
    EXPECT_GT(std::abs(*raw.offending_value), cfg.threshold);
    const auto top = normalization_check(state_candidate("top", "    return [next_chunk_sizes_bytes[5]];\n"), cfg, ctx);
    ASSERT_TRUE(top.offending_value.has_value());
    EXPECT_GT(*top.offending_value, 1e6);
    EXPECT_TRUE(normalization_check(builtin("pensieve_original"), cfg, ctx).passed);
    EXPECT_TRUE(normalization_check(state_candidate("zero", "    return [0.0, 0.0];\n"), cfg, ctx).passed);

    // absolute value, and non-finite outputs fail
    EXPECT_FALSE(normalization_check(state_candidate("neg", "    return [-1000.0];\n"), cfg, ctx).passed);
    EXPECT_FALSE(normalization_check(state_candidate("inf", "    return [log(buffer_s * 0.0)];\n"), cfg, ctx).passed);
}

TEST(NormalizationCheck, ExecutionErrorUnderFuzzIsReported) {
    // passes the probe but asks for a negative window once chunks_remaining hits 0
    const auto c =
        state_candidate("late", "    let w = tail(throughput_mbps, chunks_remaining - 1);\n    return [w / 100.0];\n");
    const CheckContext ctx;
    ASSERT_TRUE(compile_check(c, ctx).passed);
    FuzzConfig cfg;
    cfg.n_samples = 400;
    const auto r = normalization_check(c, cfg, ctx);
    EXPECT_FALSE(r.passed);
    EXPECT_NE(r.reason.find("under fuzz"), std::string::npos) << r.reason;
}

TEST(NormalizationCheck, DeterministicPerSeedAndMonotoneInThreshold) {
    GenerationBatch b = fixture_batch();
    const CheckContext ctx;
    std::vector<CandidateDesign> compiled;
    for (const auto& c : b.candidates) {
        if (compile_check(c, ctx).passed) compiled.push_back(c);
    }
    ASSERT_EQ(compiled.size(), 30u);
    std::vector<bool> prev(compiled.size(), false);
    for (const double t : {1.0, 10.0, 100.0, 1e3, 1e6, 1e20}) {
        FuzzConfig cfg;
        cfg.threshold = t;
        for (std::size_t i = 0; i < compiled.size(); ++i) {
            const bool pass = normalization_check(compiled[i], cfg, ctx).passed;
            EXPECT_EQ(pass, normalization_check(compiled[i], cfg, ctx).passed);
            if (prev[i]) EXPECT_TRUE(pass) << compiled[i].id << " flipped to fail at T=" << t;
            prev[i] = pass;
        }
    }
}

TEST(Prefilter, FixtureCorpusMatchesManifest) {
    const json manifest = json::parse(read_file(kRoot / "corpus" / "fixtures" / "state_manifest.json"));
    GenerationBatch b = fixture_batch();
    const FilterReport r = run_prefilter(b, FuzzConfig{}, CheckContext{});
    EXPECT_EQ(r.total, manifest.at("total").get<std::size_t>());
    EXPECT_EQ(r.compilable, manifest.at("compilable").get<std::size_t>());
    ASSERT_TRUE(r.well_normalized.has_value());
    EXPECT_EQ(*r.well_normalized, manifest.at("well_normalized").get<std::size_t>());
    EXPECT_EQ(r.total, 50u);
    EXPECT_EQ(r.compilable, 30u);
    EXPECT_EQ(*r.well_normalized, 18u);

    std::set<std::size_t> passed, compiled;
    for (const auto& c : b.candidates) {
        if (c.status == CandidateStatus::normalized) passed.insert(index_of(c.id));
        if (c.status != CandidateStatus::rejected) compiled.insert(index_of(c.id));
    }
    for (const auto& o : r.outcomes) {
        if (o.compiled) compiled.insert(index_of(o.id));
    }
    EXPECT_EQ(passed, indices_in(manifest, {"clean"}));
    EXPECT_EQ(compiled, indices_in(manifest, {"clean", "unnormalized"}));
    EXPECT_EQ(r.to_table("fixture").find("30 (60.0%)") != std::string::npos, true);
}

TEST(Prefilter, SubsetLawReasonsAndOrdering) {
    GenerationBatch b = fixture_batch();
    const FilterReport r = run_prefilter(b, FuzzConfig{}, CheckContext{});
    EXPECT_LE(*r.well_normalized, r.compilable);
    EXPECT_LE(r.compilable, r.total);
    EXPECT_EQ(r.outcomes.size(), r.total);
    for (const auto& o : r.outcomes) {
        if (!o.compiled) {
            EXPECT_FALSE(o.normalized.has_value()) << o.id << " fuzzed after failing compile";
            EXPECT_FALSE(o.reason.empty());
        } else if (!o.normalized.value()) {
            EXPECT_FALSE(o.reason.empty());
        }
    }
    for (const auto& c : b.candidates) {
        if (c.status == CandidateStatus::rejected) EXPECT_TRUE(c.rejection_reason.has_value());
    }
}

TEST(Prefilter, DeterministicAcrossRunsAndWorkerCounts) {
    GenerationBatch a = fixture_batch();
    GenerationBatch b = fixture_batch();
    PrefilterOptions par;
    par.workers = 4;
    const FilterReport ra = run_prefilter(a, FuzzConfig{}, CheckContext{});
    const FilterReport rb = run_prefilter(b, FuzzConfig{}, CheckContext{}, par);
    EXPECT_EQ(ra.to_json(), rb.to_json());
}

TEST(Prefilter, NetworkBatchHasNoNormalizationColumn) {
    ReplayClient client(kRoot / "corpus" / "replay" / "network.jsonl");
    GenerationBatch b = generate_batch(client, CandidateKind::network, 50,
                                       load_prompt_template(kRoot / "prompts", CandidateKind::network), {});
    const FilterReport r = run_prefilter(b, FuzzConfig{}, CheckContext{});
    const json manifest = json::parse(read_file(kRoot / "corpus" / "fixtures" / "network_manifest.json"));
    EXPECT_EQ(r.total, 50u);
    EXPECT_EQ(r.compilable, manifest.at("compilable").get<std::size_t>());
    EXPECT_FALSE(r.well_normalized.has_value());
    EXPECT_NE(r.to_table("nets").find("n/a"), std::string::npos);
}

TEST(Prefilter, InfrastructureErrorsRetriedOnceThenFlagged) {
    std::vector<CandidateDesign> cands = {state_candidate("flaky", "    return [buffer_s / 60.0];\n"),
                                          state_candidate("down", "    return [buffer_s / 60.0];\n"),
                                          state_candidate("fine", "    return [buffer_s / 60.0];\n")};
    std::map<std::string, int> attempts;
    std::mutex m;
    CheckContext ctx;
    ctx.before_attempt = [&](const CandidateDesign& c) {
        std::lock_guard lock(m);
        const int n = ++attempts[c.id];
        if (c.id == "flaky" && n == 1) throw InfrastructureError("sandbox worker crashed");
        if (c.id == "down") throw InfrastructureError("sandbox worker crashed");
    };
    auto copy = cands;
    const FilterReport r = run_prefilter(copy, FuzzConfig{}, ctx);
    EXPECT_EQ(r.total, 3u);
    EXPECT_EQ(r.compilable, 2u);
    EXPECT_EQ(r.infrastructure_errors, 1u);
    EXPECT_EQ(attempts["down"], 2);

    attempts.clear();
    copy = cands;
    PrefilterOptions excl;
    excl.exclude_infrastructure_errors = true;
    const FilterReport rx = run_prefilter(copy, FuzzConfig{}, ctx, excl);
    EXPECT_EQ(rx.total, 2u);
    EXPECT_EQ(rx.compilable, 2u);
    EXPECT_EQ(*rx.well_normalized, 2u);
}

TEST(FilterReport, PublishedTableFormatting) {
    FilterReport r;
    r.total = 3000;
    r.compilable = 1237;
    r.well_normalized = 822;
    const std::string t = r.to_table("w/ GPT-3.5");
    EXPECT_NE(t.find("3,000"), std::string::npos);
    EXPECT_NE(t.find("1,237 (41.2%)"), std::string::npos);
    EXPECT_NE(t.find("822 (27.4%)"), std::string::npos);
    r.compilable = 2059;
    r.well_normalized = 1505;
    EXPECT_NE(r.to_table("w/ GPT-4").find("2,059 (68.6%)"), std::string::npos);
    EXPECT_NE(r.to_table("w/ GPT-4").find("1,505 (50.2%)"), std::string::npos);
}

TEST(FuzzConfig, Validation) {
    FuzzConfig c;
    c.n_samples = 0;
    EXPECT_THROW(c.validate(), Error);
    c.n_samples = 1;
    c.threshold = 0.0;
    EXPECT_THROW(c.validate(), Error);
}
