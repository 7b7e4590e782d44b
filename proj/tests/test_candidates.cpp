#include "abrforge/candidate_model.hpp"
#include "abrforge/filters.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <set>

using namespace abrforge;
using script::FailureKind;

namespace {

CandidateDesign state_candidate(const std::string& id, const std::string& body) {
    CandidateDesign c;
    c.id = id;
    c.kind = CandidateKind::state;
    c.source_text = "fn state(tput, dl, sizes, buffer, remaining, last, bhist) {\n" + body + "\n}\n";
    return c;
}

CandidateDesign network_candidate(const std::string& id, const std::string& body) {
    CandidateDesign c;
    c.id = id;
    c.kind = CandidateKind::network;
    c.source_text = "import nn;\nfn network(channels, width, n_actions) {\n" + body + "\n}\n";
    return c;
}

StreamObservation first_observation() {
    static const Trace trace("flat", {{0.0, 3.0}, {1.0, 3.0}}, SourceTag::custom);
    static const BitrateLadder ladder = BitrateLadder::low();
    static const VideoManifest manifest = synth_manifest(ladder, 48, 4.0, 0.1, 1);
    Session s(trace, manifest, ladder);
    return s.observation();
}

FailureKind failure_of(const CandidateDesign& c, const StreamObservation& obs) {
    try {
        execute_state(c, obs, SandboxPolicy{});
    } catch (const script::ScriptError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected failure";
    return FailureKind::invalid_output;
}

}  // namespace

TEST(Candidate, StatusMachine) {
    CandidateDesign s = state_candidate("s", "return 0;");
    s.advance(CandidateStatus::compiled);
    s.advance(CandidateStatus::normalized);
    s.advance(CandidateStatus::trained);
    s.advance(CandidateStatus::scored);
    EXPECT_THROW(s.advance(CandidateStatus::rejected), Error);

    CandidateDesign n = network_candidate("n", "return 0;");
    n.advance(CandidateStatus::compiled);
    EXPECT_THROW(n.advance(CandidateStatus::normalized), Error);
    n.advance(CandidateStatus::trained);

    CandidateDesign r = state_candidate("r", "return 0;");
    EXPECT_THROW(r.advance(CandidateStatus::trained), Error);
    r.reject("execution error");
    EXPECT_EQ(r.rejection_reason, "execution error");
    EXPECT_THROW(r.advance(CandidateStatus::compiled), Error);
}

TEST(Candidate, SandboxPolicyValidation) {
    SandboxPolicy p;
    EXPECT_NO_THROW(p.validate());
    p.network_access = true;
    EXPECT_THROW(p.validate(), Error);
    p = SandboxPolicy{};
    p.time_limit_s = 0;
    EXPECT_THROW(p.validate(), Error);
}

TEST(Candidate, PensieveOriginalOnFirstObservation) {
    const StreamObservation obs = first_observation();
    const StateTensor t = execute_state(builtin(kOriginalStateId), obs, SandboxPolicy{});
    ASSERT_EQ(t.shape(), (std::pair<std::size_t, std::size_t>{6, 8}));
    // Scalars sit in the last column, histories are zero-padded.
    const BitrateLadder ladder = BitrateLadder::low();
    EXPECT_DOUBLE_EQ(t.at(0, 7), ladder.levels_kbps[obs.last_level] / ladder.max_kbps());
    EXPECT_DOUBLE_EQ(t.at(1, 7), obs.buffer_s / 10.0);
    for (std::size_t w = 0; w < 8; ++w) {
        EXPECT_EQ(t.at(2, w), 0.0);
        EXPECT_EQ(t.at(3, w), 0.0);
    }
    for (std::size_t l = 0; l < 6; ++l) EXPECT_DOUBLE_EQ(t.at(4, 2 + l), obs.next_sizes_bytes[l] / 1e6);
    EXPECT_DOUBLE_EQ(t.at(5, 7), 1.0);
}

TEST(Candidate, BufferRowIsScaledBuffer) {
    StreamObservation obs = first_observation();
    obs.buffer_s = 17.5;
    const StateTensor t = execute_state(builtin(kOriginalStateId), obs, SandboxPolicy{});
    EXPECT_DOUBLE_EQ(t.at(1, 7), 1.75);
}

TEST(Candidate, StructuredFailures) {
    const StreamObservation obs = first_observation();
    EXPECT_EQ(failure_of(state_candidate("a", "return buffer / removed_variable;"), obs), FailureKind::execution_error);
    EXPECT_EQ(failure_of(state_candidate("b", "return \"text\";"), obs), FailureKind::non_numeric_output);
    EXPECT_EQ(failure_of(state_candidate("c", "return [];"), obs), FailureKind::invalid_output);
    EXPECT_EQ(failure_of(state_candidate("d", "return [1, 2"), obs), FailureKind::syntax_error);
    CandidateDesign imp = state_candidate("e", "return 1;");
    imp.source_text = "import os;\n" + imp.source_text;
    EXPECT_EQ(failure_of(imp, obs), FailureKind::disallowed_import);
    EXPECT_EQ(failure_of(state_candidate("f", "let x = 0; while true { x += 1; } return x;"), obs),
              FailureKind::timeout);
    EXPECT_EQ(failure_of(state_candidate("g", "return zeros(100000000);"), obs), FailureKind::memory_limit);
}

TEST(Candidate, RawBytesStateProducesHugeValues) {
    const StateTensor t = execute_state(state_candidate("raw", "return [buffer, sizes];"), first_observation(),
                                        SandboxPolicy{});
    double peak = 0;
    for (double v : t.values) peak = std::max(peak, v);
    EXPECT_GT(peak, 1e5);
}

TEST(Candidate, ShapeDriftIsRejected) {
    CandidateDesign c = state_candidate("drift", "if buffer > 5 { return [1, 2, 3]; } return [1, 2];");
    StateFunction fn(c, SandboxPolicy{}, BitrateLadder::low(), SimConfig{});
    StreamObservation obs = first_observation();
    fn(obs);
    obs.buffer_s = 10;
    try {
        fn(obs);
        FAIL();
    } catch (const script::ScriptError& e) {
        EXPECT_EQ(e.kind(), FailureKind::shape_drift);
    }
}

TEST(Candidate, SandboxDoesNotMutateObservation) {
    CandidateDesign c = state_candidate("mut", "tput[0] = 1000; sizes += 5; buffer = -1; return tput;");
    StreamObservation obs = first_observation();
    obs.throughput_hist_mbps[0] = 2.0;
    const StreamObservation before = obs;
    execute_state(c, obs, SandboxPolicy{});
    EXPECT_EQ(obs.throughput_hist_mbps, before.throughput_hist_mbps);
    EXPECT_EQ(obs.next_sizes_bytes, before.next_sizes_bytes);
    EXPECT_EQ(obs.buffer_s, before.buffer_s);
}

TEST(Candidate, BuiltinCorpus) {
    const auto corpus = load_builtin_corpus();
    EXPECT_GE(corpus.size(), 11u);
    std::set<std::string> ids;
    for (const auto& c : corpus) ids.insert(c.id);
    EXPECT_EQ(ids.size(), corpus.size());
    for (const char* id : {"pensieve_original", "fcc_symmetric_range", "starlink_reduced", "starlink_smoothed",
                           "cellular_regression_trend", "buffer_trend_savgol", "buffer_difference", "original_a2c",
                           "wide_leaky", "recurrent_gru", "lstm_memory", "shared_trunk"}) {
        EXPECT_TRUE(ids.count(id)) << id;
    }
}

TEST(Candidate, SymmetricStateStaysInRange) {
    CheckContext ctx;
    FuzzConfig cfg;
    cfg.n_samples = 300;
    cfg.threshold = 1.0;
    EXPECT_TRUE(normalization_check(builtin("fcc_symmetric_range"), cfg, ctx).passed);
}

TEST(Candidate, ReducedStateDropsTwoRows) {
    const StateTensor full = execute_state(builtin(kOriginalStateId), first_observation(), SandboxPolicy{});
    const StateTensor reduced = execute_state(builtin("starlink_reduced"), first_observation(), SandboxPolicy{});
    EXPECT_EQ(reduced.channels + 2, full.channels);
}

TEST(Candidate, NetworkInstantiation) {
    auto net = instantiate_network(builtin(kOriginalNetworkId), {6, 8}, 6, 1, SandboxPolicy{});
    EXPECT_EQ(probe_policy(*net), "");
    auto again = instantiate_network(builtin(kOriginalNetworkId), {6, 8}, 6, 1, SandboxPolicy{});
    EXPECT_EQ(net->parameters(), again->parameters());
    auto other = instantiate_network(builtin(kOriginalNetworkId), {6, 8}, 6, 2, SandboxPolicy{});
    EXPECT_NE(net->parameters(), other->parameters());
    try {
        instantiate_network(network_candidate("five", "return nn.actor_critic(nn.flatten(), [8], \"relu\", 5);"),
                            {6, 8}, 6, 1, SandboxPolicy{});
        FAIL();
    } catch (const script::ScriptError& e) {
        EXPECT_EQ(e.kind(), FailureKind::action_mismatch);
        EXPECT_EQ(script::label(e.kind()), "action-dimension mismatch");
    }
    try {
        instantiate_network(network_candidate("bad", "return 3;"), {6, 8}, 6, 1, SandboxPolicy{});
        FAIL();
    } catch (const script::ScriptError& e) {
        EXPECT_EQ(e.kind(), FailureKind::invalid_output);
    }
}

TEST(Candidate, CorpusDirectoryRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "abrforge_corpus_rt";
    std::filesystem::remove_all(dir);
    auto corpus = load_builtin_corpus();
    corpus[0].reject("manual rejection");
    for (const auto& c : corpus) save_candidate(dir, c);
    const auto loaded = load_corpus_dir(dir);
    ASSERT_EQ(loaded.size(), corpus.size());
    for (const auto& l : loaded) {
        const auto it = std::find_if(corpus.begin(), corpus.end(), [&](const auto& c) { return c.id == l.id; });
        ASSERT_NE(it, corpus.end());
        EXPECT_EQ(l.source_text, it->source_text);
        EXPECT_EQ(l.kind, it->kind);
        EXPECT_EQ(l.status, it->status);
        EXPECT_EQ(l.rejection_reason, it->rejection_reason);
    }
    std::filesystem::remove_all(dir);
}
