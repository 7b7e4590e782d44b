#include "abrforge/generator.hpp"
#include "abrforge/util/error.hpp"
#include "abrforge/util/files.hpp"
#include "abrforge/util/hash.hpp"

// Must match the library's configuration of httplib.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"
#include "json.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <thread>

using namespace abrforge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = ABRFORGE_SOURCE_DIR;

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("abrforge_gen_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

// Local stand-in for an OpenAI-compatible endpoint.
class MockEndpoint {
public:
    explicit MockEndpoint(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/chat/completions", handler);
        server_.Post("/v1/embeddings", handler);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockEndpoint() {
        server_.stop();
        thread_.join();
    }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string completion_body(const std::string& content) {
    return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump();
}

LiveClientConfig fast_config(const std::string& base) {
    LiveClientConfig c;
    c.base_url = base;
    c.api_key = "test-key";
    c.max_retries = 2;
    c.initial_backoff_ms = 1;
    c.timeout_s = 5;
    return c;
}

}  // namespace

TEST(RenderPrompt, StateIncludesNormalizationNetworkOmitsIt) {
    const PromptTemplate st = load_prompt_template(kRoot / "prompts", CandidateKind::state);
    const PromptTemplate nt = load_prompt_template(kRoot / "prompts", CandidateKind::network);
    const std::string sp = render_prompt(CandidateKind::state, st);
    const std::string np = render_prompt(CandidateKind::network, nt);
    ASSERT_TRUE(st.normalization_directive.has_value());
    EXPECT_FALSE(nt.normalization_directive.has_value());
    EXPECT_NE(sp.find(st.normalization_directive->substr(0, 40)), std::string::npos);
    EXPECT_EQ(np.find("normaliz"), std::string::npos);

    // section order: role, base code, reasoning, normalization, output format
    const auto pos = [&](const std::string& s) { return sp.find(s.substr(0, 30)); };
    EXPECT_LT(pos(st.role), pos(st.base_code));
    EXPECT_LT(pos(st.base_code), pos(st.cot_directive));
    EXPECT_LT(pos(st.cot_directive), pos(*st.normalization_directive));
    EXPECT_LT(pos(*st.normalization_directive), pos(st.output_format));

    EXPECT_EQ(sp, render_prompt(CandidateKind::state, load_prompt_template(kRoot / "prompts", CandidateKind::state)));
    EXPECT_THROW(render_prompt(CandidateKind::network, st), Error);
}

TEST(RenderPrompt, ShippedPromptsArePinned) {
    // Update these only together with a deliberate edit of prompts/.
    const std::string sp = render_prompt(CandidateKind::state, load_prompt_template(kRoot / "prompts", CandidateKind::state));
    const std::string np =
        render_prompt(CandidateKind::network, load_prompt_template(kRoot / "prompts", CandidateKind::network));
    EXPECT_EQ(prompt_id(sp), sha256_hex(sp).substr(0, 12));
    EXPECT_EQ(prompt_id(sp), "cfbb6415cf91");
    EXPECT_EQ(prompt_id(np), "334679e9437a");
}

TEST(RenderPrompt, ChangesOnlyWithTemplateFields) {
    PromptTemplate t = load_prompt_template(kRoot / "prompts", CandidateKind::state);
    const std::string base = render_prompt(CandidateKind::state, t);
    t.cot_directive += " Be brief.";
    EXPECT_NE(render_prompt(CandidateKind::state, t), base);
    t.normalization_directive.reset();
    EXPECT_THROW(t.validate(), Error);
}

TEST(ExtractCode, LastFencedBlockWins) {
    EXPECT_EQ(extract_code("Here is my idea.\n```\nfn f() {}\n```\n"), "fn f() {}\n");
    EXPECT_EQ(extract_code("Sketch:\n```python\nidea = 1\n```\nFinal:\n```\nfn final() {}\n```\nDone."),
              "fn final() {}\n");
    EXPECT_FALSE(extract_code("Just prose, no code at all.").has_value());
    EXPECT_FALSE(extract_code("```\nunterminated").has_value());
}

TEST(ExtractCode, RecordedSampleResponsesFollowTheConvention) {
    for (const auto& e : fs::directory_iterator(kRoot / "corpus" / "responses" / "state")) {
        const std::string text = read_file(e.path());
        const auto code = extract_code(text);
        if (!code) continue;
        EXPECT_EQ(code->find("```"), std::string::npos) << e.path();
        EXPECT_NE(text.rfind(*code), std::string::npos);
    }
}

TEST(GenerateBatch, ReplayIsDeterministicAndAccountsForEveryRequest) {
    const PromptTemplate t = load_prompt_template(kRoot / "prompts", CandidateKind::state);
    GenerationOptions opts;
    ReplayClient a(kRoot / "corpus" / "replay" / "state.jsonl");
    ReplayClient b(kRoot / "corpus" / "replay" / "state.jsonl");
    const GenerationBatch x = generate_batch(a, CandidateKind::state, 50, t, opts);
    const GenerationBatch y = generate_batch(b, CandidateKind::state, 50, t, opts);
    EXPECT_EQ(batch_to_json(x), batch_to_json(y));
    EXPECT_EQ(x.candidates.size() + x.failures, 50u);
    EXPECT_EQ(x.batch_id, "state-recorded-s0");
    EXPECT_EQ(x.candidates.front().id, "state-recorded-s0-0000");
    for (const auto& c : x.candidates) {
        EXPECT_EQ(c.provenance.batch_id, x.batch_id);
        EXPECT_EQ(c.provenance.model, "recorded");
    }

    EXPECT_THROW(generate_batch(a, CandidateKind::state, 0, t, opts), Error);
    opts.seed = 99;  // never recorded
    EXPECT_THROW(generate_batch(a, CandidateKind::state, 1, t, opts), InfrastructureError);
}

TEST(GenerateBatch, RecordThenReplayIsBitIdentical) {
    const fs::path d = fresh_dir("closure");
    const PromptTemplate t = load_prompt_template(kRoot / "prompts", CandidateKind::network);
    GenerationOptions opts;
    opts.seed = 3;
    auto dir = std::make_shared<DirectoryClient>(kRoot / "corpus" / "responses" / "network");
    RecordingClient rec(dir, d / "store.jsonl");
    const GenerationBatch recorded = generate_batch(rec, CandidateKind::network, 50, t, opts);
    ReplayClient rep(d / "store.jsonl");
    const GenerationBatch replayed = generate_batch(rep, CandidateKind::network, 50, t, opts);
    EXPECT_EQ(batch_to_json(recorded), batch_to_json(replayed));
    ASSERT_EQ(recorded.candidates.size(), replayed.candidates.size());
    for (std::size_t i = 0; i < recorded.candidates.size(); ++i) {
        EXPECT_EQ(recorded.candidates[i].source_text, replayed.candidates[i].source_text);
    }
}

TEST(RecordStore, AppendOnlyAndReloadable) {
    const fs::path d = fresh_dir("store");
    CompletionRequest r{"prompt", "m", 1.0, 5};
    {
        RecordStore s(d / "s.jsonl");
        s.append(r, "first");
        EXPECT_EQ(s.find(r), "first");
    }
    RecordStore again(d / "s.jsonl");
    EXPECT_EQ(again.size(), 1u);
    EXPECT_EQ(again.find(r), "first");
    r.seed = 6;
    EXPECT_FALSE(again.find(r).has_value());
    write_file_atomic(d / "bad.jsonl", "{not json}\n");
    EXPECT_THROW(RecordStore(d / "bad.jsonl"), InfrastructureError);
}

TEST(LiveClient, SendsOpenAiStyleRequest) {
    json seen;
    std::string auth;
    MockEndpoint server([&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        res.set_content(completion_body("Idea.\n```\nfn state() {}\n```\n"), "application/json");
    });
    LiveClient c(fast_config(server.base_url()));
    const std::string out = c.complete({"the prompt", "some-model", 0.7, 12});
    EXPECT_EQ(extract_code(out), "fn state() {}\n");
    EXPECT_EQ(seen["model"], "some-model");
    EXPECT_EQ(seen["messages"][0]["content"], "the prompt");
    EXPECT_DOUBLE_EQ(seen["temperature"].get<double>(), 0.7);
    EXPECT_EQ(seen["seed"], 12);
    EXPECT_EQ(auth, "Bearer test-key");
}

TEST(LiveClient, RetriesTransientErrorsThenGivesUp) {
    std::atomic<int> calls{0};
    MockEndpoint flaky([&](const httplib::Request&, httplib::Response& res) {
        if (++calls < 3) {
            res.status = 503;
            return;
        }
        res.set_content(completion_body("ok"), "application/json");
    });
    LiveClient c(fast_config(flaky.base_url()));
    EXPECT_EQ(c.complete({"p", "m", 1.0, 0}), "ok");
    EXPECT_EQ(calls.load(), 3);

    std::atomic<int> down_calls{0};
    MockEndpoint down([&](const httplib::Request&, httplib::Response& res) {
        ++down_calls;
        res.status = 500;
    });
    LiveClient d(fast_config(down.base_url()));
    EXPECT_THROW(d.complete({"p", "m", 1.0, 0}), TransportError);
    EXPECT_EQ(down_calls.load(), 3);  // first attempt plus two retries

    // transport failures are counted as batch failures, not fatal
    const PromptTemplate t = load_prompt_template(kRoot / "prompts", CandidateKind::network);
    const GenerationBatch b = generate_batch(d, CandidateKind::network, 2, t, {});
    EXPECT_EQ(b.failures, 2u);
    EXPECT_TRUE(b.candidates.empty());
}

TEST(LiveClient, ClientErrorsAreNotRetried) {
    std::atomic<int> calls{0};
    MockEndpoint server([&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 401;
        res.set_content("bad key", "text/plain");
    });
    LiveClient c(fast_config(server.base_url()));
    EXPECT_THROW(c.complete({"p", "m", 1.0, 0}), TransportError);
    EXPECT_EQ(calls.load(), 1);
}

TEST(Embeddings, HashEmbedderIsDeterministicAndNormalized) {
    HashEmbedder e(32);
    const auto a = e.embed("fn state(x) { return x / 8.0; }");
    const auto b = e.embed("fn state(x) { return x / 8.0; }");
    EXPECT_EQ(a, b);
    double norm = 0.0;
    for (double v : a) norm += v * v;
    EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-12);
    EXPECT_NE(a, e.embed("fn state(y) { return log(y); }"));
}

TEST(Embeddings, CachedEmbedderRecordsAndReplays) {
    const fs::path d = fresh_dir("emb");
    {
        CachedEmbedder rec(std::make_shared<HashEmbedder>(16), d / "emb.jsonl");
        rec.embed("alpha");
    }
    CachedEmbedder rep(nullptr, d / "emb.jsonl");
    EXPECT_EQ(rep.embed("alpha"), HashEmbedder(16).embed("alpha"));
    EXPECT_THROW(rep.embed("beta"), InfrastructureError);
}
