#pragma once

// Prompt rendering, code extraction and the completion clients used to
// produce candidate batches. Clients run live (HTTP), record (wrap another
// client and persist every response) or replay (serve persisted responses,
// no network access).

#include "abrforge/candidate_model.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace abrforge {

struct PromptTemplate {
    CandidateKind kind = CandidateKind::state;
    std::string role;
    std::string base_code;
    std::string cot_directive;
    std::optional<std::string> normalization_directive;  // states only
    std::string output_format;

    // Throws Error if a section is empty or the normalization directive is
    // present for networks / missing for states.
    void validate() const;
};

// Reads <dir>/<kind>/{role,base_code,cot,normalization,output_format}.txt.
PromptTemplate load_prompt_template(const std::filesystem::path& dir, CandidateKind kind);

// Sections in order: role, base code, reasoning directive, normalization
// directive (states only), output format.
std::string render_prompt(CandidateKind kind, const PromptTemplate& tmpl);
// Short content hash identifying a rendered prompt.
std::string prompt_id(const std::string& prompt);

// Contents of the last fenced code block, fences stripped; nullopt when the
// response holds no complete fenced block.
std::optional<std::string> extract_code(const std::string& response);

enum class ClientMode { live, record, replay };
std::string to_string(ClientMode m);
ClientMode client_mode_from_string(const std::string& s);

struct CompletionRequest {
    std::string prompt;
    std::string model;
    double temperature = 1.0;
    std::uint64_t seed = 0;
};

// Transport failures of a live endpoint after retries are exhausted.
class TransportError : public InfrastructureError {
public:
    using InfrastructureError::InfrastructureError;
};

class LLMClient {
public:
    virtual ~LLMClient() = default;
    virtual std::string complete(const CompletionRequest& request) = 0;
    virtual ClientMode mode() const = 0;
};

struct LiveClientConfig {
    std::string base_url;  // e.g. https://api.example.com/v1
    std::string api_key;
    int max_retries = 3;
    int initial_backoff_ms = 500;
    int timeout_s = 120;

    // Reads ABRFORGE_API_BASE and ABRFORGE_API_KEY.
    static LiveClientConfig from_env();
};

// OpenAI-compatible chat completions endpoint.
class LiveClient : public LLMClient {
public:
    explicit LiveClient(LiveClientConfig config);
    std::string complete(const CompletionRequest& request) override;
    ClientMode mode() const override { return ClientMode::live; }

private:
    LiveClientConfig config_;
};

// Serves the files of a directory (sorted by name) in request order. Used to
// turn hand-collected responses into a record store.
class DirectoryClient : public LLMClient {
public:
    explicit DirectoryClient(const std::filesystem::path& dir);
    std::string complete(const CompletionRequest& request) override;
    ClientMode mode() const override { return ClientMode::live; }
    std::size_t size() const { return responses_.size(); }

private:
    std::vector<std::string> responses_;
    std::size_t next_ = 0;
    std::mutex mutex_;
};

// Append-only JSONL store keyed by (prompt hash, model, seed).
class RecordStore {
public:
    explicit RecordStore(std::filesystem::path path);

    std::optional<std::string> find(const CompletionRequest& request) const;
    void append(const CompletionRequest& request, const std::string& response);
    std::size_t size() const { return records_.size(); }
    const std::filesystem::path& path() const { return path_; }

private:
    using Key = std::tuple<std::string, std::string, std::uint64_t>;
    static Key key_of(const CompletionRequest& request);

    std::filesystem::path path_;
    std::map<Key, std::string> records_;
    mutable std::mutex mutex_;
};

class RecordingClient : public LLMClient {
public:
    RecordingClient(std::shared_ptr<LLMClient> inner, std::filesystem::path store);
    std::string complete(const CompletionRequest& request) override;
    ClientMode mode() const override { return ClientMode::record; }

private:
    std::shared_ptr<LLMClient> inner_;
    RecordStore store_;
};

// Throws InfrastructureError when the store lacks a response.
class ReplayClient : public LLMClient {
public:
    explicit ReplayClient(std::filesystem::path store);
    std::string complete(const CompletionRequest& request) override;
    ClientMode mode() const override { return ClientMode::replay; }

private:
    RecordStore store_;
};

// Code embeddings for the text-based early-stop predictors.
class EmbeddingClient {
public:
    virtual ~EmbeddingClient() = default;
    virtual std::vector<double> embed(const std::string& text) = 0;
};

// Offline embedding: signed feature hashing of identifier and number tokens,
// L2-normalized. Deterministic and dependency free.
class HashEmbedder : public EmbeddingClient {
public:
    explicit HashEmbedder(std::size_t dim = 64) : dim_(dim) {}
    std::vector<double> embed(const std::string& text) override;

private:
    std::size_t dim_;
};

// OpenAI-compatible embeddings endpoint.
class LiveEmbedder : public EmbeddingClient {
public:
    LiveEmbedder(LiveClientConfig config, std::string model);
    std::vector<double> embed(const std::string& text) override;

private:
    LiveClientConfig config_;
    std::string model_;
};

// Record/replay for embeddings, keyed by text hash. With a null inner
// client the store is replay-only and misses throw InfrastructureError.
class CachedEmbedder : public EmbeddingClient {
public:
    CachedEmbedder(std::shared_ptr<EmbeddingClient> inner, std::filesystem::path store);
    std::vector<double> embed(const std::string& text) override;

private:
    std::shared_ptr<EmbeddingClient> inner_;
    std::filesystem::path path_;
    std::map<std::string, std::vector<double>> cache_;
    std::mutex mutex_;
};

struct GenerationBatch {
    std::string batch_id;
    CandidateKind kind = CandidateKind::state;
    std::string model_name;
    std::size_t n_requested = 0;
    std::vector<CandidateDesign> candidates;
    std::size_t failures = 0;
    std::vector<std::pair<std::size_t, std::string>> failure_reasons;  // (request index, reason)
};

struct GenerationOptions {
    std::string model = "recorded";
    double temperature = 1.0;
    std::uint64_t seed = 0;
    std::string batch_id;  // derived from kind, model and seed when empty
};

// Issues n completions sequentially. Candidate ids are <batch_id>-<index>.
// Transport errors become batch failures; other infrastructure errors propagate.
GenerationBatch generate_batch(LLMClient& client, CandidateKind kind, std::size_t n, const PromptTemplate& tmpl,
                               const GenerationOptions& options);

// Stable JSON serialization of a batch (used for replay-equality checks).
std::string batch_to_json(const GenerationBatch& batch);

}  // namespace abrforge
