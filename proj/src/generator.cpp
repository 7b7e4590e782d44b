#include "abrforge/generator.hpp"

// After the Eigen headers: resolv.h, pulled in by httplib, defines _res.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "abrforge/util/error.hpp"
#include "abrforge/util/files.hpp"
#include "abrforge/util/hash.hpp"
#include "abrforge/util/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>
#include <thread>

namespace abrforge {

using nlohmann::json;

void PromptTemplate::validate() const {
    auto need = [](const std::string& s, const char* what) {
        if (s.find_first_not_of(" \t\r\n") == std::string::npos) throw Error(std::string("prompt section '") + what + "' is empty");
    };
    need(role, "role");
    need(base_code, "base_code");
    need(cot_directive, "cot");
    need(output_format, "output_format");
    if (kind == CandidateKind::state && !normalization_directive) {
        throw Error("state prompts require a normalization directive");
    }
    if (kind == CandidateKind::network && normalization_directive) {
        throw Error("network prompts must not carry a normalization directive");
    }
    if (normalization_directive) need(*normalization_directive, "normalization");
    if (base_code.find('#') == std::string::npos) throw Error("base code must be annotated with comments");
}

PromptTemplate load_prompt_template(const std::filesystem::path& dir, CandidateKind kind) {
    const auto sub = dir / to_string(kind);
    if (!std::filesystem::is_directory(sub)) throw Error("prompt directory not found: " + sub.string());
    auto section = [&](const char* name) { return read_file(sub / (std::string(name) + ".txt")); };
    PromptTemplate t;
    t.kind = kind;
    t.role = section("role");
    t.base_code = section("base_code");
    t.cot_directive = section("cot");
    if (std::filesystem::exists(sub / "normalization.txt")) t.normalization_directive = section("normalization");
    t.output_format = section("output_format");
    t.validate();
    return t;
}

namespace {

std::string trim_trailing(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == ' ' || s.back() == '\r')) s.pop_back();
    return s;
}

}  // namespace

std::string render_prompt(CandidateKind kind, const PromptTemplate& tmpl) {
    if (tmpl.kind != kind) throw Error("prompt template kind does not match the requested kind");
    tmpl.validate();
    std::string out = trim_trailing(tmpl.role) + "\n\n```\n" + trim_trailing(tmpl.base_code) + "\n```\n\n" +
                      trim_trailing(tmpl.cot_directive) + "\n\n";
    if (kind == CandidateKind::state) out += trim_trailing(*tmpl.normalization_directive) + "\n\n";
    out += trim_trailing(tmpl.output_format) + "\n";
    return out;
}

std::string prompt_id(const std::string& prompt) { return sha256_hex(prompt).substr(0, 12); }

std::optional<std::string> extract_code(const std::string& response) {
    std::istringstream in(response);
    std::string line;
    bool inside = false;
    std::string current;
    std::optional<std::string> last;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        const bool fence = first != std::string::npos && line.compare(first, 3, "```") == 0;
        if (fence) {
            if (inside) {
                last = current;
                current.clear();
            }
            inside = !inside;
            continue;
        }
        if (inside) current += line + "\n";
    }
    return last;
}

std::string to_string(ClientMode m) {
    switch (m) {
        case ClientMode::live: return "live";
        case ClientMode::record: return "record";
        case ClientMode::replay: return "replay";
    }
    return "replay";
}

ClientMode client_mode_from_string(const std::string& s) {
    if (s == "live") return ClientMode::live;
    if (s == "record") return ClientMode::record;
    if (s == "replay") return ClientMode::replay;
    throw Error("unknown client mode '" + s + "' (expected live, record or replay)");
}

LiveClientConfig LiveClientConfig::from_env() {
    LiveClientConfig c;
    if (const char* base = std::getenv("ABRFORGE_API_BASE")) c.base_url = base;
    if (const char* key = std::getenv("ABRFORGE_API_KEY")) c.api_key = key;
    if (c.base_url.empty()) c.base_url = "https://api.openai.com/v1";
    return c;
}

namespace {

// POSTs JSON to base_url + path with bounded exponential backoff on
// connection errors, 429 and 5xx.
json post_json(const LiveClientConfig& cfg, const std::string& path, const json& body) {
    const auto scheme_end = cfg.base_url.find("://");
    if (scheme_end == std::string::npos) throw TransportError("API base URL needs a scheme: " + cfg.base_url);
    const auto path_start = cfg.base_url.find('/', scheme_end + 3);
    const std::string origin = cfg.base_url.substr(0, path_start);
    const std::string prefix = path_start == std::string::npos ? "" : cfg.base_url.substr(path_start);
    httplib::Client client(origin);
    client.set_connection_timeout(cfg.timeout_s, 0);
    client.set_read_timeout(cfg.timeout_s, 0);
    httplib::Headers headers;
    if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);
    std::string last_error;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(cfg.initial_backoff_ms << (attempt - 1)));
        }
        auto res = client.Post(prefix + path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
        try {
            return json::parse(res->body);
        } catch (const json::exception& e) {
            throw TransportError(std::string("malformed response body: ") + e.what());
        }
    }
    throw TransportError("request failed after " + std::to_string(cfg.max_retries + 1) + " attempts: " + last_error);
}

}  // namespace

LiveClient::LiveClient(LiveClientConfig config) : config_(std::move(config)) {}

std::string LiveClient::complete(const CompletionRequest& request) {
    const json body = {
        {"model", request.model},
        {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.temperature},
        {"seed", request.seed & 0x7fffffffffffffffULL},
    };
    const json res = post_json(config_, "/chat/completions", body);
    try {
        return res.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw TransportError(std::string("unexpected completion payload: ") + e.what());
    }
}

DirectoryClient::DirectoryClient(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error("response directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) responses_.push_back(read_file(f));
    if (responses_.empty()) throw Error("no responses in " + dir.string());
}

std::string DirectoryClient::complete(const CompletionRequest&) {
    std::lock_guard lock(mutex_);
    if (next_ >= responses_.size()) throw InfrastructureError("response directory exhausted");
    return responses_[next_++];
}

RecordStore::RecordStore(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) return;
    std::ifstream in(path_);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json r = json::parse(line);
            records_[{r.at("prompt_hash").get<std::string>(), r.at("model").get<std::string>(),
                      r.at("seed").get<std::uint64_t>()}] = r.at("response").get<std::string>();
        } catch (const json::exception& e) {
            throw InfrastructureError(path_.string() + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
        }
    }
}

RecordStore::Key RecordStore::key_of(const CompletionRequest& request) {
    return {sha256_hex(request.prompt), request.model, request.seed};
}

std::optional<std::string> RecordStore::find(const CompletionRequest& request) const {
    std::lock_guard lock(mutex_);
    if (auto it = records_.find(key_of(request)); it != records_.end()) return it->second;
    return std::nullopt;
}

void RecordStore::append(const CompletionRequest& request, const std::string& response) {
    std::lock_guard lock(mutex_);
    const Key k = key_of(request);
    const json r = {{"prompt_hash", std::get<0>(k)},
                    {"model", request.model},
                    {"seed", request.seed},
                    {"temperature", request.temperature},
                    {"response", response}};
    if (!path_.parent_path().empty()) std::filesystem::create_directories(path_.parent_path());
    append_line(path_, r.dump());
    records_[k] = response;
}

RecordingClient::RecordingClient(std::shared_ptr<LLMClient> inner, std::filesystem::path store)
    : inner_(std::move(inner)), store_(std::move(store)) {}

std::string RecordingClient::complete(const CompletionRequest& request) {
    std::string response = inner_->complete(request);
    store_.append(request, response);
    return response;
}

ReplayClient::ReplayClient(std::filesystem::path store) : store_(std::move(store)) {
    if (!std::filesystem::exists(store_.path())) throw InfrastructureError("replay store not found: " + store_.path().string());
}

std::string ReplayClient::complete(const CompletionRequest& request) {
    if (auto r = store_.find(request)) return *r;
    throw InfrastructureError("replay store " + store_.path().string() + " has no response for prompt " +
                              prompt_id(request.prompt) + ", model " + request.model + ", seed " +
                              std::to_string(request.seed));
}

std::vector<double> HashEmbedder::embed(const std::string& text) {
    static const std::regex token(R"([A-Za-z_][A-Za-z0-9_]*|[0-9]+(\.[0-9]+)?)");
    std::vector<double> v(dim_, 0.0);
    std::string prev;
    auto add = [&](const std::string& t) {
        const std::uint64_t h = fnv1a(t);
        v[h % dim_] += ((h >> 32) & 1u) ? 1.0 : -1.0;
    };
    for (auto it = std::sregex_iterator(text.begin(), text.end(), token); it != std::sregex_iterator(); ++it) {
        const std::string t = it->str();
        add(t);
        if (!prev.empty()) add(prev + " " + t);
        prev = t;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
    }
    return v;
}

LiveEmbedder::LiveEmbedder(LiveClientConfig config, std::string model)
    : config_(std::move(config)), model_(std::move(model)) {}

std::vector<double> LiveEmbedder::embed(const std::string& text) {
    const json res = post_json(config_, "/embeddings", {{"model", model_}, {"input", text}});
    try {
        return res.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw TransportError(std::string("unexpected embedding payload: ") + e.what());
    }
}

CachedEmbedder::CachedEmbedder(std::shared_ptr<EmbeddingClient> inner, std::filesystem::path store)
    : inner_(std::move(inner)), path_(std::move(store)) {
    if (!std::filesystem::exists(path_)) {
        if (!inner_) throw InfrastructureError("embedding store not found: " + path_.string());
        return;
    }
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json r = json::parse(line);
        cache_[r.at("text_hash").get<std::string>()] = r.at("embedding").get<std::vector<double>>();
    }
}

std::vector<double> CachedEmbedder::embed(const std::string& text) {
    const std::string key = sha256_hex(text);
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    if (!inner_) throw InfrastructureError("embedding store has no entry for text " + key.substr(0, 12));
    std::vector<double> e = inner_->embed(text);
    append_line(path_, json{{"text_hash", key}, {"embedding", e}}.dump());
    cache_[key] = e;
    return e;
}

namespace {

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
    return out;
}

std::string pad_index(std::size_t i) {
    std::ostringstream os;
    os << std::setw(4) << std::setfill('0') << i;
    return os.str();
}

}  // namespace

GenerationBatch generate_batch(LLMClient& client, CandidateKind kind, std::size_t n, const PromptTemplate& tmpl,
                               const GenerationOptions& options) {
    if (n == 0) throw Error("generate_batch requires n >= 1");
    const std::string prompt = render_prompt(kind, tmpl);
    const std::string pid = prompt_id(prompt);
    GenerationBatch batch;
    batch.kind = kind;
    batch.model_name = options.model;
    batch.n_requested = n;
    batch.batch_id = options.batch_id.empty()
                         ? to_string(kind) + "-" + sanitize(options.model) + "-s" + std::to_string(options.seed)
                         : sanitize(options.batch_id);
    for (std::size_t i = 0; i < n; ++i) {
        CompletionRequest req{prompt, options.model, options.temperature, mix_seed(options.seed, i)};
        std::string response;
        try {
            response = client.complete(req);
        } catch (const TransportError& e) {
            ++batch.failures;
            batch.failure_reasons.emplace_back(i, std::string("transport error: ") + e.what());
            continue;
        }
        auto code = extract_code(response);
        if (!code) {
            ++batch.failures;
            batch.failure_reasons.emplace_back(i, "no fenced code block");
            continue;
        }
        CandidateDesign c;
        c.id = batch.batch_id + "-" + pad_index(i);
        c.kind = kind;
        c.source_text = std::move(*code);
        c.provenance = {Provenance::llm, options.model, pid, batch.batch_id, i};
        batch.candidates.push_back(std::move(c));
    }
    return batch;
}

std::string batch_to_json(const GenerationBatch& batch) {
    json j = {{"batch_id", batch.batch_id},
              {"kind", to_string(batch.kind)},
              {"model", batch.model_name},
              {"n_requested", batch.n_requested},
              {"failures", batch.failures}};
    json cands = json::array();
    for (const auto& c : batch.candidates) {
        cands.push_back({{"id", c.id},
                         {"index", c.provenance.index},
                         {"prompt_id", c.provenance.prompt_id},
                         {"source_sha256", sha256_hex(c.source_text)}});
    }
    j["candidates"] = cands;
    json fails = json::array();
    for (const auto& [i, r] : batch.failure_reasons) fails.push_back({{"index", i}, {"reason", r}});
    j["failure_reasons"] = fails;
    return j.dump(2);
}

}  // namespace abrforge
