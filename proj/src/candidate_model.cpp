#include "abrforge/candidate_model.hpp"

#include "abrforge/util/error.hpp"
#include "abrforge/util/files.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <regex>

namespace abrforge {

using script::FailureKind;
using script::ScriptError;
using script::Value;

std::string to_string(CandidateKind k) { return k == CandidateKind::state ? "state" : "network"; }

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::llm: return "llm";
        case Provenance::builtin: return "builtin";
        case Provenance::manual: return "manual";
    }
    return "manual";
}

std::string to_string(CandidateStatus s) {
    switch (s) {
        case CandidateStatus::raw: return "raw";
        case CandidateStatus::compiled: return "compiled";
        case CandidateStatus::normalized: return "normalized";
        case CandidateStatus::rejected: return "rejected";
        case CandidateStatus::trained: return "trained";
        case CandidateStatus::scored: return "scored";
    }
    return "raw";
}

CandidateKind candidate_kind_from_string(const std::string& s) {
    if (s == "state") return CandidateKind::state;
    if (s == "network") return CandidateKind::network;
    throw Error("unknown candidate kind '" + s + "'");
}

Provenance provenance_from_string(const std::string& s) {
    for (Provenance p : {Provenance::llm, Provenance::builtin, Provenance::manual}) {
        if (to_string(p) == s) return p;
    }
    throw Error("unknown provenance '" + s + "'");
}

CandidateStatus candidate_status_from_string(const std::string& s) {
    for (CandidateStatus st : {CandidateStatus::raw, CandidateStatus::compiled, CandidateStatus::normalized,
                               CandidateStatus::rejected, CandidateStatus::trained, CandidateStatus::scored}) {
        if (to_string(st) == s) return st;
    }
    throw Error("unknown candidate status '" + s + "'");
}

bool transition_allowed(CandidateKind kind, CandidateStatus from, CandidateStatus to) {
    using S = CandidateStatus;
    if (from == S::rejected || from == S::scored) return false;
    if (to == S::rejected) return true;
    switch (from) {
        case S::raw: return to == S::compiled;
        case S::compiled:
            return kind == CandidateKind::state ? to == S::normalized : to == S::trained;
        case S::normalized: return to == S::trained;
        case S::trained: return to == S::scored;
        default: return false;
    }
}

void CandidateDesign::advance(CandidateStatus next) {
    if (!transition_allowed(kind, status, next)) {
        throw Error("candidate " + id + ": illegal transition " + to_string(status) + " -> " + to_string(next));
    }
    status = next;
}

void CandidateDesign::reject(std::string reason) {
    if (reason.empty()) throw Error("rejection requires a reason");
    advance(CandidateStatus::rejected);
    rejection_reason = std::move(reason);
}

void SandboxPolicy::validate() const {
    if (!(time_limit_s > 0.0)) throw Error("sandbox time limit must be > 0");
    if (memory_limit_bytes == 0) throw Error("sandbox memory limit must be > 0");
    if (max_steps == 0) throw Error("sandbox step limit must be > 0");
    if (network_access) throw Error("sandbox network access cannot be enabled");
}

script::Limits SandboxPolicy::limits(bool allow_nn) const {
    validate();
    script::Limits l;
    l.time_limit_s = time_limit_s;
    l.memory_limit_bytes = memory_limit_bytes;
    l.max_steps = max_steps;
    l.import_allowlist = import_allowlist;
    if (allow_nn && std::find(l.import_allowlist.begin(), l.import_allowlist.end(), "nn") == l.import_allowlist.end()) {
        l.import_allowlist.push_back("nn");
    }
    return l;
}

bool StateTensor::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

StateTensor tensor_from_value(const Value& value) {
    std::vector<std::vector<double>> rows;
    if (value.is_number()) {
        rows.push_back({value.number()});
    } else if (value.is_vector()) {
        rows.push_back(value.vector());
    } else if (value.is_list()) {
        for (const auto& row : value.list()) {
            if (row.is_number()) rows.push_back({row.number()});
            else if (row.is_vector()) rows.push_back(row.vector());
            else throw ScriptError(FailureKind::non_numeric_output, "state row of type " + row.type_name());
        }
    } else {
        throw ScriptError(FailureKind::non_numeric_output, "state returned a " + value.type_name());
    }
    std::size_t width = 0;
    for (const auto& r : rows) width = std::max(width, r.size());
    if (rows.empty() || width == 0) throw ScriptError(FailureKind::invalid_output, "state returned no features");
    StateTensor t;
    t.channels = rows.size();
    t.width = width;
    t.values.assign(t.channels * width, 0.0);
    for (std::size_t c = 0; c < rows.size(); ++c) {
        std::copy(rows[c].begin(), rows[c].end(), t.values.begin() + static_cast<long>(c * width + width - rows[c].size()));
    }
    return t;
}

namespace {

std::map<std::string, Value, std::less<>> common_globals() {
    return {{"inf", Value(std::numeric_limits<double>::infinity())},
            {"nan", Value(std::numeric_limits<double>::quiet_NaN())},
            {"pi", Value(M_PI)}};
}

std::shared_ptr<const script::Program> compile_candidate(const CandidateDesign& c) {
    return script::compile(c.source_text);
}

}  // namespace

std::map<std::string, Value, std::less<>> state_globals(const BitrateLadder& ladder, const SimConfig& sim) {
    auto g = common_globals();
    g["BITRATES_KBPS"] = Value(ladder.levels_kbps);
    g["TOTAL_CHUNKS"] = Value(static_cast<double>(sim.n_chunks));
    g["HISTORY_LEN"] = Value(static_cast<double>(sim.history_len));
    g["CHUNK_DURATION_S"] = Value(sim.chunk_duration_s);
    g["BUFFER_CAP_S"] = Value(sim.buffer_cap_s);
    return g;
}

std::shared_ptr<const script::ModuleRegistry> candidate_registry() {
    static const std::shared_ptr<const script::ModuleRegistry> registry = [] {
        auto r = std::make_shared<script::ModuleRegistry>(script::ModuleRegistry::with_defaults());
        r->add("nn", nn_script_module());
        return r;
    }();
    return registry;
}

StateFunction::StateFunction(const CandidateDesign& candidate, const SandboxPolicy& policy,
                             const BitrateLadder& ladder, const SimConfig& sim) {
    if (candidate.kind != CandidateKind::state) throw Error("candidate " + candidate.id + " is not a state design");
    auto program = compile_candidate(candidate);
    bool found = false;
    for (const auto& [name, n] : script::functions(*program)) {
        if (name == "state") {
            found = true;
            n_params_ = n;
        }
    }
    if (!found) throw ScriptError(FailureKind::execution_error, "no function named 'state'");
    if (n_params_ != 6 && n_params_ != 7) {
        throw ScriptError(FailureKind::execution_error,
                          "state() must take 6 or 7 parameters, found " + std::to_string(n_params_));
    }
    interp_ = std::make_shared<script::Interpreter>(std::move(program), policy.limits(false),
                                                    state_globals(ladder, sim), candidate_registry());
}

StateTensor StateFunction::operator()(const StreamObservation& obs) {
    std::vector<Value> args;
    args.emplace_back(obs.throughput_hist_mbps);
    args.emplace_back(obs.download_time_hist_s);
    args.emplace_back(obs.next_sizes_bytes);
    args.emplace_back(obs.buffer_s);
    args.emplace_back(static_cast<double>(obs.chunks_remaining));
    args.emplace_back(static_cast<double>(obs.last_level));
    if (n_params_ == 7) args.emplace_back(obs.buffer_hist_s);
    StateTensor t = tensor_from_value(interp_->call("state", std::move(args)));
    if (!shape_) {
        shape_ = t.shape();
    } else if (*shape_ != t.shape()) {
        throw ScriptError(FailureKind::shape_drift,
                          "shape changed from (" + std::to_string(shape_->first) + "," + std::to_string(shape_->second) +
                              ") to (" + std::to_string(t.channels) + "," + std::to_string(t.width) + ")");
    }
    return t;
}

StateTensor execute_state(const CandidateDesign& candidate, const StreamObservation& obs, const SandboxPolicy& policy,
                          const BitrateLadder& ladder, const SimConfig& sim) {
    StateFunction fn(candidate, policy, ladder, sim);
    return fn(obs);
}

std::string probe_policy(const PolicyNetwork& net) {
    const long rows = static_cast<long>(net.channels() * net.width());
    nn::Matrix probe(rows, 3);
    Rng rng(0x5eed);
    for (long r = 0; r < rows; ++r) {
        probe(r, 0) = 0.0;
        probe(r, 1) = rng.uniform(-1.0, 1.0);
        probe(r, 2) = rng.uniform(0.0, 10.0);
    }
    const PolicyOutput out = net.forward(probe);
    if (out.probs.rows() != static_cast<long>(net.n_actions())) return "probability vector has wrong length";
    for (long c = 0; c < out.probs.cols(); ++c) {
        if (!out.probs.col(c).allFinite()) return "non-finite action probabilities";
        if ((out.probs.col(c).array() < 0.0).any()) return "negative action probability";
        if (std::abs(out.probs.col(c).sum() - 1.0) > 1e-6) return "action probabilities do not sum to 1";
        if (!std::isfinite(out.values(c))) return "non-finite value estimate";
    }
    return {};
}

std::unique_ptr<PolicyNetwork> instantiate_network(const CandidateDesign& candidate,
                                                   std::pair<std::size_t, std::size_t> state_shape,
                                                   std::size_t n_actions, std::uint64_t seed,
                                                   const SandboxPolicy& policy, double actor_lr, double critic_lr) {
    if (candidate.kind != CandidateKind::network) throw Error("candidate " + candidate.id + " is not a network design");
    script::Interpreter interp(compile_candidate(candidate), policy.limits(true), common_globals(), candidate_registry());
    const Value v = interp.call("network", {Value(static_cast<double>(state_shape.first)),
                                            Value(static_cast<double>(state_shape.second)),
                                            Value(static_cast<double>(n_actions))});
    NetworkSpec spec = network_spec_from_value(v);
    std::unique_ptr<PolicyNetwork> net;
    try {
        net = std::make_unique<PolicyNetwork>(std::move(spec), state_shape.first, state_shape.second, n_actions, seed,
                                             actor_lr, critic_lr);
    } catch (const ScriptError&) {
        throw;
    } catch (const std::bad_alloc&) {
        throw ScriptError(FailureKind::memory_limit, "network parameters do not fit in memory");
    } catch (const Error& e) {
        throw ScriptError(FailureKind::execution_error, e.what());
    }
    if (const std::string problem = probe_policy(*net); !problem.empty()) {
        throw ScriptError(FailureKind::invalid_output, problem);
    }
    return net;
}

namespace {

void check_id(const std::string& id) {
    static const std::regex ok("[A-Za-z0-9_.-]+");
    if (!std::regex_match(id, ok)) throw Error("invalid candidate id '" + id + "'");
}

}  // namespace

void save_candidate(const std::filesystem::path& dir, const CandidateDesign& c) {
    check_id(c.id);
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / (c.id + ".code"), c.source_text);
    nlohmann::json meta = {
        {"id", c.id},
        {"kind", to_string(c.kind)},
        {"provenance",
         {{"source", to_string(c.provenance.source)},
          {"model", c.provenance.model},
          {"prompt_id", c.provenance.prompt_id},
          {"batch_id", c.provenance.batch_id},
          {"index", c.provenance.index}}},
        {"status", to_string(c.status)},
    };
    if (c.rejection_reason) meta["rejection_reason"] = *c.rejection_reason;
    write_file_atomic(dir / (c.id + ".json"), meta.dump(2) + "\n");
}

std::vector<CandidateDesign> load_corpus_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error("corpus directory not found: " + dir.string());
    std::vector<CandidateDesign> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".json") continue;
        const auto meta = nlohmann::json::parse(read_file(entry.path()));
        CandidateDesign c;
        c.id = meta.at("id").get<std::string>();
        check_id(c.id);
        c.kind = candidate_kind_from_string(meta.at("kind").get<std::string>());
        const auto& p = meta.at("provenance");
        c.provenance.source = provenance_from_string(p.at("source").get<std::string>());
        c.provenance.model = p.value("model", "");
        c.provenance.prompt_id = p.value("prompt_id", "");
        c.provenance.batch_id = p.value("batch_id", "");
        c.provenance.index = p.value("index", std::size_t{0});
        c.status = candidate_status_from_string(meta.value("status", "raw"));
        if (meta.contains("rejection_reason")) c.rejection_reason = meta["rejection_reason"].get<std::string>();
        const auto code = entry.path().parent_path() / (c.id + ".code");
        if (!std::filesystem::exists(code)) throw Error("missing code file for candidate " + c.id);
        c.source_text = read_file(code);
        out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
}

}  // namespace abrforge
