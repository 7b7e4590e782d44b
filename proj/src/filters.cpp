#include "abrforge/filters.hpp"

#include "abrforge/util/error.hpp"
#include "abrforge/util/format.hpp"
#include "abrforge/util/worker_pool.hpp"

#include "json.hpp"

#include <cmath>
#include <future>
#include <new>

namespace abrforge {

using script::FailureKind;
using script::ScriptError;

void FuzzConfig::validate() const {
    if (n_samples < 1) throw Error("fuzz n_samples must be >= 1");
    if (!(threshold > 0.0)) throw Error("fuzz threshold must be > 0");
    const auto& r = ranges;
    if (!(r.throughput_min_mbps > 0.0 && r.throughput_min_mbps <= r.throughput_max_mbps)) {
        throw Error("fuzz throughput range must be positive and ordered");
    }
    if (!(r.download_min_s > 0.0 && r.download_min_s <= r.download_max_s)) {
        throw Error("fuzz download range must be positive and ordered");
    }
    if (!(r.buffer_min_s >= 0.0 && r.buffer_min_s <= r.buffer_max_s)) throw Error("fuzz buffer range invalid");
    if (!(r.remaining_min >= 0.0 && r.remaining_min <= r.remaining_max)) throw Error("fuzz remaining range invalid");
    if (!(r.size_jitter >= 0.0 && r.size_jitter < 1.0)) throw Error("fuzz size jitter must be in [0, 1)");
    if (!(r.early_session_probability >= 0.0 && r.early_session_probability <= 1.0)) {
        throw Error("fuzz early-session probability must be in [0, 1]");
    }
}

namespace {

double log_uniform(Rng& rng, double lo, double hi) {
    return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

}  // namespace

StreamObservation sample_observation(Rng& rng, const BitrateLadder& ladder, const SamplerRanges& r,
                                     std::size_t history_len, double chunk_duration_s) {
    StreamObservation obs;
    const std::size_t H = history_len;
    std::size_t filled = H;
    if (rng.uniform() < r.early_session_probability) filled = rng.below(H);
    obs.throughput_hist_mbps.assign(H, 0.0);
    obs.download_time_hist_s.assign(H, 0.0);
    obs.buffer_hist_s.assign(H, 0.0);
    for (std::size_t i = H - filled; i < H; ++i) {
        obs.throughput_hist_mbps[i] = log_uniform(rng, r.throughput_min_mbps, r.throughput_max_mbps);
        obs.download_time_hist_s[i] = log_uniform(rng, r.download_min_s, r.download_max_s);
        obs.buffer_hist_s[i] = rng.uniform(r.buffer_min_s, r.buffer_max_s);
    }
    obs.buffer_s = filled == 0 ? 0.0 : rng.uniform(r.buffer_min_s, r.buffer_max_s);
    const auto lo = static_cast<std::uint64_t>(std::ceil(r.remaining_min));
    const auto hi = static_cast<std::uint64_t>(std::floor(r.remaining_max));
    obs.chunks_remaining = static_cast<std::size_t>(lo + rng.below(hi - lo + 1));
    obs.last_level = static_cast<std::size_t>(rng.below(ladder.size()));
    for (double kbps : ladder.levels_kbps) {
        const double nominal = kbps * chunk_duration_s * 125.0;
        obs.next_sizes_bytes.push_back(std::round(nominal * (1.0 + rng.uniform(-r.size_jitter, r.size_jitter))));
    }
    return obs;
}

namespace {

std::string reason_of(const ScriptError& e) {
    std::string r = script::label(e.kind());
    if (!e.detail().empty()) {
        r += ": ";
        if (e.line() > 0) r += "line " + std::to_string(e.line()) + ": ";
        r += e.detail();
    }
    return r;
}

CheckOutcome fail_with(const ScriptError& e, const std::string& prefix = {}) {
    CheckOutcome o;
    o.failure = e.kind();
    o.reason = prefix + reason_of(e);
    return o;
}

// Observations from a short session on a steady link: the zero-padded start
// and a point after a few chunks.
std::vector<StreamObservation> probe_observations(const CheckContext& ctx) {
    const Trace trace("probe", {{0.0, 3.0}, {1.0, 3.0}}, SourceTag::custom);
    const VideoManifest manifest = synth_manifest(ctx.ladder, ctx.sim.n_chunks, ctx.sim.chunk_duration_s, 0.1, 1);
    Session session(trace, manifest, ctx.ladder, ctx.sim);
    std::vector<StreamObservation> out{session.observation()};
    for (std::size_t i = 0; i < 3 && !session.done(); ++i) session.step(i % ctx.ladder.size());
    out.push_back(session.observation());
    return out;
}

CheckOutcome compile_once(const CandidateDesign& c, const CheckContext& ctx) {
    try {
        if (c.kind == CandidateKind::state) {
            StateFunction fn(c, ctx.policy, ctx.ladder, ctx.sim);
            for (const auto& obs : probe_observations(ctx)) fn(obs);
            CheckOutcome o;
            o.passed = true;
            o.shape = fn.shape();
            return o;
        }
        instantiate_network(c, ctx.network_state_shape, ctx.ladder.size(), ctx.network_seed, ctx.policy);
        CheckOutcome o;
        o.passed = true;
        return o;
    } catch (const ScriptError& e) {
        return fail_with(e);
    }
}

CheckOutcome with_infrastructure_retry(const CandidateDesign& c, const CheckContext& ctx,
                                       const std::function<CheckOutcome()>& attempt) {
    std::string last;
    for (int i = 0; i < 2; ++i) {
        try {
            if (ctx.before_attempt) ctx.before_attempt(c);
            return attempt();
        } catch (const InfrastructureError& e) {
            last = e.what();
        } catch (const std::bad_alloc&) {
            last = "host allocation failure";
        }
    }
    CheckOutcome o;
    o.infrastructure_error = true;
    o.reason = "infrastructure error: " + last;
    return o;
}

}  // namespace

CheckOutcome compile_check(const CandidateDesign& candidate, const CheckContext& ctx) {
    return with_infrastructure_retry(candidate, ctx, [&] { return compile_once(candidate, ctx); });
}

CheckOutcome normalization_check(const CandidateDesign& candidate, const FuzzConfig& cfg, const CheckContext& ctx) {
    if (candidate.kind != CandidateKind::state) throw Error("normalization check applies to state candidates only");
    cfg.validate();
    if (ctx.fuzz_ladders.empty()) throw Error("fuzzing needs at least one ladder");
    return with_infrastructure_retry(candidate, ctx, [&]() -> CheckOutcome {
        std::vector<StateFunction> fns;
        try {
            for (const auto& ladder : ctx.fuzz_ladders) fns.emplace_back(candidate, ctx.policy, ladder, ctx.sim);
        } catch (const ScriptError& e) {
            return fail_with(e, "execution error under fuzz: ");
        }
        Rng rng(cfg.seed);
        std::optional<std::pair<std::size_t, std::size_t>> shape;
        for (std::size_t i = 0; i < cfg.n_samples; ++i) {
            const std::size_t which = rng.below(fns.size());
            const StreamObservation obs = sample_observation(rng, ctx.fuzz_ladders[which], cfg.ranges,
                                                             ctx.sim.history_len, ctx.sim.chunk_duration_s);
            StateTensor t;
            try {
                t = fns[which](obs);
            } catch (const ScriptError& e) {
                return fail_with(e, "execution error under fuzz: ");
            }
            if (!shape) {
                shape = t.shape();
            } else if (*shape != t.shape()) {
                CheckOutcome o;
                o.failure = FailureKind::shape_drift;
                o.reason = "shape drift: shape depends on the ladder";
                return o;
            }
            for (double v : t.values) {
                if (!std::isfinite(v) || std::abs(v) > cfg.threshold) {
                    CheckOutcome o;
                    o.offending_value = v;
                    o.reason = std::isfinite(v) ? "feature value " + std::to_string(v) + " exceeds threshold " +
                                                      std::to_string(cfg.threshold)
                                                : "non-finite feature value";
                    o.shape = shape;
                    return o;
                }
            }
        }
        CheckOutcome o;
        o.passed = true;
        o.shape = shape;
        return o;
    });
}

namespace {

struct Evaluated {
    CheckOutcome compile;
    std::optional<CheckOutcome> norm;
};

}  // namespace

FilterReport run_prefilter(std::vector<CandidateDesign>& candidates, const FuzzConfig& cfg, const CheckContext& ctx,
                           const PrefilterOptions& options) {
    cfg.validate();
    WorkerPool pool(options.workers);
    std::vector<std::future<Evaluated>> futures;
    for (const auto& c : candidates) {
        if (c.status != CandidateStatus::raw) throw Error("candidate " + c.id + " is not raw");
        futures.push_back(pool.submit([&c, &cfg, &ctx]() {
            Evaluated ev{compile_check(c, ctx), std::nullopt};
            if (ev.compile.passed && c.kind == CandidateKind::state) ev.norm = normalization_check(c, cfg, ctx);
            return ev;
        }));
    }
    FilterReport report;
    bool any_state = false;
    std::size_t normalized = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        CandidateDesign& c = candidates[i];
        const Evaluated ev = futures[i].get();
        CandidateOutcome out;
        out.id = c.id;
        out.kind = c.kind;
        if (c.kind == CandidateKind::state) any_state = true;
        const bool infra = ev.compile.infrastructure_error || (ev.norm && ev.norm->infrastructure_error);
        if (infra) {
            out.infrastructure_error = true;
            out.reason = ev.compile.infrastructure_error ? ev.compile.reason : ev.norm->reason;
            out.compiled = ev.compile.passed;
            ++report.infrastructure_errors;
            if (!options.exclude_infrastructure_errors) {
                ++report.total;
                if (out.compiled) ++report.compilable;
            }
            report.outcomes.push_back(std::move(out));
            continue;
        }
        ++report.total;
        if (!ev.compile.passed) {
            out.reason = ev.compile.reason;
            c.reject(ev.compile.reason);
        } else {
            out.compiled = true;
            ++report.compilable;
            c.advance(CandidateStatus::compiled);
            if (ev.norm) {
                out.normalized = ev.norm->passed;
                if (ev.norm->passed) {
                    ++normalized;
                    c.advance(CandidateStatus::normalized);
                } else {
                    out.reason = ev.norm->reason;
                    out.offending_value = ev.norm->offending_value;
                    c.reject("normalization: " + ev.norm->reason);
                }
            }
        }
        report.outcomes.push_back(std::move(out));
    }
    if (any_state) report.well_normalized = normalized;
    return report;
}

FilterReport run_prefilter(GenerationBatch& batch, const FuzzConfig& cfg, const CheckContext& ctx,
                           const PrefilterOptions& options) {
    FilterReport report = run_prefilter(batch.candidates, cfg, ctx, options);
    report.total += batch.failures;
    for (const auto& [index, reason] : batch.failure_reasons) {
        CandidateOutcome out;
        out.id = batch.batch_id + "#" + std::to_string(index);
        out.kind = batch.kind;
        out.reason = "extraction: " + reason;
        report.outcomes.push_back(std::move(out));
    }
    if (batch.kind == CandidateKind::state && !report.well_normalized) report.well_normalized = 0;
    return report;
}

std::string FilterReport::to_json() const {
    nlohmann::json j = {{"total", total}, {"compilable", compilable}, {"infrastructure_errors", infrastructure_errors}};
    j["well_normalized"] = well_normalized ? nlohmann::json(*well_normalized) : nlohmann::json(nullptr);
    nlohmann::json outs = nlohmann::json::array();
    for (const auto& o : outcomes) {
        nlohmann::json r = {{"id", o.id}, {"kind", to_string(o.kind)}, {"compiled", o.compiled}, {"reason", o.reason}};
        r["normalized"] = o.normalized ? nlohmann::json(*o.normalized) : nlohmann::json(nullptr);
        if (o.infrastructure_error) r["infrastructure_error"] = true;
        if (o.offending_value) {
            r["offending_value"] = std::isfinite(*o.offending_value) ? nlohmann::json(*o.offending_value)
                                                                     : nlohmann::json(std::to_string(*o.offending_value));
        }
        outs.push_back(std::move(r));
    }
    j["outcomes"] = outs;
    return j.dump(2);
}

std::string FilterReport::to_table(const std::string& label) const {
    return text_table({{"", "Total", "Compilable", "Well Normalized"},
                       {label, with_thousands(total), count_with_percent(compilable, total),
                        well_normalized ? count_with_percent(*well_normalized, total) : "n/a"}},
                      {false, true, true, true});
}

}  // namespace abrforge
