// Acceptance checks. Prints one "C<n> PASS|FAIL" line per criterion and exits
// non-zero if any selected criterion fails. `--only c3` runs a single one.
#include "abrforge/campaign.hpp"
#include "abrforge/early_stop.hpp"
#include "abrforge/filters.hpp"
#include "abrforge/trace_store.hpp"
#include "abrforge/trainer.hpp"
#include "abrforge/util/error.hpp"
#include "abrforge/util/files.hpp"
#include "abrforge/util/rng.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace abrforge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = ABRFORGE_SOURCE_DIR;

// Tolerances and budgets.
constexpr double kOracleTol = 1e-6;          // download time vs 1 ms integration, seconds
constexpr double kFixtureTol = 1e-12;        // hand-computed buffer and QoE fixtures
constexpr double kDecompositionTol = 1e-9;   // rollout reward vs its three terms
constexpr double kGradRelTol = 1e-4;         // analytic vs central differences
constexpr double kMinSeparableTnr = 0.6;
constexpr double kC1BudgetS = 60.0;
constexpr double kC4BudgetS = 600.0;
constexpr double kC5BudgetS = 600.0;
constexpr double kC7BudgetS = 900.0;

// Collects failed expectations for one criterion.
class Check {
public:
    void expect(bool ok, const std::string& what) {
        ++n_;
        if (!ok) failures_.push_back(what);
    }
    void near(double got, double want, double tol, const std::string& what) {
        std::ostringstream s;
        s.precision(17);
        s << what << ": got " << got << ", want " << want << " (tol " << tol << ")";
        expect(std::abs(got - want) <= tol, s.str());
    }
    void note(const std::string& s) { notes_.push_back(s); }
    bool ok() const { return failures_.empty(); }
    std::size_t count() const { return n_; }
    const std::vector<std::string>& failures() const { return failures_; }
    const std::vector<std::string>& notes() const { return notes_; }

private:
    std::size_t n_ = 0;
    std::vector<std::string> failures_;
    std::vector<std::string> notes_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

std::string fmt(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("abrforge_accept_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

// ---------------------------------------------------------------- C1

// Capacity integrated in 1 ms steps over the cyclic trace. Sample and start
// times are on the millisecond grid.
double oracle_download_s(const std::vector<TraceSample>& s, double size_bytes, long long start_ms) {
    const long long t0 = std::llround(s.front().time_s * 1000.0);
    std::vector<long long> at;
    for (const auto& x : s) at.push_back(std::llround(x.time_s * 1000.0) - t0);
    const long long period = at.back() + (at.back() - at[at.size() - 2]);
    double remaining = size_bytes * 8.0;
    long long ms = start_ms;
    long long steps = 0;
    std::size_t i = 0;
    while (true) {
        const long long m = ms % period;
        if (m == 0) i = 0;
        while (i + 1 < at.size() && at[i + 1] <= m) ++i;
        const double cap = s[i].throughput_mbps * 1000.0;
        if (cap >= remaining) return (static_cast<double>(steps) + remaining / cap) / 1000.0;
        remaining -= cap;
        ++ms;
        ++steps;
    }
}

std::vector<TraceSample> random_grid_trace(Rng& rng) {
    std::vector<TraceSample> s;
    long long t = static_cast<long long>(rng.below(3000));
    const std::size_t n = 2 + rng.below(12);
    for (std::size_t i = 0; i < n; ++i) {
        const double mbps = rng.uniform() < 0.2 ? 0.0 : rng.uniform(0.2, 12.0);
        s.push_back({static_cast<double>(t) / 1000.0, mbps});
        t += 200 + static_cast<long long>(rng.below(4000));
    }
    s[rng.below(n)].throughput_mbps = rng.uniform(0.5, 6.0);
    return s;
}

// Level 1 is twice level 0, so the two-level ladder below stays valid.
VideoManifest two_level_manifest(std::vector<double> level0, double chunk_s) {
    VideoManifest m;
    m.n_chunks = level0.size();
    m.chunk_duration_s = chunk_s;
    std::vector<double> level1;
    for (double v : level0) level1.push_back(2.0 * v);
    m.sizes_bytes = {std::move(level0), std::move(level1)};
    return m;
}

const BitrateLadder kTwoLevels{{300.0, 750.0}};

Check c1() {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto samples = random_grid_trace(rng);
        const Trace t("r", samples);
        const double size = rng.uniform(10'000.0, 3'000'000.0);
        const long long start_ms = static_cast<long long>(rng.below(60'000));
        const double got = download_chunk(t, size, static_cast<double>(start_ms) / 1000.0).duration_s;
        const double want = oracle_download_s(samples, size, start_ms);
        worst = std::max(worst, std::abs(got - want));
        c.near(got, want, kOracleTol, "oracle case " + std::to_string(trial));
    }
    c.note("200 oracle cases, worst |diff| " + sci(worst) + " s");

    // 1 Mbps moves 125000 bytes per second.
    const Trace link("one", {{0.0, 1.0}});
    {
        // three 1 s downloads of 4 s chunks leave 10 s, then a 4 s download
        const VideoManifest m = two_level_manifest({125'000, 125'000, 125'000, 500'000}, 4.0);
        Session s(link, m, kTwoLevels);
        const StepResult first = s.step(0);
        c.near(first.rebuffer_s, 1.0, kFixtureTol, "startup stall");
        c.near(s.buffer_s(), 4.0, kFixtureTol, "buffer after chunk 0");
        s.step(0);
        c.near(s.buffer_s(), 7.0, kFixtureTol, "buffer after chunk 1");
        s.step(0);
        c.near(s.buffer_s(), 10.0, kFixtureTol, "buffer after chunk 2");
        const StepResult r = s.step(0);
        c.near(r.download_time_s, 4.0, kFixtureTol, "download of chunk 3");
        c.near(r.rebuffer_s, 0.0, 0.0, "no stall with 10 s buffered");
        c.near(s.buffer_s(), 10.0, kFixtureTol, "10 - 4 + 4");
    }
    {
        // 1 s buffered, 4 s download: 3 s stall, then one chunk of buffer
        const VideoManifest m = two_level_manifest({62'500, 500'000}, 1.0);
        Session s(link, m, kTwoLevels);
        s.step(0);
        c.near(s.buffer_s(), 1.0, kFixtureTol, "buffer after 0.5 s startup");
        const StepResult r = s.step(0);
        c.near(r.rebuffer_s, 3.0, kFixtureTol, "stall of 4 - 1");
        c.near(s.buffer_s(), 1.0, kFixtureTol, "buffer after stall");
    }
    {
        // 20 instant chunks fill the 60 s cap; a 1 s download then waits 3 s
        const Trace fast("fast", {{0.0, 1000.0}});
        std::vector<double> sizes(20, 125.0);
        sizes.push_back(125e6);
        const VideoManifest m = two_level_manifest(sizes, 4.0);
        Session s(fast, m, kTwoLevels);
        for (int i = 0; i < 20; ++i) s.step(0);
        c.near(s.buffer_s(), 60.0, kFixtureTol, "buffer at cap");
        const StepResult r = s.step(0);
        c.near(r.idle_wait_s, 3.0, 1e-9, "idle wait at cap");
        c.near(s.buffer_s(), 60.0, 0.0, "buffer held at cap");
    }
    const double elapsed = seconds_since(t0);
    c.expect(elapsed < kC1BudgetS, "runtime " + fmt(elapsed) + " s over budget");
    c.note("runtime " + fmt(elapsed) + " s");
    return c;
}

// ---------------------------------------------------------------- C2

Check c2() {
    Check c;
    // Mbps arithmetic in binary floating point is not exact, hence kFixtureTol.
    c.near(qoe_lin(4300, 2850, 0.0), 2.85, kFixtureTol, "4.3 - |4.3 - 2.85|");
    c.near(qoe_lin(300, 300, 0.0), 0.3, kFixtureTol, "0.3 with no switch");
    c.near(qoe_lin(300, 750, 2.0, 4.3), -8.75, kFixtureTol, "0.3 - 4.3*2 - 0.45");

    Rng rng(77);
    const BitrateLadder ladder = BitrateLadder::low();
    const SimConfig cfg;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const Trace t("r", random_grid_trace(rng));
        const VideoManifest m = synth_manifest(ladder, cfg.n_chunks, cfg.chunk_duration_s, rng.uniform(0.0, 0.3), trial);
        Session s(t, m, ladder, cfg, rng.uniform(0.0, 20.0));
        Rng pol(trial);
        const RolloutResult r = rollout([&](const StreamObservation&) { return pol.below(ladder.size()); }, s);
        double quality = 0, rebuf = 0, smooth = 0;
        double prev = ladder.levels_kbps[cfg.default_level] / 1000.0;
        for (const auto& st : r.steps) {
            const double mbps = ladder.levels_kbps[st.level] / 1000.0;
            quality += mbps;
            rebuf += st.rebuffer_s;
            smooth += std::abs(mbps - prev);
            prev = mbps;
        }
        const double want = quality - cfg.rebuffer_penalty * rebuf - cfg.smoothness_weight * smooth;
        worst = std::max(worst, std::abs(r.total_reward - want));
        c.near(r.total_reward, want, kDecompositionTol, "decomposition, rollout " + std::to_string(trial));
    }
    c.note("50 rollouts, worst |diff| " + sci(worst));
    return c;
}

// ---------------------------------------------------------------- C3

CandidateDesign state_candidate(const std::string& id, const std::string& body) {
    CandidateDesign d;
    d.id = id;
    d.kind = CandidateKind::state;
    d.source_text =
        "fn state(throughput_mbps, download_time_s, next_chunk_sizes_bytes, buffer_s, chunks_remaining, "
        "last_level, buffer_history_s) {\n" +
        body + "}\n";
    return d;
}

void check_subset_law(Check& c, const FilterReport& r, const std::string& label) {
    c.expect(r.compilable <= r.total, label + ": compilable <= total");
    if (r.well_normalized) c.expect(*r.well_normalized <= r.compilable, label + ": normalized <= compilable");
    std::size_t compiled = 0, normalized = 0;
    for (const auto& o : r.outcomes) {
        if (o.compiled) ++compiled;
        if (o.normalized.value_or(false)) {
            ++normalized;
            c.expect(o.compiled, label + ": " + o.id + " normalized without compiling");
        }
        if (!o.compiled) c.expect(!o.normalized.has_value(), label + ": " + o.id + " fuzzed after compile failure");
    }
    // Extraction failures are counted in total but have no outcome row.
    c.expect(compiled == r.compilable, label + ": compiled outcomes match the count");
    if (r.well_normalized) c.expect(normalized == *r.well_normalized, label + ": normalized outcomes match");
}

Check c3() {
    Check c;
    const json manifest = json::parse(read_file(kRoot / "corpus" / "fixtures" / "state_manifest.json"));
    ReplayClient client(kRoot / "corpus" / "replay" / "state.jsonl");
    GenerationBatch batch = generate_batch(client, CandidateKind::state, 50,
                                           load_prompt_template(kRoot / "prompts", CandidateKind::state), {});
    const FuzzConfig fuzz;
    c.near(fuzz.threshold, 100.0, 0.0, "default threshold T");
    const FilterReport r = run_prefilter(batch, fuzz, CheckContext{});
    c.expect(r.total == manifest.at("total").get<std::size_t>() && r.total == 50,
             "total " + std::to_string(r.total));
    c.expect(r.compilable == manifest.at("compilable").get<std::size_t>() && r.compilable == 30,
             "compilable " + std::to_string(r.compilable));
    c.expect(r.well_normalized && *r.well_normalized == manifest.at("well_normalized").get<std::size_t>() &&
                 *r.well_normalized == 18,
             "well_normalized " + std::to_string(r.well_normalized.value_or(0)));
    c.note("state fixture (" + std::to_string(r.total) + ", " + std::to_string(r.compilable) + ", " +
           std::to_string(r.well_normalized.value_or(0)) + ")");
    check_subset_law(c, r, "state batch");

    const CheckContext ctx;
    const CandidateDesign raw = state_candidate("raw_bytes", "    return [next_chunk_sizes_bytes[5]];\n");
    c.expect(compile_check(raw, ctx).passed, "raw-bytes state compiles");
    const CheckOutcome raw_out = normalization_check(raw, fuzz, ctx);
    c.expect(!raw_out.passed, "raw-bytes state rejected at T=100");
    c.expect(raw_out.offending_value && *raw_out.offending_value > 1e6, "raw-bytes offending value above 1e6");

    ReplayClient net_client(kRoot / "corpus" / "replay" / "network.jsonl");
    GenerationBatch nets = generate_batch(net_client, CandidateKind::network, 50,
                                          load_prompt_template(kRoot / "prompts", CandidateKind::network), {});
    const FilterReport nr = run_prefilter(nets, fuzz, CheckContext{});
    c.expect(!nr.well_normalized.has_value(), "network batch has no normalization count");
    check_subset_law(c, nr, "network batch");

    // Subset law on random sub-batches of the state corpus.
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<CandidateDesign> sub;
        for (const auto& d : batch.candidates) {
            if (rng.uniform() < 0.5) {
                CandidateDesign fresh = d;
                fresh.status = CandidateStatus::raw;
                fresh.rejection_reason.reset();
                sub.push_back(fresh);
            }
        }
        if (sub.empty()) continue;
        FuzzConfig f;
        f.threshold = std::pow(10.0, static_cast<double>(trial));
        check_subset_law(c, run_prefilter(sub, f, ctx), "sub-batch " + std::to_string(trial));
    }
    return c;
}

// ---------------------------------------------------------------- C4

std::vector<std::vector<LabeledRun>> fold_sets(const std::vector<LabeledRun>& runs, const CVReport& r, std::size_t k) {
    std::vector<std::vector<LabeledRun>> out(k);
    for (std::size_t i = 0; i < runs.size(); ++i) out[r.fold_of[i]].push_back(runs[i]);
    return out;
}

// Best TNR achievable at FNR 0 when every observed score is tried as the threshold.
double sweep_oracle_tnr(const StopPredictor& p, const std::vector<LabeledRun>& runs, double fraction) {
    std::vector<double> pos, neg;
    for (const auto& r : runs) (r.label_for(fraction) ? pos : neg).push_back(p.score(r));
    double best = 0.0;
    std::vector<double> cand = pos;
    cand.insert(cand.end(), neg.begin(), neg.end());
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    for (double th : cand) {
        if (!std::all_of(pos.begin(), pos.end(), [&](double s) { return s >= th; })) break;
        const auto stopped = std::count_if(neg.begin(), neg.end(), [&](double s) { return s < th; });
        best = std::max(best, static_cast<double>(stopped) / static_cast<double>(neg.size()));
    }
    return best;
}

Check c4() {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = 2000, epochs = 200;
    const PrefixConfig pc{100, 50};
    CvConfig cv;

    const auto noisy = synthetic_runs(n, epochs, 8, false);
    const auto runs = label_runs(noisy, cv.smoothed_fraction, pc);
    const auto top1 = std::count_if(runs.begin(), runs.end(), [&](const LabeledRun& r) { return r.label_for(0.01); });
    const auto top20 = std::count_if(runs.begin(), runs.end(), [&](const LabeledRun& r) { return r.label_for(0.20); });
    c.expect(top1 == 20, "top-1% positives " + std::to_string(top1));
    c.expect(top20 == 400, "top-20% positives " + std::to_string(top20));
    c.expect(positive_count(n, 0.01) == 20 && positive_count(n, 0.20) == 400, "positive_count arithmetic");

    // Heuristic scores against the raw prefix.
    const StopPredictor hmax{StopMethod::heuristic_max, 0.0, nullptr};
    const StopPredictor hlast{StopMethod::heuristic_last, 0.0, nullptr};
    std::map<std::string, const ScoredRun*> by_id;
    for (const auto& s : noisy) by_id[s.run_id] = &s;
    std::size_t score_mismatch = 0;
    for (const auto& r : runs) {
        const auto& curve = by_id.at(r.run_id)->curve;
        const double mx = *std::max_element(curve.begin(), curve.begin() + static_cast<long>(pc.k_epochs));
        const double last = curve[pc.k_epochs - 1];
        if (hmax.score(r) != mx || hlast.score(r) != last) ++score_mismatch;
    }
    c.expect(score_mismatch == 0, std::to_string(score_mismatch) + " heuristic scores differ from the raw prefix");

    // Folds: 5 x 400, each the training set of its own fold.
    const CVReport folds = cross_validate(runs, StopMethod::heuristic_max, cv);
    c.expect(folds.folds.size() == cv.k_folds, "fold count");
    for (const auto& f : folds.folds) {
        c.expect(f.train_size == 400, "fold " + std::to_string(f.fold) + " trains on " + std::to_string(f.train_size));
        c.expect(f.test_size == 1600, "fold " + std::to_string(f.fold) + " tests on " + std::to_string(f.test_size));
    }

    // FNR 0 on every tuning set, and tuned TNR equal to the sweep oracle.
    std::size_t tuned = 0, no_positive = 0;
    const auto sets = fold_sets(runs, folds, cv.k_folds);
    ClassifierConfig quick = cv.classifier;
    quick.train_steps = 100;
    for (std::size_t f = 0; f < sets.size(); ++f) {
        const auto learned = train_predictor(StopMethod::reward_only, sets[f], cv.seed + f, quick);
        for (const StopPredictor* base : {&hmax, &hlast, &learned}) {
            for (double frac : {cv.true_fraction, cv.smoothed_fraction}) {
                if (std::none_of(sets[f].begin(), sets[f].end(), [&](const LabeledRun& r) { return r.label_for(frac); })) {
                    ++no_positive;
                    continue;
                }
                StopPredictor p = *base;
                p.decision_threshold = tune_threshold(p, sets[f], frac);
                const StopRates rates = evaluate_predictor(p, sets[f], frac);
                ++tuned;
                const std::string tag = "fold " + std::to_string(f) + " " + to_string(p.method) + " @" + fmt(frac, 2);
                c.expect(rates.false_negatives == 0, tag + ": FNR " + fmt(rates.fnr()));
                if (p.method != StopMethod::reward_only) {
                    c.near(rates.tnr(), sweep_oracle_tnr(p, sets[f], frac), 0.0, tag + ": TNR vs sweep oracle");
                }
            }
        }
    }
    c.note(std::to_string(tuned) + " tuning sets at FNR 0 (" + std::to_string(no_positive) + " without positives)");

    // Separable family: learned classifier on held-out folds.
    const auto sep = label_runs(synthetic_runs(n, epochs, 21, true), cv.smoothed_fraction, pc);
    const CVReport r = cross_validate(sep, StopMethod::reward_only, cv);
    c.expect(r.pooled_fnr == 0.0, "separable reward_only pooled FNR " + fmt(r.pooled_fnr));
    for (const auto& f : r.folds) {
        if (f.skipped) continue;
        c.expect(f.test.false_negatives == 0, "separable fold " + std::to_string(f.fold) + " FNR " + fmt(f.test.fnr()));
    }
    c.expect(r.mean_tnr >= kMinSeparableTnr, "separable reward_only TNR " + fmt(r.mean_tnr));
    c.note("separable reward_only FNR " + fmt(r.pooled_fnr) + " TNR " + fmt(r.mean_tnr));

    const double elapsed = seconds_since(t0);
    c.expect(elapsed < kC4BudgetS, "runtime " + fmt(elapsed) + " s over budget");
    c.note("runtime " + fmt(elapsed) + " s");
    return c;
}

// ---------------------------------------------------------------- C5

double max_relative_gradient_error(PolicyNetwork& net, std::size_t n_checked) {
    const long batch = 4;
    Rng rng(5);
    nn::Matrix states(static_cast<long>(net.channels() * net.width()), batch);
    for (long col = 0; col < batch; ++col)
        for (long row = 0; row < states.rows(); ++row) states(row, col) = rng.uniform(-1.0, 1.0);
    std::vector<std::size_t> actions;
    Eigen::VectorXd adv(batch), ret(batch);
    for (long b = 0; b < batch; ++b) {
        actions.push_back(rng.below(net.n_actions()));
        adv(b) = rng.uniform(-1, 1);
        ret(b) = rng.uniform(-1, 1);
    }
    net.compute_gradients(states, actions, adv, ret, 0.3);
    const std::vector<double> g = net.gradients();
    std::vector<double> theta = net.parameters();
    const double h = 1e-6;
    double worst = 0.0;
    const std::size_t stride = std::max<std::size_t>(1, theta.size() / n_checked);
    for (std::size_t i = 0; i < theta.size(); i += stride) {
        const double keep = theta[i];
        theta[i] = keep + h;
        net.set_parameters(theta);
        const auto up = net.compute_gradients(states, actions, adv, ret, 0.3);
        theta[i] = keep - h;
        net.set_parameters(theta);
        const auto dn = net.compute_gradients(states, actions, adv, ret, 0.3);
        theta[i] = keep;
        const double fd = ((up.policy + up.value) - (dn.policy + dn.value)) / (2 * h);
        // Parameters with no influence on this batch have both values near zero.
        const double scale = std::max({std::abs(fd), std::abs(g[i]), 1e-4});
        worst = std::max(worst, std::abs(fd - g[i]) / scale);
    }
    net.set_parameters(theta);
    return worst;
}

Check c5() {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    const TraceDataset ds = load_dataset(kRoot / "data" / "constant5.json");
    const BitrateLadder ladder = BitrateLadder::low();
    TrainConfig cfg;
    cfg.n_epochs = 500;
    cfg.ckpt_interval = 50;
    cfg.n_seeds = 1;
    cfg.actor_lr = 1e-3;
    const auto& state = builtin(kOriginalStateId);
    const auto& network = builtin(kOriginalNetworkId);

    const TrainingRun a = train(state, network, ds, cfg, 0);
    c.expect(!a.failure, "training failed: " + a.failure.value_or(""));
    if (!a.failure) {
        const double lowest = evaluate_fixed_policy([](const StreamObservation&) { return std::size_t{0}; }, ds.test,
                                                    training_manifest(ladder, cfg), ladder, cfg.sim);
        const double trained = a.test_evals.back().second;
        c.expect(trained > lowest, "trained " + fmt(trained) + " vs lowest-bitrate " + fmt(lowest));
        c.note("test reward " + fmt(trained) + " vs lowest-bitrate " + fmt(lowest));

        const TrainingRun b = train(state, network, ds, cfg, 0);
        std::ostringstream ca, cb;
        ca.precision(17);
        cb.precision(17);
        for (double v : a.reward_curve) ca << v << "\n";
        for (double v : b.reward_curve) cb << v << "\n";
        c.expect(a.reward_curve.size() == cfg.n_epochs, "curve length");
        c.expect(ca.str() == cb.str(), "reward curves differ between identical seeds");
        bool bits = a.reward_curve.size() == b.reward_curve.size() &&
                    std::equal(a.reward_curve.begin(), a.reward_curve.end(), b.reward_curve.begin(),
                               [](double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; });
        c.expect(bits, "reward curves not bitwise identical");
    }

    StreamObservation probe;
    {
        Rng rng(0);
        probe = sample_observation(rng, ladder, SamplerRanges{}, cfg.sim.history_len, cfg.sim.chunk_duration_s);
    }
    const StateTensor st = execute_state(state, probe, SandboxPolicy{}, ladder, cfg.sim);
    auto net = instantiate_network(network, st.shape(), ladder.size(), 3, SandboxPolicy{});
    const double err = max_relative_gradient_error(*net, 400);
    c.expect(err <= kGradRelTol, "gradient relative error " + sci(err));
    c.note("reference network " + std::to_string(net->n_params()) + " params, FD worst rel error " + sci(err));

    const double elapsed = seconds_since(t0);
    c.expect(elapsed < kC5BudgetS, "runtime " + fmt(elapsed) + " s over budget");
    c.note("runtime " + fmt(elapsed) + " s");
    return c;
}

// ---------------------------------------------------------------- C6

TrainingRun eval_run(std::uint64_t seed, const std::vector<double>& evals) {
    TrainingRun run;
    run.run_id = "fixture-s" + std::to_string(seed);
    run.seed = seed;
    for (std::size_t i = 0; i < evals.size(); ++i) run.test_evals.emplace_back((i + 1) * 10, evals[i]);
    return run;
}

Check c6() {
    Check c;
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t seeds = 1 + rng.below(7);
        std::vector<TrainingRun> runs;
        std::vector<double> means;
        for (std::size_t s = 0; s < seeds; ++s) {
            std::vector<double> evals(10 + rng.below(15));
            for (auto& v : evals) v = rng.uniform(-5.0, 5.0);
            double sum = 0.0;
            for (std::size_t i = evals.size() - 10; i < evals.size(); ++i) sum += evals[i];
            means.push_back(sum / 10.0);
            runs.push_back(eval_run(s, evals));
        }
        std::sort(means.begin(), means.end());
        // Lower median for even seed counts.
        const double want = means[(means.size() - 1) / 2];
        const double got = final_score(runs).final_score;
        c.near(got, want, 1e-12, "median of per-seed means, trial " + std::to_string(trial));
        for (int p = 0; p < 5; ++p) {
            for (std::size_t i = runs.size(); i > 1; --i) std::swap(runs[i - 1], runs[rng.below(i)]);
            c.expect(final_score(runs).final_score == got, "seed permutation changed the score, trial " +
                                                                std::to_string(trial));
        }
    }

    const std::string a = format_improvement(0.482, 0.308);
    const std::string b = format_improvement(14.973, 11.705);
    c.expect(a == "56.3%", "(0.308, 0.482) renders " + a + ", expected 56.3%");
    c.expect(b == "27.9%", "(11.705, 14.973) renders " + b + ", expected 27.9%");
    c.note("renderings " + a + " and " + b);
    return c;
}

// ---------------------------------------------------------------- C7

Check c7() {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    CampaignConfig base = CampaignConfig::from_json_file(kRoot / "configs" / "micro_state.json");
    c.expect(base.early_stop.enabled, "early stop enabled in the micro config");
    c.expect(base.generation.n == 50 && base.training.n_epochs == 200, "50 responses, 200 epochs");

    std::vector<fs::path> dirs = {fresh_dir("c7a"), fresh_dir("c7b")};
    std::vector<CampaignResult> results;
    for (const auto& d : dirs) {
        CampaignConfig cfg = base;
        cfg.output_dir = d;
        results.push_back(run_campaign(cfg));
    }
    c.expect(read_file(dirs[0] / "leaderboard.json") == read_file(dirs[1] / "leaderboard.json"),
             "leaderboards differ between identical runs");
    c.expect(read_file(dirs[0] / "ledger.jsonl") == read_file(dirs[1] / "ledger.jsonl"),
             "ledgers differ between identical runs");
    for (const auto& d : dirs) {
        const auto issues = reconcile(d);
        c.expect(issues.empty(), "reconcile " + d.string() + ": " + (issues.empty() ? "" : issues.front()));
    }
    const auto& lb = results[0].leaderboard;
    c.expect(lb.baseline() != nullptr, "leaderboard has the baseline row");
    c.note("leaderboard " + std::to_string(lb.rows.size()) + " scored, " + std::to_string(lb.stopped.size()) +
           " early-stopped, " + std::to_string(lb.failed.size()) + " failed");

    std::vector<ScoreEntry> states, nets;
    Rng rng(7);
    for (int i = 0; i < 40; ++i) states.push_back({"s" + std::to_string(i), rng.uniform()});
    for (int i = 0; i < 35; ++i) nets.push_back({"n" + std::to_string(i), rng.uniform()});
    const auto jobs = combine_top(states, nets, 30);
    const std::set<std::pair<std::string, std::string>> uniq(jobs.begin(), jobs.end());
    c.expect(jobs.size() == 900 && uniq.size() == 900, "combine_top(30, 30) gave " + std::to_string(jobs.size()));

    const double elapsed = seconds_since(t0);
    c.expect(elapsed < kC7BudgetS, "runtime " + fmt(elapsed) + " s over budget");
    c.note("runtime " + fmt(elapsed) + " s");
    for (const auto& d : dirs) fs::remove_all(d);
    return c;
}

// ---------------------------------------------------------------- C8

Check c8() {
    Check c;
    const CheckContext ctx;
    const FuzzConfig fuzz;
    std::size_t n_states = 0, n_nets = 0;
    for (const auto& d : load_builtin_corpus()) {
        const CheckOutcome compiled = compile_check(d, ctx);
        c.expect(compiled.passed, d.id + " compile: " + compiled.reason);
        if (d.kind == CandidateKind::state) {
            ++n_states;
            const CheckOutcome norm = normalization_check(d, fuzz, ctx);
            c.expect(norm.passed, d.id + " normalization: " + norm.reason);
            for (const auto& ladder : ctx.fuzz_ladders) {
                StateFunction fn(d, ctx.policy, ladder, ctx.sim);
                Rng rng(42);
                std::optional<std::pair<std::size_t, std::size_t>> shape;
                bool stable = true;
                for (int i = 0; i < 100; ++i) {
                    const auto obs =
                        sample_observation(rng, ladder, fuzz.ranges, ctx.sim.history_len, ctx.sim.chunk_duration_s);
                    try {
                        const StateTensor t = fn(obs);
                        if (!shape) shape = t.shape();
                        stable = stable && t.shape() == *shape && t.all_finite();
                    } catch (const std::exception& e) {
                        stable = false;
                        c.expect(false, d.id + " draw " + std::to_string(i) + ": " + e.what());
                        break;
                    }
                }
                c.expect(stable, d.id + " shape unstable over 100 observations");
            }
        } else {
            ++n_nets;
            for (std::size_t actions : {std::size_t{6}, std::size_t{4}}) {
                const auto net = instantiate_network(d, ctx.network_state_shape, actions, 0, ctx.policy);
                const std::string probe = probe_policy(*net);
                c.expect(probe.empty(), d.id + " probe: " + probe);
                nn::Matrix x = nn::Matrix::Constant(static_cast<long>(net->channels() * net->width()), 3, 0.5);
                const PolicyOutput out = net->forward(x);
                for (long col = 0; col < out.probs.cols(); ++col) {
                    const bool simplex = std::abs(out.probs.col(col).sum() - 1.0) <= 1e-6 &&
                                         out.probs.col(col).minCoeff() >= 0.0 &&
                                         out.probs.rows() == static_cast<long>(actions);
                    c.expect(simplex, d.id + " output is not a simplex");
                }
            }
        }
    }
    c.expect(n_states > 0 && n_nets > 0, "builtin corpus has states and networks");
    c.note(std::to_string(n_states) + " builtin states, " + std::to_string(n_nets) + " builtin networks");
    return c;
}

struct Criterion {
    std::string id;
    std::string title;
    std::function<Check()> run;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    std::string only;
    bool verbose = false;
    app.add_option("--only", only, "run a single criterion, e.g. c3");
    app.add_flag("-v,--verbose", verbose, "print every failed expectation");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> all = {
        {"c1", "simulator matches the 1 ms oracle and buffer fixtures", c1},
        {"c2", "QoE fixtures and reward decomposition", c2},
        {"c3", "filter accounting on the fixture corpus", c3},
        {"c4", "early-stop labeling, tuning and cross-validation", c4},
        {"c5", "training smoke test, determinism and gradients", c5},
        {"c6", "scoring protocol and improvement rendering", c6},
        {"c7", "offline micro campaign", c7},
        {"c8", "builtin corpus validity", c8},
    };
    bool any = false, all_ok = true;
    for (const auto& crit : all) {
        if (!only.empty() && only != crit.id) continue;
        any = true;
        Check result;
        try {
            result = crit.run();
        } catch (const std::exception& e) {
            result.expect(false, std::string("unexpected exception: ") + e.what());
        }
        std::string upper = crit.id;
        upper[0] = 'C';
        std::cout << upper << (result.ok() ? " PASS: " : " FAIL: ") << crit.title << " (" << result.count()
                  << " checks";
        for (const auto& n : result.notes()) std::cout << "; " << n;
        std::cout << ")\n";
        const std::size_t shown = verbose ? result.failures().size() : std::min<std::size_t>(5, result.failures().size());
        for (std::size_t i = 0; i < shown; ++i) std::cout << "    " << result.failures()[i] << "\n";
        if (shown < result.failures().size()) {
            std::cout << "    ... " << result.failures().size() - shown << " more\n";
        }
        all_ok = all_ok && result.ok();
    }
    if (!any) {
        std::cerr << "unknown criterion: " << only << "\n";
        return 1;
    }
    return all_ok ? 0 : 1;
}
