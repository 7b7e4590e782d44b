#include "abrforge/early_stop.hpp"

#include "abrforge/util/error.hpp"
#include "abrforge/util/files.hpp"
#include "abrforge/util/format.hpp"
#include "abrforge/util/hash.hpp"
#include "abrforge/util/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace abrforge {

using nlohmann::json;

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string to_string(StopMethod m) {
    switch (m) {
        case StopMethod::reward_only: return "reward_only";
        case StopMethod::text_only: return "text_only";
        case StopMethod::text_reward: return "text_reward";
        case StopMethod::heuristic_max: return "heuristic_max";
        case StopMethod::heuristic_last: return "heuristic_last";
    }
    return "?";
}

StopMethod stop_method_from_string(const std::string& s) {
    for (auto m : {StopMethod::reward_only, StopMethod::text_only, StopMethod::text_reward, StopMethod::heuristic_max,
                   StopMethod::heuristic_last}) {
        if (to_string(m) == s) return m;
    }
    throw Error("unknown early-stop method '" + s + "'");
}

std::string to_string(StopDecision d) { return d == StopDecision::stop ? "stop" : "continue"; }

bool is_learned(StopMethod m) { return m == StopMethod::reward_only || m == StopMethod::text_only || m == StopMethod::text_reward; }
bool uses_text(StopMethod m) { return m == StopMethod::text_only || m == StopMethod::text_reward; }
bool uses_rewards(StopMethod m) { return m != StopMethod::text_only; }

void PrefixConfig::validate() const {
    if (k_epochs < 1) throw Error("prefix K must be >= 1");
    if (length < 1) throw Error("prefix length L must be >= 1");
}

PrefixFeatures make_prefix(const std::vector<double>& curve, const PrefixConfig& cfg) {
    cfg.validate();
    if (curve.size() < cfg.k_epochs) {
        throw Error("curve has " + std::to_string(curve.size()) + " epochs; the prefix needs " +
                    std::to_string(cfg.k_epochs));
    }
    const std::size_t K = cfg.k_epochs, L = cfg.length;
    PrefixFeatures f;
    f.pooled.resize(L);
    for (std::size_t i = 0; i < L; ++i) {
        const std::size_t lo = i * K / L;
        const std::size_t hi = std::max(lo + 1, (i + 1) * K / L);
        double sum = 0.0;
        for (std::size_t j = lo; j < hi; ++j) sum += curve[j];
        f.pooled[i] = sum / static_cast<double>(hi - lo);
    }
    f.max = *std::max_element(curve.begin(), curve.begin() + static_cast<long>(K));
    f.last = curve[K - 1];
    return f;
}

bool LabeledRun::label_for(double positive_fraction) const { return rank < positive_count(n_runs, positive_fraction); }

std::size_t positive_count(std::size_t n, double positive_fraction) {
    if (!(positive_fraction > 0.0 && positive_fraction < 1.0)) throw Error("positive fraction must be in (0, 1)");
    constexpr std::uint64_t kScale = 1000000000ULL;
    const auto p = static_cast<unsigned __int128>(std::llround(positive_fraction * static_cast<double>(kScale)));
    const unsigned __int128 num = p * n;
    return static_cast<std::size_t>((num + kScale - 1) / kScale);
}

std::vector<LabeledRun> label_runs(const std::vector<ScoredRun>& runs, double positive_fraction,
                                   const PrefixConfig& cfg) {
    const std::size_t n_pos = positive_count(runs.size(), positive_fraction);
    std::vector<std::size_t> order(runs.size());
    std::iota(order.begin(), order.end(), 0);
    for (const auto& r : runs) {
        if (!r.final_score || !std::isfinite(*r.final_score)) throw Error("run " + r.run_id + " has no final score");
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (*runs[a].final_score != *runs[b].final_score) return *runs[a].final_score > *runs[b].final_score;
        return runs[a].run_id < runs[b].run_id;
    });
    std::vector<LabeledRun> out(runs.size());
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const ScoredRun& r = runs[order[rank]];
        LabeledRun& l = out[order[rank]];
        l.run_id = r.run_id;
        l.prefix = make_prefix(r.curve, cfg);
        l.embedding = r.embedding;
        l.final_score = *r.final_score;
        l.rank = rank;
        l.n_runs = runs.size();
        l.final_rank_percentile = static_cast<double>(rank) / static_cast<double>(runs.size());
        l.label = rank < n_pos;
    }
    return out;
}

void ClassifierConfig::validate() const {
    if (!conv1_filters || !conv1_kernel || !pool1 || !conv2_filters || !conv2_kernel || !pool2 || !dense_units) {
        throw Error("classifier widths, kernels and pools must be >= 1");
    }
    if (train_steps < 1) throw Error("classifier train_steps must be >= 1");
    if (!(lr > 0.0)) throw Error("classifier lr must be > 0");
}

// Two convolution stages with average pooling over the pooled prefix, the
// prefix max/last and (for text methods) the code embedding feeding one dense
// stage and a logit.
class CurveClassifier {
public:
    CurveClassifier(StopMethod method, ClassifierConfig cfg, std::size_t length, std::size_t embed_dim,
                    std::uint64_t seed)
        : method_(method), cfg_(cfg), length_(length), embed_dim_(embed_dim) {
        cfg_.validate();
        Rng rng(seed);
        std::size_t features = 0;
        if (uses_rewards(method_)) {
            k1_ = std::min(cfg_.conv1_kernel, length_);
            const std::size_t w1 = length_ - k1_ + 1;
            p1_ = std::min(cfg_.pool1, w1);
            w1p_ = w1 / p1_;
            k2_ = std::min(cfg_.conv2_kernel, w1p_);
            const std::size_t w2 = w1p_ - k2_ + 1;
            p2_ = std::min(cfg_.pool2, w2);
            w2p_ = w2 / p2_;
            c1w_ = store_.add_weight(cfg_.conv1_filters, k1_, rng, k1_, cfg_.conv1_filters * k1_);
            c1b_ = store_.add_bias(cfg_.conv1_filters);
            c2w_ = store_.add_weight(cfg_.conv2_filters, cfg_.conv1_filters * k2_, rng, cfg_.conv1_filters * k2_,
                                     cfg_.conv2_filters * k2_);
            c2b_ = store_.add_bias(cfg_.conv2_filters);
            features += cfg_.conv2_filters * w2p_ + 2;
        }
        if (uses_text(method_)) {
            if (embed_dim_ == 0) throw Error("text methods need code embeddings");
            features += embed_dim_;
        }
        dw_ = store_.add_weight(cfg_.dense_units, features, rng);
        db_ = store_.add_bias(cfg_.dense_units);
        ow_ = store_.add_weight(1, cfg_.dense_units, rng);
        ob_ = store_.add_bias(1);
    }

    std::size_t length() const { return length_; }
    std::size_t embed_dim() const { return embed_dim_; }
    StopMethod method() const { return method_; }
    const ClassifierConfig& config() const { return cfg_; }

    // Column per run: [pooled (L), max, last, embedding (E)].
    nn::Matrix inputs(const std::vector<const PrefixFeatures*>& prefixes,
                      const std::vector<const std::vector<double>*>& embeddings) const {
        const long rows = static_cast<long>(length_ + 2 + embed_dim_);
        nn::Matrix X = nn::Matrix::Zero(rows, static_cast<long>(prefixes.size()));
        for (std::size_t b = 0; b < prefixes.size(); ++b) {
            const long col = static_cast<long>(b);
            if (uses_rewards(method_)) {
                const PrefixFeatures& p = *prefixes[b];
                if (p.pooled.size() != length_) {
                    throw Error("prefix length " + std::to_string(p.pooled.size()) + " does not match the classifier's " +
                                std::to_string(length_));
                }
                for (std::size_t i = 0; i < length_; ++i) X(static_cast<long>(i), col) = norm(p.pooled[i]);
                X(static_cast<long>(length_), col) = norm(p.max);
                X(static_cast<long>(length_ + 1), col) = norm(p.last);
            }
            if (uses_text(method_)) {
                const std::vector<double>* e = embeddings[b];
                if (e == nullptr) throw Error("text method requires a code embedding");
                if (e->size() != embed_dim_) throw Error("embedding dimension does not match the classifier");
                for (std::size_t i = 0; i < embed_dim_; ++i) X(static_cast<long>(length_ + 2 + i), col) = (*e)[i];
            }
        }
        return X;
    }

    nn::Var logits(nn::Tape& t, const nn::Matrix& X) const {
        const nn::Var x = t.constant(X);
        std::vector<nn::Var> parts;
        if (uses_rewards(method_)) {
            const nn::Var curve = t.slice_rows(x, 0, length_);
            nn::Var h = t.conv1d(curve, t.param(c1w_), t.param(c1b_), 1, length_, k1_);
            h = t.activate(h, nn::Activation::relu);
            h = t.avg_pool(h, cfg_.conv1_filters, length_ - k1_ + 1, p1_);
            h = t.conv1d(h, t.param(c2w_), t.param(c2b_), cfg_.conv1_filters, w1p_, k2_);
            h = t.activate(h, nn::Activation::relu);
            h = t.avg_pool(h, cfg_.conv2_filters, w1p_ - k2_ + 1, p2_);
            parts.push_back(h);
            parts.push_back(t.slice_rows(x, length_, 2));
        }
        if (uses_text(method_)) parts.push_back(t.slice_rows(x, length_ + 2, embed_dim_));
        const nn::Var feats = parts.size() == 1 ? parts[0] : t.concat_rows(parts);
        nn::Var h = t.add_bias(t.matmul(t.param(dw_), feats), t.param(db_));
        h = t.activate(h, nn::Activation::relu);
        return t.add_bias(t.matmul(t.param(ow_), h), t.param(ob_));
    }

    void fit(const std::vector<LabeledRun>& set) {
        double sum = 0.0, sq = 0.0;
        std::size_t n = 0;
        if (uses_rewards(method_)) {
            for (const auto& r : set) {
                for (double v : r.prefix.pooled) {
                    sum += v;
                    sq += v * v;
                    ++n;
                }
            }
            mean_ = sum / static_cast<double>(n);
            const double var = sq / static_cast<double>(n) - mean_ * mean_;
            scale_ = var > 1e-24 ? std::sqrt(var) : 1.0;
        }
        std::vector<const PrefixFeatures*> prefixes;
        std::vector<const std::vector<double>*> embeddings;
        Eigen::VectorXd y(static_cast<long>(set.size())), w(static_cast<long>(set.size()));
        std::size_t n_pos = 0;
        for (const auto& r : set) n_pos += r.label ? 1 : 0;
        const double pos_weight =
            cfg_.class_weighting ? static_cast<double>(set.size() - n_pos) / static_cast<double>(n_pos) : 1.0;
        for (std::size_t i = 0; i < set.size(); ++i) {
            prefixes.push_back(&set[i].prefix);
            embeddings.push_back(set[i].embedding ? &*set[i].embedding : nullptr);
            y(static_cast<long>(i)) = set[i].label ? 1.0 : 0.0;
            w(static_cast<long>(i)) = set[i].label ? pos_weight : 1.0;
        }
        const nn::Matrix X = inputs(prefixes, embeddings);
        nn::Adam adam(store_, 0, nn::AdamConfig{cfg_.lr});
        for (std::size_t step = 0; step < cfg_.train_steps; ++step) {
            store_.zero_grad();
            nn::Tape t(&store_);
            const nn::Var loss = t.bce_logits_loss(logits(t, X), y, w);
            if (!std::isfinite(t.value(loss)(0, 0))) throw Error("classifier loss diverged");
            t.backward(loss);
            adam.step(store_);
        }
    }

    double probability(const PrefixFeatures& p, const std::vector<double>* embedding) const {
        nn::Tape t(const_cast<nn::ParamStore*>(&store_));
        const double z = t.value(logits(t, inputs({&p}, {embedding})))(0, 0);
        return 1.0 / (1.0 + std::exp(-z));
    }

    json to_json() const {
        const auto& c = cfg_;
        return {{"length", length_},
                {"embed_dim", embed_dim_},
                {"mean", mean_},
                {"scale", scale_},
                {"config",
                 {{"conv1_filters", c.conv1_filters},
                  {"conv1_kernel", c.conv1_kernel},
                  {"pool1", c.pool1},
                  {"conv2_filters", c.conv2_filters},
                  {"conv2_kernel", c.conv2_kernel},
                  {"pool2", c.pool2},
                  {"dense_units", c.dense_units},
                  {"train_steps", c.train_steps},
                  {"lr", c.lr},
                  {"class_weighting", c.class_weighting}}},
                {"parameters", store_.flat_values()}};
    }

    static std::shared_ptr<CurveClassifier> from_json(StopMethod method, const json& j) {
        ClassifierConfig c;
        const json& jc = j.at("config");
        c.conv1_filters = jc.at("conv1_filters");
        c.conv1_kernel = jc.at("conv1_kernel");
        c.pool1 = jc.at("pool1");
        c.conv2_filters = jc.at("conv2_filters");
        c.conv2_kernel = jc.at("conv2_kernel");
        c.pool2 = jc.at("pool2");
        c.dense_units = jc.at("dense_units");
        c.train_steps = jc.at("train_steps");
        c.lr = jc.at("lr");
        c.class_weighting = jc.at("class_weighting");
        auto m = std::make_shared<CurveClassifier>(method, c, j.at("length").get<std::size_t>(),
                                                   j.at("embed_dim").get<std::size_t>(), 0);
        m->mean_ = j.at("mean");
        m->scale_ = j.at("scale");
        m->store_.set_flat_values(j.at("parameters").get<std::vector<double>>());
        return m;
    }

private:
    double norm(double v) const { return (v - mean_) / scale_; }

    StopMethod method_;
    ClassifierConfig cfg_;
    std::size_t length_;
    std::size_t embed_dim_;
    std::size_t k1_ = 0, p1_ = 0, w1p_ = 0, k2_ = 0, p2_ = 0, w2p_ = 0;
    std::size_t c1w_ = 0, c1b_ = 0, c2w_ = 0, c2b_ = 0, dw_ = 0, db_ = 0, ow_ = 0, ob_ = 0;
    double mean_ = 0.0;
    double scale_ = 1.0;
    nn::ParamStore store_;
};

double StopPredictor::score(const PrefixFeatures& prefix, const std::vector<double>* embedding) const {
    switch (method) {
        case StopMethod::heuristic_max: return prefix.max;
        case StopMethod::heuristic_last: return prefix.last;
        default: break;
    }
    if (!model) throw Error("predictor " + to_string(method) + " has not been trained");
    if (uses_text(method) && embedding == nullptr) throw Error("predictor " + to_string(method) + " needs an embedding");
    return model->probability(prefix, embedding);
}

double StopPredictor::score(const LabeledRun& run) const {
    return score(run.prefix, run.embedding ? &*run.embedding : nullptr);
}

StopPredictor train_predictor(StopMethod method, const std::vector<LabeledRun>& train_set, std::uint64_t seed,
                              const ClassifierConfig& cfg) {
    StopPredictor pred;
    pred.method = method;
    if (!is_learned(method)) return pred;
    if (train_set.empty()) throw Error("empty training set");
    std::size_t pos = 0;
    for (const auto& r : train_set) pos += r.label ? 1 : 0;
    if (pos == 0 || pos == train_set.size()) throw Error("training set for " + to_string(method) + " has a single class");
    const std::size_t L = train_set.front().prefix.pooled.size();
    std::size_t E = 0;
    if (uses_text(method)) {
        if (!train_set.front().embedding) throw Error("run " + train_set.front().run_id + " has no embedding");
        E = train_set.front().embedding->size();
    }
    auto model = std::make_shared<CurveClassifier>(method, cfg, L, E, seed);
    model->fit(train_set);
    pred.model = std::move(model);
    return pred;
}

double tune_threshold(const StopPredictor& pred, const std::vector<LabeledRun>& tuning_set, double true_fraction) {
    double threshold = std::numeric_limits<double>::infinity();
    bool any = false;
    for (const auto& r : tuning_set) {
        if (!r.label_for(true_fraction)) continue;
        threshold = std::min(threshold, pred.score(r));
        any = true;
    }
    if (!any) throw Error("threshold tuning needs at least one positive run");
    return threshold;
}

StopDecision predict_stop(const StopPredictor& pred, const PrefixFeatures& prefix,
                          const std::vector<double>* embedding) {
    return pred.score(prefix, embedding) >= pred.decision_threshold ? StopDecision::proceed : StopDecision::stop;
}

double StopRates::fnr() const {
    return positives ? static_cast<double>(false_negatives) / static_cast<double>(positives) : kNaN;
}

double StopRates::tnr() const {
    return negatives ? static_cast<double>(true_negatives) / static_cast<double>(negatives) : kNaN;
}

StopRates evaluate_predictor(const StopPredictor& pred, const std::vector<LabeledRun>& runs, double true_fraction) {
    StopRates r;
    for (const auto& run : runs) {
        const bool stopped =
            predict_stop(pred, run.prefix, run.embedding ? &*run.embedding : nullptr) == StopDecision::stop;
        if (run.label_for(true_fraction)) {
            ++r.positives;
            r.false_negatives += stopped ? 1 : 0;
        } else {
            ++r.negatives;
            r.true_negatives += stopped ? 1 : 0;
        }
    }
    return r;
}

void CvConfig::validate() const {
    if (k_folds < 2) throw Error("k_folds must be >= 2");
    if (!(smoothed_fraction > 0.0 && smoothed_fraction < 1.0) || !(true_fraction > 0.0 && true_fraction < 1.0)) {
        throw Error("label fractions must be in (0, 1)");
    }
    if (true_fraction > smoothed_fraction) throw Error("true_fraction must not exceed smoothed_fraction");
    classifier.validate();
}

CVReport cross_validate(const std::vector<LabeledRun>& runs, StopMethod method, const CvConfig& cfg) {
    cfg.validate();
    const std::size_t N = runs.size(), k = cfg.k_folds;
    if (N < k) throw Error("cross validation needs at least k runs");
    CVReport report;
    report.method = method;
    std::vector<std::size_t> perm(N);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(mix_seed(cfg.seed, 0xC5));
    rng.shuffle(perm);
    report.fold_of.assign(N, 0);
    for (std::size_t j = 0; j < N; ++j) report.fold_of[perm[j]] = j * k / N;

    std::size_t fn = 0, pos = 0, tn = 0, neg = 0;
    double fnr_sum = 0.0, tnr_sum = 0.0;
    std::size_t fnr_n = 0, tnr_n = 0;
    for (std::size_t f = 0; f < k; ++f) {
        FoldResult fr;
        fr.fold = f;
        std::vector<LabeledRun> train, test;
        for (std::size_t i = 0; i < N; ++i) (report.fold_of[i] == f ? train : test).push_back(runs[i]);
        fr.train_size = train.size();
        fr.test_size = test.size();
        for (auto& r : train) r.label = r.label_for(cfg.smoothed_fraction);
        const bool has_true_pos = std::any_of(train.begin(), train.end(),
                                              [&](const LabeledRun& r) { return r.label_for(cfg.true_fraction); });
        const std::size_t smoothed_pos =
            static_cast<std::size_t>(std::count_if(train.begin(), train.end(), [](const LabeledRun& r) { return r.label; }));
        if (!has_true_pos) {
            fr.skipped = true;
            fr.warning = "fold " + std::to_string(f) + " skipped: no top-ranked run in its training share";
        } else if (is_learned(method) && (smoothed_pos == 0 || smoothed_pos == train.size())) {
            fr.skipped = true;
            fr.warning = "fold " + std::to_string(f) + " skipped: training share has a single class";
        }
        if (!fr.skipped) {
            StopPredictor pred = train_predictor(method, train, mix_seed(cfg.seed, f), cfg.classifier);
            pred.decision_threshold = tune_threshold(pred, train, cfg.true_fraction);
            fr.threshold = pred.decision_threshold;
            fr.test = evaluate_predictor(pred, test, cfg.true_fraction);
            fn += fr.test.false_negatives;
            pos += fr.test.positives;
            tn += fr.test.true_negatives;
            neg += fr.test.negatives;
            if (fr.test.positives) {
                fnr_sum += fr.test.fnr();
                ++fnr_n;
            }
            if (fr.test.negatives) {
                tnr_sum += fr.test.tnr();
                ++tnr_n;
            }
        }
        report.folds.push_back(std::move(fr));
    }
    report.mean_fnr = fnr_n ? fnr_sum / static_cast<double>(fnr_n) : kNaN;
    report.mean_tnr = tnr_n ? tnr_sum / static_cast<double>(tnr_n) : kNaN;
    report.pooled_fnr = pos ? static_cast<double>(fn) / static_cast<double>(pos) : kNaN;
    report.pooled_tnr = neg ? static_cast<double>(tn) / static_cast<double>(neg) : kNaN;
    return report;
}

EarlyStopHook make_early_stop_hook(const StopPredictor& pred, const PrefixConfig& cfg,
                                   std::optional<std::vector<double>> embedding) {
    cfg.validate();
    if (uses_text(pred.method) && !embedding) throw Error("text early-stop predictors need the candidate's embedding");
    return EarlyStopHook{cfg.k_epochs, [pred, cfg, embedding](const std::vector<double>& curve) {
                             return predict_stop(pred, make_prefix(curve, cfg), embedding ? &*embedding : nullptr) ==
                                    StopDecision::stop;
                         }};
}

std::string predictor_to_json(const StopPredictor& pred, const PrefixConfig& prefix) {
    json j = {{"method", to_string(pred.method)},
              {"decision_threshold", pred.decision_threshold},
              {"k_epochs", prefix.k_epochs},
              {"length", prefix.length}};
    j["model"] = pred.model ? pred.model->to_json() : json(nullptr);
    return j.dump();
}

std::pair<StopPredictor, PrefixConfig> predictor_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        StopPredictor pred;
        pred.method = stop_method_from_string(j.at("method"));
        pred.decision_threshold = j.at("decision_threshold");
        PrefixConfig prefix{j.at("k_epochs").get<std::size_t>(), j.at("length").get<std::size_t>()};
        prefix.validate();
        if (is_learned(pred.method)) {
            if (j.at("model").is_null()) throw Error("learned predictor file has no model");
            pred.model = CurveClassifier::from_json(pred.method, j.at("model"));
            if (pred.model->length() != prefix.length) throw Error("model input length does not match the prefix");
        }
        return {pred, prefix};
    } catch (const json::exception& e) {
        throw Error(std::string("malformed predictor file: ") + e.what());
    }
}

namespace {

std::string prefix_digest(const PrefixFeatures& p) {
    std::string bytes(reinterpret_cast<const char*>(p.pooled.data()), p.pooled.size() * sizeof(double));
    return sha256_hex(bytes);
}

std::string rate(double v) { return std::isnan(v) ? "n/a" : fixed(100.0 * v, 1) + "%"; }

}  // namespace

void write_labeled_runs(const std::filesystem::path& path, const std::vector<LabeledRun>& runs,
                        double smoothed_fraction, double true_fraction) {
    std::ostringstream out;
    for (const auto& r : runs) {
        out << json{{"run_id", r.run_id},
                    {"prefix_sha256", prefix_digest(r.prefix)},
                    {"prefix_max", r.prefix.max},
                    {"prefix_last", r.prefix.last},
                    {"final_score", r.final_score},
                    {"rank", r.rank},
                    {"percentile", r.final_rank_percentile},
                    {"label_smoothed", r.label_for(smoothed_fraction)},
                    {"label_true", r.label_for(true_fraction)}}
                   .dump()
            << "\n";
    }
    write_file_atomic(path, out.str());
}

std::string cv_table(const std::vector<CVReport>& reports) {
    std::size_t k = 0;
    for (const auto& r : reports) k = std::max(k, r.folds.size());
    std::string out;
    for (const bool fnr : {true, false}) {
        std::vector<std::vector<std::string>> rows;
        std::vector<std::string> header = {fnr ? "FNR" : "TNR"};
        for (std::size_t f = 0; f < k; ++f) header.push_back("fold " + std::to_string(f));
        header.push_back("mean");
        header.push_back("pooled");
        rows.push_back(header);
        for (const auto& r : reports) {
            std::vector<std::string> row = {to_string(r.method)};
            for (std::size_t f = 0; f < k; ++f) {
                if (f >= r.folds.size() || r.folds[f].skipped) {
                    row.push_back("skipped");
                } else {
                    row.push_back(rate(fnr ? r.folds[f].test.fnr() : r.folds[f].test.tnr()));
                }
            }
            row.push_back(rate(fnr ? r.mean_fnr : r.mean_tnr));
            row.push_back(rate(fnr ? r.pooled_fnr : r.pooled_tnr));
            rows.push_back(row);
        }
        std::vector<bool> align(header.size(), true);
        align[0] = false;
        if (!out.empty()) out += "\n";
        out += text_table(rows, align);
    }
    return out;
}

std::string cv_report_json(const CVReport& report) {
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    json folds = json::array();
    for (const auto& f : report.folds) {
        folds.push_back({{"fold", f.fold},
                         {"train_size", f.train_size},
                         {"test_size", f.test_size},
                         {"skipped", f.skipped},
                         {"warning", f.warning},
                         {"threshold", f.skipped ? json(nullptr) : json(f.threshold)},
                         {"positives", f.test.positives},
                         {"negatives", f.test.negatives},
                         {"false_negatives", f.test.false_negatives},
                         {"true_negatives", f.test.true_negatives},
                         {"fnr", num(f.test.fnr())},
                         {"tnr", num(f.test.tnr())}});
    }
    return json{{"method", to_string(report.method)},
                {"fold_of", report.fold_of},
                {"folds", folds},
                {"mean_fnr", num(report.mean_fnr)},
                {"mean_tnr", num(report.mean_tnr)},
                {"pooled_fnr", num(report.pooled_fnr)},
                {"pooled_tnr", num(report.pooled_tnr)}}
        .dump(2);
}

CVReport cv_report_from_json(const std::string& text) {
    auto num = [](const json& v) { return v.is_null() ? kNaN : v.get<double>(); };
    try {
        const json j = json::parse(text);
        CVReport r;
        r.method = stop_method_from_string(j.at("method"));
        r.fold_of = j.at("fold_of").get<std::vector<std::size_t>>();
        for (const auto& f : j.at("folds")) {
            FoldResult fr;
            fr.fold = f.at("fold");
            fr.train_size = f.at("train_size");
            fr.test_size = f.at("test_size");
            fr.skipped = f.at("skipped");
            fr.warning = f.at("warning");
            fr.threshold = num(f.at("threshold"));
            fr.test.positives = f.at("positives");
            fr.test.negatives = f.at("negatives");
            fr.test.false_negatives = f.at("false_negatives");
            fr.test.true_negatives = f.at("true_negatives");
            r.folds.push_back(fr);
        }
        r.mean_fnr = num(j.at("mean_fnr"));
        r.mean_tnr = num(j.at("mean_tnr"));
        r.pooled_fnr = num(j.at("pooled_fnr"));
        r.pooled_tnr = num(j.at("pooled_tnr"));
        return r;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed cross-validation report: ") + e.what());
    }
}

std::vector<ScoredRun> synthetic_runs(std::size_t n, std::size_t epochs, std::uint64_t seed, bool separable,
                                      std::size_t embedding_dim) {
    if (n == 0 || epochs == 0) throw Error("synthetic campaign needs runs and epochs");
    Rng rng(seed);
    std::vector<double> quality(n);
    std::vector<bool> elite(n, false);
    if (separable) {
        // Three tiers: the top 1% share one noiseless curve, the rest of the
        // top 20% sit in [0.6, 0.8] and everyone else in [0, 0.5].
        const std::size_t n_elite = positive_count(n, 0.01);
        const std::size_t n_top = positive_count(n, 0.2);
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        for (std::size_t j = 0; j < n; ++j) {
            if (j < n_elite) {
                quality[idx[j]] = 1.0;
                elite[idx[j]] = true;
            } else {
                quality[idx[j]] = j < n_top ? rng.uniform(0.6, 0.8) : rng.uniform(0.0, 0.5);
            }
        }
    } else {
        for (auto& q : quality) q = rng.uniform();
    }
    const double noise = separable ? 0.02 : 0.15;
    std::vector<ScoredRun> runs(n);
    for (std::size_t i = 0; i < n; ++i) {
        ScoredRun& r = runs[i];
        char id[32];
        std::snprintf(id, sizeof(id), "syn%05zu", i);
        r.run_id = id;
        const double tau = (elite[i] ? 0.2 : rng.uniform(0.1, 0.3)) * static_cast<double>(epochs);
        const double eps = elite[i] ? 0.0 : noise;
        r.curve.resize(epochs);
        for (std::size_t t = 0; t < epochs; ++t) {
            r.curve[t] = quality[i] * (1.0 - std::exp(-static_cast<double>(t + 1) / tau)) + rng.uniform(-eps, eps);
        }
        const std::size_t tail = std::max<std::size_t>(1, epochs / 10);
        double mean_tail = 0.0;
        for (std::size_t t = epochs - tail; t < epochs; ++t) mean_tail += r.curve[t];
        mean_tail /= static_cast<double>(tail);
        r.final_score = mean_tail + (separable ? 0.001 : 0.05) * rng.normal();
        if (embedding_dim) {
            std::vector<double> e(embedding_dim);
            for (auto& v : e) v = rng.normal(0.0, 0.3);
            e[0] += quality[i];
            r.embedding = std::move(e);
        }
    }
    return runs;
}

}  // namespace abrforge
