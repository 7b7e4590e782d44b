#include "abrforge/policy.hpp"

#include "abrforge/util/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace abrforge {

namespace {

constexpr std::size_t kMaxUnits = 4096;
constexpr std::size_t kMaxParams = 20'000'000;

struct EncoderParams {
    EncoderSpec spec;
    std::size_t kernel = 0;
    std::vector<std::size_t> p;
    std::vector<EncoderParams> children;
    std::size_t out_dim = 0;
};

struct Tower {
    EncoderParams encoder;
    std::vector<std::pair<std::size_t, std::size_t>> hidden;  // (weight, bias)
    std::size_t out_dim = 0;
};

std::size_t require_units(std::size_t n, const char* what) {
    if (n < 1 || n > kMaxUnits) {
        throw Error(std::string(what) + " must be between 1 and " + std::to_string(kMaxUnits));
    }
    return n;
}

EncoderParams build_encoder(const EncoderSpec& spec, std::size_t C, std::size_t W, nn::ParamStore& store,
                            Rng& rng, int group) {
    EncoderParams e;
    e.spec = spec;
    auto weight = [&](std::size_t r, std::size_t c) { e.p.push_back(store.add_weight(r, c, rng, 0, 0, group)); };
    auto bias = [&](std::size_t r) { e.p.push_back(store.add_bias(r, group)); };
    switch (spec.kind) {
        case EncoderSpec::Kind::flatten:
            e.out_dim = C * W;
            break;
        case EncoderSpec::Kind::dense:
            require_units(spec.units, "dense units");
            weight(spec.units, C * W);
            bias(spec.units);
            e.out_dim = spec.units;
            break;
        case EncoderSpec::Kind::conv1d: {
            require_units(spec.units, "conv1d filters");
            if (spec.kernel < 1) throw Error("conv1d kernel must be >= 1");
            e.kernel = std::min(spec.kernel, W);
            for (std::size_t c = 0; c < C; ++c) {
                weight(spec.units, e.kernel);
                bias(spec.units);
            }
            e.out_dim = C * spec.units * (W - e.kernel + 1);
            break;
        }
        case EncoderSpec::Kind::rnn:
            require_units(spec.units, "rnn units");
            weight(spec.units, C);
            weight(spec.units, spec.units);
            bias(spec.units);
            e.out_dim = spec.units;
            break;
        case EncoderSpec::Kind::gru:
        case EncoderSpec::Kind::lstm: {
            require_units(spec.units, "recurrent units");
            const int gates = spec.kind == EncoderSpec::Kind::gru ? 3 : 4;
            for (int g = 0; g < gates; ++g) {
                weight(spec.units, C);
                weight(spec.units, spec.units);
                bias(spec.units);
            }
            e.out_dim = spec.units;
            break;
        }
        case EncoderSpec::Kind::parallel:
            if (spec.children.empty()) throw Error("parallel encoder needs at least one branch");
            for (const auto& child : spec.children) {
                e.children.push_back(build_encoder(child, C, W, store, rng, group));
                e.out_dim += e.children.back().out_dim;
            }
            break;
    }
    if (store.n_scalars() > kMaxParams) throw Error("network exceeds the parameter limit");
    return e;
}

Tower build_tower(const NetworkSpec& spec, std::size_t C, std::size_t W, nn::ParamStore& store, Rng& rng,
                  int group) {
    Tower t;
    t.encoder = build_encoder(spec.encoder, C, W, store, rng, group);
    std::size_t in = t.encoder.out_dim;
    for (std::size_t h : spec.hidden) {
        require_units(h, "hidden units");
        const std::size_t w = store.add_weight(h, in, rng, 0, 0, group);
        const std::size_t b = store.add_bias(h, group);
        t.hidden.emplace_back(w, b);
        in = h;
        if (store.n_scalars() > kMaxParams) throw Error("network exceeds the parameter limit");
    }
    t.out_dim = in;
    return t;
}

nn::Var apply_encoder(nn::Tape& tape, const EncoderParams& e, nn::Var x, std::size_t C, std::size_t W,
                      long batch) {
    using Kind = EncoderSpec::Kind;
    const auto& s = e.spec;
    auto P = [&](std::size_t i) { return tape.param(e.p[i]); };
    auto step_input = [&](std::size_t t) {
        std::vector<long> rows(C);
        for (std::size_t c = 0; c < C; ++c) rows[c] = static_cast<long>(c * W + t);
        return tape.gather_rows(x, std::move(rows));
    };
    auto linear = [&](std::size_t w, std::size_t u, std::size_t b, nn::Var xt, nn::Var h) {
        return tape.add_bias(tape.add(tape.matmul(P(w), xt), tape.matmul(P(u), h)), P(b));
    };
    switch (s.kind) {
        case Kind::flatten:
            return x;
        case Kind::dense:
            return tape.activate(tape.add_bias(tape.matmul(P(0), x), P(1)), s.activation);
        case Kind::conv1d: {
            std::vector<nn::Var> parts;
            for (std::size_t c = 0; c < C; ++c) {
                const nn::Var xc = tape.slice_rows(x, c * W, W);
                parts.push_back(tape.activate(tape.conv1d(xc, P(2 * c), P(2 * c + 1), 1, W, e.kernel), s.activation));
            }
            return tape.concat_rows(parts);
        }
        case Kind::rnn: {
            nn::Var h = tape.constant(nn::Matrix::Zero(static_cast<long>(s.units), batch));
            for (std::size_t t = 0; t < W; ++t) {
                h = tape.activate(linear(0, 1, 2, step_input(t), h), nn::Activation::tanh);
            }
            return h;
        }
        case Kind::gru: {
            nn::Var h = tape.constant(nn::Matrix::Zero(static_cast<long>(s.units), batch));
            for (std::size_t t = 0; t < W; ++t) {
                const nn::Var xt = step_input(t);
                const nn::Var z = tape.activate(linear(0, 1, 2, xt, h), nn::Activation::sigmoid);
                const nn::Var r = tape.activate(linear(3, 4, 5, xt, h), nn::Activation::sigmoid);
                const nn::Var n = tape.activate(linear(6, 7, 8, xt, tape.mul(r, h)), nn::Activation::tanh);
                h = tape.add(tape.mul(tape.one_minus(z), n), tape.mul(z, h));
            }
            return h;
        }
        case Kind::lstm: {
            nn::Var h = tape.constant(nn::Matrix::Zero(static_cast<long>(s.units), batch));
            nn::Var c = h;
            for (std::size_t t = 0; t < W; ++t) {
                const nn::Var xt = step_input(t);
                const nn::Var i = tape.activate(linear(0, 1, 2, xt, h), nn::Activation::sigmoid);
                const nn::Var f = tape.activate(linear(3, 4, 5, xt, h), nn::Activation::sigmoid);
                const nn::Var o = tape.activate(linear(6, 7, 8, xt, h), nn::Activation::sigmoid);
                const nn::Var g = tape.activate(linear(9, 10, 11, xt, h), nn::Activation::tanh);
                c = tape.add(tape.mul(f, c), tape.mul(i, g));
                h = tape.mul(o, tape.activate(c, nn::Activation::tanh));
            }
            return h;
        }
        case Kind::parallel: {
            std::vector<nn::Var> parts;
            for (const auto& child : e.children) parts.push_back(apply_encoder(tape, child, x, C, W, batch));
            return tape.concat_rows(parts);
        }
    }
    return x;
}

nn::Var apply_tower(nn::Tape& tape, const Tower& t, nn::Activation act, nn::Var x, std::size_t C,
                    std::size_t W, long batch) {
    nn::Var h = apply_encoder(tape, t.encoder, x, C, W, batch);
    for (const auto& [w, b] : t.hidden) h = tape.activate(tape.add_bias(tape.matmul(tape.param(w), h), tape.param(b)), act);
    return h;
}

}  // namespace

struct PolicyNetwork::Built {
    Tower actor;
    Tower critic;  // unused when shared
    std::size_t actor_w = 0, actor_b = 0, critic_w = 0, critic_b = 0;
};

namespace {

constexpr int kActorGroup = 0;
constexpr int kCriticGroup = 1;

}  // namespace

static std::shared_ptr<const PolicyNetwork::Built> build_network(const NetworkSpec& spec, std::size_t C,
                                                                 std::size_t W, std::size_t n_actions,
                                                                 std::uint64_t seed, nn::ParamStore& store) {
    if (C == 0 || W == 0) throw Error("state shape must be non-empty");
    if (spec.n_outputs != n_actions) {
        throw script::ScriptError(script::FailureKind::action_mismatch,
                                  "network has " + std::to_string(spec.n_outputs) + " outputs for " +
                                      std::to_string(n_actions) + " actions");
    }
    Rng rng(seed);
    auto built = std::make_shared<PolicyNetwork::Built>();
    built->actor = build_tower(spec, C, W, store, rng, kActorGroup);
    built->actor_w = store.add_weight(n_actions, built->actor.out_dim, rng, 0, 0, kActorGroup);
    built->actor_b = store.add_bias(n_actions, kActorGroup);
    std::size_t critic_in = built->actor.out_dim;
    if (!spec.shared) {
        built->critic = build_tower(spec, C, W, store, rng, kCriticGroup);
        critic_in = built->critic.out_dim;
    }
    built->critic_w = store.add_weight(1, critic_in, rng, 0, 0, kCriticGroup);
    built->critic_b = store.add_bias(1, kCriticGroup);
    return built;
}

PolicyNetwork::PolicyNetwork(NetworkSpec spec, std::size_t channels, std::size_t width, std::size_t n_actions,
                             std::uint64_t seed, double actor_lr, double critic_lr)
    : spec_(std::move(spec)),
      channels_(channels),
      width_(width),
      n_actions_(n_actions),
      built_(build_network(spec_, channels, width, n_actions, seed, store_)),
      actor_opt_(store_, kActorGroup, nn::AdamConfig{actor_lr}),
      critic_opt_(store_, kCriticGroup, nn::AdamConfig{critic_lr}) {}

PolicyNetwork::Heads PolicyNetwork::build_graph(nn::Tape& tape, const nn::Matrix& states) const {
    if (states.rows() != static_cast<long>(channels_ * width_)) {
        throw Error("state batch has " + std::to_string(states.rows()) + " rows, expected " +
                    std::to_string(channels_ * width_));
    }
    const long batch = states.cols();
    const nn::Var x = tape.constant(states);
    const nn::Var a = apply_tower(tape, built_->actor, spec_.activation, x, channels_, width_, batch);
    const nn::Var logits =
        tape.add_bias(tape.matmul(tape.param(built_->actor_w), a), tape.param(built_->actor_b));
    const nn::Var c =
        spec_.shared ? a : apply_tower(tape, built_->critic, spec_.activation, x, channels_, width_, batch);
    const nn::Var value =
        tape.add_bias(tape.matmul(tape.param(built_->critic_w), c), tape.param(built_->critic_b));
    return {logits, value};
}

PolicyOutput PolicyNetwork::forward(const nn::Matrix& states) const {
    nn::Tape tape(&store_);
    const Heads h = build_graph(tape, states);
    return {nn::softmax(tape.value(h.logits)), tape.value(h.value).row(0)};
}

LossTerms PolicyNetwork::compute_gradients(const nn::Matrix& states, const std::vector<std::size_t>& actions,
                                           const Eigen::VectorXd& advantages, const Eigen::VectorXd& returns,
                                           double entropy_weight) {
    store_.zero_grad();
    nn::Tape tape(&store_);
    const Heads h = build_graph(tape, states);
    const nn::Var pl = tape.policy_loss(h.logits, actions, advantages, entropy_weight);
    const nn::Var vl = tape.mse_loss(h.value, returns);
    const nn::Var total = tape.add(pl, vl);
    tape.backward(total);
    return {tape.value(pl)(0, 0), tape.value(vl)(0, 0)};
}

LossTerms PolicyNetwork::train_step(const nn::Matrix& states, const std::vector<std::size_t>& actions,
                                    const Eigen::VectorXd& returns, double entropy_weight) {
    store_.zero_grad();
    nn::Tape tape(&store_);
    const Heads h = build_graph(tape, states);
    const Eigen::VectorXd advantages = returns - tape.value(h.value).row(0).transpose();
    const nn::Var pl = tape.policy_loss(h.logits, actions, advantages, entropy_weight);
    const nn::Var vl = tape.mse_loss(h.value, returns);
    const nn::Var total = tape.add(pl, vl);
    tape.backward(total);
    const LossTerms terms{tape.value(pl)(0, 0), tape.value(vl)(0, 0)};
    if (!std::isfinite(terms.policy) || !std::isfinite(terms.value)) throw Error("non-finite loss");
    actor_opt_.step(store_);
    critic_opt_.step(store_);
    return terms;
}

nn::Matrix to_column(const std::vector<double>& values) {
    nn::Matrix m(static_cast<long>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i) m(static_cast<long>(i), 0) = values[i];
    return m;
}

std::string describe(const EncoderSpec& spec) {
    using Kind = EncoderSpec::Kind;
    std::ostringstream os;
    switch (spec.kind) {
        case Kind::flatten: os << "flatten"; break;
        case Kind::dense: os << "dense(" << spec.units << "," << nn::to_string(spec.activation) << ")"; break;
        case Kind::conv1d:
            os << "conv1d(" << spec.units << "," << spec.kernel << "," << nn::to_string(spec.activation) << ")";
            break;
        case Kind::rnn: os << "rnn(" << spec.units << ")"; break;
        case Kind::gru: os << "gru(" << spec.units << ")"; break;
        case Kind::lstm: os << "lstm(" << spec.units << ")"; break;
        case Kind::parallel: {
            os << "parallel[";
            for (std::size_t i = 0; i < spec.children.size(); ++i) os << (i ? "," : "") << describe(spec.children[i]);
            os << "]";
            break;
        }
    }
    return os.str();
}

std::string describe(const NetworkSpec& spec) {
    std::ostringstream os;
    os << describe(spec.encoder) << " -> [";
    for (std::size_t i = 0; i < spec.hidden.size(); ++i) os << (i ? "," : "") << spec.hidden[i];
    os << "] " << nn::to_string(spec.activation) << " -> " << spec.n_outputs << (spec.shared ? " shared" : " separate");
    return os.str();
}

namespace {

using script::CallContext;
using script::FailureKind;
using script::ScriptError;
using script::Value;

struct EncoderObject : script::Object {
    EncoderSpec spec;
    std::string type_name() const override { return "encoder"; }
};

struct NetworkObject : script::Object {
    NetworkSpec spec;
    std::string type_name() const override { return "network"; }
};

[[noreturn]] void bad_arg(const std::string& msg, int line) {
    throw ScriptError(FailureKind::execution_error, msg, line);
}

std::size_t positive_int(const Value& v, const char* what, int line) {
    if (!v.is_number()) bad_arg(std::string(what) + " must be a number", line);
    const double x = v.number();
    if (!(x >= 1.0) || x > static_cast<double>(kMaxUnits) || x != std::floor(x)) {
        bad_arg(std::string(what) + " must be an integer in [1, " + std::to_string(kMaxUnits) + "]", line);
    }
    return static_cast<std::size_t>(x);
}

nn::Activation activation_arg(const Value& v, int line) {
    if (!v.is_string()) bad_arg("activation must be a string", line);
    try {
        return nn::activation_from_string(v.string());
    } catch (const Error& e) {
        bad_arg(e.what(), line);
    }
}

const EncoderSpec& encoder_arg(const Value& v, int line) {
    if (v.is_object()) {
        if (const auto* e = dynamic_cast<const EncoderObject*>(v.object().get())) return e->spec;
    }
    bad_arg("expected an encoder (nn.conv1d, nn.dense, nn.gru, ...), got " + v.type_name(), line);
}

Value encoder_value(EncoderSpec spec) {
    auto obj = std::make_shared<EncoderObject>();
    obj->spec = std::move(spec);
    return Value(std::shared_ptr<const script::Object>(std::move(obj)));
}

script::NativeFunction recurrent(EncoderSpec::Kind kind) {
    return {1, 1, [kind](std::span<const Value> a, CallContext& ctx) {
                EncoderSpec s;
                s.kind = kind;
                s.units = positive_int(a[0], "hidden size", ctx.line);
                return encoder_value(std::move(s));
            }};
}

}  // namespace

script::Module nn_script_module() {
    script::Module m;
    m["flatten"] = {0, 0, [](std::span<const Value>, CallContext&) { return encoder_value(EncoderSpec{}); }};
    m["dense"] = {1, 2, [](std::span<const Value> a, CallContext& ctx) {
                      EncoderSpec s;
                      s.kind = EncoderSpec::Kind::dense;
                      s.units = positive_int(a[0], "units", ctx.line);
                      if (a.size() > 1) s.activation = activation_arg(a[1], ctx.line);
                      return encoder_value(std::move(s));
                  }};
    m["conv1d"] = {2, 3, [](std::span<const Value> a, CallContext& ctx) {
                       EncoderSpec s;
                       s.kind = EncoderSpec::Kind::conv1d;
                       s.units = positive_int(a[0], "filters", ctx.line);
                       s.kernel = positive_int(a[1], "kernel", ctx.line);
                       if (a.size() > 2) s.activation = activation_arg(a[2], ctx.line);
                       return encoder_value(std::move(s));
                   }};
    m["rnn"] = recurrent(EncoderSpec::Kind::rnn);
    m["gru"] = recurrent(EncoderSpec::Kind::gru);
    m["lstm"] = recurrent(EncoderSpec::Kind::lstm);
    m["parallel"] = {1, 1, [](std::span<const Value> a, CallContext& ctx) {
                         if (!a[0].is_list()) bad_arg("parallel expects a list of encoders", ctx.line);
                         EncoderSpec s;
                         s.kind = EncoderSpec::Kind::parallel;
                         for (const auto& v : a[0].list()) s.children.push_back(encoder_arg(v, ctx.line));
                         if (s.children.empty()) bad_arg("parallel expects at least one encoder", ctx.line);
                         return encoder_value(std::move(s));
                     }};
    m["actor_critic"] = {4, 5, [](std::span<const Value> a, CallContext& ctx) {
                             NetworkSpec spec;
                             spec.encoder = encoder_arg(a[0], ctx.line);
                             if (a[1].is_number()) {
                                 spec.hidden.push_back(positive_int(a[1], "hidden size", ctx.line));
                             } else if (a[1].is_vector()) {
                                 for (double h : a[1].vector()) {
                                     spec.hidden.push_back(positive_int(Value(h), "hidden size", ctx.line));
                                 }
                             } else if (!(a[1].is_list() && a[1].list().empty())) {
                                 bad_arg("hidden sizes must be a number or a list of numbers", ctx.line);
                             }
                             spec.activation = activation_arg(a[2], ctx.line);
                             if (!a[3].is_number() || a[3].number() < 1 || a[3].number() != std::floor(a[3].number())) {
                                 bad_arg("n_outputs must be a positive integer", ctx.line);
                             }
                             spec.n_outputs = static_cast<std::size_t>(a[3].number());
                             if (a.size() > 4) {
                                 if (!a[4].is_number()) bad_arg("shared must be true or false", ctx.line);
                                 spec.shared = a[4].number() != 0.0;
                             }
                             auto obj = std::make_shared<NetworkObject>();
                             obj->spec = std::move(spec);
                             return Value(std::shared_ptr<const script::Object>(std::move(obj)));
                         }};
    return m;
}

NetworkSpec network_spec_from_value(const script::Value& value) {
    if (value.is_object()) {
        if (const auto* n = dynamic_cast<const NetworkObject*>(value.object().get())) return n->spec;
    }
    throw ScriptError(FailureKind::invalid_output,
                      "network() must return nn.actor_critic(...), got " + value.type_name());
}

}  // namespace abrforge
