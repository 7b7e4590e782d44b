#include "abrforge/nn.hpp"

#include "abrforge/util/error.hpp"

#include <cmath>

namespace abrforge::nn {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::elu: return "elu";
        case Activation::linear: return "linear";
    }
    return "linear";
}

Activation activation_from_string(const std::string& name) {
    for (Activation a : {Activation::relu, Activation::leaky_relu, Activation::tanh, Activation::sigmoid,
                         Activation::elu, Activation::linear}) {
        if (to_string(a) == name) return a;
    }
    throw Error("unknown activation '" + name + "'");
}

std::size_t ParamStore::add_weight(std::size_t rows, std::size_t cols, Rng& rng, std::size_t fan_in,
                                   std::size_t fan_out, int group) {
    if (fan_in == 0) fan_in = cols;
    if (fan_out == 0) fan_out = rows;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(static_cast<long>(rows), static_cast<long>(cols));
    for (long c = 0; c < w.cols(); ++c) {
        for (long r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-limit, limit);
    }
    values_.push_back(std::move(w));
    grads_.push_back(Matrix::Zero(static_cast<long>(rows), static_cast<long>(cols)));
    groups_.push_back(group);
    return values_.size() - 1;
}

std::size_t ParamStore::add_bias(std::size_t rows, int group) {
    values_.push_back(Matrix::Zero(static_cast<long>(rows), 1));
    grads_.push_back(Matrix::Zero(static_cast<long>(rows), 1));
    groups_.push_back(group);
    return values_.size() - 1;
}

std::size_t ParamStore::n_scalars() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
}

void ParamStore::zero_grad() {
    for (auto& g : grads_) g.setZero();
}

std::vector<double> ParamStore::flat_values() const {
    std::vector<double> out;
    out.reserve(n_scalars());
    for (const auto& v : values_) out.insert(out.end(), v.data(), v.data() + v.size());
    return out;
}

std::vector<double> ParamStore::flat_grads() const {
    std::vector<double> out;
    out.reserve(n_scalars());
    for (const auto& g : grads_) out.insert(out.end(), g.data(), g.data() + g.size());
    return out;
}

void ParamStore::set_flat_values(const std::vector<double>& flat) {
    if (flat.size() != n_scalars()) {
        throw Error("parameter vector has " + std::to_string(flat.size()) + " entries, expected " +
                    std::to_string(n_scalars()));
    }
    std::size_t off = 0;
    for (auto& v : values_) {
        std::copy(flat.begin() + static_cast<long>(off), flat.begin() + static_cast<long>(off) + v.size(), v.data());
        off += static_cast<std::size_t>(v.size());
    }
}

Var Tape::push(Matrix value, std::function<void(Tape&, const Node&)> back, long param) {
    nodes_.push_back(Node{std::move(value), Matrix(), std::move(back), param});
    return Var{static_cast<int>(nodes_.size() - 1)};
}

Matrix& Tape::grad_of(Var v) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.ref) return store_->grad(static_cast<std::size_t>(n.param));
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

Var Tape::param(std::size_t index) {
    if (store_ == nullptr) throw Error("tape has no parameter store");
    if (index >= store_->size()) throw Error("parameter index out of range");
    nodes_.push_back(Node{Matrix(), Matrix(), nullptr, static_cast<long>(index), &store_->value(index)});
    return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant(Matrix value) { return push(std::move(value), nullptr); }

Var Tape::matmul(Var w, Var x) {
    if (value(w).cols() != value(x).rows()) {
        throw Error("matmul shape mismatch: " + std::to_string(value(w).cols()) + " vs " +
                    std::to_string(value(x).rows()));
    }
    return push(value(w) * value(x), [w, x](Tape& t, const Node& n) {
        t.grad_of(w).noalias() += n.grad * t.value(x).transpose();
        t.grad_of(x).noalias() += t.value(w).transpose() * n.grad;
    });
}

Var Tape::add_bias(Var x, Var b) {
    Matrix out = value(x);
    out.colwise() += value(b).col(0);
    return push(std::move(out), [x, b](Tape& t, const Node& n) {
        t.grad_of(x) += n.grad;
        t.grad_of(b) += n.grad.rowwise().sum();
    });
}

Var Tape::add(Var a, Var b) {
    return push(value(a) + value(b), [a, b](Tape& t, const Node& n) {
        t.grad_of(a) += n.grad;
        t.grad_of(b) += n.grad;
    });
}

Var Tape::sub(Var a, Var b) {
    return push(value(a) - value(b), [a, b](Tape& t, const Node& n) {
        t.grad_of(a) += n.grad;
        t.grad_of(b) -= n.grad;
    });
}

Var Tape::mul(Var a, Var b) {
    return push(value(a).cwiseProduct(value(b)), [a, b](Tape& t, const Node& n) {
        t.grad_of(a) += n.grad.cwiseProduct(t.value(b));
        t.grad_of(b) += n.grad.cwiseProduct(t.value(a));
    });
}

Var Tape::one_minus(Var a) {
    return push((1.0 - value(a).array()).matrix(), [a](Tape& t, const Node& n) { t.grad_of(a) -= n.grad; });
}

Var Tape::scale(Var a, double k) {
    return push(value(a) * k, [a, k](Tape& t, const Node& n) { t.grad_of(a) += n.grad * k; });
}

Var Tape::activate(Var x, Activation act) {
    if (act == Activation::linear) return x;
    const auto& in = value(x).array();
    Matrix out;
    switch (act) {
        case Activation::relu: out = in.max(0.0).matrix(); break;
        case Activation::leaky_relu: out = (in > 0.0).select(in, 0.01 * in).matrix(); break;
        case Activation::tanh: out = in.tanh().matrix(); break;
        case Activation::sigmoid: out = (1.0 / (1.0 + (-in).exp())).matrix(); break;
        case Activation::elu: out = (in > 0.0).select(in, in.exp() - 1.0).matrix(); break;
        case Activation::linear: break;
    }
    return push(std::move(out), [x, act](Tape& t, const Node& n) {
        const auto& xi = t.value(x).array();
        const auto& y = n.value.array();
        const auto& g = n.grad.array();
        Matrix& gx = t.grad_of(x);
        switch (act) {
            case Activation::relu: gx.array() += (xi > 0.0).select(g, 0.0); break;
            case Activation::leaky_relu: gx.array() += (xi > 0.0).select(g, 0.01 * g); break;
            case Activation::tanh: gx.array() += g * (1.0 - y * y); break;
            case Activation::sigmoid: gx.array() += g * y * (1.0 - y); break;
            case Activation::elu: gx.array() += (xi > 0.0).select(g, g * (y + 1.0)); break;
            case Activation::linear: break;
        }
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.size() == 1) return parts[0];
    long rows = 0;
    const long cols = value(parts.at(0)).cols();
    for (Var p : parts) {
        if (value(p).cols() != cols) throw Error("concat_rows: batch size mismatch");
        rows += value(p).rows();
    }
    Matrix out(rows, cols);
    long off = 0;
    for (Var p : parts) {
        out.middleRows(off, value(p).rows()) = value(p);
        off += value(p).rows();
    }
    return push(std::move(out), [parts](Tape& t, const Node& n) {
        long o = 0;
        for (Var p : parts) {
            const long r = t.value(p).rows();
            t.grad_of(p) += n.grad.middleRows(o, r);
            o += r;
        }
    });
}

Var Tape::slice_rows(Var x, std::size_t start, std::size_t n_rows) {
    const long s = static_cast<long>(start), r = static_cast<long>(n_rows);
    if (s + r > value(x).rows()) throw Error("slice_rows out of range");
    return push(value(x).middleRows(s, r), [x, s, r](Tape& t, const Node& n) {
        t.grad_of(x).middleRows(s, r) += n.grad;
    });
}

Var Tape::gather_rows(Var x, std::vector<long> rows) {
    const Matrix& X = value(x);
    Matrix out(static_cast<long>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= X.rows()) throw Error("gather_rows out of range");
        out.row(static_cast<long>(i)) = X.row(rows[i]);
    }
    return push(std::move(out), [x, rows = std::move(rows)](Tape& t, const Node& n) {
        Matrix& gx = t.grad_of(x);
        for (std::size_t i = 0; i < rows.size(); ++i) gx.row(rows[i]) += n.grad.row(static_cast<long>(i));
    });
}

Var Tape::conv1d(Var x, Var w, Var b, std::size_t channels, std::size_t width, std::size_t kernel) {
    const long C = static_cast<long>(channels), W = static_cast<long>(width), K = static_cast<long>(kernel);
    const Matrix& X = value(x);
    const Matrix& Wt = value(w);
    if (X.rows() != C * W) throw Error("conv1d: input rows do not match channels x width");
    if (K < 1 || K > W) throw Error("conv1d: kernel must be in [1, width]");
    if (Wt.cols() != C * K) throw Error("conv1d: weight columns do not match channels x kernel");
    const long F = Wt.rows(), P = W - K + 1, B = X.cols();
    Matrix out(F * P, B);
    Matrix patch(C * K, B);
    for (long p = 0; p < P; ++p) {
        for (long c = 0; c < C; ++c) patch.middleRows(c * K, K) = X.middleRows(c * W + p, K);
        Matrix o = Wt * patch;
        o.colwise() += value(b).col(0);
        for (long f = 0; f < F; ++f) out.row(f * P + p) = o.row(f);
    }
    return push(std::move(out), [x, w, b, C, W, K, F, P, B](Tape& t, const Node& n) {
        const Matrix& Xv = t.value(x);
        const Matrix& Wv = t.value(w);
        Matrix& gx = t.grad_of(x);
        Matrix& gw = t.grad_of(w);
        Matrix& gb = t.grad_of(b);
        Matrix patch(C * K, B), dout(F, B);
        for (long p = 0; p < P; ++p) {
            for (long c = 0; c < C; ++c) patch.middleRows(c * K, K) = Xv.middleRows(c * W + p, K);
            for (long f = 0; f < F; ++f) dout.row(f) = n.grad.row(f * P + p);
            gw.noalias() += dout * patch.transpose();
            gb += dout.rowwise().sum();
            const Matrix dpatch = Wv.transpose() * dout;
            for (long c = 0; c < C; ++c) gx.middleRows(c * W + p, K) += dpatch.middleRows(c * K, K);
        }
    });
}

Var Tape::avg_pool(Var x, std::size_t channels, std::size_t width, std::size_t pool) {
    const long C = static_cast<long>(channels), W = static_cast<long>(width);
    const long S = static_cast<long>(std::min(pool, width));
    const long Q = W / S;
    const Matrix& X = value(x);
    if (X.rows() != C * W) throw Error("avg_pool: input rows do not match channels x width");
    Matrix out(C * Q, X.cols());
    for (long c = 0; c < C; ++c) {
        for (long q = 0; q < Q; ++q) {
            out.row(c * Q + q) = X.middleRows(c * W + q * S, S).colwise().mean();
        }
    }
    return push(std::move(out), [x, C, W, S, Q](Tape& t, const Node& n) {
        Matrix& gx = t.grad_of(x);
        for (long c = 0; c < C; ++c) {
            for (long q = 0; q < Q; ++q) {
                const Eigen::RowVectorXd g = n.grad.row(c * Q + q) / static_cast<double>(S);
                for (long s = 0; s < S; ++s) gx.row(c * W + q * S + s) += g;
            }
        }
    });
}

namespace {

Matrix log_softmax(const Matrix& z) {
    Matrix out(z.rows(), z.cols());
    for (long b = 0; b < z.cols(); ++b) {
        const double m = z.col(b).maxCoeff();
        const double lse = m + std::log((z.col(b).array() - m).exp().sum());
        out.col(b) = z.col(b).array() - lse;
    }
    return out;
}

}  // namespace

Matrix softmax(const Matrix& logits) { return log_softmax(logits).array().exp().matrix(); }

Var Tape::policy_loss(Var logits, const std::vector<std::size_t>& actions, const Eigen::VectorXd& advantages,
                      double entropy_weight) {
    const Matrix& z = value(logits);
    const long A = z.rows(), B = z.cols();
    if (static_cast<long>(actions.size()) != B || advantages.size() != B) {
        throw Error("policy_loss: batch size mismatch");
    }
    const Matrix logp = log_softmax(z);
    const Matrix p = logp.array().exp().matrix();
    Matrix dz(A, B);
    double loss = 0.0;
    for (long b = 0; b < B; ++b) {
        const long a = static_cast<long>(actions[static_cast<std::size_t>(b)]);
        if (a < 0 || a >= A) throw Error("policy_loss: action index out of range");
        const double h = -(p.col(b).array() * logp.col(b).array()).sum();
        loss += -advantages(b) * logp(a, b) - entropy_weight * h;
        for (long j = 0; j < A; ++j) {
            const double onehot = j == a ? 1.0 : 0.0;
            dz(j, b) = -advantages(b) * (onehot - p(j, b)) + entropy_weight * p(j, b) * (logp(j, b) + h);
        }
    }
    const double inv_b = 1.0 / static_cast<double>(B);
    dz *= inv_b;
    Matrix out(1, 1);
    out(0, 0) = loss * inv_b;
    return push(std::move(out), [logits, dz](Tape& t, const Node& n) { t.grad_of(logits) += dz * n.grad(0, 0); });
}

Var Tape::mse_loss(Var pred, const Eigen::VectorXd& target) {
    const Matrix& v = value(pred);
    if (v.rows() != 1 || v.cols() != target.size()) throw Error("mse_loss: shape mismatch");
    const Eigen::RowVectorXd diff = v.row(0) - target.transpose();
    const double inv_b = 1.0 / static_cast<double>(target.size());
    Matrix out(1, 1);
    out(0, 0) = diff.squaredNorm() * inv_b;
    Matrix d = 2.0 * inv_b * diff;
    return push(std::move(out), [pred, d](Tape& t, const Node& n) { t.grad_of(pred) += d * n.grad(0, 0); });
}

Var Tape::bce_logits_loss(Var logits, const Eigen::VectorXd& target, const Eigen::VectorXd& weights) {
    const Matrix& z = value(logits);
    if (z.rows() != 1 || z.cols() != target.size() || weights.size() != target.size()) {
        throw Error("bce_logits_loss: shape mismatch");
    }
    const double wsum = weights.sum();
    if (!(wsum > 0.0)) throw Error("bce_logits_loss: weights must sum to a positive value");
    double loss = 0.0;
    Matrix d(1, z.cols());
    for (long b = 0; b < z.cols(); ++b) {
        const double x = z(0, b);
        const double softplus = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
        loss += weights(b) * (softplus - target(b) * x);
        d(0, b) = weights(b) * (1.0 / (1.0 + std::exp(-x)) - target(b)) / wsum;
    }
    Matrix out(1, 1);
    out(0, 0) = loss / wsum;
    return push(std::move(out), [logits, d](Tape& t, const Node& n) { t.grad_of(logits) += d * n.grad(0, 0); });
}

void Tape::backward(Var loss) {
    if (value(loss).size() != 1) throw Error("backward requires a scalar loss");
    grad_of(loss).setOnes();
    for (long i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.grad.size() == 0) continue;
        if (n.back) n.back(*this, n);
    }
}

Adam::Adam(const ParamStore& store, int group, AdamConfig config) : group_(group), config_(config) {
    for (std::size_t i = 0; i < store.size(); ++i) {
        m_.push_back(Matrix::Zero(store.value(i).rows(), store.value(i).cols()));
        v_.push_back(Matrix::Zero(store.value(i).rows(), store.value(i).cols()));
    }
}

void Adam::step(ParamStore& store) {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < store.size(); ++i) {
        if (store.group(i) != group_) continue;
        const Matrix& g = store.grad(i);
        m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
        v_[i].array() = config_.beta2 * v_[i].array() + (1.0 - config_.beta2) * g.array().square();
        store.value(i).array() -=
            config_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.eps);
    }
}

}  // namespace abrforge::nn
