#pragma once

// Reverse-mode automatic differentiation over dense matrices, plus the
// layers and optimizer used by policy networks and the early-stop
// classifier. Activations use a (features x batch) layout: one column per
// sample.

#include "abrforge/util/rng.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace abrforge::nn {

using Matrix = Eigen::MatrixXd;

enum class Activation { relu, leaky_relu, tanh, sigmoid, elu, linear };

std::string to_string(Activation a);
// Throws Error for unknown names.
Activation activation_from_string(const std::string& name);

// Owns trainable tensors and their accumulated gradients.
class ParamStore {
public:
    // Glorot-uniform weights (rows x cols); fan_in/fan_out default to cols/rows.
    std::size_t add_weight(std::size_t rows, std::size_t cols, Rng& rng, std::size_t fan_in = 0,
                           std::size_t fan_out = 0, int group = 0);
    std::size_t add_bias(std::size_t rows, int group = 0);

    std::size_t size() const { return values_.size(); }
    std::size_t n_scalars() const;
    Matrix& value(std::size_t i) { return values_[i]; }
    const Matrix& value(std::size_t i) const { return values_[i]; }
    Matrix& grad(std::size_t i) { return grads_[i]; }
    const Matrix& grad(std::size_t i) const { return grads_[i]; }
    int group(std::size_t i) const { return groups_[i]; }

    void zero_grad();
    std::vector<double> flat_values() const;
    std::vector<double> flat_grads() const;
    void set_flat_values(const std::vector<double>& flat);

private:
    std::vector<Matrix> values_;
    std::vector<Matrix> grads_;
    std::vector<int> groups_;
};

// Handle to a node on a Tape.
struct Var {
    int id = -1;
};

// Records operations eagerly; backward() propagates gradients from a scalar
// loss node into the ParamStore.
class Tape {
public:
    explicit Tape(ParamStore* store = nullptr) : store_(store) {}

    Var param(std::size_t index);
    Var constant(Matrix value);

    const Matrix& value(Var v) const {
        const Node& n = nodes_[static_cast<std::size_t>(v.id)];
        return n.ref ? *n.ref : n.value;
    }
    std::size_t rows(Var v) const { return static_cast<std::size_t>(value(v).rows()); }

    Var matmul(Var w, Var x);
    Var add_bias(Var x, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var one_minus(Var a);
    Var activate(Var x, Activation act);
    Var concat_rows(const std::vector<Var>& parts);
    Var slice_rows(Var x, std::size_t start, std::size_t n);
    Var gather_rows(Var x, std::vector<long> rows);

    // Input rows laid out [channel][position]; weight is (filters x channels*kernel).
    // Output rows laid out [filter][position] with width - kernel + 1 positions.
    Var conv1d(Var x, Var w, Var b, std::size_t channels, std::size_t width, std::size_t kernel);
    // Non-overlapping mean pooling along positions; trailing remainder dropped.
    Var avg_pool(Var x, std::size_t channels, std::size_t width, std::size_t pool);

    // Policy-gradient loss on logits (actions x batch):
    //   mean_b[-adv_b * log p(a_b)] - entropy_weight * mean_b[H(p_b)].
    Var policy_loss(Var logits, const std::vector<std::size_t>& actions,
                    const Eigen::VectorXd& advantages, double entropy_weight);
    // mean_b (pred_b - target_b)^2 on a (1 x batch) prediction.
    Var mse_loss(Var pred, const Eigen::VectorXd& target);
    // Weighted binary cross-entropy on (1 x batch) logits, normalized by the weight sum.
    Var bce_logits_loss(Var logits, const Eigen::VectorXd& target, const Eigen::VectorXd& weights);
    Var scale(Var a, double k);

    void backward(Var loss);

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void(Tape&, const Node&)> back;
        long param = -1;
        const Matrix* ref = nullptr;  // parameter nodes read the store without copying
    };
    Var push(Matrix value, std::function<void(Tape&, const Node&)> back, long param = -1);
    Matrix& grad_of(Var v);

    ParamStore* store_;
    std::vector<Node> nodes_;
};

// Column-wise softmax.
Matrix softmax(const Matrix& logits);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam over the parameters of one ParamStore group.
class Adam {
public:
    Adam(const ParamStore& store, int group, AdamConfig config);
    void step(ParamStore& store);
    void set_lr(double lr) { config_.lr = lr; }

private:
    int group_;
    AdamConfig config_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    long t_ = 0;
};

}  // namespace abrforge::nn
