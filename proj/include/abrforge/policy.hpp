#pragma once

// Actor-critic policy networks built from declarative specs. Network
// candidates produce a NetworkSpec through the script "nn" module; the
// PolicyNetwork turns it into parameters and a differentiable forward map.

#include "abrforge/nn.hpp"
#include "abrforge/script.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace abrforge {

struct EncoderSpec {
    enum class Kind { flatten, dense, conv1d, rnn, gru, lstm, parallel };
    Kind kind = Kind::flatten;
    std::size_t units = 0;   // filters for conv1d, hidden size for recurrent kinds
    std::size_t kernel = 0;  // conv1d only; clamped to the state width
    nn::Activation activation = nn::Activation::relu;
    std::vector<EncoderSpec> children;  // parallel only
};

struct NetworkSpec {
    EncoderSpec encoder;
    std::vector<std::size_t> hidden;
    nn::Activation activation = nn::Activation::relu;
    std::size_t n_outputs = 0;
    bool shared = false;  // one trunk with two heads instead of separate actor and critic
};

std::string describe(const EncoderSpec& spec);
std::string describe(const NetworkSpec& spec);

// Script module "nn": conv1d, dense, rnn, gru, lstm, flatten, parallel, actor_critic.
script::Module nn_script_module();
// Extracts the NetworkSpec from a value returned by nn.actor_critic.
// Throws ScriptError(invalid_output) for anything else.
NetworkSpec network_spec_from_value(const script::Value& value);

struct PolicyOutput {
    nn::Matrix probs;                // actions x batch
    Eigen::RowVectorXd values;       // 1 x batch
};

struct LossTerms {
    double policy = 0.0;
    double value = 0.0;
};

// States are passed as (channels * width) x batch matrices with rows laid
// out [channel][position].
class PolicyNetwork {
public:
    PolicyNetwork(NetworkSpec spec, std::size_t channels, std::size_t width, std::size_t n_actions,
                  std::uint64_t seed, double actor_lr = 1e-4, double critic_lr = 1e-3);

    PolicyOutput forward(const nn::Matrix& states) const;

    // Fills parameter gradients of policy_loss(advantages) + value_loss(returns).
    LossTerms compute_gradients(const nn::Matrix& states, const std::vector<std::size_t>& actions,
                                const Eigen::VectorXd& advantages, const Eigen::VectorXd& returns,
                                double entropy_weight);
    // One A2C update: advantages are returns minus the current value estimate.
    LossTerms train_step(const nn::Matrix& states, const std::vector<std::size_t>& actions,
                         const Eigen::VectorXd& returns, double entropy_weight);

    std::vector<double> parameters() const { return store_.flat_values(); }
    std::vector<double> gradients() const { return store_.flat_grads(); }
    void set_parameters(const std::vector<double>& flat) { store_.set_flat_values(flat); }
    std::size_t n_params() const { return store_.n_scalars(); }

    std::size_t channels() const { return channels_; }
    std::size_t width() const { return width_; }
    std::size_t n_actions() const { return n_actions_; }
    const NetworkSpec& spec() const { return spec_; }

    struct Built;

private:
    struct Heads {
        nn::Var logits;
        nn::Var value;
    };
    Heads build_graph(nn::Tape& tape, const nn::Matrix& states) const;

    NetworkSpec spec_;
    std::size_t channels_;
    std::size_t width_;
    std::size_t n_actions_;
    mutable nn::ParamStore store_;
    std::shared_ptr<const Built> built_;
    nn::Adam actor_opt_;
    nn::Adam critic_opt_;
};

// Flattens a (channels x width) row-major tensor into one column.
nn::Matrix to_column(const std::vector<double>& values);

}  // namespace abrforge
