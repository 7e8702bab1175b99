#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "costsense/cost.hpp"

namespace costsense {

enum class Activation { Relu, Identity };

struct DenseLayer {
    Eigen::MatrixXd weights;  // (out x in)
    Eigen::VectorXd bias;     // (out)
    Activation activation = Activation::Relu;
};

/// Fully-connected feed-forward classifier; the last layer's outputs are the
/// logits.
struct NetworkModel {
    std::vector<DenseLayer> layers;

    Eigen::Index input_dim() const;
    Eigen::Index num_classes() const;
    /// Throws std::invalid_argument on empty/mismatched layers or non-finite
    /// parameters.
    void validate() const;
};

/// Fresh network for the given layer sizes {in, hidden..., out}: weights
/// uniform in +-1/sqrt(fan_in), zero biases, ReLU hidden layers, identity
/// output layer. Fully determined by the seed.
NetworkModel init_network(const std::vector<int>& arch, std::uint64_t seed);

struct ForwardTrace {
    std::vector<Eigen::VectorXd> pre;  // pre[l] = W_l act[l] + b_l
    std::vector<Eigen::VectorXd> act;  // act[0] = input, act[l+1] = f(pre[l])
    const Eigen::VectorXd& logits() const { return act.back(); }
};

/// Forward pass keeping intermediate activations (for backprop). Throws
/// NumericalError if the logits come out non-finite.
ForwardTrace forward_trace(const NetworkModel& net, const Eigen::VectorXd& x);

Eigen::VectorXd forward_logits(const NetworkModel& net, const Eigen::VectorXd& x);

/// log(sum(exp(v))) computed against the running maximum.
double logsumexp(const Eigen::VectorXd& v);

/// Temperature-scaled softmax of the logits; invariant to a constant shift of
/// all logits. temperature must be > 0.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits, double temperature);

/// Class posterior of the model at x under temperature scaling.
ProbabilityVector probabilities(const NetworkModel& net, const Eigen::VectorXd& x,
                                double temperature = 1.0);

/// Scalar objective defined on logits: returns the value and fills the
/// gradient with d value / d logits (pre-sized, zero-initialized).
using LogitObjective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Objective value at x and its gradient with respect to x (backprop through
/// the network).
std::pair<double, Eigen::VectorXd> input_gradient(const NetworkModel& net,
                                                  const Eigen::VectorXd& x,
                                                  const LogitObjective& objective);

void to_json(nlohmann::json& j, const NetworkModel& net);
void from_json(const nlohmann::json& j, NetworkModel& net);

void save_model(const NetworkModel& net, const std::string& path);
NetworkModel load_model(const std::string& path);

/// A batch of vectors (one input per row) with integer class labels.
struct LabeledData {
    Eigen::MatrixXd inputs;  // (n x dim)
    Eigen::VectorXi labels;  // (n)

    long size() const { return static_cast<long>(inputs.rows()); }
    void validate(Eigen::Index num_classes) const;
};

}  // namespace costsense
