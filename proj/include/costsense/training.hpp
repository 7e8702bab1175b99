#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "costsense/attack.hpp"
#include "costsense/network.hpp"

namespace costsense {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 64;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
    /// When set, every batch is replaced by PGD-perturbed copies (random
    /// wrong-class targets) generated against the current model before the
    /// gradient step.
    std::optional<AttackSpec> adversarial;

    void validate() const;
};

struct TrainResult {
    NetworkModel model;
    std::vector<double> loss_history;  // mean cross-entropy per epoch
};

/// Minibatch SGD on mean cross-entropy. Epoch shuffling, batch order and any
/// adversarial perturbations are all derived from cfg.seed. Throws
/// NumericalError if the loss stops being finite.
TrainResult train(NetworkModel net, const LabeledData& data, const TrainConfig& cfg);

/// Mean cross-entropy of the model on data (temperature 1).
double mean_cross_entropy(const NetworkModel& net, const LabeledData& data);

/// Fraction of inputs whose highest-logit class matches the label.
double accuracy(const NetworkModel& net, const LabeledData& data);

}  // namespace costsense
