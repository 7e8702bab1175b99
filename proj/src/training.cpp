#include "costsense/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "costsense/random.hpp"

namespace costsense {

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (!(learning_rate > 0.0))
        throw std::invalid_argument("train config: learning_rate must be > 0");
    if (adversarial && adversarial->objective != AttackObjective::RandomTarget)
        throw std::invalid_argument(
            "train config: adversarial training uses the random-target objective");
}

namespace {

struct LayerGrad {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
};

/// Cross-entropy of one sample plus accumulation of parameter gradients.
double backprop_sample(const NetworkModel& net, const Eigen::VectorXd& x, int label,
                       std::vector<LayerGrad>& grads) {
    const ForwardTrace tr = forward_trace(net, x);
    const Eigen::VectorXd& z = tr.logits();
    const double lse = logsumexp(z);
    const double loss = lse - z(label);
    // d loss / d logits = softmax(z) - e_label
    Eigen::VectorXd g = (z.array() - lse).exp();
    g(label) -= 1.0;
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const auto& layer = net.layers[l];
        if (layer.activation == Activation::Relu)
            g = (tr.pre[l].array() > 0.0).select(g, 0.0);
        grads[l].weights.noalias() += g * tr.act[l].transpose();
        grads[l].bias += g;
        g = layer.weights.transpose() * g;
    }
    return loss;
}

}  // namespace

TrainResult train(NetworkModel net, const LabeledData& data, const TrainConfig& cfg) {
    cfg.validate();
    net.validate();
    data.validate(net.num_classes());
    if (data.size() == 0 && cfg.epochs > 0)
        throw std::invalid_argument("train: no training data");

    Rng shuffle_rng(cfg.seed);
    std::vector<long> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), 0L);

    std::vector<LayerGrad> grads(net.layers.size());
    TrainResult out;
    long global_batch = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        for (long start = 0; start < data.size(); start += cfg.batch_size) {
            const long stop = std::min<long>(start + cfg.batch_size, data.size());
            const long bsz = stop - start;

            LabeledData batch;
            batch.inputs.resize(bsz, data.inputs.cols());
            batch.labels.resize(bsz);
            for (long i = 0; i < bsz; ++i) {
                batch.inputs.row(i) = data.inputs.row(order[static_cast<std::size_t>(start + i)]);
                batch.labels(i) = data.labels(order[static_cast<std::size_t>(start + i)]);
            }
            if (cfg.adversarial) {
                AttackSpec adv = *cfg.adversarial;
                adv.seed = derive_seed(cfg.adversarial->seed,
                                       static_cast<std::uint64_t>(global_batch));
                batch.inputs = attack_batch(net, batch, adv, nullptr, 1).x_adv;
            }

            for (std::size_t l = 0; l < net.layers.size(); ++l) {
                grads[l].weights = Eigen::MatrixXd::Zero(net.layers[l].weights.rows(),
                                                         net.layers[l].weights.cols());
                grads[l].bias = Eigen::VectorXd::Zero(net.layers[l].bias.size());
            }
            double batch_loss = 0.0;
            for (long i = 0; i < bsz; ++i)
                batch_loss +=
                    backprop_sample(net, batch.inputs.row(i).transpose(), batch.labels(i), grads);
            if (!std::isfinite(batch_loss))
                throw NumericalError("training loss became non-finite at epoch " +
                                     std::to_string(epoch));
            const double scale = cfg.learning_rate / static_cast<double>(bsz);
            for (std::size_t l = 0; l < net.layers.size(); ++l) {
                net.layers[l].weights -= scale * grads[l].weights;
                net.layers[l].bias -= scale * grads[l].bias;
            }
            epoch_loss += batch_loss;
            ++global_batch;
        }
        out.loss_history.push_back(epoch_loss / static_cast<double>(data.size()));
    }
    out.model = std::move(net);
    return out;
}

double mean_cross_entropy(const NetworkModel& net, const LabeledData& data) {
    data.validate(net.num_classes());
    if (data.size() == 0) throw std::invalid_argument("mean_cross_entropy: empty data");
    double total = 0.0;
    for (long i = 0; i < data.size(); ++i) {
        const Eigen::VectorXd z = forward_logits(net, data.inputs.row(i).transpose());
        total += logsumexp(z) - z(data.labels(i));
    }
    return total / static_cast<double>(data.size());
}

double accuracy(const NetworkModel& net, const LabeledData& data) {
    data.validate(net.num_classes());
    if (data.size() == 0) throw std::invalid_argument("accuracy: empty data");
    long correct = 0;
    for (long i = 0; i < data.size(); ++i) {
        const Eigen::VectorXd z = forward_logits(net, data.inputs.row(i).transpose());
        Eigen::Index best = 0;
        for (Eigen::Index a = 1; a < z.size(); ++a)
            if (z(a) > z(best)) best = a;
        if (best == data.labels(i)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace costsense
