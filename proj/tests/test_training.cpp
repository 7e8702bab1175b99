#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "costsense/random.hpp"
#include "costsense/training.hpp"

using namespace costsense;

namespace {

// Two well-separated Gaussian blobs in the unit square.
LabeledData blobs(int n_per_class, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, 0.04);
    LabeledData data;
    data.inputs.resize(2 * n_per_class, 2);
    data.labels.resize(2 * n_per_class);
    for (int i = 0; i < 2 * n_per_class; ++i) {
        const int label = i % 2;
        const double cx = label == 0 ? 0.25 : 0.75;
        const double cy = label == 0 ? 0.25 : 0.75;
        data.inputs(i, 0) = std::clamp(cx + noise(rng), 0.0, 1.0);
        data.inputs(i, 1) = std::clamp(cy + noise(rng), 0.0, 1.0);
        data.labels(i) = label;
    }
    return data;
}

bool same_weights(const NetworkModel& a, const NetworkModel& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (!a.layers[l].weights.cwiseEqual(b.layers[l].weights).all()) return false;
        if (!a.layers[l].bias.cwiseEqual(b.layers[l].bias).all()) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("sgd separates two distant blobs") {
    LabeledData data = blobs(100, 3);
    NetworkModel net = init_network({2, 8, 2}, 7);
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.2;
    cfg.seed = 11;
    TrainResult res = train(net, data, cfg);
    CHECK(accuracy(res.model, data) > 0.95);
    REQUIRE(res.loss_history.size() == 40);
    CHECK(res.loss_history.back() < res.loss_history.front());
    CHECK(mean_cross_entropy(res.model, data) < std::log(2.0));
}

TEST_CASE("zero epochs leaves the model untouched") {
    LabeledData data = blobs(10, 1);
    NetworkModel net = init_network({2, 4, 2}, 5);
    TrainConfig cfg;
    cfg.epochs = 0;
    TrainResult res = train(net, data, cfg);
    CHECK(same_weights(res.model, net));
    CHECK(res.loss_history.empty());
}

TEST_CASE("training is seed-deterministic") {
    LabeledData data = blobs(40, 9);
    NetworkModel net = init_network({2, 6, 2}, 1);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 8;
    cfg.seed = 77;
    TrainResult a = train(net, data, cfg);
    TrainResult b = train(net, data, cfg);
    CHECK(same_weights(a.model, b.model));
    CHECK(a.loss_history == b.loss_history);

    cfg.seed = 78;
    TrainResult c = train(net, data, cfg);
    CHECK_FALSE(same_weights(a.model, c.model));
}

TEST_CASE("perturbed-batch training runs and differs from plain training") {
    LabeledData data = blobs(40, 2);
    NetworkModel net = init_network({2, 6, 2}, 3);
    TrainConfig plain;
    plain.epochs = 4;
    plain.batch_size = 8;
    plain.seed = 13;

    TrainConfig hardened = plain;
    AttackSpec adv;
    adv.objective = AttackObjective::RandomTarget;
    adv.epsilon = 0.08;
    adv.alpha = 0.02;
    adv.n_steps = 3;
    adv.domain_box = DomainBox::unit(2);
    adv.seed = 5;
    hardened.adversarial = adv;

    TrainResult a = train(net, data, plain);
    TrainResult b = train(net, data, hardened);
    CHECK_FALSE(same_weights(a.model, b.model));
    // Deterministic under the same seeds even with perturbation enabled.
    TrainResult b2 = train(net, data, hardened);
    CHECK(same_weights(b.model, b2.model));
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.epochs = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    AttackSpec adv;
    adv.objective = AttackObjective::MaxiMin;
    adv.domain_box = DomainBox::unit(2);
    cfg.adversarial = adv;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("uniform logits give log-k cross entropy") {
    NetworkModel net;
    DenseLayer l;
    l.weights = Eigen::MatrixXd::Zero(3, 2);
    l.bias = Eigen::VectorXd::Zero(3);
    l.activation = Activation::Identity;
    net.layers = {l};
    LabeledData data;
    data.inputs = Eigen::MatrixXd::Random(5, 2).cwiseAbs();
    data.labels = Eigen::VectorXi::Zero(5);
    CHECK(mean_cross_entropy(net, data) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(accuracy(net, data) == 1.0);  // all-zero logits: lowest index wins
}
