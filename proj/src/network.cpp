#include "costsense/network.hpp"

#include <cmath>
#include <random>

#include "costsense/io.hpp"
#include "costsense/random.hpp"

namespace costsense {

Eigen::Index NetworkModel::input_dim() const {
    if (layers.empty()) throw std::invalid_argument("network has no layers");
    return layers.front().weights.cols();
}

Eigen::Index NetworkModel::num_classes() const {
    if (layers.empty()) throw std::invalid_argument("network has no layers");
    return layers.back().weights.rows();
}

void NetworkModel::validate() const {
    if (layers.empty()) throw std::invalid_argument("network has no layers");
    Eigen::Index prev = layers.front().weights.cols();
    if (prev < 1) throw std::invalid_argument("network input dimension must be positive");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.weights.rows() < 1)
            throw std::invalid_argument("layer " + std::to_string(l) + " has no outputs");
        if (layer.weights.cols() != prev)
            throw std::invalid_argument("layer " + std::to_string(l) +
                                        " input dim does not match previous layer");
        if (layer.bias.size() != layer.weights.rows())
            throw std::invalid_argument("layer " + std::to_string(l) + " bias size mismatch");
        if (!layer.weights.allFinite() || !layer.bias.allFinite())
            throw std::invalid_argument("layer " + std::to_string(l) +
                                        " has non-finite parameters");
        prev = layer.weights.rows();
    }
}

NetworkModel init_network(const std::vector<int>& arch, std::uint64_t seed) {
    if (arch.size() < 2)
        throw std::invalid_argument("init_network: arch needs at least input and output sizes");
    for (int d : arch)
        if (d < 1) throw std::invalid_argument("init_network: layer sizes must be positive");
    Rng rng(seed);
    NetworkModel net;
    for (std::size_t l = 0; l + 1 < arch.size(); ++l) {
        const int fan_in = arch[l], fan_out = arch[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        DenseLayer layer;
        layer.weights.resize(fan_out, fan_in);
        for (Eigen::Index r = 0; r < fan_out; ++r)
            for (Eigen::Index c = 0; c < fan_in; ++c) layer.weights(r, c) = dist(rng);
        layer.bias = Eigen::VectorXd::Zero(fan_out);
        layer.activation = (l + 2 == arch.size()) ? Activation::Identity : Activation::Relu;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

ForwardTrace forward_trace(const NetworkModel& net, const Eigen::VectorXd& x) {
    if (x.size() != net.input_dim())
        throw std::invalid_argument("forward pass: input dimension mismatch");
    ForwardTrace tr;
    tr.act.push_back(x);
    for (const auto& layer : net.layers) {
        Eigen::VectorXd z = layer.weights * tr.act.back() + layer.bias;
        tr.pre.push_back(z);
        if (layer.activation == Activation::Relu) z = z.cwiseMax(0.0);
        tr.act.push_back(std::move(z));
    }
    if (!tr.logits().allFinite()) throw NumericalError("forward pass produced non-finite logits");
    return tr;
}

Eigen::VectorXd forward_logits(const NetworkModel& net, const Eigen::VectorXd& x) {
    return forward_trace(net, x).logits();
}

double logsumexp(const Eigen::VectorXd& v) {
    if (v.size() == 0) throw std::invalid_argument("logsumexp of empty vector");
    const double m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    if (logits.size() == 0) throw std::invalid_argument("softmax of empty vector");
    const Eigen::VectorXd scaled = logits / temperature;
    const double m = scaled.maxCoeff();
    Eigen::VectorXd w = (scaled.array() - m).exp();
    return w / w.sum();
}

ProbabilityVector probabilities(const NetworkModel& net, const Eigen::VectorXd& x,
                                double temperature) {
    return ProbabilityVector(softmax(forward_logits(net, x), temperature));
}

std::pair<double, Eigen::VectorXd> input_gradient(const NetworkModel& net,
                                                  const Eigen::VectorXd& x,
                                                  const LogitObjective& objective) {
    const ForwardTrace tr = forward_trace(net, x);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(tr.logits().size());
    const double value = objective(tr.logits(), g);
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const auto& layer = net.layers[l];
        if (layer.activation == Activation::Relu)
            g = (tr.pre[l].array() > 0.0).select(g, 0.0);
        g = layer.weights.transpose() * g;
    }
    return {value, std::move(g)};
}

namespace {

std::string activation_name(Activation a) {
    return a == Activation::Relu ? "relu" : "identity";
}

Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "identity") return Activation::Identity;
    throw std::invalid_argument("unknown activation: " + s);
}

}  // namespace

void to_json(nlohmann::json& j, const NetworkModel& net) {
    net.validate();
    std::vector<int> arch{static_cast<int>(net.input_dim())};
    nlohmann::json weights = nlohmann::json::array();
    nlohmann::json biases = nlohmann::json::array();
    nlohmann::json activations = nlohmann::json::array();
    for (const auto& layer : net.layers) {
        arch.push_back(static_cast<int>(layer.weights.rows()));
        std::vector<double> flat;  // row-major
        flat.reserve(static_cast<std::size_t>(layer.weights.size()));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                flat.push_back(layer.weights(r, c));
        weights.push_back(flat);
        biases.push_back(std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size()));
        activations.push_back(activation_name(layer.activation));
    }
    j = nlohmann::json{{"version", 1},
                       {"arch", arch},
                       {"weights", weights},
                       {"biases", biases},
                       {"activations", activations}};
}

void from_json(const nlohmann::json& j, NetworkModel& net) {
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw std::invalid_argument("model json: unsupported or missing version");
    const auto arch = j.at("arch").get<std::vector<int>>();
    if (arch.size() < 2) throw std::invalid_argument("model json: arch too short");
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    const auto& activations = j.at("activations");
    const std::size_t n_layers = arch.size() - 1;
    if (weights.size() != n_layers || biases.size() != n_layers ||
        activations.size() != n_layers)
        throw std::invalid_argument("model json: layer count mismatch");
    NetworkModel out;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const Eigen::Index rows = arch[l + 1], cols = arch[l];
        const auto flat = weights[l].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
            throw std::invalid_argument("model json: weight block size mismatch at layer " +
                                        std::to_string(l));
        DenseLayer layer;
        layer.weights.resize(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                layer.weights(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
        const auto b = biases[l].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(b.size()) != rows)
            throw std::invalid_argument("model json: bias size mismatch at layer " +
                                        std::to_string(l));
        layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
        layer.activation = activation_from_name(activations[l].get<std::string>());
        out.layers.push_back(std::move(layer));
    }
    out.validate();
    net = std::move(out);
}

void save_model(const NetworkModel& net, const std::string& path) {
    write_text_file(path, nlohmann::json(net).dump(2) + "\n");
}

NetworkModel load_model(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("model json: parse error in " + path + ": " + e.what());
    }
    return j.get<NetworkModel>();
}

void LabeledData::validate(Eigen::Index num_classes) const {
    if (inputs.rows() != labels.size())
        throw std::invalid_argument("labeled data: inputs and labels differ in length");
    if (!inputs.allFinite()) throw std::invalid_argument("labeled data: non-finite inputs");
    for (Eigen::Index i = 0; i < labels.size(); ++i)
        if (labels(i) < 0 || labels(i) >= num_classes)
            throw std::invalid_argument("labeled data: label out of range at row " +
                                        std::to_string(i));
}

}  // namespace costsense
