#include "costsense/dataset.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "costsense/io.hpp"
#include "costsense/random.hpp"

namespace costsense {

void DatasetParams::validate() const {
    if (k < 2) throw std::invalid_argument("dataset params: k must be >= 2");
    if (dim < 1) throw std::invalid_argument("dataset params: dim must be >= 1");
    if (n_train < 0 || n_val < 0 || n_test < 0)
        throw std::invalid_argument("dataset params: split sizes must be >= 0");
    if (n_train + n_val + n_test < 1)
        throw std::invalid_argument("dataset params: at least one sample required");
    if (!(noise > 0.0)) throw std::invalid_argument("dataset params: noise must be > 0");
    if (center_margin < 0.0 || center_margin >= 0.5)
        throw std::invalid_argument("dataset params: center_margin must lie in [0, 0.5)");
}

void to_json(nlohmann::json& j, const DatasetParams& p) {
    j = nlohmann::json{{"k", p.k},           {"dim", p.dim},
                       {"n_train", p.n_train}, {"n_val", p.n_val},
                       {"n_test", p.n_test},   {"noise", p.noise},
                       {"center_margin", p.center_margin}};
}

void from_json(const nlohmann::json& j, DatasetParams& p) {
    DatasetParams d;
    p.k = j.value("k", d.k);
    p.dim = j.value("dim", d.dim);
    p.n_train = j.value("n_train", d.n_train);
    p.n_val = j.value("n_val", d.n_val);
    p.n_test = j.value("n_test", d.n_test);
    p.noise = j.value("noise", d.noise);
    p.center_margin = j.value("center_margin", d.center_margin);
    p.validate();
}

namespace {

LabeledData sample_split(long n, const Eigen::MatrixXd& centers, const std::vector<int>& relabel,
                         double noise, Rng& rng, long& clipped, long& coords) {
    const auto k = static_cast<long>(centers.rows());
    const Eigen::Index dim = centers.cols();
    // Balanced to +-1: class c gets floor(n/k) samples plus one if c < n mod k.
    std::vector<int> labels;
    labels.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) labels.push_back(static_cast<int>(i % k));
    std::shuffle(labels.begin(), labels.end(), rng);

    std::normal_distribution<double> gauss(0.0, 1.0);
    LabeledData split;
    split.inputs.resize(n, dim);
    split.labels.resize(n);
    for (long i = 0; i < n; ++i) {
        const int cluster = labels[static_cast<std::size_t>(i)];
        split.labels(i) = relabel[static_cast<std::size_t>(cluster)];
        for (Eigen::Index d = 0; d < dim; ++d) {
            double v = centers(cluster, d) + noise * gauss(rng);
            if (v < 0.0 || v > 1.0) ++clipped;
            ++coords;
            split.inputs(i, d) = std::clamp(v, 0.0, 1.0);
        }
    }
    return split;
}

}  // namespace

SyntheticDataset generate_dataset(const DatasetParams& params, std::uint64_t seed) {
    params.validate();
    Rng rng(seed);
    SyntheticDataset ds;
    ds.params = params;
    ds.seed = seed;

    std::uniform_real_distribution<double> center(params.center_margin,
                                                  1.0 - params.center_margin);
    ds.centers.resize(params.k, params.dim);
    for (int c = 0; c < params.k; ++c)
        for (int d = 0; d < params.dim; ++d) ds.centers(c, d) = center(rng);

    // Which label each cluster carries is itself shuffled, so class indices
    // encode nothing about geometry.
    std::vector<int> relabel(static_cast<std::size_t>(params.k));
    std::iota(relabel.begin(), relabel.end(), 0);
    std::shuffle(relabel.begin(), relabel.end(), rng);

    long clipped = 0, coords = 0;
    ds.train = sample_split(params.n_train, ds.centers, relabel, params.noise, rng, clipped, coords);
    ds.val = sample_split(params.n_val, ds.centers, relabel, params.noise, rng, clipped, coords);
    ds.test = sample_split(params.n_test, ds.centers, relabel, params.noise, rng, clipped, coords);
    ds.clipping_warning =
        coords > 0 && static_cast<double>(clipped) / static_cast<double>(coords) > 0.25;
    return ds;
}

namespace {

nlohmann::json split_to_json(const LabeledData& split) {
    std::vector<std::vector<double>> rows;
    rows.reserve(static_cast<std::size_t>(split.size()));
    for (long i = 0; i < split.size(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(split.inputs.cols()));
        for (Eigen::Index d = 0; d < split.inputs.cols(); ++d)
            row[static_cast<std::size_t>(d)] = split.inputs(i, d);
        rows.push_back(std::move(row));
    }
    return nlohmann::json{
        {"inputs", rows},
        {"labels", std::vector<int>(split.labels.data(), split.labels.data() + split.labels.size())}};
}

LabeledData split_from_json(const nlohmann::json& j, int dim) {
    LabeledData split;
    const auto labels = j.at("labels").get<std::vector<int>>();
    const auto& rows = j.at("inputs");
    if (rows.size() != labels.size())
        throw std::invalid_argument("dataset json: inputs/labels length mismatch");
    split.inputs.resize(static_cast<Eigen::Index>(rows.size()), dim);
    split.labels.resize(static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto row = rows[i].get<std::vector<double>>();
        if (static_cast<int>(row.size()) != dim)
            throw std::invalid_argument("dataset json: row width mismatch");
        for (int d = 0; d < dim; ++d) split.inputs(static_cast<Eigen::Index>(i), d) = row[static_cast<std::size_t>(d)];
        split.labels(static_cast<Eigen::Index>(i)) = labels[i];
    }
    return split;
}

}  // namespace

void to_json(nlohmann::json& j, const SyntheticDataset& ds) {
    std::vector<std::vector<double>> centers;
    for (Eigen::Index c = 0; c < ds.centers.rows(); ++c) {
        std::vector<double> row(static_cast<std::size_t>(ds.centers.cols()));
        for (Eigen::Index d = 0; d < ds.centers.cols(); ++d)
            row[static_cast<std::size_t>(d)] = ds.centers(c, d);
        centers.push_back(std::move(row));
    }
    j = nlohmann::json{{"version", 1},
                       {"params", ds.params},
                       {"seed", ds.seed},
                       {"centers", centers},
                       {"clipping_warning", ds.clipping_warning},
                       {"train", split_to_json(ds.train)},
                       {"val", split_to_json(ds.val)},
                       {"test", split_to_json(ds.test)}};
}

void from_json(const nlohmann::json& j, SyntheticDataset& ds) {
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw std::invalid_argument("dataset json: unsupported or missing version");
    ds.params = j.at("params").get<DatasetParams>();
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.clipping_warning = j.value("clipping_warning", false);
    const auto centers = j.at("centers").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(centers.size()) != ds.params.k)
        throw std::invalid_argument("dataset json: center count mismatch");
    ds.centers.resize(ds.params.k, ds.params.dim);
    for (int c = 0; c < ds.params.k; ++c) {
        if (static_cast<int>(centers[static_cast<std::size_t>(c)].size()) != ds.params.dim)
            throw std::invalid_argument("dataset json: center width mismatch");
        for (int d = 0; d < ds.params.dim; ++d)
            ds.centers(c, d) = centers[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)];
    }
    ds.train = split_from_json(j.at("train"), ds.params.dim);
    ds.val = split_from_json(j.at("val"), ds.params.dim);
    ds.test = split_from_json(j.at("test"), ds.params.dim);
    for (const auto* split : {&ds.train, &ds.val, &ds.test})
        split->validate(ds.params.k);
}

void save_dataset(const SyntheticDataset& ds, const std::string& path) {
    write_text_file(path, nlohmann::json(ds).dump() + "\n");
}

SyntheticDataset load_dataset(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("dataset json: parse error in " + path + ": " + e.what());
    }
    return j.get<SyntheticDataset>();
}

}  // namespace costsense
