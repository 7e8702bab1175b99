#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "costsense/network.hpp"

namespace costsense {

/// Synthetic task: one Gaussian cluster per class, centers drawn uniformly
/// inside the unit box with a margin, samples clipped back into [0,1]^dim.
/// The default noise is pinned so a small trained classifier lands in the
/// 60-75% clean-accuracy band, leaving the attacks room to matter.
struct DatasetParams {
    int k = 10;             // number of classes
    int dim = 8;
    long n_train = 6000;
    long n_val = 1000;
    long n_test = 2000;
    double noise = 0.22;    // per-coordinate Gaussian scale
    double center_margin = 0.15;  // centers drawn in [margin, 1-margin]

    void validate() const;
};

void to_json(nlohmann::json& j, const DatasetParams& p);
void from_json(const nlohmann::json& j, DatasetParams& p);

struct SyntheticDataset {
    DatasetParams params;
    std::uint64_t seed = 0;
    Eigen::MatrixXd centers;  // (k x dim), row c is the center for class c
    LabeledData train, val, test;
    bool clipping_warning = false;  // set when clipping moved many coordinates
};

/// Deterministic in (params, seed): centers, a class-label permutation, then
/// each split in train/val/test order. Class counts within each split are
/// balanced to +-1.
SyntheticDataset generate_dataset(const DatasetParams& params, std::uint64_t seed);

void to_json(nlohmann::json& j, const SyntheticDataset& ds);
void from_json(const nlohmann::json& j, SyntheticDataset& ds);

void save_dataset(const SyntheticDataset& ds, const std::string& path);
SyntheticDataset load_dataset(const std::string& path);

}  // namespace costsense
