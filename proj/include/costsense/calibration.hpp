#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "costsense/network.hpp"

namespace costsense {

/// Equal-width confidence bins over (0, 1]; bin b covers (b/M, (b+1)/M].
struct ReliabilityBins {
    int n_bins = 0;
    std::vector<long> count;
    std::vector<double> accuracy;    // 0 for empty bins
    std::vector<double> confidence;  // mean confidence, 0 for empty bins
    long total = 0;
};

ReliabilityBins reliability_bins(const std::vector<double>& confidence,
                                 const std::vector<bool>& correct, int n_bins);

/// Expected calibration error: count-weighted mean absolute gap between
/// per-bin accuracy and confidence.
double ece(const ReliabilityBins& bins);

struct TemperatureSearch {
    double t_min = 0.25;
    double t_max = 4.0;
    int grid_points = 64;     // log-spaced coarse grid
    double resolution = 1e-3;  // golden-section refinement width
};

struct CalibrationResult {
    double t_star = 1.0;
    double ece_before = 0.0;  // at temperature 1
    double ece_after = 0.0;   // at t_star
    bool degenerate = false;  // validation carried a single class only
};

/// Pick the softmax temperature minimizing ECE on held-out logits. The
/// candidate set is a log-spaced grid plus exactly 1.0 (so scaling can never
/// look worse than not scaling), refined by golden-section search around the
/// grid minimum; the best temperature actually evaluated wins.
CalibrationResult fit_temperature_logits(const Eigen::MatrixXd& logits,
                                         const Eigen::VectorXi& labels, int n_bins = 15,
                                         const TemperatureSearch& search = {});

CalibrationResult fit_temperature(const NetworkModel& net, const LabeledData& validation,
                                  int n_bins = 15, const TemperatureSearch& search = {});

/// Confidence of the top-class prediction and its correctness, per row, at
/// the given temperature. The predicted class does not depend on the
/// temperature; only the confidence does.
void confidence_and_correct(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels,
                            double temperature, std::vector<double>& confidence,
                            std::vector<bool>& correct);

/// Columns: bin_low, bin_high, count, accuracy, confidence, gap.
void write_reliability_csv(const ReliabilityBins& bins, const std::string& path);

}  // namespace costsense
