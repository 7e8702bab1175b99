#include "costsense/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "costsense/io.hpp"

namespace costsense {

ReliabilityBins reliability_bins(const std::vector<double>& confidence,
                                 const std::vector<bool>& correct, int n_bins) {
    if (n_bins < 1) throw std::invalid_argument("reliability_bins: need at least one bin");
    if (confidence.size() != correct.size())
        throw std::invalid_argument("reliability_bins: confidence/correct length mismatch");
    ReliabilityBins bins;
    bins.n_bins = n_bins;
    bins.count.assign(static_cast<std::size_t>(n_bins), 0);
    bins.accuracy.assign(static_cast<std::size_t>(n_bins), 0.0);
    bins.confidence.assign(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<long> hits(static_cast<std::size_t>(n_bins), 0);
    std::vector<double> conf_sum(static_cast<std::size_t>(n_bins), 0.0);
    for (std::size_t i = 0; i < confidence.size(); ++i) {
        double c = confidence[i];
        if (c > 1.0 && c <= 1.0 + 1e-12) c = 1.0;  // forgive summation round-off
        if (!(c > 0.0) || c > 1.0)
            throw std::invalid_argument("reliability_bins: confidence must lie in (0, 1]");
        // bin b covers (b/M, (b+1)/M]
        auto b = static_cast<long>(std::ceil(c * n_bins)) - 1;
        b = std::clamp<long>(b, 0, n_bins - 1);
        bins.count[static_cast<std::size_t>(b)] += 1;
        hits[static_cast<std::size_t>(b)] += correct[i] ? 1 : 0;
        conf_sum[static_cast<std::size_t>(b)] += c;
        bins.total += 1;
    }
    for (int b = 0; b < n_bins; ++b) {
        const auto idx = static_cast<std::size_t>(b);
        if (bins.count[idx] > 0) {
            bins.accuracy[idx] =
                static_cast<double>(hits[idx]) / static_cast<double>(bins.count[idx]);
            bins.confidence[idx] = conf_sum[idx] / static_cast<double>(bins.count[idx]);
        }
    }
    return bins;
}

double ece(const ReliabilityBins& bins) {
    if (bins.total == 0) throw std::invalid_argument("ece: no samples");
    double total = 0.0;
    for (int b = 0; b < bins.n_bins; ++b) {
        const auto idx = static_cast<std::size_t>(b);
        total += static_cast<double>(bins.count[idx]) / static_cast<double>(bins.total) *
                 std::abs(bins.accuracy[idx] - bins.confidence[idx]);
    }
    return total;
}

void confidence_and_correct(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels,
                            double temperature, std::vector<double>& confidence,
                            std::vector<bool>& correct) {
    if (logits.rows() != labels.size())
        throw std::invalid_argument("confidence_and_correct: logits/labels length mismatch");
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    const long n = logits.rows();
    confidence.assign(static_cast<std::size_t>(n), 0.0);
    correct.assign(static_cast<std::size_t>(n), false);
    for (long i = 0; i < n; ++i) {
        Eigen::Index top = 0;
        for (Eigen::Index a = 1; a < logits.cols(); ++a)
            if (logits(i, a) > logits(i, top)) top = a;
        const Eigen::ArrayXd scaled = logits.row(i).transpose().array() / temperature;
        const Eigen::ArrayXd w = (scaled - scaled.maxCoeff()).exp();
        confidence[static_cast<std::size_t>(i)] = w(top) / w.sum();
        correct[static_cast<std::size_t>(i)] = (top == labels(i));
    }
}

namespace {

double ece_at(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels, double temperature,
              int n_bins) {
    std::vector<double> conf;
    std::vector<bool> correct;
    confidence_and_correct(logits, labels, temperature, conf, correct);
    return ece(reliability_bins(conf, correct, n_bins));
}

}  // namespace

CalibrationResult fit_temperature_logits(const Eigen::MatrixXd& logits,
                                         const Eigen::VectorXi& labels, int n_bins,
                                         const TemperatureSearch& search) {
    if (logits.rows() == 0) throw std::invalid_argument("fit_temperature: no validation data");
    if (logits.rows() != labels.size())
        throw std::invalid_argument("fit_temperature: logits/labels length mismatch");
    if (!(search.t_min > 0.0) || !(search.t_max > search.t_min))
        throw std::invalid_argument("fit_temperature: need 0 < t_min < t_max");
    if (search.grid_points < 2)
        throw std::invalid_argument("fit_temperature: need at least two grid points");
    if (!(search.resolution > 0.0))
        throw std::invalid_argument("fit_temperature: resolution must be > 0");

    CalibrationResult result;
    std::set<int> classes_seen;
    for (Eigen::Index i = 0; i < labels.size(); ++i) classes_seen.insert(labels(i));
    result.degenerate = classes_seen.size() < 2;

    double best_t = 1.0;
    double best_e = ece_at(logits, labels, 1.0, n_bins);
    result.ece_before = best_e;
    auto probe = [&](double t) {
        const double e = ece_at(logits, labels, t, n_bins);
        if (e < best_e) {
            best_e = e;
            best_t = t;
        }
        return e;
    };

    // Coarse pass: log-spaced grid. 1.0 was already evaluated above.
    std::vector<double> grid;
    const double log_lo = std::log(search.t_min), log_hi = std::log(search.t_max);
    for (int i = 0; i < search.grid_points; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(search.grid_points - 1);
        grid.push_back(std::exp(log_lo + f * (log_hi - log_lo)));
    }
    std::vector<double> grid_ece;
    grid_ece.reserve(grid.size());
    for (double t : grid) grid_ece.push_back(probe(t));

    // Refine around the best grid point with golden-section search.
    std::size_t b = 0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (grid_ece[i] < grid_ece[b]) b = i;
    double lo = grid[b > 0 ? b - 1 : b];
    double hi = grid[b + 1 < grid.size() ? b + 1 : b];
    if (hi > lo) {
        constexpr double inv_phi = 0.6180339887498949;
        double x1 = hi - inv_phi * (hi - lo);
        double x2 = lo + inv_phi * (hi - lo);
        double f1 = probe(x1), f2 = probe(x2);
        while (hi - lo > search.resolution) {
            if (f1 <= f2) {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = probe(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = probe(x2);
            }
        }
    }

    result.t_star = best_t;
    result.ece_after = best_e;
    return result;
}

CalibrationResult fit_temperature(const NetworkModel& net, const LabeledData& validation,
                                  int n_bins, const TemperatureSearch& search) {
    validation.validate(net.num_classes());
    if (validation.size() == 0)
        throw std::invalid_argument("fit_temperature: no validation data");
    Eigen::MatrixXd logits(validation.size(), net.num_classes());
    for (long i = 0; i < validation.size(); ++i)
        logits.row(i) = forward_logits(net, validation.inputs.row(i).transpose()).transpose();
    return fit_temperature_logits(logits, validation.labels, n_bins, search);
}

void write_reliability_csv(const ReliabilityBins& bins, const std::string& path) {
    std::ostringstream out;
    out << "bin_low,bin_high,count,accuracy,confidence,gap\n";
    for (int b = 0; b < bins.n_bins; ++b) {
        const auto idx = static_cast<std::size_t>(b);
        const double lo = static_cast<double>(b) / bins.n_bins;
        const double hi = static_cast<double>(b + 1) / bins.n_bins;
        const double gap =
            bins.count[idx] > 0 ? std::abs(bins.accuracy[idx] - bins.confidence[idx]) : 0.0;
        out << format_double(lo) << ',' << format_double(hi) << ',' << bins.count[idx] << ','
            << format_double(bins.accuracy[idx]) << ',' << format_double(bins.confidence[idx])
            << ',' << format_double(gap) << '\n';
    }
    write_text_file(path, out.str());
}

}  // namespace costsense
