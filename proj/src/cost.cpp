#include "costsense/cost.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "costsense/random.hpp"

namespace costsense {

ProbabilityVector::ProbabilityVector(Eigen::VectorXd p) : p_(std::move(p)) {
    if (p_.size() < 1) throw std::invalid_argument("probability vector must be non-empty");
    if (!p_.allFinite()) throw std::invalid_argument("probability vector has non-finite entries");
    for (Eigen::Index i = 0; i < p_.size(); ++i) {
        if (p_(i) < 0.0 || p_(i) > 1.0 + 1e-9)
            throw std::invalid_argument("probability component out of [0,1]: " +
                                        std::to_string(p_(i)));
    }
    const double total = p_.sum();
    if (std::abs(total - 1.0) > 1e-7)
        throw std::invalid_argument("probability mass " + std::to_string(total) +
                                    " is not 1 within 1e-7");
    p_ /= total;
}

CostMatrix::CostMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
    if (entries_.rows() != entries_.cols())
        throw std::invalid_argument("cost matrix must be square");
    if (entries_.rows() < 2) throw std::invalid_argument("cost matrix needs k >= 2 classes");
    if (!entries_.allFinite()) throw std::invalid_argument("cost matrix has non-finite entries");
    for (Eigen::Index a = 0; a < entries_.rows(); ++a) {
        for (Eigen::Index b = 0; b < entries_.cols(); ++b) {
            if (a == b && entries_(a, b) != 0.0)
                throw std::invalid_argument("cost matrix diagonal must be exactly zero");
            if (a != b && !(entries_(a, b) > 0.0))
                throw std::invalid_argument("off-diagonal costs must be strictly positive");
        }
    }
}

void to_json(nlohmann::json& j, const CostMatrix& cm) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index a = 0; a < cm.k(); ++a) {
        std::vector<double> row;
        for (Eigen::Index b = 0; b < cm.k(); ++b) row.push_back(cm(a, b));
        rows.push_back(std::move(row));
    }
    j = nlohmann::json{{"k", cm.k()}, {"entries", rows}};
}

CostMatrix cost_matrix_from_json(const nlohmann::json& j) {
    const auto k = j.at("k").get<Eigen::Index>();
    const auto& rows = j.at("entries");
    if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != k)
        throw std::invalid_argument("cost matrix json: entries must be a k x k array");
    Eigen::MatrixXd m(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
        const auto& row = rows[static_cast<std::size_t>(a)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != k)
            throw std::invalid_argument("cost matrix json: entries must be a k x k array");
        for (Eigen::Index b = 0; b < k; ++b) m(a, b) = row[static_cast<std::size_t>(b)].get<double>();
    }
    return CostMatrix(std::move(m));
}

void from_json(const nlohmann::json& j, CostMatrix& cm) { cm = cost_matrix_from_json(j); }

void SuperCategorySpec::validate() const {
    if (k < 2) throw std::invalid_argument("supercategory spec: k must be >= 2");
    if (m < 1 || m >= k)
        throw std::invalid_argument("supercategory spec: need 1 <= m < k");
    const bool ordered = 0.0 < within_insensitive && within_insensitive <= within_sensitive &&
                         within_sensitive <= false_alarm && false_alarm < miss;
    if (!ordered)
        throw std::invalid_argument(
            "supercategory spec: costs must satisfy 0 < within_insensitive <= "
            "within_sensitive <= false_alarm < miss");
}

void to_json(nlohmann::json& j, const SuperCategorySpec& spec) {
    j = nlohmann::json{{"k", spec.k},
                       {"m", spec.m},
                       {"c_ab", spec.within_insensitive},
                       {"c_alphabeta", spec.within_sensitive},
                       {"c_alphab", spec.false_alarm},
                       {"c_abeta", spec.miss}};
    if (spec.permutation_seed) j["permutation_seed"] = *spec.permutation_seed;
}

void from_json(const nlohmann::json& j, SuperCategorySpec& spec) {
    spec.k = j.at("k").get<int>();
    spec.m = j.at("m").get<int>();
    spec.within_insensitive = j.at("c_ab").get<double>();
    spec.within_sensitive = j.at("c_alphabeta").get<double>();
    spec.false_alarm = j.at("c_alphab").get<double>();
    spec.miss = j.at("c_abeta").get<double>();
    if (j.contains("permutation_seed") && !j["permutation_seed"].is_null())
        spec.permutation_seed = j["permutation_seed"].get<std::uint64_t>();
    else
        spec.permutation_seed.reset();
    spec.validate();
}

Eigen::VectorXd expected_cost(const CostMatrix& cm, const ProbabilityVector& p) {
    if (p.size() != cm.k())
        throw std::invalid_argument("expected_cost: dimension mismatch between costs and posterior");
    return cm.entries() * p.coeffs();
}

int predict_max_prob(const ProbabilityVector& p) {
    int best = 0;
    for (Eigen::Index i = 1; i < p.size(); ++i)
        if (p(i) > p(best)) best = static_cast<int>(i);
    return best;
}

int predict_min_cost(const CostMatrix& cm, const ProbabilityVector& p) {
    const Eigen::VectorXd costs = expected_cost(cm, p);
    int best = 0;
    for (Eigen::Index i = 1; i < costs.size(); ++i)
        if (costs(i) < costs(best)) best = static_cast<int>(i);
    return best;
}

double binary_threshold(const CostMatrix& cm) {
    if (cm.k() != 2) throw std::invalid_argument("binary_threshold requires a 2x2 cost matrix");
    // Predicting 0 beats predicting 1 iff c(0,1) * p1 < c(1,0) * p0, i.e.
    // p0 > c(0,1) / (c(0,1) + c(1,0)).
    return cm(0, 1) / (cm(0, 1) + cm(1, 0));
}

CostMatrix build_supercategory_cost_matrix(const SuperCategorySpec& spec) {
    spec.validate();
    const int k = spec.k, m = spec.m;
    Eigen::MatrixXd c(k, k);
    for (int a = 0; a < k; ++a) {
        const bool pred_sensitive = a >= m;
        for (int b = 0; b < k; ++b) {
            if (a == b) {
                c(a, b) = 0.0;
                continue;
            }
            const bool true_sensitive = b >= m;
            if (!pred_sensitive && !true_sensitive)
                c(a, b) = spec.within_insensitive;
            else if (pred_sensitive && true_sensitive)
                c(a, b) = spec.within_sensitive;
            else if (pred_sensitive)  // true class insensitive
                c(a, b) = spec.false_alarm;
            else  // sensitive input predicted as insensitive
                c(a, b) = spec.miss;
        }
    }
    if (spec.permutation_seed) {
        std::vector<int> sigma(static_cast<std::size_t>(k));
        std::iota(sigma.begin(), sigma.end(), 0);
        Rng rng(*spec.permutation_seed);
        std::shuffle(sigma.begin(), sigma.end(), rng);
        Eigen::MatrixXd shuffled(k, k);
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b)
                shuffled(sigma[static_cast<std::size_t>(a)], sigma[static_cast<std::size_t>(b)]) =
                    c(a, b);
        c = std::move(shuffled);
    }
    return CostMatrix(std::move(c));
}

MaximinPoint maximin_simplex_point(const CostMatrix& cm, double tolerance, long max_iterations) {
    PayoffMatrix pm;
    pm.values = cm.entries();
    for (Eigen::Index i = 0; i < cm.k(); ++i) {
        pm.row_labels.push_back("predict " + std::to_string(i));
        pm.col_labels.push_back("class " + std::to_string(i));
    }
    const Equilibrium eq = solve_zero_sum(pm, tolerance, max_iterations);
    ProbabilityVector p(eq.col_strategy);
    // Report the value this point actually achieves, not the game midpoint.
    const double achieved = (cm.entries() * p.coeffs()).minCoeff();
    return MaximinPoint{std::move(p), achieved};
}

MeanWithCi mean_with_ci(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("mean_with_ci: empty sample");
    MeanWithCi out;
    out.n = static_cast<long>(values.size());
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(out.n);
    if (out.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        const double sd = std::sqrt(ss / static_cast<double>(out.n - 1));
        out.ci_half_width = 1.96 * sd / std::sqrt(static_cast<double>(out.n));
    }
    return out;
}

MeanWithCi average_cost(const std::vector<int>& predictions, const std::vector<int>& labels,
                        const CostMatrix& cm) {
    if (predictions.size() != labels.size())
        throw std::invalid_argument("average_cost: predictions and labels differ in length");
    if (predictions.empty()) throw std::invalid_argument("average_cost: empty sample");
    std::vector<double> costs;
    costs.reserve(predictions.size());
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int p = predictions[i], l = labels[i];
        if (p < 0 || p >= cm.k() || l < 0 || l >= cm.k())
            throw std::invalid_argument("average_cost: class index out of range");
        costs.push_back(cm(p, l));
    }
    return mean_with_ci(costs);
}

}  // namespace costsense
