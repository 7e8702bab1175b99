#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "costsense/game.hpp"

namespace costsense {

/// Point on the probability simplex. Construction validates (components in
/// [0,1] up to slack, mass within 1e-7 of one) and renormalizes exactly, so
/// downstream code can rely on sum == 1 without re-checking.
class ProbabilityVector {
  public:
    explicit ProbabilityVector(Eigen::VectorXd p);
    const Eigen::VectorXd& coeffs() const { return p_; }
    Eigen::Index size() const { return p_.size(); }
    double operator()(Eigen::Index i) const { return p_(i); }

  private:
    Eigen::VectorXd p_;
};

/// Misclassification cost table: entries(A, B) is the cost of predicting
/// class A when the true class is B. Zero diagonal, strictly positive
/// off-diagonal, K >= 2.
class CostMatrix {
  public:
    explicit CostMatrix(Eigen::MatrixXd entries);
    const Eigen::MatrixXd& entries() const { return entries_; }
    Eigen::Index k() const { return entries_.rows(); }
    double operator()(Eigen::Index predicted, Eigen::Index actual) const {
        return entries_(predicted, actual);
    }

  private:
    Eigen::MatrixXd entries_;
};

void to_json(nlohmann::json& j, const CostMatrix& cm);
void from_json(const nlohmann::json& j, CostMatrix& cm);
/// CostMatrix is not default-constructible, so json::get<CostMatrix>() does
/// not apply; use this to materialize one.
CostMatrix cost_matrix_from_json(const nlohmann::json& j);

/// Two-tier class structure: classes [0, m) are the insensitive tier,
/// [m, k) the sensitive tier. The four constants are the misclassification
/// costs within and across tiers; `miss` (a sensitive input predicted as
/// insensitive) must be the strict maximum, and all must satisfy
/// 0 < within_insensitive <= within_sensitive <= false_alarm < miss.
struct SuperCategorySpec {
    int k = 0;
    int m = 0;
    double within_insensitive = 0.0;  // both classes insensitive
    double within_sensitive = 0.0;    // both classes sensitive
    double false_alarm = 0.0;         // predicted sensitive, actually insensitive
    double miss = 0.0;                // predicted insensitive, actually sensitive
    std::optional<std::uint64_t> permutation_seed;  // optional label shuffle

    void validate() const;
};

void to_json(nlohmann::json& j, const SuperCategorySpec& spec);
void from_json(const nlohmann::json& j, SuperCategorySpec& spec);

/// Per-class expected cost of each prediction under class posterior p:
/// result(A) = sum_B entries(A, B) * p(B).
Eigen::VectorXd expected_cost(const CostMatrix& cm, const ProbabilityVector& p);

/// Most-probable-class prediction (lowest index wins ties).
int predict_max_prob(const ProbabilityVector& p);

/// Minimum-expected-cost prediction (lowest index wins ties).
int predict_min_cost(const CostMatrix& cm, const ProbabilityVector& p);

/// For a binary cost matrix, the posterior threshold t such that predicting
/// class 0 is optimal exactly when p(class 0) > t (class 0 on ties).
double binary_threshold(const CostMatrix& cm);

/// Assemble the two-tier block cost matrix described by `spec`. When a
/// permutation seed is set, class labels are shuffled afterwards:
/// result[sigma(A)][sigma(B)] = block[A][B].
CostMatrix build_supercategory_cost_matrix(const SuperCategorySpec& spec);

struct MaximinPoint {
    ProbabilityVector point;  // posterior maximizing the best-response cost
    double value;             // min_A expected_cost(cm, point)(A)
};

/// The posterior at which even the cost-optimal prediction is most expensive:
/// argmax over the simplex of min_A expected_cost. Solved as the column
/// player's side of the zero-sum game with payoff cm. Throws
/// SolverNonConvergence (carrying the best iterate) if the certificate cannot
/// be reached.
MaximinPoint maximin_simplex_point(const CostMatrix& cm, double tolerance = 1e-6,
                                   long max_iterations = 500000);

struct MeanWithCi {
    double mean = 0.0;
    double ci_half_width = 0.0;  // 1.96 * stderr, normal approximation
    long n = 0;
};

/// Average realized cost of predictions against labels, with a 95% normal
/// confidence half-width.
MeanWithCi average_cost(const std::vector<int>& predictions, const std::vector<int>& labels,
                        const CostMatrix& cm);

/// Mean and 95% half-width of an arbitrary sample (shared by accuracy and
/// cost columns of the reports).
MeanWithCi mean_with_ci(const std::vector<double>& values);

}  // namespace costsense
