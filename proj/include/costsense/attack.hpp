#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "costsense/cost.hpp"
#include "costsense/network.hpp"
#include "costsense/random.hpp"

namespace costsense {

/// What the perturbation maximizes:
///  - RandomTarget: log-probability of a uniformly drawn wrong class
///  - CostSensitiveTarget: log-probability of the costliest wrong class
///  - MaxiMin: the cost of the defender's best available prediction
enum class AttackObjective { RandomTarget, CostSensitiveTarget, MaxiMin };

std::string to_string(AttackObjective obj);
AttackObjective attack_objective_from_string(const std::string& s);

/// Per-coordinate clamp interval for valid inputs.
struct DomainBox {
    Eigen::VectorXd lo, hi;

    static DomainBox unit(Eigen::Index dim);
    static DomainBox uniform(Eigen::Index dim, double lo, double hi);
    void validate(Eigen::Index dim) const;
    bool contains(const Eigen::VectorXd& x) const;
};

struct AttackSpec {
    double epsilon = 16.0 / 255.0;  // max-norm budget
    double alpha = 1.6 / 255.0;     // step size
    int n_steps = 10;
    AttackObjective objective = AttackObjective::MaxiMin;
    bool random_init = true;  // start from a uniform point in the budget ball
    DomainBox domain_box;
    double temperature = 1.0;  // applied to the attacked model's softmax
    std::uint64_t seed = 0;

    void validate(Eigen::Index dim) const;
};

nlohmann::json attack_spec_to_json(const AttackSpec& spec);
/// dim is needed to materialize the domain box; scalar or missing bounds
/// broadcast ([0,1] when missing), arrays must match dim.
AttackSpec attack_spec_from_json(const nlohmann::json& j, Eigen::Index dim);

struct AttackResult {
    Eigen::VectorXd x_adv;
    std::vector<double> objective_trace;  // n_steps + 1 values, start point first
    std::optional<int> target;            // set for the targeted objectives
};

/// Raised when the attack hits a non-finite objective or gradient; carries
/// the trace collected up to the failing step.
class AttackNumericalError : public NumericalError {
  public:
    AttackNumericalError(const std::string& msg, std::vector<double> trace)
        : NumericalError(msg), objective_trace(std::move(trace)) {}
    std::vector<double> objective_trace;
};

/// Costliest wrong prediction for an input of class true_label:
/// argmax_A cm(A, true_label), lowest index at ties like every other
/// argmax/argmin in this library.
int select_cost_sensitive_target(int true_label, const CostMatrix& cm);

/// Euclidean-box projection used between steps: clamp the offset from origin
/// into the max-norm ball, then clamp the point into the domain box.
Eigen::VectorXd project_linf(const Eigen::VectorXd& candidate, const Eigen::VectorXd& origin,
                             double epsilon, const DomainBox& box);

/// log p(target | x) under temperature scaling, as a logit objective.
LogitObjective make_targeted_ce_objective(int target, double temperature);
/// min_A expected prediction cost under the model posterior, as a logit
/// objective (differentiated at the lowest-index minimizer).
LogitObjective make_maximin_objective(const CostMatrix& cm, double temperature);

double objective_targeted_ce(const NetworkModel& net, double temperature,
                             const Eigen::VectorXd& x, int target);
double objective_maximin(const NetworkModel& net, double temperature, const CostMatrix& cm,
                         const Eigen::VectorXd& x);

/// Iterated sign-gradient ascent within the budget ball and domain box.
/// cost_matrix may be null for RandomTarget; true_label is ignored by MaxiMin.
/// All randomness (target draw, then init draw) comes from spec.seed.
AttackResult pgd_attack(const NetworkModel& net, const Eigen::VectorXd& x, const AttackSpec& spec,
                        const CostMatrix* cost_matrix, int true_label);

/// Like pgd_attack but also returns the iterate after each requested step
/// count (0 = the start point). snapshot_steps must be strictly increasing
/// and within [0, n_steps].
struct AttackSnapshots {
    std::vector<int> steps;
    std::vector<Eigen::VectorXd> x_at;
    AttackResult result;
};
AttackSnapshots pgd_attack_snapshots(const NetworkModel& net, const Eigen::VectorXd& x,
                                     const AttackSpec& spec, const CostMatrix* cost_matrix,
                                     int true_label, const std::vector<int>& snapshot_steps);

struct AttackBatchRecord {
    int input_id = 0;
    AttackObjective objective = AttackObjective::MaxiMin;
    std::optional<int> target;
    double final_objective = 0.0;
    double linf_norm = 0.0;
};

struct AttackBatchResult {
    Eigen::MatrixXd x_adv;  // one attacked input per row
    std::vector<AttackBatchRecord> records;
};

/// Attack every row of `data`. Input i uses seed derive_seed(spec.seed, i),
/// so results are identical for any jobs count.
AttackBatchResult attack_batch(const NetworkModel& net, const LabeledData& data,
                               const AttackSpec& spec, const CostMatrix* cost_matrix, int jobs);

/// One JSON object per attacked input: input_id, objective, target,
/// final_objective, linf_norm.
void write_attack_jsonl(const AttackBatchResult& batch, const std::string& path);

}  // namespace costsense
