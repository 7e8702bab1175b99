#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace costsense {

/// Raised when a computation produced a non-finite or otherwise unusable
/// numerical result (as opposed to invalid caller input).
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Finite two-player zero-sum game in attacker-payoff form.
/// values(r, c) is what the column player (maximizer) receives when the row
/// player (minimizer) plays r and the column player plays c.
struct PayoffMatrix {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    Eigen::MatrixXd values;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }

    /// Throws std::invalid_argument on shape/label mismatch or non-finite
    /// entries.
    void validate() const;
};

enum class Player { Row, Column };
enum class DominanceMode { Strict, Weak };
enum class EquilibriumKind { Pure, Mixed };

struct Equilibrium {
    EquilibriumKind kind = EquilibriumKind::Mixed;
    Eigen::VectorXd row_strategy;  // minimizer's mixture
    Eigen::VectorXd col_strategy;  // maximizer's mixture
    double value = 0.0;            // midpoint of the certified bounds
    double lower_bound = 0.0;      // min_r (values * col_strategy)(r)
    double upper_bound = 0.0;      // max_c (row_strategy^T values)(c)
    double exploitability = 0.0;   // upper_bound - lower_bound
};

/// Thrown when the solver exhausts its iteration budget without certifying
/// the requested tolerance. Carries the best certified iterate found.
class SolverNonConvergence : public std::runtime_error {
  public:
    SolverNonConvergence(const std::string& msg, Equilibrium best)
        : std::runtime_error(msg), best_iterate(std::move(best)) {}
    Equilibrium best_iterate;
};

/// All pure Nash cells (r, c): values(r, c) is simultaneously the minimum of
/// its column and the maximum of its row. Comparisons are exact; returned in
/// row-major scan order.
std::vector<std::pair<Eigen::Index, Eigen::Index>> pure_nash(const PayoffMatrix& pm);

/// Index of the player's dominant strategy, if one exists.
/// Strict: better than every alternative against every opponent move.
/// Weak: never worse, and strictly better somewhere, against each alternative.
/// The row player prefers low payoff, the column player high.
std::optional<Eigen::Index> dominant_strategy(const PayoffMatrix& pm, Player player,
                                              DominanceMode mode);

struct EliminationStep {
    Player player;
    std::string label;  // label of the removed strategy
};

struct EliminationResult {
    PayoffMatrix reduced;
    std::vector<EliminationStep> removed;  // in removal order
};

/// Iterated elimination of dominated strategies. Each round removes dominated
/// columns first, then dominated rows, until a fixed point. Strict mode
/// removes all strategies dominated at the start of the half-round at once;
/// weak mode removes one at a time (lowest index first) since weak
/// elimination is order-dependent.
EliminationResult iterated_elimination(const PayoffMatrix& pm, DominanceMode mode);

/// Solve the zero-sum game to the requested exploitability tolerance via
/// fictitious play, with periodic support-set refinement: the supports of the
/// running averages are used to solve the equalizing linear system exactly,
/// and the refined strategies are kept only if their certified bounds
/// improve. Throws SolverNonConvergence (carrying the best iterate) if the
/// iteration budget runs out first.
Equilibrium solve_zero_sum(const PayoffMatrix& pm, double tolerance = 1e-6,
                           long max_iterations = 500000);

/// Canonical strategy labels for the defender/attacker evaluation grid:
/// prediction rule x calibration for rows, attack objective x calibration for
/// columns ("!C" = uncalibrated, "C" = calibrated).
const std::vector<std::string>& defender_strategy_labels();
const std::vector<std::string>& attacker_strategy_labels();

/// Assemble a payoff matrix from per-cell average costs. Every (row, col)
/// pair over the labels appearing in `cells` must be present. Labels are
/// ordered canonically when they come from the canonical grid, otherwise
/// lexicographically.
PayoffMatrix build_payoff(const std::map<std::pair<std::string, std::string>, double>& cells);

void write_payoff_csv(const PayoffMatrix& pm, const std::string& path);
PayoffMatrix read_payoff_csv(const std::string& path);

nlohmann::json equilibrium_to_json(const Equilibrium& eq, const PayoffMatrix& pm);

}  // namespace costsense
