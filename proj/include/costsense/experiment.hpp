#pragma once

#include <optional>
#include <string>
#include <vector>

#include "costsense/attack.hpp"
#include "costsense/calibration.hpp"
#include "costsense/cost.hpp"
#include "costsense/dataset.hpp"
#include "costsense/game.hpp"
#include "costsense/network.hpp"
#include "costsense/training.hpp"

namespace costsense {

/// Everything needed to reproduce the evaluation grid end to end. All
/// randomness is derived from master_seed.
struct ExperimentConfig {
    DatasetParams dataset;
    std::uint64_t master_seed = 10;

    std::vector<int> defender_hidden = {32};
    /// Architecture of the independently trained model used for the
    /// black-box transfer section: same depth as the defender, different
    /// width, so transfer crosses a real architecture gap.
    std::vector<int> black_box_hidden = {48};
    /// Deliberately few epochs: the mildly underfit defender has smooth
    /// class boundaries, which keeps the rare worst-case mistakes (the
    /// 200-cost cells) from drowning the strategy-grid orderings in noise.
    int epochs = 12;
    int batch_size = 64;
    double learning_rate = 0.05;

    SuperCategorySpec costs{10, 8, 1.0, 2.0, 5.0, 200.0, std::nullopt};

    double epsilon = 16.0 / 255.0;
    double alpha = 1.6 / 255.0;
    int n_steps = 10;
    bool random_init = true;
    long n_attacks = 2000;  // attacked test inputs (capped at the test size)

    int calibration_bins = 15;
    double fit_fraction = 0.1;  // leading share of the validation split used to fit T
    TemperatureSearch search;

    bool black_box = true;  // also evaluate the attacks on the second model
    int jobs = 1;

    void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);

/// The attacked test subset under every attacker strategy. inputs[s] rows
/// align with clean.inputs rows.
struct AttackGrid {
    LabeledData clean;
    std::vector<std::string> labels;      // canonical attacker strategy names
    std::vector<Eigen::MatrixXd> inputs;  // one matrix per strategy
    double attacker_t_star = 1.0;         // temperature behind the "C" strategies
};

struct ResultRow {
    std::string setting;  // "white_box" or "black_box"
    std::string attack;   // "clean" or an attacker strategy label
    std::string defense;  // defender strategy label
    long n = 0;
    double accuracy = 0.0;
    double accuracy_ci = 0.0;
    double avg_cost = 0.0;
    double avg_cost_ci = 0.0;
};

struct GameAnalysis {
    Equilibrium equilibrium;
    bool solver_converged = true;
    std::vector<std::pair<std::string, std::string>> pure_cells;
    std::optional<std::string> dominant_row_strict, dominant_row_weak;
    std::optional<std::string> dominant_col_strict, dominant_col_weak;
    std::vector<std::string> elimination_log;  // strict mode: "col RT !C", "row MP C", ...
    std::vector<std::string> reduced_rows, reduced_cols;
};

/// Deterministic game post-processing of a payoff matrix (equilibrium,
/// pure cells, dominance, strict iterated elimination). Solver
/// non-convergence is recorded, not thrown.
GameAnalysis analyze_payoff(const PayoffMatrix& pm);

struct GridResult {
    std::vector<ResultRow> rows;  // white-box rows first, then black-box
    PayoffMatrix payoff;          // white-box average-cost grid
    GameAnalysis analysis;
    CalibrationResult defender_calibration;
    std::optional<CalibrationResult> black_box_calibration;
    ReliabilityBins reliability;  // defender bins at t_star on the fit split
    AttackGrid attacks;           // kept for feasibility auditing
    double clean_accuracy = 0.0;  // defender, most-probable rule, full test set
    std::vector<std::string> warnings;           // non-fatal oddities
    std::vector<std::string> transfer_failures;  // black-box beat white-box beyond CI overlap
};

/// Attack the leading n_attacks test inputs with each of the six attacker
/// strategies, computed against `surrogate` (the defender itself in the
/// white-box setting). Strategy s draws its seeds from
/// derive_seed(seed_base, s).
AttackGrid generate_attack_grid(const NetworkModel& surrogate, double surrogate_t_star,
                                const LabeledData& test, long n_attacks, const CostMatrix& cm,
                                const ExperimentConfig& cfg, std::uint64_t seed_base);

/// Evaluate one defender over the clean subset and every attacked variant
/// under all four defender strategies (prediction rule x temperature).
std::vector<ResultRow> evaluate_defender(const NetworkModel& defender, double t_star,
                                         const AttackGrid& grid, const CostMatrix& cm,
                                         const std::string& setting);

/// Soft sanity scan over result rows: lists every cell where the
/// cost-minimizing rule averaged a higher realized cost than the
/// probability-maximizing rule at the same temperature state. Possible under
/// miscalibration, so reported as warnings rather than failures.
std::vector<std::string> cost_rule_warnings(const std::vector<ResultRow>& rows);

/// Full grid on a prepared dataset and trained models: calibrate, attack the
/// defender with itself as surrogate, evaluate, assemble the payoff matrix
/// and its game analysis. When a second model is given, the same attacked
/// inputs are also evaluated on it (black-box transfer).
GridResult run_grid(const ExperimentConfig& cfg, const SyntheticDataset& ds,
                    const NetworkModel& defender, const NetworkModel* black_box_defender);

struct PipelineResult {
    SyntheticDataset dataset;
    TrainResult defender;
    TrainResult black_box_model;
    GridResult grid;
};

/// End-to-end run from a config alone: generate data, train both models, run
/// the grid.
PipelineResult run_pipeline(const ExperimentConfig& cfg);

/// Per-step-count evaluation rows for attack-strength curves. Each input is
/// attacked once with max(step_counts) steps and snapshotted along the way,
/// never re-attacked per step count.
struct SweepRow {
    int n_steps = 0;
    ResultRow row;
};
std::vector<SweepRow> run_nsteps_sweep(const ExperimentConfig& cfg, const SyntheticDataset& ds,
                                       const NetworkModel& defender,
                                       const std::vector<int>& step_counts);

/// Write results.csv, payoff.csv, equilibrium.json, reliability.csv, run.json
/// and summary.md into out_dir (created if missing). Byte-stable for
/// identical results; summary.md is derived purely from the other artifacts.
void emit_report(const GridResult& grid, const std::string& out_dir);

void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path);
std::vector<ResultRow> read_results_csv(const std::string& path);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

/// Regenerate summary.md from the artifacts already present in dir.
void rewrite_summary_from_dir(const std::string& dir);

}  // namespace costsense
