#include "costsense/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include "costsense/io.hpp"
#include "costsense/parallel.hpp"
#include "costsense/random.hpp"

namespace costsense {

void ExperimentConfig::validate() const {
    dataset.validate();
    costs.validate();
    if (costs.k != dataset.k)
        throw std::invalid_argument("experiment config: cost matrix and dataset class counts differ");
    for (int h : defender_hidden)
        if (h < 1) throw std::invalid_argument("experiment config: hidden sizes must be positive");
    for (int h : black_box_hidden)
        if (h < 1) throw std::invalid_argument("experiment config: hidden sizes must be positive");
    if (epochs < 0) throw std::invalid_argument("experiment config: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("experiment config: batch_size must be >= 1");
    if (!(learning_rate > 0.0))
        throw std::invalid_argument("experiment config: learning_rate must be > 0");
    if (epsilon < 0.0) throw std::invalid_argument("experiment config: epsilon must be >= 0");
    if (!(alpha > 0.0)) throw std::invalid_argument("experiment config: alpha must be > 0");
    if (n_steps < 1) throw std::invalid_argument("experiment config: n_steps must be >= 1");
    if (n_attacks < 0) throw std::invalid_argument("experiment config: n_attacks must be >= 0");
    if (calibration_bins < 1)
        throw std::invalid_argument("experiment config: calibration_bins must be >= 1");
    if (!(fit_fraction > 0.0) || fit_fraction > 1.0)
        throw std::invalid_argument("experiment config: fit_fraction must lie in (0, 1]");
    if (jobs < 1) throw std::invalid_argument("experiment config: jobs must be >= 1");
}

void to_json(nlohmann::json& j, const ExperimentConfig& cfg) {
    j = nlohmann::json{{"dataset", cfg.dataset},
                       {"master_seed", cfg.master_seed},
                       {"defender_hidden", cfg.defender_hidden},
                       {"black_box_hidden", cfg.black_box_hidden},
                       {"epochs", cfg.epochs},
                       {"batch_size", cfg.batch_size},
                       {"learning_rate", cfg.learning_rate},
                       {"costs", cfg.costs},
                       {"epsilon", cfg.epsilon},
                       {"alpha", cfg.alpha},
                       {"n_steps", cfg.n_steps},
                       {"random_init", cfg.random_init},
                       {"n_attacks", cfg.n_attacks},
                       {"calibration_bins", cfg.calibration_bins},
                       {"fit_fraction", cfg.fit_fraction},
                       {"t_min", cfg.search.t_min},
                       {"t_max", cfg.search.t_max},
                       {"grid_points", cfg.search.grid_points},
                       {"resolution", cfg.search.resolution},
                       {"black_box", cfg.black_box},
                       {"jobs", cfg.jobs}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& cfg) {
    ExperimentConfig d;
    if (j.contains("dataset")) cfg.dataset = j["dataset"].get<DatasetParams>();
    cfg.master_seed = j.value("master_seed", d.master_seed);
    cfg.defender_hidden = j.value("defender_hidden", d.defender_hidden);
    cfg.black_box_hidden = j.value("black_box_hidden", d.black_box_hidden);
    cfg.epochs = j.value("epochs", d.epochs);
    cfg.batch_size = j.value("batch_size", d.batch_size);
    cfg.learning_rate = j.value("learning_rate", d.learning_rate);
    if (j.contains("costs")) cfg.costs = j["costs"].get<SuperCategorySpec>();
    cfg.epsilon = j.value("epsilon", d.epsilon);
    cfg.alpha = j.contains("alpha") ? j["alpha"].get<double>() : cfg.epsilon / 10.0;
    cfg.n_steps = j.value("n_steps", d.n_steps);
    cfg.random_init = j.value("random_init", d.random_init);
    cfg.n_attacks = j.value("n_attacks", d.n_attacks);
    cfg.calibration_bins = j.value("calibration_bins", d.calibration_bins);
    cfg.fit_fraction = j.value("fit_fraction", d.fit_fraction);
    cfg.search.t_min = j.value("t_min", d.search.t_min);
    cfg.search.t_max = j.value("t_max", d.search.t_max);
    cfg.search.grid_points = j.value("grid_points", d.search.grid_points);
    cfg.search.resolution = j.value("resolution", d.search.resolution);
    cfg.black_box = j.value("black_box", d.black_box);
    cfg.jobs = j.value("jobs", d.jobs);
    cfg.validate();
}

namespace {

Eigen::MatrixXd logits_matrix(const NetworkModel& net, const Eigen::MatrixXd& inputs) {
    Eigen::MatrixXd z(inputs.rows(), net.num_classes());
    for (Eigen::Index i = 0; i < inputs.rows(); ++i)
        z.row(i) = forward_logits(net, inputs.row(i).transpose()).transpose();
    return z;
}

LabeledData leading_slice(const LabeledData& data, long n) {
    LabeledData out;
    out.inputs = data.inputs.topRows(n);
    out.labels = data.labels.head(n);
    return out;
}

LabeledData fit_slice(const LabeledData& val, double fraction) {
    const long n = std::max<long>(1, static_cast<long>(std::llround(
                                         fraction * static_cast<double>(val.size()))));
    return leading_slice(val, std::min<long>(n, val.size()));
}

struct DefenderScenario {
    std::string label;
    bool min_cost;
    double temperature;
};

std::vector<DefenderScenario> defender_scenarios(double t_star) {
    return {{"MP !C", false, 1.0},
            {"MP C", false, t_star},
            {"MC !C", true, 1.0},
            {"MC C", true, t_star}};
}

}  // namespace

AttackGrid generate_attack_grid(const NetworkModel& surrogate, double surrogate_t_star,
                                const LabeledData& test, long n_attacks, const CostMatrix& cm,
                                const ExperimentConfig& cfg, std::uint64_t seed_base) {
    if (test.size() < 1) throw std::invalid_argument("attack grid: empty test split");
    AttackGrid grid;
    grid.clean = leading_slice(test, std::min<long>(n_attacks, test.size()));
    grid.attacker_t_star = surrogate_t_star;
    grid.labels = attacker_strategy_labels();
    const AttackObjective objectives[3] = {AttackObjective::RandomTarget,
                                           AttackObjective::CostSensitiveTarget,
                                           AttackObjective::MaxiMin};
    for (std::size_t s = 0; s < grid.labels.size(); ++s) {
        AttackSpec spec;
        spec.epsilon = cfg.epsilon;
        spec.alpha = cfg.alpha;
        spec.n_steps = cfg.n_steps;
        spec.objective = objectives[s / 2];
        spec.random_init = cfg.random_init;
        spec.domain_box = DomainBox::unit(grid.clean.inputs.cols());
        spec.temperature = (s % 2 == 1) ? surrogate_t_star : 1.0;
        spec.seed = derive_seed(seed_base, s);
        grid.inputs.push_back(attack_batch(surrogate, grid.clean, spec, &cm, cfg.jobs).x_adv);
    }
    return grid;
}

std::vector<ResultRow> evaluate_defender(const NetworkModel& defender, double t_star,
                                         const AttackGrid& grid, const CostMatrix& cm,
                                         const std::string& setting) {
    const auto scenarios = defender_scenarios(t_star);
    std::vector<ResultRow> rows;
    const long n = grid.clean.size();
    for (std::size_t a = 0; a <= grid.labels.size(); ++a) {
        const bool clean = a == 0;
        const std::string attack_label = clean ? "clean" : grid.labels[a - 1];
        const Eigen::MatrixXd& inputs = clean ? grid.clean.inputs : grid.inputs[a - 1];
        const Eigen::MatrixXd logits = logits_matrix(defender, inputs);
        for (const auto& sc : scenarios) {
            std::vector<double> acc, cost;
            acc.reserve(static_cast<std::size_t>(n));
            cost.reserve(static_cast<std::size_t>(n));
            for (long i = 0; i < n; ++i) {
                const ProbabilityVector p(softmax(logits.row(i).transpose(), sc.temperature));
                const int pred = sc.min_cost ? predict_min_cost(cm, p) : predict_max_prob(p);
                const int label = grid.clean.labels(i);
                acc.push_back(pred == label ? 1.0 : 0.0);
                cost.push_back(cm(pred, label));
            }
            const MeanWithCi am = mean_with_ci(acc);
            const MeanWithCi cmn = mean_with_ci(cost);
            rows.push_back({setting, attack_label, sc.label, n, am.mean, am.ci_half_width,
                            cmn.mean, cmn.ci_half_width});
        }
    }
    return rows;
}

GameAnalysis analyze_payoff(const PayoffMatrix& pm) {
    GameAnalysis out;
    try {
        out.equilibrium = solve_zero_sum(pm, 1e-6);
    } catch (const SolverNonConvergence& e) {
        out.equilibrium = e.best_iterate;
        out.solver_converged = false;
    }
    for (const auto& [r, c] : pure_nash(pm))
        out.pure_cells.emplace_back(pm.row_labels[static_cast<std::size_t>(r)],
                                    pm.col_labels[static_cast<std::size_t>(c)]);
    auto name_of = [](const PayoffMatrix& m, Player p, std::optional<Eigen::Index> i)
        -> std::optional<std::string> {
        if (!i) return std::nullopt;
        return p == Player::Row ? m.row_labels[static_cast<std::size_t>(*i)]
                                : m.col_labels[static_cast<std::size_t>(*i)];
    };
    out.dominant_row_strict =
        name_of(pm, Player::Row, dominant_strategy(pm, Player::Row, DominanceMode::Strict));
    out.dominant_row_weak =
        name_of(pm, Player::Row, dominant_strategy(pm, Player::Row, DominanceMode::Weak));
    out.dominant_col_strict =
        name_of(pm, Player::Column, dominant_strategy(pm, Player::Column, DominanceMode::Strict));
    out.dominant_col_weak =
        name_of(pm, Player::Column, dominant_strategy(pm, Player::Column, DominanceMode::Weak));
    const EliminationResult elim = iterated_elimination(pm, DominanceMode::Strict);
    for (const auto& step : elim.removed)
        out.elimination_log.push_back(
            (step.player == Player::Row ? std::string("row ") : std::string("col ")) + step.label);
    out.reduced_rows = elim.reduced.row_labels;
    out.reduced_cols = elim.reduced.col_labels;
    return out;
}

std::vector<std::string> cost_rule_warnings(const std::vector<ResultRow>& rows) {
    std::vector<std::string> warnings;
    for (const auto& mc : rows) {
        const bool calibrated = mc.defense == "MC C";
        if (!calibrated && mc.defense != "MC !C") continue;
        const std::string mp_label = calibrated ? "MP C" : "MP !C";
        for (const auto& mp : rows) {
            if (mp.setting != mc.setting || mp.attack != mc.attack || mp.defense != mp_label)
                continue;
            if (mc.avg_cost > mp.avg_cost)
                warnings.push_back("cost rule check: MC average cost above MP at (" + mc.setting +
                                   ", " + mc.attack + ", " + (calibrated ? "C" : "!C") + ")");
        }
    }
    return warnings;
}

GridResult run_grid(const ExperimentConfig& cfg, const SyntheticDataset& ds,
                    const NetworkModel& defender, const NetworkModel* black_box_defender) {
    cfg.validate();
    defender.validate();
    if (defender.input_dim() != ds.params.dim ||
        defender.num_classes() != ds.params.k)
        throw std::invalid_argument("run_grid: defender shape does not match dataset");
    ds.val.validate(ds.params.k);
    ds.test.validate(ds.params.k);
    if (ds.val.size() < 1 || ds.test.size() < 1)
        throw std::invalid_argument("run_grid: empty validation or test split");

    GridResult out;
    const CostMatrix cm = build_supercategory_cost_matrix(cfg.costs);
    const LabeledData fit = fit_slice(ds.val, cfg.fit_fraction);

    const Eigen::MatrixXd fit_logits = logits_matrix(defender, fit.inputs);
    out.defender_calibration =
        fit_temperature_logits(fit_logits, fit.labels, cfg.calibration_bins, cfg.search);
    {
        std::vector<double> conf;
        std::vector<bool> correct;
        confidence_and_correct(fit_logits, fit.labels, out.defender_calibration.t_star, conf,
                               correct);
        out.reliability = reliability_bins(conf, correct, cfg.calibration_bins);
    }
    if (out.defender_calibration.degenerate)
        out.warnings.push_back("calibration fit split contains a single class");
    if (ds.clipping_warning)
        out.warnings.push_back("dataset clipping moved a large share of coordinates");

    if (cfg.n_attacks == 0) {
        // Clean-baseline-only run: evaluate the whole test split, no attacks,
        // no payoff to analyze.
        out.attacks.clean = ds.test;
        out.attacks.attacker_t_star = out.defender_calibration.t_star;
    } else {
        out.attacks =
            generate_attack_grid(defender, out.defender_calibration.t_star, ds.test,
                                 cfg.n_attacks, cm, cfg, derive_seed(cfg.master_seed, 1000));
    }
    out.rows = evaluate_defender(defender, out.defender_calibration.t_star, out.attacks, cm,
                                 "white_box");
    out.clean_accuracy = accuracy(defender, ds.test);

    if (cfg.n_attacks == 0) {
        out.warnings.push_back("no attacks requested; game analysis skipped");
    } else {
        std::map<std::pair<std::string, std::string>, double> cells;
        for (const auto& row : out.rows)
            if (row.attack != "clean") cells[{row.defense, row.attack}] = row.avg_cost;
        out.payoff = build_payoff(cells);
        out.analysis = analyze_payoff(out.payoff);
        if (!out.analysis.solver_converged)
            out.warnings.push_back(
                "equilibrium solver did not reach its tolerance; best iterate kept");
    }

    if (black_box_defender != nullptr) {
        black_box_defender->validate();
        if (black_box_defender->input_dim() != ds.params.dim ||
            black_box_defender->num_classes() != ds.params.k)
            throw std::invalid_argument("run_grid: black-box model shape does not match dataset");
        const Eigen::MatrixXd bb_logits = logits_matrix(*black_box_defender, fit.inputs);
        out.black_box_calibration =
            fit_temperature_logits(bb_logits, fit.labels, cfg.calibration_bins, cfg.search);
        const auto bb_rows = evaluate_defender(*black_box_defender,
                                               out.black_box_calibration->t_star, out.attacks, cm,
                                               "black_box");
        // Soft transfer check: attacks computed on the defender should not be
        // significantly more effective on a model they never saw.
        for (const auto& b : bb_rows) {
            if (b.attack == "clean") continue;
            for (const auto& w : out.rows) {
                if (w.setting != "white_box" || w.attack != b.attack || w.defense != b.defense)
                    continue;
                if (b.avg_cost > w.avg_cost) {
                    const bool overlap = b.avg_cost - b.avg_cost_ci <= w.avg_cost + w.avg_cost_ci;
                    const std::string cell = "(" + b.defense + ", " + b.attack + ")";
                    if (overlap)
                        out.warnings.push_back("transfer check: black-box cost above white-box "
                                               "within CI overlap at " + cell);
                    else
                        out.transfer_failures.push_back(
                            "transfer check failed: black-box cost significantly above "
                            "white-box at " + cell);
                }
            }
        }
        out.rows.insert(out.rows.end(), bb_rows.begin(), bb_rows.end());
    }
    for (auto& w : cost_rule_warnings(out.rows)) out.warnings.push_back(std::move(w));
    return out;
}

PipelineResult run_pipeline(const ExperimentConfig& cfg) {
    cfg.validate();
    PipelineResult out;
    out.dataset = generate_dataset(cfg.dataset, derive_seed(cfg.master_seed, 0));

    auto arch = [&](const std::vector<int>& hidden) {
        std::vector<int> a{cfg.dataset.dim};
        a.insert(a.end(), hidden.begin(), hidden.end());
        a.push_back(cfg.dataset.k);
        return a;
    };
    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.learning_rate = cfg.learning_rate;

    tc.seed = derive_seed(cfg.master_seed, 2);
    out.defender = train(init_network(arch(cfg.defender_hidden), derive_seed(cfg.master_seed, 1)),
                         out.dataset.train, tc);
    tc.seed = derive_seed(cfg.master_seed, 4);
    out.black_box_model =
        train(init_network(arch(cfg.black_box_hidden), derive_seed(cfg.master_seed, 3)),
              out.dataset.train, tc);

    out.grid = run_grid(cfg, out.dataset, out.defender.model,
                        cfg.black_box ? &out.black_box_model.model : nullptr);
    return out;
}

std::vector<SweepRow> run_nsteps_sweep(const ExperimentConfig& cfg, const SyntheticDataset& ds,
                                       const NetworkModel& defender,
                                       const std::vector<int>& step_counts) {
    cfg.validate();
    if (step_counts.empty()) throw std::invalid_argument("sweep: no step counts");
    for (std::size_t i = 0; i < step_counts.size(); ++i) {
        if (step_counts[i] < 1) throw std::invalid_argument("sweep: step counts must be >= 1");
        if (i > 0 && step_counts[i] <= step_counts[i - 1])
            throw std::invalid_argument("sweep: step counts must be strictly increasing");
    }
    const CostMatrix cm = build_supercategory_cost_matrix(cfg.costs);
    const LabeledData fit = fit_slice(ds.val, cfg.fit_fraction);
    const CalibrationResult cal =
        fit_temperature(defender, fit, cfg.calibration_bins, cfg.search);

    const LabeledData subset = leading_slice(ds.test, std::min<long>(cfg.n_attacks, ds.test.size()));
    const Eigen::Index dim = subset.inputs.cols();
    const auto& labels = attacker_strategy_labels();
    const AttackObjective objectives[3] = {AttackObjective::RandomTarget,
                                           AttackObjective::CostSensitiveTarget,
                                           AttackObjective::MaxiMin};
    std::vector<SweepRow> out;
    for (std::size_t s = 0; s < labels.size(); ++s) {
        AttackSpec spec;
        spec.epsilon = cfg.epsilon;
        spec.alpha = cfg.alpha;
        spec.n_steps = step_counts.back();
        spec.objective = objectives[s / 2];
        spec.random_init = cfg.random_init;
        spec.domain_box = DomainBox::unit(dim);
        spec.temperature = (s % 2 == 1) ? cal.t_star : 1.0;
        const std::uint64_t strategy_seed = derive_seed(derive_seed(cfg.master_seed, 2000), s);

        // One attack per input, snapshotted at every requested step count.
        std::vector<Eigen::MatrixXd> per_step(step_counts.size());
        for (auto& m : per_step) m.resize(subset.size(), dim);
        parallel_for(subset.size(), cfg.jobs, [&](long i) {
            AttackSpec per_input = spec;
            per_input.seed = derive_seed(strategy_seed, static_cast<std::uint64_t>(i));
            const AttackSnapshots snaps =
                pgd_attack_snapshots(defender, subset.inputs.row(i).transpose(), per_input, &cm,
                                     subset.labels(i), step_counts);
            for (std::size_t t = 0; t < step_counts.size(); ++t)
                per_step[t].row(i) = snaps.x_at[t].transpose();
        });

        for (std::size_t t = 0; t < step_counts.size(); ++t) {
            AttackGrid grid;
            grid.clean = subset;
            grid.attacker_t_star = cal.t_star;
            grid.labels = {labels[s]};
            grid.inputs = {per_step[t]};
            for (const auto& row :
                 evaluate_defender(defender, cal.t_star, grid, cm, "white_box"))
                if (row.attack != "clean") out.push_back({step_counts[t], row});
        }
    }
    return out;
}

namespace {

constexpr const char* kResultsHeader =
    "setting,attack,defense,n,accuracy,accuracy_ci,avg_cost,avg_cost_ci";

std::string result_row_line(const ResultRow& r) {
    std::ostringstream s;
    s << r.setting << ',' << r.attack << ',' << r.defense << ',' << r.n << ','
      << format_double(r.accuracy) << ',' << format_double(r.accuracy_ci) << ','
      << format_double(r.avg_cost) << ',' << format_double(r.avg_cost_ci);
    return s.str();
}

}  // namespace

void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path) {
    std::ostringstream out;
    out << kResultsHeader << '\n';
    for (const auto& r : rows) out << result_row_line(r) << '\n';
    write_text_file(path, out.str());
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line).size() != 8)
        throw std::invalid_argument("results csv: bad header in " + path);
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 8) throw std::invalid_argument("results csv: bad row in " + path);
        ResultRow r;
        r.setting = f[0];
        r.attack = f[1];
        r.defense = f[2];
        r.n = static_cast<long>(parse_double_field(f[3], "results csv"));
        r.accuracy = parse_double_field(f[4], "results csv");
        r.accuracy_ci = parse_double_field(f[5], "results csv");
        r.avg_cost = parse_double_field(f[6], "results csv");
        r.avg_cost_ci = parse_double_field(f[7], "results csv");
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ostringstream out;
    out << "n_steps," << kResultsHeader << '\n';
    for (const auto& r : rows) out << r.n_steps << ',' << result_row_line(r.row) << '\n';
    write_text_file(path, out.str());
}

namespace {

nlohmann::json calibration_json(const CalibrationResult& c) {
    return {{"t_star", c.t_star},
            {"ece_before", c.ece_before},
            {"ece_after", c.ece_after},
            {"degenerate", c.degenerate}};
}

std::string markdown_payoff_table(const PayoffMatrix& pm) {
    std::ostringstream md;
    md << "| defense \\ attack |";
    for (const auto& c : pm.col_labels) md << ' ' << c << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < pm.col_labels.size(); ++i) md << "---|";
    md << '\n';
    for (Eigen::Index r = 0; r < pm.rows(); ++r) {
        md << "| " << pm.row_labels[static_cast<std::size_t>(r)] << " |";
        for (Eigen::Index c = 0; c < pm.cols(); ++c)
            md << ' ' << format_double(pm.values(r, c)) << " |";
        md << '\n';
    }
    return md.str();
}

std::string describe_mixture(const nlohmann::json& mix) {
    // mix: {label: weight}; show non-negligible entries, alphabetical order.
    std::ostringstream s;
    bool first = true;
    for (auto it = mix.begin(); it != mix.end(); ++it) {
        const double w = it.value().get<double>();
        if (w < 1e-9) continue;
        if (!first) s << ", ";
        s << it.key() << ": " << format_double(w);
        first = false;
    }
    if (first) s << "(empty)";
    return s.str();
}

}  // namespace

void rewrite_summary_from_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    const bool has_game = fs::exists(fs::path(dir) / "payoff.csv");
    PayoffMatrix pm;
    nlohmann::json eq;
    if (has_game) {
        pm = read_payoff_csv((fs::path(dir) / "payoff.csv").string());
        eq = nlohmann::json::parse(
            read_text_file((fs::path(dir) / "equilibrium.json").string()));
    }
    const auto rows = read_results_csv((fs::path(dir) / "results.csv").string());
    const nlohmann::json meta =
        nlohmann::json::parse(read_text_file((fs::path(dir) / "run.json").string()));

    std::ostringstream md;
    md << "# Cost-sensitive attack evaluation\n\n";

    md << "## Run\n\n";
    md << "- clean test accuracy (most-probable rule): "
       << format_double(meta.at("clean_accuracy").get<double>()) << "\n";
    const auto& cal = meta.at("defender_calibration");
    md << "- defender temperature: " << format_double(cal.at("t_star").get<double>())
       << " (fit-split ECE " << format_double(cal.at("ece_before").get<double>()) << " -> "
       << format_double(cal.at("ece_after").get<double>()) << ")\n";
    if (meta.contains("black_box_calibration") && !meta["black_box_calibration"].is_null()) {
        const auto& bb = meta["black_box_calibration"];
        md << "- black-box model temperature: " << format_double(bb.at("t_star").get<double>())
           << " (fit-split ECE " << format_double(bb.at("ece_before").get<double>()) << " -> "
           << format_double(bb.at("ece_after").get<double>()) << ")\n";
    }
    for (const auto& w : meta.value("warnings", std::vector<std::string>{}))
        md << "- warning: " << w << "\n";
    md << '\n';

    if (has_game) {
        md << "## Average cost under white-box attack\n\n" << markdown_payoff_table(pm) << '\n';

        md << "## Attack effect vs clean\n\n";
        md << "| setting | attack | defense | accuracy | delta accuracy | avg cost | delta "
              "cost |\n|---|---|---|---|---|---|---|\n";
        for (const auto& r : rows) {
            if (r.attack == "clean") continue;
            for (const auto& base : rows) {
                if (base.attack != "clean" || base.setting != r.setting ||
                    base.defense != r.defense)
                    continue;
                md << "| " << r.setting << " | " << r.attack << " | " << r.defense << " | "
                   << format_double(r.accuracy) << " | "
                   << format_double(r.accuracy - base.accuracy) << " | "
                   << format_double(r.avg_cost) << " | "
                   << format_double(r.avg_cost - base.avg_cost) << " |\n";
            }
        }
        md << '\n';

        const GameAnalysis analysis = analyze_payoff(pm);
        md << "## Game analysis\n\n";
        md << "- equilibrium (" << eq.at("kind").get<std::string>()
           << "): value " << format_double(eq.at("value").get<double>()) << ", exploitability "
           << format_double(eq.at("exploitability").get<double>()) << "\n";
        md << "- defender mixture: " << describe_mixture(eq.at("row_strategy")) << "\n";
        md << "- attacker mixture: " << describe_mixture(eq.at("col_strategy")) << "\n";
        if (analysis.pure_cells.empty()) {
            md << "- pure equilibria: none\n";
        } else {
            md << "- pure equilibria:";
            for (const auto& [r, c] : analysis.pure_cells) md << " (" << r << ", " << c << ")";
            md << '\n';
        }
        auto opt = [](const std::optional<std::string>& v) {
            return v ? *v : std::string("none");
        };
        md << "- dominant defender strategy: strict " << opt(analysis.dominant_row_strict)
           << ", weak " << opt(analysis.dominant_row_weak) << "\n";
        md << "- dominant attacker strategy: strict " << opt(analysis.dominant_col_strict)
           << ", weak " << opt(analysis.dominant_col_weak) << "\n";
        md << "- strict iterated elimination leaves";
        for (const auto& r : analysis.reduced_rows) md << ' ' << r << ';';
        md << " vs";
        for (const auto& c : analysis.reduced_cols) md << ' ' << c << ';';
        md << '\n';
        if (!analysis.elimination_log.empty()) {
            md << "- elimination order:";
            for (const auto& e : analysis.elimination_log) md << ' ' << e << ';';
            md << '\n';
        }
        md << '\n';
    } else {
        md << "## Average cost under white-box attack\n\nNo attacks were evaluated.\n\n";
        md << "## Game analysis\n\nNo attacks were evaluated.\n\n";
    }

    md << "## Clean baselines\n\n";
    md << "| setting | defense | accuracy | avg cost |\n|---|---|---|---|\n";
    for (const auto& r : rows)
        if (r.attack == "clean")
            md << "| " << r.setting << " | " << r.defense << " | " << format_double(r.accuracy)
               << " | " << format_double(r.avg_cost) << " |\n";
    md << '\n';

    md << "## Transfer check\n\n";
    const auto failures = meta.value("transfer_failures", std::vector<std::string>{});
    if (failures.empty()) {
        md << "No cell had black-box cost significantly above its white-box counterpart.\n";
    } else {
        for (const auto& f : failures) md << "- " << f << "\n";
    }

    write_text_file((fs::path(dir) / "summary.md").string(), md.str());
}

void emit_report(const GridResult& grid, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    write_results_csv(grid.rows, (fs::path(out_dir) / "results.csv").string());
    const bool has_attacks = !grid.attacks.labels.empty();
    if (has_attacks) {
        write_payoff_csv(grid.payoff, (fs::path(out_dir) / "payoff.csv").string());
        write_text_file(
            (fs::path(out_dir) / "equilibrium.json").string(),
            equilibrium_to_json(grid.analysis.equilibrium, grid.payoff).dump(2) + "\n");
    }
    write_reliability_csv(grid.reliability, (fs::path(out_dir) / "reliability.csv").string());

    nlohmann::json meta{{"clean_accuracy", grid.clean_accuracy},
                        {"defender_calibration", calibration_json(grid.defender_calibration)},
                        {"solver_converged", grid.analysis.solver_converged},
                        {"warnings", grid.warnings},
                        {"transfer_failures", grid.transfer_failures},
                        {"n_attacked", has_attacks ? grid.attacks.clean.size() : 0}};
    meta["black_box_calibration"] = grid.black_box_calibration
                                        ? calibration_json(*grid.black_box_calibration)
                                        : nlohmann::json(nullptr);
    write_text_file((fs::path(out_dir) / "run.json").string(), meta.dump(2) + "\n");

    rewrite_summary_from_dir(out_dir);
}

}  // namespace costsense
