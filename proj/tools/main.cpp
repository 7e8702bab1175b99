// Command-line front end: dataset generation, training, calibration, attacks,
// the full evaluation grid, step sweeps, game analysis and report rewriting.
// Exit codes: 0 success, 1 validation/config error, 2 numerical failure.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "costsense/experiment.hpp"
#include "costsense/io.hpp"

namespace fs = std::filesystem;
using namespace costsense;

namespace {

nlohmann::json load_config(const std::string& path) {
    try {
        return nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("config " + path + ": " + e.what());
    }
}

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int jobs = 1;
};

void add_common(CLI::App* cmd, CommonFlags& flags, const std::string& default_out) {
    flags.out = default_out;
    cmd->add_option("--config", flags.config, "JSON config file");
    cmd->add_option("--seed", flags.seed, "override the config seed");
    cmd->add_option("--out", flags.out, "output path");
    cmd->add_option("--jobs", flags.jobs, "worker threads for attack batches")
        ->check(CLI::PositiveNumber);
}

CostMatrix costs_from_json(const nlohmann::json& j) {
    if (j.contains("entries")) return cost_matrix_from_json(j);
    return build_supercategory_cost_matrix(j.get<SuperCategorySpec>());
}

SuperCategorySpec default_costs_for(int k) {
    SuperCategorySpec spec;
    spec.k = k;
    spec.m = std::max(1, (k * 8) / 10);
    spec.within_insensitive = 1.0;
    spec.within_sensitive = 2.0;
    spec.false_alarm = 5.0;
    spec.miss = 200.0;
    return spec;
}

int run_gen_data(const CommonFlags& flags) {
    DatasetParams params;
    if (!flags.config.empty()) params = load_config(flags.config).get<DatasetParams>();
    const SyntheticDataset ds = generate_dataset(params, flags.seed.value_or(1));
    save_dataset(ds, flags.out);
    std::cout << "wrote " << flags.out << " (k=" << params.k << ", dim=" << params.dim
              << ", train/val/test = " << ds.train.size() << "/" << ds.val.size() << "/"
              << ds.test.size() << ")\n";
    if (ds.clipping_warning)
        std::cout << "warning: clipping moved a large share of coordinates\n";
    return 0;
}

int run_train(const CommonFlags& flags, const std::string& data_path) {
    const SyntheticDataset ds = load_dataset(data_path);
    nlohmann::json j = flags.config.empty() ? nlohmann::json::object() : load_config(flags.config);

    std::vector<int> arch{ds.params.dim};
    for (int h : j.value("hidden", std::vector<int>{32})) arch.push_back(h);
    arch.push_back(ds.params.k);

    const std::uint64_t seed = flags.seed.value_or(j.value("seed", std::uint64_t{1}));
    TrainConfig tc;
    tc.epochs = j.value("epochs", 30);
    tc.batch_size = j.value("batch_size", 64);
    tc.learning_rate = j.value("learning_rate", 0.05);
    tc.seed = derive_seed(seed, 2);
    if (j.contains("adversarial"))
        tc.adversarial = attack_spec_from_json(j["adversarial"], ds.params.dim);

    const TrainResult res = train(init_network(arch, derive_seed(seed, 1)), ds.train, tc);
    save_model(res.model, flags.out);
    std::cout << "wrote " << flags.out;
    if (!res.loss_history.empty())
        std::cout << " (final training loss " << format_double(res.loss_history.back()) << ")";
    std::cout << "\nvalidation accuracy: " << format_double(accuracy(res.model, ds.val)) << "\n";
    return 0;
}

int run_calibrate(const CommonFlags& flags, const std::string& data_path,
                  const std::string& model_path, int bins, double fit_fraction) {
    const SyntheticDataset ds = load_dataset(data_path);
    const NetworkModel net = load_model(model_path);
    const long n = std::max<long>(
        1, std::min<long>(ds.val.size(),
                          static_cast<long>(std::llround(fit_fraction * ds.val.size()))));
    LabeledData fit;
    fit.inputs = ds.val.inputs.topRows(n);
    fit.labels = ds.val.labels.head(n);

    TemperatureSearch search;
    if (!flags.config.empty()) {
        const auto j = load_config(flags.config);
        search.t_min = j.value("t_min", search.t_min);
        search.t_max = j.value("t_max", search.t_max);
        search.grid_points = j.value("grid_points", search.grid_points);
        search.resolution = j.value("resolution", search.resolution);
    }
    const CalibrationResult cal = fit_temperature(net, fit, bins, search);

    nlohmann::json out{{"t_star", cal.t_star},
                       {"ece_before", cal.ece_before},
                       {"ece_after", cal.ece_after},
                       {"degenerate", cal.degenerate},
                       {"bins", bins},
                       {"n_fit", n}};
    write_text_file(flags.out, out.dump(2) + "\n");

    Eigen::MatrixXd logits(fit.size(), net.num_classes());
    for (long i = 0; i < fit.size(); ++i)
        logits.row(i) = forward_logits(net, fit.inputs.row(i).transpose()).transpose();
    std::vector<double> conf;
    std::vector<bool> correct;
    confidence_and_correct(logits, fit.labels, cal.t_star, conf, correct);
    const fs::path rel = fs::path(flags.out).parent_path() / "reliability.csv";
    write_reliability_csv(reliability_bins(conf, correct, bins), rel.string());

    std::cout << "t_star = " << format_double(cal.t_star) << ", ECE "
              << format_double(cal.ece_before) << " -> " << format_double(cal.ece_after)
              << " (wrote " << flags.out << ", " << rel.string() << ")\n";
    if (cal.degenerate) std::cout << "warning: calibration split contains a single class\n";
    return 0;
}

int run_attack_cmd(const CommonFlags& flags, const std::string& data_path,
                   const std::string& model_path, const std::string& costs_path,
                   const std::string& split, long limit) {
    const SyntheticDataset ds = load_dataset(data_path);
    const NetworkModel net = load_model(model_path);
    const LabeledData& full = split == "train" ? ds.train : split == "val" ? ds.val : ds.test;
    if (full.size() < 1) throw std::invalid_argument("attack: split '" + split + "' is empty");

    const CostMatrix cm = costs_path.empty()
                              ? build_supercategory_cost_matrix(default_costs_for(ds.params.k))
                              : costs_from_json(load_config(costs_path));

    nlohmann::json j = flags.config.empty()
                           ? nlohmann::json{{"epsilon", 16.0 / 255.0}, {"objective", "maximin"}}
                           : load_config(flags.config);
    AttackSpec spec = attack_spec_from_json(j, ds.params.dim);
    if (flags.seed) spec.seed = *flags.seed;

    LabeledData subset;
    const long n = limit > 0 ? std::min<long>(limit, full.size()) : full.size();
    subset.inputs = full.inputs.topRows(n);
    subset.labels = full.labels.head(n);

    const AttackBatchResult batch = attack_batch(net, subset, spec, &cm, flags.jobs);
    write_attack_jsonl(batch, flags.out);

    double mean_final = 0.0, max_norm = 0.0;
    for (const auto& rec : batch.records) {
        mean_final += rec.final_objective;
        max_norm = std::max(max_norm, rec.linf_norm);
    }
    mean_final /= static_cast<double>(batch.records.size());
    std::cout << "attacked " << n << " inputs (" << to_string(spec.objective)
              << "); mean final objective " << format_double(mean_final) << ", max linf "
              << format_double(max_norm) << "; wrote " << flags.out << "\n";
    return 0;
}

ExperimentConfig experiment_config(const CommonFlags& flags) {
    ExperimentConfig cfg;
    if (!flags.config.empty()) cfg = load_config(flags.config).get<ExperimentConfig>();
    if (flags.seed) cfg.master_seed = *flags.seed;
    if (flags.jobs > 1) cfg.jobs = flags.jobs;
    return cfg;
}

int run_grid_cmd(const CommonFlags& flags, const std::string& data_path,
                 const std::string& defender_path, const std::string& black_box_path) {
    ExperimentConfig cfg = experiment_config(flags);
    GridResult grid;
    if (data_path.empty() && defender_path.empty()) {
        grid = run_pipeline(cfg).grid;  // self-contained run
    } else {
        if (data_path.empty() || defender_path.empty())
            throw std::invalid_argument("grid: --data and --defender must be given together");
        const SyntheticDataset ds = load_dataset(data_path);
        cfg.dataset = ds.params;
        cfg.costs.k = ds.params.k;
        const NetworkModel defender = load_model(defender_path);
        std::optional<NetworkModel> bb;
        if (!black_box_path.empty()) bb = load_model(black_box_path);
        grid = run_grid(cfg, ds, defender, bb ? &*bb : nullptr);
    }
    emit_report(grid, flags.out);
    std::cout << "wrote report to " << flags.out << " (equilibrium value "
              << format_double(grid.analysis.equilibrium.value) << ", "
              << (grid.analysis.equilibrium.kind == EquilibriumKind::Pure ? "pure" : "mixed")
              << ")\n";
    for (const auto& w : grid.warnings) std::cout << "warning: " << w << "\n";
    for (const auto& f : grid.transfer_failures) std::cout << "warning: " << f << "\n";
    return 0;
}

int run_sweep_cmd(const CommonFlags& flags, const std::string& data_path,
                  const std::string& defender_path, const std::string& steps_arg) {
    ExperimentConfig cfg = experiment_config(flags);
    std::vector<int> steps;
    for (const auto& tok : split_csv_line(steps_arg))
        steps.push_back(static_cast<int>(parse_double_field(tok, "steps")));

    SyntheticDataset ds;
    NetworkModel defender;
    if (data_path.empty() && defender_path.empty()) {
        PipelineResult pipe = run_pipeline(cfg);
        ds = std::move(pipe.dataset);
        defender = std::move(pipe.defender.model);
    } else {
        if (data_path.empty() || defender_path.empty())
            throw std::invalid_argument("sweep: --data and --defender must be given together");
        ds = load_dataset(data_path);
        cfg.dataset = ds.params;
        cfg.costs.k = ds.params.k;
        defender = load_model(defender_path);
    }
    const auto rows = run_nsteps_sweep(cfg, ds, defender, steps);
    fs::create_directories(flags.out);
    const std::string path = (fs::path(flags.out) / "sweep.csv").string();
    write_sweep_csv(rows, path);
    std::cout << "wrote " << path << " (" << rows.size() << " rows)\n";
    return 0;
}

int run_game_cmd(const CommonFlags& flags, const std::string& payoff_path) {
    const PayoffMatrix pm = read_payoff_csv(payoff_path);
    const GameAnalysis analysis = analyze_payoff(pm);
    write_text_file(flags.out,
                    equilibrium_to_json(analysis.equilibrium, pm).dump(2) + "\n");
    std::cout << "equilibrium ("
              << (analysis.equilibrium.kind == EquilibriumKind::Pure ? "pure" : "mixed")
              << "): value " << format_double(analysis.equilibrium.value) << ", exploitability "
              << format_double(analysis.equilibrium.exploitability) << "\n";
    if (!analysis.solver_converged)
        std::cout << "warning: solver did not reach tolerance; best iterate reported\n";
    std::cout << "pure cells:";
    if (analysis.pure_cells.empty()) std::cout << " none";
    for (const auto& [r, c] : analysis.pure_cells) std::cout << " (" << r << ", " << c << ")";
    std::cout << "\n";
    auto opt = [](const std::optional<std::string>& v) { return v ? *v : std::string("none"); };
    std::cout << "dominant row: strict " << opt(analysis.dominant_row_strict) << ", weak "
              << opt(analysis.dominant_row_weak) << "\n";
    std::cout << "dominant col: strict " << opt(analysis.dominant_col_strict) << ", weak "
              << opt(analysis.dominant_col_weak) << "\n";
    std::cout << "wrote " << flags.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cost-sensitive classification under adversarial attack"};
    app.require_subcommand(1);

    CommonFlags gen_flags;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen, gen_flags, "dataset.json");

    CommonFlags train_flags;
    std::string train_data;
    auto* tr = app.add_subcommand("train", "train a classifier");
    add_common(tr, train_flags, "model.json");
    tr->add_option("--data", train_data, "dataset file")->required();

    CommonFlags cal_flags;
    std::string cal_data, cal_model;
    int cal_bins = 15;
    double cal_fraction = 1.0;
    auto* cal = app.add_subcommand("calibrate", "fit a softmax temperature");
    add_common(cal, cal_flags, "calibration.json");
    cal->add_option("--data", cal_data, "dataset file")->required();
    cal->add_option("--model", cal_model, "model file")->required();
    cal->add_option("--bins", cal_bins, "reliability bins");
    cal->add_option("--fit-fraction", cal_fraction, "leading share of the validation split");

    CommonFlags atk_flags;
    std::string atk_data, atk_model, atk_costs, atk_split = "test";
    long atk_limit = 0;
    auto* atk = app.add_subcommand("attack", "run a PGD attack batch");
    add_common(atk, atk_flags, "attacks.jsonl");
    atk->add_option("--data", atk_data, "dataset file")->required();
    atk->add_option("--model", atk_model, "model file")->required();
    atk->add_option("--costs", atk_costs, "cost matrix or two-tier spec (JSON)");
    atk->add_option("--split", atk_split, "train / val / test")
        ->check(CLI::IsMember({"train", "val", "test"}));
    atk->add_option("--limit", atk_limit, "attack only the first N inputs");

    CommonFlags grid_flags;
    std::string grid_data, grid_defender, grid_bb;
    auto* grid = app.add_subcommand("grid", "full defender x attacker evaluation grid");
    add_common(grid, grid_flags, "report");
    grid->add_option("--data", grid_data, "dataset file (else generated from config)");
    grid->add_option("--defender", grid_defender, "defender model file (else trained)");
    grid->add_option("--black-box", grid_bb, "second model for the transfer section");

    CommonFlags sweep_flags;
    std::string sweep_data, sweep_defender, sweep_steps = "1,2,5,10,20,50";
    auto* sweep = app.add_subcommand("sweep", "attack-strength curves over step counts");
    add_common(sweep, sweep_flags, "report");
    sweep->add_option("--data", sweep_data, "dataset file (else generated from config)");
    sweep->add_option("--defender", sweep_defender, "defender model file (else trained)");
    sweep->add_option("--steps", sweep_steps, "comma-separated step counts");

    CommonFlags game_flags;
    std::string game_payoff;
    auto* game = app.add_subcommand("game", "analyze a payoff matrix");
    add_common(game, game_flags, "equilibrium.json");
    game->add_option("--payoff", game_payoff, "payoff CSV")->required();

    std::string report_dir;
    auto* report = app.add_subcommand("report", "regenerate summary.md from a report directory");
    report->add_option("--dir", report_dir, "report directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return run_gen_data(gen_flags);
        if (tr->parsed()) return run_train(train_flags, train_data);
        if (cal->parsed())
            return run_calibrate(cal_flags, cal_data, cal_model, cal_bins, cal_fraction);
        if (atk->parsed())
            return run_attack_cmd(atk_flags, atk_data, atk_model, atk_costs, atk_split, atk_limit);
        if (grid->parsed()) return run_grid_cmd(grid_flags, grid_data, grid_defender, grid_bb);
        if (sweep->parsed()) return run_sweep_cmd(sweep_flags, sweep_data, sweep_defender, sweep_steps);
        if (game->parsed()) return run_game_cmd(game_flags, game_payoff);
        if (report->parsed()) {
            rewrite_summary_from_dir(report_dir);
            std::cout << "rewrote " << (fs::path(report_dir) / "summary.md").string() << "\n";
            return 0;
        }
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
