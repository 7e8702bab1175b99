#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "costsense/game.hpp"
#include "costsense/io.hpp"

using namespace costsense;

namespace {

// Published defender/attacker average-cost grid used as a solver fixture:
// a 4x6 game with a known saddle point at (MC C, MM C) = 3.39.
PayoffMatrix grid_fixture() {
    PayoffMatrix pm;
    pm.row_labels = defender_strategy_labels();
    pm.col_labels = attacker_strategy_labels();
    pm.values.resize(4, 6);
    pm.values << 8.44, 8.43, 8.45, 8.45, 13.94, 13.97,  //
        8.44, 8.43, 8.45, 8.45, 13.94, 13.97,           //
        2.94, 2.95, 2.98, 3.00, 3.50, 4.16,             //
        3.21, 3.22, 3.25, 3.25, 3.38, 3.39;
    pm.validate();
    return pm;
}

PayoffMatrix make_pm(const Eigen::MatrixXd& v) {
    PayoffMatrix pm;
    pm.values = v;
    for (Eigen::Index r = 0; r < v.rows(); ++r) pm.row_labels.push_back("r" + std::to_string(r));
    for (Eigen::Index c = 0; c < v.cols(); ++c) pm.col_labels.push_back("c" + std::to_string(c));
    return pm;
}

}  // namespace

TEST_CASE("grid fixture has the unique documented saddle point") {
    PayoffMatrix pm = grid_fixture();
    auto cells = pure_nash(pm);
    REQUIRE(cells.size() == 1);
    CHECK(cells[0].first == 3);   // MC C
    CHECK(cells[0].second == 5);  // MM C
    CHECK(pm.values(3, 5) == doctest::Approx(3.39).epsilon(1e-12));
}

TEST_CASE("grid fixture dominance matches the published analysis") {
    PayoffMatrix pm = grid_fixture();
    auto col_strict = dominant_strategy(pm, Player::Column, DominanceMode::Strict);
    REQUIRE(col_strict.has_value());
    CHECK(*col_strict == 5);  // MM C
    auto col_weak = dominant_strategy(pm, Player::Column, DominanceMode::Weak);
    REQUIRE(col_weak.has_value());
    CHECK(*col_weak == 5);
    CHECK_FALSE(dominant_strategy(pm, Player::Row, DominanceMode::Strict).has_value());
    CHECK_FALSE(dominant_strategy(pm, Player::Row, DominanceMode::Weak).has_value());
}

TEST_CASE("grid fixture solves to the saddle value") {
    PayoffMatrix pm = grid_fixture();
    Equilibrium eq = solve_zero_sum(pm, 1e-9);
    CHECK(eq.value == doctest::Approx(3.39).epsilon(1e-9));
    CHECK(eq.exploitability <= 1e-9);
    CHECK(eq.kind == EquilibriumKind::Pure);
    CHECK(eq.row_strategy(3) == doctest::Approx(1.0));
    CHECK(eq.col_strategy(5) == doctest::Approx(1.0));
}

TEST_CASE("strict elimination reduces the grid fixture to its saddle") {
    PayoffMatrix pm = grid_fixture();
    EliminationResult res = iterated_elimination(pm, DominanceMode::Strict);
    REQUIRE(res.reduced.rows() == 1);
    REQUIRE(res.reduced.cols() == 1);
    CHECK(res.reduced.row_labels[0] == "MC C");
    CHECK(res.reduced.col_labels[0] == "MM C");
    CHECK(res.reduced.values(0, 0) == doctest::Approx(3.39).epsilon(1e-12));
    // Column half-round runs first: MM C strictly dominates everything else,
    // so five columns fall at once, then three rows.
    REQUIRE(res.removed.size() == 8);
    for (int i = 0; i < 5; ++i) CHECK(res.removed[i].player == Player::Column);
    for (int i = 5; i < 8; ++i) CHECK(res.removed[i].player == Player::Row);
    CHECK(res.removed[0].label == "RT !C");
    CHECK(res.removed[4].label == "MM !C");
    CHECK(res.removed[5].label == "MP !C");
    CHECK(res.removed[7].label == "MC !C");
}

TEST_CASE("a strictly dominated middle column is removed first") {
    // Only the middle column is strictly dominated at the start (c0 and c2
    // are incomparable for the maximizer).
    Eigen::MatrixXd v(3, 3);
    v << 1, 0, 2,  //
        3, 1, 2,   //
        2, 0, 3;
    EliminationResult res = iterated_elimination(make_pm(v), DominanceMode::Strict);
    REQUIRE_FALSE(res.removed.empty());
    CHECK(res.removed[0].player == Player::Column);
    CHECK(res.removed[0].label == "c1");
}

TEST_CASE("weak elimination removes one strategy at a time") {
    // Rows 0 and 1 are identical: weakly mutually dominating. Only one may go.
    Eigen::MatrixXd v(3, 2);
    v << 1, 2,  //
        1, 2,   //
        5, 6;
    EliminationResult res = iterated_elimination(make_pm(v), DominanceMode::Weak);
    std::set<std::string> remaining(res.reduced.row_labels.begin(), res.reduced.row_labels.end());
    CHECK(remaining.count("r0") + remaining.count("r1") >= 1);
    CHECK(remaining.count("r2") == 0);  // strictly worse for the minimizer
}

TEST_CASE("pure nash uses exact comparisons and row-major order") {
    Eigen::MatrixXd v(2, 2);
    v << 0, 0,  //
        0, 0;
    auto cells = pure_nash(make_pm(v));
    REQUIRE(cells.size() == 4);
    CHECK(cells[0] == std::make_pair<Eigen::Index, Eigen::Index>(0, 0));
    CHECK(cells[1] == std::make_pair<Eigen::Index, Eigen::Index>(0, 1));
    CHECK(cells[3] == std::make_pair<Eigen::Index, Eigen::Index>(1, 1));
}

TEST_CASE("matching pennies solves to a uniform mixture") {
    Eigen::MatrixXd v(2, 2);
    v << 1, -1,  //
        -1, 1;
    Equilibrium eq = solve_zero_sum(make_pm(v), 1e-7);
    CHECK(eq.value == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(eq.exploitability <= 1e-7);
    CHECK(eq.kind == EquilibriumKind::Mixed);
    CHECK(eq.row_strategy(0) == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(eq.col_strategy(0) == doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("solver certificate is self-consistent on random games") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(-5.0, 5.0);
    for (int trial = 0; trial < 20; ++trial) {
        int rows = 2 + static_cast<int>(rng() % 5);
        int cols = 2 + static_cast<int>(rng() % 5);
        Eigen::MatrixXd v(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) v(r, c) = unif(rng);
        PayoffMatrix pm = make_pm(v);
        Equilibrium eq = solve_zero_sum(pm, 1e-6);

        CHECK(eq.exploitability <= 1e-6);
        CHECK(eq.row_strategy.minCoeff() >= 0.0);
        CHECK(eq.col_strategy.minCoeff() >= 0.0);
        CHECK(eq.row_strategy.sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(eq.col_strategy.sum() == doctest::Approx(1.0).epsilon(1e-9));
        // The reported bounds must be exactly the best responses they claim.
        double lb = (v * eq.col_strategy).minCoeff();
        double ub = (v.transpose() * eq.row_strategy).maxCoeff();
        CHECK(eq.lower_bound == doctest::Approx(lb).epsilon(1e-9));
        CHECK(eq.upper_bound == doctest::Approx(ub).epsilon(1e-9));
        CHECK(eq.value == doctest::Approx(0.5 * (lb + ub)).epsilon(1e-9));
        CHECK(lb <= ub + 1e-12);

        // Strict elimination may never remove a pure Nash cell.
        auto cells = pure_nash(pm);
        if (!cells.empty()) {
            EliminationResult red = iterated_elimination(pm, DominanceMode::Strict);
            std::set<std::string> rl(red.reduced.row_labels.begin(),
                                     red.reduced.row_labels.end());
            std::set<std::string> cl(red.reduced.col_labels.begin(),
                                     red.reduced.col_labels.end());
            for (auto [r, c] : cells) {
                CHECK(rl.count(pm.row_labels[static_cast<std::size_t>(r)]) == 1);
                CHECK(cl.count(pm.col_labels[static_cast<std::size_t>(c)]) == 1);
            }
        }
    }
}

TEST_CASE("positive affine payoff changes leave the analysis alone") {
    std::mt19937_64 rng(47);
    std::uniform_real_distribution<double> unif(-5.0, 5.0);
    std::uniform_real_distribution<double> scale(0.1, 6.0);
    for (int trial = 0; trial < 30; ++trial) {
        int rows = 2 + static_cast<int>(rng() % 5);
        int cols = 2 + static_cast<int>(rng() % 5);
        Eigen::MatrixXd v(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) v(r, c) = unif(rng);
        const double a = scale(rng);
        const double b = unif(rng);
        PayoffMatrix pm = make_pm(v);
        PayoffMatrix shifted = make_pm((a * v.array() + b).matrix());

        CHECK(pure_nash(pm) == pure_nash(shifted));
        for (Player p : {Player::Row, Player::Column})
            CHECK(dominant_strategy(pm, p, DominanceMode::Strict) ==
                  dominant_strategy(shifted, p, DominanceMode::Strict));
    }
}

TEST_CASE("iteration starvation throws and carries the best iterate") {
    Eigen::MatrixXd v(2, 2);
    v << 1, -1,  //
        -1, 1;
    PayoffMatrix pm = make_pm(v);
    try {
        // One iteration leaves only singleton supports, which cannot certify
        // a mixed game no matter how well the support polish does.
        solve_zero_sum(pm, 1e-12, 1);
        FAIL("expected SolverNonConvergence");
    } catch (const SolverNonConvergence& e) {
        const Equilibrium& best = e.best_iterate;
        CHECK(best.lower_bound <= 0.0 + 1e-12);
        CHECK(best.upper_bound >= 0.0 - 1e-12);
        CHECK(best.row_strategy.size() == 2);
        CHECK(best.col_strategy.size() == 2);
    }
}

TEST_CASE("build_payoff orders canonical labels canonically") {
    std::map<std::pair<std::string, std::string>, double> cells;
    const auto& rows = defender_strategy_labels();
    const auto& cols = attacker_strategy_labels();
    double v = 0.0;
    for (const auto& r : rows)
        for (const auto& c : cols) cells[{r, c}] = v += 1.0;
    PayoffMatrix pm = build_payoff(cells);
    CHECK(pm.row_labels == rows);
    CHECK(pm.col_labels == cols);
    CHECK(pm.values(0, 0) == 1.0);
    CHECK(pm.values(3, 5) == 24.0);
}

TEST_CASE("build_payoff rejects incomplete grids") {
    std::map<std::pair<std::string, std::string>, double> cells;
    cells[{"a", "x"}] = 1.0;
    cells[{"a", "y"}] = 2.0;
    cells[{"b", "x"}] = 3.0;
    CHECK_THROWS_AS(build_payoff(cells), std::invalid_argument);
}

TEST_CASE("payoff csv round-trips exactly") {
    PayoffMatrix pm = grid_fixture();
    pm.values(2, 3) = 1.0 / 3.0;  // force a non-terminating decimal
    std::string path = "test_payoff_roundtrip.csv";
    write_payoff_csv(pm, path);
    PayoffMatrix back = read_payoff_csv(path);
    CHECK(back.row_labels == pm.row_labels);
    CHECK(back.col_labels == pm.col_labels);
    REQUIRE(back.values.rows() == pm.values.rows());
    REQUIRE(back.values.cols() == pm.values.cols());
    for (Eigen::Index r = 0; r < pm.values.rows(); ++r)
        for (Eigen::Index c = 0; c < pm.values.cols(); ++c)
            CHECK(back.values(r, c) == pm.values(r, c));  // bit-exact
    std::remove(path.c_str());
}

TEST_CASE("equilibrium json carries labeled strategies and bounds") {
    PayoffMatrix pm = grid_fixture();
    Equilibrium eq = solve_zero_sum(pm, 1e-8);
    nlohmann::json j = equilibrium_to_json(eq, pm);
    CHECK(j.at("kind") == "pure");
    CHECK(j.at("value").get<double>() == doctest::Approx(3.39));
    CHECK(j.at("row_strategy").at("MC C").get<double>() == doctest::Approx(1.0));
    CHECK(j.at("col_strategy").at("MM C").get<double>() == doctest::Approx(1.0));
    CHECK(j.at("exploitability").get<double>() <= 1e-8);
}

TEST_CASE("payoff validation rejects malformed matrices") {
    PayoffMatrix pm = grid_fixture();
    pm.row_labels.pop_back();
    CHECK_THROWS_AS(pm.validate(), std::invalid_argument);
    pm = grid_fixture();
    pm.values(0, 0) = std::nan("");
    CHECK_THROWS_AS(pm.validate(), std::invalid_argument);
}
