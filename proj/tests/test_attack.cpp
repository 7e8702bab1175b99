#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "costsense/attack.hpp"
#include "costsense/random.hpp"

using namespace costsense;

namespace {

NetworkModel linear2() {
    // Single identity layer: logits = (x0, -x1).
    NetworkModel net;
    DenseLayer l;
    l.weights.resize(2, 2);
    l.weights << 1, 0,  //
        0, -1;
    l.bias = Eigen::VectorXd::Zero(2);
    l.activation = Activation::Identity;
    net.layers = {l};
    return net;
}

CostMatrix tier_costs(int k, int m) {
    return build_supercategory_cost_matrix({k, m, 1.0, 2.0, 5.0, 200.0, std::nullopt});
}

CostMatrix asymmetric3() {
    Eigen::MatrixXd e(3, 3);
    e << 0, 1, 10,  //
        1, 0, 10,   //
        3, 3, 0;
    return CostMatrix(e);
}

LabeledData random_batch(int n, int dim, int k, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    LabeledData data;
    data.inputs.resize(n, dim);
    data.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int d = 0; d < dim; ++d) data.inputs(i, d) = unif(rng);
        data.labels(i) = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
    }
    return data;
}

}  // namespace

TEST_CASE("a single deterministic step moves by alpha along the gradient sign") {
    NetworkModel net = linear2();
    Eigen::VectorXd x(2);
    x << 0.5, 0.5;
    AttackSpec spec;
    spec.epsilon = 0.15;
    spec.alpha = 0.1;
    spec.n_steps = 1;
    spec.random_init = false;
    spec.objective = AttackObjective::RandomTarget;  // k = 2 forces target 0
    spec.domain_box = DomainBox::unit(2);
    AttackResult res = pgd_attack(net, x, spec, nullptr, 1);
    REQUIRE(res.target.has_value());
    CHECK(*res.target == 0);
    // log p(0) grows with x0 (raises logit 0) and with x1 (lowers logit 1).
    CHECK(res.x_adv(0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(res.x_adv(1) == doctest::Approx(0.6).epsilon(1e-12));
    REQUIRE(res.objective_trace.size() == 2);
    CHECK(res.objective_trace[1] > res.objective_trace[0]);
}

TEST_CASE("the targeted objective matches its closed form") {
    LogitObjective obj = make_targeted_ce_objective(0, 2.0);
    Eigen::VectorXd z(2);
    z << 1.0, 2.0;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(2);
    double value = obj(z, grad);
    double expected = 0.5 - std::log(std::exp(0.5) + std::exp(1.0));
    CHECK(value == doctest::Approx(expected).epsilon(1e-12));
    double p0 = std::exp(0.5) / (std::exp(0.5) + std::exp(1.0));
    CHECK(grad(0) == doctest::Approx((1.0 - p0) / 2.0).epsilon(1e-12));
    CHECK(grad(1) == doctest::Approx(-(1.0 - p0) / 2.0).epsilon(1e-12));
}

TEST_CASE("the best-response-cost objective matches a hand computation") {
    // Uniform posterior under the 3-class fixture: expected costs are
    // (11/3, 11/3, 2), so prediction 2 is the cheapest and is differentiated.
    LogitObjective obj = make_maximin_objective(asymmetric3(), 1.0);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(3);
    double value = obj(z, grad);
    CHECK(value == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(grad(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(grad(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(grad(2) == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("attacks never leave the budget ball or the domain box") {
    NetworkModel net = init_network({6, 12, 5}, 31);
    CostMatrix cm = tier_costs(5, 4);
    LabeledData data = random_batch(40, 6, 5, 99);
    for (AttackObjective objective : {AttackObjective::RandomTarget,
                                      AttackObjective::CostSensitiveTarget,
                                      AttackObjective::MaxiMin}) {
        AttackSpec spec;
        spec.objective = objective;
        spec.epsilon = 0.07;
        spec.alpha = 0.02;
        spec.n_steps = 12;
        spec.seed = 5;
        spec.domain_box = DomainBox::unit(6);
        AttackBatchResult out = attack_batch(net, data, spec, &cm, 1);
        for (long i = 0; i < data.size(); ++i) {
            Eigen::VectorXd delta = (out.x_adv.row(i) - data.inputs.row(i)).transpose();
            CHECK(delta.lpNorm<Eigen::Infinity>() <= spec.epsilon + 1e-12);
            CHECK(spec.domain_box.contains(out.x_adv.row(i).transpose()));
            CHECK(out.records[static_cast<std::size_t>(i)].linf_norm <= spec.epsilon + 1e-12);
        }
    }
}

TEST_CASE("attack results are reproducible and thread-count invariant") {
    NetworkModel net = init_network({4, 10, 4}, 8);
    CostMatrix cm = tier_costs(4, 3);
    LabeledData data = random_batch(24, 4, 4, 123);
    AttackSpec spec;
    spec.objective = AttackObjective::MaxiMin;
    spec.seed = 77;
    spec.domain_box = DomainBox::unit(4);

    AttackBatchResult serial = attack_batch(net, data, spec, &cm, 1);
    AttackBatchResult again = attack_batch(net, data, spec, &cm, 1);
    AttackBatchResult threaded = attack_batch(net, data, spec, &cm, 4);
    CHECK(serial.x_adv.cwiseEqual(again.x_adv).all());
    CHECK(serial.x_adv.cwiseEqual(threaded.x_adv).all());

    // Each row is exactly the standalone attack with the derived seed.
    AttackSpec one = spec;
    one.seed = derive_seed(spec.seed, 3);
    AttackResult res = pgd_attack(net, data.inputs.row(3).transpose(), one, &cm, data.labels(3));
    CHECK(res.x_adv.cwiseEqual(serial.x_adv.row(3).transpose()).all());
}

TEST_CASE("zero budget returns the input unchanged") {
    NetworkModel net = init_network({3, 6, 3}, 2);
    CostMatrix cm = tier_costs(3, 2);
    Eigen::VectorXd x(3);
    x << 0.2, 0.8, 0.5;
    for (bool random_init : {false, true}) {
        AttackSpec spec;
        spec.epsilon = 0.0;
        spec.alpha = 0.01;
        spec.random_init = random_init;
        spec.domain_box = DomainBox::unit(3);
        AttackResult res = pgd_attack(net, x, spec, &cm, 0);
        CHECK(res.x_adv.cwiseEqual(x).all());
    }
}

TEST_CASE("trace length is one more than the step count") {
    NetworkModel net = init_network({3, 6, 3}, 4);
    CostMatrix cm = tier_costs(3, 2);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 0.4);
    AttackSpec spec;
    spec.n_steps = 7;
    spec.domain_box = DomainBox::unit(3);
    AttackResult res = pgd_attack(net, x, spec, &cm, 0);
    CHECK(res.objective_trace.size() == 8);
    CHECK_FALSE(res.target.has_value());  // the untargeted objective
}

TEST_CASE("expensive-target selection points across the tier boundary") {
    CostMatrix cm = tier_costs(10, 8);
    // A sensitive input's costliest mistake is any insensitive prediction;
    // the tie resolves to the lowest index, like every argmax here.
    CHECK(select_cost_sensitive_target(9, cm) == 0);
    CHECK(select_cost_sensitive_target(8, cm) == 0);
    // An insensitive input's costliest mistake is a sensitive prediction.
    CHECK(select_cost_sensitive_target(3, cm) == 8);
    CHECK(select_cost_sensitive_target(0, cm) == 8);

    // A unique maximum.
    Eigen::MatrixXd e(3, 3);
    e << 0, 1, 10,  //
        1, 0, 10,   //
        3, 3, 0;
    CostMatrix asym(e);
    CHECK(select_cost_sensitive_target(0, asym) == 2);
    CHECK(select_cost_sensitive_target(2, asym) == 0);
}

TEST_CASE("random-target draws cover every wrong class") {
    NetworkModel net = init_network({3, 6, 4}, 12);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 0.5);
    AttackSpec spec;
    spec.objective = AttackObjective::RandomTarget;
    spec.n_steps = 1;
    spec.domain_box = DomainBox::unit(3);
    std::set<int> seen;
    for (std::uint64_t s = 0; s < 40; ++s) {
        spec.seed = s;
        AttackResult res = pgd_attack(net, x, spec, nullptr, 2);
        REQUIRE(res.target.has_value());
        CHECK(*res.target != 2);
        seen.insert(*res.target);
    }
    CHECK(seen.size() == 3);
}

TEST_CASE("snapshots expose intermediate iterates") {
    NetworkModel net = init_network({4, 8, 3}, 21);
    CostMatrix cm = tier_costs(3, 2);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(4, 0.3);
    AttackSpec spec;
    spec.n_steps = 5;
    spec.random_init = false;
    spec.domain_box = DomainBox::unit(4);
    AttackSnapshots snaps = pgd_attack_snapshots(net, x, spec, &cm, 0, {0, 2, 5});
    REQUIRE(snaps.steps == std::vector<int>{0, 2, 5});
    REQUIRE(snaps.x_at.size() == 3);
    CHECK(snaps.x_at[0].cwiseEqual(x).all());  // no random init: start is x itself
    CHECK(snaps.x_at[2].cwiseEqual(snaps.result.x_adv).all());

    // The snapshot run retraces the plain run exactly.
    AttackResult plain = pgd_attack(net, x, spec, &cm, 0);
    CHECK(plain.x_adv.cwiseEqual(snaps.result.x_adv).all());

    CHECK_THROWS_AS(pgd_attack_snapshots(net, x, spec, &cm, 0, {2, 2}), std::invalid_argument);
    CHECK_THROWS_AS(pgd_attack_snapshots(net, x, spec, &cm, 0, {6}), std::invalid_argument);
}

TEST_CASE("spec json round-trips with broadcast bounds and defaults") {
    AttackSpec spec;
    spec.epsilon = 0.05;
    spec.alpha = 0.01;
    spec.n_steps = 3;
    spec.objective = AttackObjective::CostSensitiveTarget;
    spec.random_init = false;
    spec.temperature = 1.5;
    spec.seed = 42;
    spec.domain_box = DomainBox::uniform(4, -1.0, 2.0);
    AttackSpec back = attack_spec_from_json(attack_spec_to_json(spec), 4);
    CHECK(back.epsilon == spec.epsilon);
    CHECK(back.alpha == spec.alpha);
    CHECK(back.n_steps == spec.n_steps);
    CHECK(back.objective == spec.objective);
    CHECK(back.random_init == spec.random_init);
    CHECK(back.temperature == spec.temperature);
    CHECK(back.seed == spec.seed);
    CHECK(back.domain_box.lo.cwiseEqual(spec.domain_box.lo).all());
    CHECK(back.domain_box.hi.cwiseEqual(spec.domain_box.hi).all());

    // Minimal config: alpha defaults to epsilon/10, box to the unit cube.
    nlohmann::json minimal{{"epsilon", 0.2}, {"objective", "maximin"}};
    AttackSpec filled = attack_spec_from_json(minimal, 3);
    CHECK(filled.alpha == doctest::Approx(0.02).epsilon(1e-15));
    CHECK(filled.n_steps == 10);
    CHECK(filled.domain_box.lo.cwiseEqual(Eigen::VectorXd::Zero(3)).all());
    CHECK(filled.domain_box.hi.cwiseEqual(Eigen::VectorXd::Ones(3)).all());

    nlohmann::json bad = minimal;
    bad["domain_lo"] = std::vector<double>{0.0, 0.0};  // wrong length for dim 3
    CHECK_THROWS_AS(attack_spec_from_json(bad, 3), std::invalid_argument);
}

TEST_CASE("spec validation rejects unusable parameters") {
    AttackSpec spec;
    spec.domain_box = DomainBox::unit(2);
    spec.epsilon = -0.1;
    CHECK_THROWS_AS(spec.validate(2), std::invalid_argument);
    spec = AttackSpec{};
    spec.domain_box = DomainBox::unit(2);
    spec.alpha = 0.0;
    CHECK_THROWS_AS(spec.validate(2), std::invalid_argument);
    spec = AttackSpec{};
    spec.domain_box = DomainBox::unit(2);
    spec.n_steps = 0;
    CHECK_THROWS_AS(spec.validate(2), std::invalid_argument);
    spec = AttackSpec{};
    spec.domain_box = DomainBox::unit(2);
    spec.temperature = 0.0;
    CHECK_THROWS_AS(spec.validate(2), std::invalid_argument);
}

TEST_CASE("projection clamps the offset before the box") {
    DomainBox box = DomainBox::uniform(2, 0.0, 1.0);
    Eigen::VectorXd origin(2), candidate(2);
    origin << 0.9, 0.1;
    candidate << 1.5, -0.5;
    Eigen::VectorXd proj = project_linf(candidate, origin, 0.2, box);
    CHECK(proj(0) == doctest::Approx(1.0).epsilon(1e-15));   // 1.1 then box-clamped
    CHECK(proj(1) == doctest::Approx(0.0).epsilon(1e-15));   // -0.1 then box-clamped
    proj = project_linf(candidate, origin, 10.0, box);
    CHECK(proj(0) == doctest::Approx(1.0).epsilon(1e-15));   // box alone binds
    CHECK(proj(1) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("projection is idempotent") {
    DomainBox box = DomainBox::uniform(6, 0.0, 1.0);
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> wide(-2.0, 3.0);
    std::uniform_real_distribution<double> in_box(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::VectorXd origin(6), candidate(6);
        for (int i = 0; i < 6; ++i) {
            origin(i) = in_box(rng);
            candidate(i) = wide(rng);
        }
        const double eps = 0.05 + 0.3 * in_box(rng);
        const Eigen::VectorXd once = project_linf(candidate, origin, eps, box);
        const Eigen::VectorXd twice = project_linf(once, origin, eps, box);
        CHECK(twice.cwiseEqual(once).all());  // bitwise: already-feasible points are fixed
    }
}

TEST_CASE("missing prerequisites are rejected") {
    NetworkModel net = init_network({3, 3}, 5);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 0.5);
    AttackSpec spec;
    spec.domain_box = DomainBox::unit(3);
    spec.objective = AttackObjective::MaxiMin;
    CHECK_THROWS_AS(pgd_attack(net, x, spec, nullptr, 0), std::invalid_argument);
    spec.objective = AttackObjective::RandomTarget;
    CHECK_THROWS_AS(pgd_attack(net, x, spec, nullptr, -1), std::invalid_argument);
    spec.objective = AttackObjective::CostSensitiveTarget;
    CostMatrix wrong = tier_costs(4, 3);  // class count mismatch
    CHECK_THROWS_AS(pgd_attack(net, x, spec, &wrong, 0), std::invalid_argument);

    Eigen::VectorXd outside = Eigen::VectorXd::Constant(3, 1.5);
    CostMatrix cm = tier_costs(3, 2);
    spec.objective = AttackObjective::MaxiMin;
    CHECK_THROWS_AS(pgd_attack(net, outside, spec, &cm, 0), std::invalid_argument);
}

TEST_CASE("numerical blowups surface as numerical errors") {
    NetworkModel net = init_network({2, 2}, 0);
    // Two positive 1.5e308 contributions per logit overflow to +inf for any
    // in-box input near 0.9, whatever the random init does.
    net.layers[0].weights.setConstant(1.5e308);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(2, 0.9);
    AttackSpec spec;
    spec.domain_box = DomainBox::unit(2);
    spec.objective = AttackObjective::RandomTarget;
    CHECK_THROWS_AS(pgd_attack(net, x, spec, nullptr, 0), NumericalError);
}

TEST_CASE("attack records serialize one json object per line") {
    NetworkModel net = init_network({3, 6, 3}, 44);
    CostMatrix cm = tier_costs(3, 2);
    LabeledData data = random_batch(5, 3, 3, 7);
    AttackSpec spec;
    spec.objective = AttackObjective::CostSensitiveTarget;
    spec.domain_box = DomainBox::unit(3);
    AttackBatchResult out = attack_batch(net, data, spec, &cm, 1);
    std::string path = "test_attack_records.jsonl";
    write_attack_jsonl(out, path);
    std::ifstream in(path);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        nlohmann::json j = nlohmann::json::parse(line);
        CHECK(j.at("input_id") == lines);
        CHECK(j.at("objective") == "cost_sensitive_target");
        CHECK(j.contains("final_objective"));
        CHECK(j.contains("linf_norm"));
        CHECK(j.at("target").is_number_integer());
        ++lines;
    }
    CHECK(lines == 5);
    std::remove(path.c_str());
}
