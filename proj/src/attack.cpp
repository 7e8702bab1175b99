#include "costsense/attack.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "costsense/io.hpp"
#include "costsense/parallel.hpp"

namespace costsense {

std::string to_string(AttackObjective obj) {
    switch (obj) {
        case AttackObjective::RandomTarget: return "random_target";
        case AttackObjective::CostSensitiveTarget: return "cost_sensitive_target";
        case AttackObjective::MaxiMin: return "maximin";
    }
    throw std::invalid_argument("unknown attack objective enum value");
}

AttackObjective attack_objective_from_string(const std::string& s) {
    if (s == "random_target") return AttackObjective::RandomTarget;
    if (s == "cost_sensitive_target") return AttackObjective::CostSensitiveTarget;
    if (s == "maximin") return AttackObjective::MaxiMin;
    throw std::invalid_argument("unknown attack objective: " + s);
}

DomainBox DomainBox::unit(Eigen::Index dim) { return uniform(dim, 0.0, 1.0); }

DomainBox DomainBox::uniform(Eigen::Index dim, double lo, double hi) {
    if (dim < 1) throw std::invalid_argument("domain box: dimension must be positive");
    DomainBox box;
    box.lo = Eigen::VectorXd::Constant(dim, lo);
    box.hi = Eigen::VectorXd::Constant(dim, hi);
    box.validate(dim);
    return box;
}

void DomainBox::validate(Eigen::Index dim) const {
    if (lo.size() != dim || hi.size() != dim)
        throw std::invalid_argument("domain box: bound dimension mismatch");
    if (!lo.allFinite() || !hi.allFinite())
        throw std::invalid_argument("domain box: non-finite bounds");
    for (Eigen::Index i = 0; i < dim; ++i)
        if (!(lo(i) < hi(i)))
            throw std::invalid_argument("domain box: lo must be < hi in every coordinate");
}

bool DomainBox::contains(const Eigen::VectorXd& x) const {
    if (x.size() != lo.size()) return false;
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
}

void AttackSpec::validate(Eigen::Index dim) const {
    if (epsilon < 0.0 || !std::isfinite(epsilon))
        throw std::invalid_argument("attack spec: epsilon must be >= 0");
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw std::invalid_argument("attack spec: alpha must be > 0");
    if (n_steps < 1) throw std::invalid_argument("attack spec: n_steps must be >= 1");
    if (!(temperature > 0.0)) throw std::invalid_argument("attack spec: temperature must be > 0");
    domain_box.validate(dim);
}

nlohmann::json attack_spec_to_json(const AttackSpec& spec) {
    nlohmann::json j{{"epsilon", spec.epsilon},
                     {"alpha", spec.alpha},
                     {"n_steps", spec.n_steps},
                     {"objective", to_string(spec.objective)},
                     {"random_init", spec.random_init},
                     {"temperature", spec.temperature},
                     {"seed", spec.seed}};
    auto uniform_bound = [](const Eigen::VectorXd& v) -> std::optional<double> {
        if (v.size() == 0) return std::nullopt;
        for (Eigen::Index i = 1; i < v.size(); ++i)
            if (v(i) != v(0)) return std::nullopt;
        return v(0);
    };
    if (auto lo = uniform_bound(spec.domain_box.lo))
        j["domain_lo"] = *lo;
    else
        j["domain_lo"] = std::vector<double>(spec.domain_box.lo.data(),
                                             spec.domain_box.lo.data() + spec.domain_box.lo.size());
    if (auto hi = uniform_bound(spec.domain_box.hi))
        j["domain_hi"] = *hi;
    else
        j["domain_hi"] = std::vector<double>(spec.domain_box.hi.data(),
                                             spec.domain_box.hi.data() + spec.domain_box.hi.size());
    return j;
}

AttackSpec attack_spec_from_json(const nlohmann::json& j, Eigen::Index dim) {
    AttackSpec spec;
    spec.epsilon = j.at("epsilon").get<double>();
    spec.alpha = j.contains("alpha") ? j["alpha"].get<double>() : spec.epsilon / 10.0;
    spec.n_steps = j.value("n_steps", 10);
    spec.objective = attack_objective_from_string(j.at("objective").get<std::string>());
    spec.random_init = j.value("random_init", true);
    spec.temperature = j.value("temperature", 1.0);
    spec.seed = j.value("seed", static_cast<std::uint64_t>(0));
    auto bound = [&](const char* key, double fallback) -> Eigen::VectorXd {
        if (!j.contains(key)) return Eigen::VectorXd::Constant(dim, fallback);
        if (j[key].is_number()) return Eigen::VectorXd::Constant(dim, j[key].get<double>());
        const auto v = j[key].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(v.size()) != dim)
            throw std::invalid_argument(std::string("attack spec: ") + key +
                                        " length does not match input dimension");
        return Eigen::Map<const Eigen::VectorXd>(v.data(), dim);
    };
    spec.domain_box.lo = bound("domain_lo", 0.0);
    spec.domain_box.hi = bound("domain_hi", 1.0);
    spec.validate(dim);
    return spec;
}

int select_cost_sensitive_target(int true_label, const CostMatrix& cm) {
    if (true_label < 0 || true_label >= cm.k())
        throw std::invalid_argument("select_cost_sensitive_target: label out of range");
    // The diagonal is zero and off-diagonals positive, so the true class
    // never wins.
    int best_a = 0;
    double best = -1.0;
    for (Eigen::Index a = 0; a < cm.k(); ++a) {
        const double c = cm(a, true_label);
        if (c > best) {
            best = c;
            best_a = static_cast<int>(a);
        }
    }
    return best_a;
}

Eigen::VectorXd project_linf(const Eigen::VectorXd& candidate, const Eigen::VectorXd& origin,
                             double epsilon, const DomainBox& box) {
    if (candidate.size() != origin.size())
        throw std::invalid_argument("project_linf: dimension mismatch");
    const Eigen::VectorXd delta =
        (candidate - origin).cwiseMax(-epsilon).cwiseMin(epsilon);
    return (origin + delta).cwiseMax(box.lo).cwiseMin(box.hi);
}

LogitObjective make_targeted_ce_objective(int target, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    return [target, temperature](const Eigen::VectorXd& z, Eigen::VectorXd& grad) {
        if (target < 0 || target >= z.size())
            throw std::invalid_argument("targeted objective: target out of range");
        const Eigen::VectorXd p = softmax(z, temperature);
        // d/dz of log p(target) = (e_target - p) / T
        grad = -p / temperature;
        grad(target) += 1.0 / temperature;
        return z(target) / temperature - logsumexp(z / temperature);
    };
}

LogitObjective make_maximin_objective(const CostMatrix& cm, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    return [cm, temperature](const Eigen::VectorXd& z, Eigen::VectorXd& grad) {
        if (z.size() != cm.k())
            throw std::invalid_argument("maximin objective: logit/cost dimension mismatch");
        const Eigen::VectorXd p = softmax(z, temperature);
        const Eigen::VectorXd costs = cm.entries() * p;
        Eigen::Index best = 0;
        for (Eigen::Index a = 1; a < costs.size(); ++a)
            if (costs(a) < costs(best)) best = a;
        const double value = costs(best);
        // d/dz_j of sum_B cm(best,B) p_B = p_j (cm(best,j) - value) / T
        grad = p.array() * (cm.entries().row(best).transpose().array() - value) / temperature;
        return value;
    };
}

double objective_targeted_ce(const NetworkModel& net, double temperature,
                             const Eigen::VectorXd& x, int target) {
    const Eigen::VectorXd z = forward_logits(net, x);
    Eigen::VectorXd scratch = Eigen::VectorXd::Zero(z.size());
    return make_targeted_ce_objective(target, temperature)(z, scratch);
}

double objective_maximin(const NetworkModel& net, double temperature, const CostMatrix& cm,
                         const Eigen::VectorXd& x) {
    const Eigen::VectorXd z = forward_logits(net, x);
    Eigen::VectorXd scratch = Eigen::VectorXd::Zero(z.size());
    return make_maximin_objective(cm, temperature)(z, scratch);
}

namespace {

struct PreparedAttack {
    LogitObjective objective;
    std::optional<int> target;
};

PreparedAttack prepare(const NetworkModel& net, const AttackSpec& spec,
                       const CostMatrix* cost_matrix, int true_label, Rng& rng) {
    const int k = static_cast<int>(net.num_classes());
    PreparedAttack prep;
    switch (spec.objective) {
        case AttackObjective::RandomTarget: {
            if (true_label < 0 || true_label >= k)
                throw std::invalid_argument("pgd_attack: true_label required for targeted modes");
            std::uniform_int_distribution<int> pick(0, k - 2);
            int t = pick(rng);
            if (t >= true_label) ++t;  // uniform over classes != true_label
            prep.target = t;
            prep.objective = make_targeted_ce_objective(t, spec.temperature);
            break;
        }
        case AttackObjective::CostSensitiveTarget: {
            if (cost_matrix == nullptr)
                throw std::invalid_argument("pgd_attack: cost matrix required for this objective");
            if (cost_matrix->k() != k)
                throw std::invalid_argument("pgd_attack: cost matrix does not match class count");
            const int t = select_cost_sensitive_target(true_label, *cost_matrix);
            prep.target = t;
            prep.objective = make_targeted_ce_objective(t, spec.temperature);
            break;
        }
        case AttackObjective::MaxiMin: {
            if (cost_matrix == nullptr)
                throw std::invalid_argument("pgd_attack: cost matrix required for this objective");
            if (cost_matrix->k() != k)
                throw std::invalid_argument("pgd_attack: cost matrix does not match class count");
            prep.objective = make_maximin_objective(*cost_matrix, spec.temperature);
            break;
        }
    }
    return prep;
}

AttackSnapshots run_pgd(const NetworkModel& net, const Eigen::VectorXd& x, const AttackSpec& spec,
                        const CostMatrix* cost_matrix, int true_label,
                        const std::vector<int>& snapshot_steps) {
    spec.validate(x.size());
    if (!spec.domain_box.contains(x))
        throw std::invalid_argument("pgd_attack: input lies outside the domain box");
    for (std::size_t i = 0; i < snapshot_steps.size(); ++i) {
        if (snapshot_steps[i] < 0 || snapshot_steps[i] > spec.n_steps)
            throw std::invalid_argument("pgd_attack: snapshot step out of range");
        if (i > 0 && snapshot_steps[i] <= snapshot_steps[i - 1])
            throw std::invalid_argument("pgd_attack: snapshot steps must be strictly increasing");
    }

    Rng rng(spec.seed);
    PreparedAttack prep = prepare(net, spec, cost_matrix, true_label, rng);

    Eigen::VectorXd cur = x;
    if (spec.random_init) {
        std::uniform_real_distribution<double> u(-spec.epsilon, spec.epsilon);
        Eigen::VectorXd delta(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) delta(i) = u(rng);
        cur = project_linf(x + delta, x, spec.epsilon, spec.domain_box);
    }

    AttackSnapshots out;
    std::vector<double>& trace = out.result.objective_trace;
    trace.reserve(static_cast<std::size_t>(spec.n_steps) + 1);
    std::size_t snap_next = 0;
    auto maybe_snapshot = [&](int step) {
        if (snap_next < snapshot_steps.size() && snapshot_steps[snap_next] == step) {
            out.steps.push_back(step);
            out.x_at.push_back(cur);
            ++snap_next;
        }
    };
    maybe_snapshot(0);

    for (int t = 0; t < spec.n_steps; ++t) {
        auto [value, grad] = input_gradient(net, cur, prep.objective);
        if (!std::isfinite(value) || !grad.allFinite()) {
            std::ostringstream msg;
            msg << "pgd_attack: non-finite objective or gradient at step " << t;
            throw AttackNumericalError(msg.str(), trace);
        }
        trace.push_back(value);
        cur = project_linf(cur + spec.alpha * grad.array().sign().matrix(), x, spec.epsilon,
                           spec.domain_box);
        maybe_snapshot(t + 1);
    }
    Eigen::VectorXd scratch = Eigen::VectorXd::Zero(net.num_classes());
    const double final_value = prep.objective(forward_logits(net, cur), scratch);
    if (!std::isfinite(final_value))
        throw AttackNumericalError("pgd_attack: non-finite final objective", trace);
    trace.push_back(final_value);

    out.result.x_adv = std::move(cur);
    out.result.target = prep.target;
    return out;
}

}  // namespace

AttackResult pgd_attack(const NetworkModel& net, const Eigen::VectorXd& x, const AttackSpec& spec,
                        const CostMatrix* cost_matrix, int true_label) {
    return run_pgd(net, x, spec, cost_matrix, true_label, {}).result;
}

AttackSnapshots pgd_attack_snapshots(const NetworkModel& net, const Eigen::VectorXd& x,
                                     const AttackSpec& spec, const CostMatrix* cost_matrix,
                                     int true_label, const std::vector<int>& snapshot_steps) {
    return run_pgd(net, x, spec, cost_matrix, true_label, snapshot_steps);
}

AttackBatchResult attack_batch(const NetworkModel& net, const LabeledData& data,
                               const AttackSpec& spec, const CostMatrix* cost_matrix, int jobs) {
    data.validate(net.num_classes());
    spec.validate(data.inputs.cols());
    AttackBatchResult out;
    out.x_adv.resize(data.inputs.rows(), data.inputs.cols());
    out.records.resize(static_cast<std::size_t>(data.size()));
    parallel_for(data.size(), jobs, [&](long i) {
        AttackSpec per_input = spec;
        per_input.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(i));
        const Eigen::VectorXd x = data.inputs.row(i).transpose();
        const AttackResult res = pgd_attack(net, x, per_input, cost_matrix, data.labels(i));
        out.x_adv.row(i) = res.x_adv.transpose();
        AttackBatchRecord& rec = out.records[static_cast<std::size_t>(i)];
        rec.input_id = static_cast<int>(i);
        rec.objective = spec.objective;
        rec.target = res.target;
        rec.final_objective = res.objective_trace.back();
        rec.linf_norm = (res.x_adv - x).lpNorm<Eigen::Infinity>();
    });
    return out;
}

void write_attack_jsonl(const AttackBatchResult& batch, const std::string& path) {
    std::ostringstream out;
    for (const auto& rec : batch.records) {
        nlohmann::json j{{"input_id", rec.input_id},
                         {"objective", to_string(rec.objective)},
                         {"final_objective", rec.final_objective},
                         {"linf_norm", rec.linf_norm}};
        j["target"] = rec.target ? nlohmann::json(*rec.target) : nlohmann::json(nullptr);
        out << j.dump() << '\n';
    }
    write_text_file(path, out.str());
}

}  // namespace costsense
