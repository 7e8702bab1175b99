#include "costsense/game.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "costsense/io.hpp"

namespace costsense {

namespace {

void check_unique(const std::vector<std::string>& labels, const char* side) {
    std::set<std::string> seen;
    for (const auto& l : labels) {
        if (l.empty()) throw std::invalid_argument(std::string("empty ") + side + " label");
        if (!seen.insert(l).second)
            throw std::invalid_argument(std::string("duplicate ") + side + " label: " + l);
    }
}

Eigen::Index argmin_idx(const Eigen::VectorXd& v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v(i) < v(best)) best = i;
    return best;
}

Eigen::Index argmax_idx(const Eigen::VectorXd& v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v(i) > v(best)) best = i;
    return best;
}

/// Mixture over active_cols of M that equalizes the rows in active_rows and
/// sums to one, embedded into a full-length vector. Returns nullopt when the
/// system has no acceptable solution (non-finite or significantly negative
/// weights). Solved in the least-squares sense so mismatched support sizes
/// still get a shot; the caller certifies the result before adopting it.
std::optional<Eigen::VectorXd> equalizing_mixture(const Eigen::MatrixXd& M,
                                                  const std::vector<Eigen::Index>& active_rows,
                                                  const std::vector<Eigen::Index>& active_cols) {
    const std::size_t m = active_rows.size();
    const std::size_t n = active_cols.size();
    if (m == 0 || n == 0) return std::nullopt;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + 1, n + 1);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(m + 1);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) A(i, j) = M(active_rows[i], active_cols[j]);
        A(i, n) = -1.0;  // common value unknown
    }
    for (std::size_t j = 0; j < n; ++j) A(m, j) = 1.0;
    b(m) = 1.0;
    Eigen::VectorXd sol = A.colPivHouseholderQr().solve(b);
    if (!sol.allFinite()) return std::nullopt;
    Eigen::VectorXd y = Eigen::VectorXd::Zero(M.cols());
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double w = sol(j);
        if (w < -1e-9) return std::nullopt;
        w = std::max(w, 0.0);
        y(active_cols[j]) = w;
        total += w;
    }
    if (total <= 0.0) return std::nullopt;
    y /= total;
    return y;
}

std::vector<Eigen::Index> support_above(const Eigen::VectorXd& v, double threshold) {
    std::vector<Eigen::Index> s;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (v(i) > threshold) s.push_back(i);
    return s;
}

}  // namespace

void PayoffMatrix::validate() const {
    if (values.rows() < 1 || values.cols() < 1)
        throw std::invalid_argument("payoff matrix must be non-empty");
    if (static_cast<Eigen::Index>(row_labels.size()) != values.rows() ||
        static_cast<Eigen::Index>(col_labels.size()) != values.cols())
        throw std::invalid_argument("payoff label count does not match matrix shape");
    check_unique(row_labels, "row");
    check_unique(col_labels, "column");
    if (!values.allFinite()) throw std::invalid_argument("payoff matrix has non-finite entries");
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> pure_nash(const PayoffMatrix& pm) {
    pm.validate();
    const Eigen::MatrixXd& V = pm.values;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;
    for (Eigen::Index r = 0; r < V.rows(); ++r) {
        for (Eigen::Index c = 0; c < V.cols(); ++c) {
            const double v = V(r, c);
            // Row player (minimizer) cannot improve by deviating within the
            // column; column player (maximizer) cannot improve within the row.
            bool col_min = true, row_max = true;
            for (Eigen::Index r2 = 0; r2 < V.rows() && col_min; ++r2)
                if (V(r2, c) < v) col_min = false;
            for (Eigen::Index c2 = 0; c2 < V.cols() && row_max; ++c2)
                if (V(r, c2) > v) row_max = false;
            if (col_min && row_max) cells.emplace_back(r, c);
        }
    }
    return cells;
}

std::optional<Eigen::Index> dominant_strategy(const PayoffMatrix& pm, Player player,
                                              DominanceMode mode) {
    pm.validate();
    const Eigen::MatrixXd& V = pm.values;
    // The column player wants high payoff; work on the transpose with flipped
    // sign so both cases reduce to "row player prefers low".
    Eigen::MatrixXd M;
    if (player == Player::Row)
        M = V;
    else
        M = -V.transpose();
    for (Eigen::Index cand = 0; cand < M.rows(); ++cand) {
        bool dominant = true;
        for (Eigen::Index other = 0; other < M.rows() && dominant; ++other) {
            if (other == cand) continue;
            bool all_le = true, any_lt = false;
            for (Eigen::Index j = 0; j < M.cols(); ++j) {
                if (M(cand, j) > M(other, j)) all_le = false;
                if (M(cand, j) < M(other, j)) any_lt = true;
            }
            if (mode == DominanceMode::Strict) {
                bool all_lt = true;
                for (Eigen::Index j = 0; j < M.cols(); ++j)
                    if (!(M(cand, j) < M(other, j))) all_lt = false;
                dominant = all_lt;
            } else {
                dominant = all_le && any_lt;
            }
        }
        if (dominant) return cand;
    }
    return std::nullopt;
}

namespace {

// Does strategy a dominate strategy b for the row player of M, over the given
// active columns? (Row player minimizes.)
bool row_dominates(const Eigen::MatrixXd& M, Eigen::Index a, Eigen::Index b,
                   const std::vector<Eigen::Index>& cols, DominanceMode mode) {
    bool any_strict = false;
    for (Eigen::Index c : cols) {
        if (M(a, c) > M(b, c)) return false;
        if (M(a, c) < M(b, c)) any_strict = true;
    }
    if (mode == DominanceMode::Strict) {
        for (Eigen::Index c : cols)
            if (!(M(a, c) < M(b, c))) return false;
        return true;
    }
    return any_strict;
}

}  // namespace

EliminationResult iterated_elimination(const PayoffMatrix& pm, DominanceMode mode) {
    pm.validate();
    const Eigen::MatrixXd& V = pm.values;
    std::vector<Eigen::Index> rows(pm.rows()), cols(pm.cols());
    for (Eigen::Index i = 0; i < pm.rows(); ++i) rows[i] = i;
    for (Eigen::Index j = 0; j < pm.cols(); ++j) cols[j] = j;
    std::vector<EliminationStep> removed;

    // Column player view: dominance inequalities flipped via negation.
    const Eigen::MatrixXd Vt = (-V.transpose()).eval();

    // Returns indices (into `own`) of strategies to remove this half-round.
    auto find_dominated = [&](const Eigen::MatrixXd& M, const std::vector<Eigen::Index>& own,
                              const std::vector<Eigen::Index>& opp) {
        std::vector<std::size_t> doomed;
        for (std::size_t i = 0; i < own.size(); ++i) {
            for (std::size_t j = 0; j < own.size(); ++j) {
                if (i == j) continue;
                if (row_dominates(M, own[j], own[i], opp, mode)) {
                    doomed.push_back(i);
                    break;
                }
            }
            // Weak elimination is order-dependent; take one at a time.
            if (mode == DominanceMode::Weak && !doomed.empty()) break;
        }
        return doomed;
    };

    bool changed = true;
    while (changed && (rows.size() > 1 || cols.size() > 1)) {
        changed = false;
        if (cols.size() > 1) {
            auto doomed = find_dominated(Vt, cols, rows);
            for (auto it = doomed.rbegin(); it != doomed.rend(); ++it) {
                removed.push_back({Player::Column, pm.col_labels[cols[*it]]});
                cols.erase(cols.begin() + static_cast<std::ptrdiff_t>(*it));
                changed = true;
            }
            // keep the removal log in ascending scan order
            if (doomed.size() > 1)
                std::reverse(removed.end() - static_cast<std::ptrdiff_t>(doomed.size()),
                             removed.end());
        }
        if (rows.size() > 1) {
            auto doomed = find_dominated(V, rows, cols);
            for (auto it = doomed.rbegin(); it != doomed.rend(); ++it) {
                removed.push_back({Player::Row, pm.row_labels[rows[*it]]});
                rows.erase(rows.begin() + static_cast<std::ptrdiff_t>(*it));
                changed = true;
            }
            if (doomed.size() > 1)
                std::reverse(removed.end() - static_cast<std::ptrdiff_t>(doomed.size()),
                             removed.end());
        }
    }

    EliminationResult result;
    result.reduced.values.resize(static_cast<Eigen::Index>(rows.size()),
                                 static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        result.reduced.row_labels.push_back(pm.row_labels[rows[i]]);
        for (std::size_t j = 0; j < cols.size(); ++j)
            result.reduced.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                V(rows[i], cols[j]);
    }
    for (std::size_t j = 0; j < cols.size(); ++j)
        result.reduced.col_labels.push_back(pm.col_labels[cols[j]]);
    result.removed = std::move(removed);
    return result;
}

Equilibrium solve_zero_sum(const PayoffMatrix& pm, double tolerance, long max_iterations) {
    pm.validate();
    if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
    const Eigen::MatrixXd& V = pm.values;
    const Eigen::Index R = V.rows(), C = V.cols();

    Eigen::VectorXd row_counts = Eigen::VectorXd::Zero(R);
    Eigen::VectorXd col_counts = Eigen::VectorXd::Zero(C);
    Eigen::VectorXd row_score = Eigen::VectorXd::Zero(R);  // payoff vs column history
    Eigen::VectorXd col_score = Eigen::VectorXd::Zero(C);  // payoff vs row history

    Eigen::VectorXd best_x, best_y;
    double best_up = std::numeric_limits<double>::infinity();
    double best_lo = -std::numeric_limits<double>::infinity();
    auto consider_x = [&](const Eigen::VectorXd& x) {
        double up = (V.transpose() * x).maxCoeff();
        if (up < best_up) {
            best_up = up;
            best_x = x;
        }
    };
    auto consider_y = [&](const Eigen::VectorXd& y) {
        double lo = (V * y).minCoeff();
        if (lo > best_lo) {
            best_lo = lo;
            best_y = y;
        }
    };

    static constexpr double kThresholds[] = {0.25, 0.05, 1e-2, 1e-3, 1e-4};
    const double spread = std::max(1e-12, V.maxCoeff() - V.minCoeff());
    const long check_every = 16;
    long t = 0;
    while (t < max_iterations) {
        const Eigen::Index r = argmin_idx(row_score);
        const Eigen::Index c = argmax_idx(col_score);
        row_counts(r) += 1.0;
        col_counts(c) += 1.0;
        row_score += V.col(c);
        col_score += V.row(r).transpose();
        ++t;
        if (t % check_every != 0 && t != max_iterations) continue;

        const Eigen::VectorXd x = row_counts / static_cast<double>(t);
        const Eigen::VectorXd y = col_counts / static_cast<double>(t);
        consider_x(x);
        consider_y(y);
        if (best_up - best_lo <= tolerance) break;

        if (t % 256 == 0 || t == check_every || t == 4 * check_every || t == max_iterations) {
            // Support refinement: guess the equilibrium supports from the
            // running averages at several cutoffs and solve the equalizing
            // system; keep refinements only when their certified bound wins.
            for (double th : kThresholds) {
                const auto sr = support_above(x, th);
                const auto sc = support_above(y, th);
                if (auto yp = equalizing_mixture(V, sr, sc)) consider_y(*yp);
                if (auto xp = equalizing_mixture(V.transpose(), sc, sr)) consider_x(*xp);
            }
            // Mass cutoffs miss supports whose equilibrium weight is smaller
            // than the leftover mass of early suboptimal plays. Response gaps
            // against the averages do not: active strategies are the ones
            // within epsilon of the best response value.
            const Eigen::VectorXd u = V * y;
            const Eigen::VectorXd w = V.transpose() * x;
            const double u_min = u.minCoeff(), w_max = w.maxCoeff();
            for (double rel : {0.2, 5e-2, 1e-2, 1e-3}) {
                const double delta = rel * spread;
                std::vector<Eigen::Index> sr, sc;
                for (Eigen::Index i = 0; i < R; ++i)
                    if (u(i) - u_min <= delta) sr.push_back(i);
                for (Eigen::Index j = 0; j < C; ++j)
                    if (w_max - w(j) <= delta) sc.push_back(j);
                if (auto yp = equalizing_mixture(V, sr, sc)) consider_y(*yp);
                if (auto xp = equalizing_mixture(V.transpose(), sc, sr)) consider_x(*xp);
            }
            if (best_up - best_lo <= tolerance) break;
        }
    }

    auto assemble = [&](Eigen::VectorXd x, Eigen::VectorXd y, double up, double lo,
                        EquilibriumKind kind) {
        Equilibrium eq;
        eq.kind = kind;
        eq.row_strategy = std::move(x);
        eq.col_strategy = std::move(y);
        eq.lower_bound = lo;
        eq.upper_bound = up;
        eq.value = 0.5 * (up + lo);
        eq.exploitability = up - lo;
        return eq;
    };

    if (best_up - best_lo > tolerance) {
        std::ostringstream msg;
        msg << "zero-sum solver: exploitability " << (best_up - best_lo) << " > tolerance "
            << tolerance << " after " << t << " iterations";
        throw SolverNonConvergence(msg.str(),
                                   assemble(best_x, best_y, best_up, best_lo,
                                            EquilibriumKind::Mixed));
    }

    // Snap essentially-pure strategies to exact unit vectors when doing so
    // keeps the certificate.
    auto near_unit = [](const Eigen::VectorXd& v) -> std::optional<Eigen::Index> {
        Eigen::Index i = argmax_idx(v);
        if (v(i) >= 1.0 - 1e-9) return i;
        return std::nullopt;
    };
    const auto xi = near_unit(best_x);
    const auto yi = near_unit(best_y);
    if (xi && yi) {
        Eigen::VectorXd xs = Eigen::VectorXd::Zero(R), ys = Eigen::VectorXd::Zero(C);
        xs(*xi) = 1.0;
        ys(*yi) = 1.0;
        const double up = V.row(*xi).maxCoeff();
        const double lo = V.col(*yi).minCoeff();
        if (up - lo <= tolerance)
            return assemble(std::move(xs), std::move(ys), up, lo, EquilibriumKind::Pure);
    }
    return assemble(std::move(best_x), std::move(best_y), best_up, best_lo,
                    EquilibriumKind::Mixed);
}

const std::vector<std::string>& defender_strategy_labels() {
    static const std::vector<std::string> labels = {"MP !C", "MP C", "MC !C", "MC C"};
    return labels;
}

const std::vector<std::string>& attacker_strategy_labels() {
    static const std::vector<std::string> labels = {"RT !C", "RT C",  "CST !C",
                                                    "CST C", "MM !C", "MM C"};
    return labels;
}

namespace {

std::vector<std::string> ordered_labels(const std::set<std::string>& present,
                                        const std::vector<std::string>& canonical) {
    std::vector<std::string> out;
    for (const auto& l : canonical)
        if (present.count(l)) out.push_back(l);
    for (const auto& l : present)
        if (std::find(canonical.begin(), canonical.end(), l) == canonical.end())
            out.push_back(l);  // std::set iteration keeps these sorted
    return out;
}

}  // namespace

PayoffMatrix build_payoff(const std::map<std::pair<std::string, std::string>, double>& cells) {
    if (cells.empty()) throw std::invalid_argument("build_payoff: no cells");
    std::set<std::string> row_set, col_set;
    for (const auto& [key, _] : cells) {
        row_set.insert(key.first);
        col_set.insert(key.second);
    }
    PayoffMatrix pm;
    pm.row_labels = ordered_labels(row_set, defender_strategy_labels());
    pm.col_labels = ordered_labels(col_set, attacker_strategy_labels());
    pm.values.resize(static_cast<Eigen::Index>(pm.row_labels.size()),
                     static_cast<Eigen::Index>(pm.col_labels.size()));
    for (std::size_t i = 0; i < pm.row_labels.size(); ++i) {
        for (std::size_t j = 0; j < pm.col_labels.size(); ++j) {
            auto it = cells.find({pm.row_labels[i], pm.col_labels[j]});
            if (it == cells.end())
                throw std::invalid_argument("build_payoff: missing cell (" + pm.row_labels[i] +
                                            ", " + pm.col_labels[j] + ")");
            pm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = it->second;
        }
    }
    pm.validate();
    return pm;
}

void write_payoff_csv(const PayoffMatrix& pm, const std::string& path) {
    pm.validate();
    for (const auto& l : pm.row_labels)
        if (l.find(',') != std::string::npos || l.find('\n') != std::string::npos)
            throw std::invalid_argument("row label not CSV-safe: " + l);
    for (const auto& l : pm.col_labels)
        if (l.find(',') != std::string::npos || l.find('\n') != std::string::npos)
            throw std::invalid_argument("column label not CSV-safe: " + l);
    std::ostringstream out;
    out << "strategy";
    for (const auto& l : pm.col_labels) out << ',' << l;
    out << '\n';
    for (Eigen::Index r = 0; r < pm.rows(); ++r) {
        out << pm.row_labels[r];
        for (Eigen::Index c = 0; c < pm.cols(); ++c) out << ',' << format_double(pm.values(r, c));
        out << '\n';
    }
    write_text_file(path, out.str());
}

PayoffMatrix read_payoff_csv(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("payoff csv is empty: " + path);
    auto header = split_csv_line(line);
    if (header.size() < 2) throw std::invalid_argument("payoff csv needs at least one column");
    PayoffMatrix pm;
    pm.col_labels.assign(header.begin() + 1, header.end());
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw std::invalid_argument("payoff csv row has " + std::to_string(fields.size()) +
                                        " fields, expected " + std::to_string(header.size()));
        pm.row_labels.push_back(fields[0]);
        std::vector<double> vals;
        for (std::size_t i = 1; i < fields.size(); ++i)
            vals.push_back(parse_double_field(fields[i], "payoff csv"));
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw std::invalid_argument("payoff csv has no data rows: " + path);
    pm.values.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(pm.col_labels.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            pm.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    pm.validate();
    return pm;
}

nlohmann::json equilibrium_to_json(const Equilibrium& eq, const PayoffMatrix& pm) {
    if (eq.row_strategy.size() != pm.rows() || eq.col_strategy.size() != pm.cols())
        throw std::invalid_argument("equilibrium does not match payoff matrix shape");
    nlohmann::json row_mix, col_mix;
    for (Eigen::Index r = 0; r < pm.rows(); ++r) row_mix[pm.row_labels[r]] = eq.row_strategy(r);
    for (Eigen::Index c = 0; c < pm.cols(); ++c) col_mix[pm.col_labels[c]] = eq.col_strategy(c);
    return nlohmann::json{{"kind", eq.kind == EquilibriumKind::Pure ? "pure" : "mixed"},
                          {"value", eq.value},
                          {"lower_bound", eq.lower_bound},
                          {"upper_bound", eq.upper_bound},
                          {"exploitability", eq.exploitability},
                          {"row_strategy", row_mix},
                          {"col_strategy", col_mix}};
}

}  // namespace costsense
