#include "drmpc/risk.hpp"

#include "drmpc/errors.hpp"
#include "drmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace drmpc {

using Eigen::Index;
using Eigen::VectorXd;

namespace {

constexpr double kMassTolerance = 1e-12;

void check_probs(const VectorXd& probs) {
    if (probs.size() == 0) throw DimensionError("distribution has no atoms");
    for (Index j = 0; j < probs.size(); ++j) {
        if (!std::isfinite(probs(j)) || probs(j) < 0.0) {
            throw DomainError("probability mass " + std::to_string(j) + " is negative or not finite");
        }
    }
    if (std::abs(probs.sum() - 1.0) > kMassTolerance) {
        throw DomainError("probability masses sum to " + std::to_string(probs.sum()));
    }
}

void check_pair(const VectorXd& values, const VectorXd& probs) {
    if (values.size() != probs.size()) {
        throw DimensionError("cost sample has " + std::to_string(values.size()) +
                             " entries, distribution has " + std::to_string(probs.size()));
    }
    if (values.size() == 0) throw DomainError("empty cost sample");
}

void check_tail(double tail) {
    if (!(tail >= 0.0 && tail <= 1.0)) throw DomainError("tail mass must lie in [0, 1]");
}

void check_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
}

// Indices ordered by value; stable so that ties keep index order.
std::vector<Index> order_by_value(const VectorXd& values, bool descending) {
    std::vector<Index> idx(static_cast<std::size_t>(values.size()));
    std::iota(idx.begin(), idx.end(), Index{0});
    if (descending) {
        std::stable_sort(idx.begin(), idx.end(),
                         [&](Index a, Index b) { return values(a) > values(b); });
    } else {
        std::stable_sort(idx.begin(), idx.end(),
                         [&](Index a, Index b) { return values(a) < values(b); });
    }
    return idx;
}

}  // namespace

DiscreteDistribution::DiscreteDistribution(std::vector<VectorXd> atoms, VectorXd probs)
    : atoms_(std::move(atoms)), probs_(std::move(probs)) {
    if (atoms_.empty()) throw DimensionError("distribution has no atoms");
    if (static_cast<Index>(atoms_.size()) != probs_.size()) {
        throw DimensionError("distribution has " + std::to_string(atoms_.size()) + " atoms but " +
                             std::to_string(probs_.size()) + " masses");
    }
    const Index d = atoms_.front().size();
    if (d == 0) throw DimensionError("atoms must have positive dimension");
    for (const auto& a : atoms_) {
        if (a.size() != d) throw DimensionError("atoms have inconsistent dimensions");
        if (!a.allFinite()) throw DomainError("atom is not finite");
    }
    check_probs(probs_);
}

DiscreteDistribution DiscreteDistribution::scalar(const std::vector<double>& atoms,
                                                  const std::vector<double>& probs) {
    std::vector<VectorXd> a;
    a.reserve(atoms.size());
    for (double v : atoms) a.push_back(VectorXd::Constant(1, v));
    VectorXd p = Eigen::Map<const VectorXd>(probs.data(), static_cast<Index>(probs.size()));
    return DiscreteDistribution(std::move(a), std::move(p));
}

DiscreteDistribution DiscreteDistribution::with_probs(VectorXd probs) const {
    return DiscreteDistribution(atoms_, std::move(probs));
}

double DiscreteDistribution::max_abs() const {
    double m = 0.0;
    for (const auto& a : atoms_) m = std::max(m, a.lpNorm<Eigen::Infinity>());
    return m;
}

double expectation(const VectorXd& values, const VectorXd& probs) {
    check_pair(values, probs);
    return values.dot(probs);
}

double expectation(const VectorXd& values, const DiscreteDistribution& d) {
    return expectation(values, d.probs());
}

double var_tail(const VectorXd& values, const VectorXd& probs, double tail) {
    check_pair(values, probs);
    if (!(tail > 0.0 && tail <= 1.0)) throw DomainError("VaR tail mass must lie in (0, 1]");
    const auto idx = order_by_value(values, false);
    const double level = 1.0 - tail;
    double cum = 0.0;
    for (std::size_t r = 0; r < idx.size(); ++r) {
        cum += probs(idx[r]);
        // equal values share one cumulative step
        if (r + 1 < idx.size() && values(idx[r + 1]) == values(idx[r])) continue;
        if (cum >= level - kMassTolerance) return values(idx[r]);
    }
    return values(idx.back());
}

double var_tail(const VectorXd& values, const DiscreteDistribution& d, double tail) {
    return var_tail(values, d.probs(), tail);
}

CvarValue cvar_tail_ex(const VectorXd& values, const VectorXd& probs, double tail) {
    check_pair(values, probs);
    check_tail(tail);
    if (tail == 0.0) return {values.maxCoeff(), true};
    const auto idx = order_by_value(values, true);
    double taken = 0.0;
    double acc = 0.0;
    for (Index j : idx) {
        const double room = tail - taken;
        if (room <= 0.0) break;
        const double w = std::min(probs(j), room);
        acc += w * values(j);
        taken += w;
    }
    // Masses sum to 1 only up to rounding; a tail of 1 may leave a sliver.
    if (taken < tail) acc += (tail - taken) * values(idx.back());
    return {acc / tail, false};
}

double cvar_tail(const VectorXd& values, const VectorXd& probs, double tail) {
    return cvar_tail_ex(values, probs, tail).value;
}

double cvar_tail(const VectorXd& values, const DiscreteDistribution& d, double tail) {
    return cvar_tail(values, d.probs(), tail);
}

double cvar_tail_lp(const VectorXd& values, const VectorXd& probs, double tail) {
    check_pair(values, probs);
    if (!(tail > 0.0 && tail <= 1.0)) throw DomainError("LP form needs tail mass in (0, 1]");
    const Index J = values.size();
    const Index n = J + 1;  // [z, s_1..s_J]
    QpProblem lp;
    lp.H.resize(n, n);
    lp.f = VectorXd::Zero(n);
    lp.f(0) = 1.0;
    lp.f.tail(J) = probs / tail;
    ConstraintBuilder rows(n);
    for (Index j = 0; j < J; ++j) {
        const Index r = rows.add_row(-values(j));
        rows.add_coefficient(r, 0, -1.0);
        rows.add_coefficient(r, 1 + j, -1.0);
        const Index r2 = rows.add_row(0.0);
        rows.add_coefficient(r2, 1 + j, -1.0);
    }
    lp.G = rows.matrix();
    lp.h = rows.rhs();
    lp.E.resize(0, n);
    lp.e.resize(0);
    const QpSolution sol = solve_qp(lp);
    if (sol.status != QpStatus::optimal) {
        throw SolverError("CVaR linear program failed", std::string(to_string(sol.status)));
    }
    // Crossover: the objective is piecewise linear in z with breakpoints at
    // the cost values, so an optimal vertex sits on the breakpoint nearest
    // the interior-point z. Evaluate there exactly.
    auto objective_at = [&](double z) {
        return z + probs.dot((values.array() - z).cwiseMax(0.0).matrix()) / tail;
    };
    const double z = sol.x(0);
    Index nearest = 0;
    for (Index j = 1; j < J; ++j) {
        if (std::abs(values(j) - z) < std::abs(values(nearest) - z)) nearest = j;
    }
    return std::min(objective_at(z), objective_at(values(nearest)));
}

double tvd_risk(const VectorXd& values, const VectorXd& probs, double alpha) {
    check_pair(values, probs);
    check_alpha(alpha);
    if (alpha == 1.0) return values.maxCoeff();
    if (alpha == 0.0) return expectation(values, probs);
    return alpha * values.maxCoeff() + (1.0 - alpha) * cvar_tail(values, probs, 1.0 - alpha);
}

double tvd_risk(const VectorXd& values, const DiscreteDistribution& d, double alpha) {
    return tvd_risk(values, d.probs(), alpha);
}

double brute_force_tvd_sup(const VectorXd& values, const VectorXd& probs, double alpha) {
    check_pair(values, probs);
    check_alpha(alpha);
    const Index J = values.size();
    const Index n = 2 * J;  // [q, a] with a >= |q - p|
    QpProblem lp;
    lp.H.resize(n, n);
    lp.f = VectorXd::Zero(n);
    lp.f.head(J) = -values;
    ConstraintBuilder rows(n);
    for (Index j = 0; j < J; ++j) {
        Index r = rows.add_row(0.0);
        rows.add_coefficient(r, j, -1.0);
        r = rows.add_row(probs(j));  // q - a <= p
        rows.add_coefficient(r, j, 1.0);
        rows.add_coefficient(r, J + j, -1.0);
        r = rows.add_row(-probs(j));  // -q - a <= -p
        rows.add_coefficient(r, j, -1.0);
        rows.add_coefficient(r, J + j, -1.0);
    }
    const Index budget = rows.add_row(2.0 * alpha);
    for (Index j = 0; j < J; ++j) rows.add_coefficient(budget, J + j, 1.0);
    lp.G = rows.matrix();
    lp.h = rows.rhs();
    lp.E.resize(1, n);
    for (Index j = 0; j < J; ++j) lp.E.insert(0, j) = 1.0;
    lp.e = VectorXd::Ones(1);
    // The LP is degenerate wherever q_j = p_j, so polishing rarely lands on a
    // vertex; the interior-point gap is driven down instead.
    QpSettings settings;
    settings.tolerance = 1e-13;
    settings.max_iterations = 300;
    const QpSolution sol = solve_qp(lp, settings);
    if (sol.status != QpStatus::optimal) {
        throw SolverError("TVD oracle linear program failed", std::string(to_string(sol.status)));
    }
    return -sol.objective;
}

VectorXd worst_case_probs(const VectorXd& values, const VectorXd& probs, double alpha) {
    check_pair(values, probs);
    check_alpha(alpha);
    Index target = 0;
    for (Index j = 1; j < values.size(); ++j) {
        if (values(j) > values(target)) target = j;
    }
    VectorXd q = probs;
    double budget = std::min(alpha, 1.0 - probs(target));
    for (Index j : order_by_value(values, false)) {
        if (budget <= 0.0) break;
        if (j == target) continue;
        const double take = std::min(q(j), budget);
        q(j) -= take;
        q(target) += take;
        budget -= take;
    }
    return q;
}

DiscreteDistribution worst_case_distribution(const VectorXd& values, const DiscreteDistribution& d,
                                             double alpha) {
    return d.with_probs(worst_case_probs(values, d.probs(), alpha));
}

double tvd_distance(const VectorXd& p, const VectorXd& q) {
    if (p.size() != q.size()) throw DimensionError("pmfs have different lengths");
    return 0.5 * (p - q).lpNorm<1>();
}

double tvd_distance(const DiscreteDistribution& p, const DiscreteDistribution& q) {
    return tvd_distance(p.probs(), q.probs());
}

DiscreteDistribution sample_in_tvd_ball(const DiscreteDistribution& p, double alpha,
                                        std::uint64_t seed,
                                        const std::optional<VectorXd>& adversarial_cost) {
    check_alpha(alpha);
    if (adversarial_cost) return worst_case_distribution(*adversarial_cost, p, alpha);
    if (alpha == 0.0 || p.size() == 1) return p;

    const Index J = static_cast<Index>(p.size());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    VectorXd v(J);
    for (Index j = 0; j < J; ++j) v(j) = normal(rng);
    v.array() -= v.mean();
    const double half_l1 = 0.5 * v.lpNorm<1>();
    const double radius = alpha * uniform(rng);
    if (half_l1 == 0.0 || radius == 0.0) return p;
    v *= radius / half_l1;

    // Clip decreases at the available mass, then shrink the increases so the
    // perturbation still sums to zero.
    const VectorXd& base = p.probs();
    double removed = 0.0;
    double added = 0.0;
    for (Index j = 0; j < J; ++j) {
        if (v(j) < 0.0) {
            v(j) = std::max(v(j), -base(j));
            removed -= v(j);
        } else {
            added += v(j);
        }
    }
    if (added > 0.0) {
        const double s = removed / added;
        for (Index j = 0; j < J; ++j) {
            if (v(j) > 0.0) v(j) *= s;
        }
    }
    VectorXd q = (base + v).cwiseMax(0.0);
    q /= q.sum();  // rounding only; the perturbation already sums to zero
    return p.with_probs(std::move(q));
}

}  // namespace drmpc
