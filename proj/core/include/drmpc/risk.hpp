#pragma once

// Discrete distributions and coherent risk measures over them.
//
// CVaR is always parameterized by its tail mass t (the divisor):
//
//     CVaR_t(C) = inf_z { z + E[(C - z)^+] / t },   0 < t <= 1
//
// so t = 1 is the expectation and t -> 0 approaches max(C).

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace drmpc {

/// Finite-support distribution. Atoms may be scalars (dimension 1) or
/// vectors; all atoms share one dimension.
class DiscreteDistribution {
public:
    /// Throws DimensionError on empty/mismatched input and DomainError on
    /// negative or non-normalized masses (tolerance 1e-12).
    DiscreteDistribution(std::vector<Eigen::VectorXd> atoms, Eigen::VectorXd probs);

    static DiscreteDistribution scalar(const std::vector<double>& atoms,
                                       const std::vector<double>& probs);

    std::size_t size() const { return atoms_.size(); }
    Eigen::Index dim() const { return atoms_.front().size(); }
    const std::vector<Eigen::VectorXd>& atoms() const { return atoms_; }
    const Eigen::VectorXd& atom(std::size_t j) const { return atoms_[j]; }
    const Eigen::VectorXd& probs() const { return probs_; }
    double prob(std::size_t j) const { return probs_(static_cast<Eigen::Index>(j)); }

    /// Same atoms, different masses (validated).
    DiscreteDistribution with_probs(Eigen::VectorXd probs) const;

    /// max_j |atom_j|_inf
    double max_abs() const;

private:
    std::vector<Eigen::VectorXd> atoms_;
    Eigen::VectorXd probs_;
};

/// Result of a CVaR evaluation; `degenerate` is set when tail = 0 and the
/// essential supremum was returned instead.
struct CvarValue {
    double value = 0.0;
    bool degenerate = false;
};

// The overloads taking a probability vector are the primitives; the
// DiscreteDistribution versions forward to them. Cost vectors are aligned
// index-for-index with the masses.

double expectation(const Eigen::VectorXd& values, const Eigen::VectorXd& probs);
double expectation(const Eigen::VectorXd& values, const DiscreteDistribution& d);

/// inf{z : P(C <= z) >= 1 - tail}. Cumulative sums are compared with a
/// 1e-12 slack so that exact fractions are not lost to rounding.
double var_tail(const Eigen::VectorXd& values, const Eigen::VectorXd& probs, double tail);
double var_tail(const Eigen::VectorXd& values, const DiscreteDistribution& d, double tail);

/// Sorted-tail closed form. tail = 0 yields max(values), flagged.
CvarValue cvar_tail_ex(const Eigen::VectorXd& values, const Eigen::VectorXd& probs, double tail);
double cvar_tail(const Eigen::VectorXd& values, const Eigen::VectorXd& probs, double tail);
double cvar_tail(const Eigen::VectorXd& values, const DiscreteDistribution& d, double tail);

/// The same quantity through its linear program
///     min z + sum_j p_j s_j / tail   s.t.  s_j >= 0,  s_j + z >= C_j
/// solved with the QP backend. Requires tail > 0.
double cvar_tail_lp(const Eigen::VectorXd& values, const Eigen::VectorXd& probs, double tail);

/// alpha * max(C) + (1 - alpha) * CVaR_{1-alpha}(C): the worst expectation
/// over the total-variation ball of radius alpha around the masses.
double tvd_risk(const Eigen::VectorXd& values, const Eigen::VectorXd& probs, double alpha);
double tvd_risk(const Eigen::VectorXd& values, const DiscreteDistribution& d, double alpha);

/// Oracle: max_q q'C over the simplex with 0.5 |q - p|_1 <= alpha, as an
/// explicit LP with absolute-value auxiliaries. Intended for small J.
double brute_force_tvd_sup(const Eigen::VectorXd& values, const Eigen::VectorXd& probs,
                           double alpha);

/// Greedy maximizer of the TVD-ball expectation: up to alpha mass is taken
/// from the cheapest atoms and placed on the first most expensive atom.
Eigen::VectorXd worst_case_probs(const Eigen::VectorXd& values, const Eigen::VectorXd& probs,
                                 double alpha);
DiscreteDistribution worst_case_distribution(const Eigen::VectorXd& values,
                                             const DiscreteDistribution& d, double alpha);

/// 0.5 * sum_j |p_j - q_j|
double tvd_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q);
double tvd_distance(const DiscreteDistribution& p, const DiscreteDistribution& q);

/// Random pmf in the TVD ball of radius alpha around p, deterministic in
/// `seed`. With `adversarial_cost` the worst-case distribution for that cost
/// is returned instead.
DiscreteDistribution sample_in_tvd_ball(
    const DiscreteDistribution& p, double alpha, std::uint64_t seed,
    const std::optional<Eigen::VectorXd>& adversarial_cost = std::nullopt);

}  // namespace drmpc
