#pragma once

// Linear dynamics x+ = A x + B u + D delta, batch matrices, and exhaustive
// enumeration of joint disturbance sequences.
//
// Stacked sequences are ordered earliest first: u = [u_0; u_1; ...].

#include "drmpc/risk.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <vector>

namespace drmpc {

struct LinearSystemModel {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::MatrixXd D;

    Eigen::Index nx() const { return A.rows(); }
    Eigen::Index nu() const { return B.cols(); }
    Eigen::Index nd() const { return D.cols(); }

    /// Throws DimensionError/DomainError on inconsistent or non-finite data.
    void validate() const;
};

/// k-step maps: x_k = Ak x_0 + Bk u + Dk delta.
struct BatchMatrices {
    int k = 0;
    Eigen::MatrixXd Ak;  ///< A^k
    Eigen::MatrixXd Bk;  ///< [A^(k-1) B, ..., A B, B]
    Eigen::MatrixXd Dk;  ///< [A^(k-1) D, ..., A D, D]
};

/// Throws DomainError for k < 1.
BatchMatrices batch_matrices(const LinearSystemModel& sys, int k);

/// All J^k length-k sequences of atoms in lexicographic order (first step is
/// the most significant digit, atom 0 first), with their product masses.
class ScenarioSet {
public:
    static constexpr std::size_t kDefaultCap = 200000;

    /// Throws CapacityError when J^k exceeds `cap`.
    ScenarioSet(const DiscreteDistribution& marginal, int k, std::size_t cap = kDefaultCap);

    int horizon() const { return k_; }
    std::size_t size() const { return static_cast<std::size_t>(probs_.size()); }
    std::size_t atoms() const { return J_; }
    const Eigen::VectorXd& joint_probs() const { return probs_; }
    double prob(std::size_t s) const { return probs_(static_cast<Eigen::Index>(s)); }

    /// Atom index used at step `step` (0-based) by scenario `s`.
    std::size_t atom_index(std::size_t s, int step) const;

    /// Stacked disturbance [delta_0; ...; delta_{k-1}] of scenario `s`.
    Eigen::VectorXd stacked(std::size_t s) const;

    /// Per-scenario atom indices, row-major (size() x k).
    const std::vector<std::uint32_t>& indices() const { return index_; }

private:
    int k_;
    std::size_t J_;
    std::vector<Eigen::VectorXd> atoms_;
    std::vector<std::uint32_t> index_;
    Eigen::VectorXd probs_;
};

ScenarioSet enumerate_scenarios(const DiscreteDistribution& d, int k,
                                std::size_t cap = ScenarioSet::kDefaultCap);

/// Nominal trajectory as columns x_0 ... x_N, where N = u.size() / nu.
Eigen::MatrixXd propagate_nominal(const LinearSystemModel& sys, const Eigen::VectorXd& x0,
                                  const Eigen::VectorXd& u);

/// Same with the additive disturbance; `delta` is stacked like `u`.
Eigen::MatrixXd propagate_disturbed(const LinearSystemModel& sys, const Eigen::VectorXd& x0,
                                    const Eigen::VectorXd& u, const Eigen::VectorXd& delta);

/// Dk delta for a stacked disturbance of k steps.
Eigen::VectorXd disturbance_offset(const LinearSystemModel& sys, const Eigen::VectorXd& delta);

}  // namespace drmpc
