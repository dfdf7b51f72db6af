#include "drmpc/dynamics.hpp"

#include "drmpc/errors.hpp"

#include <string>

namespace drmpc {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void LinearSystemModel::validate() const {
    if (A.rows() == 0 || A.rows() != A.cols()) throw DimensionError("A must be square and non-empty");
    if (B.rows() != A.rows()) throw DimensionError("B must have as many rows as A");
    if (D.rows() != A.rows()) throw DimensionError("D must have as many rows as A");
    if (B.cols() == 0) throw DimensionError("B has no columns");
    if (!A.allFinite() || !B.allFinite() || !D.allFinite()) {
        throw DomainError("system matrices contain non-finite entries");
    }
}

BatchMatrices batch_matrices(const LinearSystemModel& sys, int k) {
    if (k < 1) throw DomainError("batch horizon must be at least 1, got " + std::to_string(k));
    sys.validate();
    const Index nx = sys.nx(), nu = sys.nu(), nd = sys.nd();
    BatchMatrices out;
    out.k = k;
    out.Bk.resize(nx, k * nu);
    out.Dk.resize(nx, k * nd);
    MatrixXd power = MatrixXd::Identity(nx, nx);
    // Fill from the latest block backwards: block k-1 gets A^0.
    for (int j = k - 1; j >= 0; --j) {
        out.Bk.middleCols(j * nu, nu) = power * sys.B;
        if (nd > 0) out.Dk.middleCols(j * nd, nd) = power * sys.D;
        power = sys.A * power;
    }
    out.Ak = power;
    return out;
}

ScenarioSet::ScenarioSet(const DiscreteDistribution& marginal, int k, std::size_t cap)
    : k_(k), J_(marginal.size()), atoms_(marginal.atoms()) {
    if (k < 0) throw DomainError("scenario horizon must be nonnegative");
    std::size_t count = 1;
    for (int i = 0; i < k; ++i) {
        if (count > cap / J_) {
            throw CapacityError("scenario enumeration J^k with J=" + std::to_string(J_) +
                                ", k=" + std::to_string(k) + " exceeds the cap of " +
                                std::to_string(cap));
        }
        count *= J_;
    }
    if (count > cap) {
        throw CapacityError("scenario enumeration J^k with J=" + std::to_string(J_) +
                            ", k=" + std::to_string(k) + " exceeds the cap of " +
                            std::to_string(cap));
    }
    index_.resize(count * static_cast<std::size_t>(k));
    probs_.resize(static_cast<Index>(count));
    const VectorXd& p = marginal.probs();
    std::vector<std::uint32_t> digits(static_cast<std::size_t>(k), 0);
    for (std::size_t s = 0; s < count; ++s) {
        double mass = 1.0;
        for (int i = 0; i < k; ++i) {
            index_[s * static_cast<std::size_t>(k) + static_cast<std::size_t>(i)] = digits[static_cast<std::size_t>(i)];
            mass *= p(digits[static_cast<std::size_t>(i)]);
        }
        probs_(static_cast<Index>(s)) = mass;
        for (int i = k - 1; i >= 0; --i) {
            auto& dgt = digits[static_cast<std::size_t>(i)];
            if (++dgt < J_) break;
            dgt = 0;
        }
    }
}

std::size_t ScenarioSet::atom_index(std::size_t s, int step) const {
    return index_[s * static_cast<std::size_t>(k_) + static_cast<std::size_t>(step)];
}

VectorXd ScenarioSet::stacked(std::size_t s) const {
    const Index nd = atoms_.front().size();
    VectorXd out(k_ * nd);
    for (int i = 0; i < k_; ++i) out.segment(i * nd, nd) = atoms_[atom_index(s, i)];
    return out;
}

ScenarioSet enumerate_scenarios(const DiscreteDistribution& d, int k, std::size_t cap) {
    return ScenarioSet(d, k, cap);
}

namespace {

Index steps_of(const VectorXd& stacked, Index width, const char* what) {
    if (width == 0 || stacked.size() % width != 0) {
        throw DimensionError(std::string(what) + " length " + std::to_string(stacked.size()) +
                             " is not a multiple of " + std::to_string(width));
    }
    return stacked.size() / width;
}

}  // namespace

MatrixXd propagate_nominal(const LinearSystemModel& sys, const VectorXd& x0, const VectorXd& u) {
    return propagate_disturbed(sys, x0, u, VectorXd::Zero(steps_of(u, sys.nu(), "input") * sys.nd()));
}

MatrixXd propagate_disturbed(const LinearSystemModel& sys, const VectorXd& x0, const VectorXd& u,
                             const VectorXd& delta) {
    sys.validate();
    if (x0.size() != sys.nx()) throw DimensionError("initial state has wrong dimension");
    const Index N = steps_of(u, sys.nu(), "input");
    if (delta.size() != N * sys.nd()) {
        throw DimensionError("disturbance sequence does not match the input horizon");
    }
    MatrixXd traj(sys.nx(), N + 1);
    traj.col(0) = x0;
    for (Index k = 0; k < N; ++k) {
        traj.col(k + 1) = sys.A * traj.col(k) + sys.B * u.segment(k * sys.nu(), sys.nu());
        if (sys.nd() > 0) traj.col(k + 1) += sys.D * delta.segment(k * sys.nd(), sys.nd());
    }
    return traj;
}

VectorXd disturbance_offset(const LinearSystemModel& sys, const VectorXd& delta) {
    const Index k = steps_of(delta, sys.nd(), "disturbance");
    if (k < 1) throw DomainError("disturbance sequence must cover at least one step");
    return batch_matrices(sys, static_cast<int>(k)).Dk * delta;
}

}  // namespace drmpc
