#pragma once

// Convex QP/LP backend.
//
// Problems are stated as
//
//     minimize    0.5 x'Hx + f'x + objective_offset
//     subject to  G x <= h
//                 E x  = e
//                 x_i in {0, 1}   for i in binaries
//
// solve_qp() ignores `binaries`; solve_miqp() runs branch and bound over them
// and adds the 0 <= x_i <= 1 bounds itself.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstddef>
#include <iosfwd>
#include <string_view>
#include <vector>

namespace drmpc {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct QpProblem {
    SparseMatrix H;
    Eigen::VectorXd f;
    SparseMatrix G;
    Eigen::VectorXd h;
    SparseMatrix E;
    Eigen::VectorXd e;
    std::vector<Eigen::Index> binaries;
    double objective_offset = 0.0;

    Eigen::Index num_vars() const { return f.size(); }
    Eigen::Index num_ineq() const { return h.size(); }
    Eigen::Index num_eq() const { return e.size(); }

    /// Throws DimensionError/DomainError on inconsistent or non-finite data
    /// and on an asymmetric H.
    void validate() const;
};

enum class QpStatus { optimal, infeasible, unbounded, max_iter };

std::string_view to_string(QpStatus status);

/// Relative KKT residuals. `dual_sign` is the most negative inequality
/// multiplier (0 when all are nonnegative).
struct KktResiduals {
    double primal = 0.0;
    double stationarity = 0.0;
    double complementarity = 0.0;
    double dual_sign = 0.0;

    double worst() const;
};

struct QpSolution {
    Eigen::VectorXd x;
    Eigen::VectorXd lambda;  ///< multipliers of G x <= h
    Eigen::VectorXd nu;      ///< multipliers of E x = e
    double objective = 0.0;
    QpStatus status = QpStatus::max_iter;
    KktResiduals kkt;
    int iterations = 0;
    std::size_t nodes = 0;  ///< branch-and-bound nodes (0 for solve_qp)
};

struct QpSettings {
    double tolerance = 1e-9;       ///< interior-point residual/gap target
    int max_iterations = 150;
    bool polish = true;            ///< active-set refinement of the IPM point
    double psd_floor = -1e-8;      ///< smallest accepted eigenvalue of H
    double kkt_tolerance = 1e-6;   ///< residual contract for status=optimal
    std::size_t max_binaries = 64;
    double integrality_tolerance = 1e-6;
    double gap_tolerance = 1e-6;   ///< absolute branch-and-bound gap
    std::size_t max_nodes = 100000;
    bool rounding_heuristic = true;
};

/// Interior-point solve of the continuous problem. Deterministic: identical
/// input bits give identical output bits. Throws DomainError when H is not
/// positive semidefinite.
QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings = {});

/// Branch and bound over `problem.binaries`, using solve_qp on the
/// relaxations. Dives (newest node first, rounding direction first) until an
/// incumbent exists, then expands the smallest bound. Branches on the most
/// fractional binary. Primal heuristic: implied rounding repaired against
/// pure-binary packing rows. Throws CapacityError when there are more than
/// settings.max_binaries binaries.
QpSolution solve_miqp(const QpProblem& problem, const QpSettings& settings = {});

/// Independent KKT check of a candidate primal/dual pair. Shares no code with
/// the solver.
KktResiduals verify_kkt(const QpProblem& problem, const QpSolution& solution);

/// Problem with variables `indices` fixed to `values` and removed. The
/// remaining variables keep their relative order; binaries are remapped.
QpProblem fix_variables(const QpProblem& problem, const std::vector<Eigen::Index>& indices,
                        const std::vector<double>& values);

/// Human-readable dump of a problem for cross-checking with other solvers.
void dump_problem(const QpProblem& problem, std::ostream& out);

/// Objective value 0.5 x'Hx + f'x + offset.
double evaluate_objective(const QpProblem& problem, const Eigen::VectorXd& x);

/// Helper for building problems row by row.
class ConstraintBuilder {
public:
    explicit ConstraintBuilder(Eigen::Index num_vars) : num_vars_(num_vars) {}

    /// Starts a new row and returns its index.
    Eigen::Index add_row(double rhs);
    void add_coefficient(Eigen::Index row, Eigen::Index col, double value);

    Eigen::Index rows() const { return static_cast<Eigen::Index>(rhs_.size()); }

    SparseMatrix matrix() const;
    Eigen::VectorXd rhs() const;

private:
    Eigen::Index num_vars_;
    std::vector<Eigen::Triplet<double>> triplets_;
    std::vector<double> rhs_;
};

}  // namespace drmpc
