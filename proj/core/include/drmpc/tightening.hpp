#pragma once

// Offline constraint tightening: the ambiguity inflation zeta_k of the
// violation budget and the per-row state-constraint margins.

#include "drmpc/dynamics.hpp"
#include "drmpc/qp.hpp"
#include "drmpc/risk.hpp"

#include <Eigen/Dense>

#include <string_view>
#include <vector>

namespace drmpc {

/// { x : F x <= g }
struct PolytopeConstraint {
    Eigen::MatrixXd F;
    Eigen::VectorXd g;

    Eigen::Index rows() const { return F.rows(); }

    /// Throws on an empty or inconsistent polytope; `dim` is the expected
    /// column count (ignored when negative).
    void validate(Eigen::Index dim = -1) const;

    /// Box lo <= x <= hi as 2n rows: [I; -I] x <= [hi; -lo].
    static PolytopeConstraint box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);
};

/// `paper_literal` solves the dual bound with an unscaled lambda2; the
/// `corrected` variant scales it by p_k(j) and recovers zeta = alpha.
enum class ZetaMode { paper_literal, corrected };

/// `cvar`: margin_i = CVaR_t((F D_k delta)_i) over the joint scenarios.
/// `norm`: margin_i = |F_i D_k|_1 * CVaR_t(|delta|), from the marginal only.
enum class MarginMode { cvar, norm };

/// How the CVaR subscript 1 - eps + zeta maps to a tail mass:
/// `confidence` reads it as a confidence level (tail = eps - zeta),
/// `literal` uses it as the divisor (tail = 1 - eps + zeta).
enum class TailConvention { confidence, literal };

std::string_view to_string(ZetaMode mode);
std::string_view to_string(MarginMode mode);
std::string_view to_string(TailConvention convention);
/// Inverse of to_string; throws ConfigError on unknown names.
ZetaMode parse_zeta_mode(std::string_view name);
MarginMode parse_margin_mode(std::string_view name);
TailConvention parse_tail_convention(std::string_view name);

struct ZetaLpSolution {
    double zeta = 0.0;
    Eigen::VectorXd lambda1;
    double lambda2 = 0.0;
    double nu = 0.0;
    QpStatus status = QpStatus::optimal;
};

/// minimize sum(lambda1) + 2 alpha lambda2 over lambda1 >= 0, lambda2 >= 0
/// and nu free, subject to, for every joint scenario j,
///
///   paper_literal:  -lambda2 - nu p(j) - lambda1(j) <= 0
///                   p(j) <= lambda2 - nu p(j) - lambda1(j)
///   corrected:      the lambda2 terms multiplied by p(j).
///
/// Throws DomainError for alpha outside [0, 1) and SolverError when the LP
/// does not solve.
ZetaLpSolution zeta_lp(const Eigen::VectorXd& joint_probs, double alpha, ZetaMode mode);
ZetaLpSolution zeta_lp(const ScenarioSet& joint, double alpha, ZetaMode mode);

/// Exact worst-case inflation of a failure probability over the TVD ball:
/// sup E_Q[1_A] - P(A) = alpha whenever P(A) + alpha <= 1.
double exact_indicator_tightening(double alpha);

/// Row-wise CVaR of F D_k delta over the step-k scenario set.
Eigen::VectorXd cvar_margin(const LinearSystemModel& sys, const PolytopeConstraint& con, int k,
                            const ScenarioSet& joint, double tail);

/// Row-wise |F_i D_k|_1 * CVaR_tail(|delta|_inf) using only the marginal.
/// k = 1 gives the single-step form |F_i D|_1 * CVaR(|delta|).
Eigen::VectorXd norm_margin(const LinearSystemModel& sys, const PolytopeConstraint& con,
                            const DiscreteDistribution& marginal, double tail, int k = 1);

/// Tail mass for budget epsilon and inflation zeta. Throws ScheduleError
/// (step 0) when zeta >= epsilon.
double tail_mass(double epsilon, double zeta, TailConvention convention);

struct ScheduleOptions {
    ZetaMode zeta_mode = ZetaMode::corrected;
    MarginMode margin_mode = MarginMode::cvar;
    TailConvention tail_convention = TailConvention::confidence;
    std::size_t scenario_cap = ScenarioSet::kDefaultCap;
};

/// Per-step quantities for k = 1..N, stored 0-based (entry k-1).
struct TighteningSchedule {
    double epsilon = 0.0;
    double alpha = 0.0;
    int horizon = 0;
    ScheduleOptions options;
    std::vector<double> zeta;
    std::vector<double> tail;
    std::vector<Eigen::VectorXd> margins;
};

/// Throws ScheduleError carrying k and zeta_k when some zeta_k >= epsilon.
TighteningSchedule build_schedule(const LinearSystemModel& sys, const PolytopeConstraint& con,
                                  const DiscreteDistribution& d, double epsilon, double alpha,
                                  int horizon, const ScheduleOptions& options = {});

}  // namespace drmpc
