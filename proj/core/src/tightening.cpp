#include "drmpc/tightening.hpp"

#include "drmpc/errors.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace drmpc {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void PolytopeConstraint::validate(Index dim) const {
    if (F.rows() == 0) throw DimensionError("constraint polytope has no rows");
    if (F.rows() != g.size()) throw DimensionError("constraint polytope: rows(F) != size(g)");
    if (dim >= 0 && F.cols() != dim) {
        throw DimensionError("constraint polytope has " + std::to_string(F.cols()) +
                             " columns, expected " + std::to_string(dim));
    }
    if (!F.allFinite() || !g.allFinite()) throw DomainError("constraint polytope is not finite");
}

PolytopeConstraint PolytopeConstraint::box(const VectorXd& lo, const VectorXd& hi) {
    if (lo.size() != hi.size()) throw DimensionError("box bounds differ in length");
    const Index n = lo.size();
    PolytopeConstraint c;
    c.F.resize(2 * n, n);
    c.F << MatrixXd::Identity(n, n), -MatrixXd::Identity(n, n);
    c.g.resize(2 * n);
    c.g << hi, -lo;
    return c;
}

std::string_view to_string(ZetaMode mode) {
    return mode == ZetaMode::paper_literal ? "paper-literal" : "corrected";
}

std::string_view to_string(MarginMode mode) { return mode == MarginMode::cvar ? "cvar" : "norm"; }

std::string_view to_string(TailConvention convention) {
    return convention == TailConvention::confidence ? "confidence" : "literal";
}

ZetaMode parse_zeta_mode(std::string_view name) {
    if (name == "paper-literal") return ZetaMode::paper_literal;
    if (name == "corrected" || name == "corrected-scaling") return ZetaMode::corrected;
    throw ConfigError("unknown zeta mode '" + std::string(name) +
                      "' (expected paper-literal or corrected)");
}

MarginMode parse_margin_mode(std::string_view name) {
    if (name == "cvar") return MarginMode::cvar;
    if (name == "norm") return MarginMode::norm;
    throw ConfigError("unknown margin mode '" + std::string(name) + "' (expected cvar or norm)");
}

TailConvention parse_tail_convention(std::string_view name) {
    if (name == "confidence") return TailConvention::confidence;
    if (name == "literal") return TailConvention::literal;
    throw ConfigError("unknown tail convention '" + std::string(name) +
                      "' (expected confidence or literal)");
}

ZetaLpSolution zeta_lp(const VectorXd& p, double alpha, ZetaMode mode) {
    if (!(alpha >= 0.0 && alpha < 1.0)) {
        throw DomainError("zeta LP needs alpha in [0, 1); alpha = 1 exhausts every budget");
    }
    const Index J = p.size();
    ZetaLpSolution out;
    out.lambda1 = VectorXd::Zero(J);
    if (alpha == 0.0) {
        // lambda2 enters the objective with weight 0 and may grow freely;
        // lambda2 = 1, nu = 0 is a feasible optimum in both modes.
        out.lambda2 = 1.0;
        return out;
    }

    // variables [lambda1 (J), lambda2, nu]
    const Index n = J + 2;
    const Index l2 = J;
    const Index nu = J + 1;
    QpProblem lp;
    lp.H.resize(n, n);
    lp.f = VectorXd::Zero(n);
    lp.f.head(J).setOnes();
    lp.f(l2) = 2.0 * alpha;
    ConstraintBuilder rows(n);
    for (Index j = 0; j < J; ++j) {
        const double c2 = mode == ZetaMode::corrected ? p(j) : 1.0;
        Index r = rows.add_row(0.0);  // -c2 l2 - nu p - l1 <= 0
        rows.add_coefficient(r, l2, -c2);
        rows.add_coefficient(r, nu, -p(j));
        rows.add_coefficient(r, j, -1.0);
        r = rows.add_row(-p(j));  // -c2 l2 + nu p + l1 <= -p
        rows.add_coefficient(r, l2, -c2);
        rows.add_coefficient(r, nu, p(j));
        rows.add_coefficient(r, j, 1.0);
        r = rows.add_row(0.0);
        rows.add_coefficient(r, j, -1.0);
    }
    const Index r = rows.add_row(0.0);
    rows.add_coefficient(r, l2, -1.0);
    lp.G = rows.matrix();
    lp.h = rows.rhs();
    lp.E.resize(0, n);
    lp.e.resize(0);

    const QpSolution sol = solve_qp(lp);
    out.status = sol.status;
    if (sol.status != QpStatus::optimal) {
        throw SolverError("zeta linear program failed", std::string(to_string(sol.status)));
    }
    out.lambda1 = sol.x.head(J);
    out.lambda2 = sol.x(l2);
    out.nu = sol.x(nu);
    // The optimum is nonnegative; drop interior-point round-off below zero.
    out.zeta = std::max(0.0, sol.objective);
    return out;
}

ZetaLpSolution zeta_lp(const ScenarioSet& joint, double alpha, ZetaMode mode) {
    return zeta_lp(joint.joint_probs(), alpha, mode);
}

double exact_indicator_tightening(double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in [0, 1)");
    return alpha;
}

namespace {

void check_margin_tail(double tail) {
    if (!(tail > 0.0 && tail <= 1.0)) throw DomainError("margin tail mass must lie in (0, 1]");
}

}  // namespace

VectorXd cvar_margin(const LinearSystemModel& sys, const PolytopeConstraint& con, int k,
                     const ScenarioSet& joint, double tail) {
    con.validate(sys.nx());
    check_margin_tail(tail);
    if (joint.horizon() != k) throw DimensionError("scenario set horizon does not match k");
    const MatrixXd FD = con.F * batch_matrices(sys, k).Dk;
    const Index S = static_cast<Index>(joint.size());
    MatrixXd samples(con.rows(), S);
    for (Index s = 0; s < S; ++s) samples.col(s) = FD * joint.stacked(static_cast<std::size_t>(s));
    VectorXd out(con.rows());
    for (Index i = 0; i < con.rows(); ++i) {
        out(i) = cvar_tail(VectorXd(samples.row(i).transpose()), joint.joint_probs(), tail);
    }
    return out;
}

VectorXd norm_margin(const LinearSystemModel& sys, const PolytopeConstraint& con,
                     const DiscreteDistribution& marginal, double tail, int k) {
    con.validate(sys.nx());
    check_margin_tail(tail);
    VectorXd abs_delta(static_cast<Index>(marginal.size()));
    for (std::size_t j = 0; j < marginal.size(); ++j) {
        abs_delta(static_cast<Index>(j)) = marginal.atom(j).lpNorm<Eigen::Infinity>();
    }
    const double risk = cvar_tail(abs_delta, marginal, tail);
    const MatrixXd FD = con.F * batch_matrices(sys, k).Dk;
    return FD.rowwise().lpNorm<1>() * risk;
}

double tail_mass(double epsilon, double zeta, TailConvention convention) {
    if (zeta >= epsilon) {
        std::ostringstream msg;
        msg << "violation budget exhausted: zeta = " << zeta << " >= epsilon = " << epsilon
            << "; reduce alpha or increase epsilon";
        throw ScheduleError(msg.str(), 0, zeta);
    }
    return convention == TailConvention::confidence ? epsilon - zeta : 1.0 - epsilon + zeta;
}

TighteningSchedule build_schedule(const LinearSystemModel& sys, const PolytopeConstraint& con,
                                  const DiscreteDistribution& d, double epsilon, double alpha,
                                  int horizon, const ScheduleOptions& options) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("epsilon must lie in (0, 1)");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in [0, 1)");
    if (horizon < 1) throw DomainError("horizon must be at least 1");
    sys.validate();
    con.validate(sys.nx());
    if (d.dim() != sys.nd()) throw DimensionError("disturbance atoms do not match D");

    TighteningSchedule s;
    s.epsilon = epsilon;
    s.alpha = alpha;
    s.horizon = horizon;
    s.options = options;
    for (int k = 1; k <= horizon; ++k) {
        const ScenarioSet joint(d, k, options.scenario_cap);
        const double zeta = zeta_lp(joint, alpha, options.zeta_mode).zeta;
        if (zeta >= epsilon) {
            std::ostringstream msg;
            msg << "violation budget exhausted at step " << k << ": zeta = " << zeta
                << " >= epsilon = " << epsilon << "; reduce alpha or increase epsilon";
            throw ScheduleError(msg.str(), k, zeta);
        }
        const double tail = tail_mass(epsilon, zeta, options.tail_convention);
        s.zeta.push_back(zeta);
        s.tail.push_back(tail);
        s.margins.push_back(options.margin_mode == MarginMode::cvar
                                ? cvar_margin(sys, con, k, joint, tail)
                                : norm_margin(sys, con, d, tail, k));
    }
    return s;
}

}  // namespace drmpc
