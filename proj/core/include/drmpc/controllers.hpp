#pragma once

// The four MPC controllers (DRMPC, tight DRMPC, scenario SMPC, CVaR-MPC),
// deterministic nominal MPC, and the receding-horizon step.
//
// All controllers optimize the open-loop input sequence
// u_bar = [u_0; ...; u_{N-1}] with the nominal state eliminated:
//
//     x~_k = A^k x_t + S_k u_bar,   S_k = [A^(k-1)B ... B 0 ... 0]
//
// and share the stage cost sum_{k=1..N} x_k'Q x_k + sum_{k=0..N-1} u_k'R u_k.
// For a disturbance sequence j the realized cost splits into the nominal cost
// plus L_j(u_bar) = sum_k (o_kj + 2 x~_k)' Q o_kj with o_kj = D_k delta^j.

#include "drmpc/dynamics.hpp"
#include "drmpc/qp.hpp"
#include "drmpc/risk.hpp"
#include "drmpc/tightening.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string_view>
#include <vector>

namespace drmpc {

struct ControlProblemSpec {
    LinearSystemModel sys;
    PolytopeConstraint state_con;
    PolytopeConstraint input_con;
    Eigen::MatrixXd Q;
    Eigen::MatrixXd R;
    int horizon = 4;
    double epsilon = 0.1;
    double alpha = 0.0;
    DiscreteDistribution disturbance = DiscreteDistribution::scalar({0.0}, {1.0});

    /// Throws on inconsistent dimensions, non-PSD weights, horizon < 1,
    /// epsilon outside (0, 1) (or (0, inf) with `allow_unit_epsilon`) and
    /// alpha outside [0, 1).
    void validate(bool allow_unit_epsilon = false) const;
};

enum class ControllerTag { drmpc, tight_drmpc, smpc, cvar_mpc };

std::string_view to_string(ControllerTag tag);
/// Throws ConfigError on unknown names.
ControllerTag parse_controller_tag(std::string_view name);

struct ControllerOptions {
    /// SMPC big-M; 0 derives it from the state, input and disturbance bounds.
    double big_m = 0.0;
    /// CVaR-MPC constraint tail: confidence gives eps, literal 1 - eps.
    TailConvention tail_convention = TailConvention::confidence;
    std::size_t scenario_cap = ScenarioSet::kDefaultCap;
    QpSettings solver;
};

struct ControllerKind {
    ControllerTag tag = ControllerTag::drmpc;
    ControllerOptions options;

    /// Throws ConfigError when an option does not apply to the tag.
    void validate() const;
};

/// Index map of a controller's decision vector. Absent blocks have
/// begin = -1 and count 0.
struct DecisionLayout {
    Eigen::Index inputs = 0;  ///< u_bar occupies [0, inputs)
    Eigen::Index m = -1;      ///< worst-case epigraph
    Eigen::Index z = -1;      ///< CVaR threshold of the cost
    Eigen::Index s_begin = -1;
    /// Scenario (index into the J^N set) of each s variable; zero-mass
    /// scenarios carry no variable.
    std::vector<std::size_t> s_scenario;
    Eigen::Index constraint_aux_begin = -1;
    Eigen::Index constraint_aux_count = 0;
    Eigen::Index binary_begin = -1;
    Eigen::Index binary_count = 0;
};

struct MpcProgram {
    QpProblem qp;
    DecisionLayout layout;
};

/// x-independent prediction data for one spec: powers of A, S_k, and the
/// enumerated disturbance offsets o_kj for every k = 1..N.
class PredictionModel {
public:
    explicit PredictionModel(const ControlProblemSpec& spec,
                             std::size_t scenario_cap = ScenarioSet::kDefaultCap);

    int horizon() const { return N_; }
    const Eigen::MatrixXd& Apow(int k) const { return Ak_[static_cast<std::size_t>(k)]; }
    /// nx x (N nu) map from u_bar to the input part of x~_k.
    const Eigen::MatrixXd& S(int k) const { return Sk_[static_cast<std::size_t>(k)]; }
    const ScenarioSet& scenarios(int k) const { return *sets_[static_cast<std::size_t>(k)]; }
    /// D_k delta for every k-step scenario, one column each.
    const Eigen::MatrixXd& offsets(int k) const { return offsets_[static_cast<std::size_t>(k)]; }
    /// Index of the k-step prefix of N-step scenario j.
    std::size_t prefix(std::size_t j, int k) const;

    /// Nominal-cost Hessian (0.5 u'Hu convention), constant in x.
    const Eigen::MatrixXd& cost_hessian() const { return H_; }

    /// L_j(u_bar) = a_j' u_bar + b_j for all N-step scenarios j at state x:
    /// columns of `a` and entries of `b`.
    void scenario_cost_terms(const Eigen::VectorXd& x, Eigen::MatrixXd& a,
                             Eigen::VectorXd& b) const;

    /// Nominal linear term and constant at state x.
    void nominal_cost_terms(const Eigen::VectorXd& x, Eigen::VectorXd& f, double& offset) const;

    /// Nominal states x~_1..x~_N as columns.
    Eigen::MatrixXd nominal_states(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;

    /// State-constraint rows mapped through the prediction: F S_k, F A^k and
    /// F D_k delta^j (one column per k-step scenario).
    const Eigen::MatrixXd& FS(int k) const { return FS_[static_cast<std::size_t>(k)]; }
    const Eigen::MatrixXd& FA(int k) const { return FA_[static_cast<std::size_t>(k)]; }
    const Eigen::MatrixXd& Foffsets(int k) const { return Fo_[static_cast<std::size_t>(k)]; }

private:
    int N_;
    Eigen::Index nx_, nu_;
    std::size_t J_;
    std::vector<Eigen::MatrixXd> Ak_;
    std::vector<Eigen::MatrixXd> Sk_;
    std::vector<std::unique_ptr<ScenarioSet>> sets_;
    std::vector<Eigen::MatrixXd> offsets_;
    std::vector<Eigen::MatrixXd> FS_, FA_, Fo_;
    Eigen::MatrixXd H_;
    Eigen::MatrixXd a_;      // N nu x J^N
    Eigen::VectorXd b0_;     // x-free part of b
    Eigen::MatrixXd Cb_;     // b = b0 + Cb' x
    Eigen::MatrixXd Fx_;     // nominal f = Fx x
    Eigen::MatrixXd P_;      // nominal offset = x' P x
};

/// Deterministic MPC on the nominal dynamics with hard state constraints.
MpcProgram build_nominal_qp(const ControlProblemSpec& spec, const Eigen::VectorXd& x);

/// min nominal + alpha m + (1 - alpha) z + sum_j p_N(j) s_j over u_bar and
/// the cost epigraph (m >= L_j, s_j >= L_j - z, s >= 0), with each state row
/// i at step k constrained through the CVaR epigraph at tail t_k:
///     F_i x~_k + zc + (1/t_k) sum_j p_k(j) sc_j <= g_i,
///     sc_j >= (F D_k delta^j)_i - zc,  sc_j >= 0.
/// alpha = 0 replaces the cost epigraph by the expectation, t_k = 1 the
/// constraint epigraph by the mean.
MpcProgram build_drmpc_qp(const ControlProblemSpec& spec, const TighteningSchedule& schedule,
                          const Eigen::VectorXd& x);
MpcProgram build_drmpc_qp(const ControlProblemSpec& spec, const PredictionModel& model,
                          const TighteningSchedule& schedule, const Eigen::VectorXd& x);

/// Same cost; state rows F x~_k <= g - norm_margin(t_k, k).
MpcProgram build_tight_drmpc_qp(const ControlProblemSpec& spec, const TighteningSchedule& schedule,
                                const Eigen::VectorXd& x);
MpcProgram build_tight_drmpc_qp(const ControlProblemSpec& spec, const PredictionModel& model,
                                const TighteningSchedule& schedule, const Eigen::VectorXd& x);

/// Expected cost with per-step chance constraints through binaries y_kj:
///     F_i x~_k + (F D_k delta^j)_i - M y_kj <= g_i,
///     sum_j p_k(j) y_kj <= epsilon.
/// Scenarios with p_k(j) > epsilon can never be dropped and get plain rows.
/// epsilon >= 1 removes the chance constraints. A 1e-7 p_k(j) cost on each
/// y_kj breaks ties toward satisfying the constraint.
MpcProgram build_smpc_miqp(const ControlProblemSpec& spec, const Eigen::VectorXd& x,
                           const ControllerOptions& options = {});
MpcProgram build_smpc_miqp(const ControlProblemSpec& spec, const PredictionModel& model,
                           const Eigen::VectorXd& x, const ControllerOptions& options = {});

/// The big-M used by build_smpc_miqp at state x.
double smpc_big_m(const ControlProblemSpec& spec, const Eigen::VectorXd& x);

/// min nominal + CVaR_{1-alpha}(L) with CVaR state rows at the tail given by
/// `convention` for epsilon and no ambiguity inflation.
MpcProgram build_cvar_mpc_qp(const ControlProblemSpec& spec, const Eigen::VectorXd& x,
                             const ControllerOptions& options = {});
MpcProgram build_cvar_mpc_qp(const ControlProblemSpec& spec, const PredictionModel& model,
                             const Eigen::VectorXd& x, const ControllerOptions& options = {});

/// tvd_risk at radius alpha of the realized total cost over all J^N
/// scenarios, each propagated directly from x with inputs u. Accepts
/// alpha = 1 (the worst scenario).
double evaluate_cost_oracle(const ControlProblemSpec& spec, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& u,
                            std::size_t scenario_cap = ScenarioSet::kDefaultCap);

enum class StepStatus {
    optimal,
    suboptimal,  ///< integer search stopped early; u0 from a feasible incumbent
    infeasible,
    failed       ///< solver did not produce a usable point
};

std::string_view to_string(StepStatus status);

struct MpcStepResult {
    Eigen::VectorXd u0;
    Eigen::VectorXd inputs;
    double objective = 0.0;
    double m = 0.0;
    double z = 0.0;
    Eigen::VectorXd s;
    double solve_seconds = 0.0;
    StepStatus status = StepStatus::failed;
    QpStatus solver_status = QpStatus::max_iter;
    std::size_t nodes = 0;
    Eigen::Index variables = 0;
    Eigen::Index constraints = 0;

    /// u0 may be applied.
    bool usable() const { return status == StepStatus::optimal || status == StepStatus::suboptimal; }
};

/// Controller bound to a spec and schedule; the prediction model is built
/// once and reused by every step.
class MpcController {
public:
    /// `schedule` is required for drmpc and tight_drmpc and ignored
    /// otherwise.
    MpcController(ControllerKind kind, ControlProblemSpec spec,
                  std::optional<TighteningSchedule> schedule = std::nullopt);

    const ControllerKind& kind() const { return kind_; }
    const ControlProblemSpec& spec() const { return spec_; }

    MpcProgram build(const Eigen::VectorXd& x) const;
    MpcStepResult step(const Eigen::VectorXd& x) const;

private:
    ControllerKind kind_;
    ControlProblemSpec spec_;
    std::optional<TighteningSchedule> schedule_;
    PredictionModel model_;
};

/// One-shot form of MpcController::step.
MpcStepResult receding_horizon_step(const ControllerKind& kind, const ControlProblemSpec& spec,
                                    const TighteningSchedule& schedule, const Eigen::VectorXd& x);

}  // namespace drmpc
