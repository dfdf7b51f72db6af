#include "drmpc/controllers.hpp"

#include "drmpc/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <string>

namespace drmpc {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kTieBreak = 1e-7;
// Budget rows compare sums of products of masses against epsilon.
constexpr double kBudgetSlack = 1e-12;

void check_psd(const MatrixXd& M, Index dim, const char* name) {
    if (M.rows() != dim || M.cols() != dim) {
        throw DimensionError(std::string(name) + " must be " + std::to_string(dim) + " x " +
                             std::to_string(dim));
    }
    if (!M.allFinite()) throw DomainError(std::string(name) + " is not finite");
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, M.cwiseAbs().maxCoeff())) {
        throw DomainError(std::string(name) + " is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(M, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10) {
        throw DomainError(std::string(name) + " is not positive semidefinite");
    }
}

SparseMatrix to_sparse(const MatrixXd& M, Index n) {
    std::vector<Eigen::Triplet<double>> trip;
    for (Index c = 0; c < M.cols(); ++c) {
        for (Index r = 0; r < M.rows(); ++r) {
            if (M(r, c) != 0.0) trip.emplace_back(r, c, M(r, c));
        }
    }
    SparseMatrix S(n, n);
    S.setFromTriplets(trip.begin(), trip.end());
    S.makeCompressed();
    return S;
}

void check_state(const ControlProblemSpec& spec, const VectorXd& x) {
    if (x.size() != spec.sys.nx()) throw DimensionError("state has the wrong dimension");
    if (!x.allFinite()) throw DomainError("state is not finite");
}

void check_schedule(const ControlProblemSpec& spec, const TighteningSchedule& schedule) {
    if (schedule.horizon != spec.horizon || schedule.epsilon != spec.epsilon ||
        schedule.alpha != spec.alpha) {
        std::ostringstream msg;
        msg << "schedule was built for (eps " << schedule.epsilon << ", alpha " << schedule.alpha
            << ", N " << schedule.horizon << ") but the controller uses (eps " << spec.epsilon
            << ", alpha " << spec.alpha << ", N " << spec.horizon << ")";
        throw DomainError(msg.str());
    }
    if (schedule.tail.size() != static_cast<std::size_t>(spec.horizon)) {
        throw DimensionError("schedule has the wrong number of steps");
    }
}

// Cost of the disturbance part L_j.
struct CostPlan {
    enum class Form { none, expectation, epigraph } form = Form::expectation;
    bool use_m = false;
    double wm = 0.0;  // weight of m
    double wz = 0.0;  // weight of z
    double ws = 0.0;  // s_j carries ws * p_N(j)
};

CostPlan tvd_cost(double alpha) {
    CostPlan c;
    if (alpha == 0.0) return c;
    c.form = CostPlan::Form::epigraph;
    c.use_m = true;
    c.wm = alpha;
    c.wz = 1.0 - alpha;
    c.ws = 1.0;
    return c;
}

CostPlan cvar_cost(double alpha) {
    CostPlan c;
    if (alpha == 0.0) return c;
    c.form = CostPlan::Form::epigraph;
    c.wz = 1.0;
    c.ws = 1.0 / (1.0 - alpha);
    return c;
}

struct StatePlan {
    enum class Form { margin, cvar_epigraph, chance } form = Form::margin;
    std::vector<VectorXd> margins;  // margin, per step
    std::vector<double> tails;      // cvar_epigraph, per step
    double epsilon = 0.0;           // chance
    double big_m = 0.0;
    VectorXd input_bounds;          // |u_c| <= input_bounds(c)
};

MpcProgram assemble(const ControlProblemSpec& spec, const PredictionModel& model,
                    const VectorXd& x, const CostPlan& cost, const StatePlan& state) {
    const int N = spec.horizon;
    const Index nu = spec.sys.nu();
    const Index nin = N * nu;
    const PolytopeConstraint& sc = spec.state_con;
    const Index rows_x = sc.rows();

    MpcProgram prog;
    DecisionLayout& L = prog.layout;
    L.inputs = nin;
    Index n = nin;

    MatrixXd a;
    VectorXd b;
    if (cost.form != CostPlan::Form::none) model.scenario_cost_terms(x, a, b);
    const VectorXd& pN = model.scenarios(N).joint_probs();
    if (cost.form == CostPlan::Form::epigraph) {
        if (cost.use_m) L.m = n++;
        L.z = n++;
        L.s_begin = n;
        for (Index j = 0; j < pN.size(); ++j) {
            if (pN(j) > 0.0) L.s_scenario.push_back(static_cast<std::size_t>(j));
        }
        n += static_cast<Index>(L.s_scenario.size());
    }

    // per-(k, i) epigraph blocks: zc followed by one sc per positive-mass scenario
    std::vector<Index> block_start(static_cast<std::size_t>(N) * static_cast<std::size_t>(rows_x), -1);
    if (state.form == StatePlan::Form::cvar_epigraph) {
        L.constraint_aux_begin = n;
        for (int k = 1; k <= N; ++k) {
            if (state.tails[static_cast<std::size_t>(k - 1)] >= 1.0) continue;
            const VectorXd& pk = model.scenarios(k).joint_probs();
            const Index support = (pk.array() > 0.0).count();
            for (Index i = 0; i < rows_x; ++i) {
                block_start[static_cast<std::size_t>((k - 1) * rows_x + i)] = n;
                n += 1 + support;
            }
        }
        L.constraint_aux_count = n - L.constraint_aux_begin;
    }

    // Each row alone must hold with probability 1 - eps, which gives the
    // quantile cut F_i x~_k + q_ki <= g_i with q_ki = VaR_eps(c_ki). Under the
    // cut the excess of scenario j is at most c_kij - q_ki, and over the input
    // box at most reach; the smaller bound is that row's M. Rows with no
    // possible excess are dropped.
    std::vector<VectorXd> reach(static_cast<std::size_t>(N) + 1);
    std::vector<VectorXd> quantile(static_cast<std::size_t>(N) + 1);
    auto excess = [&](int k, Index i, Index j) {
        const double c = model.Foffsets(k)(i, j);
        const double box = reach[static_cast<std::size_t>(k)](i) - sc.g(i) + model.FA(k).row(i).dot(x) + c;
        return std::min({box, c - quantile[static_cast<std::size_t>(k)](i), state.big_m});
    };
    std::vector<std::vector<Index>> binary_of(static_cast<std::size_t>(N) + 1);
    if (state.form == StatePlan::Form::chance && state.epsilon < 1.0) {
        const VectorXd ub = state.input_bounds.replicate(N, 1);
        for (int k = 1; k <= N; ++k) {
            reach[static_cast<std::size_t>(k)] = model.FS(k).cwiseAbs() * ub;
            const MatrixXd& Fo = model.Foffsets(k);
            VectorXd& q = quantile[static_cast<std::size_t>(k)];
            q.resize(rows_x);
            for (Index i = 0; i < rows_x; ++i) {
                q(i) = var_tail(VectorXd(Fo.row(i).transpose()), model.scenarios(k).joint_probs(), state.epsilon);
            }
        }
        L.binary_begin = n;
        for (int k = 1; k <= N; ++k) {
            const VectorXd& pk = model.scenarios(k).joint_probs();
            auto& ids = binary_of[static_cast<std::size_t>(k)];
            ids.assign(static_cast<std::size_t>(pk.size()), -1);
            for (Index j = 0; j < pk.size(); ++j) {
                if (!(pk(j) > 0.0 && pk(j) <= state.epsilon)) continue;
                bool violable = false;
                for (Index i = 0; i < rows_x && !violable; ++i) violable = excess(k, i, j) > 0.0;
                if (violable) ids[static_cast<std::size_t>(j)] = n++;
            }
        }
        L.binary_count = n - L.binary_begin;
        if (L.binary_count == 0) L.binary_begin = -1;
    }

    QpProblem& qp = prog.qp;
    qp.H = to_sparse(model.cost_hessian(), n);
    qp.f = VectorXd::Zero(n);
    {
        VectorXd fn;
        model.nominal_cost_terms(x, fn, qp.objective_offset);
        qp.f.head(nin) = fn;
    }
    if (cost.form == CostPlan::Form::expectation) {
        qp.f.head(nin) += a * pN;
        qp.objective_offset += pN.dot(b);
    } else if (cost.form == CostPlan::Form::epigraph) {
        if (cost.use_m) qp.f(L.m) = cost.wm;
        qp.f(L.z) = cost.wz;
        for (std::size_t q = 0; q < L.s_scenario.size(); ++q) {
            qp.f(L.s_begin + static_cast<Index>(q)) =
                cost.ws * pN(static_cast<Index>(L.s_scenario[q]));
        }
    }

    ConstraintBuilder rows(n);
    auto add_dense = [&](Index r, const auto& coeffs) {
        for (Index c = 0; c < coeffs.size(); ++c) rows.add_coefficient(r, c, coeffs(c));
    };

    // cost epigraph
    if (cost.form == CostPlan::Form::epigraph) {
        if (cost.use_m) {
            // m bounds every scenario, zero-mass ones included: the ball may
            // move mass onto them.
            for (Index j = 0; j < a.cols(); ++j) {
                const Index r = rows.add_row(-b(j));
                add_dense(r, a.col(j));
                rows.add_coefficient(r, L.m, -1.0);
            }
        }
        for (std::size_t q = 0; q < L.s_scenario.size(); ++q) {
            const Index j = static_cast<Index>(L.s_scenario[q]);
            const Index sv = L.s_begin + static_cast<Index>(q);
            Index r = rows.add_row(-b(j));
            add_dense(r, a.col(j));
            rows.add_coefficient(r, L.z, -1.0);
            rows.add_coefficient(r, sv, -1.0);
            r = rows.add_row(0.0);
            rows.add_coefficient(r, sv, -1.0);
        }
    }

    // state rows
    for (int k = 1; k <= N; ++k) {
        const MatrixXd& FS = model.FS(k);
        const VectorXd base = sc.g - model.FA(k) * x;
        const MatrixXd& Fo = model.Foffsets(k);
        const VectorXd& pk = model.scenarios(k).joint_probs();
        for (Index i = 0; i < rows_x; ++i) {
            switch (state.form) {
                case StatePlan::Form::margin: {
                    const Index r = rows.add_row(base(i) - state.margins[static_cast<std::size_t>(k - 1)](i));
                    add_dense(r, FS.row(i));
                    break;
                }
                case StatePlan::Form::cvar_epigraph: {
                    const double t = state.tails[static_cast<std::size_t>(k - 1)];
                    if (t >= 1.0) {
                        const Index r = rows.add_row(base(i) - Fo.row(i).dot(pk));
                        add_dense(r, FS.row(i));
                        break;
                    }
                    const Index zc = block_start[static_cast<std::size_t>((k - 1) * rows_x + i)];
                    const Index main = rows.add_row(base(i));
                    add_dense(main, FS.row(i));
                    rows.add_coefficient(main, zc, 1.0);
                    Index sv = zc + 1;
                    for (Index j = 0; j < pk.size(); ++j) {
                        if (pk(j) <= 0.0) continue;
                        rows.add_coefficient(main, sv, pk(j) / t);
                        Index r = rows.add_row(-Fo(i, j));
                        rows.add_coefficient(r, zc, -1.0);
                        rows.add_coefficient(r, sv, -1.0);
                        r = rows.add_row(0.0);
                        rows.add_coefficient(r, sv, -1.0);
                        ++sv;
                    }
                    break;
                }
                case StatePlan::Form::chance: {
                    if (state.epsilon >= 1.0) break;
                    const auto& ids = binary_of[static_cast<std::size_t>(k)];
                    for (Index j = 0; j < pk.size(); ++j) {
                        if (pk(j) <= 0.0) continue;
                        const double worst = excess(k, i, j);
                        if (worst <= 0.0) continue;
                        const Index r = rows.add_row(base(i) - Fo(i, j));
                        add_dense(r, FS.row(i));
                        const Index y = ids[static_cast<std::size_t>(j)];
                        if (y >= 0) rows.add_coefficient(r, y, -worst);
                    }
                    break;
                }
            }
        }
        if (state.form == StatePlan::Form::chance && state.epsilon < 1.0) {
            const auto& ids_k = binary_of[static_cast<std::size_t>(k)];
            for (Index i = 0; i < rows_x; ++i) {
                const double q = quantile[static_cast<std::size_t>(k)](i);
                Index r = rows.add_row(base(i) - q);
                add_dense(r, FS.row(i));
                // Mixing inequality over the scenarios above the quantile,
                // sorted by c descending:
                //     F_i x~_k + c_1 - sum_t (c_t - c_{t+1}) y_t <= g_i,
                // with c_{r+1} = q. If t is the first satisfied scenario the
                // left side is at most F_i x~_k + c_t.
                std::vector<Index> above;
                for (Index j = 0; j < pk.size(); ++j) {
                    if (pk(j) > 0.0 && Fo(i, j) > q) above.push_back(j);
                }
                if (above.empty()) continue;
                std::stable_sort(above.begin(), above.end(),
                                 [&](Index a, Index b) { return Fo(i, a) > Fo(i, b); });
                r = rows.add_row(base(i) - Fo(i, above.front()));
                add_dense(r, FS.row(i));
                for (std::size_t t = 0; t < above.size(); ++t) {
                    const double next = t + 1 < above.size() ? Fo(i, above[t + 1]) : q;
                    const Index y = ids_k[static_cast<std::size_t>(above[t])];
                    const double step = Fo(i, above[t]) - next;
                    if (y >= 0 && step > 0.0) rows.add_coefficient(r, y, -step);
                }
            }
            const auto& ids = binary_of[static_cast<std::size_t>(k)];
            if (std::any_of(ids.begin(), ids.end(), [](Index y) { return y >= 0; })) {
                const Index r = rows.add_row(state.epsilon + kBudgetSlack);
                for (Index j = 0; j < pk.size(); ++j) {
                    const Index y = ids[static_cast<std::size_t>(j)];
                    if (y < 0) continue;
                    rows.add_coefficient(r, y, pk(j));
                    qp.f(y) += kTieBreak * pk(j);
                    qp.binaries.push_back(y);
                }
            }
        }
    }

    // input rows
    const PolytopeConstraint& ic = spec.input_con;
    for (int k = 0; k < N; ++k) {
        for (Index i = 0; i < ic.rows(); ++i) {
            const Index r = rows.add_row(ic.g(i));
            for (Index c = 0; c < nu; ++c) rows.add_coefficient(r, k * nu + c, ic.F(i, c));
        }
    }

    qp.G = rows.matrix();
    qp.h = rows.rhs();
    qp.E.resize(0, n);
    qp.e.resize(0);
    return prog;
}

// Per-coordinate bound on |u| over the input polytope, by 2 nu small LPs.
VectorXd input_bounds(const PolytopeConstraint& ic) {
    const Index nu = ic.F.cols();
    QpProblem lp;
    lp.H.resize(nu, nu);
    lp.G = ic.F.sparseView();
    lp.h = ic.g;
    lp.E.resize(0, nu);
    lp.e.resize(0);
    VectorXd bound = VectorXd::Zero(nu);
    for (Index c = 0; c < nu; ++c) {
        for (double sign : {1.0, -1.0}) {
            lp.f = VectorXd::Zero(nu);
            lp.f(c) = -sign;
            const QpSolution s = solve_qp(lp);
            if (s.status == QpStatus::unbounded) {
                throw DomainError("input constraint set is unbounded; big-M needs bounded inputs");
            }
            if (s.status != QpStatus::optimal) {
                throw SolverError("input bound LP failed", std::string(to_string(s.status)));
            }
            bound(c) = std::max(bound(c), std::abs(s.x(c)));
        }
    }
    return bound;
}

const ControlProblemSpec& validated(const ControllerKind& kind, const ControlProblemSpec& spec) {
    kind.validate();
    spec.validate(kind.tag == ControllerTag::smpc);
    return spec;
}

}  // namespace

void ControlProblemSpec::validate(bool allow_unit_epsilon) const {
    sys.validate();
    const Index nx = sys.nx();
    const Index nu = sys.nu();
    state_con.validate(nx);
    input_con.validate(nu);
    check_psd(Q, nx, "Q");
    check_psd(R, nu, "R");
    if (horizon < 1) throw DomainError("horizon must be at least 1");
    if (!(epsilon > 0.0 && (allow_unit_epsilon || epsilon < 1.0))) {
        throw DomainError("epsilon must lie in (0, 1)");
    }
    if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in [0, 1)");
    if (disturbance.dim() != sys.nd()) {
        throw DimensionError("disturbance atoms have dimension " +
                             std::to_string(disturbance.dim()) + ", D has " +
                             std::to_string(sys.nd()) + " columns");
    }
}

std::string_view to_string(ControllerTag tag) {
    switch (tag) {
        case ControllerTag::drmpc: return "drmpc";
        case ControllerTag::tight_drmpc: return "tight_drmpc";
        case ControllerTag::smpc: return "smpc";
        case ControllerTag::cvar_mpc: return "cvar_mpc";
    }
    return "unknown";
}

ControllerTag parse_controller_tag(std::string_view name) {
    for (ControllerTag t : {ControllerTag::drmpc, ControllerTag::tight_drmpc, ControllerTag::smpc,
                            ControllerTag::cvar_mpc}) {
        if (name == to_string(t)) return t;
    }
    throw ConfigError("unknown controller '" + std::string(name) +
                      "' (expected drmpc, tight_drmpc, smpc or cvar_mpc)");
}

void ControllerKind::validate() const {
    if (!(options.big_m >= 0.0) || !std::isfinite(options.big_m)) {
        throw ConfigError("big_m must be a finite nonnegative number");
    }
    if (options.big_m > 0.0 && tag != ControllerTag::smpc) {
        throw ConfigError("big_m applies to smpc only");
    }
    if (options.tail_convention != TailConvention::confidence && tag != ControllerTag::cvar_mpc) {
        throw ConfigError(
            "the controller tail convention applies to cvar_mpc only; drmpc takes it from the "
            "schedule");
    }
}

PredictionModel::PredictionModel(const ControlProblemSpec& spec, std::size_t scenario_cap)
    : N_(spec.horizon), nx_(spec.sys.nx()), nu_(spec.sys.nu()), J_(spec.disturbance.size()) {
    spec.validate(true);
    const auto& A = spec.sys.A;
    const auto& B = spec.sys.B;
    const auto& D = spec.sys.D;
    const auto& F = spec.state_con.F;
    const MatrixXd& Q = spec.Q;
    const Index nin = N_ * nu_;
    const std::size_t slots = static_cast<std::size_t>(N_) + 1;

    Ak_.resize(slots);
    Ak_[0] = MatrixXd::Identity(nx_, nx_);
    for (std::size_t k = 1; k < slots; ++k) Ak_[k] = A * Ak_[k - 1];

    Sk_.assign(slots, MatrixXd::Zero(nx_, nin));
    for (int k = 1; k <= N_; ++k) {
        auto& S = Sk_[static_cast<std::size_t>(k)];
        for (int i = 0; i < k; ++i) {
            S.block(0, i * nu_, nx_, nu_) = Ak_[static_cast<std::size_t>(k - 1 - i)] * B;
        }
    }

    sets_.resize(slots);
    offsets_.resize(slots);
    offsets_[0] = MatrixXd::Zero(nx_, 1);
    for (int k = 1; k <= N_; ++k) {
        sets_[static_cast<std::size_t>(k)] =
            std::make_unique<ScenarioSet>(spec.disturbance, k, scenario_cap);
        const ScenarioSet& set = *sets_[static_cast<std::size_t>(k)];
        MatrixXd& off = offsets_[static_cast<std::size_t>(k)];
        off.resize(nx_, static_cast<Index>(set.size()));
        const MatrixXd& prev = offsets_[static_cast<std::size_t>(k - 1)];
        for (std::size_t s = 0; s < set.size(); ++s) {
            // o_k = A o_{k-1} + D delta_{k-1}; the prefix drops the last digit
            const Index parent = k == 1 ? 0 : static_cast<Index>(s / J_);
            off.col(static_cast<Index>(s)) =
                A * prev.col(parent) + D * spec.disturbance.atom(set.atom_index(s, k - 1));
        }
    }

    FS_.resize(slots);
    FA_.resize(slots);
    Fo_.resize(slots);
    for (int k = 1; k <= N_; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        FS_[kk] = F * Sk_[kk];
        FA_[kk] = F * Ak_[kk];
        Fo_[kk] = F * offsets_[kk];
    }

    MatrixXd Rbar = MatrixXd::Zero(nin, nin);
    for (int k = 0; k < N_; ++k) Rbar.block(k * nu_, k * nu_, nu_, nu_) = spec.R;
    H_ = 2.0 * Rbar;
    Fx_ = MatrixXd::Zero(nin, nx_);
    P_ = MatrixXd::Zero(nx_, nx_);
    for (int k = 1; k <= N_; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const MatrixXd SQ = Sk_[kk].transpose() * Q;
        H_ += 2.0 * SQ * Sk_[kk];
        Fx_ += 2.0 * SQ * Ak_[kk];
        P_ += Ak_[kk].transpose() * Q * Ak_[kk];
    }
    H_ = 0.5 * (H_ + H_.transpose());

    const Index SN = static_cast<Index>(sets_.back()->size());
    a_ = MatrixXd::Zero(nin, SN);
    b0_ = VectorXd::Zero(SN);
    Cb_ = MatrixXd::Zero(nx_, SN);
    for (Index j = 0; j < SN; ++j) {
        for (int k = 1; k <= N_; ++k) {
            const auto kk = static_cast<std::size_t>(k);
            const VectorXd Qo = Q * offsets_[kk].col(static_cast<Index>(prefix(static_cast<std::size_t>(j), k)));
            const VectorXd o = offsets_[kk].col(static_cast<Index>(prefix(static_cast<std::size_t>(j), k)));
            a_.col(j) += 2.0 * Sk_[kk].transpose() * Qo;
            b0_(j) += o.dot(Qo);
            Cb_.col(j) += 2.0 * Ak_[kk].transpose() * Qo;
        }
    }
}

std::size_t PredictionModel::prefix(std::size_t j, int k) const {
    std::size_t div = 1;
    for (int i = k; i < N_; ++i) div *= J_;
    return j / div;
}

void PredictionModel::scenario_cost_terms(const VectorXd& x, MatrixXd& a, VectorXd& b) const {
    a = a_;
    b = b0_ + Cb_.transpose() * x;
}

void PredictionModel::nominal_cost_terms(const VectorXd& x, VectorXd& f, double& offset) const {
    f = Fx_ * x;
    offset = x.dot(P_ * x);
}

MatrixXd PredictionModel::nominal_states(const VectorXd& x, const VectorXd& u) const {
    MatrixXd out(nx_, N_);
    for (int k = 1; k <= N_; ++k) {
        out.col(k - 1) = Ak_[static_cast<std::size_t>(k)] * x + Sk_[static_cast<std::size_t>(k)] * u;
    }
    return out;
}

MpcProgram build_nominal_qp(const ControlProblemSpec& spec, const VectorXd& x) {
    spec.validate();
    check_state(spec, x);
    const PredictionModel model(spec);
    StatePlan state;
    state.margins.assign(static_cast<std::size_t>(spec.horizon), VectorXd::Zero(spec.state_con.rows()));
    CostPlan cost;
    cost.form = CostPlan::Form::none;
    return assemble(spec, model, x, cost, state);
}

MpcProgram build_drmpc_qp(const ControlProblemSpec& spec, const TighteningSchedule& schedule,
                          const VectorXd& x) {
    spec.validate();
    return build_drmpc_qp(spec, PredictionModel(spec, schedule.options.scenario_cap), schedule, x);
}

MpcProgram build_drmpc_qp(const ControlProblemSpec& spec, const PredictionModel& model,
                          const TighteningSchedule& schedule, const VectorXd& x) {
    check_state(spec, x);
    check_schedule(spec, schedule);
    StatePlan state;
    state.form = StatePlan::Form::cvar_epigraph;
    state.tails = schedule.tail;
    return assemble(spec, model, x, tvd_cost(spec.alpha), state);
}

MpcProgram build_tight_drmpc_qp(const ControlProblemSpec& spec, const TighteningSchedule& schedule,
                                const VectorXd& x) {
    spec.validate();
    return build_tight_drmpc_qp(spec, PredictionModel(spec, schedule.options.scenario_cap), schedule,
                                x);
}

MpcProgram build_tight_drmpc_qp(const ControlProblemSpec& spec, const PredictionModel& model,
                                const TighteningSchedule& schedule, const VectorXd& x) {
    check_state(spec, x);
    check_schedule(spec, schedule);
    StatePlan state;
    for (int k = 1; k <= spec.horizon; ++k) {
        state.margins.push_back(norm_margin(spec.sys, spec.state_con, spec.disturbance,
                                            schedule.tail[static_cast<std::size_t>(k - 1)], k));
    }
    return assemble(spec, model, x, tvd_cost(spec.alpha), state);
}

double smpc_big_m(const ControlProblemSpec& spec, const VectorXd& x) {
    check_state(spec, x);
    const double ubound = input_bounds(spec.input_con).maxCoeff();
    const double dmax = spec.disturbance.max_abs();
    const auto& A = spec.sys.A;
    MatrixXd Ai = MatrixXd::Identity(A.rows(), A.cols());
    double xbound = x.lpNorm<Eigen::Infinity>();
    double driven = 0.0;
    for (int k = 1; k <= spec.horizon; ++k) {
        driven += (Ai * spec.sys.B).cwiseAbs().rowwise().sum().maxCoeff() * ubound +
                  (Ai * spec.sys.D).cwiseAbs().rowwise().sum().maxCoeff() * dmax;
        Ai = A * Ai;
        xbound = std::max(xbound, Ai.cwiseAbs().rowwise().sum().maxCoeff() * x.lpNorm<Eigen::Infinity>() + driven);
    }
    const double Fnorm = spec.state_con.F.cwiseAbs().rowwise().sum().maxCoeff();
    return 2.0 * (Fnorm * xbound + spec.state_con.g.lpNorm<Eigen::Infinity>());
}

MpcProgram build_smpc_miqp(const ControlProblemSpec& spec, const VectorXd& x,
                           const ControllerOptions& options) {
    spec.validate(true);
    return build_smpc_miqp(spec, PredictionModel(spec, options.scenario_cap), x, options);
}

MpcProgram build_smpc_miqp(const ControlProblemSpec& spec, const PredictionModel& model,
                           const VectorXd& x, const ControllerOptions& options) {
    check_state(spec, x);
    StatePlan state;
    state.form = StatePlan::Form::chance;
    state.epsilon = spec.epsilon;
    if (spec.epsilon < 1.0) {
        state.big_m = options.big_m > 0.0 ? options.big_m : smpc_big_m(spec, x);
        state.input_bounds = input_bounds(spec.input_con);
    }
    return assemble(spec, model, x, CostPlan{}, state);
}

MpcProgram build_cvar_mpc_qp(const ControlProblemSpec& spec, const VectorXd& x,
                             const ControllerOptions& options) {
    spec.validate();
    return build_cvar_mpc_qp(spec, PredictionModel(spec, options.scenario_cap), x, options);
}

MpcProgram build_cvar_mpc_qp(const ControlProblemSpec& spec, const PredictionModel& model,
                             const VectorXd& x, const ControllerOptions& options) {
    check_state(spec, x);
    StatePlan state;
    state.form = StatePlan::Form::cvar_epigraph;
    state.tails.assign(static_cast<std::size_t>(spec.horizon),
                       tail_mass(spec.epsilon, 0.0, options.tail_convention));
    return assemble(spec, model, x, cvar_cost(spec.alpha), state);
}

double evaluate_cost_oracle(const ControlProblemSpec& spec, const VectorXd& x, const VectorXd& u,
                            std::size_t scenario_cap) {
    // The oracle also covers the alpha = 1 worst-case limit.
    if (!(spec.alpha >= 0.0 && spec.alpha <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
    ControlProblemSpec checked = spec;
    checked.alpha = 0.0;
    checked.validate(true);
    check_state(spec, x);
    const int N = spec.horizon;
    const Index nu = spec.sys.nu();
    if (u.size() != N * nu) throw DimensionError("input sequence has the wrong length");
    const ScenarioSet set(spec.disturbance, N, scenario_cap);
    VectorXd costs(static_cast<Index>(set.size()));
    for (std::size_t s = 0; s < set.size(); ++s) {
        const MatrixXd traj = propagate_disturbed(spec.sys, x, u, set.stacked(s));
        double c = 0.0;
        for (int k = 0; k < N; ++k) {
            const VectorXd xk = traj.col(k + 1);
            const VectorXd uk = u.segment(k * nu, nu);
            c += xk.dot(spec.Q * xk) + uk.dot(spec.R * uk);
        }
        costs(static_cast<Index>(s)) = c;
    }
    return tvd_risk(costs, set.joint_probs(), spec.alpha);
}

std::string_view to_string(StepStatus status) {
    switch (status) {
        case StepStatus::optimal: return "optimal";
        case StepStatus::suboptimal: return "suboptimal";
        case StepStatus::infeasible: return "infeasible";
        case StepStatus::failed: return "failed";
    }
    return "unknown";
}

MpcController::MpcController(ControllerKind kind, ControlProblemSpec spec,
                             std::optional<TighteningSchedule> schedule)
    : kind_(std::move(kind)),
      spec_(std::move(spec)),
      schedule_(std::move(schedule)),
      model_(validated(kind_, spec_), kind_.options.scenario_cap) {
    if (kind_.tag == ControllerTag::drmpc || kind_.tag == ControllerTag::tight_drmpc) {
        if (!schedule_) throw DomainError(std::string(to_string(kind_.tag)) + " needs a tightening schedule");
        check_schedule(spec_, *schedule_);
    }
}

MpcProgram MpcController::build(const VectorXd& x) const {
    switch (kind_.tag) {
        case ControllerTag::drmpc: return build_drmpc_qp(spec_, model_, *schedule_, x);
        case ControllerTag::tight_drmpc: return build_tight_drmpc_qp(spec_, model_, *schedule_, x);
        case ControllerTag::smpc: return build_smpc_miqp(spec_, model_, x, kind_.options);
        case ControllerTag::cvar_mpc: return build_cvar_mpc_qp(spec_, model_, x, kind_.options);
    }
    throw DomainError("unknown controller tag");
}

MpcStepResult MpcController::step(const VectorXd& x) const {
    const auto start = std::chrono::steady_clock::now();
    const MpcProgram prog = build(x);
    const QpProblem& qp = prog.qp;
    const QpSolution sol = qp.binaries.empty() ? solve_qp(qp, kind_.options.solver)
                                               : solve_miqp(qp, kind_.options.solver);
    const auto stop = std::chrono::steady_clock::now();

    MpcStepResult r;
    r.solve_seconds = std::chrono::duration<double>(stop - start).count();
    r.solver_status = sol.status;
    r.nodes = sol.nodes;
    r.variables = qp.num_vars();
    r.constraints = qp.num_ineq();
    switch (sol.status) {
        case QpStatus::optimal: r.status = StepStatus::optimal; break;
        case QpStatus::infeasible: r.status = StepStatus::infeasible; break;
        case QpStatus::unbounded: r.status = StepStatus::failed; break;
        case QpStatus::max_iter: {
            // A stopped integer search still carries a feasible incumbent.
            r.status = StepStatus::failed;
            if (!qp.binaries.empty() && sol.x.size() == qp.num_vars()) {
                bool integral = true;
                for (Index bidx : qp.binaries) {
                    integral = integral && std::min(std::abs(sol.x(bidx)), std::abs(1.0 - sol.x(bidx))) <=
                                               kind_.options.solver.integrality_tolerance;
                }
                if (integral && verify_kkt(qp, sol).primal <= kind_.options.solver.kkt_tolerance) {
                    r.status = StepStatus::suboptimal;
                }
            }
            break;
        }
    }
    if (!r.usable()) return r;

    const DecisionLayout& L = prog.layout;
    const Index nu = spec_.sys.nu();
    r.inputs = sol.x.head(L.inputs);
    r.u0 = r.inputs.head(nu);
    r.objective = sol.objective;
    if (L.m >= 0) r.m = sol.x(L.m);
    if (L.z >= 0) r.z = sol.x(L.z);
    r.s = L.s_begin >= 0 ? VectorXd(sol.x.segment(L.s_begin, static_cast<Index>(L.s_scenario.size())))
                         : VectorXd();
    return r;
}

MpcStepResult receding_horizon_step(const ControllerKind& kind, const ControlProblemSpec& spec,
                                    const TighteningSchedule& schedule, const VectorXd& x) {
    return MpcController(kind, spec, schedule).step(x);
}

}  // namespace drmpc
