#pragma once

// Control problems shared by the controller, campaign and acceptance tests.

#include "drmpc/controllers.hpp"
#include "drmpc/monte_carlo.hpp"
#include "generators.hpp"

#include <Eigen/Dense>

#include <vector>

namespace drmpc::testing {

inline LinearSystemModel benchmark_system() {
    LinearSystemModel sys;
    sys.A.resize(2, 2);
    sys.A << 1.0475, -0.0463, 0.0463, 0.9690;
    sys.B.resize(2, 1);
    sys.B << 0.028, -0.0195;
    sys.D = sys.B;
    return sys;
}

/// The two-state benchmark: |x_i| <= 4, |u| <= 20, delta in {-1, 0, 1}.
inline ControlProblemSpec benchmark_spec(double epsilon, double alpha) {
    ControlProblemSpec s;
    s.sys = benchmark_system();
    s.state_con = PolytopeConstraint::box(Eigen::VectorXd::Constant(2, -4.0),
                                          Eigen::VectorXd::Constant(2, 4.0));
    s.input_con = PolytopeConstraint::box(Eigen::VectorXd::Constant(1, -20.0),
                                          Eigen::VectorXd::Constant(1, 20.0));
    s.Q = Eigen::MatrixXd::Identity(2, 2);
    s.R = Eigen::MatrixXd::Constant(1, 1, 0.1);
    s.horizon = 4;
    s.epsilon = epsilon;
    s.alpha = alpha;
    s.disturbance = DiscreteDistribution::scalar({-1.0, 0.0, 1.0}, {0.1, 0.8, 0.1});
    return s;
}

/// Controller settings used on the benchmark: SMPC needs more than 64
/// binaries there, and the integer search is capped at 500 nodes.
inline ControllerKind benchmark_kind(ControllerTag tag) {
    ControllerKind k;
    k.tag = tag;
    k.options.solver.max_binaries = 128;
    k.options.solver.max_nodes = 500;
    return k;
}

/// Campaign over the benchmark with the unperturbed-world radius rule.
inline CampaignConfig benchmark_campaign(std::vector<GridCell> grid, int trials, int steps) {
    CampaignConfig c;
    c.spec = benchmark_spec(0.5, 0.1);
    for (ControllerTag t : {ControllerTag::smpc, ControllerTag::cvar_mpc, ControllerTag::drmpc,
                            ControllerTag::tight_drmpc}) {
        c.controllers.push_back(benchmark_kind(t));
    }
    c.grid = std::move(grid);
    c.trials = trials;
    c.steps = steps;
    c.x0_lo = Eigen::Vector2d(3.1, 3.0);
    c.x0_hi = Eigen::Vector2d(4.1, 4.0);
    c.master_seed = 20240501;
    c.perturbation = PerturbationMode::random_in_ball;
    c.schedule_options.zeta_mode = ZetaMode::paper_literal;
    return c;
}

struct RandomInstanceLimits {
    int max_states = 3;
    int max_atoms = 3;
    int max_horizon = 4;
    /// Half-width of the state box; small values make constraints bind.
    double state_bound = 25.0;
};

/// Random small control problem with a roughly stable A and a state x0 well
/// inside the box. The disturbance is scalar or two-dimensional.
inline ControlProblemSpec random_spec(Gen& g, Eigen::VectorXd& x0,
                                      const RandomInstanceLimits& lim = {}) {
    const int nx = g.integer(1, lim.max_states);
    const int nu = g.integer(1, 2);
    const int nd = g.integer(1, 2);
    const int J = g.integer(2, lim.max_atoms);
    ControlProblemSpec s;
    s.sys.A = g.matrix(nx, nx, -0.5, 0.5) + 0.6 * Eigen::MatrixXd::Identity(nx, nx);
    s.sys.B = g.matrix(nx, nu);
    s.sys.D = g.matrix(nx, nd, -0.5, 0.5);
    s.state_con = PolytopeConstraint::box(Eigen::VectorXd::Constant(nx, -lim.state_bound),
                                          Eigen::VectorXd::Constant(nx, lim.state_bound));
    s.input_con = PolytopeConstraint::box(Eigen::VectorXd::Constant(nu, -3.0),
                                          Eigen::VectorXd::Constant(nu, 3.0));
    const Eigen::MatrixXd q = g.matrix(nx, nx);
    s.Q = q * q.transpose() + 0.1 * Eigen::MatrixXd::Identity(nx, nx);
    s.R = g.uniform(0.05, 0.5) * Eigen::MatrixXd::Identity(nu, nu);
    s.horizon = g.integer(1, lim.max_horizon);
    s.alpha = g.uniform() < 0.2 ? 0.0 : g.uniform(0.0, 0.6);
    s.epsilon = g.uniform(s.alpha + 0.05, 0.95);
    std::vector<Eigen::VectorXd> atoms;
    for (int j = 0; j < J; ++j) atoms.push_back(g.vector(nd));
    s.disturbance = DiscreteDistribution(atoms, g.pmf(J));
    x0 = g.vector(nx, -2.0, 2.0);
    return s;
}

inline DiscreteDistribution point_mass(Eigen::Index nd) {
    return DiscreteDistribution({Eigen::VectorXd::Zero(nd)}, Eigen::VectorXd::Ones(1));
}

}  // namespace drmpc::testing
