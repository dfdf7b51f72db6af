#include "drmpc/dynamics.hpp"
#include "drmpc/errors.hpp"
#include "generators.hpp"

#include <gtest/gtest.h>

namespace drmpc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using testing::Gen;

LinearSystemModel benchmark() {
    LinearSystemModel sys;
    sys.A.resize(2, 2);
    sys.A << 1.0475, -0.0463, 0.0463, 0.9690;
    sys.B.resize(2, 1);
    sys.B << 0.028, -0.0195;
    sys.D = sys.B;
    return sys;
}

DiscreteDistribution benchmark_pmf() {
    return DiscreteDistribution::scalar({-1.0, 0.0, 1.0}, {0.1, 0.8, 0.1});
}

LinearSystemModel random_system(Gen& gen) {
    const int nx = gen.integer(1, 4), nu = gen.integer(1, 4), nd = gen.integer(1, 3);
    return {gen.matrix(nx, nx), gen.matrix(nx, nu), gen.matrix(nx, nd)};
}

TEST(BatchMatrices, SingleStepIsIdentityMap) {
    const auto sys = benchmark();
    const BatchMatrices b = batch_matrices(sys, 1);
    EXPECT_EQ(b.Bk, sys.B);
    EXPECT_EQ(b.Dk, sys.D);
    EXPECT_EQ(b.Ak, sys.A);
}

TEST(BatchMatrices, BenchmarkTwoSteps) {
    const BatchMatrices b = batch_matrices(benchmark(), 2);
    EXPECT_NEAR(b.Bk(0, 0), 0.0302, 5e-5);
    EXPECT_NEAR(b.Bk(1, 0), -0.0176, 5e-5);
    EXPECT_NEAR(b.Bk(0, 0), 1.0475 * 0.028 + 0.0463 * 0.0195, 1e-15);
    EXPECT_EQ(b.Bk(0, 1), 0.028);
    EXPECT_EQ(b.Bk(1, 1), -0.0195);
}

TEST(BatchMatrices, IdentityDynamicsRepeatB) {
    LinearSystemModel sys{MatrixXd::Identity(2, 2), MatrixXd::Ones(2, 1), MatrixXd::Ones(2, 1)};
    const BatchMatrices b = batch_matrices(sys, 3);
    for (int j = 0; j < 3; ++j) EXPECT_EQ(MatrixXd(b.Bk.col(j)), sys.B);
}

TEST(BatchMatrices, RejectsNonPositiveHorizon) {
    EXPECT_THROW(batch_matrices(benchmark(), 0), DomainError);
}

TEST(LinearSystemModel, RejectsBadDimensions) {
    LinearSystemModel sys{MatrixXd::Identity(2, 2), MatrixXd::Ones(3, 1), MatrixXd::Ones(2, 1)};
    EXPECT_THROW(sys.validate(), DimensionError);
}

TEST(EnumerateScenarios, EmptyHorizon) {
    const ScenarioSet s = enumerate_scenarios(benchmark_pmf(), 0);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s.prob(0), 1.0);
    EXPECT_EQ(s.stacked(0).size(), 0);
}

TEST(EnumerateScenarios, BenchmarkTwoSteps) {
    const ScenarioSet s = enumerate_scenarios(benchmark_pmf(), 2);
    ASSERT_EQ(s.size(), 9u);
    // lexicographic: (0,0) in atom indices is (-1,-1); the middle atom pair is index 4
    EXPECT_NEAR(s.prob(4), 0.64, 1e-15);
    EXPECT_EQ(s.stacked(4), VectorXd::Zero(2));
    EXPECT_EQ(s.stacked(0), VectorXd::Constant(2, -1.0));
    EXPECT_EQ(s.stacked(1)(0), -1.0);
    EXPECT_EQ(s.stacked(1)(1), 0.0);
    EXPECT_NEAR(s.joint_probs().sum(), 1.0, 1e-12);
}

TEST(EnumerateScenarios, CapacityError) {
    try {
        enumerate_scenarios(benchmark_pmf(), 12, 1000);
        FAIL() << "expected CapacityError";
    } catch (const CapacityError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("J=3"), std::string::npos);
        EXPECT_NE(msg.find("k=12"), std::string::npos);
        EXPECT_NE(msg.find("1000"), std::string::npos);
    }
    EXPECT_THROW(enumerate_scenarios(benchmark_pmf(), 12), CapacityError);
    EXPECT_NO_THROW(enumerate_scenarios(benchmark_pmf(), 11));  // 177147 <= 2e5
}

TEST(EnumerateScenarios, MarginalsAndNormalization) {
    Gen gen(41);
    for (int trial = 0; trial < 30; ++trial) {
        const int J = gen.integer(1, 5);
        const int k = gen.integer(1, 5);
        const VectorXd p = gen.pmf(J, true);
        std::vector<VectorXd> atoms;
        for (int j = 0; j < J; ++j) atoms.push_back(VectorXd::Constant(1, j));
        const DiscreteDistribution d(atoms, p);
        const ScenarioSet s = enumerate_scenarios(d, k);
        EXPECT_NEAR(s.joint_probs().sum(), 1.0, 1e-12);
        for (int step = 0; step < k; ++step) {
            VectorXd marginal = VectorXd::Zero(J);
            for (std::size_t sc = 0; sc < s.size(); ++sc) marginal(static_cast<Eigen::Index>(s.atom_index(sc, step))) += s.prob(sc);
            EXPECT_LE((marginal - p).lpNorm<Eigen::Infinity>(), 1e-12);
        }
    }
}

TEST(EnumerateScenarios, StableOrdering) {
    const ScenarioSet a = enumerate_scenarios(benchmark_pmf(), 4);
    const ScenarioSet b = enumerate_scenarios(benchmark_pmf(), 4);
    EXPECT_EQ(a.indices(), b.indices());
    EXPECT_EQ(a.joint_probs(), b.joint_probs());
}

TEST(Propagation, ZeroInputIdentityIsConstant) {
    LinearSystemModel sys{MatrixXd::Identity(2, 2), MatrixXd::Ones(2, 1), MatrixXd::Ones(2, 1)};
    VectorXd x0(2);
    x0 << 1.5, -2.0;
    const MatrixXd traj = propagate_nominal(sys, x0, VectorXd::Zero(5));
    ASSERT_EQ(traj.cols(), 6);
    for (int k = 0; k <= 5; ++k) EXPECT_EQ(VectorXd(traj.col(k)), x0);
}

TEST(Propagation, BenchmarkOneStep) {
    const auto sys = benchmark();
    VectorXd x0(2);
    x0 << 3.1, 3.0;
    const MatrixXd traj = propagate_nominal(sys, x0, VectorXd::Zero(1));
    EXPECT_LE((traj.col(1) - sys.A * x0).norm(), 1e-15);
}

TEST(Propagation, BenchmarkDisturbanceOffset) {
    const auto sys = benchmark();
    const VectorXd ones = VectorXd::Ones(2);
    const MatrixXd traj = propagate_disturbed(sys, VectorXd::Zero(2), VectorXd::Zero(2), ones);
    const VectorXd expected = sys.A * sys.D + sys.D;
    EXPECT_LE((traj.col(2) - expected).norm(), 1e-15);
    EXPECT_LE((disturbance_offset(sys, ones) - expected).norm(), 1e-15);
}

TEST(Propagation, ZeroDisturbanceMatchesNominal) {
    const auto sys = benchmark();
    VectorXd x0(2);
    x0 << 3.5, 3.2;
    VectorXd u(3);
    u << 1.0, -2.0, 0.5;
    EXPECT_EQ(propagate_disturbed(sys, x0, u, VectorXd::Zero(3)), propagate_nominal(sys, x0, u));
}

TEST(Propagation, BatchAndRecursionAgree) {
    Gen gen(42);
    for (int trial = 0; trial < 200; ++trial) {
        const LinearSystemModel sys = random_system(gen);
        const int k = gen.integer(1, 6);
        const VectorXd x0 = gen.vector(sys.nx());
        const VectorXd u = gen.vector(k * sys.nu());
        const VectorXd d = gen.vector(k * sys.nd());
        const BatchMatrices b = batch_matrices(sys, k);
        const MatrixXd nominal = propagate_nominal(sys, x0, u);
        const MatrixXd disturbed = propagate_disturbed(sys, x0, u, d);
        const VectorXd batch_nominal = b.Ak * x0 + b.Bk * u;
        EXPECT_LE((nominal.col(k) - batch_nominal).lpNorm<Eigen::Infinity>(), 1e-9);
        EXPECT_LE((disturbed.col(k) - batch_nominal - b.Dk * d).lpNorm<Eigen::Infinity>(), 1e-9);
        EXPECT_LE((disturbed.col(k) - nominal.col(k) - disturbance_offset(sys, d)).lpNorm<Eigen::Infinity>(),
                  1e-10);
    }
}

TEST(Propagation, DimensionErrors) {
    const auto sys = benchmark();
    EXPECT_THROW(propagate_nominal(sys, VectorXd::Zero(3), VectorXd::Zero(2)), DimensionError);
    EXPECT_THROW(propagate_disturbed(sys, VectorXd::Zero(2), VectorXd::Zero(2), VectorXd::Zero(3)),
                 DimensionError);
}

}  // namespace
}  // namespace drmpc
