#include "drmpc/errors.hpp"
#include "drmpc/risk.hpp"
#include "generators.hpp"

#include <gtest/gtest.h>

#include <algorithm>

namespace drmpc {
namespace {

using Eigen::VectorXd;
using testing::Gen;

VectorXd vec(std::initializer_list<double> v) {
    VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

const VectorXd kPmf = vec({0.1, 0.8, 0.1});
const VectorXd kAbsDelta = vec({1.0, 0.0, 1.0});

TEST(DiscreteDistribution, ValidatesMasses) {
    EXPECT_THROW(DiscreteDistribution::scalar({0, 1}, {0.5, 0.6}), DomainError);
    EXPECT_THROW(DiscreteDistribution::scalar({0, 1}, {1.2, -0.2}), DomainError);
    EXPECT_THROW(DiscreteDistribution::scalar({0, 1}, {1.0}), DimensionError);
    EXPECT_THROW(DiscreteDistribution::scalar({}, {}), DimensionError);
    EXPECT_NO_THROW(DiscreteDistribution::scalar({-1, 0, 1}, {0.1, 0.8, 0.1}));
}

TEST(Expectation, Examples) {
    EXPECT_DOUBLE_EQ(expectation(vec({5}), vec({1})), 5.0);
    EXPECT_DOUBLE_EQ(expectation(vec({0, 0, 0}), kPmf), 0.0);
    EXPECT_NEAR(expectation(kAbsDelta, kPmf), 0.2, 1e-15);
    EXPECT_THROW(expectation(vec({1, 2}), kPmf), DimensionError);
}

TEST(VarTail, Examples) {
    EXPECT_EQ(var_tail(vec({0, 1}), vec({0.8, 0.2}), 0.2), 0.0);
    for (double t : {0.01, 0.5, 1.0}) EXPECT_EQ(var_tail(vec({7}), vec({1}), t), 7.0);
    EXPECT_EQ(var_tail(vec({1, 2, 3}), vec({1.0 / 3, 1.0 / 3, 1.0 / 3}), 1.0 / 3), 2.0);
    EXPECT_THROW(var_tail(vec({1}), vec({1}), 0.0), DomainError);
}

TEST(CvarTail, Examples) {
    EXPECT_NEAR(cvar_tail(kAbsDelta, kPmf, 0.2), 1.0, 1e-15);
    EXPECT_NEAR(cvar_tail_lp(kAbsDelta, kPmf, 0.2), 1.0, 1e-10);
    EXPECT_NEAR(cvar_tail(kAbsDelta, kPmf, 1.0), 0.2, 1e-15);
    EXPECT_NEAR(cvar_tail(vec({7}), vec({1}), 0.5), 7.0, 1e-15);
}

TEST(CvarTail, ZeroTailReturnsSupremumWithFlag) {
    const CvarValue v = cvar_tail_ex(vec({0.0, 3.0, 1.0}), vec({0.5, 0.1, 0.4}), 0.0);
    EXPECT_TRUE(v.degenerate);
    EXPECT_EQ(v.value, 3.0);
    EXPECT_FALSE(cvar_tail_ex(kAbsDelta, kPmf, 0.3).degenerate);
}

TEST(CvarTail, LinearProgramMatchesClosedForm) {
    Gen gen(21);
    for (int trial = 0; trial < 100; ++trial) {
        const int J = gen.integer(1, 12);
        const VectorXd p = gen.pmf(J, trial % 3 == 0);
        const VectorXd c = gen.vector(J, -5.0, 5.0);
        const double t = gen.uniform(0.01, 1.0);
        EXPECT_NEAR(cvar_tail_lp(c, p, t), cvar_tail(c, p, t), 1e-10) << "trial " << trial;
    }
}

TEST(TvdRisk, Examples) {
    Gen gen(22);
    const VectorXd c = gen.vector(3);
    EXPECT_NEAR(tvd_risk(c, kPmf, 0.0), expectation(c, kPmf), 1e-15);
    EXPECT_EQ(tvd_risk(kAbsDelta, kPmf, 1.0), 1.0);
    EXPECT_NEAR(tvd_risk(vec({1, 0, 0}), vec({0.2, 0.4, 0.4}), 0.3), 0.5, 1e-12);
    EXPECT_NEAR(brute_force_tvd_sup(vec({1, 0, 0}), vec({0.2, 0.4, 0.4}), 0.3), 0.5, 1e-8);
}

TEST(BruteForceTvdSup, Examples) {
    Gen gen(23);
    const VectorXd c = gen.vector(3);
    EXPECT_NEAR(brute_force_tvd_sup(c, kPmf, 0.0), expectation(c, kPmf), 1e-8);
    EXPECT_NEAR(brute_force_tvd_sup(vec({0, 1}), vec({0.5, 0.5}), 0.2), 0.7, 1e-8);
}

TEST(WorstCaseDistribution, Examples) {
    const auto d = DiscreteDistribution::scalar({0, 1}, {0.5, 0.5});
    EXPECT_EQ(worst_case_distribution(vec({0, 1}), d, 0.0).probs(), d.probs());
    const VectorXd q = worst_case_distribution(vec({0, 1}), d, 0.2).probs();
    EXPECT_NEAR(q(0), 0.3, 1e-15);
    EXPECT_NEAR(q(1), 0.7, 1e-15);
    const VectorXd full = worst_case_probs(vec({2, 5, 1}), kPmf, 0.95);
    EXPECT_LE((full - vec({0, 1, 0})).lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(TvdDistance, Examples) {
    EXPECT_EQ(tvd_distance(kPmf, kPmf), 0.0);
    EXPECT_EQ(tvd_distance(vec({1, 0}), vec({0, 1})), 1.0);
    EXPECT_NEAR(tvd_distance(kPmf, vec({0.2, 0.7, 0.1})), 0.1, 1e-15);
    EXPECT_THROW(tvd_distance(kPmf, vec({1})), DimensionError);
}

TEST(SampleInTvdBall, ZeroRadiusIsIdentity) {
    const auto d = DiscreteDistribution::scalar({-1, 0, 1}, {0.1, 0.8, 0.1});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        EXPECT_EQ(sample_in_tvd_ball(d, 0.0, seed).probs(), d.probs());
    }
}

TEST(SampleInTvdBall, StaysInBallAndReachesBoundary) {
    Gen gen(24);
    for (int inst = 0; inst < 10; ++inst) {
        const int J = gen.integer(2, 6);
        std::vector<VectorXd> atoms;
        for (int j = 0; j < J; ++j) atoms.push_back(VectorXd::Constant(1, j));
        const DiscreteDistribution d(atoms, inst == 0 ? VectorXd(VectorXd::Constant(J, 1.0 / J)) : gen.pmf(J));
        // below the smallest mass no decrease is ever clipped
        const double alpha = inst == 0 ? 0.3 : gen.uniform(0.005, d.probs().minCoeff());
        double far = 0.0;
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            const DiscreteDistribution q = sample_in_tvd_ball(d, alpha, seed);
            const double dist = tvd_distance(d, q);
            ASSERT_LE(dist, alpha + 1e-12);
            ASSERT_GE(q.probs().minCoeff(), 0.0);
            far = std::max(far, dist);
        }
        EXPECT_GE(far, 0.95 * alpha) << "instance " << inst;
    }
}

TEST(SampleInTvdBall, BenchmarkBallBoundary) {
    const auto d = DiscreteDistribution::scalar({-1, 0, 1}, {0.1, 0.8, 0.1});
    for (double alpha : {0.1, 0.15, 0.5, 0.8}) {
        double far = 0.0;
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            far = std::max(far, tvd_distance(d, sample_in_tvd_ball(d, alpha, seed)));
        }
        EXPECT_GE(far, 0.95 * alpha) << "alpha " << alpha;
        EXPECT_LE(far, alpha + 1e-12);
    }
}

TEST(SampleInTvdBall, DeterministicInSeed) {
    const auto d = DiscreteDistribution::scalar({-1, 0, 1}, {0.1, 0.8, 0.1});
    EXPECT_EQ(sample_in_tvd_ball(d, 0.3, 42).probs(), sample_in_tvd_ball(d, 0.3, 42).probs());
    EXPECT_NE(sample_in_tvd_ball(d, 0.3, 42).probs(), sample_in_tvd_ball(d, 0.3, 43).probs());
}

TEST(SampleInTvdBall, AdversarialDelegates) {
    const auto d = DiscreteDistribution::scalar({-1, 0, 1}, {0.1, 0.8, 0.1});
    const VectorXd cost = vec({0.5, 0.0, 2.0});
    EXPECT_EQ(sample_in_tvd_ball(d, 0.3, 7, cost).probs(),
              worst_case_distribution(cost, d, 0.3).probs());
}

// --- properties -----------------------------------------------------------

struct Instance {
    VectorXd p, c, c2;
    double alpha, tail;
};

Instance draw(Gen& gen, int max_j) {
    const int J = gen.integer(1, max_j);
    return {gen.pmf(J, gen.uniform() < 0.3), gen.vector(J, -3.0, 3.0), gen.vector(J, -3.0, 3.0),
            gen.uniform(0.0, 0.99), gen.uniform(0.01, 1.0)};
}

TEST(RiskProperties, CoherenceAxioms) {
    Gen gen(31);
    for (int trial = 0; trial < 300; ++trial) {
        const Instance in = draw(gen, 10);
        const VectorXd bump = in.c + gen.vector(in.c.size(), 0.0, 1.0);
        const double a = gen.uniform(-2.0, 2.0);
        const double s = gen.uniform(0.0, 3.0);
        auto check = [&](auto risk) {
            EXPECT_LE(risk(in.c), risk(bump) + 1e-9);
            EXPECT_NEAR(risk(VectorXd(in.c.array() + a)), risk(in.c) + a, 1e-9);
            EXPECT_NEAR(risk(VectorXd(s * in.c)), s * risk(in.c), 1e-9);
            EXPECT_LE(risk(VectorXd(in.c + in.c2)), risk(in.c) + risk(in.c2) + 1e-9);
        };
        check([&](const VectorXd& v) { return cvar_tail(v, in.p, in.tail); });
        check([&](const VectorXd& v) { return tvd_risk(v, in.p, in.alpha); });
    }
}

TEST(RiskProperties, OrderingChain) {
    Gen gen(32);
    for (int trial = 0; trial < 300; ++trial) {
        const Instance in = draw(gen, 12);
        const double v = var_tail(in.c, in.p, in.tail);
        const double cv = cvar_tail(in.c, in.p, in.tail);
        EXPECT_LE(v, cv + 1e-12);
        EXPECT_LE(cv, in.c.maxCoeff() + 1e-12);
    }
}

TEST(RiskProperties, TvdRiskMatchesLinearProgram) {
    Gen gen(33);
    for (int trial = 0; trial < 120; ++trial) {
        const Instance in = draw(gen, 50);
        EXPECT_NEAR(tvd_risk(in.c, in.p, in.alpha), brute_force_tvd_sup(in.c, in.p, in.alpha), 1e-8)
            << "trial " << trial;
    }
}

TEST(RiskProperties, IndicatorClosedForm) {
    Gen gen(34);
    for (int trial = 0; trial < 300; ++trial) {
        const Instance in = draw(gen, 10);
        VectorXd ind(in.p.size());
        for (Eigen::Index j = 0; j < ind.size(); ++j) ind(j) = gen.uniform() < 0.4 ? 1.0 : 0.0;
        ind(0) = 1.0;  // nonempty event
        const double P = ind.dot(in.p);
        EXPECT_NEAR(tvd_risk(ind, in.p, in.alpha), std::min(P + in.alpha, 1.0), 1e-9);
    }
}

TEST(RiskProperties, WorstCaseAttainsTvdRisk) {
    Gen gen(35);
    for (int trial = 0; trial < 300; ++trial) {
        const Instance in = draw(gen, 12);
        const VectorXd q = worst_case_probs(in.c, in.p, in.alpha);
        EXPECT_NEAR(expectation(in.c, q), tvd_risk(in.c, in.p, in.alpha), 1e-9);
        EXPECT_LE(tvd_distance(in.p, q), in.alpha + 1e-12);
        EXPECT_NEAR(q.sum(), 1.0, 1e-12);
        EXPECT_GE(q.minCoeff(), 0.0);
    }
}

}  // namespace
}  // namespace drmpc
