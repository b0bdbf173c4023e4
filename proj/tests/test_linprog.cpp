#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "effpipe/linprog.hpp"
#include "oracles/generators.hpp"
#include "oracles/lp_vertex_oracle.hpp"

using namespace effpipe;

namespace {

LpProblem single_var(double rhs) {
    LpProblem p;
    p.sense = Sense::maximize;
    p.objective = {1.0};
    p.constraints = {{{1.0}, Relation::less_equal, rhs}};
    return p;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

TEST(SolveLp, MaximizeBoundedSingleVariable) {
    auto s = solve_lp(single_var(1.0));
    ASSERT_EQ(s.status, LpStatus::optimal);
    EXPECT_DOUBLE_EQ(s.objective_value, 1.0);
    ASSERT_EQ(s.primal.size(), 1u);
    EXPECT_DOUBLE_EQ(s.primal[0], 1.0);
    ASSERT_EQ(s.dual.size(), 1u);
    EXPECT_DOUBLE_EQ(s.dual[0], 1.0);
}

TEST(SolveLp, NegativeUpperBoundIsInfeasible) {
    EXPECT_EQ(solve_lp(single_var(-1.0)).status, LpStatus::infeasible);
}

TEST(SolveLp, UnboundedRay) {
    LpProblem p;
    p.objective = {1.0, 1.0};
    p.constraints = {{{1.0, -1.0}, Relation::less_equal, 1.0}};
    EXPECT_EQ(solve_lp(p).status, LpStatus::unbounded);
}

TEST(SolveLp, NoConstraints) {
    LpProblem p;
    p.sense = Sense::minimize;
    p.objective = {2.0, 3.0};
    auto s = solve_lp(p);
    ASSERT_EQ(s.status, LpStatus::optimal);
    EXPECT_EQ(s.objective_value, 0.0);
}

TEST(SolveLp, FreeVariableReachesNegativeValues) {
    LpProblem p;
    p.sense = Sense::minimize;
    p.objective = {1.0};
    p.constraints = {{{1.0}, Relation::greater_equal, -3.0}};
    p.lower_bounds = {-std::numeric_limits<double>::infinity()};
    auto s = solve_lp(p);
    ASSERT_EQ(s.status, LpStatus::optimal);
    EXPECT_NEAR(s.primal[0], -3.0, 1e-12);
    EXPECT_NEAR(s.dual[0], 1.0, 1e-12);
}

TEST(SolveLp, FiniteLowerBoundShift) {
    LpProblem p;
    p.sense = Sense::minimize;
    p.objective = {1.0, 1.0};
    p.constraints = {{{1.0, 1.0}, Relation::greater_equal, 1.0}};
    p.lower_bounds = {2.0, 0.5};
    auto s = solve_lp(p);
    ASSERT_EQ(s.status, LpStatus::optimal);
    EXPECT_NEAR(s.objective_value, 2.5, 1e-12);
    EXPECT_NEAR(s.primal[0], 2.0, 1e-12);
    EXPECT_NEAR(s.primal[1], 0.5, 1e-12);
}

TEST(SolveLp, EqualityConstraintsAndRedundantRow) {
    LpProblem p;
    p.objective = {1.0, 2.0};
    p.constraints = {{{1.0, 1.0}, Relation::equal, 4.0},
                     {{2.0, 2.0}, Relation::equal, 8.0},
                     {{0.0, 1.0}, Relation::less_equal, 3.0}};
    auto s = solve_lp(p);
    ASSERT_EQ(s.status, LpStatus::optimal);
    EXPECT_NEAR(s.objective_value, 7.0, 1e-12);
}

// Beale's example cycles under textbook Dantzig pricing.
TEST(SolveLp, BealeCyclingExampleTerminates) {
    LpProblem p;
    p.sense = Sense::minimize;
    p.objective = {-0.75, 20.0, -0.5, 6.0};
    p.constraints = {{{0.25, -8.0, -1.0, 9.0}, Relation::less_equal, 0.0},
                     {{0.5, -12.0, -0.5, 3.0}, Relation::less_equal, 0.0},
                     {{0.0, 0.0, 1.0, 0.0}, Relation::less_equal, 1.0}};
    auto s = solve_lp(p);
    ASSERT_EQ(s.status, LpStatus::optimal);
    EXPECT_NEAR(s.objective_value, -1.25, 1e-12);
}

TEST(SolveLp, HeavilyDegenerateAssignmentPolytope) {
    // 4x4 assignment LP: every vertex is highly degenerate.
    const int k = 4;
    LpProblem p;
    p.sense = Sense::maximize;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) p.objective.push_back(((i * 7 + j * 3) % 5) + 1.0);
    for (int i = 0; i < k; ++i) {
        Constraint row, col;
        row.coefficients.assign(k * k, 0.0);
        col.coefficients.assign(k * k, 0.0);
        for (int j = 0; j < k; ++j) {
            row.coefficients[i * k + j] = 1.0;
            col.coefficients[j * k + i] = 1.0;
        }
        row.relation = col.relation = Relation::equal;
        row.rhs = col.rhs = 1.0;
        p.constraints.push_back(row);
        p.constraints.push_back(col);
    }
    auto s = solve_lp(p);
    ASSERT_EQ(s.status, LpStatus::optimal);
    // Brute force over permutations.
    std::vector<int> perm{0, 1, 2, 3};
    double best = -1;
    do {
        double v = 0;
        for (int i = 0; i < k; ++i) v += p.objective[i * k + perm[i]];
        best = std::max(best, v);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(s.objective_value, best, 1e-9);
}

TEST(SolveLp, DimensionMismatchIsUsageError) {
    LpProblem p;
    p.objective = {1.0, 1.0};
    p.constraints = {{{1.0}, Relation::less_equal, 1.0}};
    EXPECT_THROW(solve_lp(p), UsageError);
    p.constraints = {{{1.0, std::nan("")}, Relation::less_equal, 1.0}};
    EXPECT_THROW(solve_lp(p), UsageError);
}

TEST(SolveLp, MatchesVertexEnumerationOracle) {
    RandomStream rng(20240611);
    int optimal = 0, infeasible = 0, unbounded = 0;
    for (int trial = 0; trial < 400; ++trial) {
        auto p = gen::random_lp(rng);
        auto expected = oracle::solve_by_enumeration(p);
        auto got = solve_lp(p);
        ASSERT_EQ(got.status, expected.status) << "trial " << trial << "\n" << to_lp_text(p);
        if (got.status == LpStatus::optimal) {
            EXPECT_NEAR(got.objective_value, expected.objective, 1e-8) << to_lp_text(p);
            ++optimal;
        } else if (got.status == LpStatus::infeasible) {
            ++infeasible;
        } else {
            ++unbounded;
        }
    }
    // The generator must exercise all three outcomes.
    EXPECT_GT(optimal, 50);
    EXPECT_GT(infeasible, 10);
    EXPECT_GT(unbounded, 10);
}

TEST(SolveLp, StrongDualityAndComplementarySlackness) {
    RandomStream rng(77);
    int checked = 0;
    for (int trial = 0; trial < 400; ++trial) {
        auto p = gen::random_lp(rng);
        auto s = solve_lp(p);
        if (s.status != LpStatus::optimal) continue;
        ++checked;
        std::vector<double> b;
        for (const auto& c : p.constraints) b.push_back(c.rhs);
        const double scale = std::max(1.0, std::abs(s.objective_value));
        EXPECT_LE(std::abs(s.objective_value - dot(b, s.dual)) / scale, 1e-6);

        const bool maximize = p.sense == Sense::maximize;
        for (std::size_t i = 0; i < p.constraints.size(); ++i) {
            const auto& c = p.constraints[i];
            const double slack = c.rhs - dot(c.coefficients, s.primal);
            EXPECT_LE(std::abs(s.dual[i] * slack), 1e-6);
            // Dual sign conventions.
            if (c.relation == Relation::less_equal) {
                EXPECT_GE(maximize ? s.dual[i] : -s.dual[i], -1e-9);
            } else if (c.relation == Relation::greater_equal) {
                EXPECT_LE(maximize ? s.dual[i] : -s.dual[i], 1e-9);
            }
            // Primal feasibility.
            if (c.relation == Relation::less_equal) {
                EXPECT_GE(slack, -1e-7 * std::max(1.0, std::abs(c.rhs)));
            } else if (c.relation == Relation::greater_equal) {
                EXPECT_LE(slack, 1e-7 * std::max(1.0, std::abs(c.rhs)));
            }
        }
        for (std::size_t j = 0; j < p.variable_count(); ++j) {
            double reduced = p.objective[j];
            for (std::size_t i = 0; i < p.constraints.size(); ++i)
                reduced -= p.constraints[i].coefficients[j] * s.dual[i];
            EXPECT_LE(std::abs(reduced * s.primal[j]), 1e-6);
            EXPECT_GE(s.primal[j], 0.0);
        }
    }
    EXPECT_GT(checked, 50);
}

TEST(SolveLp, RowPermutationInvariance) {
    RandomStream rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        auto p = gen::random_lp(rng);
        auto s = solve_lp(p);
        auto q = p;
        std::reverse(q.constraints.begin(), q.constraints.end());
        if (q.constraints.size() > 2) std::rotate(q.constraints.begin(), q.constraints.begin() + 1, q.constraints.end());
        auto t = solve_lp(q);
        ASSERT_EQ(s.status, t.status);
        if (s.status == LpStatus::optimal) {
            EXPECT_NEAR(s.objective_value, t.objective_value, 1e-9);
        }
    }
}

TEST(SolveLp, DeterministicForIdenticalInput) {
    RandomStream rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto p = gen::random_lp(rng);
        auto a = solve_lp(p), b = solve_lp(p);
        EXPECT_EQ(a.status, b.status);
        EXPECT_EQ(a.primal, b.primal);
        EXPECT_EQ(a.dual, b.dual);
    }
}

TEST(LpText, DumpsReadableProblem) {
    LpProblem p;
    p.objective = {1.0, -2.0};
    p.constraints = {{{1.0, 1.0}, Relation::less_equal, 4.0}, {{1.0, 0.0}, Relation::greater_equal, 1.0}};
    p.lower_bounds = {0.0, -std::numeric_limits<double>::infinity()};
    const auto text = to_lp_text(p);
    EXPECT_NE(text.find("Maximize"), std::string::npos);
    EXPECT_NE(text.find("obj: 1 x0 - 2 x1"), std::string::npos);
    EXPECT_NE(text.find("c0: 1 x0 + 1 x1 <= 4"), std::string::npos);
    EXPECT_NE(text.find("c1: 1 x0 >= 1"), std::string::npos);
    EXPECT_NE(text.find("x1 free"), std::string::npos);
}
