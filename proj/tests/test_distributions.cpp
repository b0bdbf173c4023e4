#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "effpipe/distributions.hpp"
#include "oracles/partition_oracle.hpp"

using namespace effpipe;

TEST(IncompleteBeta, PolynomialCases) {
    // For integer a, b the function is a polynomial in x.
    EXPECT_NEAR(incomplete_beta(2, 2, 0.8), 0.896, 1e-14);
    EXPECT_NEAR(incomplete_beta(3, 2, 0.8), 0.8192, 1e-14);
    EXPECT_NEAR(incomplete_beta(2, 3, 0.8), 0.9728, 1e-14);
    EXPECT_NEAR(incomplete_beta(2, 2, 0.4), 0.352, 1e-14);
}

TEST(IncompleteBeta, NonIntegerReference) {
    EXPECT_NEAR(incomplete_beta(0.9, 0.9, 0.1), 0.11464699677582491921, 1e-12);
}

TEST(IncompleteBeta, ClosedFormFamilies) {
    for (double x = 0.01; x < 1.0; x += 0.049) {
        for (double b : {0.5, 1.0, 2.5, 7.0, 40.0}) {
            EXPECT_NEAR(incomplete_beta(1.0, b, x), 1.0 - std::pow(1.0 - x, b), 1e-12) << x << " " << b;
            EXPECT_NEAR(incomplete_beta(b, 1.0, x), std::pow(x, b), 1e-12) << x << " " << b;
        }
    }
}

TEST(IncompleteBeta, SymmetryAndEndpoints) {
    for (double x : {0.0, 0.05, 0.3, 0.5, 0.77, 0.999, 1.0}) {
        EXPECT_NEAR(incomplete_beta(3.5, 1.25, x) + incomplete_beta(1.25, 3.5, 1.0 - x), 1.0, 1e-13);
    }
    EXPECT_EQ(incomplete_beta(2, 3, 0.0), 0.0);
    EXPECT_EQ(incomplete_beta(2, 3, 1.0), 1.0);
    EXPECT_THROW(incomplete_beta(0, 1, 0.5), DomainError);
    EXPECT_THROW(incomplete_beta(1, 1, 1.5), DomainError);
}

TEST(FDistribution, TabulatedCriticalValue) {
    EXPECT_NEAR(f_cdf(3.40, 2, 24), 0.95, 5e-3);
    EXPECT_NEAR(f_cdf(3.40, 2, 24), oracle::f_cdf_by_quadrature(3.40, 2, 24), 1e-8);
}

TEST(FDistribution, TwoNumeratorDfClosedForm) {
    for (double d2 : {1.0, 4.0, 24.0, 100.0})
        for (double f : {0.1, 1.0, 3.4, 20.0, 500.0})
            EXPECT_NEAR(f_sf(f, 2, d2), std::pow(1.0 + 2.0 * f / d2, -d2 / 2.0), 1e-12);
}

TEST(FDistribution, MatchesQuadratureOracle) {
    for (double d1 : {1.0, 2.0, 3.0, 5.0})
        for (double d2 : {3.0, 10.0, 24.0})
            for (double f : {0.2, 1.0, 2.5, 6.0}) {
                EXPECT_NEAR(f_cdf(f, d1, d2), oracle::f_cdf_by_quadrature(f, d1, d2), 1e-6);
                EXPECT_NEAR(f_cdf(f, d1, d2) + f_sf(f, d1, d2), 1.0, 1e-13);
            }
}

TEST(FDistribution, SurvivalIsMonotoneAndBounded) {
    double prev = 1.0;
    for (double f = 0.0; f < 200.0; f += 0.37) {
        const double p = f_sf(f, 2, 24);
        EXPECT_LE(p, prev);
        EXPECT_GE(p, 0.0);
        prev = p;
    }
    EXPECT_EQ(f_sf(std::numeric_limits<double>::infinity(), 2, 24), 0.0);
    EXPECT_EQ(f_sf(0.0, 2, 24), 1.0);
}

TEST(StudentT, ClosedFormsForOneAndTwoDf) {
    for (double t : {0.0, 0.3, 1.0, 2.5, 12.0, -4.0}) {
        EXPECT_NEAR(student_t_two_tailed(t, 1), 1.0 - 2.0 / std::numbers::pi * std::atan(std::abs(t)), 1e-12);
        EXPECT_NEAR(student_t_two_tailed(t, 2), 1.0 - std::abs(t) / std::sqrt(2.0 + t * t), 1e-12);
    }
}

TEST(StudentT, LargeDfApproachesNormal) {
    // Two-sided normal tail at 1.959964 is 0.05.
    EXPECT_NEAR(student_t_two_tailed(1.959964, 1e6), 0.05, 1e-5);
}
