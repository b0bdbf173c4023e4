#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <numeric>

#include "effpipe/dea.hpp"
#include "oracles/dea_oracle.hpp"
#include "oracles/generators.hpp"

using namespace effpipe;

namespace {

CrossSection one_by_one(const std::vector<double>& x, const std::vector<double>& y) {
    CrossSection cs;
    cs.period = "p";
    cs.input_names = {"x"};
    cs.output_names = {"y"};
    cs.inputs.resize(static_cast<Eigen::Index>(x.size()), 1);
    cs.outputs.resize(static_cast<Eigen::Index>(y.size()), 1);
    for (std::size_t j = 0; j < x.size(); ++j) {
        cs.dmus.push_back(std::string(1, static_cast<char>('A' + j)));
        cs.inputs(static_cast<Eigen::Index>(j), 0) = x[j];
        cs.outputs(static_cast<Eigen::Index>(j), 0) = y[j];
    }
    return cs;
}

// Input-oriented VRS score for one input and one output: an optimal peer
// set has at most two members, so enumerate singles and bracketing pairs.
double vrs_one_by_one_oracle(const CrossSection& cs, Eigen::Index o) {
    const auto& x = cs.inputs.col(0);
    const auto& y = cs.outputs.col(0);
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        if (y(j) >= y(o)) best = std::min(best, x(j));
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            if (y(j) < y(o) && y(o) < y(k)) {
                const double w = (y(o) - y(j)) / (y(k) - y(j));
                best = std::min(best, (1 - w) * x(j) + w * x(k));
            }
        }
    }
    return best / x(o);
}

}  // namespace

TEST(SolveCcr, TwoDmuRatioExample) {
    auto cs = one_by_one({2.0, 4.0}, {4.0, 4.0});
    EXPECT_EQ(solve_ccr(cs, "A", Orientation::input).score, 1.0);
    EXPECT_NEAR(solve_ccr(cs, "B", Orientation::input).score, 0.5, 1e-12);
}

TEST(SolveCcr, SingleDmuIsItsOwnPeer) {
    auto cs = one_by_one({3.0}, {7.0});
    for (auto rts : {ReturnsToScale::crs, ReturnsToScale::vrs}) {
        auto r = solve_dea(cs, 0, rts, Orientation::input);
        EXPECT_EQ(r.score, 1.0);
        EXPECT_EQ(r.envelopment.lambdas, std::vector<double>{1.0});
    }
}

TEST(SolveCcr, MatchesRatioOracleOnRandomInstances) {
    RandomStream rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(20);
        auto cs = gen::random_cross_section(rng, n, 1, 1);
        auto expected = oracle::ratio_scores(cs);
        for (std::size_t d = 0; d < n; ++d) {
            EXPECT_NEAR(solve_dea(cs, d, ReturnsToScale::crs, Orientation::input).score, expected[d], 1e-9);
        }
    }
}

TEST(SolveCcr, DuplicatingEfficientDmuLeavesScoresUnchanged) {
    RandomStream rng(12);
    auto cs = gen::random_cross_section(rng, 8, 2, 2);
    auto before = solve_cross_section(cs, ReturnsToScale::crs, Orientation::input);
    const auto eff = std::find_if(before.begin(), before.end(), [](const auto& r) { return r.score == 1.0; });
    ASSERT_NE(eff, before.end());
    const auto idx = static_cast<Eigen::Index>(eff - before.begin());
    CrossSection dup = cs;
    dup.dmus.push_back("copy");
    dup.inputs.conservativeResize(9, Eigen::NoChange);
    dup.outputs.conservativeResize(9, Eigen::NoChange);
    dup.inputs.row(8) = cs.inputs.row(idx);
    dup.outputs.row(8) = cs.outputs.row(idx);
    auto after = solve_cross_section(dup, ReturnsToScale::crs, Orientation::input);
    for (std::size_t d = 0; d < 8; ++d) EXPECT_NEAR(after[d].score, before[d].score, 1e-9);
}

TEST(SolveCcr, OutputOrientationIsReciprocalUnderCrs) {
    RandomStream rng(13);
    auto cs = gen::random_cross_section(rng, 10, 3, 2);
    for (std::size_t d = 0; d < 10; ++d) {
        auto in = solve_dea(cs, d, ReturnsToScale::crs, Orientation::input);
        auto out = solve_dea(cs, d, ReturnsToScale::crs, Orientation::output);
        EXPECT_GE(out.score, 1.0);
        EXPECT_NEAR(out.efficiency(), in.score, 1e-9);
    }
}

TEST(SolveBcc, SmallInstanceAllBoundary) {
    auto cs = one_by_one({1.0, 2.0, 4.0}, {1.0, 3.0, 4.0});
    EXPECT_EQ(solve_bcc(cs, "A", Orientation::input).score, 1.0);
    for (Eigen::Index o = 0; o < 3; ++o) {
        EXPECT_NEAR(solve_dea(cs, static_cast<std::size_t>(o), ReturnsToScale::vrs, Orientation::input).score,
                    vrs_one_by_one_oracle(cs, o), 1e-9);
    }
}

TEST(SolveBcc, MatchesTwoPeerOracleOnRandomInstances) {
    RandomStream rng(14);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.below(12);
        auto cs = gen::random_cross_section(rng, n, 1, 1);
        for (std::size_t d = 0; d < n; ++d) {
            EXPECT_NEAR(solve_dea(cs, d, ReturnsToScale::vrs, Orientation::input).score,
                        vrs_one_by_one_oracle(cs, static_cast<Eigen::Index>(d)), 1e-9);
        }
    }
}

TEST(SolveBcc, NeverBelowCcrAndLambdasSumToOne) {
    RandomStream rng(15);
    for (int trial = 0; trial < 100; ++trial) {
        auto cs = gen::random_cross_section(rng, 2 + rng.below(10), 1 + rng.below(3), 1 + rng.below(3));
        for (std::size_t d = 0; d < cs.size(); ++d) {
            auto ccr = solve_dea(cs, d, ReturnsToScale::crs, Orientation::input);
            auto bcc = solve_dea(cs, d, ReturnsToScale::vrs, Orientation::input);
            EXPECT_GE(bcc.score, ccr.score - 1e-9);
            const double sum = std::accumulate(bcc.envelopment.lambdas.begin(), bcc.envelopment.lambdas.end(), 0.0);
            EXPECT_NEAR(sum, 1.0, 1e-9);
        }
    }
}

TEST(SolveDea, DualityAndWeightsAcrossModels) {
    RandomStream rng(16);
    for (int trial = 0; trial < 30; ++trial) {
        auto cs = gen::random_cross_section(rng, 10, 3, 2);
        for (auto rts : {ReturnsToScale::crs, ReturnsToScale::vrs}) {
            for (auto orient : {Orientation::input, Orientation::output}) {
                bool any_efficient = false;
                for (std::size_t d = 0; d < cs.size(); ++d) {
                    auto r = solve_dea(cs, d, rts, orient);
                    EXPECT_NEAR(r.multiplier_score, r.envelopment_score, 1e-6);
                    any_efficient |= r.score == 1.0;
                    const auto o = static_cast<Eigen::Index>(d);
                    double vx = 0, uy = 0;
                    for (Eigen::Index i = 0; i < 3; ++i) vx += r.weights.input_weights[static_cast<std::size_t>(i)] * cs.inputs(o, i);
                    for (Eigen::Index k = 0; k < 2; ++k) uy += r.weights.output_weights[static_cast<std::size_t>(k)] * cs.outputs(o, k);
                    if (orient == Orientation::input) {
                        EXPECT_NEAR(vx, 1.0, 1e-9);
                        EXPECT_NEAR(uy + r.weights.free_term, r.multiplier_score, 1e-9);
                    } else {
                        EXPECT_NEAR(uy, 1.0, 1e-9);
                        EXPECT_NEAR(vx + r.weights.free_term, r.multiplier_score, 1e-9);
                    }
                    for (double w : r.weights.input_weights) EXPECT_GE(w, 0.0);
                    for (double w : r.weights.output_weights) EXPECT_GE(w, 0.0);
                }
                EXPECT_TRUE(any_efficient);
            }
        }
    }
}

TEST(SolveDea, UnitsInvariance) {
    RandomStream rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        auto cs = gen::random_cross_section(rng, 10, 3, 2);
        for (auto rts : {ReturnsToScale::crs, ReturnsToScale::vrs}) {
            auto base = solve_cross_section(cs, rts, Orientation::input);
            for (double c : {1e-3, 1e3}) {
                for (int col = 0; col < 5; ++col) {
                    CrossSection scaled = cs;
                    if (col < 3) scaled.inputs.col(col) *= c;
                    else scaled.outputs.col(col - 3) *= c;
                    auto res = solve_cross_section(scaled, rts, Orientation::input);
                    for (std::size_t d = 0; d < cs.size(); ++d) EXPECT_NEAR(res[d].score, base[d].score, 1e-6);
                }
            }
        }
    }
}

TEST(SolveDea, DominatedInsertionChangesNothing) {
    RandomStream rng(18);
    for (int trial = 0; trial < 20; ++trial) {
        auto cs = gen::random_cross_section(rng, 8, 2, 2);
        for (auto rts : {ReturnsToScale::crs, ReturnsToScale::vrs}) {
            auto base = solve_cross_section(cs, rts, Orientation::input);
            const auto src = static_cast<Eigen::Index>(rng.below(8));
            CrossSection more = cs;
            more.dmus.push_back("dominated");
            more.inputs.conservativeResize(9, Eigen::NoChange);
            more.outputs.conservativeResize(9, Eigen::NoChange);
            more.inputs.row(8) = cs.inputs.row(src) * (1.0 + rng.uniform(0.0, 0.5));
            more.outputs.row(8) = cs.outputs.row(src) * (1.0 - rng.uniform(0.0, 0.5));
            auto res = solve_cross_section(more, rts, Orientation::input);
            for (std::size_t d = 0; d < 8; ++d) EXPECT_NEAR(res[d].score, base[d].score, 1e-9);
        }
    }
}

TEST(SolveDea, EfficientDmusWithoutSlackAreTheirOwnPeer) {
    RandomStream rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        auto cs = gen::random_cross_section(rng, 12, 2, 2);
        for (auto rts : {ReturnsToScale::crs, ReturnsToScale::vrs}) {
            auto res = solve_cross_section(cs, rts, Orientation::input);
            for (std::size_t d = 0; d < cs.size(); ++d) {
                if (res[d].score == 1.0 && !res[d].weakly_efficient) {
                    EXPECT_EQ(res[d].envelopment.lambdas[d], 1.0);
                    EXPECT_NEAR(std::accumulate(res[d].envelopment.lambdas.begin(), res[d].envelopment.lambdas.end(), 0.0), 1.0, 0);
                }
            }
        }
    }
}

TEST(SolveDea, WeakEfficiencyFlaggedBySlack) {
    // B uses more input for the same output as A along a CRS ray with a
    // second input: radially efficient (theta = 1) only through slack.
    CrossSection cs;
    cs.period = "p";
    cs.dmus = {"A", "B"};
    cs.input_names = {"x1", "x2"};
    cs.output_names = {"y"};
    cs.inputs.resize(2, 2);
    cs.inputs << 1.0, 1.0, 1.0, 2.0;
    cs.outputs.resize(2, 1);
    cs.outputs << 1.0, 1.0;
    auto b = solve_dea(cs, 1, ReturnsToScale::crs, Orientation::input);
    EXPECT_EQ(b.score, 1.0);
    EXPECT_TRUE(b.weakly_efficient);
    EXPECT_NEAR(b.envelopment.input_slacks[1], 1.0, 1e-9);
    EXPECT_NEAR(b.envelopment.lambdas[0], 1.0, 1e-9);
}

TEST(SolveDea, RejectsBadInput) {
    auto cs = one_by_one({1.0, 0.0}, {1.0, 1.0});
    EXPECT_THROW(solve_dea(cs, 0, ReturnsToScale::crs, Orientation::input), ValidationError);
    EXPECT_THROW(solve_ccr(one_by_one({1.0}, {1.0}), "Z", Orientation::input), LookupError);
}

namespace {

PanelDataset planted_panel(std::size_t dmus, std::size_t periods, bool constant) {
    std::vector<std::string> ds, ps;
    for (std::size_t d = 0; d < dmus; ++d) ds.push_back("D" + std::to_string(d));
    for (std::size_t p = 0; p < periods; ++p) ps.push_back(std::to_string(1998 + p));
    std::vector<VariableDef> schema{{"x", VariableRole::dea_input}, {"y", VariableRole::dea_output}};
    auto panel = PanelDataset::empty(ds, ps, schema);
    RandomStream rng(21);
    for (std::size_t d = 0; d < dmus; ++d) {
        const double base_x = rng.uniform(1, 5), base_y = rng.uniform(0.1, 0.9) * base_x;
        for (std::size_t p = 0; p < periods; ++p) {
            const double drift = constant ? 1.0 : rng.uniform(0.8, 1.1);
            panel.set(d, p, 0, base_x);
            // DMU 0 always has output/input ratio 1, everyone else < 1.
            panel.set(d, p, 1, d == 0 ? base_x : base_y * drift);
        }
    }
    return panel;
}

}  // namespace

TEST(RunPanelDea, ShapeAndPlantedDominantDmu) {
    auto panel = planted_panel(27, 10, false);
    DeaSpec spec{{"x"}, {"y"}};
    auto eff = run_panel_dea(panel, spec);
    EXPECT_EQ(eff.scores.rows(), 27);
    EXPECT_EQ(eff.scores.cols(), 10);
    ASSERT_EQ(eff.means.size(), 27u);
    EXPECT_EQ(eff.means[0], 1.0);
    for (std::size_t d = 1; d < 27; ++d) EXPECT_LT(eff.means[d], 1.0);
    EXPECT_TRUE((eff.scores.array() > 0.0).all() && (eff.scores.array() <= 1.0).all());
    // Means are the plain row averages.
    for (Eigen::Index d = 0; d < 27; ++d) {
        double sum = 0;
        for (Eigen::Index p = 0; p < 10; ++p) sum += eff.scores(d, p);
        EXPECT_EQ(eff.means[static_cast<std::size_t>(d)], sum / 10.0);
    }
}

TEST(RunPanelDea, ConstantDataGivesIdenticalPeriods) {
    auto eff = run_panel_dea(planted_panel(6, 10, true), DeaSpec{{"x"}, {"y"}});
    for (Eigen::Index d = 0; d < 6; ++d)
        for (Eigen::Index p = 1; p < 10; ++p) EXPECT_EQ(eff.scores(d, p), eff.scores(d, 0));
}

TEST(RunPanelDea, ErrorsCarryContext) {
    auto panel = planted_panel(4, 3, true);
    EXPECT_THROW(run_panel_dea(panel, DeaSpec{{"x"}, {"y"}}, {"2008"}), LookupError);
    panel.set(2, 1, 0, -1.0);
    try {
        run_panel_dea(panel, DeaSpec{{"x"}, {"y"}});
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("NONPOSITIVE"), std::string::npos);
    }
    EXPECT_THROW(run_panel_dea(panel, DeaSpec{{"x"}, {}}), UsageError);
}
