#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "effpipe/panel_data.hpp"
#include "effpipe/random.hpp"

using namespace effpipe;

namespace {

std::vector<VariableDef> schema_of(std::size_t inputs, std::size_t outputs) {
    std::vector<VariableDef> s;
    for (std::size_t i = 0; i < inputs; ++i) s.push_back({"in" + std::to_string(i), VariableRole::dea_input});
    for (std::size_t r = 0; r < outputs; ++r) s.push_back({"out" + std::to_string(r), VariableRole::dea_output});
    return s;
}

DeaSpec spec_of(std::size_t inputs, std::size_t outputs) {
    DeaSpec spec;
    for (std::size_t i = 0; i < inputs; ++i) spec.input_vars.push_back("in" + std::to_string(i));
    for (std::size_t r = 0; r < outputs; ++r) spec.output_vars.push_back("out" + std::to_string(r));
    return spec;
}

PanelDataset filled_panel(std::size_t dmus, std::size_t periods, const std::vector<VariableDef>& schema,
                          std::uint64_t seed) {
    std::vector<std::string> ds, ps;
    for (std::size_t d = 0; d < dmus; ++d) ds.push_back("D" + std::to_string(d));
    for (std::size_t p = 0; p < periods; ++p) ps.push_back(std::to_string(1998 + p));
    RandomStream rng(seed);
    std::vector<double> values(dmus * periods * schema.size());
    for (auto& v : values) v = rng.uniform(0.5, 100.0);
    return PanelDataset(ds, ps, schema, values);
}

}  // namespace

TEST(LoadPanel, SingleCell) {
    std::istringstream in("dmu,period,variable,value\nA,1998,x,2.0\n");
    auto panel = load_panel(in, {{"x", VariableRole::dea_input}});
    ASSERT_EQ(panel.dmu_count(), 1u);
    ASSERT_EQ(panel.period_count(), 1u);
    ASSERT_EQ(panel.variable_count(), 1u);
    EXPECT_EQ(panel.value(0, 0, 0), 2.0);
}

TEST(LoadPanel, DuplicateKeyNamesSecondLine) {
    std::istringstream in("dmu,period,variable,value\nA,1998,x,2.0\nA,1998,x,3.0\n");
    try {
        load_panel(in, {{"x", VariableRole::dea_input}});
        FAIL() << "expected DuplicateError";
    } catch (const DuplicateError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(LoadPanel, UnknownVariableIsSchemaError) {
    std::istringstream in("dmu,period,variable,value\nA,1998,y,2.0\n");
    EXPECT_THROW(load_panel(in, {{"x", VariableRole::dea_input}}), SchemaError);
}

TEST(LoadPanel, MalformedRowsReportLineNumber) {
    const std::vector<VariableDef> schema{{"x", VariableRole::dea_input}};
    for (const std::string body : {"A,1998,x\n", "A,1998,x,abc\n", "A,1998,x,1.0,9\n", "A,1998,x,inf\n",
                                   "A,1998,x,\"1.0\n"}) {
        std::istringstream in("dmu,period,variable,value\nB,1998,x,1\n" + body);
        try {
            load_panel(in, schema);
            FAIL() << body;
        } catch (const ParseError& e) {
            EXPECT_EQ(e.line(), 3u) << body;
        }
    }
    std::istringstream bad_header("dmu,year,variable,value\n");
    EXPECT_THROW(load_panel(bad_header, schema), ParseError);
}

TEST(LoadPanel, AbsentAndEmptyCellsAreMissing) {
    std::istringstream in("dmu,period,variable,value\r\nA,1998,x,1\r\nB,1999,x,\r\n\"C, Inc\",1998,x,4\r\n");
    auto panel = load_panel(in, {{"x", VariableRole::dea_input}});
    EXPECT_EQ(panel.dmus(), (std::vector<std::string>{"A", "B", "C, Inc"}));
    EXPECT_EQ(panel.periods(), (std::vector<std::string>{"1998", "1999"}));
    EXPECT_TRUE(panel.is_missing(0, 1, 0));  // absent
    EXPECT_TRUE(panel.is_missing(1, 1, 0));  // empty field
    EXPECT_EQ(panel.value(2, 0, 0), 4.0);
    EXPECT_EQ(panel.missing_count(), 4u);
}

TEST(LoadPanel, FullSyntheticFileHasNoMissingCells) {
    std::vector<VariableDef> schema;
    for (int v = 0; v < 14; ++v) schema.push_back({"v" + std::to_string(v), VariableRole::indicator});
    std::ostringstream file;
    file << "dmu,period,variable,value\n";
    RandomStream rng(3);
    std::size_t rows = 0;
    for (int d = 0; d < 27; ++d)
        for (int p = 0; p < 10; ++p)
            for (int v = 0; v < 14; ++v, ++rows)
                file << "D" << d << ',' << 1998 + p << ",v" << v << ',' << rng.uniform(1, 50) << '\n';
    ASSERT_EQ(rows, 3780u);
    std::istringstream in(file.str());
    auto panel = load_panel(in, schema);
    EXPECT_EQ(panel.values().size(), 3780u);
    EXPECT_EQ(panel.missing_count(), 0u);
    EXPECT_TRUE(std::all_of(panel.values().begin(), panel.values().end(), [](double x) { return std::isfinite(x); }));
}

TEST(LoadPanel, WriteThenLoadIsIdentity) {
    auto schema = schema_of(2, 3);
    schema[3].direction = Direction::undesirable;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto panel = filled_panel(5, 4, schema, seed);
        std::stringstream buf;
        write_panel(buf, panel);
        auto back = load_panel(buf, schema);
        EXPECT_TRUE(back == panel);
    }
}

TEST(PanelDataset, RejectsDuplicatesAndBadShape) {
    std::vector<VariableDef> schema{{"x", VariableRole::dea_input}};
    EXPECT_THROW(PanelDataset({"A", "A"}, {"1"}, schema, {1, 2}), SchemaError);
    EXPECT_THROW(PanelDataset({"A"}, {"1", "1"}, schema, {1, 2}), SchemaError);
    EXPECT_THROW(PanelDataset({"A"}, {"1"}, schema, {1, 2}), UsageError);
    EXPECT_THROW(PanelDataset({"A"}, {"1"}, {{"x", VariableRole::dea_input, Direction::undesirable}}, {1}),
                 SchemaError);
}

TEST(ValidateForDea, DiscriminationWarningMatchesIctAndHealthModels) {
    // 4 inputs x 10 outputs = 40 >= 27 DMUs.
    auto ict = filled_panel(27, 2, schema_of(4, 10), 1);
    auto r1 = validate_for_dea(ict, spec_of(4, 10));
    EXPECT_TRUE(r1.ok());
    EXPECT_TRUE(r1.has_warning("DISCRIMINATION"));
    // 2 inputs x 5 outputs = 10 < 27.
    auto health = filled_panel(27, 2, schema_of(2, 5), 2);
    auto r2 = validate_for_dea(health, spec_of(2, 5));
    EXPECT_TRUE(r2.ok());
    EXPECT_FALSE(r2.has_warning("DISCRIMINATION"));
}

TEST(ValidateForDea, DiscriminationRuleExhaustive) {
    for (std::size_t n = 1; n <= 6; ++n)
        for (std::size_t m = 1; m <= 6; ++m)
            for (std::size_t s = 1; s <= 6; ++s) {
                auto panel = filled_panel(n, 1, schema_of(m, s), n * 100 + m * 10 + s);
                auto r = validate_for_dea(panel, spec_of(m, s));
                EXPECT_EQ(r.has_warning("DISCRIMINATION"), n <= m * s) << n << ' ' << m << ' ' << s;
                EXPECT_TRUE(r.ok());
            }
}

TEST(ValidateForDea, ZeroInputIsNonpositiveErrorAtLocation) {
    auto panel = filled_panel(3, 2, schema_of(1, 1), 4);
    panel.set(1, 1, 0, 0.0);
    auto r = validate_for_dea(panel, spec_of(1, 1));
    ASSERT_FALSE(r.ok());
    ASSERT_EQ(r.errors.size(), 1u);
    EXPECT_EQ(r.errors[0].code, "NONPOSITIVE");
    EXPECT_EQ(r.errors[0].location, (Location{"D1", "1999", "in0"}));
}

TEST(ValidateForDea, MissingUnknownRoleAndUndesirable) {
    auto schema = schema_of(1, 2);
    schema[2].direction = Direction::undesirable;
    auto panel = filled_panel(3, 1, schema, 5);
    panel.set(0, 0, 1, PanelDataset::missing);
    DeaSpec spec{{"in0", "nope"}, {"out0", "out1"}};
    auto r = validate_for_dea(panel, spec);
    EXPECT_TRUE(r.has_error("MISSING"));
    EXPECT_TRUE(r.has_error("UNKNOWN_VARIABLE"));
    EXPECT_TRUE(r.has_warning("UNDESIRABLE_OUTPUT"));
    DeaSpec swapped{{"out0"}, {"in0"}};
    EXPECT_TRUE(validate_for_dea(panel, swapped).has_error("ROLE_MISMATCH"));
}

TEST(TransformUndesirable, Reciprocal) {
    std::vector<VariableDef> schema{{"imr", VariableRole::dea_output, Direction::undesirable}};
    PanelDataset panel({"A", "B"}, {"1998"}, schema, {2.0, 4.0});
    auto out = transform_undesirable(panel, "imr", UndesirableMethod::reciprocal);
    EXPECT_EQ(out.value(0, 0, 0), 0.5);
    EXPECT_EQ(out.value(1, 0, 0), 0.25);
    EXPECT_EQ(out.variables()[0].direction, Direction::desirable);
}

TEST(TransformUndesirable, MaxMinusWithinPeriod) {
    std::vector<VariableDef> schema{{"u5mr", VariableRole::dea_output, Direction::undesirable}};
    // Periods hold different maxima; each period uses its own.
    PanelDataset panel({"A", "B"}, {"1998", "1999"}, schema, {10.0, 1.0, 107.0, 2.0});
    auto out = transform_undesirable(panel, "u5mr", UndesirableMethod::max_minus);
    EXPECT_NEAR(out.value(0, 0, 0), 98.07, 1e-12);
    EXPECT_NEAR(out.value(1, 0, 0), 1.07, 1e-12);
    EXPECT_NEAR(out.value(0, 1, 0), 1.01 * 2.0 - 1.0, 1e-12);
    EXPECT_NEAR(out.value(1, 1, 0), 1.01 * 2.0 - 2.0, 1e-12);
}

TEST(TransformUndesirable, MaxMinusReversesRankOrderEveryPeriod) {
    std::vector<VariableDef> schema{{"m", VariableRole::dea_output, Direction::undesirable}};
    auto panel = filled_panel(12, 5, schema, 8);
    auto out = transform_undesirable(panel, "m", UndesirableMethod::max_minus);
    for (std::size_t p = 0; p < 5; ++p) {
        std::vector<std::size_t> before(12), after(12);
        std::iota(before.begin(), before.end(), 0);
        std::iota(after.begin(), after.end(), 0);
        std::sort(before.begin(), before.end(), [&](auto a, auto b) { return panel.value(a, p, 0) < panel.value(b, p, 0); });
        std::sort(after.begin(), after.end(), [&](auto a, auto b) { return out.value(a, p, 0) > out.value(b, p, 0); });
        EXPECT_EQ(before, after);
        for (std::size_t d = 0; d < 12; ++d) EXPECT_GT(out.value(d, p, 0), 0.0);
    }
}

TEST(TransformUndesirable, Errors) {
    std::vector<VariableDef> schema{{"good", VariableRole::dea_output}, {"bad", VariableRole::dea_output, Direction::undesirable}};
    PanelDataset panel({"A", "B"}, {"1998"}, schema, {1.0, 0.0, 2.0, 3.0});
    EXPECT_THROW(transform_undesirable(panel, "good", UndesirableMethod::reciprocal), UsageError);
    EXPECT_THROW(transform_undesirable(panel, "bad", UndesirableMethod::reciprocal), DomainError);
    EXPECT_THROW(transform_undesirable(panel, "missing", UndesirableMethod::reciprocal), LookupError);
    panel.set(0, 0, 1, 5.0);
    auto once = transform_undesirable(panel, "bad", UndesirableMethod::max_minus);
    // Direction is now desirable, so a second application is rejected.
    EXPECT_THROW(transform_undesirable(once, "bad", UndesirableMethod::max_minus), UsageError);
}

TEST(SlicePeriod, ProjectsOnePeriod) {
    auto panel = filled_panel(2, 10, schema_of(1, 2), 9);
    auto cs = slice_period(panel, "1998", spec_of(1, 2));
    ASSERT_EQ(cs.size(), 2u);
    EXPECT_EQ(cs.inputs.rows(), 2);
    EXPECT_EQ(cs.outputs.cols(), 2);
    EXPECT_EQ(cs.inputs(1, 0), panel.value(1, 0, 0));
    EXPECT_EQ(cs.outputs(0, 1), panel.value(0, 0, 2));
    EXPECT_THROW(slice_period(panel, "2008", spec_of(1, 2)), LookupError);
}

TEST(SlicePeriod, RestackingAllPeriodsReproducesTensor) {
    auto schema = schema_of(2, 3);
    auto panel = filled_panel(4, 6, schema, 10);
    auto spec = spec_of(2, 3);
    auto rebuilt = PanelDataset::empty(panel.dmus(), panel.periods(), schema);
    for (std::size_t p = 0; p < panel.period_count(); ++p) {
        auto cs = slice_period(panel, panel.periods()[p], spec);
        for (std::size_t d = 0; d < cs.size(); ++d) {
            for (std::size_t i = 0; i < 2; ++i) rebuilt.set(d, p, i, cs.inputs(d, i));
            for (std::size_t r = 0; r < 3; ++r) rebuilt.set(d, p, 2 + r, cs.outputs(d, r));
        }
    }
    EXPECT_TRUE(rebuilt == panel);
}
