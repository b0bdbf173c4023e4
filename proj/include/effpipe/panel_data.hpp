#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "effpipe/csv.hpp"
#include "effpipe/dea_spec.hpp"
#include "effpipe/errors.hpp"

namespace effpipe {

enum class VariableRole { dea_input, dea_output, indicator };
enum class Direction { desirable, undesirable };

struct VariableDef {
    std::string name;
    VariableRole role = VariableRole::indicator;
    Direction direction = Direction::desirable;

    bool operator==(const VariableDef&) const = default;
};

inline const char* to_string(VariableRole r) {
    switch (r) {
        case VariableRole::dea_input: return "dea_input";
        case VariableRole::dea_output: return "dea_output";
        case VariableRole::indicator: return "indicator";
    }
    return "?";
}

inline const char* to_string(Direction d) { return d == Direction::desirable ? "desirable" : "undesirable"; }

inline VariableRole parse_role(const std::string& s) {
    if (s == "dea_input") return VariableRole::dea_input;
    if (s == "dea_output") return VariableRole::dea_output;
    if (s == "indicator") return VariableRole::indicator;
    throw SchemaError("unknown variable role '" + s + "'");
}

inline Direction parse_direction(const std::string& s) {
    if (s == "desirable") return Direction::desirable;
    if (s == "undesirable") return Direction::undesirable;
    throw SchemaError("unknown variable direction '" + s + "'");
}

/// Dense DMU x period x variable tensor. Absent cells hold NaN, which is
/// the only missing marker; loaded values are always finite.
class PanelDataset {
public:
    static constexpr double missing = std::numeric_limits<double>::quiet_NaN();

    PanelDataset() = default;

    PanelDataset(std::vector<std::string> dmus, std::vector<std::string> periods,
                 std::vector<VariableDef> variables, std::vector<double> values)
        : dmus_(std::move(dmus)), periods_(std::move(periods)),
          variables_(std::move(variables)), values_(std::move(values)) {
        if (values_.size() != dmus_.size() * periods_.size() * variables_.size()) {
            throw UsageError("panel tensor size does not match |dmus| x |periods| x |variables|");
        }
        require_unique(dmus_, "DMU");
        require_unique(periods_, "period");
        std::vector<std::string> names;
        for (const auto& v : variables_) names.push_back(v.name);
        require_unique(names, "variable");
        for (std::size_t i = 0; i < variables_.size(); ++i) {
            if (variables_[i].role == VariableRole::dea_input &&
                variables_[i].direction == Direction::undesirable) {
                throw SchemaError("DEA input '" + variables_[i].name + "' cannot be undesirable");
            }
        }
    }

    /// All-missing panel of the given shape.
    static PanelDataset empty(std::vector<std::string> dmus, std::vector<std::string> periods,
                              std::vector<VariableDef> variables) {
        const std::size_t n = dmus.size() * periods.size() * variables.size();
        return PanelDataset(std::move(dmus), std::move(periods), std::move(variables),
                            std::vector<double>(n, missing));
    }

    const std::vector<std::string>& dmus() const { return dmus_; }
    const std::vector<std::string>& periods() const { return periods_; }
    const std::vector<VariableDef>& variables() const { return variables_; }
    std::span<const double> values() const { return values_; }

    std::size_t dmu_count() const { return dmus_.size(); }
    std::size_t period_count() const { return periods_.size(); }
    std::size_t variable_count() const { return variables_.size(); }

    double value(std::size_t dmu, std::size_t period, std::size_t variable) const {
        return values_[offset(dmu, period, variable)];
    }
    bool is_missing(std::size_t dmu, std::size_t period, std::size_t variable) const {
        return std::isnan(value(dmu, period, variable));
    }
    void set(std::size_t dmu, std::size_t period, std::size_t variable, double v) {
        values_[offset(dmu, period, variable)] = v;
    }

    std::optional<std::size_t> find_dmu(std::string_view name) const { return find(dmus_, name); }
    std::optional<std::size_t> find_period(std::string_view label) const { return find(periods_, label); }
    std::optional<std::size_t> find_variable(std::string_view name) const {
        for (std::size_t i = 0; i < variables_.size(); ++i) {
            if (variables_[i].name == name) return i;
        }
        return std::nullopt;
    }

    std::size_t variable_index(std::string_view name) const {
        auto idx = find_variable(name);
        if (!idx) throw LookupError("unknown variable '" + std::string(name) + "'");
        return *idx;
    }
    std::size_t period_index(std::string_view label) const {
        auto idx = find_period(label);
        if (!idx) throw LookupError("unknown period '" + std::string(label) + "'");
        return *idx;
    }

    std::size_t missing_count() const {
        return static_cast<std::size_t>(
            std::count_if(values_.begin(), values_.end(), [](double v) { return std::isnan(v); }));
    }

    /// Copy with one variable's definition and values replaced. `column` is
    /// indexed (dmu, period) row-major.
    PanelDataset with_variable(std::size_t variable, VariableDef def, std::span<const double> column) const {
        PanelDataset out = *this;
        out.variables_[variable] = std::move(def);
        for (std::size_t d = 0; d < dmu_count(); ++d) {
            for (std::size_t p = 0; p < period_count(); ++p) {
                out.set(d, p, variable, column[d * period_count() + p]);
            }
        }
        return out;
    }

    bool operator==(const PanelDataset& o) const {
        if (dmus_ != o.dmus_ || periods_ != o.periods_ || variables_ != o.variables_) return false;
        for (std::size_t i = 0; i < values_.size(); ++i) {
            const bool a = std::isnan(values_[i]), b = std::isnan(o.values_[i]);
            if (a != b || (!a && values_[i] != o.values_[i])) return false;
        }
        return true;
    }

private:
    std::size_t offset(std::size_t d, std::size_t p, std::size_t v) const {
        return (d * periods_.size() + p) * variables_.size() + v;
    }

    static std::optional<std::size_t> find(const std::vector<std::string>& xs, std::string_view key) {
        auto it = std::find(xs.begin(), xs.end(), key);
        if (it == xs.end()) return std::nullopt;
        return static_cast<std::size_t>(it - xs.begin());
    }

    static void require_unique(const std::vector<std::string>& xs, const char* what) {
        std::set<std::string> seen;
        for (const auto& x : xs) {
            if (!seen.insert(x).second) throw SchemaError(std::string("duplicate ") + what + " '" + x + "'");
        }
    }

    std::vector<std::string> dmus_;
    std::vector<std::string> periods_;
    std::vector<VariableDef> variables_;
    std::vector<double> values_;
};

/// One period's DEA inputs and outputs; row i belongs to dmus[i].
struct CrossSection {
    std::string period;
    std::vector<std::string> dmus;
    std::vector<std::string> input_names;
    std::vector<std::string> output_names;
    Eigen::MatrixXd inputs;   // dmu x input
    Eigen::MatrixXd outputs;  // dmu x output

    std::size_t size() const { return dmus.size(); }

    std::size_t dmu_index(std::string_view name) const {
        auto it = std::find(dmus.begin(), dmus.end(), name);
        if (it == dmus.end()) throw LookupError("DMU '" + std::string(name) + "' not in cross-section " + period);
        return static_cast<std::size_t>(it - dmus.begin());
    }
};

struct Location {
    std::string dmu;
    std::string period;
    std::string variable;

    bool operator==(const Location&) const = default;
};

struct Diagnostic {
    std::string code;
    std::string message;
    Location location;

    bool operator==(const Diagnostic&) const = default;
};

/// Outcome of an admissibility check. The dataset is admissible iff
/// `errors` is empty; warnings never block an analysis.
struct ValidationReport {
    std::vector<Diagnostic> errors;
    std::vector<Diagnostic> warnings;

    bool ok() const { return errors.empty(); }

    bool has_error(std::string_view code) const { return contains(errors, code); }
    bool has_warning(std::string_view code) const { return contains(warnings, code); }

    void merge(const ValidationReport& other) {
        errors.insert(errors.end(), other.errors.begin(), other.errors.end());
        warnings.insert(warnings.end(), other.warnings.begin(), other.warnings.end());
    }

private:
    static bool contains(const std::vector<Diagnostic>& ds, std::string_view code) {
        return std::any_of(ds.begin(), ds.end(), [&](const Diagnostic& d) { return d.code == code; });
    }
};

inline std::ostream& operator<<(std::ostream& os, const ValidationReport& r) {
    auto print = [&](const char* level, const Diagnostic& d) {
        os << level << ' ' << d.code << ": " << d.message;
        if (!d.location.dmu.empty() || !d.location.period.empty() || !d.location.variable.empty()) {
            os << " [dmu=" << d.location.dmu << " period=" << d.location.period
               << " variable=" << d.location.variable << ']';
        }
        os << '\n';
    };
    for (const auto& e : r.errors) print("error", e);
    for (const auto& w : r.warnings) print("warning", w);
    os << (r.ok() ? "OK" : "INVALID") << " (" << r.errors.size() << " errors, " << r.warnings.size()
       << " warnings)\n";
    return os;
}

/// Reads a long-format CSV (`dmu,period,variable,value`). DMUs and periods
/// keep their order of first appearance; variables follow `schema` order.
inline PanelDataset load_panel(std::istream& in, const std::vector<VariableDef>& schema) {
    std::unordered_map<std::string, std::size_t> var_index;
    for (std::size_t i = 0; i < schema.size(); ++i) var_index.emplace(schema[i].name, i);

    struct Row {
        std::size_t dmu, period, variable;
        double value;
    };
    std::vector<std::string> dmus, periods;
    std::unordered_map<std::string, std::size_t> dmu_index, period_index;
    std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::size_t> seen;
    std::vector<Row> rows;

    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (!header_seen) {
            if (line != "dmu,period,variable,value") {
                throw ParseError("header must be exactly 'dmu,period,variable,value'", line_no);
            }
            header_seen = true;
            continue;
        }
        if (line.empty()) continue;
        auto fields = csv::split_record(line, line_no);
        if (fields.size() != 4) {
            throw ParseError("expected 4 fields, found " + std::to_string(fields.size()), line_no);
        }
        if (fields[0].empty() || fields[1].empty() || fields[2].empty()) {
            throw ParseError("dmu, period and variable must be non-empty", line_no);
        }
        auto var = var_index.find(fields[2]);
        if (var == var_index.end()) {
            throw SchemaError("line " + std::to_string(line_no) + ": variable '" + fields[2] +
                              "' is not in the schema");
        }
        double value = PanelDataset::missing;
        if (!fields[3].empty()) {
            auto parsed = csv::parse_decimal(fields[3]);
            if (!parsed) throw ParseError("value '" + fields[3] + "' is not a decimal literal", line_no);
            value = *parsed;
        }
        auto intern = [](std::vector<std::string>& names, std::unordered_map<std::string, std::size_t>& idx,
                         const std::string& key) {
            auto [it, inserted] = idx.emplace(key, names.size());
            if (inserted) names.push_back(key);
            return it->second;
        };
        const std::size_t d = intern(dmus, dmu_index, fields[0]);
        const std::size_t p = intern(periods, period_index, fields[1]);
        auto [it, inserted] = seen.emplace(std::make_tuple(d, p, var->second), line_no);
        if (!inserted) {
            throw DuplicateError("duplicate key (" + fields[0] + ", " + fields[1] + ", " + fields[2] +
                                     "), first seen on line " + std::to_string(it->second),
                                 line_no);
        }
        rows.push_back({d, p, var->second, value});
    }
    if (!header_seen) throw ParseError("empty input: missing header", 1);

    auto panel = PanelDataset::empty(std::move(dmus), std::move(periods), schema);
    for (const auto& r : rows) panel.set(r.dmu, r.period, r.variable, r.value);
    return panel;
}

/// Writes the panel in the long CSV format read by load_panel. Missing
/// cells are omitted; values use the shortest exact decimal form.
inline void write_panel(std::ostream& out, const PanelDataset& panel) {
    out << "dmu,period,variable,value\n";
    for (std::size_t d = 0; d < panel.dmu_count(); ++d) {
        for (std::size_t p = 0; p < panel.period_count(); ++p) {
            for (std::size_t v = 0; v < panel.variable_count(); ++v) {
                if (panel.is_missing(d, p, v)) continue;
                out << csv::quote_field(panel.dmus()[d]) << ',' << csv::quote_field(panel.periods()[p]) << ','
                    << csv::quote_field(panel.variables()[v].name) << ','
                    << csv::format_exact(panel.value(d, p, v)) << '\n';
            }
        }
    }
}

/// Checks that `panel` can feed DEA under `spec`: every input/output cell
/// present and strictly positive, roles consistent. Emits a DISCRIMINATION
/// warning when the DMU count does not exceed #inputs x #outputs.
inline ValidationReport validate_for_dea(const PanelDataset& panel, const DeaSpec& spec) {
    ValidationReport report;
    if (spec.input_vars.empty() || spec.output_vars.empty()) {
        report.errors.push_back({"EMPTY_SPEC", "DEA spec needs at least one input and one output", {}});
    }

    auto check_vars = [&](const std::vector<std::string>& names, VariableRole expected) {
        std::vector<std::size_t> indices;
        for (const auto& name : names) {
            auto idx = panel.find_variable(name);
            if (!idx) {
                report.errors.push_back({"UNKNOWN_VARIABLE", "variable '" + name + "' is not in the dataset",
                                         {"", "", name}});
                continue;
            }
            const auto& def = panel.variables()[*idx];
            if (def.role != expected) {
                report.errors.push_back({"ROLE_MISMATCH",
                                         "variable '" + name + "' has role " + to_string(def.role) +
                                             ", expected " + to_string(expected),
                                         {"", "", name}});
            }
            if (expected == VariableRole::dea_output && def.direction == Direction::undesirable) {
                report.warnings.push_back({"UNDESIRABLE_OUTPUT",
                                           "output '" + name +
                                               "' is undesirable (less is better) and has not been transformed",
                                           {"", "", name}});
            }
            indices.push_back(*idx);
        }
        return indices;
    };
    auto inputs = check_vars(spec.input_vars, VariableRole::dea_input);
    auto outputs = check_vars(spec.output_vars, VariableRole::dea_output);

    for (const auto& in : spec.input_vars) {
        if (std::find(spec.output_vars.begin(), spec.output_vars.end(), in) != spec.output_vars.end()) {
            report.errors.push_back({"OVERLAP", "variable '" + in + "' is both input and output", {"", "", in}});
        }
    }

    std::vector<std::size_t> all = inputs;
    all.insert(all.end(), outputs.begin(), outputs.end());
    for (std::size_t d = 0; d < panel.dmu_count(); ++d) {
        for (std::size_t p = 0; p < panel.period_count(); ++p) {
            for (std::size_t v : all) {
                const Location loc{panel.dmus()[d], panel.periods()[p], panel.variables()[v].name};
                const double x = panel.value(d, p, v);
                if (std::isnan(x)) {
                    report.errors.push_back({"MISSING", "missing DEA value", loc});
                } else if (!(x > 0.0) || !std::isfinite(x)) {
                    report.errors.push_back({"NONPOSITIVE", "DEA value " + csv::format_exact(x) +
                                                                " is not strictly positive", loc});
                }
            }
        }
    }

    const std::size_t products = spec.input_vars.size() * spec.output_vars.size();
    if (panel.dmu_count() <= products) {
        report.warnings.push_back({"DISCRIMINATION",
                                   std::to_string(panel.dmu_count()) + " DMUs do not exceed " +
                                       std::to_string(spec.input_vars.size()) + " inputs x " +
                                       std::to_string(spec.output_vars.size()) + " outputs = " +
                                       std::to_string(products) + "; efficient/inefficient discrimination is weak",
                                   {}});
    }
    return report;
}

enum class UndesirableMethod { reciprocal, max_minus };

inline const char* to_string(UndesirableMethod m) {
    return m == UndesirableMethod::reciprocal ? "reciprocal" : "max_minus";
}

inline UndesirableMethod parse_undesirable_method(const std::string& s) {
    if (s == "reciprocal") return UndesirableMethod::reciprocal;
    if (s == "max_minus") return UndesirableMethod::max_minus;
    throw UsageError("unknown undesirable-output method '" + s + "'");
}

/// Headroom factor for max_minus: x' = headroom * max(x) - x keeps x' > 0.
inline constexpr double max_minus_headroom = 1.01;

/// Turns a less-is-better variable into a more-is-better one and marks it
/// desirable. max_minus works within each period's cross-section.
inline PanelDataset transform_undesirable(const PanelDataset& panel, std::string_view variable,
                                          UndesirableMethod method) {
    const std::size_t v = panel.variable_index(variable);
    const VariableDef& def = panel.variables()[v];
    if (def.direction != Direction::undesirable) {
        throw UsageError("variable '" + def.name + "' is not marked undesirable");
    }
    const std::size_t nd = panel.dmu_count(), np = panel.period_count();
    std::vector<double> column(nd * np, PanelDataset::missing);

    for (std::size_t p = 0; p < np; ++p) {
        double max_value = -std::numeric_limits<double>::infinity();
        for (std::size_t d = 0; d < nd; ++d) {
            const double x = panel.value(d, p, v);
            if (std::isnan(x)) continue;
            if (!(x > 0.0)) {
                throw DomainError("undesirable variable '" + def.name + "' has nonpositive value " +
                                  csv::format_exact(x) + " at (" + panel.dmus()[d] + ", " + panel.periods()[p] +
                                  ")");
            }
            max_value = std::max(max_value, x);
        }
        for (std::size_t d = 0; d < nd; ++d) {
            const double x = panel.value(d, p, v);
            if (std::isnan(x)) continue;
            column[d * np + p] =
                method == UndesirableMethod::reciprocal ? 1.0 / x : max_minus_headroom * max_value - x;
        }
    }
    VariableDef out = def;
    out.direction = Direction::desirable;
    return panel.with_variable(v, std::move(out), column);
}

/// Projects one period onto the spec's inputs and outputs.
inline CrossSection slice_period(const PanelDataset& panel, std::string_view period, const DeaSpec& spec) {
    const std::size_t p = panel.period_index(period);
    CrossSection cs;
    cs.period = std::string(period);
    cs.dmus = panel.dmus();
    cs.input_names = spec.input_vars;
    cs.output_names = spec.output_vars;
    auto fill = [&](const std::vector<std::string>& names, Eigen::MatrixXd& m) {
        m.resize(static_cast<Eigen::Index>(panel.dmu_count()), static_cast<Eigen::Index>(names.size()));
        for (std::size_t j = 0; j < names.size(); ++j) {
            const std::size_t v = panel.variable_index(names[j]);
            for (std::size_t d = 0; d < panel.dmu_count(); ++d) {
                const double x = panel.value(d, p, v);
                if (!(x > 0.0) || !std::isfinite(x)) {
                    throw ValidationError("cell (" + panel.dmus()[d] + ", " + cs.period + ", " + names[j] +
                                          ") is missing or not strictly positive");
                }
                m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) = x;
            }
        }
    };
    fill(spec.input_vars, cs.inputs);
    fill(spec.output_vars, cs.outputs);
    return cs;
}

}  // namespace effpipe
