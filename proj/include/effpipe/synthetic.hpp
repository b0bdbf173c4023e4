#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "effpipe/panel_data.hpp"
#include "effpipe/random.hpp"

namespace effpipe {

// Synthetic 27-country panel with planted three-tier efficiency. Every DMU
// uses the same input and output mix up to 0.1% jitter, so its CRS score is
// close to its planted efficiency divided by the best one. The tiers are
// shared by the ICT and health analyses; each analysis has its own single
// dominant DMU with planted efficiency exactly 1 in every period.
namespace synthetic {

inline const std::vector<std::string> ict_inputs{"TINV", "LCAP", "IBW", "STAFF"};
inline const std::vector<std::string> ict_outputs{"OUTCALL", "INCALL", "MTL",     "IU",    "MCS",
                                                  "MLINES",  "HHTEL",  "DIGITAL", "RESID", "MCOV"};
inline const std::vector<std::string> health_inputs{"HEC", "HGDP"};
inline const std::vector<std::string> health_outputs{"LEB", "FAMR", "MAMR", "IMR", "U5MR"};
inline const std::vector<std::string> undesirable{"FAMR", "MAMR", "IMR", "U5MR"};
inline const std::vector<std::string> pls_exogenous{"MCS", "IU", "MTL"};
inline const std::vector<std::string> pls_endogenous{"LEB", "HEC", "HGDP", "IMR"};

inline constexpr std::size_t dmu_count = 27;
inline constexpr std::size_t period_count = 10;
inline constexpr std::size_t tier_size = 9;
inline constexpr std::array<double, 3> tier_centre{0.975, 0.80, 0.62};
inline constexpr double tier_spread = 0.0125;
// Most members sit near the tier centre with one far member on each side,
// so the tiers do not split cleanly into smaller groups.
inline constexpr std::array<double, tier_size> tier_profile{-2.0, -0.6, -0.3, -0.1, 0.0, 0.1, 0.3, 0.6, 2.0};
inline constexpr double mix_jitter = 0.001;
inline constexpr double period_noise = 0.003;

inline std::vector<VariableDef> schema() {
    std::vector<VariableDef> s;
    for (const auto& v : ict_inputs) s.push_back({v, VariableRole::dea_input});
    for (const auto& v : ict_outputs) s.push_back({v, VariableRole::dea_output});
    for (const auto& v : health_inputs) s.push_back({v, VariableRole::dea_input});
    for (const auto& v : health_outputs) {
        const bool bad = std::find(undesirable.begin(), undesirable.end(), v) != undesirable.end();
        s.push_back({v, VariableRole::dea_output, bad ? Direction::undesirable : Direction::desirable});
    }
    return s;
}

inline std::vector<std::string> dmu_names() {
    std::vector<std::string> out;
    for (std::size_t d = 1; d <= dmu_count; ++d) out.push_back((d < 10 ? "C0" : "C") + std::to_string(d));
    return out;
}

inline std::vector<std::string> period_labels() {
    std::vector<std::string> out;
    for (std::size_t p = 0; p < period_count; ++p) out.push_back(std::to_string(1998 + p));
    return out;
}

struct Plan {
    std::vector<std::size_t> tier;       // per DMU
    std::vector<double> ict_efficiency;  // per DMU, before period noise
    std::vector<double> health_efficiency;
    std::size_t ict_dominant = 0;
    std::size_t health_dominant = 0;
};

namespace detail {

inline void shuffle(std::vector<std::size_t>& v, RandomStream& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace detail

inline Plan make_plan(RandomStream& rng) {
    Plan plan;
    std::vector<std::size_t> order(dmu_count);
    for (std::size_t i = 0; i < dmu_count; ++i) order[i] = i;
    detail::shuffle(order, rng);
    plan.tier.assign(dmu_count, 0);
    plan.ict_efficiency.assign(dmu_count, 0.0);
    plan.health_efficiency.assign(dmu_count, 0.0);
    for (std::size_t t = 0; t < 3; ++t) {
        std::vector<std::size_t> members(order.begin() + static_cast<std::ptrdiff_t>(t * tier_size),
                                         order.begin() + static_cast<std::ptrdiff_t>((t + 1) * tier_size));
        for (auto m : members) plan.tier[m] = t;
        // Independent placement within the tier for each analysis.
        auto ict = members, health = members;
        detail::shuffle(ict, rng);
        detail::shuffle(health, rng);
        for (std::size_t k = 0; k < tier_size; ++k) {
            plan.ict_efficiency[ict[k]] = tier_centre[t] + tier_spread * tier_profile[k];
            plan.health_efficiency[health[k]] = tier_centre[t] + tier_spread * tier_profile[k];
        }
        if (t == 0) {
            plan.ict_dominant = ict.back();
            plan.health_dominant = health.back();
            // Keep the two dominant DMUs distinct.
            if (plan.health_dominant == plan.ict_dominant) {
                std::swap(plan.health_efficiency[health[tier_size - 1]], plan.health_efficiency[health[0]]);
                plan.health_dominant = health[0];
            }
        }
    }
    return plan;
}

/// Builds the demo panel. Deterministic in `seed`.
inline PanelDataset make_panel(std::uint64_t seed = 2007) {
    RandomStream rng(seed);
    const Plan plan = make_plan(rng);
    auto panel = PanelDataset::empty(dmu_names(), period_labels(), schema());

    auto base = [&](double lo, double hi) { return std::exp(rng.uniform(std::log(lo), std::log(hi))); };
    std::vector<double> ict_in_base, ict_out_base, health_in_base, health_out_base;
    for (std::size_t i = 0; i < ict_inputs.size(); ++i) ict_in_base.push_back(base(0.5, 50.0));
    for (std::size_t i = 0; i < ict_outputs.size(); ++i) ict_out_base.push_back(base(1.0, 100.0));
    health_in_base = {120.0, 5.5};
    health_out_base = {72.0, 180.0, 230.0, 45.0, 60.0};  // LEB, then rates for the undesirable outputs

    // Development level drives size; the health size factor is correlated.
    std::vector<double> dev(dmu_count), health_dev(dmu_count);
    for (std::size_t d = 0; d < dmu_count; ++d) {
        const double a = rng.normal(), z = rng.normal();
        dev[d] = 0.8 * a;
        health_dev[d] = 0.15 * (0.6 * a + 0.8 * z);
    }

    const auto var = [&](const std::string& name) { return panel.variable_index(name); };
    auto jitter = [&] { return 1.0 + rng.uniform(-mix_jitter, mix_jitter); };
    for (std::size_t d = 0; d < dmu_count; ++d) {
        for (std::size_t p = 0; p < period_count; ++p) {
            const double growth = std::pow(1.06, static_cast<double>(p));
            const double g = std::exp(dev[d]) * growth * (1.0 + rng.uniform(-0.02, 0.02));
            const double gh = std::exp(health_dev[d]) * std::pow(1.01, static_cast<double>(p));
            const double e = d == plan.ict_dominant
                                 ? 1.0
                                 : plan.ict_efficiency[d] * (1.0 + rng.uniform(-period_noise, period_noise));
            const double eh = d == plan.health_dominant
                                  ? 1.0
                                  : plan.health_efficiency[d] * (1.0 + rng.uniform(-period_noise, period_noise));
            for (std::size_t i = 0; i < ict_inputs.size(); ++i)
                panel.set(d, p, var(ict_inputs[i]), g * ict_in_base[i] * (d == plan.ict_dominant ? 1.0 : jitter()));
            for (std::size_t r = 0; r < ict_outputs.size(); ++r)
                panel.set(d, p, var(ict_outputs[r]),
                          g * e * ict_out_base[r] * (d == plan.ict_dominant ? 1.0 : jitter()));
            for (std::size_t i = 0; i < health_inputs.size(); ++i)
                panel.set(d, p, var(health_inputs[i]),
                          gh * health_in_base[i] * (d == plan.health_dominant ? 1.0 : jitter()));
            for (std::size_t r = 0; r < health_outputs.size(); ++r) {
                const double j = d == plan.health_dominant ? 1.0 : jitter();
                const double good = gh * eh * j;
                // Undesirable rates fall as health efficiency rises.
                panel.set(d, p, var(health_outputs[r]),
                          r == 0 ? good * health_out_base[r] : health_out_base[r] / good);
            }
        }
    }
    return panel;
}

}  // namespace synthetic
}  // namespace effpipe
