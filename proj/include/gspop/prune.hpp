// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <gspop/camera.hpp>
#include <gspop/model.hpp>
#include <gspop/quant.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace gspop {

enum class PruneMode { ratio, budget };

/// How a budget selects Gaussians from the ascending ranking.
enum class BudgetRule {
    cumulative,  // longest prefix whose summed error stays within the budget
    threshold,   // every Gaussian whose own error is at most the budget
};

struct PruneConfig {
    PruneMode mode = PruneMode::ratio;
    double ratio = 0.5;   // fraction removed, ratio mode
    double budget = 0.0;  // total error budget B, budget mode
    int cycles = 1;       // C; each cycle spends B / C
    BudgetRule rule = BudgetRule::cumulative;

    void validate() const {
        if (cycles < 1) throw InputError("prune: cycles must be >= 1");
        if (mode == PruneMode::ratio && !(ratio > 0 && ratio < 1)) throw InputError("prune: ratio must be in (0, 1)");
        if (mode == PruneMode::budget && !(budget >= 0 && std::isfinite(budget)))
            throw InputError("prune: budget must be a finite value >= 0");
    }
};

struct PruneCycle {
    std::vector<GaussianId> removed;  // ids in the input scene of the whole run
    double removed_delta_se = 0;      // sum of the removed Gaussians' errors as quantified this cycle
    double budget = 0;                // partial budget for budget mode, ratio for ratio mode
    std::size_t count_before = 0;
    std::size_t count_after = 0;
    double quantify_seconds = 0;
};

struct PruneReport {
    PruneMode mode = PruneMode::ratio;
    std::size_t initial_count = 0;
    std::size_t final_count = 0;
    std::vector<PruneCycle> cycles;

    std::vector<GaussianId> all_removed() const {
        std::vector<GaussianId> out;
        for (const auto& c : cycles) out.insert(out.end(), c.removed.begin(), c.removed.end());
        std::sort(out.begin(), out.end());
        return out;
    }
};

struct PruneResult {
    GaussianScene scene;
    PruneReport report;
    std::vector<GaussianId> kept;  // input ids of the surviving Gaussians, ascending
};

/// Ids sorted ascending by accumulated error; ties broken by ascending id.
inline std::vector<GaussianId> rank(const ErrorBuffer& buffer) {
    std::vector<GaussianId> order(buffer.size());
    std::iota(order.begin(), order.end(), GaussianId{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](GaussianId a, GaussianId b) { return buffer.delta_se[a] < buffer.delta_se[b]; });
    return order;
}

/// The floor(ratio * M) lowest-ranked ids.
inline std::vector<GaussianId> select_ratio(const ErrorBuffer& buffer, double ratio) {
    if (!(ratio > 0 && ratio < 1)) throw InputError("prune_ratio: ratio must be in (0, 1)");
    const auto n = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(buffer.size()) + 1e-9));
    if (n >= buffer.size()) throw InputError("prune_ratio: result would be an empty scene");
    auto order = rank(buffer);
    order.resize(n);
    return order;
}

/// Ids removed by one budget step. At least one Gaussian always survives.
inline std::vector<GaussianId> select_budget(const ErrorBuffer& buffer, double budget,
                                             BudgetRule rule = BudgetRule::cumulative) {
    if (!(budget >= 0)) throw InputError("prune_budget: budget must be >= 0");
    const auto order = rank(buffer);
    std::vector<GaussianId> out;
    double sum = 0;
    for (const GaussianId id : order) {
        if (out.size() + 1 >= buffer.size()) break;
        const double v = buffer.delta_se[id];
        if (rule == BudgetRule::cumulative) {
            if (sum + v > budget) break;
            sum += v;
        } else if (v > budget) {
            break;
        }
        out.push_back(id);
    }
    return out;
}

namespace prune_detail {

// Removes `removed` (ids of `current`) and maps them back to input ids.
inline void apply_cycle(PruneResult& state, const ErrorBuffer& buffer, std::vector<GaussianId> removed,
                        double budget, double seconds) {
    PruneCycle cycle;
    cycle.budget = budget;
    cycle.count_before = state.scene.size();
    cycle.quantify_seconds = seconds;
    for (GaussianId id : removed) cycle.removed_delta_se += buffer.delta_se[id];
    auto sub = remove_ids(state.scene, removed);
    std::vector<GaussianId> kept;
    kept.reserve(sub.scene.size());
    for (std::size_t i = 0; i < sub.new_id.size(); ++i)
        if (sub.new_id[i] != kRemovedId) kept.push_back(state.kept[i]);
    for (GaussianId id : removed) cycle.removed.push_back(state.kept[id]);
    std::sort(cycle.removed.begin(), cycle.removed.end());
    state.scene = std::move(sub.scene);
    state.kept = std::move(kept);
    cycle.count_after = state.scene.size();
    state.report.cycles.push_back(std::move(cycle));
    state.report.final_count = state.scene.size();
}

inline PruneResult start(const GaussianScene& scene, PruneMode mode) {
    if (scene.empty()) throw InputError("prune: scene is empty");
    PruneResult r;
    r.scene = scene;
    r.kept.resize(scene.size());
    std::iota(r.kept.begin(), r.kept.end(), GaussianId{0});
    r.report.mode = mode;
    r.report.initial_count = r.report.final_count = scene.size();
    return r;
}

inline void check_cover(const GaussianScene& scene, const ErrorBuffer& buffer) {
    if (buffer.size() != scene.size())
        throw InputError("prune: error buffer covers " + std::to_string(buffer.size()) + " ids but scene has " +
                         std::to_string(scene.size()));
}

}  // namespace prune_detail

/// Removes the floor(ratio * M) Gaussians with the lowest error.
inline PruneResult prune_ratio(const GaussianScene& scene, const ErrorBuffer& buffer, double ratio) {
    prune_detail::check_cover(scene, buffer);
    auto r = prune_detail::start(scene, PruneMode::ratio);
    prune_detail::apply_cycle(r, buffer, select_ratio(buffer, ratio), ratio, 0.0);
    return r;
}

/// Removes the lowest-ranked Gaussians whose cumulative error fits in `budget`.
inline PruneResult prune_budget(const GaussianScene& scene, const ErrorBuffer& buffer, double budget,
                                BudgetRule rule = BudgetRule::cumulative) {
    prune_detail::check_cover(scene, buffer);
    auto r = prune_detail::start(scene, PruneMode::budget);
    prune_detail::apply_cycle(r, buffer, select_budget(buffer, budget, rule), budget, 0.0);
    return r;
}

/// Splits the total budget over `cycles` rounds of quantify -> prune(B / C),
/// re-quantifying the surviving Gaussians at the start of every round.
template <typename T = float>
PruneResult iterative_prune(const GaussianScene& scene, std::span<const CameraView> views, double total_budget,
                            int cycles, const QuantConstants& consts = {}, const QuantOptions& opts = {},
                            BudgetRule rule = BudgetRule::cumulative) {
    if (!(total_budget >= 0) || !std::isfinite(total_budget)) throw InputError("iterative_prune: budget must be >= 0");
    if (cycles < 1) throw InputError("iterative_prune: cycles must be >= 1");
    auto r = prune_detail::start(scene, PruneMode::budget);
    const double partial = total_budget / cycles;
    for (int c = 0; c < cycles; ++c) {
        const auto t0 = std::chrono::steady_clock::now();
        const ErrorBuffer buffer = quantify_scene<T>(r.scene, views, consts, opts);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        prune_detail::apply_cycle(r, buffer, select_budget(buffer, partial, rule), partial, secs);
    }
    return r;
}

/// Ratio pruning in several steps with re-quantification in between; each
/// ratio applies to the Gaussians remaining at that step.
template <typename T = float>
PruneResult iterative_ratio_prune(const GaussianScene& scene, std::span<const CameraView> views,
                                  std::span<const double> ratios, const QuantConstants& consts = {},
                                  const QuantOptions& opts = {}) {
    if (ratios.empty()) throw InputError("iterative_ratio_prune: no ratios given");
    auto r = prune_detail::start(scene, PruneMode::ratio);
    for (const double ratio : ratios) {
        const auto t0 = std::chrono::steady_clock::now();
        const ErrorBuffer buffer = quantify_scene<T>(r.scene, views, consts, opts);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        prune_detail::apply_cycle(r, buffer, select_ratio(buffer, ratio), ratio, secs);
    }
    return r;
}

inline nlohmann::json to_json(const PruneReport& report) {
    nlohmann::json cycles = nlohmann::json::array();
    for (std::size_t i = 0; i < report.cycles.size(); ++i) {
        const auto& c = report.cycles[i];
        cycles.push_back({{"cycle", i},
                          {report.mode == PruneMode::ratio ? "ratio" : "partial_budget", c.budget},
                          {"count_before", c.count_before},
                          {"count_after", c.count_after},
                          {"removed_count", c.removed.size()},
                          {"removed_delta_se", c.removed_delta_se},
                          {"quantify_seconds", c.quantify_seconds},
                          {"removed_ids", c.removed}});
    }
    return {{"mode", report.mode == PruneMode::ratio ? "ratio" : "budget"},
            {"initial_count", report.initial_count},
            {"final_count", report.final_count},
            {"cycles", cycles}};
}

}  // namespace gspop
