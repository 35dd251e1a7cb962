#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "alloflow/data.hpp"
#include "alloflow/errors.hpp"
#include "alloflow/schedule.hpp"

#include "json.hpp"

namespace alloflow {

struct SnrSearchConfig {
    std::vector<double> grid;        // strictly increasing timesteps in (0,1)
    double residual_floor = 1e-12;   // clamp for degenerate residuals

    static std::vector<double> default_grid() {
        std::vector<double> g;
        g.reserve(99);
        for (int i = 1; i <= 99; ++i) g.push_back(static_cast<double>(i) / 100.0);
        return g;
    }

    SnrSearchConfig() : grid(default_grid()) {}

    void validate() const {
        if (grid.empty()) throw config_error("snr.grid must be non-empty");
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (!(grid[i] > 0.0 && grid[i] < 1.0))
                throw config_error("snr.grid entries must lie in (0,1)");
            if (i > 0 && grid[i] <= grid[i - 1])
                throw config_error("snr.grid must be strictly increasing");
        }
        if (residual_floor <= 0.0) throw config_error("snr.residual_floor must be positive");
    }
};

struct TStarResult {
    double t_star = 0.0;
    std::vector<std::pair<double, double>> objective_curve;  // (t, objective)
    double signal_power = 0.0;    // E||z_H||^2
    double residual_power = 0.0;  // E||z_L - z_H||^2

    nlohmann::json to_json() const {
        return {{"t_star", t_star},
                {"signal_power", signal_power},
                {"residual_power", residual_power},
                {"grid_size", objective_curve.size()}};
    }

    std::string curve_csv() const {
        std::ostringstream os;
        os.precision(17);
        os << "t,objective\n";
        for (const auto& [t, obj] : objective_curve) os << t << "," << obj << "\n";
        return os.str();
    }
};

// Raw squared norms, no dim normalization; only the ratio enters the search.
inline std::pair<double, double> dataset_stats(const PairedDataset& ds) {
    if (ds.samples.empty()) throw std::invalid_argument("dataset_stats: empty dataset");
    double signal = 0.0, residual = 0.0;
    for (const PairedSample& p : ds.samples) {
        signal += squared_norm(p.z_H);
        residual += squared_distance(p.z_L, p.z_H);
    }
    const double n = static_cast<double>(ds.samples.size());
    return {signal / n, residual / n};
}

// Anchoring timestep: grid argmin of |schedule SNR(t) - dataset SNR|, where
// the schedule SNR is a_t^2/b_t^2 and the dataset SNR is E||z_H||^2 over
// E||z_L - z_H||^2 (residual clamped below by residual_floor). Ties break
// toward the smaller t.
inline TStarResult find_t_star(const PairedDataset& ds, const SnrSearchConfig& cfg = {},
                               const Schedule& sched = {}) {
    cfg.validate();
    TStarResult res;
    const auto [signal, residual] = dataset_stats(ds);
    res.signal_power = signal;
    res.residual_power = residual;
    const double target_snr = signal / std::max(residual, cfg.residual_floor);

    res.objective_curve.reserve(cfg.grid.size());
    double best = 0.0;
    bool first = true;
    for (double t : cfg.grid) {
        const double obj = std::abs(sched.snr(t) - target_snr);
        res.objective_curve.emplace_back(t, obj);
        if (first || obj < best) {
            best = obj;
            res.t_star = t;
            first = false;
        }
    }
    return res;
}

}  // namespace alloflow
