#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "alloflow/flow.hpp"
#include "alloflow/vec.hpp"

#include "json.hpp"

namespace alloflow {

struct MetricReport {
    double mse = 0.0;
    double psnr_toy = 0.0;
    double energy_distance = 0.0;
    double curvature = 0.0;
    bool has_paired = false;     // mse/psnr_toy populated
    bool has_curvature = false;
    std::size_t eval_count = 0;
    std::size_t reference_count = 0;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const {
        nlohmann::json j{{"energy_distance", energy_distance},
                         {"eval_count", eval_count},
                         {"reference_count", reference_count},
                         {"seed", seed}};
        if (has_paired) {
            j["mse"] = mse;
            j["psnr_toy"] = psnr_toy;
        }
        if (has_curvature) j["curvature"] = curvature;
        return j;
    }
};

// Mean squared error over all components of all aligned pairs.
inline double mse(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("mse: count mismatch");
    if (a.empty()) throw std::invalid_argument("mse: empty input");
    double s = 0.0;
    std::size_t n_comp = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += squared_distance(a[i], b[i]);
        n_comp += a[i].size();
    }
    return s / static_cast<double>(n_comp);
}

inline constexpr double kPsnrCeilingDb = 300.0;

// 10*log10(range^2/mse) with range the max component magnitude of the
// reference set; capped at 300 dB so identical sets stay finite.
inline double psnr_toy(double mse_value, const std::vector<Vec>& reference) {
    double range = 0.0;
    for (const Vec& v : reference)
        for (double x : v) range = std::max(range, std::abs(x));
    if (mse_value <= 0.0 || range == 0.0) return kPsnrCeilingDb;
    return std::min(kPsnrCeilingDb, 10.0 * std::log10(range * range / mse_value));
}

inline double psnr_toy(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    return psnr_toy(mse(a, b), b);
}

namespace detail {

// Content ordering used to canonicalize the summation order of the
// energy-distance cross term, making the estimate exactly symmetric.
inline bool canonical_less(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i]) continue;
        return std::lexicographical_compare(a[i].begin(), a[i].end(), b[i].begin(), b[i].end());
    }
    return false;
}

inline double mean_pairwise_distance(const std::vector<Vec>& s) {
    // V-statistic: all n^2 ordered pairs including i=j
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j) acc += distance(s[i], s[j]);
    const double n = static_cast<double>(s.size());
    return acc / (n * n);
}

}  // namespace detail

// Two-sample energy distance, plug-in V-statistic form:
//   2 E||a-b|| - E||a-a'|| - E||b-b'||
// Identical sets give exactly 0; swapping the arguments is bit-exact.
inline double energy_distance(const std::vector<Vec>& A, const std::vector<Vec>& B) {
    if (A.size() < 2 || B.size() < 2)
        throw std::invalid_argument("energy_distance: each set needs >= 2 samples");
    const std::vector<Vec>* first = &A;
    const std::vector<Vec>* second = &B;
    if (detail::canonical_less(B, A)) std::swap(first, second);

    double cross = 0.0;
    for (const Vec& a : *first)
        for (const Vec& b : *second) cross += distance(a, b);
    cross /= static_cast<double>(first->size()) * static_cast<double>(second->size());

    return 2.0 * cross - detail::mean_pairwise_distance(*first) -
           detail::mean_pairwise_distance(*second);
}

// Straightness proxy: mean difference of consecutive step velocities,
// normalized by the mean step speed. Exactly 0 for straight constant-speed
// trajectories; degenerate zero-dt steps are skipped with a warning.
inline double trajectory_curvature(const Trajectory& traj) {
    if (traj.states.size() < 3)
        throw std::invalid_argument("trajectory_curvature: need at least 3 states");
    std::vector<Vec> velocities;
    velocities.reserve(traj.states.size() - 1);
    for (std::size_t i = 0; i + 1 < traj.states.size(); ++i) {
        const double dt = traj.states[i + 1].t - traj.states[i].t;
        if (dt == 0.0) {
            std::fprintf(stderr, "trajectory_curvature: skipping zero-length step at t=%g\n",
                         traj.states[i].t);
            continue;
        }
        Vec v = sub(traj.states[i + 1].x, traj.states[i].x);
        for (double& c : v) c /= dt;
        velocities.push_back(std::move(v));
    }
    if (velocities.size() < 2) return 0.0;

    double mean_speed = 0.0;
    for (const Vec& v : velocities) mean_speed += norm(v);
    mean_speed /= static_cast<double>(velocities.size());
    if (mean_speed == 0.0) return 0.0;  // stationary path is straight

    double dev = 0.0;
    for (std::size_t i = 0; i + 1 < velocities.size(); ++i)
        dev += distance(velocities[i + 1], velocities[i]);
    dev /= static_cast<double>(velocities.size() - 1);
    return dev / mean_speed;
}

}  // namespace alloflow
