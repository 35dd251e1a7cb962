#pragma once

#include <concepts>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "alloflow/schedule.hpp"
#include "alloflow/vec.hpp"

namespace alloflow {

// Anything that maps (state, t) -> velocity of the same dim.
template <class F>
concept VelocityField = requires(F f, const Vec& x, double t) {
    { f(x, t) } -> std::convertible_to<Vec>;
};

using VelocityFn = std::function<Vec(const Vec&, double)>;

// x_t = a_t * x + b_t * eps. Endpoints are exact: t=0 returns x, t=1 returns eps.
inline Vec interpolate(const Vec& x, const Vec& eps, double t, const Schedule& sched = {}) {
    require_same_dim(x, eps, "interpolate");
    const ScheduleCoeffs c = sched.eval(t);
    Vec r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = c.a * x[i] + c.b * eps[i];
    return r;
}

// a'_t * x + b'_t * eps; for the linear schedule this is eps - x at every t.
inline Vec conditional_velocity(const Vec& x, const Vec& eps, double t, const Schedule& sched = {}) {
    require_same_dim(x, eps, "conditional_velocity");
    const ScheduleCoeffs c = sched.eval(t);
    Vec r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = c.da * x[i] + c.db * eps[i];
    return r;
}

// Intermediate state of the restoration path, time-normalized so that the
// clean endpoint sits at t=0 and the degraded one at t=t_star:
//   (1 - t/t_star) * z_H + (t/t_star) * z_L,  t in [0, t_star].
inline Vec rescaled_sr_state(const Vec& z_H, const Vec& z_L, double t, double t_star) {
    require_same_dim(z_H, z_L, "rescaled_sr_state");
    if (!(t_star > 0.0 && t_star <= 1.0))
        throw std::invalid_argument("rescaled_sr_state: t_star=" + std::to_string(t_star) +
                                    " outside (0,1]");
    if (!(t >= 0.0 && t <= t_star))
        throw std::invalid_argument("rescaled_sr_state: t=" + std::to_string(t) +
                                    " outside [0, t_star=" + std::to_string(t_star) + "]");
    const double u = t / t_star;
    Vec r(z_H.size());
    for (std::size_t i = 0; i < z_H.size(); ++i) r[i] = (1.0 - u) * z_H[i] + u * z_L[i];
    return r;
}

struct TrajectoryState {
    double t;
    Vec x;
};

// States ordered by strictly decreasing t; at least two states.
struct Trajectory {
    std::vector<TrajectoryState> states;

    const Vec& final_state() const { return states.back().x; }
    std::size_t dim() const { return states.empty() ? 0 : states.front().x.size(); }
};

// Fixed-step Euler integration of dx/dt = field(x, t) from t_start down to
// t_end: x <- x - dt * field(x, t). Records all n_steps+1 states.
template <VelocityField F>
Trajectory euler_sample(F&& field, const Vec& x_start, double t_start, double t_end,
                        std::size_t n_steps) {
    if (!(t_start > t_end && t_end >= 0.0))
        throw std::invalid_argument("euler_sample: need t_start > t_end >= 0, got t_start=" +
                                    std::to_string(t_start) + " t_end=" + std::to_string(t_end));
    if (n_steps < 1) throw std::invalid_argument("euler_sample: n_steps must be >= 1");

    const double dt = (t_start - t_end) / static_cast<double>(n_steps);
    Trajectory traj;
    traj.states.reserve(n_steps + 1);
    Vec x = x_start;
    traj.states.push_back({t_start, x});
    for (std::size_t i = 0; i < n_steps; ++i) {
        const double t = t_start - static_cast<double>(i) * dt;
        const Vec v = field(x, t);
        require_same_dim(v, x, "euler_sample field output");
        if (!is_finite(v))
            throw std::runtime_error("euler_sample: non-finite velocity at t=" + std::to_string(t));
        for (std::size_t k = 0; k < x.size(); ++k) x[k] -= dt * v[k];
        const double t_next = (i + 1 == n_steps) ? t_end : t_start - static_cast<double>(i + 1) * dt;
        traj.states.push_back({t_next, x});
    }
    return traj;
}

// Single Euler step of size t_star from the degraded state:
//   z_hat_H = z_L - t_star * field(z_L, t_star).
template <VelocityField F>
Vec one_step_restore(F&& field, const Vec& z_L, double t_star) {
    if (!(t_star > 0.0 && t_star <= 1.0))
        throw std::invalid_argument("one_step_restore: t_star=" + std::to_string(t_star) +
                                    " outside (0,1]");
    const Vec v = field(z_L, t_star);
    require_same_dim(v, z_L, "one_step_restore field output");
    if (!is_finite(v))
        throw std::runtime_error("one_step_restore: non-finite velocity at t=" +
                                 std::to_string(t_star));
    Vec r(z_L.size());
    for (std::size_t i = 0; i < z_L.size(); ++i) r[i] = z_L[i] - t_star * v[i];
    return r;
}

}  // namespace alloflow
