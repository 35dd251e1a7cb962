#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "alloflow/data.hpp"
#include "alloflow/flow.hpp"
#include "alloflow/net.hpp"
#include "alloflow/rng.hpp"
#include "alloflow/vec.hpp"

namespace alloflow {

// Fixed random linear projection standing in for a perceptual feature
// extractor; entries ~ N(0, 1/cols) so feature magnitudes track input
// magnitudes. Never trained.
class FeatureMap {
public:
    FeatureMap() = default;

    FeatureMap(std::size_t rows, std::size_t cols, std::uint64_t seed)
        : rows_(rows), cols_(cols), w_(rows * cols) {
        Rng rng(seed);
        const double s = 1.0 / std::sqrt(static_cast<double>(cols));
        for (double& x : w_) x = s * rng.normal();
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    Vec apply(const Vec& v) const {
        if (v.size() != cols_) throw std::invalid_argument("FeatureMap::apply: dim mismatch");
        Vec r(rows_, 0.0);
        for (std::size_t j = 0; j < rows_; ++j) {
            const double* row = w_.data() + j * cols_;
            double acc = 0.0;
            for (std::size_t i = 0; i < cols_; ++i) acc += row[i] * v[i];
            r[j] = acc;
        }
        return r;
    }

    Vec apply_transpose(const Vec& u) const {
        if (u.size() != rows_) throw std::invalid_argument("FeatureMap::apply_transpose: dim mismatch");
        Vec r(cols_, 0.0);
        for (std::size_t j = 0; j < rows_; ++j) {
            const double* row = w_.data() + j * cols_;
            for (std::size_t i = 0; i < cols_; ++i) r[i] += row[i] * u[j];
        }
        return r;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> w_;
};

inline double component_mean_sq(const Vec& v) {
    return squared_norm(v) / static_cast<double>(v.size());
}

// L = mean_j (v(x_t, t) - (a'_t x + b'_t eps))_j^2 with x_t = a_t x + b_t eps.
// Accumulates weight * dL/dtheta into buf; returns the unweighted loss.
inline double cfm_loss_and_grad(const VelocityNet& net, const Vec& x, const Vec& eps, double t,
                                GradBuffer& buf, double weight = 1.0, const Schedule& sched = {}) {
    const Vec x_t = interpolate(x, eps, t, sched);
    const Vec target = conditional_velocity(x, eps, t, sched);
    const Vec out = net.forward(x_t, t);
    Vec resid = sub(out, target);
    const double loss = component_mean_sq(resid);
    if (weight != 0.0) {
        const double s = 2.0 * weight / static_cast<double>(resid.size());
        Vec upstream = scale(resid, s);
        net.backward(x_t, t, upstream, buf);
    }
    return loss;
}

// One-step reconstruction loss: z_hat_H = z_L - t_star * v(z_L, t_star),
// L = MSE(z_hat_H, z_H) + lambda * MSE(F z_hat_H, F z_H). The gradient is
// tracked through the single velocity evaluation.
inline double rec_loss_and_grad(const VelocityNet& net, const PairedSample& pair, double t_star,
                                double lambda_rec, const FeatureMap& feature_map, GradBuffer& buf,
                                double weight = 1.0) {
    if (!(t_star > 0.0 && t_star <= 1.0))
        throw std::invalid_argument("rec_loss_and_grad: t_star outside (0,1]");
    const Vec v = net.forward(pair.z_L, t_star);
    Vec z_hat(pair.z_L.size());
    for (std::size_t i = 0; i < z_hat.size(); ++i) z_hat[i] = pair.z_L[i] - t_star * v[i];

    Vec e = sub(z_hat, pair.z_H);
    double loss = component_mean_sq(e);
    Vec dL_dzhat = scale(e, 2.0 / static_cast<double>(e.size()));
    if (lambda_rec != 0.0) {
        const Vec fe = feature_map.apply(e);  // F z_hat - F z_H = F e by linearity
        loss += lambda_rec * component_mean_sq(fe);
        const Vec back = feature_map.apply_transpose(fe);
        axpy(lambda_rec * 2.0 / static_cast<double>(fe.size()), back, dL_dzhat);
    }
    if (weight != 0.0) {
        Vec upstream = scale(dL_dzhat, -t_star * weight);  // d z_hat / d v = -t_star
        net.backward(pair.z_L, t_star, upstream, buf);
    }
    return loss;
}

// Velocity-consistency loss along the rescaled restoration path:
// L = mean_j (v(z_t_sr, t) - (z_L - z_H)/t_star)_j^2, t in [0, t_star].
inline double fatc_loss_and_grad(const VelocityNet& net, const PairedSample& pair, double t,
                                 double t_star, GradBuffer& buf, double weight = 1.0) {
    const Vec z_t_sr = rescaled_sr_state(pair.z_H, pair.z_L, t, t_star);
    Vec target = sub(pair.z_L, pair.z_H);
    for (double& x : target) x /= t_star;
    const Vec out = net.forward(z_t_sr, t);
    Vec resid = sub(out, target);
    const double loss = component_mean_sq(resid);
    if (weight != 0.0) {
        Vec upstream = scale(resid, 2.0 * weight / static_cast<double>(resid.size()));
        net.backward(z_t_sr, t, upstream, buf);
    }
    return loss;
}

// Batch weight w = 1/mean(||z_hat_H - z_H||), clamped at 1e12.
inline double atm_batch_weight(double mean_distance) {
    return 1.0 / std::max(mean_distance, 1e-12);
}

enum class AtmVariant { literal, generated };

inline const char* atm_variant_name(AtmVariant v) {
    return v == AtmVariant::literal ? "literal" : "generated";
}

inline AtmVariant atm_variant_from_name(const std::string& s) {
    if (s == "literal") return AtmVariant::literal;
    if (s == "generated") return AtmVariant::generated;
    throw config_error("unknown atm_variant '" + s + "' (expected literal or generated)");
}

// Score-discrepancy direction between the restoration path state and the
// generative path state at a shared t:
//   d = w * [(z_t_sr - z_t_gen) - t * (v(z_t_sr, t) - v(z_t_gen, t))].
// Both velocity evaluations are plain (gradient-isolated) forwards. Under
// `literal` the restoration state interpolates from the ground-truth z_H;
// under `generated` it interpolates from the current reconstruction z_hat_H.
inline Vec atm_direction(const VelocityNet& net, const Vec& z_hat_H, const PairedSample& pair,
                         double t, double t_star, const Vec& eps, double w, AtmVariant variant) {
    if (!(t > 0.0 && t <= t_star))
        throw std::invalid_argument("atm_direction: t outside (0, t_star]");
    require_same_dim(z_hat_H, pair.z_H, "atm_direction");
    require_same_dim(eps, pair.z_H, "atm_direction");

    const Vec z_t_sr = (variant == AtmVariant::literal)
                           ? rescaled_sr_state(pair.z_H, pair.z_L, t, t_star)
                           : rescaled_sr_state(z_hat_H, pair.z_L, t, t_star);
    Vec z_t_gen(pair.z_H.size());
    for (std::size_t i = 0; i < z_t_gen.size(); ++i)
        z_t_gen[i] = (1.0 - t) * pair.z_H[i] + t * eps[i];

    const Vec v_sr = net.forward(z_t_sr, t);
    const Vec v_gen = net.forward(z_t_gen, t);
    Vec d(pair.z_H.size());
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i] = w * ((z_t_sr[i] - z_t_gen[i]) - t * (v_sr[i] - v_gen[i]));
    return d;
}

// Chain-rule application of a stop-gradient direction d through the one-step
// reconstruction: accumulates grad of <d, z_L - t_star * v(z_L, t_star)> wrt
// theta, i.e. backpropagates upstream = -t_star * d through one forward.
inline void atm_apply(const VelocityNet& net, const Vec& z_L, double t_star, const Vec& d,
                      GradBuffer& buf, double weight = 1.0) {
    if (d.size() != net.in_dim()) throw std::invalid_argument("atm_apply: direction dim mismatch");
    if (weight == 0.0) return;
    Vec upstream = scale(d, -t_star * weight);
    net.backward(z_L, t_star, upstream, buf);
}

}  // namespace alloflow
