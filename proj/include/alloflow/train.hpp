#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "alloflow/data.hpp"
#include "alloflow/losses.hpp"
#include "alloflow/net.hpp"
#include "alloflow/rng.hpp"

#include "json.hpp"

namespace alloflow {

struct TrainConfig {
    std::size_t iterations = 2000;
    std::size_t batch_size = 16;
    double lr = 5e-5;
    double weight_decay = 0.0;
    double lambda_rec = 1.0;  // perceptual term weight inside the reconstruction loss
    double w_rec = 1.0;
    double w_fatc = 1.0;
    double w_atm = 1.0;
    double t_star = 0.0;  // required for the SR loop, in (0,1]
    AtmVariant atm_variant = AtmVariant::literal;
    std::size_t feature_dim = 0;  // 0 -> in_dim
    std::uint64_t seed = 0;

    void validate_common() const {
        if (batch_size < 1) throw config_error("train.batch_size must be positive");
        if (lr < 0.0) throw config_error("train.lr must be >= 0");
        if (weight_decay < 0.0) throw config_error("train.weight_decay must be >= 0");
        if (lambda_rec < 0.0 || w_rec < 0.0 || w_fatc < 0.0 || w_atm < 0.0)
            throw config_error("train: loss weights must be >= 0");
    }

    void validate_sr() const {
        validate_common();
        if (!(t_star > 0.0 && t_star <= 1.0))
            throw config_error("train.t_star must be in (0,1] for the SR loop");
    }
};

struct RunRecord {
    std::size_t iteration;
    double l_rec;          // CFM loss during pretraining
    double l_fatc;
    double atm_grad_norm;
    double update_norm;
};

struct RunReport {
    std::vector<RunRecord> records;
    double wall_time_seconds = 0.0;
    std::string checkpoint_path;

    std::string to_csv() const {
        std::ostringstream os;
        os.precision(17);
        os << "iteration,l_rec,l_fatc,atm_grad_norm,update_norm\n";
        for (const RunRecord& r : records)
            os << r.iteration << "," << r.l_rec << "," << r.l_fatc << "," << r.atm_grad_norm << ","
               << r.update_norm << "\n";
        return os.str();
    }

    nlohmann::json summary(const nlohmann::json& config_echo) const {
        nlohmann::json j{{"iterations", records.size()},
                         {"wall_time_seconds", wall_time_seconds},
                         {"checkpoint_path", checkpoint_path},
                         {"config", config_echo}};
        if (!records.empty()) {
            j["final_l_rec"] = records.back().l_rec;
            j["final_l_fatc"] = records.back().l_fatc;
            j["final_atm_grad_norm"] = records.back().atm_grad_norm;
        }
        return j;
    }
};

namespace detail {

inline double update_norm(const std::vector<double>& before, const std::vector<double>& after) {
    double s = 0.0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        const double d = after[i] - before[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline void check_finite_loss(double loss, std::size_t iter, const char* name) {
    if (!std::isfinite(loss))
        throw std::runtime_error("iteration " + std::to_string(iter) + ": " + name +
                                 " is non-finite");
}

}  // namespace detail

// Conditional flow-matching pretraining: per iteration draw a fresh clean
// batch, per element draw eps ~ N(0,I) and t ~ U[0,1], average the CFM loss
// gradient, Adam step. The CFM loss is recorded in the l_rec column.
inline RunReport pretrain(VelocityNet& net, const DataSpec& data_spec, const TrainConfig& cfg) {
    cfg.validate_common();
    data_spec.validate();
    if (data_spec.dim != net.in_dim())
        throw std::invalid_argument("pretrain: data dim != net in_dim");

    const auto t0 = std::chrono::steady_clock::now();
    RunReport report;
    report.records.reserve(cfg.iterations);

    Rng noise_rng(sub_seed(cfg.seed, "pretrain.noise"));
    Rng time_rng(sub_seed(cfg.seed, "pretrain.time"));
    DataSpec batch_spec = data_spec;

    GradBuffer buf(net.param_count());
    AdamState adam = AdamState::for_net(net, cfg.lr, cfg.weight_decay);
    const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
    std::vector<double> before;

    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        batch_spec.seed = sub_seed(cfg.seed, "pretrain.data." + std::to_string(iter));
        const std::vector<Vec> batch = sample_clean(batch_spec, cfg.batch_size);

        double loss = 0.0;
        for (const Vec& x : batch) {
            const Vec eps = noise_rng.normal_vec(net.in_dim());
            const double t = time_rng.uniform01();
            loss += cfm_loss_and_grad(net, x, eps, t, buf, inv_b);
        }
        loss *= inv_b;
        detail::check_finite_loss(loss, iter, "cfm loss");

        before = net.params;
        adam_step(net, buf, adam);
        report.records.push_back({iter, loss, 0.0, 0.0, detail::update_norm(before, net.params)});
    }
    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// One-step SR fine-tuning. Per iteration: draw a batch of pairs; first pass
// computes every reconstruction z_hat_H and the batch weight
// w = 1/max(mean ||z_hat_H - z_H||, 1e-12); second pass accumulates the
// reconstruction, velocity-consistency and trajectory-matching gradients
// (each scaled by its config weight / batch size) and applies one Adam step.
inline RunReport train_sr(VelocityNet& net, const PairedDataset& ds, const TrainConfig& cfg) {
    cfg.validate_sr();
    if (ds.samples.empty()) throw std::invalid_argument("train_sr: empty dataset");
    if (ds.dim() != net.in_dim()) throw std::invalid_argument("train_sr: dataset dim != net in_dim");

    const auto t0 = std::chrono::steady_clock::now();
    RunReport report;
    report.records.reserve(cfg.iterations);

    const std::size_t feat_dim = cfg.feature_dim == 0 ? net.in_dim() : cfg.feature_dim;
    const FeatureMap feature_map(feat_dim, net.in_dim(), sub_seed(cfg.seed, "train_sr.feature"));

    Rng pick_rng(sub_seed(cfg.seed, "train_sr.pick"));
    Rng time_rng(sub_seed(cfg.seed, "train_sr.time"));
    Rng noise_rng(sub_seed(cfg.seed, "train_sr.noise"));

    GradBuffer buf(net.param_count());
    GradBuffer atm_buf(net.param_count());
    AdamState adam = AdamState::for_net(net, cfg.lr, cfg.weight_decay);
    const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);

    std::vector<const PairedSample*> batch(cfg.batch_size);
    std::vector<Vec> z_hat(cfg.batch_size);
    std::vector<double> before;

    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        // pass 1: reconstructions and the batch weight
        double mean_dist = 0.0;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            batch[b] = &ds.samples[pick_rng.uniform_index(ds.samples.size())];
            const Vec v = net.forward(batch[b]->z_L, cfg.t_star);
            Vec zh(v.size());
            for (std::size_t i = 0; i < zh.size(); ++i)
                zh[i] = batch[b]->z_L[i] - cfg.t_star * v[i];
            mean_dist += distance(zh, batch[b]->z_H);
            z_hat[b] = std::move(zh);
        }
        mean_dist *= inv_b;
        const double w_t = atm_batch_weight(mean_dist);

        // pass 2: gradient accumulation in fixed element order
        double l_rec = 0.0, l_fatc = 0.0;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const PairedSample& pair = *batch[b];
            l_rec += rec_loss_and_grad(net, pair, cfg.t_star, cfg.lambda_rec, feature_map, buf,
                                       cfg.w_rec * inv_b);
            const double t = time_rng.uniform_open0(cfg.t_star);  // t in (0, t_star]
            l_fatc += fatc_loss_and_grad(net, pair, t, cfg.t_star, buf, cfg.w_fatc * inv_b);
            const Vec eps = noise_rng.normal_vec(net.in_dim());
            const Vec d =
                atm_direction(net, z_hat[b], pair, t, cfg.t_star, eps, w_t, cfg.atm_variant);
            atm_apply(net, pair.z_L, cfg.t_star, d, atm_buf, cfg.w_atm * inv_b);
        }
        l_rec *= inv_b;
        l_fatc *= inv_b;
        detail::check_finite_loss(l_rec, iter, "l_rec");
        detail::check_finite_loss(l_fatc, iter, "l_fatc");
        const double atm_grad_norm = atm_buf.norm();
        detail::check_finite_loss(atm_grad_norm, iter, "atm gradient norm");
        buf.add_scaled(atm_buf, 1.0);
        atm_buf.zero();

        before = net.params;
        adam_step(net, buf, adam);
        report.records.push_back(
            {iter, l_rec, l_fatc, atm_grad_norm, detail::update_norm(before, net.params)});
    }
    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace alloflow
