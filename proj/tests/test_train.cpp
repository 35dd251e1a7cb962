#include "doctest.h"

#include <cmath>

#include "alloflow/losses.hpp"
#include "alloflow/metrics.hpp"
#include "alloflow/train.hpp"

using namespace alloflow;

namespace {

NetConfig small_net(std::uint64_t seed) {
    NetConfig cfg;
    cfg.in_dim = 2;
    cfg.hidden_dims = {32, 32};
    cfg.time_embed_dim = 8;
    cfg.init_seed = seed;
    return cfg;
}

DataSpec ring(std::uint64_t seed, std::size_t modes = 8) {
    DataSpec s;
    s.kind = DataKind::ring_mixture;
    s.dim = 2;
    s.modes = modes;
    s.radius = 1.0;
    s.mode_std = 0.1;
    s.seed = seed;
    return s;
}

// bias-only net realizing a constant field equal to (z_L - z_H)/t_star:
// the exact one-step velocity for a fixed pair
VelocityNet exact_velocity_stub(const PairedSample& pair, double t_star) {
    NetConfig cfg;
    cfg.in_dim = 2;
    cfg.hidden_dims = {};
    cfg.time_embed_dim = 2;
    VelocityNet net = VelocityNet::create(cfg);
    std::fill(net.params.begin(), net.params.end(), 0.0);
    const std::size_t bias_off = net.param_count() - 2;
    net.params[bias_off + 0] = (pair.z_L[0] - pair.z_H[0]) / t_star;
    net.params[bias_off + 1] = (pair.z_L[1] - pair.z_H[1]) / t_star;
    return net;
}

}  // namespace

TEST_CASE("pretrain with zero iterations changes nothing") {
    VelocityNet net = VelocityNet::create(small_net(1));
    const std::vector<double> before = net.params;
    TrainConfig cfg;
    cfg.iterations = 0;
    cfg.batch_size = 8;
    const RunReport report = pretrain(net, ring(2), cfg);
    CHECK(net.params == before);
    CHECK(report.records.empty());
}

TEST_CASE("pretrain is bit-deterministic under a fixed seed") {
    TrainConfig cfg;
    cfg.iterations = 25;
    cfg.batch_size = 8;
    cfg.lr = 1e-3;
    cfg.seed = 99;

    VelocityNet a = VelocityNet::create(small_net(3));
    VelocityNet b = VelocityNet::create(small_net(3));
    const RunReport ra = pretrain(a, ring(4), cfg);
    const RunReport rb = pretrain(b, ring(4), cfg);
    CHECK(a.params == b.params);
    REQUIRE(ra.records.size() == rb.records.size());
    for (std::size_t i = 0; i < ra.records.size(); ++i)
        CHECK(ra.records[i].l_rec == rb.records[i].l_rec);

    cfg.seed = 100;
    VelocityNet c = VelocityNet::create(small_net(3));
    pretrain(c, ring(4), cfg);
    CHECK(c.params != a.params);
}

TEST_CASE("pretrain reduces the flow-matching loss on held-out draws") {
    // the CFM loss has an irreducible conditional-variance floor (~1.0 for
    // this mixture), so compare held-out loss before vs after training
    const DataSpec spec = ring(6, 2);
    const auto eval_cfm = [&](const VelocityNet& net) {
        DataSpec es = spec;
        es.seed = 909;
        const auto xs = sample_clean(es, 512);
        Rng rng(910);
        GradBuffer dummy(net.param_count());
        double acc = 0.0;
        for (const Vec& x : xs)
            acc += cfm_loss_and_grad(net, x, rng.normal_vec(2), rng.uniform01(), dummy, 0.0);
        return acc / static_cast<double>(xs.size());
    };

    VelocityNet net = VelocityNet::create(small_net(5));
    const double before = eval_cfm(net);
    TrainConfig cfg;
    cfg.iterations = 400;
    cfg.batch_size = 32;
    cfg.lr = 2e-3;
    cfg.seed = 7;
    const RunReport report = pretrain(net, spec, cfg);
    const double after = eval_cfm(net);
    CHECK(after < 0.7 * before);
    for (const RunRecord& r : report.records) {
        CHECK(std::isfinite(r.l_rec));
        CHECK(std::isfinite(r.update_norm));
    }
}

TEST_CASE("two-mode pretraining matches fresh data in energy distance") {
    // the same-distribution baseline comes from two independent draws; it is
    // a noisy single realization, so this holds for the fixed seeds below
    // rather than uniformly over seeds
    NetConfig nc;
    nc.in_dim = 2;
    nc.hidden_dims = {64, 64, 64};
    nc.time_embed_dim = 16;
    nc.init_seed = 8;
    VelocityNet net = VelocityNet::create(nc);
    TrainConfig cfg;
    cfg.iterations = 3000;
    cfg.batch_size = 64;
    cfg.lr = 2e-3;
    cfg.seed = 11;
    const DataSpec spec = ring(12, 2);
    pretrain(net, spec, cfg);

    const std::size_t n = 1024;
    DataSpec fresh_a = spec;
    fresh_a.seed = 5001;
    DataSpec fresh_b = spec;
    fresh_b.seed = 5002;
    const auto ref_a = sample_clean(fresh_a, n);
    const auto ref_b = sample_clean(fresh_b, n);
    const double baseline = std::abs(energy_distance(ref_a, ref_b));

    const auto field = [&](const Vec& x, double t) { return net.forward(x, t); };
    Rng rng(314);
    std::vector<Vec> generated;
    generated.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        generated.push_back(euler_sample(field, rng.normal_vec(2), 1.0, 0.0, 100).final_state());

    const double model_ed = energy_distance(generated, ref_a);
    CHECK(model_ed < 2.0 * baseline);
}

TEST_CASE("train_sr with all weights zero changes nothing") {
    VelocityNet net = VelocityNet::create(small_net(9));
    const std::vector<double> before = net.params;
    const PairedDataset ds = build_dataset(ring(10), DegradeSpec{0.8, 0.2, 3}, 128);
    TrainConfig cfg;
    cfg.iterations = 10;
    cfg.batch_size = 4;
    cfg.t_star = 0.5;
    cfg.w_rec = 0.0;
    cfg.w_fatc = 0.0;
    cfg.w_atm = 0.0;
    const RunReport report = train_sr(net, ds, cfg);
    CHECK(net.params == before);
    CHECK(report.records.size() == 10);
}

TEST_CASE("train_sr requires a valid t_star") {
    VelocityNet net = VelocityNet::create(small_net(11));
    const PairedDataset ds = build_dataset(ring(12), DegradeSpec{0.8, 0.2, 3}, 16);
    TrainConfig cfg;
    cfg.t_star = 0.0;
    CHECK_THROWS_AS(train_sr(net, ds, cfg), config_error);
    cfg.t_star = 1.5;
    CHECK_THROWS_AS(train_sr(net, ds, cfg), config_error);
}

TEST_CASE("rec-only training overfits a single pair below 1e-4") {
    VelocityNet net = VelocityNet::create(small_net(13));
    PairedDataset ds;
    ds.samples.push_back({{0.8, -0.3}, {0.5, 0.1}});

    TrainConfig cfg;
    cfg.iterations = 2000;
    cfg.batch_size = 1;
    cfg.lr = 2e-3;
    cfg.t_star = 0.4;
    cfg.w_fatc = 0.0;
    cfg.w_atm = 0.0;
    cfg.lambda_rec = 0.0;
    cfg.seed = 17;
    const RunReport report = train_sr(net, ds, cfg);

    const Vec z_hat = one_step_restore(
        [&](const Vec& z, double t) { return net.forward(z, t); }, ds.samples[0].z_L, 0.4);
    const double err = squared_distance(z_hat, ds.samples[0].z_H) / 2.0;
    CHECK(err < 1e-4);
    CHECK(report.records.back().l_rec < 1e-4);
}

TEST_CASE("full sr loop stays finite and deterministic") {
    const PairedDataset ds = build_dataset(ring(14), DegradeSpec{0.8, 0.2, 21}, 256);
    TrainConfig cfg;
    cfg.iterations = 2000;
    cfg.batch_size = 8;
    cfg.lr = 1e-3;
    cfg.t_star = 0.35;
    cfg.seed = 23;

    VelocityNet net = VelocityNet::create(small_net(15));
    const RunReport report = train_sr(net, ds, cfg);
    REQUIRE(report.records.size() == cfg.iterations);
    for (const RunRecord& r : report.records) {
        CHECK(std::isfinite(r.l_rec));
        CHECK(std::isfinite(r.l_fatc));
        CHECK(std::isfinite(r.atm_grad_norm));
        CHECK(std::isfinite(r.update_norm));
    }

    VelocityNet net2 = VelocityNet::create(small_net(15));
    const RunReport report2 = train_sr(net2, ds, cfg);
    CHECK(net2.params == net.params);
    for (std::size_t i = 0; i < report.records.size(); ++i) {
        CHECK(report.records[i].l_rec == report2.records[i].l_rec);
        CHECK(report.records[i].l_fatc == report2.records[i].l_fatc);
        CHECK(report.records[i].atm_grad_norm == report2.records[i].atm_grad_norm);
    }
}

TEST_CASE("sr training with a tiny t_star never evaluates fatc beyond it") {
    // fatc_loss_and_grad rejects t > t_star, so surviving the loop proves the
    // sampled support stays inside (0, t_star]
    const PairedDataset ds = build_dataset(ring(30), DegradeSpec{0.9, 0.05, 31}, 64);
    VelocityNet net = VelocityNet::create(small_net(16));
    TrainConfig cfg;
    cfg.iterations = 200;
    cfg.batch_size = 8;
    cfg.t_star = 0.01;
    cfg.seed = 3;
    CHECK_NOTHROW(train_sr(net, ds, cfg));
}

TEST_CASE("exact-velocity stub zeroes both losses and reduces the atm direction") {
    // dyadic values keep the stub's round trip exact in floating point
    PairedSample pair{{0.75, -0.25}, {0.5, 0.125}};
    const double t_star = 0.5;
    const VelocityNet stub = exact_velocity_stub(pair, t_star);

    GradBuffer buf(stub.param_count());
    const FeatureMap fm(2, 2, 5);
    CHECK(rec_loss_and_grad(stub, pair, t_star, 1.0, fm, buf) == 0.0);
    CHECK(fatc_loss_and_grad(stub, pair, 0.2, t_star, buf) == 0.0);

    // d reduces to w * (z_sr - z_gen): the stub's velocity is state-independent
    const Vec eps{0.3, 1.1};
    const double t = 0.25, w = 2.0;
    const Vec z_hat = one_step_restore(
        [&](const Vec& z, double tt) { return stub.forward(z, tt); }, pair.z_L, t_star);
    CHECK(max_abs_diff(z_hat, pair.z_H) < 1e-15);

    const Vec d = atm_direction(stub, z_hat, pair, t, t_star, eps, w, AtmVariant::literal);
    const Vec z_sr = rescaled_sr_state(pair.z_H, pair.z_L, t, t_star);
    Vec expect(2);
    for (int i = 0; i < 2; ++i)
        expect[i] = w * (z_sr[i] - ((1.0 - t) * pair.z_H[i] + t * eps[i]));
    CHECK(max_abs_diff(d, expect) < 1e-15);
    CHECK(is_finite(d));
    // reproducible
    CHECK(atm_direction(stub, z_hat, pair, t, t_star, eps, w, AtmVariant::literal) == d);
}

TEST_CASE("atm gradient equals a manual two-pass computation exactly") {
    Rng rng(44);
    VelocityNet net = VelocityNet::create(small_net(17));
    PairedSample pair{rng.normal_vec(2), rng.normal_vec(2)};
    const Vec eps = rng.normal_vec(2);
    const double t_star = 0.6, t = 0.33, w = 1.7;

    const Vec z_hat = one_step_restore(
        [&](const Vec& z, double tt) { return net.forward(z, tt); }, pair.z_L, t_star);
    const Vec d = atm_direction(net, z_hat, pair, t, t_star, eps, w, AtmVariant::literal);

    GradBuffer via_apply(net.param_count());
    atm_apply(net, pair.z_L, t_star, d, via_apply);

    // manual pass: the same stop-grad direction pushed through one backward
    GradBuffer manual(net.param_count());
    net.backward(pair.z_L, t_star, scale(d, -t_star), manual);
    CHECK(via_apply.grads == manual.grads);
}
