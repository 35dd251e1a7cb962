#pragma once

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "alloflow/config.hpp"
#include "alloflow/data.hpp"
#include "alloflow/flow.hpp"
#include "alloflow/gradcheck.hpp"
#include "alloflow/metrics.hpp"
#include "alloflow/net.hpp"
#include "alloflow/snr.hpp"
#include "alloflow/train.hpp"

#include "json.hpp"

namespace alloflow {

// Parallelism cap from ALLOFLOW_THREADS (>= 1). Every stage currently runs
// single-threaded, so the cap is honored by construction.
inline unsigned max_threads() {
    if (const char* env = std::getenv("ALLOFLOW_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw config_error("ALLOFLOW_THREADS must be a positive integer");
        return static_cast<unsigned>(v);
    }
    return 1;
}

namespace detail {

inline void ensure_parent_dir(const std::string& path) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

inline void write_resolved_config(const ExperimentConfig& cfg, const std::string& subcommand,
                                  const nlohmann::json& inputs, const std::string& artifact_path) {
    nlohmann::json j{{"subcommand", subcommand}, {"inputs", inputs}, {"config", cfg.to_json()}};
    write_text_file(artifact_path + ".config.json", j.dump(2) + "\n");
}

inline VelocityNet load_net_for_config(const ExperimentConfig& cfg, const std::string& path) {
    VelocityNet net = VelocityNet::load_file(path, cfg.net.activation);
    if (net.in_dim() != cfg.data.dim)
        throw std::invalid_argument("checkpoint in_dim " + std::to_string(net.in_dim()) +
                                    " does not match data dim " + std::to_string(cfg.data.dim));
    return net;
}

}  // namespace detail

inline std::string run_gen_data(const ExperimentConfig& cfg, const std::string& out_path) {
    const PairedDataset ds = build_dataset(cfg.data, cfg.degrade, cfg.data_count);
    detail::ensure_parent_dir(out_path);
    save_dataset(ds, out_path);
    detail::write_resolved_config(cfg, "gen-data", {}, out_path);
    return out_path;
}

inline RunReport run_pretrain(ExperimentConfig cfg, const std::string& out_checkpoint) {
    VelocityNet net = VelocityNet::create(cfg.net);
    RunReport report = pretrain(net, cfg.data, cfg.pretrain_cfg);
    detail::ensure_parent_dir(out_checkpoint);
    net.save_file(out_checkpoint);
    report.checkpoint_path = out_checkpoint;
    write_text_file(out_checkpoint + ".report.csv", report.to_csv());
    write_text_file(out_checkpoint + ".report.json", report.summary(cfg.to_json()).dump(2) + "\n");
    detail::write_resolved_config(cfg, "pretrain", {}, out_checkpoint);
    return report;
}

inline TStarResult run_find_tstar(const ExperimentConfig& cfg, const std::string& dataset_path,
                                  const std::string& out_prefix) {
    const PairedDataset ds = load_dataset(dataset_path);
    const TStarResult res = find_t_star(ds, cfg.snr);
    detail::ensure_parent_dir(out_prefix);
    write_text_file(out_prefix + ".tstar.json", res.to_json().dump(2) + "\n");
    write_text_file(out_prefix + ".objective.csv", res.curve_csv());
    detail::write_resolved_config(cfg, "find-tstar", {{"dataset", dataset_path}},
                                  out_prefix + ".tstar.json");
    return res;
}

// t_star resolution order: explicit CLI value, then config, then an inline
// SNR search on the training dataset.
inline double resolve_t_star(const ExperimentConfig& cfg, const PairedDataset& ds,
                             double cli_t_star) {
    if (cli_t_star > 0.0) return cli_t_star;
    if (cfg.sr_cfg.t_star > 0.0) return cfg.sr_cfg.t_star;
    return find_t_star(ds, cfg.snr).t_star;
}

inline RunReport run_train_sr(ExperimentConfig cfg, const std::string& dataset_path,
                              const std::string& pretrained_path, double cli_t_star,
                              const std::string& out_checkpoint) {
    const PairedDataset ds = load_dataset(dataset_path);
    VelocityNet net = detail::load_net_for_config(cfg, pretrained_path);
    cfg.sr_cfg.t_star = resolve_t_star(cfg, ds, cli_t_star);

    RunReport report = train_sr(net, ds, cfg.sr_cfg);
    detail::ensure_parent_dir(out_checkpoint);
    net.save_file(out_checkpoint);
    report.checkpoint_path = out_checkpoint;
    write_text_file(out_checkpoint + ".report.csv", report.to_csv());
    write_text_file(out_checkpoint + ".report.json", report.summary(cfg.to_json()).dump(2) + "\n");
    detail::write_resolved_config(
        cfg, "train-sr", {{"dataset", dataset_path}, {"pretrained", pretrained_path}},
        out_checkpoint);
    return report;
}

// Multi-step Euler generation from noise: n trajectories, final states saved.
inline std::vector<Vec> run_sample(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                                   std::size_t steps, std::size_t n, const std::string& out_path) {
    const VelocityNet net = detail::load_net_for_config(cfg, checkpoint_path);
    const auto field = [&net](const Vec& x, double t) { return net.forward(x, t); };
    Rng rng(cfg.sample_seed());
    std::vector<Vec> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec eps = rng.normal_vec(net.in_dim());
        out.push_back(euler_sample(field, eps, 1.0, 0.0, steps).final_state());
    }
    nlohmann::json prov{{"subcommand", "sample"},
                        {"checkpoint", checkpoint_path},
                        {"steps", steps},
                        {"config", cfg.to_json()}};
    detail::ensure_parent_dir(out_path);
    save_vectors(out, prov.dump(), out_path);
    detail::write_resolved_config(cfg, "sample", {{"checkpoint", checkpoint_path}}, out_path);
    return out;
}

// One-step restoration of every pair in the dataset, order preserving.
inline std::vector<Vec> run_restore(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                                    const std::string& dataset_path, double cli_t_star,
                                    const std::string& out_path) {
    const PairedDataset ds = load_dataset(dataset_path);
    const VelocityNet net = detail::load_net_for_config(cfg, checkpoint_path);
    const double t_star = resolve_t_star(cfg, ds, cli_t_star);
    const auto field = [&net](const Vec& x, double t) { return net.forward(x, t); };
    std::vector<Vec> out;
    out.reserve(ds.size());
    for (const PairedSample& p : ds.samples) out.push_back(one_step_restore(field, p.z_L, t_star));
    nlohmann::json prov{{"subcommand", "restore"},
                        {"checkpoint", checkpoint_path},
                        {"dataset", dataset_path},
                        {"t_star", t_star},
                        {"config", cfg.to_json()}};
    detail::ensure_parent_dir(out_path);
    save_vectors(out, prov.dump(), out_path);
    detail::write_resolved_config(cfg, "restore", {{"checkpoint", checkpoint_path},
                                                   {"dataset", dataset_path},
                                                   {"t_star", t_star}},
                                  out_path);
    return out;
}

// Loads either a vector set or the clean side of a dataset.
inline std::vector<Vec> load_vector_like(const std::string& path) {
    const Bytes data = read_file(path);
    if (data.size() >= 4 && data[0] == 'A' && data[1] == 'F' && data[2] == 'D' && data[3] == 'S') {
        const PairedDataset ds = deserialize_dataset(data);
        std::vector<Vec> out;
        out.reserve(ds.size());
        for (const PairedSample& p : ds.samples) out.push_back(p.z_H);
        return out;
    }
    return deserialize_vectors(data);
}

// Paired metrics (mse/psnr) are computed when the counts align; the energy
// distance is always computed. Appends one line to the run-index CSV.
inline MetricReport run_eval(const ExperimentConfig& cfg, const std::string& eval_path,
                             const std::string& reference_path, const std::string& out_json) {
    const std::vector<Vec> evaluated = load_vector_like(eval_path);
    const std::vector<Vec> reference = load_vector_like(reference_path);

    MetricReport report;
    report.eval_count = evaluated.size();
    report.reference_count = reference.size();
    report.seed = cfg.seed;
    report.energy_distance = energy_distance(evaluated, reference);
    if (evaluated.size() == reference.size()) {
        report.mse = mse(evaluated, reference);
        report.psnr_toy = psnr_toy(report.mse, reference);
        report.has_paired = true;
    }

    detail::ensure_parent_dir(out_json);
    write_text_file(out_json, report.to_json().dump(2) + "\n");
    detail::write_resolved_config(cfg, "eval",
                                  {{"evaluated", eval_path}, {"reference", reference_path}},
                                  out_json);

    std::filesystem::create_directories(cfg.output_dir);
    const std::string index_path = cfg.output_dir + "/metrics_index.csv";
    const bool fresh = !std::filesystem::exists(index_path);
    std::ofstream index(index_path, std::ios::app);
    if (!index) throw io_error("cannot open for append: " + index_path);
    if (fresh) index << "report,evaluated,reference,energy_distance,mse,psnr_toy\n";
    index.precision(17);
    index << out_json << "," << eval_path << "," << reference_path << ","
          << report.energy_distance << ",";
    if (report.has_paired)
        index << report.mse << "," << report.psnr_toy;
    else
        index << ",";
    index << "\n";
    return report;
}

// Finite-difference verification of all four training gradients on a small
// randomized net; this is the oracle run behind the training code.
inline std::vector<std::pair<std::string, GradCheckReport>> run_gradcheck(
    const ExperimentConfig& cfg) {
    const std::size_t trials = cfg.gradcheck_trials;
    const double h = cfg.gradcheck_h, tol = cfg.gradcheck_tol;
    const std::uint64_t seed = sub_seed(cfg.seed, "gradcheck");

    NetConfig net_cfg;
    net_cfg.in_dim = 2;
    net_cfg.hidden_dims = {32, 32};
    net_cfg.time_embed_dim = 8;
    net_cfg.activation = cfg.net.activation;

    struct Instance {
        Vec x, eps, d;
        PairedSample pair;
        double t = 0.5, t_star = 0.5, lambda = 0.7;
        FeatureMap feature;
    };
    auto instance = std::make_shared<Instance>();

    auto make_net = [net_cfg, seed](std::size_t trial) {
        NetConfig c = net_cfg;
        c.init_seed = sub_seed(seed, "net." + std::to_string(trial));
        return VelocityNet::create(c);
    };
    auto draw_instance = [seed, instance](std::size_t trial) {
        Rng rng(sub_seed(seed, "instance." + std::to_string(trial)));
        instance->x = rng.normal_vec(2);
        instance->eps = rng.normal_vec(2);
        instance->pair.z_H = rng.normal_vec(2);
        instance->pair.z_L = rng.normal_vec(2);
        instance->t_star = rng.uniform(0.2, 0.9);
        instance->t = rng.uniform_open0(instance->t_star);
        instance->feature = FeatureMap(3, 2, sub_seed(seed, "feature." + std::to_string(trial)));
    };

    std::vector<std::pair<std::string, GradCheckReport>> results;

    GradCheckProblem cfm_problem;
    cfm_problem.setup = [=](std::size_t trial) {
        draw_instance(trial);
        return make_net(trial);
    };
    cfm_problem.loss = [=](const VelocityNet& net) {
        GradBuffer dummy(net.param_count());
        return cfm_loss_and_grad(net, instance->x, instance->eps, instance->t, dummy, 0.0);
    };
    cfm_problem.analytic = [=](const VelocityNet& net, GradBuffer& buf) {
        cfm_loss_and_grad(net, instance->x, instance->eps, instance->t, buf);
    };
    results.emplace_back("cfm", gradcheck(cfm_problem, trials, h, tol));

    GradCheckProblem rec_problem;
    rec_problem.setup = cfm_problem.setup;
    rec_problem.loss = [=](const VelocityNet& net) {
        GradBuffer dummy(net.param_count());
        return rec_loss_and_grad(net, instance->pair, instance->t_star, instance->lambda,
                                 instance->feature, dummy, 0.0);
    };
    rec_problem.analytic = [=](const VelocityNet& net, GradBuffer& buf) {
        rec_loss_and_grad(net, instance->pair, instance->t_star, instance->lambda,
                          instance->feature, buf);
    };
    results.emplace_back("rec", gradcheck(rec_problem, trials, h, tol));

    GradCheckProblem fatc_problem;
    fatc_problem.setup = cfm_problem.setup;
    fatc_problem.loss = [=](const VelocityNet& net) {
        GradBuffer dummy(net.param_count());
        return fatc_loss_and_grad(net, instance->pair, instance->t, instance->t_star, dummy, 0.0);
    };
    fatc_problem.analytic = [=](const VelocityNet& net, GradBuffer& buf) {
        fatc_loss_and_grad(net, instance->pair, instance->t, instance->t_star, buf);
    };
    results.emplace_back("fatc", gradcheck(fatc_problem, trials, h, tol));

    // ATM surrogate <d, z_hat_H(theta)> with d held constant per trial.
    GradCheckProblem atm_problem;
    atm_problem.setup = [=](std::size_t trial) {
        draw_instance(trial);
        VelocityNet net = make_net(trial);
        Rng rng(sub_seed(seed, "atm_eps." + std::to_string(trial)));
        const Vec eps = rng.normal_vec(2);
        const Vec z_hat =
            one_step_restore([&net](const Vec& z, double t) { return net.forward(z, t); },
                             instance->pair.z_L, instance->t_star);
        instance->d = atm_direction(net, z_hat, instance->pair, instance->t, instance->t_star, eps,
                                    1.0, AtmVariant::literal);
        return net;
    };
    atm_problem.loss = [=](const VelocityNet& net) {
        const Vec z_hat =
            one_step_restore([&net](const Vec& z, double t) { return net.forward(z, t); },
                             instance->pair.z_L, instance->t_star);
        return dot(instance->d, z_hat);
    };
    atm_problem.analytic = [=](const VelocityNet& net, GradBuffer& buf) {
        atm_apply(net, instance->pair.z_L, instance->t_star, instance->d, buf);
    };
    results.emplace_back("atm", gradcheck(atm_problem, trials, h, tol));

    return results;
}

}  // namespace alloflow
