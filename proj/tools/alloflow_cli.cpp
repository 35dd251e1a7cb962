// alloflow: one-step restoration-via-flow-matching lab on synthetic data.
//
// Subcommands wire datasets, training, the anchoring-timestep search,
// restoration and evaluation into reproducible, config-driven experiments.
// Exit codes: 0 success, 1 usage/config error, 2 runtime abort.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "alloflow/alloflow.hpp"

namespace {

using namespace alloflow;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "experiment config (JSON)");
    cmd->add_option("--set", args.overrides, "dotted-path override, e.g. train_sr.lr=0.001")
        ->take_all();
    cmd->add_option("--seed", args.seed, "override the global seed");
}

ExperimentConfig build_config(const CommonArgs& args) {
    nlohmann::json j = nlohmann::json::object();
    if (!args.config_path.empty()) {
        std::ifstream f(args.config_path);
        if (!f) throw config_error("cannot open config file: " + args.config_path);
        try {
            f >> j;
        } catch (const nlohmann::json::exception& e) {
            throw config_error("config parse error in " + args.config_path + ": " + e.what());
        }
    }
    for (const std::string& o : args.overrides) apply_override(j, o);
    if (args.seed >= 0) j["seed"] = static_cast<std::uint64_t>(args.seed);
    return ExperimentConfig::from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"one-step restoration via flow matching on synthetic low-dimensional data"};
    app.require_subcommand(1);

    CommonArgs gen_args, pre_args, tstar_args, sr_args, sample_args, restore_args, eval_args,
        grad_args;
    std::string gen_out, pre_out, tstar_dataset, tstar_out;
    std::string sr_dataset, sr_pretrained, sr_out;
    std::string sample_ckpt, sample_out, restore_ckpt, restore_dataset, restore_out;
    std::string eval_restored, eval_samples, eval_reference, eval_out;
    double sr_tstar = 0.0, restore_tstar = 0.0;
    std::size_t sample_steps = 0, sample_n = 0;

    auto* gen = app.add_subcommand("gen-data", "generate a paired degraded/clean dataset");
    add_common(gen, gen_args);
    gen->add_option("-o,--out", gen_out, "output dataset file (AFDS)")->required();

    auto* pre = app.add_subcommand("pretrain", "flow-matching pretraining from scratch");
    add_common(pre, pre_args);
    pre->add_option("-o,--out", pre_out, "output checkpoint file (AFLW)")->required();

    auto* tstar = app.add_subcommand("find-tstar", "SNR search for the anchoring timestep");
    add_common(tstar, tstar_args);
    tstar->add_option("--dataset", tstar_dataset, "paired dataset file")->required();
    tstar->add_option("-o,--out", tstar_out, "output prefix for .tstar.json / .objective.csv")
        ->required();

    auto* sr = app.add_subcommand("train-sr", "one-step restoration fine-tuning");
    add_common(sr, sr_args);
    sr->add_option("--dataset", sr_dataset, "paired dataset file")->required();
    sr->add_option("--pretrained", sr_pretrained, "pretrained checkpoint")->required();
    sr->add_option("--tstar", sr_tstar, "anchoring timestep (default: config, then inline search)");
    sr->add_option("-o,--out", sr_out, "output checkpoint file (AFLW)")->required();

    auto* sample = app.add_subcommand("sample", "multi-step Euler generation from noise");
    add_common(sample, sample_args);
    sample->add_option("--checkpoint", sample_ckpt, "velocity-net checkpoint")->required();
    sample->add_option("--steps", sample_steps, "Euler steps (default: eval.euler_steps)");
    sample->add_option("-n", sample_n, "number of samples (default: eval.sample_count)");
    sample->add_option("-o,--out", sample_out, "output vector-set file (AFVS)")->required();

    auto* restore = app.add_subcommand("restore", "one-step restoration of every dataset pair");
    add_common(restore, restore_args);
    restore->add_option("--checkpoint", restore_ckpt, "velocity-net checkpoint")->required();
    restore->add_option("--dataset", restore_dataset, "paired dataset file")->required();
    restore->add_option("--tstar", restore_tstar,
                        "anchoring timestep (default: config, then inline search)");
    restore->add_option("-o,--out", restore_out, "output vector-set file (AFVS)")->required();

    auto* eval = app.add_subcommand("eval", "fidelity and distribution metrics");
    add_common(eval, eval_args);
    auto* opt_restored = eval->add_option("--restored", eval_restored, "restored vector-set file");
    auto* opt_samples = eval->add_option("--samples", eval_samples, "generated vector-set file");
    opt_restored->excludes(opt_samples);
    eval->add_option("--reference", eval_reference, "reference (AFDS dataset or AFVS set)")
        ->required();
    eval->add_option("-o,--out", eval_out, "output metric report (JSON)")->required();

    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of all training gradients");
    add_common(grad, grad_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        max_threads();  // validates ALLOFLOW_THREADS up front
        if (gen->parsed()) {
            const ExperimentConfig cfg = build_config(gen_args);
            run_gen_data(cfg, gen_out);
            std::printf("wrote %s (%zu pairs, dim %zu, seed %llu)\n", gen_out.c_str(),
                        cfg.data_count, cfg.data.dim, (unsigned long long)cfg.seed);
        } else if (pre->parsed()) {
            const ExperimentConfig cfg = build_config(pre_args);
            const RunReport report = run_pretrain(cfg, pre_out);
            std::printf("wrote %s (%zu iterations, final cfm loss %.6f, %.1fs)\n", pre_out.c_str(),
                        report.records.size(),
                        report.records.empty() ? 0.0 : report.records.back().l_rec,
                        report.wall_time_seconds);
        } else if (tstar->parsed()) {
            const ExperimentConfig cfg = build_config(tstar_args);
            const TStarResult res = run_find_tstar(cfg, tstar_dataset, tstar_out);
            std::printf("t_star = %.4f (signal %.6g, residual %.6g); wrote %s.tstar.json\n",
                        res.t_star, res.signal_power, res.residual_power, tstar_out.c_str());
        } else if (sr->parsed()) {
            const ExperimentConfig cfg = build_config(sr_args);
            const RunReport report = run_train_sr(cfg, sr_dataset, sr_pretrained, sr_tstar, sr_out);
            std::printf("wrote %s (%zu iterations, final l_rec %.6f, l_fatc %.6f, %.1fs)\n",
                        sr_out.c_str(), report.records.size(),
                        report.records.empty() ? 0.0 : report.records.back().l_rec,
                        report.records.empty() ? 0.0 : report.records.back().l_fatc,
                        report.wall_time_seconds);
        } else if (sample->parsed()) {
            const ExperimentConfig cfg = build_config(sample_args);
            const std::size_t steps = sample_steps ? sample_steps : cfg.eval_euler_steps;
            const std::size_t n = sample_n ? sample_n : cfg.eval_sample_count;
            run_sample(cfg, sample_ckpt, steps, n, sample_out);
            std::printf("wrote %s (%zu samples, %zu Euler steps)\n", sample_out.c_str(), n, steps);
        } else if (restore->parsed()) {
            const ExperimentConfig cfg = build_config(restore_args);
            const auto out =
                run_restore(cfg, restore_ckpt, restore_dataset, restore_tstar, restore_out);
            std::printf("wrote %s (%zu restored samples)\n", restore_out.c_str(), out.size());
        } else if (eval->parsed()) {
            const ExperimentConfig cfg = build_config(eval_args);
            const std::string eval_path = !eval_restored.empty() ? eval_restored : eval_samples;
            if (eval_path.empty())
                throw config_error("eval: one of --restored or --samples is required");
            const MetricReport report = run_eval(cfg, eval_path, eval_reference, eval_out);
            std::printf("energy_distance = %.6g", report.energy_distance);
            if (report.has_paired)
                std::printf(", mse = %.6g, psnr_toy = %.2f dB", report.mse, report.psnr_toy);
            std::printf("; wrote %s\n", eval_out.c_str());
        } else if (grad->parsed()) {
            const ExperimentConfig cfg = build_config(grad_args);
            bool all_pass = true;
            for (const auto& [name, report] : run_gradcheck(cfg)) {
                std::printf("%-4s %s\n", name.c_str(), report.to_string().c_str());
                all_pass = all_pass && report.pass;
            }
            if (!all_pass) return 2;
        }
    } catch (const config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const io_error& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime abort: %s\n", e.what());
        return 2;
    }
    return 0;
}
