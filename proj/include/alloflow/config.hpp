#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "alloflow/data.hpp"
#include "alloflow/errors.hpp"
#include "alloflow/net.hpp"
#include "alloflow/rng.hpp"
#include "alloflow/snr.hpp"
#include "alloflow/train.hpp"

#include "json.hpp"

namespace alloflow {

// Canonical structured config for every pipeline stage. Unknown keys are
// rejected; each run writes back the fully resolved form it actually used.
// Per-stage seeds are derived from the single global seed by hashing the
// component name (see sub_seed), so overriding one stage never perturbs
// another.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "alloflow_runs";

    DataSpec data;                 // data.seed is derived, not configured
    std::size_t data_count = 2048; // "count" inside the data section
    DegradeSpec degrade{0.8, 0.2, 0};

    // defaults tuned on the ring benchmark
    NetConfig net{.in_dim = 2, .hidden_dims = {64, 64, 64}};

    SnrSearchConfig snr;

    TrainConfig pretrain_cfg{.iterations = 3000, .batch_size = 64, .lr = 2e-3};
    TrainConfig sr_cfg{.iterations = 2000, .batch_size = 16, .lr = 1e-3};

    std::size_t eval_sample_count = 2048;
    std::size_t eval_euler_steps = 100;

    std::size_t gradcheck_trials = 100;
    double gradcheck_h = 1e-5;
    double gradcheck_tol = 1e-4;

    void resolve_seeds() {
        data.seed = sub_seed(seed, "data");
        degrade.seed = sub_seed(seed, "degrade");
        net.init_seed = sub_seed(seed, "net.init");
        pretrain_cfg.seed = sub_seed(seed, "pretrain");
        sr_cfg.seed = sub_seed(seed, "train_sr");
    }

    std::uint64_t eval_seed() const { return sub_seed(seed, "eval"); }
    std::uint64_t sample_seed() const { return sub_seed(seed, "sample"); }

    void validate() const {
        data.validate();
        if (data_count < 1) throw config_error("data.count must be positive");
        degrade.validate();
        net.validate();
        snr.validate();
        pretrain_cfg.validate_common();
        sr_cfg.validate_common();
        if (eval_sample_count < 2) throw config_error("eval.sample_count must be >= 2");
        if (eval_euler_steps < 1) throw config_error("eval.euler_steps must be >= 1");
        if (gradcheck_trials < 1) throw config_error("gradcheck.trials must be positive");
        if (gradcheck_h <= 0.0 || gradcheck_tol <= 0.0)
            throw config_error("gradcheck.h and gradcheck.tol must be positive");
    }

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load_file(const std::string& path);
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& prefix) {
    if (!j.is_object()) throw config_error("config section '" + prefix + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw config_error("unknown config key '" +
                               (prefix.empty() ? it.key() : prefix + "." + it.key()) + "'");
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw config_error(std::string("config key '") + key + "' has the wrong type");
    }
}

inline nlohmann::json train_section_json(const TrainConfig& c, bool sr) {
    nlohmann::json j{{"iterations", c.iterations},
                     {"batch_size", c.batch_size},
                     {"lr", c.lr},
                     {"weight_decay", c.weight_decay}};
    if (sr) {
        j["lambda_rec"] = c.lambda_rec;
        j["w_rec"] = c.w_rec;
        j["w_fatc"] = c.w_fatc;
        j["w_atm"] = c.w_atm;
        j["atm_variant"] = atm_variant_name(c.atm_variant);
        j["feature_dim"] = c.feature_dim;
        j["t_star"] = c.t_star;  // 0 means "search at run time"
    }
    return j;
}

inline void parse_train_section(const nlohmann::json& j, const std::string& prefix, bool sr,
                                TrainConfig& c) {
    std::set<std::string> known{"iterations", "batch_size", "lr", "weight_decay"};
    if (sr)
        known.insert({"lambda_rec", "w_rec", "w_fatc", "w_atm", "atm_variant", "feature_dim",
                      "t_star"});
    reject_unknown_keys(j, known, prefix);
    c.iterations = get_or<std::size_t>(j, "iterations", c.iterations);
    c.batch_size = get_or<std::size_t>(j, "batch_size", c.batch_size);
    c.lr = get_or<double>(j, "lr", c.lr);
    c.weight_decay = get_or<double>(j, "weight_decay", c.weight_decay);
    if (sr) {
        c.lambda_rec = get_or<double>(j, "lambda_rec", c.lambda_rec);
        c.w_rec = get_or<double>(j, "w_rec", c.w_rec);
        c.w_fatc = get_or<double>(j, "w_fatc", c.w_fatc);
        c.w_atm = get_or<double>(j, "w_atm", c.w_atm);
        c.atm_variant = atm_variant_from_name(
            get_or<std::string>(j, "atm_variant", atm_variant_name(c.atm_variant)));
        c.feature_dim = get_or<std::size_t>(j, "feature_dim", c.feature_dim);
        c.t_star = get_or<double>(j, "t_star", c.t_star);
    }
}

}  // namespace detail

inline nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json jdata{{"kind", data_kind_name(data.kind)},
                         {"dim", data.dim},
                         {"count", data_count}};
    if (data.kind == DataKind::ring_mixture) {
        jdata["modes"] = data.modes;
        jdata["radius"] = data.radius;
        jdata["mode_std"] = data.mode_std;
    } else {
        jdata["side"] = data.side;
        jdata["waves"] = data.waves;
    }
    return nlohmann::json{
        {"seed", seed},
        {"output_dir", output_dir},
        {"data", jdata},
        {"degrade", {{"contraction", degrade.contraction}, {"noise_std", degrade.noise_std}}},
        {"net",
         {{"hidden_dims", net.hidden_dims},
          {"time_embed_dim", net.time_embed_dim},
          {"activation", activation_name(net.activation)}}},
        {"snr", {{"grid", snr.grid}, {"residual_floor", snr.residual_floor}}},
        {"pretrain", detail::train_section_json(pretrain_cfg, false)},
        {"train_sr", detail::train_section_json(sr_cfg, true)},
        {"eval", {{"sample_count", eval_sample_count}, {"euler_steps", eval_euler_steps}}},
        {"gradcheck",
         {{"trials", gradcheck_trials}, {"h", gradcheck_h}, {"tol", gradcheck_tol}}}};
}

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    detail::reject_unknown_keys(j, {"seed", "output_dir", "data", "degrade", "net", "snr",
                                    "pretrain", "train_sr", "eval", "gradcheck"},
                                "");
    cfg.seed = detail::get_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.output_dir = detail::get_or<std::string>(j, "output_dir", cfg.output_dir);

    if (j.contains("data")) {
        const auto& jd = j.at("data");
        cfg.data.kind = data_kind_from_name(
            detail::get_or<std::string>(jd, "kind", data_kind_name(cfg.data.kind)));
        if (cfg.data.kind == DataKind::ring_mixture) {
            detail::reject_unknown_keys(jd, {"kind", "dim", "count", "modes", "radius", "mode_std"},
                                        "data");
            cfg.data.modes = detail::get_or<std::size_t>(jd, "modes", cfg.data.modes);
            cfg.data.radius = detail::get_or<double>(jd, "radius", cfg.data.radius);
            cfg.data.mode_std = detail::get_or<double>(jd, "mode_std", cfg.data.mode_std);
            cfg.data.dim = detail::get_or<std::size_t>(jd, "dim", 2);
        } else {
            detail::reject_unknown_keys(jd, {"kind", "dim", "count", "side", "waves"}, "data");
            cfg.data.side = detail::get_or<std::size_t>(jd, "side", cfg.data.side);
            cfg.data.waves = detail::get_or<std::size_t>(jd, "waves", cfg.data.waves);
            cfg.data.dim = detail::get_or<std::size_t>(jd, "dim", cfg.data.side * cfg.data.side);
        }
        cfg.data_count = detail::get_or<std::size_t>(jd, "count", cfg.data_count);
    }
    if (j.contains("degrade")) {
        const auto& jd = j.at("degrade");
        detail::reject_unknown_keys(jd, {"contraction", "noise_std"}, "degrade");
        cfg.degrade.contraction = detail::get_or<double>(jd, "contraction", cfg.degrade.contraction);
        cfg.degrade.noise_std = detail::get_or<double>(jd, "noise_std", cfg.degrade.noise_std);
    }
    if (j.contains("net")) {
        const auto& jn = j.at("net");
        detail::reject_unknown_keys(jn, {"hidden_dims", "time_embed_dim", "activation"}, "net");
        cfg.net.hidden_dims =
            detail::get_or<std::vector<std::size_t>>(jn, "hidden_dims", cfg.net.hidden_dims);
        cfg.net.time_embed_dim =
            detail::get_or<std::size_t>(jn, "time_embed_dim", cfg.net.time_embed_dim);
        cfg.net.activation = activation_from_name(
            detail::get_or<std::string>(jn, "activation", activation_name(cfg.net.activation)));
    }
    if (j.contains("snr")) {
        const auto& js = j.at("snr");
        detail::reject_unknown_keys(js, {"grid", "residual_floor"}, "snr");
        cfg.snr.grid = detail::get_or<std::vector<double>>(js, "grid", cfg.snr.grid);
        cfg.snr.residual_floor =
            detail::get_or<double>(js, "residual_floor", cfg.snr.residual_floor);
    }
    if (j.contains("pretrain"))
        detail::parse_train_section(j.at("pretrain"), "pretrain", false, cfg.pretrain_cfg);
    if (j.contains("train_sr"))
        detail::parse_train_section(j.at("train_sr"), "train_sr", true, cfg.sr_cfg);
    if (j.contains("eval")) {
        const auto& je = j.at("eval");
        detail::reject_unknown_keys(je, {"sample_count", "euler_steps"}, "eval");
        cfg.eval_sample_count =
            detail::get_or<std::size_t>(je, "sample_count", cfg.eval_sample_count);
        cfg.eval_euler_steps = detail::get_or<std::size_t>(je, "euler_steps", cfg.eval_euler_steps);
    }
    if (j.contains("gradcheck")) {
        const auto& jg = j.at("gradcheck");
        detail::reject_unknown_keys(jg, {"trials", "h", "tol"}, "gradcheck");
        cfg.gradcheck_trials = detail::get_or<std::size_t>(jg, "trials", cfg.gradcheck_trials);
        cfg.gradcheck_h = detail::get_or<double>(jg, "h", cfg.gradcheck_h);
        cfg.gradcheck_tol = detail::get_or<double>(jg, "tol", cfg.gradcheck_tol);
    }

    // net input dim always tracks the data dim
    cfg.net.in_dim = cfg.data.dim;
    cfg.resolve_seeds();
    cfg.validate();
    return cfg;
}

inline ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw config_error("config parse error in " + path + ": " + e.what());
    }
    return from_json(j);
}

// Dotted-path override, e.g. "train_sr.lr=0.001". The value is parsed as
// JSON when possible and treated as a string otherwise.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw config_error("override '" + assignment + "' is not of the form key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string value_text = assignment.substr(eq + 1);

    nlohmann::json value;
    try {
        value = nlohmann::json::parse(value_text);
    } catch (const nlohmann::json::exception&) {
        value = value_text;
    }

    nlohmann::json* node = &j;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw config_error("override '" + assignment + "' has an empty key segment");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

}  // namespace alloflow
