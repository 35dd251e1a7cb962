#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <map>

#include "alloflow/pipeline.hpp"

#include "json.hpp"

using namespace alloflow;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) {
        path = fs::temp_directory_path() / ("alloflow_test_" + name);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

ExperimentConfig quick_config(const std::string& out_dir) {
    json j{{"seed", 1234},
           {"output_dir", out_dir},
           {"data", {{"count", 96}, {"mode_std", 0.1}}},
           {"net", {{"hidden_dims", {16, 16}}, {"time_embed_dim", 8}}},
           {"pretrain", {{"iterations", 40}, {"batch_size", 8}, {"lr", 2e-3}}},
           {"train_sr", {{"iterations", 40}, {"batch_size", 4}, {"lr", 1e-3}}},
           {"eval", {{"sample_count", 32}, {"euler_steps", 8}}},
           {"gradcheck", {{"trials", 2}}}};
    return ExperimentConfig::from_json(j);
}

}  // namespace

TEST_CASE("gradcheck harness: quadratic closure is exact to O(h^2)") {
    GradCheckProblem quad;
    quad.setup = [](std::size_t trial) {
        NetConfig cfg;
        cfg.in_dim = 1;
        cfg.hidden_dims = {4};
        cfg.time_embed_dim = 2;
        cfg.init_seed = trial;
        return VelocityNet::create(cfg);
    };
    quad.loss = [](const VelocityNet& net) {
        double s = 0.0;
        for (double p : net.params) s += p * p;
        return s;
    };
    quad.analytic = [](const VelocityNet& net, GradBuffer& buf) {
        for (std::size_t i = 0; i < net.params.size(); ++i) buf.grads[i] += 2.0 * net.params[i];
    };
    const GradCheckReport report = gradcheck(quad, 3, 1e-5, 1e-4);
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-9);
}

TEST_CASE("gradcheck harness: corrupted gradient fails with the offending index") {
    GradCheckProblem bad;
    bad.setup = [](std::size_t) {
        NetConfig cfg;
        cfg.in_dim = 1;
        cfg.hidden_dims = {4};
        cfg.time_embed_dim = 2;
        cfg.init_seed = 77;
        return VelocityNet::create(cfg);
    };
    bad.loss = [](const VelocityNet& net) {
        double s = 0.0;
        for (double p : net.params) s += p * p;
        return s;
    };
    bad.analytic = [](const VelocityNet& net, GradBuffer& buf) {
        for (std::size_t i = 0; i < net.params.size(); ++i) buf.grads[i] += 2.0 * net.params[i];
        buf.grads[5] *= 2.0;  // deliberate corruption
    };
    const GradCheckReport report = gradcheck(bad, 1, 1e-5, 1e-4);
    CHECK_FALSE(report.pass);
    CHECK(report.worst_param == 5);
}

TEST_CASE("run_gradcheck validates all four training gradients") {
    TempDir tmp("gradcheck");
    ExperimentConfig cfg = quick_config(tmp / "runs");
    const auto results = run_gradcheck(cfg);
    REQUIRE(results.size() == 4);
    CHECK(results[0].first == "cfm");
    CHECK(results[1].first == "rec");
    CHECK(results[2].first == "fatc");
    CHECK(results[3].first == "atm");
    for (const auto& [name, report] : results) {
        INFO(name, ": ", report.to_string());
        CHECK(report.pass);
    }
}

TEST_CASE("pipeline stages are file-level deterministic") {
    TempDir tmp("determinism");
    const ExperimentConfig cfg = quick_config(tmp / "runs");

    // repeating every stage with identical config, seed and paths must
    // reproduce each artifact byte for byte
    const std::string ds = tmp / "d.afds";
    const std::string ck = tmp / "p.aflw";
    const std::string sr = tmp / "sr.aflw";
    const std::string restored = tmp / "r.afvs";
    const std::string metrics = tmp / "m.json";
    const auto run_all = [&] {
        run_gen_data(cfg, ds);
        run_pretrain(cfg, ck);
        run_find_tstar(cfg, ds, tmp / "t");
        run_train_sr(cfg, ds, ck, 0.0, sr);
        run_restore(cfg, sr, ds, 0.0, restored);
        run_eval(cfg, restored, ds, metrics);
    };

    run_all();
    std::map<std::string, Bytes> first;
    for (const std::string& p : {ds, ck, sr, restored, metrics, tmp / "t.tstar.json",
                                tmp / "t.objective.csv", ck + ".report.csv", sr + ".report.csv"})
        first[p] = read_file(p);

    run_all();
    for (const auto& [p, bytes] : first) {
        INFO("artifact: ", p);
        CHECK(read_file(p) == bytes);
    }
}

TEST_CASE("artifacts carry the resolved config and inputs are never mutated") {
    TempDir tmp("provenance");
    const ExperimentConfig cfg = quick_config(tmp / "runs");
    const std::string ds_path = tmp / "d.afds";
    run_gen_data(cfg, ds_path);
    const Bytes ds_before = read_file(ds_path);

    // dataset provenance block embeds the generating specs
    const PairedDataset ds = load_dataset(ds_path);
    const json prov = json::parse(ds.provenance);
    CHECK(prov.at("data").at("kind") == "ring_mixture");
    CHECK(prov.contains("residual_power"));

    // sidecar resolved config exists for every artifact
    CHECK(fs::exists(ds_path + ".config.json"));
    const json side = json::parse(std::ifstream(ds_path + ".config.json"));
    CHECK(side.at("subcommand") == "gen-data");
    CHECK(side.at("config").at("seed") == 1234);
    // the written config is fully resolved: re-parsing it is a fixed point
    const ExperimentConfig back = ExperimentConfig::from_json(side.at("config"));
    CHECK(back.to_json() == side.at("config"));

    const std::string ck = tmp / "p.aflw";
    run_pretrain(cfg, ck);
    run_find_tstar(cfg, ds_path, tmp / "t");
    CHECK(read_file(ds_path) == ds_before);  // inputs untouched
}

TEST_CASE("restore then eval against the dataset closes the loop") {
    TempDir tmp("loop");
    ExperimentConfig cfg = quick_config(tmp / "runs");
    const std::string ds = tmp / "d.afds";
    const std::string ck = tmp / "p.aflw";
    run_gen_data(cfg, ds);
    run_pretrain(cfg, ck);
    const TStarResult ts = run_find_tstar(cfg, ds, tmp / "t");
    CHECK(ts.t_star > 0.0);
    CHECK(ts.t_star < 1.0);

    const auto restored = run_restore(cfg, ck, ds, ts.t_star, tmp / "r.afvs");
    CHECK(restored.size() == 96);
    const MetricReport m = run_eval(cfg, tmp / "r.afvs", ds, tmp / "m.json");
    CHECK(m.has_paired);
    CHECK(m.mse >= 0.0);
    CHECK(std::isfinite(m.energy_distance));
    CHECK(fs::exists((tmp / "runs") + std::string("/metrics_index.csv")));

    // self-comparison: zero mse, zero energy distance, capped psnr
    const MetricReport self = run_eval(cfg, ds, ds, tmp / "self.json");
    CHECK(self.mse == 0.0);
    CHECK(self.energy_distance == 0.0);
    CHECK(self.psnr_toy == 300.0);
}

TEST_CASE("sampling produces the requested number of finite vectors") {
    TempDir tmp("sample");
    ExperimentConfig cfg = quick_config(tmp / "runs");
    const std::string ck = tmp / "p.aflw";
    run_pretrain(cfg, ck);
    const auto samples = run_sample(cfg, ck, 8, 17, tmp / "s.afvs");
    CHECK(samples.size() == 17);
    for (const Vec& v : samples) {
        CHECK(v.size() == 2);
        CHECK(is_finite(v));
    }
    // file round-trip
    CHECK(load_vectors(tmp / "s.afvs") == samples);
}

TEST_CASE("checkpoint/data dimension mismatches surface as errors") {
    TempDir tmp("mismatch");
    ExperimentConfig cfg = quick_config(tmp / "runs");
    const std::string ck = tmp / "p.aflw";
    run_pretrain(cfg, ck);

    json j{{"data", {{"kind", "grid_image"}, {"side", 4}, {"count", 8}}},
           {"net", {{"hidden_dims", {8}, }}}};
    ExperimentConfig grid_cfg = ExperimentConfig::from_json(j);
    CHECK_THROWS_AS(run_sample(grid_cfg, ck, 4, 4, tmp / "s.afvs"), std::invalid_argument);
}

TEST_CASE("ALLOFLOW_THREADS is validated") {
    setenv("ALLOFLOW_THREADS", "3", 1);
    CHECK(max_threads() == 3);
    setenv("ALLOFLOW_THREADS", "zero", 1);
    CHECK_THROWS_AS(max_threads(), config_error);
    setenv("ALLOFLOW_THREADS", "0", 1);
    CHECK_THROWS_AS(max_threads(), config_error);
    unsetenv("ALLOFLOW_THREADS");
    CHECK(max_threads() == 1);
}
