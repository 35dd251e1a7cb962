#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "alloflow/binio.hpp"
#include "alloflow/errors.hpp"
#include "alloflow/rng.hpp"
#include "alloflow/vec.hpp"

#include "json.hpp"

namespace alloflow {

enum class DataKind { ring_mixture, grid_image };

inline const char* data_kind_name(DataKind k) {
    return k == DataKind::ring_mixture ? "ring_mixture" : "grid_image";
}

inline DataKind data_kind_from_name(const std::string& s) {
    if (s == "ring_mixture") return DataKind::ring_mixture;
    if (s == "grid_image") return DataKind::grid_image;
    throw config_error("unknown data kind '" + s + "' (expected ring_mixture or grid_image)");
}

// Clean-sample generator spec. ring_mixture: k Gaussian modes equally spaced
// on a circle of radius R (dim must be 2). grid_image: s x s patterns built
// from a few integer-frequency sinusoids with random phase (dim = s*s).
struct DataSpec {
    DataKind kind = DataKind::ring_mixture;
    std::size_t dim = 2;
    std::uint64_t seed = 0;
    // ring_mixture
    std::size_t modes = 8;
    double radius = 1.0;
    double mode_std = 0.1;
    // grid_image
    std::size_t side = 8;
    std::size_t waves = 3;

    void validate() const {
        if (kind == DataKind::ring_mixture) {
            if (dim != 2) throw config_error("data: ring_mixture requires dim=2");
            if (modes < 1) throw config_error("data.modes must be positive");
            if (radius <= 0.0) throw config_error("data.radius must be positive");
            if (mode_std < 0.0) throw config_error("data.mode_std must be >= 0");
        } else {
            if (side < 4) throw config_error("data: grid_image requires side >= 4");
            if (dim != side * side) throw config_error("data: grid_image requires dim = side^2");
            if (waves < 1) throw config_error("data.waves must be positive");
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"kind", data_kind_name(kind)}, {"dim", dim}, {"seed", seed}};
        if (kind == DataKind::ring_mixture) {
            j["modes"] = modes;
            j["radius"] = radius;
            j["mode_std"] = mode_std;
        } else {
            j["side"] = side;
            j["waves"] = waves;
        }
        return j;
    }
};

// z_L = mean + contraction * (z_H - mean) + noise_std * eta, eta ~ N(0, I).
// contraction=1, noise_std=0 is the identity degradation.
struct DegradeSpec {
    double contraction = 1.0;  // gamma in (0, 1]
    double noise_std = 0.0;    // sigma_d >= 0
    std::uint64_t seed = 0;

    void validate() const {
        if (!(contraction > 0.0 && contraction <= 1.0))
            throw config_error("degrade.contraction must be in (0,1]");
        if (noise_std < 0.0) throw config_error("degrade.noise_std must be >= 0");
    }

    nlohmann::json to_json() const {
        return {{"contraction", contraction}, {"noise_std", noise_std}, {"seed", seed}};
    }
};

struct PairedSample {
    Vec z_H;
    Vec z_L;
};

struct PairedDataset {
    std::vector<PairedSample> samples;
    std::string provenance;  // canonical JSON of specs + build statistics

    std::size_t size() const { return samples.size(); }
    std::size_t dim() const { return samples.empty() ? 0 : samples.front().z_H.size(); }
};

inline std::vector<Vec> sample_clean(const DataSpec& spec, std::size_t n) {
    spec.validate();
    if (n < 1) throw std::invalid_argument("sample_clean: n must be >= 1");
    constexpr double two_pi = 6.283185307179586476925;
    Rng rng(spec.seed);
    std::vector<Vec> out;
    out.reserve(n);
    if (spec.kind == DataKind::ring_mixture) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t m = rng.uniform_index(spec.modes);
            const double ang = two_pi * static_cast<double>(m) / static_cast<double>(spec.modes);
            Vec v(2);
            v[0] = spec.radius * std::cos(ang) + spec.mode_std * rng.normal();
            v[1] = spec.radius * std::sin(ang) + spec.mode_std * rng.normal();
            out.push_back(std::move(v));
        }
    } else {
        const std::size_t s = spec.side;
        const std::size_t fmax = std::max<std::size_t>(1, s / 4);  // bandlimit
        const double amp = 1.0 / std::sqrt(static_cast<double>(spec.waves));
        for (std::size_t i = 0; i < n; ++i) {
            Vec v(spec.dim, 0.0);
            for (std::size_t w = 0; w < spec.waves; ++w) {
                std::size_t fx = rng.uniform_index(fmax + 1);
                std::size_t fy = rng.uniform_index(fmax + 1);
                if (fx == 0 && fy == 0) fx = 1;
                const double phase = two_pi * rng.uniform01();
                for (std::size_t py = 0; py < s; ++py)
                    for (std::size_t px = 0; px < s; ++px)
                        v[py * s + px] += amp * std::sin(two_pi *
                                                         (static_cast<double>(fx * px) +
                                                          static_cast<double>(fy * py)) /
                                                             static_cast<double>(s) +
                                                         phase);
            }
            out.push_back(std::move(v));
        }
    }
    return out;
}

inline Vec degrade(const Vec& z_H, const DegradeSpec& spec, const Vec& mean, Rng& rng) {
    require_same_dim(z_H, mean, "degrade");
    // residual form of mean + gamma*(z_H - mean): exact identity at gamma=1
    Vec z_L(z_H.size());
    for (std::size_t i = 0; i < z_H.size(); ++i)
        z_L[i] = z_H[i] + (spec.contraction - 1.0) * (z_H[i] - mean[i]) +
                 spec.noise_std * rng.normal();
    return z_L;
}

inline PairedDataset build_dataset(const DataSpec& data_spec, const DegradeSpec& degrade_spec,
                                   std::size_t n) {
    degrade_spec.validate();
    const std::vector<Vec> clean = sample_clean(data_spec, n);

    Vec mean(data_spec.dim, 0.0);
    for (const Vec& z : clean) axpy(1.0, z, mean);
    for (double& m : mean) m /= static_cast<double>(n);

    PairedDataset ds;
    ds.samples.reserve(n);
    Rng rng(degrade_spec.seed);
    double signal_power = 0.0, residual_power = 0.0;
    for (const Vec& z_H : clean) {
        Vec z_L = degrade(z_H, degrade_spec, mean, rng);
        signal_power += squared_norm(z_H);
        residual_power += squared_distance(z_L, z_H);
        ds.samples.push_back({z_H, std::move(z_L)});
    }
    signal_power /= static_cast<double>(n);
    residual_power /= static_cast<double>(n);

    nlohmann::json prov{{"data", data_spec.to_json()},
                        {"degrade", degrade_spec.to_json()},
                        {"count", n},
                        {"mean", mean},
                        {"signal_power", signal_power},
                        {"residual_power", residual_power}};
    ds.provenance = prov.dump();
    return ds;
}

// ---- AFDS dataset file --------------------------------------------------
// magic "AFDS", u32 version=1, u32 dim, u64 count, u32 provenance length +
// UTF-8 bytes, then per pair: dim f64 LE of z_H, dim f64 LE of z_L.

inline Bytes serialize_dataset(const PairedDataset& ds) {
    if (ds.samples.empty()) throw std::invalid_argument("serialize_dataset: empty dataset");
    const std::size_t dim = ds.dim();
    Bytes out;
    put_magic(out, "AFDS");
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(dim));
    put_u64(out, ds.samples.size());
    put_u32(out, static_cast<std::uint32_t>(ds.provenance.size()));
    for (char c : ds.provenance) out.push_back(static_cast<std::uint8_t>(c));
    for (const PairedSample& p : ds.samples) {
        if (p.z_H.size() != dim || p.z_L.size() != dim)
            throw std::invalid_argument("serialize_dataset: inhomogeneous dims");
        for (double x : p.z_H) put_f64(out, x);
        for (double x : p.z_L) put_f64(out, x);
    }
    return out;
}

inline PairedDataset deserialize_dataset(const Bytes& data) {
    ByteReader r(data);
    r.expect_magic("AFDS", "dataset");
    const std::uint32_t version = r.u32();
    if (version != 1) throw io_error("dataset: unsupported version " + std::to_string(version));
    const std::uint32_t dim = r.u32();
    const std::uint64_t count = r.u64();
    if (dim == 0 || count == 0) throw io_error("dataset: degenerate header");
    PairedDataset ds;
    ds.provenance = r.str(r.u32());
    ds.samples.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        PairedSample p;
        p.z_H.resize(dim);
        p.z_L.resize(dim);
        for (double& x : p.z_H) x = r.f64();
        for (double& x : p.z_L) x = r.f64();
        ds.samples.push_back(std::move(p));
    }
    if (!r.exhausted()) throw io_error("dataset: trailing bytes");
    return ds;
}

inline void save_dataset(const PairedDataset& ds, const std::string& path) {
    write_file(path, serialize_dataset(ds));
}

inline PairedDataset load_dataset(const std::string& path) {
    return deserialize_dataset(read_file(path));
}

// ---- AFVS vector-set file (generated or restored samples) ---------------
// magic "AFVS", u32 version=1, u32 dim, u64 count, u32 provenance length +
// UTF-8 bytes, then count * dim f64 LE.

inline Bytes serialize_vectors(const std::vector<Vec>& vs, const std::string& provenance) {
    if (vs.empty()) throw std::invalid_argument("serialize_vectors: empty set");
    const std::size_t dim = vs.front().size();
    Bytes out;
    put_magic(out, "AFVS");
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(dim));
    put_u64(out, vs.size());
    put_u32(out, static_cast<std::uint32_t>(provenance.size()));
    for (char c : provenance) out.push_back(static_cast<std::uint8_t>(c));
    for (const Vec& v : vs) {
        if (v.size() != dim) throw std::invalid_argument("serialize_vectors: inhomogeneous dims");
        for (double x : v) put_f64(out, x);
    }
    return out;
}

inline std::vector<Vec> deserialize_vectors(const Bytes& data, std::string* provenance = nullptr) {
    ByteReader r(data);
    r.expect_magic("AFVS", "vector set");
    const std::uint32_t version = r.u32();
    if (version != 1) throw io_error("vector set: unsupported version " + std::to_string(version));
    const std::uint32_t dim = r.u32();
    const std::uint64_t count = r.u64();
    if (dim == 0 || count == 0) throw io_error("vector set: degenerate header");
    const std::string prov = r.str(r.u32());
    if (provenance) *provenance = prov;
    std::vector<Vec> vs;
    vs.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        Vec v(dim);
        for (double& x : v) x = r.f64();
        vs.push_back(std::move(v));
    }
    if (!r.exhausted()) throw io_error("vector set: trailing bytes");
    return vs;
}

inline void save_vectors(const std::vector<Vec>& vs, const std::string& provenance,
                         const std::string& path) {
    write_file(path, serialize_vectors(vs, provenance));
}

inline std::vector<Vec> load_vectors(const std::string& path, std::string* provenance = nullptr) {
    return deserialize_vectors(read_file(path), provenance);
}

}  // namespace alloflow
