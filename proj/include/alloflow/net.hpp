#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "alloflow/binio.hpp"
#include "alloflow/errors.hpp"
#include "alloflow/rng.hpp"
#include "alloflow/vec.hpp"

namespace alloflow {

enum class Activation { tanh_fn, silu };

inline const char* activation_name(Activation a) {
    return a == Activation::silu ? "silu" : "tanh";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "silu") return Activation::silu;
    if (s == "tanh") return Activation::tanh_fn;
    throw config_error("unknown activation '" + s + "' (expected silu or tanh)");
}

struct NetConfig {
    std::size_t in_dim = 2;
    std::vector<std::size_t> hidden_dims = {64, 64};
    std::size_t time_embed_dim = 16;  // even; sinusoidal features appended to the input
    Activation activation = Activation::silu;
    std::uint64_t init_seed = 0;

    void validate() const {
        if (in_dim < 1) throw config_error("net.in_dim must be positive");
        if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
            throw config_error("net.time_embed_dim must be a positive even integer");
        for (std::size_t h : hidden_dims)
            if (h < 1) throw config_error("net.hidden_dims entries must be positive");
    }
};

// Flat gradient accumulator aligned with VelocityNet::params.
struct GradBuffer {
    std::vector<double> grads;
    std::int64_t accumulation_count = 0;

    GradBuffer() = default;
    explicit GradBuffer(std::size_t n) : grads(n, 0.0) {}

    void zero() {
        std::fill(grads.begin(), grads.end(), 0.0);
        accumulation_count = 0;
    }

    void add_scaled(const GradBuffer& other, double s) {
        if (grads.size() != other.grads.size())
            throw std::invalid_argument("GradBuffer::add_scaled: size mismatch");
        for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += s * other.grads[i];
        accumulation_count += other.accumulation_count;
    }

    double norm() const {
        double s = 0.0;
        for (double g : grads) s += g * g;
        return std::sqrt(s);
    }
};

// Fully connected velocity field v(z, t) on data space. The timestep enters
// through sinusoidal features [sin(2^k*pi*t), cos(2^k*pi*t)], k = 0..E/2-1,
// concatenated after z at the input layer. Hidden layers use the configured
// activation; the output layer is linear and always maps back to in_dim.
//
// Parameter layout (also the AFLW checkpoint payload order): for each layer
// in order, the weight matrix row-major (out x in), then the bias (out).
class VelocityNet {
public:
    NetConfig config;
    std::vector<double> params;

    VelocityNet() = default;

    static VelocityNet create(const NetConfig& cfg) {
        cfg.validate();
        VelocityNet net;
        net.config = cfg;
        net.build_dims();
        net.params.assign(net.param_count_, 0.0);
        // He-style fan-in scaling, zero biases
        Rng rng(cfg.init_seed);
        std::size_t off = 0;
        for (std::size_t l = 0; l < net.layer_in_.size(); ++l) {
            const std::size_t in = net.layer_in_[l], out = net.layer_out_[l];
            const double std_w = std::sqrt(2.0 / static_cast<double>(in));
            for (std::size_t k = 0; k < in * out; ++k) net.params[off + k] = std_w * rng.normal();
            off += in * out + out;  // biases stay zero
        }
        return net;
    }

    std::size_t param_count() const { return param_count_; }
    std::size_t in_dim() const { return config.in_dim; }
    std::size_t layer_count() const { return layer_in_.size(); }
    std::size_t layer_in(std::size_t l) const { return layer_in_[l]; }
    std::size_t layer_out(std::size_t l) const { return layer_out_[l]; }

    Vec time_features(double t) const {
        constexpr double pi = 3.14159265358979323846;
        Vec f(config.time_embed_dim);
        double freq = pi;  // 2^k * pi
        for (std::size_t k = 0; k < config.time_embed_dim / 2; ++k) {
            f[2 * k] = std::sin(freq * t);
            f[2 * k + 1] = std::cos(freq * t);
            freq *= 2.0;
        }
        return f;
    }

    Vec forward(const Vec& z, double t) const {
        Scratch s;
        run_forward(z, t, s);
        return s.acts.back();
    }

    // Accumulates d(upstream . forward)/d(params) into buf and returns
    // d(upstream . forward)/dz. Re-runs the forward pass internally.
    Vec backward(const Vec& z, double t, const Vec& upstream, GradBuffer& buf) const {
        if (upstream.size() != config.in_dim)
            throw std::invalid_argument("VelocityNet::backward: upstream dim mismatch");
        if (buf.grads.size() != param_count_)
            throw std::invalid_argument("VelocityNet::backward: GradBuffer not aligned with params");
        Scratch s;
        run_forward(z, t, s);

        const std::size_t L = layer_in_.size();
        Vec delta = upstream;  // output layer is linear
        for (std::size_t li = L; li-- > 0;) {
            const std::size_t in = layer_in_[li], out = layer_out_[li];
            const double* W = params.data() + offsets_[li];
            double* gW = buf.grads.data() + offsets_[li];
            double* gb = gW + in * out;
            const Vec& a_in = s.acts[li];

            for (std::size_t j = 0; j < out; ++j) {
                const double dj = delta[j];
                gb[j] += dj;
                double* gWrow = gW + j * in;
                for (std::size_t i = 0; i < in; ++i) gWrow[i] += dj * a_in[i];
            }
            Vec delta_in(in, 0.0);
            for (std::size_t j = 0; j < out; ++j) {
                const double dj = delta[j];
                const double* Wrow = W + j * in;
                for (std::size_t i = 0; i < in; ++i) delta_in[i] += Wrow[i] * dj;
            }
            if (li > 0) {
                // chain through the activation that produced acts[li]
                const Vec& pre = s.pres[li - 1];
                for (std::size_t i = 0; i < in; ++i) delta_in[i] *= act_deriv(pre[i]);
            }
            delta = std::move(delta_in);
        }
        buf.accumulation_count += 1;
        return Vec(delta.begin(), delta.begin() + static_cast<std::ptrdiff_t>(config.in_dim));
    }

    Bytes save() const {
        Bytes out;
        put_magic(out, "AFLW");
        put_u32(out, 1);
        put_u32(out, static_cast<std::uint32_t>(config.in_dim));
        put_u32(out, static_cast<std::uint32_t>(layer_in_.size()));
        for (std::size_t l = 0; l < layer_in_.size(); ++l) {
            put_u32(out, static_cast<std::uint32_t>(layer_in_[l]));
            put_u32(out, static_cast<std::uint32_t>(layer_out_[l]));
        }
        for (double p : params) put_f64(out, p);
        return out;
    }

    // The checkpoint stores topology and weights; the activation kind comes
    // from the run config (it has no field in the format).
    static VelocityNet load(const Bytes& data, Activation activation = Activation::silu) {
        ByteReader r(data);
        r.expect_magic("AFLW", "checkpoint");
        const std::uint32_t version = r.u32();
        if (version != 1)
            throw io_error("checkpoint: unsupported version " + std::to_string(version));
        const std::uint32_t in_dim = r.u32();
        const std::uint32_t n_layers = r.u32();
        if (in_dim == 0 || n_layers == 0) throw io_error("checkpoint: degenerate dims");

        std::vector<std::size_t> lin(n_layers), lout(n_layers);
        for (std::uint32_t l = 0; l < n_layers; ++l) {
            lin[l] = r.u32();
            lout[l] = r.u32();
            if (lin[l] == 0 || lout[l] == 0) throw io_error("checkpoint: zero layer dim");
            if (l > 0 && lin[l] != lout[l - 1])
                throw io_error("checkpoint: inconsistent layer dims");
        }
        if (lout[n_layers - 1] != in_dim)
            throw io_error("checkpoint: output dim does not match in_dim");
        if (lin[0] < in_dim + 2 || (lin[0] - in_dim) % 2 != 0)
            throw io_error("checkpoint: first layer dim inconsistent with time embedding");

        VelocityNet net;
        net.config.in_dim = in_dim;
        net.config.time_embed_dim = lin[0] - in_dim;
        net.config.hidden_dims.assign(lout.begin(), lout.end() - 1);
        net.config.activation = activation;
        net.config.init_seed = 0;
        net.build_dims();
        net.params.resize(net.param_count_);
        for (double& p : net.params) p = r.f64();
        if (!r.exhausted()) throw io_error("checkpoint: trailing bytes");
        return net;
    }

    void save_file(const std::string& path) const { write_file(path, save()); }

    static VelocityNet load_file(const std::string& path, Activation activation = Activation::silu) {
        return load(read_file(path), activation);
    }

private:
    struct Scratch {
        std::vector<Vec> acts;  // acts[0] = input, acts[l+1] = layer l output
        std::vector<Vec> pres;  // pre-activations of hidden layers
    };

    void build_dims() {
        layer_in_.clear();
        layer_out_.clear();
        offsets_.clear();
        std::size_t prev = config.in_dim + config.time_embed_dim;
        for (std::size_t h : config.hidden_dims) {
            layer_in_.push_back(prev);
            layer_out_.push_back(h);
            prev = h;
        }
        layer_in_.push_back(prev);
        layer_out_.push_back(config.in_dim);

        param_count_ = 0;
        for (std::size_t l = 0; l < layer_in_.size(); ++l) {
            offsets_.push_back(param_count_);
            param_count_ += layer_in_[l] * layer_out_[l] + layer_out_[l];
        }
    }

    double act(double x) const {
        if (config.activation == Activation::silu) return x / (1.0 + std::exp(-x));
        return std::tanh(x);
    }

    double act_deriv(double x) const {
        if (config.activation == Activation::silu) {
            const double sg = 1.0 / (1.0 + std::exp(-x));
            return sg * (1.0 + x * (1.0 - sg));
        }
        const double y = std::tanh(x);
        return 1.0 - y * y;
    }

    void run_forward(const Vec& z, double t, Scratch& s) const {
        if (z.size() != config.in_dim)
            throw std::invalid_argument("VelocityNet::forward: expected dim " +
                                        std::to_string(config.in_dim) + ", got " +
                                        std::to_string(z.size()));
        if (!(t >= 0.0 && t <= 1.0))
            throw std::invalid_argument("VelocityNet::forward: t=" + std::to_string(t) +
                                        " outside [0,1]");
        const std::size_t L = layer_in_.size();
        s.acts.resize(L + 1);
        s.pres.resize(L - 1);

        Vec& input = s.acts[0];
        input.resize(config.in_dim + config.time_embed_dim);
        std::copy(z.begin(), z.end(), input.begin());
        const Vec tf = time_features(t);
        std::copy(tf.begin(), tf.end(), input.begin() + static_cast<std::ptrdiff_t>(config.in_dim));

        for (std::size_t l = 0; l < L; ++l) {
            const std::size_t in = layer_in_[l], out = layer_out_[l];
            const double* W = params.data() + offsets_[l];
            const double* b = W + in * out;
            const Vec& a = s.acts[l];
            Vec pre(out);
            for (std::size_t j = 0; j < out; ++j) {
                double acc = b[j];
                const double* Wrow = W + j * in;
                for (std::size_t i = 0; i < in; ++i) acc += Wrow[i] * a[i];
                pre[j] = acc;
            }
            if (l + 1 < L) {
                Vec& h = s.acts[l + 1];
                h.resize(out);
                for (std::size_t j = 0; j < out; ++j) h[j] = act(pre[j]);
                s.pres[l] = std::move(pre);
            } else {
                s.acts[l + 1] = std::move(pre);  // output layer is linear
            }
        }
    }

    std::vector<std::size_t> layer_in_, layer_out_, offsets_;
    std::size_t param_count_ = 0;
};

// Bias-corrected Adam with decoupled weight decay (off by default).
struct AdamState {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::vector<double> m, v;
    std::int64_t step_count = 0;

    static AdamState for_net(const VelocityNet& net, double lr_, double weight_decay_ = 0.0) {
        AdamState st;
        st.lr = lr_;
        st.weight_decay = weight_decay_;
        st.m.assign(net.param_count(), 0.0);
        st.v.assign(net.param_count(), 0.0);
        return st;
    }
};

inline void adam_step(VelocityNet& net, GradBuffer& buf, AdamState& st) {
    const std::size_t n = net.params.size();
    if (buf.grads.size() != n || st.m.size() != n || st.v.size() != n)
        throw std::invalid_argument("adam_step: buffer/state not aligned with params");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(buf.grads[i]))
            throw std::runtime_error("adam_step: non-finite gradient at param " + std::to_string(i));

    st.step_count += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
    for (std::size_t i = 0; i < n; ++i) {
        const double g = buf.grads[i];
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
        const double m_hat = st.m[i] / bc1;
        const double v_hat = st.v[i] / bc2;
        net.params[i] -= st.lr * (m_hat / (std::sqrt(v_hat) + st.eps) + st.weight_decay * net.params[i]);
    }
    buf.zero();
}

}  // namespace alloflow
