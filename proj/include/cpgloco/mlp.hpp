#pragma once

// Small dense networks on Eigen: forward pass over a batch (one sample per
// column), exact reverse-mode gradients, Adam, and binary checkpoints.
//
// A network may take a second input (the critic's action) that is added into
// the pre-activation of one hidden layer through its own weight matrix.

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cpgloco {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint32_t { relu = 0, sigmoid = 1, linear = 2 };

[[nodiscard]] inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::linear: return "linear";
    }
    return "?";
}

[[nodiscard]] inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "linear") return Activation::linear;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

struct LayerSpec {
    std::size_t fan_in = 1;
    std::size_t fan_out = 1;
    Activation activation = Activation::linear;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct NetworkParams {
    std::vector<LayerSpec> specs;
    std::vector<Matrix> weights;  // fan_out x fan_in
    std::vector<Vector> biases;   // fan_out
    /// Side-input weights into layer `inject_layer` (fan_out x side_dim);
    /// empty when the network has no side input.
    Matrix side_weights;
    std::size_t inject_layer = 0;

    [[nodiscard]] std::size_t side_dim() const noexcept { return static_cast<std::size_t>(side_weights.cols()); }
    [[nodiscard]] std::size_t input_dim() const { return specs.front().fan_in; }
    [[nodiscard]] std::size_t output_dim() const { return specs.back().fan_out; }

    /// Visits every parameter tensor as (data, size), in a fixed order.
    template <typename F>
    void for_each_tensor(F&& f) {
        for (std::size_t l = 0; l < specs.size(); ++l) {
            f(weights[l].data(), static_cast<std::size_t>(weights[l].size()));
            f(biases[l].data(), static_cast<std::size_t>(biases[l].size()));
        }
        if (side_weights.size() > 0) f(side_weights.data(), static_cast<std::size_t>(side_weights.size()));
    }

    template <typename F>
    void for_each_tensor(F&& f) const {
        const_cast<NetworkParams*>(this)->for_each_tensor(
            [&](double* p, std::size_t n) { f(static_cast<const double*>(p), n); });
    }

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t n = 0;
        for_each_tensor([&](const double*, std::size_t k) { n += k; });
        return n;
    }

    /// Same layout, all parameters zero.
    [[nodiscard]] NetworkParams zeros_like() const {
        NetworkParams z = *this;
        z.for_each_tensor([](double* p, std::size_t n) { std::fill(p, p + n, 0.0); });
        return z;
    }

    [[nodiscard]] bool same_shape(const NetworkParams& o) const {
        if (specs != o.specs || inject_layer != o.inject_layer) return false;
        return side_weights.rows() == o.side_weights.rows() && side_weights.cols() == o.side_weights.cols();
    }

    [[nodiscard]] bool finite() const {
        bool ok = true;
        for_each_tensor([&](const double* p, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) ok = ok && std::isfinite(p[i]);
        });
        return ok;
    }

    friend bool operator==(const NetworkParams& a, const NetworkParams& b) {
        if (!a.same_shape(b)) return false;
        for (std::size_t l = 0; l < a.specs.size(); ++l)
            if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
        return a.side_weights == b.side_weights;
    }
};

inline void validate_specs(const std::vector<LayerSpec>& specs) {
    if (specs.empty()) throw ShapeError("network needs at least one layer");
    for (std::size_t l = 0; l < specs.size(); ++l) {
        if (specs[l].fan_in < 1 || specs[l].fan_out < 1) throw ShapeError("layer sizes must be >= 1");
        if (l > 0 && specs[l].fan_in != specs[l - 1].fan_out)
            throw ShapeError("layer " + std::to_string(l) + " fan_in does not match previous fan_out");
    }
}

/// Final layer uniform in +/-3e-3; other layers uniform in +/-1/sqrt(f) with
/// f the fan-in. For the layer receiving the side input, f counts both the
/// previous layer and the side input.
template <typename Rng>
[[nodiscard]] NetworkParams init_params(const std::vector<LayerSpec>& specs, Rng& rng, std::size_t side_dim = 0,
                                        std::size_t inject_layer = 1) {
    validate_specs(specs);
    if (side_dim > 0 && inject_layer >= specs.size()) throw ShapeError("inject layer out of range");
    NetworkParams p;
    p.specs = specs;
    p.inject_layer = side_dim > 0 ? inject_layer : 0;
    auto fill = [&](double* data, std::size_t n, double limit) {
        std::uniform_real_distribution<double> u(-limit, limit);
        for (std::size_t i = 0; i < n; ++i) data[i] = u(rng);
    };
    for (std::size_t l = 0; l < specs.size(); ++l) {
        const auto& s = specs[l];
        const bool last = l + 1 == specs.size();
        const std::size_t f = s.fan_in + (side_dim > 0 && l == inject_layer ? side_dim : 0);
        const double limit = last ? 3e-3 : 1.0 / std::sqrt(static_cast<double>(f));
        p.weights.emplace_back(s.fan_out, s.fan_in);
        p.biases.emplace_back(s.fan_out);
        fill(p.weights.back().data(), static_cast<std::size_t>(p.weights.back().size()), limit);
        fill(p.biases.back().data(), s.fan_out, limit);
        if (side_dim > 0 && l == inject_layer) {
            p.side_weights.resize(static_cast<Eigen::Index>(s.fan_out), static_cast<Eigen::Index>(side_dim));
            fill(p.side_weights.data(), static_cast<std::size_t>(p.side_weights.size()), limit);
        }
    }
    return p;
}

[[nodiscard]] inline std::vector<LayerSpec> actor_specs(std::size_t state_dim = 12, std::size_t action_dim = 2) {
    return {{state_dim, 400, Activation::relu}, {400, 300, Activation::relu}, {300, action_dim, Activation::sigmoid}};
}

[[nodiscard]] inline std::vector<LayerSpec> critic_specs(std::size_t state_dim = 12) {
    return {{state_dim, 400, Activation::relu}, {400, 300, Activation::relu}, {300, 1, Activation::linear}};
}

/// Per-layer values kept from the forward pass.
struct ForwardCache {
    std::vector<Matrix> pre;   // pre-activations
    std::vector<Matrix> post;  // activations; post.back() is the output

    [[nodiscard]] const Matrix& output() const { return post.back(); }
};

namespace detail {

inline void activate(Activation a, const Matrix& z, Matrix& out) {
    switch (a) {
        case Activation::relu: out = z.cwiseMax(0.0); break;
        case Activation::sigmoid: out = (1.0 + (-z.array()).exp()).inverse().matrix(); break;
        case Activation::linear: out = z; break;
    }
}

/// dL/dz from dL/dy for y = act(z).
inline Matrix activation_backward(Activation a, const Matrix& z, const Matrix& y, const Matrix& dy) {
    switch (a) {
        case Activation::relu: return (z.array() > 0.0).cast<double>().matrix().cwiseProduct(dy);
        case Activation::sigmoid: return (y.array() * (1.0 - y.array()) * dy.array()).matrix();
        case Activation::linear: return dy;
    }
    return dy;
}

}  // namespace detail

/// x: input_dim x batch; side: side_dim x batch (ignored when the network
/// has no side input).
[[nodiscard]] inline ForwardCache forward(const NetworkParams& p, const Matrix& x, const Matrix& side = Matrix()) {
    if (static_cast<std::size_t>(x.rows()) != p.input_dim()) throw ShapeError("input dimension mismatch");
    if (p.side_dim() > 0 && (static_cast<std::size_t>(side.rows()) != p.side_dim() || side.cols() != x.cols()))
        throw ShapeError("side input dimension mismatch");
    ForwardCache c;
    c.pre.resize(p.specs.size());
    c.post.resize(p.specs.size());
    const Matrix* in = &x;
    for (std::size_t l = 0; l < p.specs.size(); ++l) {
        c.pre[l] = p.weights[l] * (*in);
        c.pre[l].colwise() += p.biases[l];
        if (p.side_dim() > 0 && l == p.inject_layer) c.pre[l].noalias() += p.side_weights * side;
        detail::activate(p.specs[l].activation, c.pre[l], c.post[l]);
        in = &c.post[l];
    }
    return c;
}

struct BackwardResult {
    NetworkParams grads;  // summed over the batch
    Matrix d_input;       // input_dim x batch
    Matrix d_side;        // side_dim x batch
};

/// Reverse pass for upstream gradient d_out = dL/d(output), one column per
/// sample.
[[nodiscard]] inline BackwardResult backward(const NetworkParams& p, const ForwardCache& c, const Matrix& x,
                                             const Matrix& d_out, const Matrix& side = Matrix()) {
    if (d_out.rows() != c.output().rows() || d_out.cols() != c.output().cols())
        throw ShapeError("upstream gradient shape mismatch");
    BackwardResult r;
    r.grads = p.zeros_like();
    Matrix dy = d_out;
    for (std::size_t l = p.specs.size(); l-- > 0;) {
        const Matrix dz = detail::activation_backward(p.specs[l].activation, c.pre[l], c.post[l], dy);
        const Matrix& in = l == 0 ? x : c.post[l - 1];
        r.grads.weights[l].noalias() = dz * in.transpose();
        r.grads.biases[l] = dz.rowwise().sum();
        if (p.side_dim() > 0 && l == p.inject_layer) {
            r.grads.side_weights.noalias() = dz * side.transpose();
            r.d_side.noalias() = p.side_weights.transpose() * dz;
        }
        dy.noalias() = p.weights[l].transpose() * dz;
    }
    r.d_input = std::move(dy);
    return r;
}

/// Single-sample conveniences.
[[nodiscard]] inline Vector actor_forward(const NetworkParams& actor, const Vector& state) {
    return forward(actor, state).output().col(0);
}

[[nodiscard]] inline double critic_forward(const NetworkParams& critic, const Vector& state, const Vector& action) {
    return forward(critic, state, action).output()(0, 0);
}

struct AdamState {
    NetworkParams m, v;
    std::uint64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    AdamState() = default;
    explicit AdamState(const NetworkParams& like) : m(like.zeros_like()), v(like.zeros_like()) {}
};

/// One bias-corrected Adam step descending `grads`.
inline void adam_update(NetworkParams& params, const NetworkParams& grads, AdamState& s, double lr) {
    if (!params.same_shape(grads) || !params.same_shape(s.m)) throw ShapeError("adam: shape mismatch");
    ++s.t;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    std::vector<double*> ps, ms, vs;
    std::vector<const double*> gs;
    std::vector<std::size_t> ns;
    params.for_each_tensor([&](double* p, std::size_t n) { ps.push_back(p); ns.push_back(n); });
    grads.for_each_tensor([&](const double* p, std::size_t) { gs.push_back(p); });
    s.m.for_each_tensor([&](double* p, std::size_t) { ms.push_back(p); });
    s.v.for_each_tensor([&](double* p, std::size_t) { vs.push_back(p); });
    for (std::size_t k = 0; k < ps.size(); ++k)
        for (std::size_t i = 0; i < ns[k]; ++i) {
            const double g = gs[k][i];
            ms[k][i] = s.beta1 * ms[k][i] + (1.0 - s.beta1) * g;
            vs[k][i] = s.beta2 * vs[k][i] + (1.0 - s.beta2) * g * g;
            ps[k][i] -= lr * (ms[k][i] / c1) / (std::sqrt(vs[k][i] / c2) + s.epsilon);
        }
}

// ---------------------------------------------------------------------------
// Checkpoint layout (little-endian):
//   char[8]  "CPGLMLP1"
//   u32      layer count L
//   L x      u32 fan_in, u32 fan_out, u32 activation (0 relu, 1 sigmoid, 2 linear)
//   u32      side_dim, u32 inject_layer
//   per layer: weights (fan_out x fan_in, row-major f64), bias (fan_out f64)
//   side weights (fan_out x side_dim of the inject layer, row-major f64)
// The JSON sidecar "<path>.json" lists the same layer specs for humans.
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'C', 'P', 'G', 'L', 'M', 'L', 'P', '1'};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
inline void put_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), 8); }

inline std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 4)) throw CheckpointError("truncated checkpoint");
    return v;
}
inline double get_f64(std::istream& in) {
    double v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 8)) throw CheckpointError("truncated checkpoint");
    return v;
}

template <typename M>
void put_matrix(std::ostream& out, const M& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
}
template <typename M>
void get_matrix(std::istream& in, M& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get_f64(in);
}

}  // namespace detail

[[nodiscard]] inline nlohmann::json specs_to_json(const NetworkParams& p) {
    nlohmann::json j;
    j["format"] = "CPGLMLP1";
    j["layers"] = nlohmann::json::array();
    for (const auto& s : p.specs)
        j["layers"].push_back({{"fan_in", s.fan_in}, {"fan_out", s.fan_out}, {"activation", to_string(s.activation)}});
    j["side_dim"] = p.side_dim();
    j["inject_layer"] = p.inject_layer;
    return j;
}

inline void save_checkpoint(const std::string& path, const NetworkParams& p) {
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
        out.write(kCheckpointMagic, sizeof kCheckpointMagic);
        detail::put_u32(out, static_cast<std::uint32_t>(p.specs.size()));
        for (const auto& s : p.specs) {
            detail::put_u32(out, static_cast<std::uint32_t>(s.fan_in));
            detail::put_u32(out, static_cast<std::uint32_t>(s.fan_out));
            detail::put_u32(out, static_cast<std::uint32_t>(s.activation));
        }
        detail::put_u32(out, static_cast<std::uint32_t>(p.side_dim()));
        detail::put_u32(out, static_cast<std::uint32_t>(p.inject_layer));
        for (std::size_t l = 0; l < p.specs.size(); ++l) {
            detail::put_matrix(out, p.weights[l]);
            detail::put_matrix(out, p.biases[l]);
        }
        detail::put_matrix(out, p.side_weights);
        if (!out) throw CheckpointError("failed writing checkpoint '" + path + "'");
    }
    std::ofstream sidecar(path + ".json");
    if (!sidecar) throw CheckpointError("cannot write checkpoint sidecar '" + path + ".json'");
    sidecar << specs_to_json(p).dump(2) << '\n';
}

[[nodiscard]] inline NetworkParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw CheckpointError("'" + path + "' is not a network checkpoint");
    NetworkParams p;
    const auto layers = detail::get_u32(in);
    if (layers == 0 || layers > 64) throw CheckpointError("implausible layer count in '" + path + "'");
    for (std::uint32_t l = 0; l < layers; ++l) {
        LayerSpec s;
        s.fan_in = detail::get_u32(in);
        s.fan_out = detail::get_u32(in);
        const auto act = detail::get_u32(in);
        if (act > 2) throw CheckpointError("unknown activation code in '" + path + "'");
        s.activation = static_cast<Activation>(act);
        p.specs.push_back(s);
    }
    try {
        validate_specs(p.specs);
    } catch (const ShapeError& e) {
        throw CheckpointError("'" + path + "': " + e.what());
    }
    const auto side_dim = detail::get_u32(in);
    p.inject_layer = detail::get_u32(in);
    if (side_dim > 0 && p.inject_layer >= layers) throw CheckpointError("inject layer out of range in '" + path + "'");
    for (const auto& s : p.specs) {
        p.weights.emplace_back(s.fan_out, s.fan_in);
        p.biases.emplace_back(s.fan_out);
        detail::get_matrix(in, p.weights.back());
        detail::get_matrix(in, p.biases.back());
    }
    if (side_dim > 0) {
        p.side_weights.resize(static_cast<Eigen::Index>(p.specs[p.inject_layer].fan_out), side_dim);
        detail::get_matrix(in, p.side_weights);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes in '" + path + "'");
    return p;
}

}  // namespace cpgloco
