#include "flowcast/cells.hpp"

#include <cmath>
#include <stdexcept>

namespace flowcast {

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(v), true);
}

namespace {

Tensor zero_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }

void push(std::vector<NamedParameter>& out, const std::string& prefix, const char* name, const Tensor& t) {
    out.push_back({prefix + name, t});
}

void push(std::vector<NamedParameter>& out, const std::string& prefix, const char* name,
          const std::optional<Tensor>& t) {
    if (t) out.push_back({prefix + name, *t});
}

std::optional<Tensor> clone_opt(const std::optional<Tensor>& t) {
    return t ? std::optional<Tensor>(t->clone()) : std::nullopt;
}

Tensor with_bias(const Tensor& x, const std::optional<Tensor>& bias) { return bias ? add_bias(x, *bias) : x; }

// h' = z * h + (1 - z) * candidate
Tensor blend(const Tensor& z, const Tensor& h_prev, const Tensor& candidate) {
    return add(mul(z, h_prev), mul(shift(neg(z), 1.0), candidate));
}

void check_matrix(const Tensor& t, std::size_t rows, std::size_t cols, const char* what) {
    if (t.rank() != 2 || t.dim(0) != rows || t.dim(1) != cols) {
        throw ShapeError(std::string(what) + ": expected [" + std::to_string(rows) + " x " + std::to_string(cols) +
                         "], got " + shape_to_string(t.shape()));
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// GConvGRU
// ---------------------------------------------------------------------------

GConvGruCell GConvGruCell::create(std::size_t in_features, std::size_t hidden, int order, bool use_bias, Rng& rng) {
    if (order < 1) throw std::invalid_argument("Chebyshev order K must be >= 1");
    GConvGruCell c;
    c.order = order;
    c.in_features = in_features;
    c.hidden = hidden;
    const auto k = static_cast<std::size_t>(order);
    const std::size_t fan_x = k * in_features, fan_h = k * hidden;
    c.theta_xz = init_uniform({k, in_features, hidden}, fan_x, rng);
    c.theta_hz = init_uniform({k, hidden, hidden}, fan_h, rng);
    c.theta_xr = init_uniform({k, in_features, hidden}, fan_x, rng);
    c.theta_hr = init_uniform({k, hidden, hidden}, fan_h, rng);
    c.theta_xh = init_uniform({k, in_features, hidden}, fan_x, rng);
    c.theta_hh = init_uniform({k, hidden, hidden}, fan_h, rng);
    if (use_bias) {
        c.bias_z = zero_param({hidden});
        c.bias_r = zero_param({hidden});
        c.bias_h = zero_param({hidden});
    }
    return c;
}

GConvGruCell GConvGruCell::zeros(std::size_t in_features, std::size_t hidden, int order, bool use_bias) {
    if (order < 1) throw std::invalid_argument("Chebyshev order K must be >= 1");
    GConvGruCell c;
    c.order = order;
    c.in_features = in_features;
    c.hidden = hidden;
    const auto k = static_cast<std::size_t>(order);
    c.theta_xz = zero_param({k, in_features, hidden});
    c.theta_hz = zero_param({k, hidden, hidden});
    c.theta_xr = zero_param({k, in_features, hidden});
    c.theta_hr = zero_param({k, hidden, hidden});
    c.theta_xh = zero_param({k, in_features, hidden});
    c.theta_hh = zero_param({k, hidden, hidden});
    if (use_bias) {
        c.bias_z = zero_param({hidden});
        c.bias_r = zero_param({hidden});
        c.bias_h = zero_param({hidden});
    }
    return c;
}

void GConvGruCell::collect(std::vector<NamedParameter>& out, const std::string& prefix) const {
    push(out, prefix, "theta_xz", theta_xz);
    push(out, prefix, "theta_hz", theta_hz);
    push(out, prefix, "theta_xr", theta_xr);
    push(out, prefix, "theta_hr", theta_hr);
    push(out, prefix, "theta_xh", theta_xh);
    push(out, prefix, "theta_hh", theta_hh);
    push(out, prefix, "bias_z", bias_z);
    push(out, prefix, "bias_r", bias_r);
    push(out, prefix, "bias_h", bias_h);
}

GConvGruCell GConvGruCell::cloned() const {
    GConvGruCell c = *this;
    for (Tensor* t : {&c.theta_xz, &c.theta_hz, &c.theta_xr, &c.theta_hr, &c.theta_xh, &c.theta_hh}) *t = t->clone();
    c.bias_z = clone_opt(bias_z);
    c.bias_r = clone_opt(bias_r);
    c.bias_h = clone_opt(bias_h);
    return c;
}

Tensor gconv_gru_step(const GConvGruCell& cell, const Tensor& x_t, const Tensor& h_prev,
                      const ScaledLaplacian& laplacian) {
    const std::size_t n = laplacian.size;
    check_matrix(x_t, n, cell.in_features, "gconv_gru_step input");
    check_matrix(h_prev, n, cell.hidden, "gconv_gru_step hidden state");

    const auto bx = chebyshev_basis(x_t, laplacian, cell.order);
    const auto bh = chebyshev_basis(h_prev, laplacian, cell.order);
    const Tensor z =
        sigmoid(with_bias(add(chebyshev_conv(bx, cell.theta_xz), chebyshev_conv(bh, cell.theta_hz)), cell.bias_z));
    const Tensor r =
        sigmoid(with_bias(add(chebyshev_conv(bx, cell.theta_xr), chebyshev_conv(bh, cell.theta_hr)), cell.bias_r));
    const auto brh = chebyshev_basis(mul(r, h_prev), laplacian, cell.order);
    const Tensor candidate =
        tanh(with_bias(add(chebyshev_conv(bx, cell.theta_xh), chebyshev_conv(brh, cell.theta_hh)), cell.bias_h));
    return blend(z, h_prev, candidate);
}

RecurrentOutput gconv_gru_unroll(const GConvGruCell& cell, std::span<const Tensor> steps,
                                 const ScaledLaplacian& laplacian, const std::optional<Tensor>& h0,
                                 bool keep_states) {
    if (steps.empty()) throw std::invalid_argument("gconv_gru_unroll: empty sequence");
    Tensor h = h0 ? *h0 : Tensor::zeros({laplacian.size, cell.hidden});
    std::vector<Tensor> states;
    if (keep_states) states.reserve(steps.size());
    for (const auto& x : steps) {
        h = gconv_gru_step(cell, x, h, laplacian);
        if (keep_states) states.push_back(h);
    }
    RecurrentOutput out;
    if (keep_states) out.hidden_states = stack(states, 0);
    out.final_state = h;
    return out;
}

RecurrentOutput gconv_gru_unroll(const GConvGruCell& cell, const Tensor& sequence, const ScaledLaplacian& laplacian,
                                 const std::optional<Tensor>& h0) {
    if (sequence.rank() != 3) {
        throw ShapeError("gconv_gru_unroll: sequence must be [T x N x F], got " + shape_to_string(sequence.shape()));
    }
    const std::size_t len = sequence.dim(0), n = sequence.dim(1), f = sequence.dim(2);
    std::vector<Tensor> steps;
    steps.reserve(len);
    for (std::size_t t = 0; t < len; ++t) steps.push_back(reshape(slice(sequence, 0, t, t + 1), {n, f}));
    return gconv_gru_unroll(cell, steps, laplacian, h0, true);
}

// ---------------------------------------------------------------------------
// Dense GRU
// ---------------------------------------------------------------------------

GruCell GruCell::create(std::size_t in_features, std::size_t hidden, bool use_bias, Rng& rng) {
    GruCell c;
    c.in_features = in_features;
    c.hidden = hidden;
    c.w_xz = init_uniform({in_features, hidden}, in_features, rng);
    c.w_xr = init_uniform({in_features, hidden}, in_features, rng);
    c.w_xh = init_uniform({in_features, hidden}, in_features, rng);
    c.w_hz = init_uniform({hidden, hidden}, hidden, rng);
    c.w_hr = init_uniform({hidden, hidden}, hidden, rng);
    c.w_hh = init_uniform({hidden, hidden}, hidden, rng);
    if (use_bias) {
        c.bias_z = zero_param({hidden});
        c.bias_r = zero_param({hidden});
        c.bias_h = zero_param({hidden});
    }
    return c;
}

GruCell GruCell::zeros(std::size_t in_features, std::size_t hidden, bool use_bias) {
    GruCell c;
    c.in_features = in_features;
    c.hidden = hidden;
    c.w_xz = zero_param({in_features, hidden});
    c.w_xr = zero_param({in_features, hidden});
    c.w_xh = zero_param({in_features, hidden});
    c.w_hz = zero_param({hidden, hidden});
    c.w_hr = zero_param({hidden, hidden});
    c.w_hh = zero_param({hidden, hidden});
    if (use_bias) {
        c.bias_z = zero_param({hidden});
        c.bias_r = zero_param({hidden});
        c.bias_h = zero_param({hidden});
    }
    return c;
}

void GruCell::collect(std::vector<NamedParameter>& out, const std::string& prefix) const {
    push(out, prefix, "w_xz", w_xz);
    push(out, prefix, "w_hz", w_hz);
    push(out, prefix, "w_xr", w_xr);
    push(out, prefix, "w_hr", w_hr);
    push(out, prefix, "w_xh", w_xh);
    push(out, prefix, "w_hh", w_hh);
    push(out, prefix, "bias_z", bias_z);
    push(out, prefix, "bias_r", bias_r);
    push(out, prefix, "bias_h", bias_h);
}

GruCell GruCell::cloned() const {
    GruCell c = *this;
    for (Tensor* t : {&c.w_xz, &c.w_hz, &c.w_xr, &c.w_hr, &c.w_xh, &c.w_hh}) *t = t->clone();
    c.bias_z = clone_opt(bias_z);
    c.bias_r = clone_opt(bias_r);
    c.bias_h = clone_opt(bias_h);
    return c;
}

Tensor gru_step(const GruCell& cell, const Tensor& x_t, const Tensor& h_prev) {
    if (x_t.rank() != 2 || x_t.dim(1) != cell.in_features) {
        throw ShapeError("gru_step: input " + shape_to_string(x_t.shape()) + " needs " +
                         std::to_string(cell.in_features) + " features");
    }
    check_matrix(h_prev, x_t.dim(0), cell.hidden, "gru_step hidden state");
    const Tensor z = sigmoid(with_bias(add(matmul(x_t, cell.w_xz), matmul(h_prev, cell.w_hz)), cell.bias_z));
    const Tensor r = sigmoid(with_bias(add(matmul(x_t, cell.w_xr), matmul(h_prev, cell.w_hr)), cell.bias_r));
    const Tensor candidate =
        tanh(with_bias(add(matmul(x_t, cell.w_xh), matmul(mul(r, h_prev), cell.w_hh)), cell.bias_h));
    return blend(z, h_prev, candidate);
}

RecurrentOutput gru_unroll(const GruCell& cell, const Tensor& sequence, const std::optional<Tensor>& h0) {
    if (sequence.rank() != 2) {
        throw ShapeError("gru_unroll: sequence must be [T x F], got " + shape_to_string(sequence.shape()));
    }
    const std::size_t len = sequence.dim(0);
    Tensor h = h0 ? *h0 : Tensor::zeros({1, cell.hidden});
    std::vector<Tensor> states;
    states.reserve(len);
    for (std::size_t t = 0; t < len; ++t) {
        h = gru_step(cell, slice(sequence, 0, t, t + 1), h);
        states.push_back(h);
    }
    return {concat(std::span<const Tensor>(states), 0), h};
}

BidirectionalGru BidirectionalGru::create(std::size_t in_features, std::size_t hidden, bool use_bias, Rng& rng) {
    BidirectionalGru bi;
    bi.forward = GruCell::create(in_features, hidden, use_bias, rng);
    bi.backward = GruCell::create(in_features, hidden, use_bias, rng);
    return bi;
}

void BidirectionalGru::collect(std::vector<NamedParameter>& out, const std::string& prefix) const {
    forward.collect(out, prefix + "fwd.");
    backward.collect(out, prefix + "bwd.");
}

BidirectionalOutput bidirectional_unroll(const BidirectionalGru& bi, const Tensor& sequence) {
    if (bi.forward.in_features != bi.backward.in_features || bi.forward.hidden != bi.backward.hidden) {
        throw ShapeError("bidirectional_unroll: forward and backward cells differ in size");
    }
    if (sequence.rank() != 2 || sequence.dim(1) != bi.forward.in_features) {
        throw ShapeError("bidirectional_unroll: sequence " + shape_to_string(sequence.shape()) + " needs " +
                         std::to_string(bi.forward.in_features) + " features");
    }
    const std::size_t len = sequence.dim(0);
    std::vector<Tensor> rows;
    rows.reserve(len);
    for (std::size_t t = 0; t < len; ++t) rows.push_back(slice(sequence, 0, t, t + 1));

    std::vector<Tensor> fwd(len), bwd(len);
    Tensor h = Tensor::zeros({1, bi.forward.hidden});
    for (std::size_t t = 0; t < len; ++t) fwd[t] = h = gru_step(bi.forward, rows[t], h);
    h = Tensor::zeros({1, bi.backward.hidden});
    for (std::size_t t = len; t-- > 0;) bwd[t] = h = gru_step(bi.backward, rows[t], h);

    std::vector<Tensor> joined;
    joined.reserve(len);
    for (std::size_t t = 0; t < len; ++t) joined.push_back(concat({fwd[t], bwd[t]}, 1));
    return {concat(std::span<const Tensor>(joined), 0), fwd[len - 1], bwd[0]};
}

// ---------------------------------------------------------------------------
// Convolution and linear
// ---------------------------------------------------------------------------

TemporalConv TemporalConv::create(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
                                  Rng& rng) {
    if (kernel_size % 2 == 0) throw std::invalid_argument("temporal conv kernel size must be odd");
    TemporalConv c;
    c.in_channels = in_channels;
    c.out_channels = out_channels;
    c.kernel_size = kernel_size;
    c.weight = init_uniform({out_channels, in_channels, kernel_size}, in_channels * kernel_size, rng);
    c.bias = zero_param({out_channels});
    return c;
}

void TemporalConv::collect(std::vector<NamedParameter>& out, const std::string& prefix) const {
    push(out, prefix, "weight", weight);
    push(out, prefix, "bias", bias);
}

TemporalConv TemporalConv::cloned() const {
    TemporalConv c = *this;
    c.weight = weight.clone();
    c.bias = bias.clone();
    return c;
}

Tensor temporal_conv(const TemporalConv& conv, const Tensor& x) { return conv1d_same(x, conv.weight, conv.bias); }

Linear Linear::create(std::size_t in_features, std::size_t out_features, Rng& rng) {
    Linear l;
    l.in_features = in_features;
    l.out_features = out_features;
    l.weight = init_uniform({in_features, out_features}, in_features, rng);
    l.bias = zero_param({out_features});
    return l;
}

void Linear::collect(std::vector<NamedParameter>& out, const std::string& prefix) const {
    push(out, prefix, "weight", weight);
    push(out, prefix, "bias", bias);
}

Linear Linear::cloned() const {
    Linear l = *this;
    l.weight = weight.clone();
    l.bias = bias.clone();
    return l;
}

Tensor linear(const Linear& layer, const Tensor& x) {
    if (x.rank() != 2 || x.dim(1) != layer.in_features) {
        throw ShapeError("linear: input " + shape_to_string(x.shape()) + " needs " +
                         std::to_string(layer.in_features) + " features");
    }
    return add_bias(matmul(x, layer.weight), layer.bias);
}

}  // namespace flowcast
