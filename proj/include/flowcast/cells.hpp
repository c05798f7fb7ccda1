#pragma once

// Recurrent and convolutional building blocks.
//
// GRU convention used throughout (matching GConvGRU):
//   z  = sigmoid(Wx_z(x) + Wh_z(h) + b_z)
//   r  = sigmoid(Wx_r(x) + Wh_r(h) + b_r)
//   h~ = tanh(Wx_h(x) + Wh_h(r * h) + b_h)
//   h' = z * h + (1 - z) * h~
// where the W maps are Chebyshev graph convolutions for GConvGruCell and
// dense matrices for GruCell.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowcast/graph.hpp"
#include "flowcast/random.hpp"
#include "flowcast/tensor.hpp"

namespace flowcast {

struct NamedParameter {
    std::string name;
    Tensor tensor;
};

/// Draws from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); result requires grad.
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

struct GConvGruCell {
    int order = 2;
    std::size_t in_features = 1;
    std::size_t hidden = 1;
    Tensor theta_xz, theta_hz, theta_xr, theta_hr, theta_xh, theta_hh;  // [K x F x H]
    std::optional<Tensor> bias_z, bias_r, bias_h;                       // [H]

    /// Filter banks drawn with fan-in K*F; biases zero.
    static GConvGruCell create(std::size_t in_features, std::size_t hidden, int order, bool use_bias, Rng& rng);
    /// Every parameter zero (still trainable).
    static GConvGruCell zeros(std::size_t in_features, std::size_t hidden, int order, bool use_bias);

    void collect(std::vector<NamedParameter>& out, const std::string& prefix) const;
    /// Copy with independent parameter storage.
    GConvGruCell cloned() const;
};

Tensor gconv_gru_step(const GConvGruCell& cell, const Tensor& x_t, const Tensor& h_prev,
                      const ScaledLaplacian& laplacian);

struct RecurrentOutput {
    Tensor hidden_states;  // [T x N x H] (graph) or [T x H] (dense); scalar zero when not kept
    Tensor final_state;
};

/// sequence: [T x N x F_in]. h0 defaults to zeros.
RecurrentOutput gconv_gru_unroll(const GConvGruCell& cell, const Tensor& sequence, const ScaledLaplacian& laplacian,
                                 const std::optional<Tensor>& h0 = std::nullopt);

/// Step-list form; each step is [N x F_in]. Skips materializing the state
/// sequence unless `keep_states` is set.
RecurrentOutput gconv_gru_unroll(const GConvGruCell& cell, std::span<const Tensor> steps,
                                 const ScaledLaplacian& laplacian, const std::optional<Tensor>& h0,
                                 bool keep_states);

struct GruCell {
    std::size_t in_features = 1;
    std::size_t hidden = 1;
    Tensor w_xz, w_xr, w_xh;  // [F x H]
    Tensor w_hz, w_hr, w_hh;  // [H x H]
    std::optional<Tensor> bias_z, bias_r, bias_h;

    static GruCell create(std::size_t in_features, std::size_t hidden, bool use_bias, Rng& rng);
    static GruCell zeros(std::size_t in_features, std::size_t hidden, bool use_bias);

    void collect(std::vector<NamedParameter>& out, const std::string& prefix) const;
    GruCell cloned() const;
};

/// x_t: [B x F], h_prev: [B x H].
Tensor gru_step(const GruCell& cell, const Tensor& x_t, const Tensor& h_prev);

/// sequence: [T x F]. Returns states [T x H] and final [1 x H].
RecurrentOutput gru_unroll(const GruCell& cell, const Tensor& sequence, const std::optional<Tensor>& h0 = std::nullopt);

struct BidirectionalGru {
    GruCell forward;
    GruCell backward;

    static BidirectionalGru create(std::size_t in_features, std::size_t hidden, bool use_bias, Rng& rng);
    void collect(std::vector<NamedParameter>& out, const std::string& prefix) const;
    BidirectionalGru cloned() const { return {forward.cloned(), backward.cloned()}; }
};

struct BidirectionalOutput {
    Tensor outputs;         // [T x 2H]; row t = [forward state after t, backward state after t]
    Tensor final_forward;   // [1 x H], after reading step T-1
    Tensor final_backward;  // [1 x H], after reading step 0
};

BidirectionalOutput bidirectional_unroll(const BidirectionalGru& bi, const Tensor& sequence);

struct TemporalConv {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_size = 1;
    Tensor weight;  // [C_out x C_in x K]
    Tensor bias;    // [C_out]

    static TemporalConv create(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size, Rng& rng);
    void collect(std::vector<NamedParameter>& out, const std::string& prefix) const;
    TemporalConv cloned() const;
};

/// x: [C_in x T] -> [C_out x T], zero padded so length is preserved.
Tensor temporal_conv(const TemporalConv& conv, const Tensor& x);

struct Linear {
    std::size_t in_features = 1;
    std::size_t out_features = 1;
    Tensor weight;  // [F x G]
    Tensor bias;    // [G]

    static Linear create(std::size_t in_features, std::size_t out_features, Rng& rng);
    void collect(std::vector<NamedParameter>& out, const std::string& prefix) const;
    Linear cloned() const;
};

/// x: [M x F] -> x W + b, [M x G].
Tensor linear(const Linear& layer, const Tensor& x);

}  // namespace flowcast
