#include <doctest.h>

#include "flowcast/cells.hpp"
#include "oracles.hpp"

using namespace flowcast;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

ScaledLaplacian random_laplacian(std::size_t n, Rng& rng) {
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;
    for (std::size_t i = 0; i < n; ++i) nodes.push_back({i, "n" + std::to_string(i)});
    for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1 + rng.below(n - 1 - i), rng.uniform(0.2, 2.0)});
    return scaled_laplacian(SensorGraph(nodes, edges, n - 1));
}

/// Randomizes every parameter, including biases, so no term is trivially zero.
void randomize(std::vector<NamedParameter> params, Rng& rng) {
    for (auto& p : params)
        for (auto& v : p.tensor.mutable_values()) v = rng.uniform(-0.8, 0.8);
}

oracle::PlainGru plain_from(const GConvGruCell& c) {
    oracle::PlainGru g;
    g.f = c.in_features;
    g.hdim = c.hidden;
    g.wxz = vals(c.theta_xz);
    g.wxr = vals(c.theta_xr);
    g.wxh = vals(c.theta_xh);
    g.whz = vals(c.theta_hz);
    g.whr = vals(c.theta_hr);
    g.whh = vals(c.theta_hh);
    if (c.bias_z) {
        g.bz = vals(*c.bias_z);
        g.br = vals(*c.bias_r);
        g.bh = vals(*c.bias_h);
    }
    return g;
}

oracle::PlainGru plain_from(const GruCell& c) {
    oracle::PlainGru g;
    g.f = c.in_features;
    g.hdim = c.hidden;
    g.wxz = vals(c.w_xz);
    g.wxr = vals(c.w_xr);
    g.wxh = vals(c.w_xh);
    g.whz = vals(c.w_hz);
    g.whr = vals(c.w_hr);
    g.whh = vals(c.w_hh);
    if (c.bias_z) {
        g.bz = vals(*c.bias_z);
        g.br = vals(*c.bias_r);
        g.bh = vals(*c.bias_h);
    }
    return g;
}

std::vector<Tensor> as_inputs(const std::vector<NamedParameter>& params) {
    std::vector<Tensor> out;
    for (const auto& p : params) out.push_back(p.tensor);
    return out;
}

}  // namespace

TEST_SUITE("cells") {

TEST_CASE("zero GConvGRU parameters") {
    Rng rng(1);
    const auto L = random_laplacian(4, rng);
    const auto cell = GConvGruCell::zeros(2, 3, 2, true);
    const Tensor x = oracle::random_tensor({4, 2}, rng, -1, 1, false);
    const Tensor h0 = gconv_gru_step(cell, x, Tensor::zeros({4, 3}), L);
    for (double v : h0.values()) CHECK(v == 0.0);
    const Tensor p = oracle::random_tensor({4, 3}, rng, -1, 1, false);
    const Tensor h1 = gconv_gru_step(cell, x, p, L);
    for (std::size_t i = 0; i < p.numel(); ++i) CHECK(h1[i] == 0.5 * p[i]);
}

TEST_CASE("single node, K=1 GConvGRU step equals a plain GRU step") {
    Rng rng(2);
    const auto L = scaled_laplacian(SensorGraph({{0, "a"}}, {}, 0));
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t f = 1 + rng.below(3), h = 1 + rng.below(4);
        auto cell = GConvGruCell::create(f, h, 1, true, rng);
        std::vector<NamedParameter> params;
        cell.collect(params, "");
        randomize(params, rng);
        const Tensor x = oracle::random_tensor({1, f}, rng, -2, 2, false);
        const Tensor hp = oracle::random_tensor({1, h}, rng, -1, 1, false);
        const Tensor got = gconv_gru_step(cell, x, hp, L);
        const auto expect = plain_from(cell).step(vals(x), vals(hp));
        for (std::size_t j = 0; j < h; ++j) CHECK(std::abs(got[j] - expect[j]) < 1e-12);
    }
}

TEST_CASE("GConvGRU unroll base case and boundedness") {
    Rng rng(3);
    const auto L = random_laplacian(5, rng);
    auto cell = GConvGruCell::create(2, 4, 3, true, rng);
    std::vector<NamedParameter> params;
    cell.collect(params, "");
    for (auto& p : params)
        for (auto& v : p.tensor.mutable_values()) v = rng.uniform(-3, 3);
    const Tensor seq1 = oracle::random_tensor({1, 5, 2}, rng, -1, 1, false);
    const auto one = gconv_gru_unroll(cell, seq1, L);
    const Tensor step = gconv_gru_step(cell, reshape(seq1, {5, 2}), Tensor::zeros({5, 4}), L);
    CHECK(vals(one.final_state) == vals(step));
    CHECK(one.hidden_states.shape() == Shape{1, 5, 4});

    const Tensor seq = oracle::random_tensor({30, 5, 2}, rng, -5, 5, false);
    const auto out = gconv_gru_unroll(cell, seq, L);
    CHECK(out.hidden_states.shape() == Shape{30, 5, 4});
    for (double v : out.hidden_states.values()) CHECK(std::abs(v) < 1.0);
    CHECK_THROWS((void)gconv_gru_unroll(cell, std::span<const Tensor>{}, L, std::nullopt, false));
    CHECK_THROWS_AS((void)gconv_gru_step(cell, Tensor::zeros({4, 2}), Tensor::zeros({4, 4}), L), ShapeError);
}

TEST_CASE("GRU zero parameters and plain oracle") {
    const auto zero = GruCell::zeros(3, 2, true);
    const Tensor p = Tensor::matrix({{0.3, -0.8}});
    const Tensor h = gru_step(zero, Tensor::matrix({{1, 2, 3}}), p);
    CHECK(h[0] == 0.5 * 0.3);
    CHECK(h[1] == 0.5 * -0.8);

    Rng rng(4);
    auto cell = GruCell::create(3, 4, true, rng);
    std::vector<NamedParameter> params;
    cell.collect(params, "");
    randomize(params, rng);
    const Tensor x = oracle::random_tensor({1, 3}, rng, -1, 1, false), hp = oracle::random_tensor({1, 4}, rng, -1, 1, false);
    const auto expect = plain_from(cell).step(vals(x), vals(hp));
    const Tensor got = gru_step(cell, x, hp);
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(got[j] - expect[j]) < 1e-12);
}

TEST_CASE("bidirectional GRU on a palindrome is mirror symmetric") {
    Rng rng(5);
    BidirectionalGru bi = BidirectionalGru::create(2, 3, true, rng);
    std::vector<NamedParameter> params;
    bi.forward.collect(params, "");
    randomize(params, rng);
    bi.backward = bi.forward.cloned();
    const std::size_t T = 7;
    std::vector<double> seq(T * 2);
    for (std::size_t t = 0; t <= T / 2; ++t)
        for (std::size_t f = 0; f < 2; ++f) seq[t * 2 + f] = seq[(T - 1 - t) * 2 + f] = rng.uniform(-1, 1);
    const auto out = bidirectional_unroll(bi, Tensor({T, 2}, seq));
    CHECK(out.outputs.shape() == Shape{T, 6});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(out.outputs[t * 6 + j] - out.outputs[(T - 1 - t) * 6 + 3 + j]) < 1e-15);
    for (std::size_t j = 0; j < 3; ++j) CHECK(out.final_forward[j] == out.final_backward[j]);
}

TEST_CASE("temporal conv") {
    Rng rng(6);
    TemporalConv id = TemporalConv::create(1, 1, 1, rng);
    id.weight.mutable_values()[0] = 1.0;
    const Tensor x = oracle::random_tensor({1, 6}, rng, -1, 1, false);
    CHECK(vals(temporal_conv(id, x)) == vals(x));

    TemporalConv centered = TemporalConv::create(1, 1, 3, rng);
    auto w = centered.weight.mutable_values();
    w[0] = 0.0;
    w[1] = 1.0;
    w[2] = 0.0;
    CHECK(vals(temporal_conv(centered, x)) == vals(x));

    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t cin = 1 + rng.below(4), cout = 1 + rng.below(4), T = 1 + rng.below(10), K = 1 + 2 * rng.below(3);
        if (K > 2 * T + 1) continue;
        TemporalConv c = TemporalConv::create(cin, cout, K, rng);
        for (auto& v : c.bias.mutable_values()) v = rng.uniform(-1, 1);
        const Tensor in = oracle::random_tensor({cin, T}, rng, -1, 1, false);
        const auto expect = oracle::naive_conv1d(vals(in), cin, T, vals(c.weight), vals(c.bias), cout, K);
        const Tensor got = temporal_conv(c, in);
        CHECK(got.shape() == Shape{cout, T});
        for (std::size_t i = 0; i < expect.size(); ++i) CHECK(std::abs(got[i] - expect[i]) < 1e-12);
    }
    CHECK_THROWS((void)TemporalConv::create(1, 1, 2, rng));
}

TEST_CASE("linear layer and initialization") {
    Rng rng(7);
    Linear lin = Linear::create(3, 3, rng);
    auto w = lin.weight.mutable_values();
    for (std::size_t i = 0; i < 9; ++i) w[i] = i % 4 == 0 ? 1.0 : 0.0;
    const Tensor x = oracle::random_tensor({2, 3}, rng, -1, 1, false);
    CHECK(vals(linear(lin, x)) == vals(x));

    Rng a(99), b(99);
    const Linear la = Linear::create(5, 4, a), lb = Linear::create(5, 4, b);
    CHECK(vals(la.weight) == vals(lb.weight));
    const double bound = 1.0 / std::sqrt(5.0);
    for (double v : la.weight.values()) CHECK(std::abs(v) <= bound);
    for (double v : la.bias.values()) CHECK(v == 0.0);

    Rng c(99), d(99);
    const auto ga = GConvGruCell::create(2, 3, 2, true, c), gb = GConvGruCell::create(2, 3, 2, true, d);
    CHECK(vals(ga.theta_hh) == vals(gb.theta_hh));
    for (double v : ga.theta_xz.values()) CHECK(std::abs(v) <= 1.0 / std::sqrt(4.0));
    CHECK_THROWS_AS((void)linear(la, Tensor::zeros({2, 4})), ShapeError);
}

TEST_CASE("cloned cells own their storage") {
    Rng rng(8);
    const auto cell = GConvGruCell::create(1, 2, 2, true, rng);
    auto copy = cell.cloned();
    copy.theta_xz.mutable_values()[0] += 1.0;
    CHECK(copy.theta_xz[0] != cell.theta_xz[0]);
}

TEST_CASE("finite-difference gradients through cells") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const auto seed = rng.next();
        const std::size_t n = 1 + rng.below(4), f = 1 + rng.below(2), h = 1 + rng.below(3);
        const int K = 1 + static_cast<int>(rng.below(3));
        const auto L = random_laplacian(n, rng);

        auto gcell = GConvGruCell::create(f, h, K, true, rng);
        std::vector<NamedParameter> gp;
        gcell.collect(gp, "");
        randomize(gp, rng);
        auto ginputs = as_inputs(gp);
        const Tensor x = oracle::random_tensor({n, f}, rng), hprev = oracle::random_tensor({n, h}, rng, -0.9, 0.9);
        ginputs.push_back(x);
        ginputs.push_back(hprev);
        CHECK(oracle::gradient_check(
                  [&](const auto& in) { return oracle::probe_loss(gconv_gru_step(gcell, in[gp.size()], in[gp.size() + 1], L), seed); },
                  ginputs) < 1e-5);

        const Tensor seq = oracle::random_tensor({3, n, f}, rng);
        auto uinputs = as_inputs(gp);
        uinputs.push_back(seq);
        CHECK(oracle::gradient_check(
                  [&](const auto& in) {
                      const auto out = gconv_gru_unroll(gcell, in[gp.size()], L);
                      return add(oracle::probe_loss(out.hidden_states, seed), sum(out.final_state));
                  },
                  uinputs) < 1e-4);

        auto cell = GruCell::create(f, h, true, rng);
        std::vector<NamedParameter> rp;
        cell.collect(rp, "");
        randomize(rp, rng);
        auto rinputs = as_inputs(rp);
        const Tensor rseq = oracle::random_tensor({4, f}, rng);
        rinputs.push_back(rseq);
        CHECK(oracle::gradient_check(
                  [&](const auto& in) { return oracle::probe_loss(gru_unroll(cell, in[rp.size()]).hidden_states, seed); },
                  rinputs) < 1e-4);

        auto bi = BidirectionalGru::create(f, h, true, rng);
        std::vector<NamedParameter> bp;
        bi.collect(bp, "");
        randomize(bp, rng);
        auto binputs = as_inputs(bp);
        binputs.push_back(rseq);
        CHECK(oracle::gradient_check(
                  [&](const auto& in) {
                      const auto out = bidirectional_unroll(bi, in[bp.size()]);
                      return add(oracle::probe_loss(out.outputs, seed),
                                 oracle::probe_loss(concat({out.final_forward, out.final_backward}, 1), seed + 1));
                  },
                  binputs) < 1e-4);

        auto lin = Linear::create(f + 1, h, rng);
        for (auto& v : lin.bias.mutable_values()) v = rng.uniform(-1, 1);
        const Tensor lx = oracle::random_tensor({2, f + 1}, rng);
        CHECK(oracle::gradient_check([&](const auto& in) { return oracle::probe_loss(linear(lin, in[2]), seed); },
                                     {lin.weight, lin.bias, lx}) < 1e-6);

        auto conv = TemporalConv::create(f, h, 3, rng);
        const Tensor cx = oracle::random_tensor({f, 5}, rng);
        CHECK(oracle::gradient_check([&](const auto& in) { return oracle::probe_loss(temporal_conv(conv, in[2]), seed); },
                                     {conv.weight, conv.bias, cx}) < 1e-5);
    }
}

}  // TEST_SUITE
