#pragma once

// Reference implementations used only by the tests. Each one is written
// directly from the defining formula, without touching the library code path
// it checks.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "flowcast/random.hpp"
#include "flowcast/tensor.hpp"

namespace oracle {

using flowcast::Shape;
using flowcast::Tensor;

inline Tensor random_tensor(const Shape& shape, flowcast::Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
    std::vector<double> v(flowcast::shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(shape, std::move(v), requires_grad);
}

/// Norm-wise relative error ||a - n|| / max(||a||, ||n||, floor) between the
/// tape gradient and central differences of `f` over every input entry.
inline double gradient_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                             const std::vector<Tensor>& inputs, double h = 1e-5) {
    for (auto t : inputs) t.zero_grad();
    {
        flowcast::Tape tape;
        flowcast::Tape::Scope scope(tape);
        tape.backward(f(inputs));
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    flowcast::NoTapeScope no_tape;
    for (auto t : inputs) {
        const auto analytic = t.grad();
        auto v = t.mutable_values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double saved = v[i];
            v[i] = saved + h;
            const double up = f(inputs).item();
            v[i] = saved - h;
            const double down = f(inputs).item();
            v[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            diff += (analytic[i] - numeric) * (analytic[i] - numeric);
            na += analytic[i] * analytic[i];
            nn += numeric * numeric;
        }
    }
    const double scale = std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
    return std::sqrt(diff) / scale;
}

/// Weighted sum with fixed random weights, turning any output into a scalar
/// loss whose gradient exercises every output entry.
inline Tensor probe_loss(const Tensor& out, std::uint64_t seed) {
    flowcast::Rng rng(seed);
    return flowcast::sum(flowcast::mul(out, random_tensor(out.shape(), rng, -1.0, 1.0, false)));
}

inline double nse(const std::vector<double>& m, const std::vector<double>& o) {
    double mean = 0.0;
    for (double v : o) mean += v;
    mean /= double(o.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) num += std::pow(m[i] - o[i], 2);
    for (std::size_t i = 0; i < o.size(); ++i) den += std::pow(o[i] - mean, 2);
    return 1.0 - num / den;
}

inline std::vector<double> dense_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t n,
                                        std::size_t k, std::size_t m) {
    std::vector<double> c(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t p = 0; p < k; ++p) c[i * m + j] += a[i * k + p] * b[p * m + j];
    return c;
}

/// Monomial coefficients of the Chebyshev polynomial T_k (index = power).
inline std::vector<double> chebyshev_coefficients(int k) {
    std::vector<double> c(static_cast<std::size_t>(k) + 1, 0.0);
    if (k == 0) {
        c[0] = 1.0;
        return c;
    }
    // T_k(x) = k/2 sum_m (-1)^m (k-m-1)! / (m! (k-2m)!) (2x)^(k-2m)
    for (int m = 0; 2 * m <= k; ++m) {
        const double coeff = (k / 2.0) * std::pow(-1.0, m) * std::tgamma(k - m) /
                             (std::tgamma(m + 1) * std::tgamma(k - 2 * m + 1)) * std::pow(2.0, k - 2 * m);
        c[static_cast<std::size_t>(k - 2 * m)] += coeff;
    }
    return c;
}

/// sum_k T_k(L) x theta_k with each T_k(L) built as an explicit n x n matrix
/// from its monomial expansion.
inline std::vector<double> explicit_chebyshev_conv(const std::vector<double>& L, std::size_t n,
                                                   const std::vector<double>& x, std::size_t f_in,
                                                   const std::vector<double>& theta, std::size_t f_out, int K) {
    std::vector<std::vector<double>> powers{std::vector<double>(n * n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) powers[0][i * n + i] = 1.0;
    for (int p = 1; p < K; ++p) powers.push_back(dense_matmul(powers.back(), L, n, n, n));
    std::vector<double> out(n * f_out, 0.0);
    for (int k = 0; k < K; ++k) {
        const auto coeff = chebyshev_coefficients(k);
        std::vector<double> Tk(n * n, 0.0);
        for (std::size_t p = 0; p < coeff.size(); ++p)
            for (std::size_t i = 0; i < n * n; ++i) Tk[i] += coeff[p] * powers[p][i];
        const auto tx = dense_matmul(Tk, x, n, n, f_in);
        const std::vector<double> th(theta.begin() + static_cast<std::ptrdiff_t>(k * f_in * f_out),
                                     theta.begin() + static_cast<std::ptrdiff_t>((k + 1) * f_in * f_out));
        const auto y = dense_matmul(tx, th, n, f_in, f_out);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
    }
    return out;
}

/// One GRU step for a single row, in plain loops.
///   z = s(x Wxz + h Whz + bz), r = s(x Wxr + h Whr + br)
///   c = tanh(x Wxh + (r*h) Whh + bh), h' = z h + (1 - z) c
struct PlainGru {
    std::size_t f = 0, hdim = 0;
    std::vector<double> wxz, wxr, wxh;  // f x hdim
    std::vector<double> whz, whr, whh;  // hdim x hdim
    std::vector<double> bz, br, bh;     // hdim (empty = none)

    std::vector<double> step(const std::vector<double>& x, const std::vector<double>& h) const {
        auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
        auto affine = [&](const std::vector<double>& wx, const std::vector<double>& wh, const std::vector<double>& b,
                          const std::vector<double>& hin, std::size_t j) {
            double a = b.empty() ? 0.0 : b[j];
            for (std::size_t i = 0; i < f; ++i) a += x[i] * wx[i * hdim + j];
            for (std::size_t i = 0; i < hdim; ++i) a += hin[i] * wh[i * hdim + j];
            return a;
        };
        std::vector<double> z(hdim), r(hdim), rh(hdim), out(hdim);
        for (std::size_t j = 0; j < hdim; ++j) {
            z[j] = sig(affine(wxz, whz, bz, h, j));
            r[j] = sig(affine(wxr, whr, br, h, j));
        }
        for (std::size_t j = 0; j < hdim; ++j) rh[j] = r[j] * h[j];
        for (std::size_t j = 0; j < hdim; ++j) {
            const double c = std::tanh(affine(wxh, whh, bh, rh, j));
            out[j] = z[j] * h[j] + (1.0 - z[j]) * c;
        }
        return out;
    }
};

/// x: [cin x T] row-major, w: [cout x cin x K], zero padding of K/2 each side.
inline std::vector<double> naive_conv1d(const std::vector<double>& x, std::size_t cin, std::size_t T,
                                        const std::vector<double>& w, const std::vector<double>& b, std::size_t cout,
                                        std::size_t K) {
    std::vector<double> y(cout * T, 0.0);
    const long pad = static_cast<long>(K / 2);
    for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t t = 0; t < T; ++t) {
            double acc = b[o];
            for (std::size_t c = 0; c < cin; ++c)
                for (std::size_t k = 0; k < K; ++k) {
                    const long src = static_cast<long>(t) + static_cast<long>(k) - pad;
                    if (src < 0 || src >= static_cast<long>(T)) continue;
                    acc += w[(o * cin + c) * K + k] * x[c * T + static_cast<std::size_t>(src)];
                }
            y[o * T + t] = acc;
        }
    return y;
}

/// Anchor hour indices a for which every hour in [a - t_in + 1, a + t_out] is observed.
inline std::vector<std::size_t> valid_anchors(const std::vector<bool>& observed, std::size_t t_in, std::size_t t_out) {
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < observed.size(); ++a) {
        if (a + 1 < t_in || a + t_out >= observed.size()) continue;
        bool ok = true;
        for (std::size_t h = a + 1 - t_in; h <= a + t_out; ++h) ok = ok && observed[h];
        if (ok) out.push_back(a);
    }
    return out;
}

}  // namespace oracle
