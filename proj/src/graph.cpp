#include "flowcast/graph.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace flowcast {

namespace {

class Fnv1a {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            hash_ ^= p[i];
            hash_ *= 0x100000001b3ULL;
        }
    }
    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 8);
    }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    std::uint64_t value() const { return hash_; }

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace

SensorGraph::SensorGraph(std::vector<GraphNode> nodes, std::vector<GraphEdge> edges, std::size_t outlet_index)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), outlet_(outlet_index) {
    validate();
}

void SensorGraph::validate() const {
    if (nodes_.empty()) throw std::invalid_argument("graph has no nodes");
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].index != i) {
            throw std::invalid_argument("node indices must be 0..N-1 in order; position " + std::to_string(i) +
                                        " holds index " + std::to_string(nodes_[i].index));
        }
    }
    for (const auto& e : edges_) {
        if (e.src >= nodes_.size() || e.dst >= nodes_.size()) {
            throw std::invalid_argument("edge " + std::to_string(e.src) + "->" + std::to_string(e.dst) +
                                        " references a node outside 0.." + std::to_string(nodes_.size() - 1));
        }
        if (e.src == e.dst) throw std::invalid_argument("self-loop edge on node " + std::to_string(e.src));
        if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
            throw std::invalid_argument("edge " + std::to_string(e.src) + "->" + std::to_string(e.dst) +
                                        " has non-positive weight");
        }
    }
    if (outlet_ >= nodes_.size()) throw std::invalid_argument("outlet index " + std::to_string(outlet_) + " invalid");
}

std::uint64_t SensorGraph::fingerprint() const {
    Fnv1a h;
    h.u64(nodes_.size());
    for (const auto& n : nodes_) {
        h.u64(n.index);
        h.str(n.sensor_id);
    }
    h.u64(outlet_);
    h.u64(edges_.size());
    for (const auto& e : edges_) {
        h.u64(e.src);
        h.u64(e.dst);
        h.u64(std::bit_cast<std::uint64_t>(e.weight));
    }
    return h.value();
}

double power_iteration_lambda_max(const std::vector<double>& matrix, std::size_t n,
                                  const PowerIterationOptions& options) {
    if (matrix.size() != n * n) throw std::invalid_argument("power iteration: matrix is not n x n");
    std::vector<double> v(n), w(n);
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = 1.0 + 0.5 * std::sin(1.0 + 2.3 * static_cast<double>(i));
        norm += v[i] * v[i];
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;

    double lambda = 0.0;
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += matrix[i * n + j] * v[j];
            w[i] = acc;
        }
        double rayleigh = 0.0, wn = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            rayleigh += v[i] * w[i];
            wn += w[i] * w[i];
        }
        // Stop on the eigen-residual ||A v - rho v||; the Rayleigh quotient error is
        // then of order residual^2 / spectral gap.
        double residual = 0.0;
        for (std::size_t i = 0; i < n; ++i) residual += (w[i] - rayleigh * v[i]) * (w[i] - rayleigh * v[i]);
        lambda = rayleigh;
        wn = std::sqrt(wn);
        if (wn == 0.0) return 0.0;
        if (std::sqrt(residual) < options.tolerance) break;
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / wn;
    }
    return lambda;
}

ScaledLaplacian scaled_laplacian(const SensorGraph& graph, const PowerIterationOptions& options) {
    graph.validate();
    const std::size_t n = graph.size();
    std::vector<double> adj(n * n, 0.0);
    for (const auto& e : graph.edges()) {
        adj[e.src * n + e.dst] = e.weight;
        adj[e.dst * n + e.src] = e.weight;
    }
    std::vector<double> inv_sqrt_deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double d = 0.0;
        for (std::size_t j = 0; j < n; ++j) d += adj[i * n + j];
        inv_sqrt_deg[i] = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
    }
    ScaledLaplacian out;
    out.size = n;
    out.graph_fingerprint = graph.fingerprint();
    out.normalized.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double off = adj[i * n + j] * inv_sqrt_deg[i] * inv_sqrt_deg[j];
            out.normalized[i * n + j] = (i == j ? 1.0 : 0.0) - off;
        }
    }
    out.lambda_max = graph.edges().empty() ? 2.0 : power_iteration_lambda_max(out.normalized, n, options);
    if (!(out.lambda_max > 0.0)) out.lambda_max = 2.0;

    std::vector<double> scaled(n * n);
    const double c = 2.0 / out.lambda_max;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) scaled[i * n + j] = c * out.normalized[i * n + j] - (i == j ? 1.0 : 0.0);
    out.scaled = Tensor({n, n}, std::move(scaled));
    return out;
}

ScaledLaplacian laplacian_from_scaled(std::vector<double> scaled, std::size_t n, std::uint64_t fingerprint) {
    if (scaled.size() != n * n) throw std::invalid_argument("scaled Laplacian is not n x n");
    ScaledLaplacian out;
    out.size = n;
    out.graph_fingerprint = fingerprint;
    out.normalized.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out.normalized[i * n + j] = scaled[i * n + j] + (i == j ? 1.0 : 0.0);
    out.lambda_max = 2.0;
    out.scaled = Tensor({n, n}, std::move(scaled));
    return out;
}

std::vector<Tensor> chebyshev_basis(const Tensor& x, const ScaledLaplacian& laplacian, int order) {
    if (order < 1) throw std::invalid_argument("Chebyshev order K must be >= 1, got " + std::to_string(order));
    if (x.rank() != 2) throw ShapeError("chebyshev_conv: x must be [N x F], got " + shape_to_string(x.shape()));
    if (x.dim(0) != laplacian.size) {
        throw ShapeError("chebyshev_conv: x has " + std::to_string(x.dim(0)) + " rows but the Laplacian is " +
                         std::to_string(laplacian.size) + " x " + std::to_string(laplacian.size));
    }
    std::vector<Tensor> basis;
    basis.reserve(static_cast<std::size_t>(order));
    basis.push_back(x);
    if (order > 1) basis.push_back(matmul(laplacian.scaled, x));
    for (int k = 2; k < order; ++k) {
        const auto& prev = basis[static_cast<std::size_t>(k - 1)];
        const auto& prev2 = basis[static_cast<std::size_t>(k - 2)];
        basis.push_back(sub(scale(matmul(laplacian.scaled, prev), 2.0), prev2));
    }
    return basis;
}

Tensor chebyshev_conv(const std::vector<Tensor>& basis, const Tensor& theta) {
    if (basis.empty()) throw std::invalid_argument("chebyshev_conv: empty basis");
    const std::size_t order = basis.size();
    const std::size_t f_in = basis[0].dim(1);
    if (theta.rank() != 3 || theta.dim(0) != order || theta.dim(1) != f_in) {
        throw ShapeError("chebyshev_conv: theta " + shape_to_string(theta.shape()) + " does not match K=" +
                         std::to_string(order) + ", F_in=" + std::to_string(f_in));
    }
    const std::size_t f_out = theta.dim(2);
    // Row k*F_in + f of the flattened filter bank lines up with column
    // k*F_in + f of the concatenated basis.
    Tensor stacked = order == 1 ? basis[0] : concat(std::span<const Tensor>(basis), 1);
    return matmul(stacked, reshape(theta, {order * f_in, f_out}));
}

Tensor chebyshev_conv(const Tensor& x, const ScaledLaplacian& laplacian, const Tensor& theta, int order) {
    if (order < 1) throw std::invalid_argument("Chebyshev order K must be >= 1, got " + std::to_string(order));
    if (theta.rank() != 3 || theta.dim(0) != static_cast<std::size_t>(order)) {
        throw ShapeError("chebyshev_conv: theta " + shape_to_string(theta.shape()) + " does not have K=" +
                         std::to_string(order) + " filters");
    }
    return chebyshev_conv(chebyshev_basis(x, laplacian, order), theta);
}

}  // namespace flowcast
