#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "flowcast/tensor.hpp"

namespace flowcast {

struct GraphNode {
    std::size_t index = 0;
    std::string sensor_id;
};

struct GraphEdge {
    std::size_t src = 0;
    std::size_t dst = 0;
    double weight = 1.0;
};

/// Gauge network. Edges point downstream; weights are affinities (see the
/// dataset loader for how distances become weights).
class SensorGraph {
public:
    SensorGraph() = default;
    SensorGraph(std::vector<GraphNode> nodes, std::vector<GraphEdge> edges, std::size_t outlet_index);

    const std::vector<GraphNode>& nodes() const { return nodes_; }
    const std::vector<GraphEdge>& edges() const { return edges_; }
    std::size_t size() const { return nodes_.size(); }
    std::size_t outlet_index() const { return outlet_; }

    /// Throws std::invalid_argument describing the first violated invariant.
    void validate() const;

    /// FNV-1a over sensor ids, edge endpoints and weight bit patterns.
    std::uint64_t fingerprint() const;

private:
    std::vector<GraphNode> nodes_;
    std::vector<GraphEdge> edges_;
    std::size_t outlet_ = 0;
};

/// L~ = (2 / lambda_max) L - I for the symmetric-normalized Laplacian L.
struct ScaledLaplacian {
    std::size_t size = 0;
    std::vector<double> normalized;  // L, row-major
    double lambda_max = 2.0;
    std::uint64_t graph_fingerprint = 0;
    Tensor scaled;  // L~ as an [N x N] constant tensor

    double at(std::size_t i, std::size_t j) const { return scaled[i * size + j]; }
};

struct PowerIterationOptions {
    double tolerance = 1e-8;
    std::size_t max_iterations = 10000;
};

/// Largest eigenvalue of a symmetric positive semi-definite matrix.
double power_iteration_lambda_max(const std::vector<double>& matrix, std::size_t n,
                                  const PowerIterationOptions& options = {});

ScaledLaplacian scaled_laplacian(const SensorGraph& graph, const PowerIterationOptions& options = {});

/// Builds a ScaledLaplacian directly from a dense symmetric L~ (test and oracle use).
ScaledLaplacian laplacian_from_scaled(std::vector<double> scaled, std::size_t n, std::uint64_t fingerprint = 0);

/// T_0(L~)x, T_1(L~)x, ..., T_{K-1}(L~)x via the three-term recurrence.
std::vector<Tensor> chebyshev_basis(const Tensor& x, const ScaledLaplacian& laplacian, int order);

/// sum_k T_k(L~) x theta_k. x: [N x F_in], theta: [K x F_in x F_out].
Tensor chebyshev_conv(const Tensor& x, const ScaledLaplacian& laplacian, const Tensor& theta, int order);

/// Same as chebyshev_conv but reuses a precomputed basis.
Tensor chebyshev_conv(const std::vector<Tensor>& basis, const Tensor& theta);

}  // namespace flowcast
