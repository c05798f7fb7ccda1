#pragma once

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// Operations record themselves on the tape that is active on the calling
// thread (see Tape::Scope) whenever at least one input requires a gradient.
// Without an active tape every op runs in inference mode and records nothing.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowcast {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class AutodiffError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

namespace detail {
struct TapeState;

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until a gradient is accumulated
    bool requires_grad = false;
    std::weak_ptr<TapeState> tape;
    std::uint64_t tape_generation = 0;

    void accumulate_grad(std::size_t i, double g) {
        if (grad.empty()) grad.assign(values.size(), 0.0);
        grad[i] += g;
    }
    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
    }
};
}  // namespace detail

class Tensor {
public:
    /// A scalar zero.
    Tensor();
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                         bool requires_grad = false);

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return node_->values.size(); }

    std::span<const double> values() const { return node_->values; }
    /// Direct write access; reserved for parameter initialization and optimizer updates.
    std::span<double> mutable_values() { return node_->values; }
    double item() const;
    double operator[](std::size_t i) const { return node_->values[i]; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    bool has_grad() const { return !node_->grad.empty(); }
    /// Gradient buffer; zeros when no gradient has reached this tensor.
    std::vector<double> grad() const;
    std::span<const double> grad_span() const { return node_->grad; }
    void zero_grad() { node_->grad.clear(); }

    /// Deep copy of shape and values, no gradient, same requires_grad flag.
    Tensor clone() const;
    bool same_storage(const Tensor& other) const { return node_ == other.node_; }

    const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    friend Tensor make_result(Shape shape, std::vector<double> values);
    std::shared_ptr<detail::TensorNode> node_;
};

/// Ordered record of executed operations with their backward rules.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Makes a tape the active recording target on the current thread for the
    /// lifetime of the guard. Guards nest; the previous tape is restored.
    class Scope {
    public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        std::shared_ptr<detail::TapeState> previous_;
    };

    /// Seeds d(loss)/d(loss) = 1 and propagates in exact reverse execution order.
    void backward(const Tensor& loss);
    /// Drops every recorded op and re-arms the tape for another backward pass.
    void reset();

    std::size_t size() const;
    bool finalized() const;

private:
    std::shared_ptr<detail::TapeState> state_;
};

/// Suspends recording on the current thread for its lifetime.
class NoTapeScope {
public:
    NoTapeScope();
    ~NoTapeScope();
    NoTapeScope(const NoTapeScope&) = delete;
    NoTapeScope& operator=(const NoTapeScope&) = delete;

private:
    std::shared_ptr<detail::TapeState> previous_;
};

/// Runs backward on the tape that recorded `loss`.
void backward(const Tensor& loss);

enum class ElementwiseOp { Add, Sub, Mul, Sigmoid, Tanh, Neg, Abs, Scale };

/// Generic dispatcher. Binary kinds need `b`; Scale uses `constant`.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const std::optional<Tensor>& b = std::nullopt,
                   double constant = 1.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor scale(const Tensor& a, double c);
/// a + c for a scalar constant c.
Tensor shift(const Tensor& a, double c);

/// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Adds a length-G vector to every row of an [M x G] matrix.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean absolute difference; the subgradient of |.| at zero is zero.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
Tensor stack(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);

/// Same-length 1-D cross-correlation with zero padding.
/// x: [C_in x T], weight: [C_out x C_in x K] (K odd), bias: [C_out].
Tensor conv1d_same(const Tensor& x, const Tensor& weight, const Tensor& bias);

}  // namespace flowcast
