#include "flowcast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flowcast {

namespace detail {

struct TapeEntry {
    std::shared_ptr<TensorNode> output;
    std::function<void(const std::vector<double>&)> backward;
};

struct TapeState {
    std::vector<TapeEntry> entries;
    bool finalized = false;
    std::uint64_t generation = 1;
};

}  // namespace detail

namespace {

thread_local std::shared_ptr<detail::TapeState> g_active_tape;

using NodePtr = std::shared_ptr<detail::TensorNode>;
using BackwardFn = std::function<void(const std::vector<double>&)>;

void run_backward(detail::TapeState& st, const Tensor& loss) {
    if (st.finalized) throw AutodiffError("backward already ran on this tape; reset it first");
    if (loss.numel() != 1) {
        throw AutodiffError("backward needs a scalar loss, got shape " + shape_to_string(loss.shape()));
    }
    const auto& node = loss.node();
    if (node->tape.lock().get() != &st || node->tape_generation != st.generation) {
        throw AutodiffError("loss was not recorded on this tape");
    }
    node->grad.assign(1, 1.0);
    for (auto it = st.entries.rbegin(); it != st.entries.rend(); ++it) {
        if (it->output->grad.empty()) continue;
        it->backward(it->output->grad);
    }
    st.finalized = true;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << " x ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor::Tensor() : node_(std::make_shared<detail::TensorNode>()) { node_->values.assign(1, 0.0); }

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::TensorNode>()) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("shape " + shape_to_string(shape) + " needs " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
    }
    node_->shape = std::move(shape);
    node_->values = std::move(values);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
    return Tensor({values.size()}, std::vector<double>(values), requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
    const std::size_t m = rows.size();
    const std::size_t n = m ? rows.begin()->size() : 0;
    std::vector<double> v;
    v.reserve(m * n);
    for (const auto& r : rows) {
        if (r.size() != n) throw ShapeError("ragged matrix literal");
        v.insert(v.end(), r.begin(), r.end());
    }
    return Tensor({m, n}, std::move(v), requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape()));
    }
    return node_->shape[axis];
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar tensor of shape " + shape_to_string(shape()));
    return node_->values[0];
}

std::vector<double> Tensor::grad() const {
    if (node_->grad.empty()) return std::vector<double>(node_->values.size(), 0.0);
    return node_->grad;
}

Tensor Tensor::clone() const {
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = node_->shape;
    node->values = node_->values;
    node->requires_grad = node_->requires_grad;
    return Tensor(std::move(node));
}

Tensor make_result(Shape shape, std::vector<double> values) {
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tape::Tape() : state_(std::make_shared<detail::TapeState>()) {}

Tape::~Tape() {
    if (g_active_tape == state_) g_active_tape.reset();
}

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = tape.state_; }

Tape::Scope::~Scope() { g_active_tape = std::move(previous_); }

NoTapeScope::NoTapeScope() : previous_(std::move(g_active_tape)) { g_active_tape.reset(); }

NoTapeScope::~NoTapeScope() { g_active_tape = std::move(previous_); }

std::size_t Tape::size() const { return state_->entries.size(); }

bool Tape::finalized() const { return state_->finalized; }

void Tape::reset() {
    state_->entries.clear();
    state_->finalized = false;
    ++state_->generation;
}

void Tape::backward(const Tensor& loss) { run_backward(*state_, loss); }

void backward(const Tensor& loss) {
    auto state = loss.node()->tape.lock();
    if (!state) throw AutodiffError("loss is not attached to a live tape");
    run_backward(*state, loss);
}

// ---------------------------------------------------------------------------
// Recording helpers
// ---------------------------------------------------------------------------

namespace {

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (!g_active_tape) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

bool should_record(std::span<const Tensor> inputs) {
    if (!g_active_tape) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

void attach(const Tensor& out, BackwardFn fn) {
    auto& st = *g_active_tape;
    if (st.finalized) throw AutodiffError("cannot record on a finalized tape; reset it first");
    auto& node = *out.node();
    node.requires_grad = true;
    node.tape = g_active_tape;
    node.tape_generation = st.generation;
    st.entries.push_back({out.node(), std::move(fn)});
}

// Gradient sink for an input, or nullptr when that input is a constant.
double* sink(const NodePtr& n) {
    if (!n->requires_grad) return nullptr;
    n->ensure_grad();
    return n->grad.data();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    }
}

void require_matrix(const Tensor& a, const char* op) {
    if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_to_string(a.shape()));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Unary op whose derivative is expressed through input x and output y.
template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
    const auto x = a.values();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
    Tensor result = make_result(a.shape(), std::move(out));
    if (should_record({&a})) {
        NodePtr in = a.node();
        detail::TensorNode* outp = result.node().get();
        attach(result, [in, outp, deriv](const std::vector<double>& g) {
            double* ga = sink(in);
            if (!ga) return;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(in->values[i], outp->values[i]);
        });
    }
    return result;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const auto x = a.values(), y = b.values();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    Tensor result = make_result(a.shape(), std::move(out));
    if (should_record({&a, &b})) {
        NodePtr na = a.node(), nb = b.node();
        attach(result, [na, nb](const std::vector<double>& g) {
            if (double* ga = sink(na))
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            if (double* gb = sink(nb))
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        });
    }
    return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    const auto x = a.values(), y = b.values();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
    Tensor result = make_result(a.shape(), std::move(out));
    if (should_record({&a, &b})) {
        NodePtr na = a.node(), nb = b.node();
        attach(result, [na, nb](const std::vector<double>& g) {
            if (double* ga = sink(na))
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            if (double* gb = sink(nb))
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        });
    }
    return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    const auto x = a.values(), y = b.values();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    Tensor result = make_result(a.shape(), std::move(out));
    if (should_record({&a, &b})) {
        NodePtr na = a.node(), nb = b.node();
        attach(result, [na, nb](const std::vector<double>& g) {
            if (double* ga = sink(na))
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * nb->values[i];
            if (double* gb = sink(nb))
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * na->values[i];
        });
    }
    return result;
}

Tensor neg(const Tensor& a) {
    return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor abs(const Tensor& a) {
    return unary(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor sigmoid(const Tensor& a) {
    return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor scale(const Tensor& a, double c) {
    return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor shift(const Tensor& a, double c) {
    return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const std::optional<Tensor>& b, double constant) {
    auto need_b = [&]() -> const Tensor& {
        if (!b) throw std::invalid_argument("binary elementwise op needs a second operand");
        return *b;
    };
    switch (op) {
        case ElementwiseOp::Add: return add(a, need_b());
        case ElementwiseOp::Sub: return sub(a, need_b());
        case ElementwiseOp::Mul: return mul(a, need_b());
        case ElementwiseOp::Sigmoid: return sigmoid(a);
        case ElementwiseOp::Tanh: return tanh(a);
        case ElementwiseOp::Neg: return neg(a);
        case ElementwiseOp::Abs: return abs(a);
        case ElementwiseOp::Scale: return scale(a, constant);
    }
    throw std::invalid_argument("unknown elementwise op");
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) + " . " +
                         shape_to_string(b.shape()));
    }
    const double* A = a.values().data();
    const double* B = b.values().data();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            const double* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
        }
    }
    Tensor result = make_result({m, n}, std::move(out));
    if (should_record({&a, &b})) {
        NodePtr na = a.node(), nb = b.node();
        attach(result, [na, nb, m, k, n](const std::vector<double>& g) {
            const double* A = na->values.data();
            const double* B = nb->values.data();
            // dA = G . B^T
            if (double* ga = sink(na)) {
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = g.data() + i * n;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double* brow = B + p * n;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ga[i * k + p] += acc;
                    }
                }
            }
            // dB = A^T . G
            if (double* gb = sink(nb)) {
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = g.data() + i * n;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aip = A[i * k + p];
                        double* gbrow = gb + p * n;
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                    }
                }
            }
        });
    }
    return result;
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    const auto x = a.values();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
    Tensor result = make_result({n, m}, std::move(out));
    if (should_record({&a})) {
        NodePtr na = a.node();
        attach(result, [na, m, n](const std::vector<double>& g) {
            double* ga = sink(na);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
        });
    }
    return result;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require_matrix(x, "add_bias");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (bias.rank() != 1 || bias.dim(0) != n) {
        throw ShapeError("add_bias: bias " + shape_to_string(bias.shape()) + " does not match rows of " +
                         shape_to_string(x.shape()));
    }
    const auto xv = x.values(), bv = bias.values();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + bv[j];
    Tensor result = make_result(x.shape(), std::move(out));
    if (should_record({&x, &bias})) {
        NodePtr nx = x.node(), nb = bias.node();
        attach(result, [nx, nb, m, n](const std::vector<double>& g) {
            if (double* gx = sink(nx))
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            if (double* gb = sink(nb))
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        });
    }
    return result;
}

// ---------------------------------------------------------------------------
// Reductions and loss
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    Tensor result = make_result({}, {s});
    if (should_record({&a})) {
        NodePtr na = a.node();
        attach(result, [na](const std::vector<double>& g) {
            double* ga = sink(na);
            for (std::size_t i = 0; i < na->values.size(); ++i) ga[i] += g[0];
        });
    }
    return result;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "l1_loss");
    if (pred.numel() == 0) throw ShapeError("l1_loss: empty tensors");
    if (target.requires_grad()) throw std::invalid_argument("l1_loss: target must not require a gradient");
    const auto p = pred.values(), t = target.values();
    const double inv_n = 1.0 / static_cast<double>(p.size());
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - t[i]);
    Tensor result = make_result({}, {s * inv_n});
    if (should_record({&pred})) {
        NodePtr np = pred.node(), nt = target.node();
        attach(result, [np, nt, inv_n](const std::vector<double>& g) {
            double* gp = sink(np);
            for (std::size_t i = 0; i < np->values.size(); ++i) {
                const double d = np->values[i] - nt->values[i];
                const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                gp[i] += g[0] * sgn * inv_n;
            }
        });
    }
    return result;
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

namespace {

std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
    std::size_t p = 1;
    for (std::size_t i = from; i < to; ++i) p *= s[i];
    return p;
}

// Joins blocks: output = for each outer index, part[0] block, part[1] block, ...
// where part p contributes `widths[p]` contiguous values per outer index.
Tensor join_blocks(std::span<const Tensor> parts, Shape out_shape, std::size_t outer,
                   std::vector<std::size_t> widths) {
    std::size_t total = 0;
    for (auto w : widths) total += w;
    std::vector<double> out(outer * total);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const double* src = parts[p].values().data();
        const std::size_t w = widths[p];
        for (std::size_t o = 0; o < outer; ++o) std::copy_n(src + o * w, w, out.data() + o * total + offset);
        offset += w;
    }
    Tensor result = make_result(std::move(out_shape), std::move(out));
    if (should_record(parts)) {
        std::vector<NodePtr> nodes;
        nodes.reserve(parts.size());
        for (const auto& t : parts) nodes.push_back(t.node());
        attach(result, [nodes = std::move(nodes), widths = std::move(widths), outer, total](
                           const std::vector<double>& g) {
            std::size_t offset = 0;
            for (std::size_t p = 0; p < nodes.size(); ++p) {
                const std::size_t w = widths[p];
                if (double* gp = sink(nodes[p])) {
                    for (std::size_t o = 0; o < outer; ++o) {
                        const double* src = g.data() + o * total + offset;
                        double* dst = gp + o * w;
                        for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
                    }
                }
                offset += w;
            }
        });
    }
    return result;
}

}  // namespace

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no tensors");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) {
        throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_to_string(first));
    }
    Shape out_shape = first;
    out_shape[axis] = 0;
    std::vector<std::size_t> widths;
    const std::size_t outer = prod(first, 0, axis);
    const std::size_t inner = prod(first, axis + 1, first.size());
    for (const auto& t : parts) {
        const Shape& s = t.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
        if (!ok) {
            throw ShapeError("concat: incompatible shapes " + shape_to_string(first) + " and " + shape_to_string(s) +
                             " along axis " + std::to_string(axis));
        }
        out_shape[axis] += s[axis];
        widths.push_back(s[axis] * inner);
    }
    return join_blocks(parts, std::move(out_shape), outer, std::move(widths));
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
    return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor stack(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("stack: no tensors");
    const Shape& first = parts[0].shape();
    if (axis > first.size()) {
        throw ShapeError("stack: axis " + std::to_string(axis) + " out of range for " + shape_to_string(first));
    }
    for (const auto& t : parts) {
        if (t.shape() != first) {
            throw ShapeError("stack: shape mismatch " + shape_to_string(first) + " vs " + shape_to_string(t.shape()));
        }
    }
    Shape out_shape = first;
    out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), parts.size());
    const std::size_t outer = prod(first, 0, axis);
    const std::size_t inner = prod(first, axis, first.size());
    return join_blocks(parts, std::move(out_shape), outer, std::vector<std::size_t>(parts.size(), inner));
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
    const Shape& s = a.shape();
    if (axis >= s.size()) {
        throw ShapeError("slice: axis " + std::to_string(axis) + " out of range for " + shape_to_string(s));
    }
    if (begin >= end || end > s[axis]) {
        throw ShapeError("slice: bounds [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for axis of size " + std::to_string(s[axis]));
    }
    const std::size_t outer = prod(s, 0, axis);
    const std::size_t inner = prod(s, axis + 1, s.size());
    const std::size_t src_w = s[axis] * inner;
    const std::size_t w = (end - begin) * inner;
    const std::size_t off = begin * inner;
    const double* src = a.values().data();
    std::vector<double> out(outer * w);
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(src + o * src_w + off, w, out.data() + o * w);
    Shape out_shape = s;
    out_shape[axis] = end - begin;
    Tensor result = make_result(std::move(out_shape), std::move(out));
    if (should_record({&a})) {
        NodePtr na = a.node();
        attach(result, [na, outer, src_w, w, off](const std::vector<double>& g) {
            double* ga = sink(na);
            for (std::size_t o = 0; o < outer; ++o) {
                double* dst = ga + o * src_w + off;
                const double* gsrc = g.data() + o * w;
                for (std::size_t i = 0; i < w; ++i) dst[i] += gsrc[i];
            }
        });
    }
    return result;
}

Tensor reshape(const Tensor& a, Shape shape) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("reshape: dimensions must be positive, got " + shape_to_string(shape));
    }
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_to_string(a.shape()) + " as " + shape_to_string(shape));
    }
    std::vector<double> out(a.values().begin(), a.values().end());
    Tensor result = make_result(std::move(shape), std::move(out));
    if (should_record({&a})) {
        NodePtr na = a.node();
        attach(result, [na](const std::vector<double>& g) {
            double* ga = sink(na);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }
    return result;
}

// ---------------------------------------------------------------------------
// Temporal convolution
// ---------------------------------------------------------------------------

Tensor conv1d_same(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_matrix(x, "conv1d_same");
    if (weight.rank() != 3) {
        throw ShapeError("conv1d_same: weight must be [C_out x C_in x K], got " + shape_to_string(weight.shape()));
    }
    const std::size_t c_in = x.dim(0), len = x.dim(1);
    const std::size_t c_out = weight.dim(0), ksize = weight.dim(2);
    if (weight.dim(1) != c_in) {
        throw ShapeError("conv1d_same: weight " + shape_to_string(weight.shape()) + " does not match input " +
                         shape_to_string(x.shape()));
    }
    if (bias.rank() != 1 || bias.dim(0) != c_out) {
        throw ShapeError("conv1d_same: bias " + shape_to_string(bias.shape()) + " does not match " +
                         std::to_string(c_out) + " output channels");
    }
    if (ksize % 2 == 0) throw ShapeError("conv1d_same: kernel size must be odd, got " + std::to_string(ksize));
    if (ksize > 2 * len + 1) {
        throw ShapeError("conv1d_same: kernel size " + std::to_string(ksize) + " wider than 2T+1 for T=" +
                         std::to_string(len));
    }
    const auto pad = static_cast<std::ptrdiff_t>((ksize - 1) / 2);
    const auto T = static_cast<std::ptrdiff_t>(len);
    const double* X = x.values().data();
    const double* W = weight.values().data();
    const double* B = bias.values().data();
    std::vector<double> out(c_out * len);
    for (std::size_t o = 0; o < c_out; ++o) {
        double* yrow = out.data() + o * len;
        std::fill_n(yrow, len, B[o]);
        for (std::size_t c = 0; c < c_in; ++c) {
            const double* xrow = X + c * len;
            const double* wk = W + (o * c_in + c) * ksize;
            for (std::size_t j = 0; j < ksize; ++j) {
                const std::ptrdiff_t shiftj = static_cast<std::ptrdiff_t>(j) - pad;
                const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shiftj);
                const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(T, T - shiftj);
                for (std::ptrdiff_t t = t0; t < t1; ++t) yrow[t] += wk[j] * xrow[t + shiftj];
            }
        }
    }
    Tensor result = make_result({c_out, len}, std::move(out));
    if (should_record({&x, &weight, &bias})) {
        NodePtr nx = x.node(), nw = weight.node(), nb = bias.node();
        attach(result, [nx, nw, nb, c_in, c_out, ksize, pad, T](const std::vector<double>& g) {
            const std::size_t len = static_cast<std::size_t>(T);
            double* gx = sink(nx);
            double* gw = sink(nw);
            double* gb = sink(nb);
            const double* X = nx->values.data();
            const double* W = nw->values.data();
            for (std::size_t o = 0; o < c_out; ++o) {
                const double* grow = g.data() + o * len;
                if (gb)
                    for (std::size_t t = 0; t < len; ++t) gb[o] += grow[t];
                for (std::size_t c = 0; c < c_in; ++c) {
                    const std::size_t wbase = (o * c_in + c) * ksize;
                    for (std::size_t j = 0; j < ksize; ++j) {
                        const std::ptrdiff_t shiftj = static_cast<std::ptrdiff_t>(j) - pad;
                        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shiftj);
                        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(T, T - shiftj);
                        if (gw) {
                            double acc = 0.0;
                            for (std::ptrdiff_t t = t0; t < t1; ++t) acc += grow[t] * X[c * len + t + shiftj];
                            gw[wbase + j] += acc;
                        }
                        if (gx) {
                            const double wv = W[wbase + j];
                            for (std::ptrdiff_t t = t0; t < t1; ++t) gx[c * len + t + shiftj] += grow[t] * wv;
                        }
                    }
                }
            }
        });
    }
    return result;
}

}  // namespace flowcast
