#include "clickpath/tape.hpp"

#include <algorithm>
#include <cmath>

#include "clickpath/error.hpp"
#include "eigen_view.hpp"

namespace clickpath {

namespace {

using detail::view;

Matrix& grad_of(Node& node) {
    if (node.grad.empty() && !node.value.empty()) {
        node.grad = Matrix(node.value.rows(), node.value.cols());
    }
    return node.grad;
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": " + a.shape_string() + " vs " +
                             b.shape_string());
    }
}

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Var Var::parameter(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Var(std::move(node));
}

Var Var::constant(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Matrix& Var::grad() { return grad_of(*node_); }
const Matrix& Var::grad() const { return grad_of(*node_); }

void Var::zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(0.0);
}

Var Tape::make(Matrix value, std::initializer_list<const Var*> inputs) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (recording_) {
        node->requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                          [](const Var* v) { return v->requires_grad(); });
    }
    return Var(std::move(node));
}

void Tape::record(const Var& out, std::function<void()> propagate) {
    if (out.requires_grad()) entries_.push_back({out.node_, std::move(propagate)});
}

Var Tape::matmul(const Var& a, const Var& b) {
    Var out = make(clickpath::matmul(a.value(), b.value()), {&a, &b});
    record(out, [o = out.node_, a = a.node_, b = b.node_] {
        const Matrix& g = o->grad;
        if (a->requires_grad) view(grad_of(*a)).noalias() += view(g) * view(b->value).transpose();
        if (b->requires_grad) view(grad_of(*b)).noalias() += view(a->value).transpose() * view(g);
    });
    return out;
}

Var Tape::add(const Var& a, const Var& b) {
    require_same_shape("add", a.value(), b.value());
    Matrix v = a.value();
    view(v) += view(b.value());
    Var out = make(std::move(v), {&a, &b});
    record(out, [o = out.node_, a = a.node_, b = b.node_] {
        if (a->requires_grad) view(grad_of(*a)) += view(o->grad);
        if (b->requires_grad) view(grad_of(*b)) += view(o->grad);
    });
    return out;
}

Var Tape::add_row(const Var& a, const Var& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols()) {
        throw DimensionError("add_row: " + a.value().shape_string() + " + " +
                             bias.value().shape_string());
    }
    Matrix v = a.value();
    view(v).rowwise() += view(bias.value()).row(0);
    Var out = make(std::move(v), {&a, &bias});
    record(out, [o = out.node_, a = a.node_, b = bias.node_] {
        if (a->requires_grad) view(grad_of(*a)) += view(o->grad);
        if (b->requires_grad) view(grad_of(*b)) += view(o->grad).colwise().sum();
    });
    return out;
}

Var Tape::mul(const Var& a, const Var& b) {
    require_same_shape("mul", a.value(), b.value());
    Matrix v = a.value();
    view(v).array() *= view(b.value()).array();
    Var out = make(std::move(v), {&a, &b});
    record(out, [o = out.node_, a = a.node_, b = b.node_] {
        if (a->requires_grad) {
            Matrix& g = grad_of(*a);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            Matrix& g = grad_of(*b);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * a->value[i];
        }
    });
    return out;
}

Var Tape::scale(const Var& a, double factor) {
    Matrix v = a.value();
    view(v) *= factor;
    Var out = make(std::move(v), {&a});
    record(out, [o = out.node_, a = a.node_, factor] {
        view(grad_of(*a)) += factor * view(o->grad);
    });
    return out;
}

Var Tape::sigmoid(const Var& a) {
    Matrix v = a.value();
    for (double& x : v.values()) x = logistic(x);
    Var out = make(std::move(v), {&a});
    record(out, [o = out.node_, a = a.node_] {
        Matrix& g = grad_of(*a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = o->value[i];
            g[i] += o->grad[i] * y * (1.0 - y);
        }
    });
    return out;
}

Var Tape::tanh(const Var& a) {
    Matrix v = a.value();
    for (double& x : v.values()) x = std::tanh(x);
    Var out = make(std::move(v), {&a});
    record(out, [o = out.node_, a = a.node_] {
        Matrix& g = grad_of(*a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = o->value[i];
            g[i] += o->grad[i] * (1.0 - y * y);
        }
    });
    return out;
}

Var Tape::relu(const Var& a) {
    Matrix v = a.value();
    for (double& x : v.values()) x = x > 0.0 ? x : 0.0;
    Var out = make(std::move(v), {&a});
    record(out, [o = out.node_, a = a.node_] {
        Matrix& ga = grad_of(*a);
        const Matrix& in = a->value;
        for (std::size_t i = 0; i < in.size(); ++i)
            if (in[i] > 0.0) ga[i] += o->grad[i];
    });
    return out;
}

Var Tape::columns(const Var& a, std::size_t begin, std::size_t count) {
    if (begin + count > a.cols()) {
        throw DimensionError("columns [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") of " +
                             a.value().shape_string());
    }
    Matrix v(a.rows(), count);
    view(v) = view(a.value()).middleCols(begin, count);
    Var out = make(std::move(v), {&a});
    record(out, [o = out.node_, a = a.node_, begin, count] {
        view(grad_of(*a)).middleCols(begin, count) += view(o->grad);
    });
    return out;
}

Var Tape::concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ArgumentError("concat_rows of nothing");
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    bool needs_grad = false;
    for (const Var& p : parts) {
        if (p.cols() != cols) {
            throw DimensionError("concat_rows: " + parts.front().value().shape_string() +
                                 " vs " + p.value().shape_string());
        }
        rows += p.rows();
        needs_grad = needs_grad || p.requires_grad();
    }
    Matrix v(rows, cols);
    std::size_t offset = 0;
    for (const Var& p : parts) {
        std::copy(p.value().values().begin(), p.value().values().end(), v.data() + offset);
        offset += p.value().size();
    }
    auto node = std::make_shared<Node>();
    node->value = std::move(v);
    node->requires_grad = recording_ && needs_grad;
    Var out(std::move(node));
    std::vector<std::shared_ptr<Node>> inputs;
    inputs.reserve(parts.size());
    for (const Var& p : parts) inputs.push_back(p.node_);
    record(out, [o = out.node_, inputs = std::move(inputs)] {
        std::size_t at = 0;
        for (const auto& in : inputs) {
            const std::size_t n = in->value.size();
            if (in->requires_grad) {
                Matrix& g = grad_of(*in);
                for (std::size_t i = 0; i < n; ++i) g[i] += o->grad[at + i];
            }
            at += n;
        }
    });
    return out;
}

Var Tape::gather_rows(const Var& table, std::span<const std::size_t> indices) {
    const std::size_t cols = table.cols();
    Matrix v(indices.size(), cols);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= table.rows()) {
            throw ArgumentError("gather_rows: index " + std::to_string(indices[r]) +
                                " out of range for " + table.value().shape_string());
        }
        auto src = table.value().row(indices[r]);
        std::copy(src.begin(), src.end(), v.row(r).begin());
    }
    Var out = make(std::move(v), {&table});
    record(out, [o = out.node_, t = table.node_,
                 idx = std::vector<std::size_t>(indices.begin(), indices.end())] {
        Matrix& g = grad_of(*t);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            auto src = o->grad.row(r);
            auto dst = g.row(idx[r]);
            for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
    });
    return out;
}

Var Tape::conv1d(const Var& input, const Var& kernels, const Var& bias, std::size_t width) {
    const std::size_t length = input.rows();
    const std::size_t channels = input.cols();
    if (width == 0) throw ArgumentError("conv1d: kernel width must be positive");
    if (length < width) {
        throw DimensionError("conv1d: input length " + std::to_string(length) +
                             " shorter than kernel width " + std::to_string(width));
    }
    if (kernels.rows() != width * channels) {
        throw DimensionError("conv1d: kernels " + kernels.value().shape_string() +
                             " do not match width " + std::to_string(width) + " x " +
                             std::to_string(channels) + " channels");
    }
    const std::size_t filters = kernels.cols();
    if (bias.rows() != 1 || bias.cols() != filters) {
        throw DimensionError("conv1d: bias " + bias.value().shape_string() + " for " +
                             std::to_string(filters) + " filters");
    }
    const std::size_t positions = length - width + 1;
    // Window t of a row-major L x C input is the contiguous slice [t*C, (t+width)*C),
    // so the im2col matrix is a strided view with row stride C.
    using Stride = Eigen::OuterStride<>;
    const auto windows = [positions, width, channels](const Matrix& in) {
        return Eigen::Map<const detail::RowMajorMatrix, 0, Stride>(
            in.data(), static_cast<Eigen::Index>(positions),
            static_cast<Eigen::Index>(width * channels), Stride(static_cast<Eigen::Index>(channels)));
    };
    Matrix v(positions, filters);
    view(v).noalias() = windows(input.value()) * view(kernels.value());
    view(v).rowwise() += view(bias.value()).row(0);
    Var out = make(std::move(v), {&input, &kernels, &bias});
    record(out, [o = out.node_, in = input.node_, k = kernels.node_, b = bias.node_, positions,
                 width, channels, windows] {
        const Matrix& g = o->grad;
        if (k->requires_grad)
            view(grad_of(*k)).noalias() += windows(in->value).transpose() * view(g);
        if (b->requires_grad) view(grad_of(*b)) += view(g).colwise().sum();
        if (in->requires_grad) {
            detail::RowMajorMatrix dwin = view(g) * view(k->value).transpose();
            Matrix& gi = grad_of(*in);
            for (std::size_t t = 0; t < positions; ++t) {
                double* dst = gi.data() + t * channels;
                for (std::size_t j = 0; j < width * channels; ++j)
                    dst[j] += dwin(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j));
            }
        }
    });
    return out;
}

Var Tape::maxpool_rows(const Var& input, std::size_t window) {
    if (window < 1) throw ArgumentError("maxpool: window must be at least 1");
    const std::size_t length = input.rows();
    const std::size_t cols = input.cols();
    if (length < 1) throw DimensionError("maxpool: empty input");
    const std::size_t pooled = (length + window - 1) / window;
    Matrix v(pooled, cols);
    std::vector<std::size_t> argmax(pooled * cols);
    const Matrix& in = input.value();
    for (std::size_t p = 0; p < pooled; ++p) {
        const std::size_t begin = p * window;
        const std::size_t end = std::min(begin + window, length);
        for (std::size_t c = 0; c < cols; ++c) {
            std::size_t best = begin;
            for (std::size_t r = begin + 1; r < end; ++r)
                if (in(r, c) > in(best, c)) best = r;
            v(p, c) = in(best, c);
            argmax[p * cols + c] = best;
        }
    }
    Var out = make(std::move(v), {&input});
    record(out, [o = out.node_, in = input.node_, argmax = std::move(argmax), cols] {
        Matrix& g = grad_of(*in);
        for (std::size_t i = 0; i < argmax.size(); ++i) g(argmax[i], i % cols) += o->grad[i];
    });
    return out;
}

Var Tape::flatten(const Var& a) {
    Matrix v(1, a.value().size(),
             std::vector<double>(a.value().values().begin(), a.value().values().end()));
    Var out = make(std::move(v), {&a});
    record(out, [o = out.node_, a = a.node_] {
        Matrix& g = grad_of(*a);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    });
    return out;
}

Var Tape::softmax(const Var& logits) {
    Var out = make(clickpath::softmax(logits.value()), {&logits});
    record(out, [o = out.node_, a = logits.node_] {
        // dz = p * (dp - <p, dp>) per row
        Matrix& g = grad_of(*a);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            auto p = o->value.row(r);
            auto dp = o->grad.row(r);
            double inner = 0.0;
            for (std::size_t c = 0; c < p.size(); ++c) inner += p[c] * dp[c];
            auto dz = g.row(r);
            for (std::size_t c = 0; c < p.size(); ++c) dz[c] += p[c] * (dp[c] - inner);
        }
    });
    return out;
}

Var Tape::cross_entropy(const Var& probs, std::span<const std::size_t> targets,
                        std::span<const double> weights) {
    if (targets.size() != probs.rows() || weights.size() != probs.rows()) {
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets and " +
                             std::to_string(weights.size()) + " weights for " +
                             probs.value().shape_string() + " predictions");
    }
    double total = 0.0;
    for (std::size_t b = 0; b < targets.size(); ++b) {
        if (weights[b] == 0.0) continue;
        total += weights[b] * clickpath::cross_entropy(probs.value().row(b), targets[b]);
    }
    Var out = make(Matrix(1, 1, total), {&probs});
    record(out, [o = out.node_, p = probs.node_,
                 t = std::vector<std::size_t>(targets.begin(), targets.end()),
                 w = std::vector<double>(weights.begin(), weights.end())] {
        Matrix& g = grad_of(*p);
        const double seed = o->grad[0];
        for (std::size_t b = 0; b < t.size(); ++b) {
            const double q = p->value(b, t[b]);
            if (w[b] != 0.0 && q > kProbabilityFloor) g(b, t[b]) -= seed * w[b] / q;
        }
    });
    return out;
}

Var Tape::sum(const Var& a) {
    Var out = make(Matrix(1, 1, view(a.value()).sum()), {&a});
    record(out, [o = out.node_, a = a.node_] {
        view(grad_of(*a)).array() += o->grad[0];
    });
    return out;
}

Var Tape::sum(std::span<const Var> scalars) {
    double total = 0.0;
    bool needs_grad = false;
    for (const Var& s : scalars) {
        if (s.value().size() != 1) {
            throw DimensionError("sum of scalars given " + s.value().shape_string());
        }
        total += s.value()[0];
        needs_grad = needs_grad || s.requires_grad();
    }
    auto node = std::make_shared<Node>();
    node->value = Matrix(1, 1, total);
    node->requires_grad = recording_ && needs_grad;
    Var out(std::move(node));
    std::vector<std::shared_ptr<Node>> inputs;
    for (const Var& s : scalars) inputs.push_back(s.node_);
    record(out, [o = out.node_, inputs = std::move(inputs)] {
        for (const auto& in : inputs)
            if (in->requires_grad) grad_of(*in)[0] += o->grad[0];
    });
    return out;
}

void Tape::backward(const Var& loss) {
    if (!loss.valid() || loss.value().size() != 1) {
        throw ArgumentError("backward: loss must be a 1x1 scalar, got " +
                            (loss.valid() ? loss.value().shape_string() : std::string("null")));
    }
    for (const Entry& e : entries_) grad_of(*e.output).fill(0.0);
    if (!loss.requires_grad()) return;
    grad_of(*loss.node_)[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->propagate();
}

}  // namespace clickpath
