#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "clickpath/matrix.hpp"

namespace clickpath {

/// Graph node shared between a Var handle and the tape entries that touch it.
struct Node {
    Matrix value;
    Matrix grad;  // allocated lazily; same shape as value once present
    bool requires_grad = false;
};

/// Handle to a value that may take part in reverse-mode differentiation.
///
/// Copies share the underlying node. Parameters are created with
/// `Var::parameter` and accumulate gradients across backward passes until
/// `zero_grad` is called.
class Var {
public:
    Var() = default;

    static Var parameter(Matrix value);
    static Var constant(Matrix value);

    bool valid() const noexcept { return node_ != nullptr; }
    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    bool has_grad() const { return !node_->grad.empty() || node_->value.empty(); }
    /// Gradient buffer; zero-filled on first access.
    Matrix& grad();
    const Matrix& grad() const;
    void zero_grad();
    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    std::size_t rows() const { return node_->value.rows(); }
    std::size_t cols() const { return node_->value.cols(); }

    const std::shared_ptr<Node>& node() const noexcept { return node_; }

private:
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    friend class Tape;

    std::shared_ptr<Node> node_;
};

/// Ordered record of primitive operations.
///
/// Each op computes its value immediately. When recording, it also appends an
/// entry whose closure propagates the output gradient to its operands;
/// `backward` replays these entries in reverse order, which is a reverse
/// topological order of the graph. A non-recording tape evaluates the same
/// arithmetic without keeping any history.
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const noexcept { return recording_; }
    std::size_t size() const noexcept { return entries_.size(); }

    Var constant(Matrix value) const { return Var::constant(std::move(value)); }

    Var matmul(const Var& a, const Var& b);
    Var add(const Var& a, const Var& b);
    /// a (r x n) + bias (1 x n) broadcast over rows.
    Var add_row(const Var& a, const Var& bias);
    Var mul(const Var& a, const Var& b);
    Var scale(const Var& a, double factor);
    Var sigmoid(const Var& a);
    Var tanh(const Var& a);
    Var relu(const Var& a);
    Var columns(const Var& a, std::size_t begin, std::size_t count);
    Var concat_rows(std::span<const Var> parts);
    Var gather_rows(const Var& table, std::span<const std::size_t> indices);
    /// Valid 1-D convolution over rows (no activation).
    /// input L x C, kernels (width*C) x F with row index i*C + c, bias 1 x F.
    Var conv1d(const Var& input, const Var& kernels, const Var& bias, std::size_t width);
    /// Non-overlapping max over row windows; a partial last window is kept.
    Var maxpool_rows(const Var& input, std::size_t window);
    /// Reshape to a single row.
    Var flatten(const Var& a);
    Var softmax(const Var& logits);
    /// Sum over rows b of weights[b] * -log(max(probs[b, targets[b]], floor)).
    Var cross_entropy(const Var& probs, std::span<const std::size_t> targets,
                      std::span<const double> weights);
    Var sum(const Var& a);
    Var sum(std::span<const Var> scalars);

    /// Propagates d(loss)/d(node) to every node reachable from `loss`.
    /// Intermediate gradients are reset first; leaf gradients accumulate.
    void backward(const Var& loss);

private:
    struct Entry {
        std::shared_ptr<Node> output;
        std::function<void()> propagate;
    };

    Var make(Matrix value, std::initializer_list<const Var*> inputs);
    void record(const Var& out, std::function<void()> propagate);

    bool recording_;
    std::vector<Entry> entries_;
};

}  // namespace clickpath
