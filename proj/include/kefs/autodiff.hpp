#pragma once

// Reverse-mode automatic differentiation over dense float64 matrices.
// A Tape owns the computation graph for one forward pass; ops append nodes
// and backward() walks them in reverse. Desk-scale sizes keep everything
// dense and single-threaded.

#include "kefs/common.hpp"

#include <functional>
#include <vector>

namespace kefs::ad {

using Id = std::int32_t;

class Tape {
  public:
    struct Node {
        Matrix value;
        Matrix grad;  // empty until touched by backward
        bool requires_grad = false;
        std::function<void(Tape&, const Matrix&)> backprop;  // null for leaves
    };

    Id leaf(Matrix value, bool requires_grad);
    Id constant(Matrix value) { return leaf(std::move(value), false); }

    const Matrix& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Matrix& grad(Id id) const;
    bool requires_grad(Id id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 on a 1x1 node and accumulates gradients into
    // every node that requires them.
    void backward(Id loss);

    // Adds `delta` into the gradient of `id` (no-op when grads not required).
    void accumulate(Id id, const Matrix& delta);

    Id emit(Matrix value, bool requires_grad, std::function<void(Tape&, const Matrix&)> backprop);

  private:
    std::vector<Node> nodes_;
};

// ---- arithmetic -----------------------------------------------------------

Id add(Tape& t, Id a, Id b);
Id sub(Tape& t, Id a, Id b);
Id neg(Tape& t, Id a);
Id scale(Tape& t, Id a, double c);
Id add_const(Tape& t, Id a, double c);
Id matmul(Tape& t, Id a, Id b);
Id transpose(Tape& t, Id a);
Id hadamard(Tape& t, Id a, Id b);
Id square(Tape& t, Id a);
// sqrt with a zero-safe derivative (treated as 0 at the origin).
Id sqrt_guard(Tape& t, Id a);

// a: n x m, bias: 1 x m added to every row.
Id add_row_broadcast(Tape& t, Id a, Id bias);
// a: 1 x m replicated `times` rows.
Id repeat_row(Tape& t, Id a, Eigen::Index times);

// ---- nonlinearities -------------------------------------------------------

Id leaky_relu(Tape& t, Id a, double slope = kLeakyReluSlope);
// Elementwise derivative values of LeakyReLU; its own gradient is 0 a.e.
Id leaky_relu_mask(Tape& t, Id a, double slope = kLeakyReluSlope);
Id sigmoid(Tape& t, Id a);
Id log_sigmoid(Tape& t, Id a);
Id softmax_rows(Tape& t, Id a);
Id layer_norm_rows(Tape& t, Id a, double eps = kLayerNormEpsilon);
// Re-statistics of each content row with the matching style row's mean/std.
Id adain(Tape& t, Id content, Id style, double eps = kAdainEpsilon);

// ---- shape ----------------------------------------------------------------

Id concat_cols(Tape& t, Id a, Id b);
Id slice_cols(Tape& t, Id a, Eigen::Index start, Eigen::Index len);
Id gather_rows(Tape& t, Id a, const std::vector<Eigen::Index>& rows);

// ---- reductions -----------------------------------------------------------

Id row_sum(Tape& t, Id a);   // n x m -> n x 1
Id sum_all(Tape& t, Id a);   // -> 1 x 1
Id mean_all(Tape& t, Id a);  // -> 1 x 1

inline double scalar(const Tape& t, Id a) { return t.value(a)(0, 0); }

}  // namespace kefs::ad
