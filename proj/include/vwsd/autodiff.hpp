#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "vwsd/tensor.hpp"

namespace vwsd {

/// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
/// order, so the tape is always topologically sorted; backward() walks it
/// once in reverse. Gradients accumulate across all consumers of a node.
///
/// Products and reductions accumulate in double regardless of T.
template <class T>
class Tape {
 public:
  struct Var {
    std::uint32_t id;
  };

  /// Value without gradient.
  Var constant(Matrix<T> value);
  /// Owned leaf; gradient is collected when `requires_grad`.
  Var input(Matrix<T> value, bool requires_grad = true);
  /// Leaf that refers to caller-owned storage. `value` must outlive the tape.
  Var leaf(const Matrix<T>& value, bool requires_grad = true);

  const Matrix<T>& value(Var v) const;
  /// Gradient of the last backward() target; zeros when unreachable.
  Matrix<T> grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates. Throws Error unless `loss`
  /// is 1 x 1.
  void backward(Var loss);

  Var matmul(Var a, Var b);     // a * b
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var add_bias(Var a, Var bias);  // bias is 1 x cols, broadcast over rows
  Var mul(Var a, Var b);          // elementwise
  Var scale(Var a, T factor);
  Var relu(Var a);
  Var concat_cols(std::span<const Var> parts);  // [a | b | ...], equal row counts
  Var stack_rows(std::span<const Var> parts);   // rows of a, then b, ...
  Var slice_cols(Var a, std::size_t begin, std::size_t count);
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var x, Var gain, Var bias, T eps);
  Var sum_rows(Var a);  // column sums, 1 x cols
  Var sum(Var a);       // 1 x 1
  /// Throws DegenerateEmbedding when a row has zero norm.
  Var l2_normalize_rows(Var a);
  /// Inverted dropout with keep probability 1 - p.
  Var dropout(Var a, double p, std::mt19937_64& rng);
  /// -log softmax(logits)[gold] for a 1 x C row of logits, as a 1 x 1 node.
  Var cross_entropy(Var logits, std::size_t gold);

 private:
  struct Node {
    Matrix<T> owned;
    const Matrix<T>* external = nullptr;
    Matrix<T> grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  Var push(Matrix<T> value, bool requires_grad);
  bool any_requires_grad(std::initializer_list<Var> vars) const;
  Matrix<T>& grad_ref(Var v);
  const Matrix<T>& grad_of(std::uint32_t id) const { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace vwsd
