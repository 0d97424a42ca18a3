#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "invdes/common.hpp"
#include "invdes/rng.hpp"

namespace invdes {

class Tape;

enum class OpKind : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  ScalarMul,
  AddScalar,
  MatMul,
  AddRow,
  MulRow,
  Sum,
  Mean,
  StdDev,
  Tanh,
  Relu,
  Exp,
  Sin,
  Cos,
  Square,
  Sqrt,
  Gather,
  ScatterAdd,
  ConcatRows,
  ConcatCols,
  SliceRows,
  SliceCols,
  Reshape,
  Dot,
  LayerNorm,
};

const char* op_kind_name(OpKind k);

/// Dense 1-D/2-D tensor of 64-bit floats, row-major. Copies share the
/// underlying buffer; all operations return new tensors. A tensor is
/// optionally attached to a Tape node, in which case operations consuming it
/// are recorded for reverse-mode differentiation.
class Tensor {
 public:
  using Shape = std::vector<int>;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int size() const;
  int rows() const;
  int cols() const;
  bool is_scalar() const { return size() == 1; }
  bool empty() const { return data_ == nullptr; }

  const std::vector<double>& data() const { return *data_; }
  std::span<const double> view() const { return {data_->data(), data_->size()}; }
  double operator[](int i) const { return (*data_)[i]; }
  double at(int r, int c) const { return (*data_)[static_cast<size_t>(r) * cols() + c]; }
  /// Value of a scalar tensor.
  double value() const;

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  /// Same buffer and shape with the tape association dropped.
  Tensor detached() const;

  bool all_finite() const;

 private:
  friend class Tape;
  friend Tensor record_op(OpKind, const std::vector<const Tensor*>&,
                          std::vector<int>, std::vector<double>,
                          std::vector<int>, double);
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

/// Gradient seed injected into a node before the reverse sweep. Used for
/// vector-Jacobian products across checkpoint segment boundaries.
struct BackwardSeed {
  int node = -1;
  std::vector<double> grad;
};

/// Append-only record of operations for one reverse pass. Confined to a
/// single thread; distinct tapes over shared tensors may run concurrently.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Register `value` as a differentiable input. Returns the attached tensor.
  Tensor leaf(const Tensor& value, bool requires_grad = true);

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  bool consumed() const { return consumed_; }

  /// Reverse sweep from a scalar root (seeded with 1). Returns gradients for
  /// every requires-grad leaf, keyed by node id; leaves not reached by the
  /// sweep get zero tensors. A tape can be swept exactly once.
  std::unordered_map<int, Tensor> backward(const Tensor& root);

  /// Reverse sweep with explicit seeds (any nodes) and optional carried-in
  /// accumulator values for leaves, so segment-wise sweeps continue the same
  /// floating-point accumulation sequence as a single full sweep.
  std::unordered_map<int, Tensor> backward_seeded(
      const std::vector<BackwardSeed>& seeds,
      const std::vector<BackwardSeed>& carry_in = {});

 private:
  friend Tensor record_op(OpKind, const std::vector<const Tensor*>&,
                          std::vector<int>, std::vector<double>,
                          std::vector<int>, double);

  struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<int> ins;  // input node ids, -1 for constants
    Tensor::Shape out_shape;
    std::vector<Tensor::Shape> in_shapes;
    // Saved forward buffers (inputs and/or output) needed by the backward rule.
    std::vector<std::shared_ptr<const std::vector<double>>> saved;
    std::vector<int> aux;  // indices / slice bounds / split sizes
    double c = 0;          // scalar operand
    bool requires_grad = false;
  };

  int push_node(Node n);

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// ---- primitive operations ----
// Shapes must conform exactly; the only broadcast is scalar-times-tensor in
// mul(). Results are recorded on a tape when any operand is attached.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product; either operand may be a scalar.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
/// Add a length-n row vector to every row of an m-by-n matrix.
Tensor add_row(const Tensor& a, const Tensor& row);
/// Multiply every row of an m-by-n matrix elementwise by a length-n row.
Tensor mul_row(const Tensor& a, const Tensor& row);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Population standard deviation over all elements.
Tensor stddev(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
/// Select rows of a (or elements of a 1-D tensor) by index.
Tensor gather(const Tensor& a, const std::vector<int>& idx);
/// Sum k rows of `values` into `num_slots` output rows at positions idx.
Tensor scatter_add(const Tensor& values, const std::vector<int>& idx, int num_slots);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor reshape(const Tensor& a, Tensor::Shape shape);
Tensor dot(const Tensor& a, const Tensor& b);
/// Row-wise normalization to zero mean / unit variance (epsilon-stabilized,
/// no learned affine part).
Tensor layer_norm(const Tensor& a, double eps = 1e-8);

}  // namespace invdes
