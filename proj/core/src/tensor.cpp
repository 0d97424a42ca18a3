#include "invdes/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace invdes {

namespace {

int numel(const Tensor::Shape& s) {
  int n = 1;
  for (int e : s) {
    if (e < 0) throw ShapeError("negative extent in shape");
    n *= e;
  }
  return s.empty() ? 1 : n;
}

std::string shape_str(const Tensor::Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

void require_2d(const Tensor& t, const char* who) {
  require(t.rank() == 2, std::string(who) + ": expected 2-D tensor, got " + shape_str(t.shape()));
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

// C[m x n] += A[m x k] * B[k x n]; fixed loop order so results are
// reproducible and the j-loop vectorizes.
void matmul_accum(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// gA[m x k] += gC[m x n] * B^T
void matmul_grad_a(const double* gc, const double* b, double* ga, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* gci = gc + static_cast<size_t>(i) * n;
    double* gai = ga + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double* bp = b + static_cast<size_t>(p) * n;
      double acc = 0;
      for (int j = 0; j < n; ++j) acc += gci[j] * bp[j];
      gai[p] += acc;
    }
  }
}

// gB[k x n] += A^T * gC
void matmul_grad_b(const double* a, const double* gc, double* gb, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    const double* gci = gc + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      double* gbp = gb + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) gbp[j] += av * gci[j];
    }
  }
}

}  // namespace

const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::ScalarMul: return "scalar_mul";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::MatMul: return "matmul";
    case OpKind::AddRow: return "add_row";
    case OpKind::MulRow: return "mul_row";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::StdDev: return "stddev";
    case OpKind::Tanh: return "tanh";
    case OpKind::Relu: return "relu";
    case OpKind::Exp: return "exp";
    case OpKind::Sin: return "sin";
    case OpKind::Cos: return "cos";
    case OpKind::Square: return "square";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Gather: return "gather";
    case OpKind::ScatterAdd: return "scatter_add";
    case OpKind::ConcatRows: return "concat_rows";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::SliceRows: return "slice_rows";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::Reshape: return "reshape";
    case OpKind::Dot: return "dot";
    case OpKind::LayerNorm: return "layer_norm";
  }
  return "?";
}

// ---- Tensor ----

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  data_ = std::make_shared<const std::vector<double>>(numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (static_cast<int>(data.size()) != numel(shape_))
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape_));
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::full(Shape shape, double v) {
  std::vector<double> d(numel(shape), v);
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev) {
  std::vector<double> d(numel(shape));
  for (double& x : d) x = rng.normal() * stddev;
  return Tensor(std::move(shape), std::move(d));
}

int Tensor::size() const { return data_ ? static_cast<int>(data_->size()) : 0; }

int Tensor::rows() const {
  require_2d(*this, "rows");
  return shape_[0];
}

int Tensor::cols() const {
  if (rank() == 1) return 1;
  require_2d(*this, "cols");
  return shape_[1];
}

double Tensor::value() const {
  require(size() == 1, "value(): tensor is not scalar, shape " + shape_str(shape_));
  return (*data_)[0];
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = -1;
  return t;
}

bool Tensor::all_finite() const {
  if (!data_) return true;
  for (double v : *data_)
    if (!std::isfinite(v)) return false;
  return true;
}

// ---- recording ----

Tensor record_op(OpKind kind, const std::vector<const Tensor*>& ins,
                 std::vector<int> out_shape, std::vector<double> out_data,
                 std::vector<int> aux, double c) {
  Tape* tape = nullptr;
  for (const Tensor* t : ins) {
    if (t->on_tape()) {
      if (tape && tape != t->tape())
        throw ShapeError(std::string(op_kind_name(kind)) + ": operands on different tapes");
      tape = t->tape();
    }
  }
  Tensor out;
  out.shape_ = std::move(out_shape);
  if (static_cast<int>(out_data.size()) != numel(out.shape_))
    throw ShapeError("internal: bad op output size");
  auto buf = std::make_shared<const std::vector<double>>(std::move(out_data));
  out.data_ = buf;
  if (!tape) return out;

  Tape::Node node;
  node.kind = kind;
  node.out_shape = out.shape_;
  node.aux = std::move(aux);
  node.c = c;
  node.ins.reserve(ins.size());
  node.in_shapes.reserve(ins.size());
  node.saved.reserve(ins.size() + 1);
  for (const Tensor* t : ins) {
    node.ins.push_back(t->on_tape() ? t->node_ : -1);
    node.in_shapes.push_back(t->shape_);
    node.saved.push_back(t->data_);
  }
  node.saved.push_back(buf);
  out.tape_ = tape;
  out.node_ = tape->push_node(std::move(node));
  return out;
}

int Tape::push_node(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::leaf(const Tensor& value, bool requires_grad) {
  Node node;
  node.kind = OpKind::Leaf;
  node.out_shape = value.shape();
  node.saved.push_back(value.data_);
  node.requires_grad = requires_grad;
  Tensor out = value;
  out.tape_ = this;
  out.node_ = push_node(std::move(node));
  return out;
}

// ---- forward ops ----

namespace {

std::vector<double> zip(const Tensor& a, const Tensor& b, double (*f)(double, double),
                        const char* who) {
  require(same_shape(a, b), std::string(who) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  std::vector<double> out(a.size());
  const auto& av = a.data();
  const auto& bv = b.data();
  for (int i = 0; i < a.size(); ++i) out[i] = f(av[i], bv[i]);
  return out;
}

Tensor map_op(OpKind kind, const Tensor& a, double (*f)(double)) {
  std::vector<double> out(a.size());
  const auto& av = a.data();
  for (int i = 0; i < a.size(); ++i) out[i] = f(av[i]);
  return record_op(kind, {&a}, a.shape(), std::move(out), {}, 0);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return record_op(OpKind::Add, {&a, &b}, a.shape(),
                   zip(a, b, [](double x, double y) { return x + y; }, "add"), {}, 0);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return record_op(OpKind::Sub, {&a, &b}, a.shape(),
                   zip(a, b, [](double x, double y) { return x - y; }, "sub"), {}, 0);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.is_scalar() && !b.is_scalar()) {
    std::vector<double> out(b.size());
    const double av = a.data()[0];
    for (int i = 0; i < b.size(); ++i) out[i] = av * b.data()[i];
    return record_op(OpKind::Mul, {&a, &b}, b.shape(), std::move(out), {}, 0);
  }
  if (b.is_scalar() && !a.is_scalar()) {
    std::vector<double> out(a.size());
    const double bv = b.data()[0];
    for (int i = 0; i < a.size(); ++i) out[i] = a.data()[i] * bv;
    return record_op(OpKind::Mul, {&a, &b}, a.shape(), std::move(out), {}, 0);
  }
  return record_op(OpKind::Mul, {&a, &b}, a.shape(),
                   zip(a, b, [](double x, double y) { return x * y; }, "mul"), {}, 0);
}

Tensor scalar_mul(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (int i = 0; i < a.size(); ++i) out[i] = a.data()[i] * c;
  return record_op(OpKind::ScalarMul, {&a}, a.shape(), std::move(out), {}, c);
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (int i = 0; i < a.size(); ++i) out[i] = a.data()[i] + c;
  return record_op(OpKind::AddScalar, {&a}, a.shape(), std::move(out), {}, c);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  require(b.shape()[0] == k, "matmul: inner dims " + shape_str(a.shape()) + " x " +
                                 shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  matmul_accum(a.data().data(), b.data().data(), out.data(), m, k, n);
  return record_op(OpKind::MatMul, {&a, &b}, {m, n}, std::move(out), {}, 0);
}

namespace {
const Tensor& check_row_arg(const Tensor& a, const Tensor& row, const char* who) {
  require_2d(a, who);
  const int n = a.shape()[1];
  const bool ok = (row.rank() == 1 && row.shape()[0] == n) ||
                  (row.rank() == 2 && row.shape()[0] == 1 && row.shape()[1] == n);
  require(ok, std::string(who) + ": row shape " + shape_str(row.shape()) +
                  " does not match matrix " + shape_str(a.shape()));
  return row;
}
}  // namespace

Tensor add_row(const Tensor& a, const Tensor& row) {
  check_row_arg(a, row, "add_row");
  const int m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(a.data());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] += row.data()[j];
  return record_op(OpKind::AddRow, {&a, &row}, a.shape(), std::move(out), {}, 0);
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  check_row_arg(a, row, "mul_row");
  const int m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(a.data());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] *= row.data()[j];
  return record_op(OpKind::MulRow, {&a, &row}, a.shape(), std::move(out), {}, 0);
}

Tensor sum(const Tensor& a) {
  double s = 0;
  for (double v : a.data()) s += v;
  return record_op(OpKind::Sum, {&a}, {1}, {s}, {}, 0);
}

Tensor mean(const Tensor& a) {
  require(a.size() > 0, "mean of empty tensor");
  double s = 0;
  for (double v : a.data()) s += v;
  return record_op(OpKind::Mean, {&a}, {1}, {s / a.size()}, {}, 0);
}

Tensor stddev(const Tensor& a) {
  require(a.size() > 0, "stddev of empty tensor");
  const int n = a.size();
  double s = 0;
  for (double v : a.data()) s += v;
  const double mu = s / n;
  double ss = 0;
  for (double v : a.data()) ss += (v - mu) * (v - mu);
  return record_op(OpKind::StdDev, {&a}, {1}, {std::sqrt(ss / n)}, {}, 0);
}

Tensor tanh(const Tensor& a) { return map_op(OpKind::Tanh, a, [](double x) { return std::tanh(x); }); }
Tensor relu(const Tensor& a) { return map_op(OpKind::Relu, a, [](double x) { return x > 0 ? x : 0.0; }); }
Tensor exp(const Tensor& a) { return map_op(OpKind::Exp, a, [](double x) { return std::exp(x); }); }
Tensor sin(const Tensor& a) { return map_op(OpKind::Sin, a, [](double x) { return std::sin(x); }); }
Tensor cos(const Tensor& a) { return map_op(OpKind::Cos, a, [](double x) { return std::cos(x); }); }
Tensor square(const Tensor& a) { return map_op(OpKind::Square, a, [](double x) { return x * x; }); }
Tensor sqrt(const Tensor& a) { return map_op(OpKind::Sqrt, a, [](double x) { return std::sqrt(x); }); }

Tensor gather(const Tensor& a, const std::vector<int>& idx) {
  const int n = a.rank() == 1 ? a.shape()[0] : a.shape()[0];
  const int d = a.rank() == 1 ? 1 : a.shape()[1];
  for (int i : idx)
    require(i >= 0 && i < n, "gather: index " + std::to_string(i) + " out of range [0," +
                                 std::to_string(n) + ")");
  const int k = static_cast<int>(idx.size());
  std::vector<double> out(static_cast<size_t>(k) * d);
  for (int r = 0; r < k; ++r)
    std::memcpy(out.data() + static_cast<size_t>(r) * d,
                a.data().data() + static_cast<size_t>(idx[r]) * d, sizeof(double) * d);
  Tensor::Shape shape = a.rank() == 1 ? Tensor::Shape{k} : Tensor::Shape{k, d};
  return record_op(OpKind::Gather, {&a}, std::move(shape), std::move(out), idx, 0);
}

Tensor scatter_add(const Tensor& values, const std::vector<int>& idx, int num_slots) {
  const int k = values.rank() == 1 ? values.shape()[0] : values.shape()[0];
  const int d = values.rank() == 1 ? 1 : values.shape()[1];
  require(static_cast<int>(idx.size()) == k,
          "scatter_add: " + std::to_string(idx.size()) + " indices for " + std::to_string(k) +
              " rows");
  for (int i : idx)
    require(i >= 0 && i < num_slots, "scatter_add: index " + std::to_string(i) +
                                         " out of range [0," + std::to_string(num_slots) + ")");
  std::vector<double> out(static_cast<size_t>(num_slots) * d, 0.0);
  for (int r = 0; r < k; ++r) {
    const double* src = values.data().data() + static_cast<size_t>(r) * d;
    double* dst = out.data() + static_cast<size_t>(idx[r]) * d;
    for (int j = 0; j < d; ++j) dst[j] += src[j];
  }
  Tensor::Shape shape = values.rank() == 1 ? Tensor::Shape{num_slots} : Tensor::Shape{num_slots, d};
  return record_op(OpKind::ScatterAdd, {&values}, std::move(shape), std::move(out), idx, 0);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: no parts");
  std::vector<const Tensor*> ins;
  int total = 0;
  const int d = parts[0].rank() == 1 ? 1 : parts[0].shape()[1];
  for (const Tensor& p : parts) {
    const int pd = p.rank() == 1 ? 1 : p.shape()[1];
    require(pd == d && p.rank() == parts[0].rank(), "concat_rows: column mismatch");
    total += p.shape()[0];
    ins.push_back(&p);
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(total) * d);
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor::Shape shape = parts[0].rank() == 1 ? Tensor::Shape{total} : Tensor::Shape{total, d};
  return record_op(OpKind::ConcatRows, ins, std::move(shape), std::move(out), {}, 0);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  std::vector<const Tensor*> ins;
  const int m = parts[0].shape()[0];
  int total = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_cols");
    require(p.shape()[0] == m, "concat_cols: row mismatch");
    total += p.shape()[1];
    ins.push_back(&p);
  }
  std::vector<double> out(static_cast<size_t>(m) * total);
  int col0 = 0;
  for (const Tensor& p : parts) {
    const int d = p.shape()[1];
    for (int i = 0; i < m; ++i)
      std::memcpy(out.data() + static_cast<size_t>(i) * total + col0,
                  p.data().data() + static_cast<size_t>(i) * d, sizeof(double) * d);
    col0 += d;
  }
  return record_op(OpKind::ConcatCols, ins, {m, total}, std::move(out), {}, 0);
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  const int n = a.shape()[0];
  const int d = a.rank() == 1 ? 1 : a.shape()[1];
  require(0 <= r0 && r0 <= r1 && r1 <= n, "slice_rows: bad range");
  std::vector<double> out(a.data().begin() + static_cast<size_t>(r0) * d,
                          a.data().begin() + static_cast<size_t>(r1) * d);
  Tensor::Shape shape = a.rank() == 1 ? Tensor::Shape{r1 - r0} : Tensor::Shape{r1 - r0, d};
  return record_op(OpKind::SliceRows, {&a}, std::move(shape), std::move(out), {r0, r1}, 0);
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  require_2d(a, "slice_cols");
  const int m = a.shape()[0], d = a.shape()[1];
  require(0 <= c0 && c0 <= c1 && c1 <= d, "slice_cols: bad range");
  const int w = c1 - c0;
  std::vector<double> out(static_cast<size_t>(m) * w);
  for (int i = 0; i < m; ++i)
    std::memcpy(out.data() + static_cast<size_t>(i) * w,
                a.data().data() + static_cast<size_t>(i) * d + c0, sizeof(double) * w);
  return record_op(OpKind::SliceCols, {&a}, {m, w}, std::move(out), {c0, c1}, 0);
}

Tensor reshape(const Tensor& a, Tensor::Shape shape) {
  require(numel(shape) == a.size(), "reshape: size mismatch");
  return record_op(OpKind::Reshape, {&a}, std::move(shape), a.data(), {}, 0);
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size(), "dot: size mismatch");
  double s = 0;
  for (int i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return record_op(OpKind::Dot, {&a, &b}, {1}, {s}, {}, 0);
}

Tensor layer_norm(const Tensor& a, double eps) {
  require_2d(a, "layer_norm");
  const int m = a.shape()[0], d = a.shape()[1];
  require(d > 0, "layer_norm: empty rows");
  std::vector<double> out(a.size());
  for (int i = 0; i < m; ++i) {
    const double* x = a.data().data() + static_cast<size_t>(i) * d;
    double mu = 0;
    for (int j = 0; j < d; ++j) mu += x[j];
    mu /= d;
    double var = 0;
    for (int j = 0; j < d; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    double* y = out.data() + static_cast<size_t>(i) * d;
    for (int j = 0; j < d; ++j) y[j] = (x[j] - mu) * inv;
  }
  return record_op(OpKind::LayerNorm, {&a}, a.shape(), std::move(out), {}, eps);
}

// ---- backward ----

std::unordered_map<int, Tensor> Tape::backward(const Tensor& root) {
  if (root.tape() != this) throw ShapeError("backward: root is not on this tape");
  if (!root.is_scalar())
    throw ShapeError("backward: root must be scalar, shape " + shape_str(root.shape()));
  if (!std::isfinite(root.value()))
    throw NumericError("backward: non-finite root value");
  return backward_seeded({{root.node(), {1.0}}});
}

std::unordered_map<int, Tensor> Tape::backward_seeded(
    const std::vector<BackwardSeed>& seeds, const std::vector<BackwardSeed>& carry_in) {
  if (consumed_) throw std::logic_error("tape already consumed by a backward pass");
  consumed_ = true;

  const int n = static_cast<int>(nodes_.size());
  std::vector<std::vector<double>> grads(n);
  std::vector<char> touched(n, 0);
  auto ensure = [&](int id) -> std::vector<double>& {
    if (!touched[id]) {
      grads[id].assign(numel(nodes_[id].out_shape), 0.0);
      touched[id] = 1;
    }
    return grads[id];
  };

  for (const BackwardSeed& s : carry_in) {
    if (s.node < 0) continue;
    auto& g = ensure(s.node);
    if (g.size() != s.grad.size()) throw ShapeError("backward: carry-in size mismatch");
    g = s.grad;
  }
  for (const BackwardSeed& s : seeds) {
    if (s.node < 0) continue;  // detached output: nothing to propagate
    auto& g = ensure(s.node);
    if (g.size() != s.grad.size()) throw ShapeError("backward: seed size mismatch");
    for (size_t i = 0; i < g.size(); ++i) g[i] += s.grad[i];
  }

  for (int id = n - 1; id >= 0; --id) {
    if (!touched[id]) continue;
    const Node& node = nodes_[id];
    const std::vector<double>& g = grads[id];
    for (double v : g)
      if (!std::isfinite(v))
        throw NumericError(std::string("backward: non-finite gradient at op '") +
                           op_kind_name(node.kind) + "'");
    if (node.kind == OpKind::Leaf) continue;

    auto in_grad = [&](int slot) -> std::vector<double>* {
      const int in_id = node.ins[slot];
      if (in_id < 0) return nullptr;  // constant operand
      return &ensure(in_id);
    };
    auto saved = [&](int slot) -> const std::vector<double>& { return *node.saved[slot]; };
    const std::vector<double>& out_saved = *node.saved.back();

    switch (node.kind) {
      case OpKind::Add: {
        for (int s = 0; s < 2; ++s)
          if (auto* ga = in_grad(s))
            for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        break;
      }
      case OpKind::Sub: {
        if (auto* ga = in_grad(0))
          for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        if (auto* gb = in_grad(1))
          for (size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
        break;
      }
      case OpKind::Mul: {
        const auto& a = saved(0);
        const auto& b = saved(1);
        const bool a_scalar = a.size() == 1 && b.size() > 1;
        const bool b_scalar = b.size() == 1 && a.size() > 1;
        if (auto* ga = in_grad(0)) {
          if (a_scalar) {
            double acc = 0;
            for (size_t i = 0; i < g.size(); ++i) acc += g[i] * b[i];
            (*ga)[0] += acc;
          } else if (b_scalar) {
            for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b[0];
          } else {
            for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b[i];
          }
        }
        if (auto* gb = in_grad(1)) {
          if (b_scalar) {
            double acc = 0;
            for (size_t i = 0; i < g.size(); ++i) acc += g[i] * a[i];
            (*gb)[0] += acc;
          } else if (a_scalar) {
            for (size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a[0];
          } else {
            for (size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a[i];
          }
        }
        break;
      }
      case OpKind::ScalarMul: {
        if (auto* ga = in_grad(0))
          for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * node.c;
        break;
      }
      case OpKind::AddScalar: {
        if (auto* ga = in_grad(0))
          for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        break;
      }
      case OpKind::MatMul: {
        const int m = node.in_shapes[0][0], k = node.in_shapes[0][1], nn = node.in_shapes[1][1];
        if (auto* ga = in_grad(0)) matmul_grad_a(g.data(), saved(1).data(), ga->data(), m, k, nn);
        if (auto* gb = in_grad(1)) matmul_grad_b(saved(0).data(), g.data(), gb->data(), m, k, nn);
        break;
      }
      case OpKind::AddRow: {
        const int m = node.out_shape[0], d = node.out_shape[1];
        if (auto* ga = in_grad(0))
          for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        if (auto* gr = in_grad(1)) {
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < d; ++j) (*gr)[j] += g[static_cast<size_t>(i) * d + j];
        }
        break;
      }
      case OpKind::MulRow: {
        const int m = node.out_shape[0], d = node.out_shape[1];
        const auto& a = saved(0);
        const auto& r = saved(1);
        if (auto* ga = in_grad(0))
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < d; ++j) {
              const size_t o = static_cast<size_t>(i) * d + j;
              (*ga)[o] += g[o] * r[j];
            }
        if (auto* gr = in_grad(1))
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < d; ++j) {
              const size_t o = static_cast<size_t>(i) * d + j;
              (*gr)[j] += g[o] * a[o];
            }
        break;
      }
      case OpKind::Sum: {
        if (auto* ga = in_grad(0))
          for (size_t i = 0; i < ga->size(); ++i) (*ga)[i] += g[0];
        break;
      }
      case OpKind::Mean: {
        if (auto* ga = in_grad(0)) {
          const double s = g[0] / static_cast<double>(ga->size());
          for (size_t i = 0; i < ga->size(); ++i) (*ga)[i] += s;
        }
        break;
      }
      case OpKind::StdDev: {
        if (auto* ga = in_grad(0)) {
          const auto& x = saved(0);
          const int cnt = static_cast<int>(x.size());
          const double sd = out_saved[0];
          if (sd > 0) {
            double mu = 0;
            for (double v : x) mu += v;
            mu /= cnt;
            const double s = g[0] / (cnt * sd);
            for (int i = 0; i < cnt; ++i) (*ga)[i] += s * (x[i] - mu);
          }
        }
        break;
      }
      case OpKind::Tanh: {
        if (auto* ga = in_grad(0))
          for (size_t i = 0; i < g.size(); ++i)
            (*ga)[i] += g[i] * (1.0 - out_saved[i] * out_saved[i]);
        break;
      }
      case OpKind::Relu: {
        if (auto* ga = in_grad(0)) {
          const auto& x = saved(0);
          for (size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0) (*ga)[i] += g[i];
        }
        break;
      }
      case OpKind::Exp: {
        if (auto* ga = in_grad(0))
          for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * out_saved[i];
        break;
      }
      case OpKind::Sin: {
        if (auto* ga = in_grad(0)) {
          const auto& x = saved(0);
          for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * std::cos(x[i]);
        }
        break;
      }
      case OpKind::Cos: {
        if (auto* ga = in_grad(0)) {
          const auto& x = saved(0);
          for (size_t i = 0; i < g.size(); ++i) (*ga)[i] -= g[i] * std::sin(x[i]);
        }
        break;
      }
      case OpKind::Square: {
        if (auto* ga = in_grad(0)) {
          const auto& x = saved(0);
          for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * 2.0 * x[i];
        }
        break;
      }
      case OpKind::Sqrt: {
        if (auto* ga = in_grad(0))
          for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * 0.5 / out_saved[i];
        break;
      }
      case OpKind::Gather: {
        if (auto* ga = in_grad(0)) {
          const int d = node.out_shape.size() == 2 ? node.out_shape[1] : 1;
          for (size_t r = 0; r < node.aux.size(); ++r) {
            double* dst = ga->data() + static_cast<size_t>(node.aux[r]) * d;
            const double* src = g.data() + r * d;
            for (int j = 0; j < d; ++j) dst[j] += src[j];
          }
        }
        break;
      }
      case OpKind::ScatterAdd: {
        if (auto* gv = in_grad(0)) {
          const int d = node.out_shape.size() == 2 ? node.out_shape[1] : 1;
          for (size_t r = 0; r < node.aux.size(); ++r) {
            const double* src = g.data() + static_cast<size_t>(node.aux[r]) * d;
            double* dst = gv->data() + r * d;
            for (int j = 0; j < d; ++j) dst[j] += src[j];
          }
        }
        break;
      }
      case OpKind::ConcatRows: {
        size_t off = 0;
        for (size_t s = 0; s < node.ins.size(); ++s) {
          const size_t sz = static_cast<size_t>(numel(node.in_shapes[s]));
          if (auto* gp = in_grad(static_cast<int>(s)))
            for (size_t i = 0; i < sz; ++i) (*gp)[i] += g[off + i];
          off += sz;
        }
        break;
      }
      case OpKind::ConcatCols: {
        const int m = node.out_shape[0], total = node.out_shape[1];
        int col0 = 0;
        for (size_t s = 0; s < node.ins.size(); ++s) {
          const int d = node.in_shapes[s][1];
          if (auto* gp = in_grad(static_cast<int>(s)))
            for (int i = 0; i < m; ++i)
              for (int j = 0; j < d; ++j)
                (*gp)[static_cast<size_t>(i) * d + j] +=
                    g[static_cast<size_t>(i) * total + col0 + j];
          col0 += d;
        }
        break;
      }
      case OpKind::SliceRows: {
        if (auto* ga = in_grad(0)) {
          const int d = node.in_shapes[0].size() == 2 ? node.in_shapes[0][1] : 1;
          const size_t off = static_cast<size_t>(node.aux[0]) * d;
          for (size_t i = 0; i < g.size(); ++i) (*ga)[off + i] += g[i];
        }
        break;
      }
      case OpKind::SliceCols: {
        if (auto* ga = in_grad(0)) {
          const int m = node.out_shape[0], w = node.out_shape[1];
          const int d = node.in_shapes[0][1];
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
              (*ga)[static_cast<size_t>(i) * d + node.aux[0] + j] +=
                  g[static_cast<size_t>(i) * w + j];
        }
        break;
      }
      case OpKind::Reshape: {
        if (auto* ga = in_grad(0))
          for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        break;
      }
      case OpKind::Dot: {
        const auto& a = saved(0);
        const auto& b = saved(1);
        if (auto* ga = in_grad(0))
          for (size_t i = 0; i < a.size(); ++i) (*ga)[i] += g[0] * b[i];
        if (auto* gb = in_grad(1))
          for (size_t i = 0; i < b.size(); ++i) (*gb)[i] += g[0] * a[i];
        break;
      }
      case OpKind::LayerNorm: {
        if (auto* ga = in_grad(0)) {
          const int m = node.out_shape[0], d = node.out_shape[1];
          const auto& x = saved(0);
          for (int i = 0; i < m; ++i) {
            const double* xi = x.data() + static_cast<size_t>(i) * d;
            const double* gi = g.data() + static_cast<size_t>(i) * d;
            double mu = 0;
            for (int j = 0; j < d; ++j) mu += xi[j];
            mu /= d;
            double var = 0;
            for (int j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
            var /= d;
            const double s = std::sqrt(var + node.c);
            double gsum = 0, gxsum = 0;
            for (int j = 0; j < d; ++j) {
              gsum += gi[j];
              gxsum += gi[j] * (xi[j] - mu);
            }
            const double gmean = gsum / d;
            const double k2 = gxsum / (d * s * s * s);
            double* gout = ga->data() + static_cast<size_t>(i) * d;
            for (int j = 0; j < d; ++j) gout[j] += (gi[j] - gmean) / s - (xi[j] - mu) * k2;
          }
        }
        break;
      }
      case OpKind::Leaf:
        break;
    }
  }

  std::unordered_map<int, Tensor> result;
  for (int id = 0; id < n; ++id) {
    if (nodes_[id].kind != OpKind::Leaf || !nodes_[id].requires_grad) continue;
    Tensor t;
    if (touched[id]) {
      t = Tensor(nodes_[id].out_shape, std::move(grads[id]));
    } else {
      t = Tensor::zeros(nodes_[id].out_shape);
    }
    result.emplace(id, std::move(t));
  }
  return result;
}

}  // namespace invdes
