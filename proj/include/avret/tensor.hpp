#pragma once
// Dense row-major matrices of doubles with reverse-mode automatic
// differentiation. A Tensor is a cheap immutable handle to a node in an
// acyclic expression graph; every operation records its backward rule, and
// backward() on a scalar walks the graph once in reverse topological order.
// Gradients accumulate persistently on parameter leaves only and survive
// across backward() calls until zero_grad(); interior nodes use per-call
// scratch buffers, so repeated backward passes scale gradients exactly.

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace avret {

namespace detail {

struct TensorNode {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  bool is_param = false;
  bool requires_grad = false;
  std::vector<double> grad;     // persistent accumulator, parameters only
  std::vector<double> scratch;  // workspace zeroed at the start of each backward()
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> pull;  // adds d(loss)/d(parent) into parent scratch

  std::size_t size() const { return rows * cols; }
};

inline std::string shape_str(std::size_t r, std::size_t c) {
  return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

inline std::string shape_str(const TensorNode& n) { return shape_str(n.rows, n.cols); }

// How the right operand of a binary op maps onto the left one.
enum class Bcast { none, row, col };

inline Bcast bcast_of(const char* op, const TensorNode& a, const TensorNode& b) {
  if (a.rows == b.rows && a.cols == b.cols) return Bcast::none;
  if (b.rows == 1 && b.cols == a.cols) return Bcast::row;
  if (b.cols == 1 && b.rows == a.rows) return Bcast::col;
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) +
                              " and " + shape_str(b));
}

// Index into the (possibly broadcast) right operand for element (i, j).
inline std::size_t bidx(Bcast k, std::size_t i, std::size_t j, std::size_t cols) {
  switch (k) {
    case Bcast::none: return i * cols + j;
    case Bcast::row: return j;
    case Bcast::col: return i;
  }
  return 0;
}

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols) { return full(rows, cols, 0.0); }

  static Tensor full(std::size_t rows, std::size_t cols, double v) {
    auto n = fresh(rows, cols);
    n->value.assign(rows * cols, v);
    return Tensor(std::move(n));
  }

  static Tensor from_data(std::size_t rows, std::size_t cols, std::vector<double> data) {
    if (data.size() != rows * cols)
      throw std::invalid_argument("from_data: " + std::to_string(data.size()) +
                                  " values cannot fill " + detail::shape_str(rows, cols));
    auto n = fresh(rows, cols);
    n->value = std::move(data);
    return Tensor(std::move(n));
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw std::invalid_argument("from_rows: ragged initializer");
      v.insert(v.end(), row.begin(), row.end());
    }
    return from_data(r, c, std::move(v));
  }

  // A trainable leaf: the only kind of node whose gradient persists.
  static Tensor parameter(std::size_t rows, std::size_t cols, std::vector<double> data) {
    Tensor t = from_data(rows, cols, std::move(data));
    t.node_->is_param = true;
    t.node_->requires_grad = true;
    t.node_->grad.assign(t.node_->size(), 0.0);
    return t;
  }

  static Tensor parameter(const Tensor& values) {
    return parameter(values.rows(), values.cols(), values.data());
  }

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return ref("rows").rows; }
  std::size_t cols() const { return ref("cols").cols; }
  std::size_t size() const { return ref("size").size(); }
  bool is_parameter() const { return defined() && node_->is_param; }
  bool requires_grad() const { return defined() && node_->requires_grad; }

  const std::vector<double>& data() const { return ref("data").value; }

  double at(std::size_t i, std::size_t j) const {
    const auto& n = ref("at");
    if (i >= n.rows || j >= n.cols)
      throw std::out_of_range("at: index (" + std::to_string(i) + "," + std::to_string(j) +
                              ") outside " + detail::shape_str(n));
    return n.value[i * n.cols + j];
  }

  double operator()(std::size_t i, std::size_t j) const { return at(i, j); }

  // Value of a 1x1 tensor.
  double scalar() const {
    const auto& n = ref("scalar");
    if (n.size() != 1)
      throw std::logic_error("scalar: tensor is " + detail::shape_str(n) + ", not (1x1)");
    return n.value[0];
  }

  const std::vector<double>& grad() const {
    const auto& n = ref("grad");
    if (!n.is_param) throw std::logic_error("grad: tensor is not a parameter");
    return n.grad;
  }

  double grad_at(std::size_t i, std::size_t j) const {
    const auto& n = ref("grad_at");
    if (!n.is_param) throw std::logic_error("grad_at: tensor is not a parameter");
    return n.grad[i * n.cols + j];
  }

  void zero_grad() {
    auto& n = mut("zero_grad");
    if (n.is_param) n.grad.assign(n.size(), 0.0);
  }

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}

 private:
  static std::shared_ptr<detail::TensorNode> fresh(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0)
      throw std::invalid_argument("tensor: shape " + detail::shape_str(rows, cols) +
                                  " has a zero dimension");
    auto n = std::make_shared<detail::TensorNode>();
    n->rows = rows;
    n->cols = cols;
    return n;
  }

  const detail::TensorNode& ref(const char* op) const {
    if (!node_) throw std::logic_error(std::string(op) + ": tensor is empty");
    return *node_;
  }

  detail::TensorNode& mut(const char* op) {
    if (!node_) throw std::logic_error(std::string(op) + ": tensor is empty");
    return *node_;
  }

  std::shared_ptr<detail::TensorNode> node_;
};

namespace detail {

inline std::shared_ptr<TensorNode> result_node(std::size_t rows, std::size_t cols,
                                               std::initializer_list<Tensor> inputs) {
  auto n = std::make_shared<TensorNode>();
  n->rows = rows;
  n->cols = cols;
  n->value.assign(rows * cols, 0.0);
  for (const Tensor& t : inputs) {
    n->parents.push_back(t.node());
    n->requires_grad = n->requires_grad || t.requires_grad();
  }
  return n;
}

inline const TensorNode& in(const char* op, const Tensor& t) {
  if (!t.defined()) throw std::logic_error(std::string(op) + ": input tensor is empty");
  return *t.node();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Binary elementwise ops. The right operand may be a (1 x cols) row or a
// (rows x 1) column, in which case it broadcasts and its gradient is the
// reduction over the broadcast dimension.
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  const auto& A = detail::in("add", a);
  const auto& B = detail::in("add", b);
  auto k = detail::bcast_of("add", A, B);
  auto n = detail::result_node(A.rows, A.cols, {a, b});
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) {
      std::size_t p = i * A.cols + j;
      n->value[p] = A.value[p] + B.value[detail::bidx(k, i, j, A.cols)];
    }
  if (n->requires_grad)
    n->pull = [k](detail::TensorNode& s) {
      auto& A = *s.parents[0];
      auto& B = *s.parents[1];
      for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = 0; j < s.cols; ++j) {
          std::size_t p = i * s.cols + j;
          if (A.requires_grad) A.scratch[p] += s.scratch[p];
          if (B.requires_grad) B.scratch[detail::bidx(k, i, j, s.cols)] += s.scratch[p];
        }
    };
  return Tensor(n);
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  const auto& A = detail::in("sub", a);
  const auto& B = detail::in("sub", b);
  auto k = detail::bcast_of("sub", A, B);
  auto n = detail::result_node(A.rows, A.cols, {a, b});
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) {
      std::size_t p = i * A.cols + j;
      n->value[p] = A.value[p] - B.value[detail::bidx(k, i, j, A.cols)];
    }
  if (n->requires_grad)
    n->pull = [k](detail::TensorNode& s) {
      auto& A = *s.parents[0];
      auto& B = *s.parents[1];
      for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = 0; j < s.cols; ++j) {
          std::size_t p = i * s.cols + j;
          if (A.requires_grad) A.scratch[p] += s.scratch[p];
          if (B.requires_grad) B.scratch[detail::bidx(k, i, j, s.cols)] -= s.scratch[p];
        }
    };
  return Tensor(n);
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  const auto& A = detail::in("mul", a);
  const auto& B = detail::in("mul", b);
  auto k = detail::bcast_of("mul", A, B);
  auto n = detail::result_node(A.rows, A.cols, {a, b});
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) {
      std::size_t p = i * A.cols + j;
      n->value[p] = A.value[p] * B.value[detail::bidx(k, i, j, A.cols)];
    }
  if (n->requires_grad)
    n->pull = [k](detail::TensorNode& s) {
      auto& A = *s.parents[0];
      auto& B = *s.parents[1];
      for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = 0; j < s.cols; ++j) {
          std::size_t p = i * s.cols + j;
          std::size_t q = detail::bidx(k, i, j, s.cols);
          if (A.requires_grad) A.scratch[p] += s.scratch[p] * B.value[q];
          if (B.requires_grad) B.scratch[q] += s.scratch[p] * A.value[p];
        }
    };
  return Tensor(n);
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  const auto& A = detail::in("div", a);
  const auto& B = detail::in("div", b);
  auto k = detail::bcast_of("div", A, B);
  auto n = detail::result_node(A.rows, A.cols, {a, b});
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) {
      std::size_t p = i * A.cols + j;
      n->value[p] = A.value[p] / B.value[detail::bidx(k, i, j, A.cols)];
    }
  if (n->requires_grad)
    n->pull = [k](detail::TensorNode& s) {
      auto& A = *s.parents[0];
      auto& B = *s.parents[1];
      for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = 0; j < s.cols; ++j) {
          std::size_t p = i * s.cols + j;
          std::size_t q = detail::bidx(k, i, j, s.cols);
          double inv = 1.0 / B.value[q];
          if (A.requires_grad) A.scratch[p] += s.scratch[p] * inv;
          if (B.requires_grad) B.scratch[q] -= s.scratch[p] * A.value[p] * inv * inv;
        }
    };
  return Tensor(n);
}

// ---------------------------------------------------------------------------
// Scalar and unary elementwise ops.
// ---------------------------------------------------------------------------

inline Tensor add_scalar(const Tensor& a, double c) {
  const auto& A = detail::in("add_scalar", a);
  auto n = detail::result_node(A.rows, A.cols, {a});
  for (std::size_t p = 0; p < A.size(); ++p) n->value[p] = A.value[p] + c;
  if (n->requires_grad)
    n->pull = [](detail::TensorNode& s) {
      auto& A = *s.parents[0];
      for (std::size_t p = 0; p < s.size(); ++p) A.scratch[p] += s.scratch[p];
    };
  return Tensor(n);
}

inline Tensor mul_scalar(const Tensor& a, double c) {
  const auto& A = detail::in("mul_scalar", a);
  auto n = detail::result_node(A.rows, A.cols, {a});
  for (std::size_t p = 0; p < A.size(); ++p) n->value[p] = A.value[p] * c;
  if (n->requires_grad)
    n->pull = [c](detail::TensorNode& s) {
      auto& A = *s.parents[0];
      for (std::size_t p = 0; p < s.size(); ++p) A.scratch[p] += s.scratch[p] * c;
    };
  return Tensor(n);
}

namespace detail {

template <class F, class DF>
Tensor unary(const char* op, const Tensor& a, F f, DF df) {
  const auto& A = in(op, a);
  auto n = result_node(A.rows, A.cols, {a});
  for (std::size_t p = 0; p < A.size(); ++p) n->value[p] = f(A.value[p]);
  if (n->requires_grad) {
    // df receives (input value, output value) so rules like exp can reuse y.
    n->pull = [df](TensorNode& s) {
      auto& A = *s.parents[0];
      for (std::size_t p = 0; p < s.size(); ++p)
        A.scratch[p] += s.scratch[p] * df(A.value[p], s.value[p]);
    };
  }
  return Tensor(n);
}

}  // namespace detail

inline Tensor exp(const Tensor& a) {
  return detail::unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  return detail::unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Tensor sqrt(const Tensor& a) {
  return detail::unary(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

// ---------------------------------------------------------------------------
// Linear algebra.
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& A = detail::in("matmul", a);
  const auto& B = detail::in("matmul", b);
  if (A.cols != B.rows)
    throw std::invalid_argument("matmul: cannot multiply " + detail::shape_str(A) + " by " +
                                detail::shape_str(B));
  auto n = detail::result_node(A.rows, B.cols, {a, b});
  const std::size_t r = A.rows, k = A.cols, c = B.cols;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      double av = A.value[i * k + t];
      for (std::size_t j = 0; j < c; ++j) n->value[i * c + j] += av * B.value[t * c + j];
    }
  if (n->requires_grad)
    n->pull = [r, k, c](detail::TensorNode& s) {
      auto& A = *s.parents[0];
      auto& B = *s.parents[1];
      if (A.requires_grad)  // dA = G * B^T
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j) acc += s.scratch[i * c + j] * B.value[t * c + j];
            A.scratch[i * k + t] += acc;
          }
      if (B.requires_grad)  // dB = A^T * G
        for (std::size_t t = 0; t < k; ++t)
          for (std::size_t i = 0; i < r; ++i) {
            double av = A.value[i * k + t];
            for (std::size_t j = 0; j < c; ++j)
              B.scratch[t * c + j] += av * s.scratch[i * c + j];
          }
    };
  return Tensor(n);
}

inline Tensor transpose(const Tensor& a) {
  const auto& A = detail::in("transpose", a);
  auto n = detail::result_node(A.cols, A.rows, {a});
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) n->value[j * A.rows + i] = A.value[i * A.cols + j];
  if (n->requires_grad)
    n->pull = [](detail::TensorNode& s) {
      auto& A = *s.parents[0];
      for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = 0; j < s.cols; ++j)
          A.scratch[j * s.rows + i] += s.scratch[i * s.cols + j];
    };
  return Tensor(n);
}

// ---------------------------------------------------------------------------
// Reductions.
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
  const auto& A = detail::in("sum", a);
  auto n = detail::result_node(1, 1, {a});
  double acc = 0.0;
  for (double v : A.value) acc += v;
  n->value[0] = acc;
  if (n->requires_grad)
    n->pull = [](detail::TensorNode& s) {
      auto& A = *s.parents[0];
      for (std::size_t p = 0; p < A.size(); ++p) A.scratch[p] += s.scratch[0];
    };
  return Tensor(n);
}

inline Tensor mean(const Tensor& a) {
  const auto& A = detail::in("mean", a);
  double inv = 1.0 / static_cast<double>(A.size());
  auto n = detail::result_node(1, 1, {a});
  double acc = 0.0;
  for (double v : A.value) acc += v;
  n->value[0] = acc * inv;
  if (n->requires_grad)
    n->pull = [inv](detail::TensorNode& s) {
      auto& A = *s.parents[0];
      for (std::size_t p = 0; p < A.size(); ++p) A.scratch[p] += s.scratch[0] * inv;
    };
  return Tensor(n);
}

inline Tensor row_sum(const Tensor& a) {
  const auto& A = detail::in("row_sum", a);
  auto n = detail::result_node(A.rows, 1, {a});
  for (std::size_t i = 0; i < A.rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) acc += A.value[i * A.cols + j];
    n->value[i] = acc;
  }
  if (n->requires_grad)
    n->pull = [](detail::TensorNode& s) {
      auto& A = *s.parents[0];
      for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) A.scratch[i * A.cols + j] += s.scratch[i];
    };
  return Tensor(n);
}

inline Tensor row_mean(const Tensor& a) {
  const auto& A = detail::in("row_mean", a);
  double inv = 1.0 / static_cast<double>(A.cols);
  auto n = detail::result_node(A.rows, 1, {a});
  for (std::size_t i = 0; i < A.rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) acc += A.value[i * A.cols + j];
    n->value[i] = acc * inv;
  }
  if (n->requires_grad)
    n->pull = [inv](detail::TensorNode& s) {
      auto& A = *s.parents[0];
      for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) A.scratch[i * A.cols + j] += s.scratch[i] * inv;
    };
  return Tensor(n);
}

inline Tensor col_sum(const Tensor& a) {
  const auto& A = detail::in("col_sum", a);
  auto n = detail::result_node(1, A.cols, {a});
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) n->value[j] += A.value[i * A.cols + j];
  if (n->requires_grad)
    n->pull = [](detail::TensorNode& s) {
      auto& A = *s.parents[0];
      for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) A.scratch[i * A.cols + j] += s.scratch[j];
    };
  return Tensor(n);
}

inline Tensor col_mean(const Tensor& a) {
  const auto& A = detail::in("col_mean", a);
  double inv = 1.0 / static_cast<double>(A.rows);
  auto n = detail::result_node(1, A.cols, {a});
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) n->value[j] += A.value[i * A.cols + j] * inv;
  if (n->requires_grad)
    n->pull = [inv](detail::TensorNode& s) {
      auto& A = *s.parents[0];
      for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) A.scratch[i * A.cols + j] += s.scratch[j] * inv;
    };
  return Tensor(n);
}

// Frobenius norm as a scalar node. At the origin the norm is not
// differentiable; the zero subgradient is used so optimization of an
// already-zero residual stays put.
inline Tensor frobenius(const Tensor& a) {
  const auto& A = detail::in("frobenius", a);
  auto n = detail::result_node(1, 1, {a});
  double acc = 0.0;
  for (double v : A.value) acc += v * v;
  n->value[0] = std::sqrt(acc);
  if (n->requires_grad)
    n->pull = [](detail::TensorNode& s) {
      auto& A = *s.parents[0];
      double f = s.value[0];
      if (f == 0.0) return;
      double g = s.scratch[0] / f;
      for (std::size_t p = 0; p < A.size(); ++p) A.scratch[p] += g * A.value[p];
    };
  return Tensor(n);
}

// L2-normalizes every row. All-zero rows map to all-zero rows and pass no
// gradient, which gives degenerate samples a well-defined correlation of 0
// downstream. Backward for a live row i with norm r and output y:
//   dX_i = (G_i - (G_i . y_i) y_i) / r
inline Tensor row_unit(const Tensor& a) {
  const auto& A = detail::in("row_unit", a);
  auto n = detail::result_node(A.rows, A.cols, {a});
  std::vector<double> norms(A.rows, 0.0);
  for (std::size_t i = 0; i < A.rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) {
      double v = A.value[i * A.cols + j];
      acc += v * v;
    }
    norms[i] = std::sqrt(acc);
    if (norms[i] > 0.0)
      for (std::size_t j = 0; j < A.cols; ++j)
        n->value[i * A.cols + j] = A.value[i * A.cols + j] / norms[i];
  }
  if (n->requires_grad)
    n->pull = [norms](detail::TensorNode& s) {
      auto& A = *s.parents[0];
      for (std::size_t i = 0; i < s.rows; ++i) {
        if (norms[i] == 0.0) continue;
        double dot = 0.0;
        for (std::size_t j = 0; j < s.cols; ++j)
          dot += s.scratch[i * s.cols + j] * s.value[i * s.cols + j];
        for (std::size_t j = 0; j < s.cols; ++j) {
          std::size_t p = i * s.cols + j;
          A.scratch[p] += (s.scratch[p] - dot * s.value[p]) / norms[i];
        }
      }
    };
  return Tensor(n);
}

// ---------------------------------------------------------------------------
// Backward pass.
// ---------------------------------------------------------------------------

inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1)
    throw std::logic_error("backward: loss must be a defined (1x1) scalar");
  detail::TensorNode* root = loss.node().get();
  if (!root->requires_grad) return;  // no parameters reachable, nothing to do

  // Iterative post-order DFS restricted to the requires_grad subgraph, so
  // inputs precede every node that consumes them.
  std::vector<detail::TensorNode*> topo;
  std::unordered_set<detail::TensorNode*> seen;
  struct Frame {
    detail::TensorNode* n;
    std::size_t next = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({root});
  seen.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      detail::TensorNode* p = f.n->parents[f.next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p});
    } else {
      topo.push_back(f.n);
      stack.pop_back();
    }
  }

  for (detail::TensorNode* n : topo) n->scratch.assign(n->size(), 0.0);
  root->scratch[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it)
    if ((*it)->pull) (*it)->pull(**it);
  for (detail::TensorNode* n : topo)
    if (n->is_param)
      for (std::size_t p = 0; p < n->size(); ++p) n->grad[p] += n->scratch[p];
}

// ---------------------------------------------------------------------------
// Operator sugar.
// ---------------------------------------------------------------------------

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator+(double c, const Tensor& a) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_scalar(a, -c); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator/(const Tensor& a, double c) { return mul_scalar(a, 1.0 / c); }
inline Tensor operator-(const Tensor& a) { return mul_scalar(a, -1.0); }

}  // namespace avret
