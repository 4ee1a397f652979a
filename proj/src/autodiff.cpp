#include "vwsd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vwsd/embedding.hpp"
#include "vwsd/errors.hpp"

namespace vwsd {

namespace {

template <class T>
void require_same_shape(const Matrix<T>& a, const Matrix<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionMismatch(std::string(op) + ": shape " + std::to_string(a.rows) + "x" +
                            std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                            std::to_string(b.cols));
  }
}

// out += a * b, accumulating in double.
template <class T>
void gemm_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  std::vector<double> acc(b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      const T* brow = b.data.data() + p * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) acc[j] += aip * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += static_cast<T>(acc[j]);
  }
}

// out += a * b^T
template <class T>
void gemm_nt_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.cols; ++p) acc += static_cast<double>(a(i, p)) * b(j, p);
      out(i, j) += static_cast<T>(acc);
    }
  }
}

// out += a^T * b
template <class T>
void gemm_tn_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  std::vector<double> acc(out.size(), 0.0);
  for (std::size_t p = 0; p < a.rows; ++p) {
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double api = a(p, i);
      if (api == 0.0) continue;
      double* orow = acc.data() + i * out.cols;
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += api * static_cast<double>(b(p, j));
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += static_cast<T>(acc[i]);
}

}  // namespace

template <class T>
typename Tape<T>::Var Tape<T>::push(Matrix<T> value, bool requires_grad) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class T>
typename Tape<T>::Var Tape<T>::constant(Matrix<T> value) {
  return push(std::move(value), false);
}

template <class T>
typename Tape<T>::Var Tape<T>::input(Matrix<T> value, bool requires_grad) {
  return push(std::move(value), requires_grad);
}

template <class T>
typename Tape<T>::Var Tape<T>::leaf(const Matrix<T>& value, bool requires_grad) {
  Node n;
  n.external = &value;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class T>
const Matrix<T>& Tape<T>::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.external ? *n.external : n.owned;
}

template <class T>
Matrix<T> Tape<T>::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.size() == 0) {
    const auto& val = value(v);
    return Matrix<T>(val.rows, val.cols);
  }
  return n.grad;
}

template <class T>
bool Tape<T>::any_requires_grad(std::initializer_list<Var> vars) const {
  return std::any_of(vars.begin(), vars.end(), [&](Var v) { return nodes_[v.id].requires_grad; });
}

template <class T>
Matrix<T>& Tape<T>::grad_ref(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) {
    const auto& val = value(v);
    n.grad = Matrix<T>(val.rows, val.cols);
  }
  return n.grad;
}

template <class T>
void Tape<T>::backward(Var loss) {
  const auto& lv = value(loss);
  if (lv.rows != 1 || lv.cols != 1) {
    throw Error("backward() needs a scalar loss, got " + std::to_string(lv.rows) + "x" +
                std::to_string(lv.cols));
  }
  for (auto& n : nodes_) n.grad = Matrix<T>();
  if (!nodes_[loss.id].requires_grad) return;
  grad_ref(loss)(0, 0) = T{1};
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward();
  }
}

template <class T>
typename Tape<T>::Var Tape<T>::matmul(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.cols != bv.rows) {
    throw DimensionMismatch("matmul: " + std::to_string(av.rows) + "x" + std::to_string(av.cols) +
                            " * " + std::to_string(bv.rows) + "x" + std::to_string(bv.cols));
  }
  Matrix<T> out(av.rows, bv.cols);
  gemm_acc(av, bv, out);
  Var o = push(std::move(out), any_requires_grad({a, b}));
  if (nodes_[o.id].requires_grad) {
    nodes_[o.id].backward = [this, a, b, o] {
      const auto& g = grad_of(o.id);
      if (nodes_[a.id].requires_grad) gemm_nt_acc(g, value(b), grad_ref(a));
      if (nodes_[b.id].requires_grad) gemm_tn_acc(value(a), g, grad_ref(b));
    };
  }
  return o;
}

template <class T>
typename Tape<T>::Var Tape<T>::matmul_nt(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.cols != bv.cols) {
    throw DimensionMismatch("matmul_nt: inner dimensions " + std::to_string(av.cols) + " vs " +
                            std::to_string(bv.cols));
  }
  Matrix<T> out(av.rows, bv.rows);
  gemm_nt_acc(av, bv, out);
  Var o = push(std::move(out), any_requires_grad({a, b}));
  if (nodes_[o.id].requires_grad) {
    nodes_[o.id].backward = [this, a, b, o] {
      const auto& g = grad_of(o.id);
      if (nodes_[a.id].requires_grad) gemm_acc(g, value(b), grad_ref(a));
      if (nodes_[b.id].requires_grad) gemm_tn_acc(g, value(a), grad_ref(b));
    };
  }
  return o;
}

template <class T>
typename Tape<T>::Var Tape<T>::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Matrix<T> out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
  Var o = push(std::move(out), any_requires_grad({a, b}));
  if (nodes_[o.id].requires_grad) {
    nodes_[o.id].backward = [this, a, b, o] {
      const auto& g = grad_of(o.id);
      for (Var v : {a, b}) {
        if (!nodes_[v.id].requires_grad) continue;
        auto& gv = grad_ref(v);
        for (std::size_t i = 0; i < g.size(); ++i) gv.data[i] += g.data[i];
      }
    };
  }
  return o;
}

template <class T>
typename Tape<T>::Var Tape<T>::add_bias(Var a, Var bias) {
  const auto& bv = value(bias);
  Matrix<T> out = value(a);
  if (bv.rows != 1 || bv.cols != out.cols) {
    throw DimensionMismatch("add_bias: bias must be 1x" + std::to_string(out.cols));
  }
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (std::size_t c = 0; c < out.cols; ++c) out(r, c) += bv.data[c];
  }
  Var o = push(std::move(out), any_requires_grad({a, bias}));
  if (nodes_[o.id].requires_grad) {
    nodes_[o.id].backward = [this, a, bias, o] {
      const auto& g = grad_of(o.id);
      if (nodes_[a.id].requires_grad) {
        auto& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
      }
      if (nodes_[bias.id].requires_grad) {
        auto& gb = grad_ref(bias);
        for (std::size_t c = 0; c < g.cols; ++c) {
          double acc = 0.0;
          for (std::size_t r = 0; r < g.rows; ++r) acc += g(r, c);
          gb.data[c] += static_cast<T>(acc);
        }
      }
    };
  }
  return o;
}

template <class T>
typename Tape<T>::Var Tape<T>::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Matrix<T> out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
  Var o = push(std::move(out), any_requires_grad({a, b}));
  if (nodes_[o.id].requires_grad) {
    nodes_[o.id].backward = [this, a, b, o] {
      const auto& g = grad_of(o.id);
      if (nodes_[a.id].requires_grad) {
        auto& ga = grad_ref(a);
        const auto& bv = value(b);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * bv.data[i];
      }
      if (nodes_[b.id].requires_grad) {
        auto& gb = grad_ref(b);
        const auto& av = value(a);
        for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * av.data[i];
      }
    };
  }
  return o;
}

template <class T>
typename Tape<T>::Var Tape<T>::scale(Var a, T factor) {
  Matrix<T> out = value(a);
  for (auto& x : out.data) x *= factor;
  Var o = push(std::move(out), any_requires_grad({a}));
  if (nodes_[o.id].requires_grad) {
    nodes_[o.id].backward = [this, a, o, factor] {
      const auto& g = grad_of(o.id);
      auto& ga = grad_ref(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * factor;
    };
  }
  return o;
}

template <class T>
typename Tape<T>::Var Tape<T>::relu(Var a) {
  Matrix<T> out = value(a);
  for (auto& x : out.data) x = x > T{0} ? x : T{0};
  Var o = push(std::move(out), any_requires_grad({a}));
  if (nodes_[o.id].requires_grad) {
    nodes_[o.id].backward = [this, a, o] {
      const auto& g = grad_of(o.id);
      const auto& av = value(a);
      auto& ga = grad_ref(a);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (av.data[i] > T{0}) ga.data[i] += g.data[i];
      }
    };
  }
  return o;
}

template <class T>
typename Tape<T>::Var Tape<T>::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_cols of nothing");
  const std::size_t rows = value(parts[0]).rows;
  std::size_t cols = 0;
  bool rg = false;
  for (Var p : parts) {
    if (value(p).rows != rows) throw DimensionMismatch("concat_cols: row counts differ");
    cols += value(p).cols;
    rg = rg || nodes_[p.id].requires_grad;
  }
  Matrix<T> out(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto& pv = value(p);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(pv.row(r).begin(), pv.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += pv.cols;
  }
  Var o = push(std::move(out), rg);
  if (rg) {
    std::vector<Var> inputs(parts.begin(), parts.end());
    nodes_[o.id].backward = [this, inputs, o] {
      const auto& g = grad_of(o.id);
      std::size_t off = 0;
      for (Var p : inputs) {
        const std::size_t pc = value(p).cols;
        if (nodes_[p.id].requires_grad) {
          auto& gp = grad_ref(p);
          for (std::size_t r = 0; r < g.rows; ++r) {
            for (std::size_t c = 0; c < pc; ++c) gp(r, c) += g(r, off + c);
          }
        }
        off += pc;
      }
    };
  }
  return o;
}

template <class T>
typename Tape<T>::Var Tape<T>::stack_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error("stack_rows of nothing");
  const std::size_t cols = value(parts[0]).cols;
  std::size_t rows = 0;
  bool rg = false;
  for (Var p : parts) {
    if (value(p).cols != cols) throw DimensionMismatch("stack_rows: column counts differ");
    rows += value(p).rows;
    rg = rg || nodes_[p.id].requires_grad;
  }
  Matrix<T> out(rows, cols);
  auto it = out.data.begin();
  for (Var p : parts) it = std::copy(value(p).data.begin(), value(p).data.end(), it);
  Var o = push(std::move(out), rg);
  if (rg) {
    std::vector<Var> inputs(parts.begin(), parts.end());
    nodes_[o.id].backward = [this, inputs, o] {
      const auto& g = grad_of(o.id);
      std::size_t off = 0;
      for (Var p : inputs) {
        const std::size_t n = value(p).size();
        if (nodes_[p.id].requires_grad) {
          auto& gp = grad_ref(p);
          for (std::size_t i = 0; i < n; ++i) gp.data[i] += g.data[off + i];
        }
        off += n;
      }
    };
  }
  return o;
}

template <class T>
typename Tape<T>::Var Tape<T>::slice_cols(Var a, std::size_t begin, std::size_t count) {
  const auto& av = value(a);
  if (begin + count > av.cols) throw DimensionMismatch("slice_cols: range exceeds columns");
  Matrix<T> out(av.rows, count);
  for (std::size_t r = 0; r < av.rows; ++r) {
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, begin + c);
  }
  Var o = push(std::move(out), any_requires_grad({a}));
  if (nodes_[o.id].requires_grad) {
    nodes_[o.id].backward = [this, a, o, begin, count] {
      const auto& g = grad_of(o.id);
      auto& ga = grad_ref(a);
      for (std::size_t r = 0; r < g.rows; ++r) {
        for (std::size_t c = 0; c < count; ++c) ga(r, begin + c) += g(r, c);
      }
    };
  }
  return o;
}

template <class T>
typename Tape<T>::Var Tape<T>::softmax_rows(Var a) {
  const auto& av = value(a);
  Matrix<T> out(av.rows, av.cols);
  for (std::size_t r = 0; r < av.rows; ++r) {
    const auto row = av.row(r);
    const double top = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    std::vector<double> e(av.cols);
    for (std::size_t c = 0; c < av.cols; ++c) {
      e[c] = std::exp(static_cast<double>(row[c]) - top);
      total += e[c];
    }
    for (std::size_t c = 0; c < av.cols; ++c) out(r, c) = static_cast<T>(e[c] / total);
  }
  Var o = push(std::move(out), any_requires_grad({a}));
  if (nodes_[o.id].requires_grad) {
    nodes_[o.id].backward = [this, a, o] {
      const auto& g = grad_of(o.id);
      const auto& y = value(o);
      auto& ga = grad_ref(a);
      for (std::size_t r = 0; r < y.rows; ++r) {
        double inner = 0.0;
        for (std::size_t c = 0; c < y.cols; ++c) inner += static_cast<double>(g(r, c)) * y(r, c);
        for (std::size_t c = 0; c < y.cols; ++c) {
          ga(r, c) += static_cast<T>(y(r, c) * (g(r, c) - inner));
        }
      }
    };
  }
  return o;
}

template <class T>
typename Tape<T>::Var Tape<T>::layer_norm_rows(Var x, Var gain, Var bias, T eps) {
  const auto& xv = value(x);
  const auto& gv = value(gain);
  const auto& bv = value(bias);
  if (gv.rows != 1 || gv.cols != xv.cols || !gv.same_shape(bv)) {
    throw DimensionMismatch("layer_norm: gain/bias must be 1x" + std::to_string(xv.cols));
  }
  const std::size_t n = xv.cols;
  Matrix<T> normalized(xv.rows, n);
  std::vector<double> inv_std(xv.rows);
  Matrix<T> out(xv.rows, n);
  for (std::size_t r = 0; r < xv.rows; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += xv(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double d = xv(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + static_cast<double>(eps));
    for (std::size_t c = 0; c < n; ++c) {
      const double xhat = (xv(r, c) - mean) * inv_std[r];
      normalized(r, c) = static_cast<T>(xhat);
      out(r, c) = static_cast<T>(xhat * gv.data[c] + bv.data[c]);
    }
  }
  Var o = push(std::move(out), any_requires_grad({x, gain, bias}));
  if (nodes_[o.id].requires_grad) {
    nodes_[o.id].backward = [this, x, gain, bias, o, xhat = std::move(normalized),
                             inv_std = std::move(inv_std)] {
      const auto& g = grad_of(o.id);
      const auto& gv = value(gain);
      const std::size_t cols = g.cols;
      if (nodes_[gain.id].requires_grad || nodes_[bias.id].requires_grad) {
        for (std::size_t c = 0; c < cols; ++c) {
          double dg = 0.0;
          double db = 0.0;
          for (std::size_t r = 0; r < g.rows; ++r) {
            dg += static_cast<double>(g(r, c)) * xhat(r, c);
            db += g(r, c);
          }
          if (nodes_[gain.id].requires_grad) grad_ref(gain).data[c] += static_cast<T>(dg);
          if (nodes_[bias.id].requires_grad) grad_ref(bias).data[c] += static_cast<T>(db);
        }
      }
      if (!nodes_[x.id].requires_grad) return;
      auto& gx = grad_ref(x);
      std::vector<double> dxhat(cols);
      for (std::size_t r = 0; r < g.rows; ++r) {
        double mean_d = 0.0;
        double mean_dx = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          dxhat[c] = static_cast<double>(g(r, c)) * gv.data[c];
          mean_d += dxhat[c];
          mean_dx += dxhat[c] * xhat(r, c);
        }
        mean_d /= static_cast<double>(cols);
        mean_dx /= static_cast<double>(cols);
        for (std::size_t c = 0; c < cols; ++c) {
          gx(r, c) += static_cast<T>(inv_std[r] * (dxhat[c] - mean_d - xhat(r, c) * mean_dx));
        }
      }
    };
  }
  return o;
}

template <class T>
typename Tape<T>::Var Tape<T>::sum_rows(Var a) {
  const auto& av = value(a);
  Matrix<T> out(1, av.cols);
  for (std::size_t c = 0; c < av.cols; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < av.rows; ++r) acc += av(r, c);
    out.data[c] = static_cast<T>(acc);
  }
  Var o = push(std::move(out), any_requires_grad({a}));
  if (nodes_[o.id].requires_grad) {
    nodes_[o.id].backward = [this, a, o] {
      const auto& g = grad_of(o.id);
      auto& ga = grad_ref(a);
      for (std::size_t r = 0; r < ga.rows; ++r) {
        for (std::size_t c = 0; c < ga.cols; ++c) ga(r, c) += g.data[c];
      }
    };
  }
  return o;
}

template <class T>
typename Tape<T>::Var Tape<T>::sum(Var a) {
  double acc = 0.0;
  for (T x : value(a).data) acc += x;
  Matrix<T> out(1, 1, static_cast<T>(acc));
  Var o = push(std::move(out), any_requires_grad({a}));
  if (nodes_[o.id].requires_grad) {
    nodes_[o.id].backward = [this, a, o] {
      const T g = grad_of(o.id).data[0];
      for (auto& x : grad_ref(a).data) x += g;
    };
  }
  return o;
}

template <class T>
typename Tape<T>::Var Tape<T>::l2_normalize_rows(Var a) {
  const auto& av = value(a);
  Matrix<T> out(av.rows, av.cols);
  std::vector<double> norms(av.rows);
  for (std::size_t r = 0; r < av.rows; ++r) {
    double acc = 0.0;
    for (T x : av.row(r)) acc += static_cast<double>(x) * x;
    norms[r] = std::sqrt(acc);
    if (!(norms[r] > kMinNorm)) throw DegenerateEmbedding("degenerate fused embedding (zero norm)");
    for (std::size_t c = 0; c < av.cols; ++c) out(r, c) = static_cast<T>(av(r, c) / norms[r]);
  }
  Var o = push(std::move(out), any_requires_grad({a}));
  if (nodes_[o.id].requires_grad) {
    nodes_[o.id].backward = [this, a, o, norms = std::move(norms)] {
      const auto& g = grad_of(o.id);
      const auto& y = value(o);
      auto& ga = grad_ref(a);
      for (std::size_t r = 0; r < y.rows; ++r) {
        double inner = 0.0;
        for (std::size_t c = 0; c < y.cols; ++c) inner += static_cast<double>(g(r, c)) * y(r, c);
        for (std::size_t c = 0; c < y.cols; ++c) {
          ga(r, c) += static_cast<T>((g(r, c) - y(r, c) * inner) / norms[r]);
        }
      }
    };
  }
  return o;
}

template <class T>
typename Tape<T>::Var Tape<T>::dropout(Var a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw Error("dropout probability must be below 1");
  const auto& av = value(a);
  Matrix<T> mask(av.rows, av.cols);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : mask.data) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u >= p ? keep_scale : T{0};
  }
  return mul(a, constant(std::move(mask)));
}

template <class T>
typename Tape<T>::Var Tape<T>::cross_entropy(Var logits, std::size_t gold) {
  const auto& lv = value(logits);
  if (lv.rows != 1) throw DimensionMismatch("cross_entropy expects a single row of logits");
  if (gold >= lv.cols) {
    throw Error("gold index " + std::to_string(gold) + " out of range for " +
                std::to_string(lv.cols) + " candidates");
  }
  const double top = *std::max_element(lv.data.begin(), lv.data.end());
  double total = 0.0;
  for (T z : lv.data) total += std::exp(static_cast<double>(z) - top);
  const double lse = top + std::log(total);
  Matrix<T> out(1, 1, static_cast<T>(lse - static_cast<double>(lv.data[gold])));
  Var o = push(std::move(out), any_requires_grad({logits}));
  if (nodes_[o.id].requires_grad) {
    nodes_[o.id].backward = [this, logits, o, gold, lse] {
      const T g = grad_of(o.id).data[0];
      const auto& z = value(logits);
      auto& gz = grad_ref(logits);
      for (std::size_t c = 0; c < z.cols; ++c) {
        double d = std::exp(static_cast<double>(z.data[c]) - lse);
        if (c == gold) d -= 1.0;
        gz.data[c] += static_cast<T>(g * d);
      }
    };
  }
  return o;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace vwsd
