#include "treeattn/ops.hpp"

#include <cmath>
#include <cstring>
#include <string>
#include <utility>

#include "treeattn/errors.hpp"
#include "treeattn/kernels.hpp"
#include "treeattn/tape.hpp"

namespace treeattn::ops {

namespace {

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

int node_on(Tape* tape, const Tensor& t) {
  return (tape && tape->owns(t)) ? t.node() : -1;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch (" +
                         shape_str(a) + " vs " + shape_str(b) + ")");
  }
}

// Shared pattern for unary elementwise ops whose backward needs either the
// input or the output values.
template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd_acc, bool bwd_uses_output) {
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  fwd(a.data(), out.mutable_data(), a.size());
  Tape* tape = Tape::active();
  const int pa = node_on(tape, a);
  if (pa >= 0) {
    Tensor kept = bwd_uses_output ? out : a;
    const std::size_t n = a.size();
    int node = tape->emit(a.rows(), a.cols(),
                          [=](const double* g, Tape& t) {
                            bwd_acc(g, kept.data(), t.grad_buffer(pa), n);
                          });
    out.set_tracking(tape->id(), node);
  }
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree (" + shape_str(a) +
                         " vs " + shape_str(b) + ")");
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros(m, n);
  kernels::matmul(a.data(), b.data(), out.mutable_data(), m, k, n);
  Tape* tape = Tape::active();
  const int pa = node_on(tape, a), pb = node_on(tape, b);
  if (pa >= 0 || pb >= 0) {
    Tensor av = a, bv = b;
    int node = tape->emit(m, n, [=](const double* g, Tape& t) {
      if (pa >= 0) kernels::matmul_nt_acc(g, bv.data(), t.grad_buffer(pa), m, k, n);
      if (pb >= 0) kernels::matmul_tn_acc(av.data(), g, t.grad_buffer(pb), k, n, m);
    });
    out.set_tracking(tape->id(), node);
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: shared dimension disagrees (" +
                         shape_str(a) + " vs " + shape_str(b) + ")");
  }
  const int m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out = Tensor::zeros(m, n);
  kernels::matmul_nt(a.data(), b.data(), out.mutable_data(), m, n, k);
  Tape* tape = Tape::active();
  const int pa = node_on(tape, a), pb = node_on(tape, b);
  if (pa >= 0 || pb >= 0) {
    Tensor av = a, bv = b;
    int node = tape->emit(m, n, [=](const double* g, Tape& t) {
      if (pa >= 0) kernels::matmul_acc(g, bv.data(), t.grad_buffer(pa), m, n, k);
      if (pb >= 0) kernels::matmul_tn_acc(g, av.data(), t.grad_buffer(pb), n, k, m);
    });
    out.set_tracking(tape->id(), node);
  }
  return out;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rows() != 1) {
    throw DimensionError("affine: x must be a row vector, got " +
                         shape_str(x));
  }
  if (x.cols() != w.cols()) {
    throw DimensionError("affine: x and w disagree (" + shape_str(x) +
                         " vs " + shape_str(w) + ")");
  }
  if (b.rows() != 1 || b.cols() != w.rows()) {
    throw DimensionError("affine: bias must be 1x" + std::to_string(w.rows()) +
                         ", got " + shape_str(b));
  }
  const int d = w.rows(), e = w.cols();
  Tensor out = Tensor::zeros(1, d);
  double* o = out.mutable_data();
  kernels::matmul_nt(x.data(), w.data(), o, 1, d, e);
  kernels::vadd(o, b.data(), o, static_cast<std::size_t>(d));
  Tape* tape = Tape::active();
  const int px = node_on(tape, x), pw = node_on(tape, w), pb = node_on(tape, b);
  if (px >= 0 || pw >= 0 || pb >= 0) {
    Tensor xv = x, wv = w;
    int node = tape->emit(1, d, [=](const double* g, Tape& t) {
      if (px >= 0) kernels::matmul_acc(g, wv.data(), t.grad_buffer(px), 1, d, e);
      if (pw >= 0) kernels::matmul_tn_acc(g, xv.data(), t.grad_buffer(pw), d, e, 1);
      if (pb >= 0) kernels::axpy(1.0, g, t.grad_buffer(pb), static_cast<std::size_t>(d));
    });
    out.set_tracking(tape->id(), node);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  kernels::vadd(a.data(), b.data(), out.mutable_data(), a.size());
  Tape* tape = Tape::active();
  const int pa = node_on(tape, a), pb = node_on(tape, b);
  if (pa >= 0 || pb >= 0) {
    const std::size_t n = a.size();
    int node = tape->emit(a.rows(), a.cols(), [=](const double* g, Tape& t) {
      if (pa >= 0) kernels::axpy(1.0, g, t.grad_buffer(pa), n);
      if (pb >= 0) kernels::axpy(1.0, g, t.grad_buffer(pb), n);
    });
    out.set_tracking(tape->id(), node);
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  kernels::vsub(a.data(), b.data(), out.mutable_data(), a.size());
  Tape* tape = Tape::active();
  const int pa = node_on(tape, a), pb = node_on(tape, b);
  if (pa >= 0 || pb >= 0) {
    const std::size_t n = a.size();
    int node = tape->emit(a.rows(), a.cols(), [=](const double* g, Tape& t) {
      if (pa >= 0) kernels::axpy(1.0, g, t.grad_buffer(pa), n);
      if (pb >= 0) kernels::axpy(-1.0, g, t.grad_buffer(pb), n);
    });
    out.set_tracking(tape->id(), node);
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  kernels::vmul(a.data(), b.data(), out.mutable_data(), a.size());
  Tape* tape = Tape::active();
  const int pa = node_on(tape, a), pb = node_on(tape, b);
  if (pa >= 0 || pb >= 0) {
    Tensor av = a, bv = b;
    const std::size_t n = a.size();
    int node = tape->emit(a.rows(), a.cols(), [=](const double* g, Tape& t) {
      if (pa >= 0) kernels::acc_mul(g, bv.data(), t.grad_buffer(pa), n);
      if (pb >= 0) kernels::acc_mul(g, av.data(), t.grad_buffer(pb), n);
    });
    out.set_tracking(tape->id(), node);
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  kernels::vscale(a.data(), s, out.mutable_data(), a.size());
  Tape* tape = Tape::active();
  const int pa = node_on(tape, a);
  if (pa >= 0) {
    const std::size_t n = a.size();
    int node = tape->emit(a.rows(), a.cols(), [=](const double* g, Tape& t) {
      kernels::axpy(s, g, t.grad_buffer(pa), n);
    });
    out.set_tracking(tape->id(), node);
  }
  return out;
}

Tensor tanh(const Tensor& a) {
  return unary_op(a, kernels::vtanh, kernels::tanh_bwd_acc, true);
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(a, kernels::vsigmoid, kernels::sigmoid_bwd_acc, true);
}

Tensor log(const Tensor& a) {
  const double* x = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(x[i] > 0.0)) {
      throw NumericError("log: input must be strictly positive, got " +
                         std::to_string(x[i]));
    }
  }
  return unary_op(a, kernels::vlog, kernels::log_bwd_acc, false);
}

Tensor abs(const Tensor& a) {
  return unary_op(a, kernels::vabs, kernels::abs_bwd_acc, false);
}

Tensor softmax_rows(const Tensor& a) {
  const double* x = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(x[i])) {
      throw NumericError("softmax: non-finite input at flat index " +
                         std::to_string(i));
    }
  }
  const int rows = a.rows(), cols = a.cols();
  Tensor out = Tensor::zeros(rows, cols);
  kernels::softmax_rows(x, out.mutable_data(), rows, cols);
  Tape* tape = Tape::active();
  const int pa = node_on(tape, a);
  if (pa >= 0) {
    Tensor y = out;
    int node = tape->emit(rows, cols, [=](const double* g, Tape& t) {
      kernels::softmax_rows_bwd_acc(g, y.data(), t.grad_buffer(pa), rows, cols);
    });
    out.set_tracking(tape->id(), node);
  }
  return out;
}

Tensor softmax_all(const Tensor& a) {
  const double* x = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(x[i])) {
      throw NumericError("softmax: non-finite input at flat index " +
                         std::to_string(i));
    }
  }
  const int rows = a.rows(), cols = a.cols();
  const int n = static_cast<int>(a.size());
  Tensor out = Tensor::zeros(rows, cols);
  kernels::softmax_rows(x, out.mutable_data(), 1, n);
  Tape* tape = Tape::active();
  const int pa = node_on(tape, a);
  if (pa >= 0) {
    Tensor y = out;
    int node = tape->emit(rows, cols, [=](const double* g, Tape& t) {
      kernels::softmax_rows_bwd_acc(g, y.data(), t.grad_buffer(pa), 1, n);
    });
    out.set_tracking(tape->id(), node);
  }
  return out;
}

Tensor normalize_rows(const Tensor& a, double eps) {
  const int rows = a.rows(), cols = a.cols();
  Tensor out = Tensor::zeros(rows, cols);
  std::vector<double> denoms(static_cast<std::size_t>(rows));
  std::vector<char> guarded(static_cast<std::size_t>(rows));
  double* o = out.mutable_data();
  const double* x = a.data();
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + static_cast<std::size_t>(r) * cols;
    double s = kernels::sum(xr, static_cast<std::size_t>(cols));
    if (std::fabs(s) < 1e-12) {
      throw DegenerateDenominatorError(
          "normalize: row " + std::to_string(r) + " sums to " +
          std::to_string(s) + ", below the 1e-12 floor");
    }
    // Plain ratio: divide by the row sum itself so an n=1 row is exactly
    // x/x = 1.  The epsilon only clamps the denominator magnitude when the
    // sum is tiny (sign preserved); it is not mixed into healthy sums.
    const bool guard = std::fabs(s) < eps;
    const double d = guard ? (s >= 0.0 ? eps : -eps) : s;
    denoms[static_cast<std::size_t>(r)] = d;
    guarded[static_cast<std::size_t>(r)] = guard ? 1 : 0;
    for (int j = 0; j < cols; ++j) {
      o[static_cast<std::size_t>(r) * cols + j] = xr[j] / d;
    }
  }
  Tape* tape = Tape::active();
  const int pa = node_on(tape, a);
  if (pa >= 0) {
    Tensor y = out;
    // Guard inactive: y_j = x_j / s with ds/dx_k = 1, so
    // dL/dx_k = (g_k - <g, y>) / s.  Guard active: the denominator is a
    // constant, so dL/dx_k = g_k / d.
    int node = tape->emit(rows, cols, [=](const double* g, Tape& t) {
      double* gx = t.grad_buffer(pa);
      for (int r = 0; r < rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * cols;
        const double d = denoms[static_cast<std::size_t>(r)];
        if (guarded[static_cast<std::size_t>(r)]) {
          for (int j = 0; j < cols; ++j) gx[off + j] += g[off + j] / d;
          continue;
        }
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += g[off + j] * y.data()[off + j];
        for (int j = 0; j < cols; ++j) {
          gx[off + j] += (g[off + j] - dot) / d;
        }
      }
    });
    out.set_tracking(tape->id(), node);
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ArgumentError("concat_rows: no parts given");
  const int cols = parts[0].cols();
  int rows = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column mismatch (" +
                           shape_str(parts[0]) + " vs " + shape_str(p) + ")");
    }
    rows += p.rows();
  }
  Tensor out = Tensor::zeros(rows, cols);
  double* o = out.mutable_data();
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    std::memcpy(o + off, p.data(), sizeof(double) * p.size());
    off += p.size();
  }
  Tape* tape = Tape::active();
  struct Slice {
    int node;
    std::size_t offset;
    std::size_t size;
  };
  std::vector<Slice> tracked;
  off = 0;
  for (const Tensor& p : parts) {
    const int pn = node_on(tape, p);
    if (pn >= 0) tracked.push_back({pn, off, p.size()});
    off += p.size();
  }
  if (!tracked.empty()) {
    int node = tape->emit(rows, cols, [=](const double* g, Tape& t) {
      for (const Slice& s : tracked) {
        kernels::axpy(1.0, g + s.offset, t.grad_buffer(s.node), s.size);
      }
    });
    out.set_tracking(tape->id(), node);
  }
  return out;
}

Tensor row(const Tensor& a, int index) {
  if (index < 0 || index >= a.rows()) {
    throw ArgumentError("row: index " + std::to_string(index) +
                        " outside " + shape_str(a));
  }
  const int cols = a.cols();
  std::vector<double> values(a.data() + static_cast<std::size_t>(index) * cols,
                             a.data() + static_cast<std::size_t>(index + 1) * cols);
  Tensor out(1, cols, std::move(values));
  Tape* tape = Tape::active();
  const int pa = node_on(tape, a);
  if (pa >= 0) {
    int node = tape->emit(1, cols, [=](const double* g, Tape& t) {
      kernels::axpy(1.0, g,
                    t.grad_buffer(pa) + static_cast<std::size_t>(index) * cols,
                    static_cast<std::size_t>(cols));
    });
    out.set_tracking(tape->id(), node);
  }
  return out;
}

Tensor sum_rows(const Tensor& a) {
  const int rows = a.rows(), cols = a.cols();
  Tensor out = Tensor::zeros(1, cols);
  double* o = out.mutable_data();
  for (int r = 0; r < rows; ++r) {
    kernels::axpy(1.0, a.data() + static_cast<std::size_t>(r) * cols, o,
                  static_cast<std::size_t>(cols));
  }
  Tape* tape = Tape::active();
  const int pa = node_on(tape, a);
  if (pa >= 0) {
    int node = tape->emit(1, cols, [=](const double* g, Tape& t) {
      double* gx = t.grad_buffer(pa);
      for (int r = 0; r < rows; ++r) {
        kernels::axpy(1.0, g, gx + static_cast<std::size_t>(r) * cols,
                      static_cast<std::size_t>(cols));
      }
    });
    out.set_tracking(tape->id(), node);
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  Tensor out = Tensor::scalar(kernels::sum(a.data(), a.size()));
  Tape* tape = Tape::active();
  const int pa = node_on(tape, a);
  if (pa >= 0) {
    const std::size_t n = a.size();
    int node = tape->emit(1, 1, [=](const double* g, Tape& t) {
      double* gx = t.grad_buffer(pa);
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
    });
    out.set_tracking(tape->id(), node);
  }
  return out;
}

}  // namespace treeattn::ops
