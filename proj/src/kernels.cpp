#include "treeattn/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>

namespace treeattn::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::openmp};

// Below this many elements an elementwise loop is not worth forking for.
constexpr std::size_t kParMin = 4096;
constexpr int kParMinRows = 8;

}  // namespace

Backend backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

namespace serial {

void matmul(const double* a, const double* b, double* out, int ar, int ac,
            int bc) {
  std::memset(out, 0, sizeof(double) * static_cast<std::size_t>(ar) * bc);
  matmul_acc(a, b, out, ar, ac, bc);
}

void matmul_acc(const double* a, const double* b, double* out, int ar, int ac,
                int bc) {
  for (int i = 0; i < ar; ++i) {
    double* o = out + static_cast<std::size_t>(i) * bc;
    const double* arow = a + static_cast<std::size_t>(i) * ac;
    for (int k = 0; k < ac; ++k) {
      const double av = arow[k];
      const double* brow = b + static_cast<std::size_t>(k) * bc;
      for (int j = 0; j < bc; ++j) o[j] += av * brow[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* out, int m, int n,
               int k) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* o = out + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<std::size_t>(j) * k;
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += arow[t] * brow[t];
      o[j] = s;
    }
  }
}

void matmul_nt_acc(const double* a, const double* b, double* out, int m, int n,
                   int k) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* o = out + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<std::size_t>(j) * k;
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += arow[t] * brow[t];
      o[j] += s;
    }
  }
}

void matmul_tn_acc(const double* a, const double* b, double* out, int m, int n,
                   int k) {
  for (int i = 0; i < m; ++i) {
    double* o = out + static_cast<std::size_t>(i) * n;
    for (int t = 0; t < k; ++t) {
      const double av = a[static_cast<std::size_t>(t) * m + i];
      const double* brow = b + static_cast<std::size_t>(t) * n;
      for (int j = 0; j < n; ++j) o[j] += av * brow[j];
    }
  }
}

void vadd(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}
void vsub(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}
void vmul(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}
void vscale(const double* a, double s, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * s;
}
void vtanh(const double* a, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(a[i]);
}
void vsigmoid(const double* a, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-a[i]));
}
void vlog(const double* a, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::log(a[i]);
}
void vabs(const double* a, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::fabs(a[i]);
}

void axpy(double s, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += s * x[i];
}
void acc_mul(const double* g, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += g[i] * b[i];
}
void tanh_bwd_acc(const double* g, const double* y, double* gx,
                  std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
}
void sigmoid_bwd_acc(const double* g, const double* y, double* gx,
                     std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
}
void log_bwd_acc(const double* g, const double* x, double* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] / x[i];
}
void abs_bwd_acc(const double* g, const double* x, double* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
    gx[i] += g[i] * s;
  }
}

void softmax_rows(const double* x, double* y, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + static_cast<std::size_t>(r) * cols;
    double* yr = y + static_cast<std::size_t>(r) * cols;
    double m = xr[0];
    for (int j = 1; j < cols; ++j) m = std::max(m, xr[j]);
    double s = 0.0;
    for (int j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - m);
      s += yr[j];
    }
    const double inv = 1.0 / s;
    for (int j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

void softmax_rows_bwd_acc(const double* g, const double* y, double* gx,
                          int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const double* gr = g + static_cast<std::size_t>(r) * cols;
    const double* yr = y + static_cast<std::size_t>(r) * cols;
    double* gxr = gx + static_cast<std::size_t>(r) * cols;
    double dot = 0.0;
    for (int j = 0; j < cols; ++j) dot += gr[j] * yr[j];
    for (int j = 0; j < cols; ++j) gxr[j] += yr[j] * (gr[j] - dot);
  }
}

double sum(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

}  // namespace serial

namespace omp {

void matmul(const double* a, const double* b, double* out, int ar, int ac,
            int bc) {
  std::memset(out, 0, sizeof(double) * static_cast<std::size_t>(ar) * bc);
  matmul_acc(a, b, out, ar, ac, bc);
}

void matmul_acc(const double* a, const double* b, double* out, int ar, int ac,
                int bc) {
#pragma omp parallel for schedule(static) if (ar >= kParMinRows)
  for (int i = 0; i < ar; ++i) {
    double* o = out + static_cast<std::size_t>(i) * bc;
    const double* arow = a + static_cast<std::size_t>(i) * ac;
    for (int k = 0; k < ac; ++k) {
      const double av = arow[k];
      const double* brow = b + static_cast<std::size_t>(k) * bc;
      for (int j = 0; j < bc; ++j) o[j] += av * brow[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* out, int m, int n,
               int k) {
#pragma omp parallel for schedule(static) if (m >= kParMinRows)
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* o = out + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<std::size_t>(j) * k;
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += arow[t] * brow[t];
      o[j] = s;
    }
  }
}

void matmul_nt_acc(const double* a, const double* b, double* out, int m, int n,
                   int k) {
#pragma omp parallel for schedule(static) if (m >= kParMinRows)
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* o = out + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<std::size_t>(j) * k;
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += arow[t] * brow[t];
      o[j] += s;
    }
  }
}

void matmul_tn_acc(const double* a, const double* b, double* out, int m, int n,
                   int k) {
#pragma omp parallel for schedule(static) if (m >= kParMinRows)
  for (int i = 0; i < m; ++i) {
    double* o = out + static_cast<std::size_t>(i) * n;
    for (int t = 0; t < k; ++t) {
      const double av = a[static_cast<std::size_t>(t) * m + i];
      const double* brow = b + static_cast<std::size_t>(t) * n;
      for (int j = 0; j < n; ++j) o[j] += av * brow[j];
    }
  }
}

#define TREEATTN_OMP_MAP(expr)                                      \
  _Pragma("omp parallel for schedule(static) if (n >= kParMin)")    \
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) expr

void vadd(const double* a, const double* b, double* y, std::size_t n) {
  TREEATTN_OMP_MAP(y[i] = a[i] + b[i];);
}
void vsub(const double* a, const double* b, double* y, std::size_t n) {
  TREEATTN_OMP_MAP(y[i] = a[i] - b[i];);
}
void vmul(const double* a, const double* b, double* y, std::size_t n) {
  TREEATTN_OMP_MAP(y[i] = a[i] * b[i];);
}
void vscale(const double* a, double s, double* y, std::size_t n) {
  TREEATTN_OMP_MAP(y[i] = a[i] * s;);
}
void vtanh(const double* a, double* y, std::size_t n) {
  TREEATTN_OMP_MAP(y[i] = std::tanh(a[i]););
}
void vsigmoid(const double* a, double* y, std::size_t n) {
  TREEATTN_OMP_MAP(y[i] = 1.0 / (1.0 + std::exp(-a[i])););
}
void vlog(const double* a, double* y, std::size_t n) {
  TREEATTN_OMP_MAP(y[i] = std::log(a[i]););
}
void vabs(const double* a, double* y, std::size_t n) {
  TREEATTN_OMP_MAP(y[i] = std::fabs(a[i]););
}

void axpy(double s, const double* x, double* y, std::size_t n) {
  TREEATTN_OMP_MAP(y[i] += s * x[i];);
}
void acc_mul(const double* g, const double* b, double* y, std::size_t n) {
  TREEATTN_OMP_MAP(y[i] += g[i] * b[i];);
}
void tanh_bwd_acc(const double* g, const double* y, double* gx,
                  std::size_t n) {
  TREEATTN_OMP_MAP(gx[i] += g[i] * (1.0 - y[i] * y[i]););
}
void sigmoid_bwd_acc(const double* g, const double* y, double* gx,
                     std::size_t n) {
  TREEATTN_OMP_MAP(gx[i] += g[i] * y[i] * (1.0 - y[i]););
}
void log_bwd_acc(const double* g, const double* x, double* gx, std::size_t n) {
  TREEATTN_OMP_MAP(gx[i] += g[i] / x[i];);
}
void abs_bwd_acc(const double* g, const double* x, double* gx, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= kParMin)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
    gx[i] += g[i] * s;
  }
}

#undef TREEATTN_OMP_MAP

void softmax_rows(const double* x, double* y, int rows, int cols) {
#pragma omp parallel for schedule(static) if (rows >= kParMinRows)
  for (int r = 0; r < rows; ++r) {
    serial::softmax_rows(x + static_cast<std::size_t>(r) * cols,
                         y + static_cast<std::size_t>(r) * cols, 1, cols);
  }
}

void softmax_rows_bwd_acc(const double* g, const double* y, double* gx,
                          int rows, int cols) {
#pragma omp parallel for schedule(static) if (rows >= kParMinRows)
  for (int r = 0; r < rows; ++r) {
    serial::softmax_rows_bwd_acc(g + static_cast<std::size_t>(r) * cols,
                                 y + static_cast<std::size_t>(r) * cols,
                                 gx + static_cast<std::size_t>(r) * cols, 1,
                                 cols);
  }
}

double sum(const double* x, std::size_t n) {
  // Keeps the serial left-to-right order; an omp reduction would change the
  // summation tree and break bitwise agreement with the reference.
  return serial::sum(x, n);
}

}  // namespace omp

#define TREEATTN_DISPATCH(call)                       \
  if (backend() == Backend::openmp) return omp::call; \
  return serial::call

void matmul(const double* a, const double* b, double* out, int ar, int ac,
            int bc) {
  TREEATTN_DISPATCH(matmul(a, b, out, ar, ac, bc));
}
void matmul_nt(const double* a, const double* b, double* out, int m, int n,
               int k) {
  TREEATTN_DISPATCH(matmul_nt(a, b, out, m, n, k));
}
void matmul_acc(const double* a, const double* b, double* out, int ar, int ac,
                int bc) {
  TREEATTN_DISPATCH(matmul_acc(a, b, out, ar, ac, bc));
}
void matmul_nt_acc(const double* a, const double* b, double* out, int m, int n,
                   int k) {
  TREEATTN_DISPATCH(matmul_nt_acc(a, b, out, m, n, k));
}
void matmul_tn_acc(const double* a, const double* b, double* out, int m, int n,
                   int k) {
  TREEATTN_DISPATCH(matmul_tn_acc(a, b, out, m, n, k));
}

void vadd(const double* a, const double* b, double* y, std::size_t n) {
  TREEATTN_DISPATCH(vadd(a, b, y, n));
}
void vsub(const double* a, const double* b, double* y, std::size_t n) {
  TREEATTN_DISPATCH(vsub(a, b, y, n));
}
void vmul(const double* a, const double* b, double* y, std::size_t n) {
  TREEATTN_DISPATCH(vmul(a, b, y, n));
}
void vscale(const double* a, double s, double* y, std::size_t n) {
  TREEATTN_DISPATCH(vscale(a, s, y, n));
}
void vtanh(const double* a, double* y, std::size_t n) {
  TREEATTN_DISPATCH(vtanh(a, y, n));
}
void vsigmoid(const double* a, double* y, std::size_t n) {
  TREEATTN_DISPATCH(vsigmoid(a, y, n));
}
void vlog(const double* a, double* y, std::size_t n) {
  TREEATTN_DISPATCH(vlog(a, y, n));
}
void vabs(const double* a, double* y, std::size_t n) {
  TREEATTN_DISPATCH(vabs(a, y, n));
}

void axpy(double s, const double* x, double* y, std::size_t n) {
  TREEATTN_DISPATCH(axpy(s, x, y, n));
}
void acc_mul(const double* g, const double* b, double* y, std::size_t n) {
  TREEATTN_DISPATCH(acc_mul(g, b, y, n));
}
void tanh_bwd_acc(const double* g, const double* y, double* gx,
                  std::size_t n) {
  TREEATTN_DISPATCH(tanh_bwd_acc(g, y, gx, n));
}
void sigmoid_bwd_acc(const double* g, const double* y, double* gx,
                     std::size_t n) {
  TREEATTN_DISPATCH(sigmoid_bwd_acc(g, y, gx, n));
}
void log_bwd_acc(const double* g, const double* x, double* gx, std::size_t n) {
  TREEATTN_DISPATCH(log_bwd_acc(g, x, gx, n));
}
void abs_bwd_acc(const double* g, const double* x, double* gx, std::size_t n) {
  TREEATTN_DISPATCH(abs_bwd_acc(g, x, gx, n));
}

void softmax_rows(const double* x, double* y, int rows, int cols) {
  TREEATTN_DISPATCH(softmax_rows(x, y, rows, cols));
}
void softmax_rows_bwd_acc(const double* g, const double* y, double* gx,
                          int rows, int cols) {
  TREEATTN_DISPATCH(softmax_rows_bwd_acc(g, y, gx, rows, cols));
}

double sum(const double* x, std::size_t n) { TREEATTN_DISPATCH(sum(x, n)); }

#undef TREEATTN_DISPATCH

}  // namespace treeattn::kernels
