#pragma once

#include <cstddef>

// Dense row-major f64 kernels. Every kernel exists twice: a serial reference
// in kernels::serial and an OpenMP version in kernels::omp. The parallel
// split is always over independent output elements and never changes an
// element's accumulation order, so the two backends are bitwise identical.
// The top-level functions dispatch on the process-wide backend.
namespace treeattn::kernels {

enum class Backend { serial, openmp };

Backend backend();
void set_backend(Backend b);

namespace serial {

void matmul(const double* a, const double* b, double* out, int ar, int ac,
            int bc);                                         // out = a.b
void matmul_nt(const double* a, const double* b, double* out, int m, int n,
               int k);                                       // out(m,n) = a(m,k).b(n,k)^T
void matmul_acc(const double* a, const double* b, double* out, int ar, int ac,
                int bc);                                     // out += a.b
void matmul_nt_acc(const double* a, const double* b, double* out, int m, int n,
                   int k);                                   // out += a.b^T
void matmul_tn_acc(const double* a, const double* b, double* out, int m, int n,
                   int k);                                   // out(m,n) += a(k,m)^T.b(k,n)

void vadd(const double* a, const double* b, double* y, std::size_t n);
void vsub(const double* a, const double* b, double* y, std::size_t n);
void vmul(const double* a, const double* b, double* y, std::size_t n);
void vscale(const double* a, double s, double* y, std::size_t n);
void vtanh(const double* a, double* y, std::size_t n);
void vsigmoid(const double* a, double* y, std::size_t n);
void vlog(const double* a, double* y, std::size_t n);
void vabs(const double* a, double* y, std::size_t n);

void axpy(double s, const double* x, double* y, std::size_t n);  // y += s*x
void acc_mul(const double* g, const double* b, double* y, std::size_t n);
void tanh_bwd_acc(const double* g, const double* y, double* gx, std::size_t n);
void sigmoid_bwd_acc(const double* g, const double* y, double* gx,
                     std::size_t n);
void log_bwd_acc(const double* g, const double* x, double* gx, std::size_t n);
void abs_bwd_acc(const double* g, const double* x, double* gx, std::size_t n);

// Max-subtracted softmax applied to each row independently.
void softmax_rows(const double* x, double* y, int rows, int cols);
void softmax_rows_bwd_acc(const double* g, const double* y, double* gx,
                          int rows, int cols);

double sum(const double* x, std::size_t n);

}  // namespace serial

namespace omp {

void matmul(const double* a, const double* b, double* out, int ar, int ac,
            int bc);
void matmul_nt(const double* a, const double* b, double* out, int m, int n,
               int k);
void matmul_acc(const double* a, const double* b, double* out, int ar, int ac,
                int bc);
void matmul_nt_acc(const double* a, const double* b, double* out, int m, int n,
                   int k);
void matmul_tn_acc(const double* a, const double* b, double* out, int m, int n,
                   int k);

void vadd(const double* a, const double* b, double* y, std::size_t n);
void vsub(const double* a, const double* b, double* y, std::size_t n);
void vmul(const double* a, const double* b, double* y, std::size_t n);
void vscale(const double* a, double s, double* y, std::size_t n);
void vtanh(const double* a, double* y, std::size_t n);
void vsigmoid(const double* a, double* y, std::size_t n);
void vlog(const double* a, double* y, std::size_t n);
void vabs(const double* a, double* y, std::size_t n);

void axpy(double s, const double* x, double* y, std::size_t n);
void acc_mul(const double* g, const double* b, double* y, std::size_t n);
void tanh_bwd_acc(const double* g, const double* y, double* gx, std::size_t n);
void sigmoid_bwd_acc(const double* g, const double* y, double* gx,
                     std::size_t n);
void log_bwd_acc(const double* g, const double* x, double* gx, std::size_t n);
void abs_bwd_acc(const double* g, const double* x, double* gx, std::size_t n);

void softmax_rows(const double* x, double* y, int rows, int cols);
void softmax_rows_bwd_acc(const double* g, const double* y, double* gx,
                          int rows, int cols);

double sum(const double* x, std::size_t n);

}  // namespace omp

void matmul(const double* a, const double* b, double* out, int ar, int ac,
            int bc);
void matmul_nt(const double* a, const double* b, double* out, int m, int n,
               int k);
void matmul_acc(const double* a, const double* b, double* out, int ar, int ac,
                int bc);
void matmul_nt_acc(const double* a, const double* b, double* out, int m, int n,
                   int k);
void matmul_tn_acc(const double* a, const double* b, double* out, int m, int n,
                   int k);

void vadd(const double* a, const double* b, double* y, std::size_t n);
void vsub(const double* a, const double* b, double* y, std::size_t n);
void vmul(const double* a, const double* b, double* y, std::size_t n);
void vscale(const double* a, double s, double* y, std::size_t n);
void vtanh(const double* a, double* y, std::size_t n);
void vsigmoid(const double* a, double* y, std::size_t n);
void vlog(const double* a, double* y, std::size_t n);
void vabs(const double* a, double* y, std::size_t n);

void axpy(double s, const double* x, double* y, std::size_t n);
void acc_mul(const double* g, const double* b, double* y, std::size_t n);
void tanh_bwd_acc(const double* g, const double* y, double* gx, std::size_t n);
void sigmoid_bwd_acc(const double* g, const double* y, double* gx,
                     std::size_t n);
void log_bwd_acc(const double* g, const double* x, double* gx, std::size_t n);
void abs_bwd_acc(const double* g, const double* x, double* gx, std::size_t n);

void softmax_rows(const double* x, double* y, int rows, int cols);
void softmax_rows_bwd_acc(const double* g, const double* y, double* gx,
                          int rows, int cols);

double sum(const double* x, std::size_t n);

}  // namespace treeattn::kernels
