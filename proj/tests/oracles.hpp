#pragma once

// Hand-rolled reference implementations of the recurrence and attention
// equations, written as plain nested loops over std::vector<double>.  Nothing
// here touches the library's tensor/op machinery: the point is that a bug
// would have to be transcribed twice, independently, to go unnoticed by the
// comparison tests.  Column-vector convention throughout (y = W x + b).

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // Mat[r][c]

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// y = W x + b, W sized out x in.
inline Vec affine(const Mat& W, const Vec& x, const Vec& b) {
  Vec y(W.size());
  for (std::size_t r = 0; r < W.size(); ++r) {
    double s = b[r];
    for (std::size_t c = 0; c < x.size(); ++c) s += W[r][c] * x[c];
    y[r] = s;
  }
  return y;
}

// y = W x (no bias).
inline Vec matvec(const Mat& W, const Vec& x) {
  Vec y(W.size(), 0.0);
  for (std::size_t r = 0; r < W.size(); ++r) {
    for (std::size_t c = 0; c < x.size(); ++c) y[r] += W[r][c] * x[c];
  }
  return y;
}

inline Vec add(const Vec& a, const Vec& b) {
  Vec y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

inline Vec hadamard(const Vec& a, const Vec& b) {
  Vec y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
  return y;
}

inline Vec vtanh(const Vec& a) {
  Vec y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = std::tanh(a[i]);
  return y;
}

inline Vec vsigmoid(const Vec& a) {
  Vec y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-a[i]));
  return y;
}

inline Vec zeros(std::size_t n) { return Vec(n, 0.0); }

// ---------------------------------------------------------------------------
// Recurrent cells.

struct State {
  Vec h, c;
};

struct LstmW {
  Mat Wi, Ui;
  Vec bi;
  Mat Wf, Uf;
  Vec bf;
  Mat Wo, Uo;
  Vec bo;
  Mat Wc, Uc;
  Vec bc;
};

// Standard LSTM step; prev == nullptr means h_{t-1} = c_{t-1} = 0.
inline State lstm_step(const Vec& x, const State* prev, const LstmW& w) {
  const std::size_t d = w.bi.size();
  const Vec hp = prev ? prev->h : zeros(d);
  const Vec cp = prev ? prev->c : zeros(d);
  const Vec i = vsigmoid(add(affine(w.Wi, x, w.bi), matvec(w.Ui, hp)));
  const Vec f = vsigmoid(add(affine(w.Wf, x, w.bf), matvec(w.Uf, hp)));
  const Vec o = vsigmoid(add(affine(w.Wo, x, w.bo), matvec(w.Uo, hp)));
  const Vec ct = vtanh(add(affine(w.Wc, x, w.bc), matvec(w.Uc, hp)));
  State s;
  s.c = add(hadamard(i, ct), hadamard(f, cp));
  s.h = hadamard(o, vtanh(s.c));
  return s;
}

inline Vec lstm_encode(const std::vector<Vec>& xs, const LstmW& w) {
  State s = lstm_step(xs[0], nullptr, w);
  for (std::size_t t = 1; t < xs.size(); ++t) s = lstm_step(xs[t], &s, w);
  return s.h;
}

struct ChildSumW {
  Mat Wi, Ui;
  Vec bi;
  Mat Wo, Uo;
  Vec bo;
  Mat Wc, Uc;
  Vec bc;
  Mat Wf, Uf;
  Vec bf;
};

// Child-sum step.  The summed child hidden (or the override, when given)
// feeds the i/o/c-tilde gates; each forget gate sees its own raw child
// hidden.  x == nullptr drops the word term.
inline State child_sum_step(const Vec* x, const std::vector<State>& children,
                            const Vec* h_override, const ChildSumW& w) {
  const std::size_t d = w.bi.size();
  Vec h_sum = zeros(d);
  for (const State& ch : children) h_sum = add(h_sum, ch.h);
  const Vec* h_io = h_override ? h_override : &h_sum;

  auto gate_pre = [&](const Mat& W, const Mat& U, const Vec& b) {
    Vec pre = x ? affine(W, *x, b) : b;
    if (!children.empty() || h_override) pre = add(pre, matvec(U, *h_io));
    return pre;
  };
  const Vec i = vsigmoid(gate_pre(w.Wi, w.Ui, w.bi));
  const Vec o = vsigmoid(gate_pre(w.Wo, w.Uo, w.bo));
  const Vec ct = vtanh(gate_pre(w.Wc, w.Uc, w.bc));

  State s;
  s.c = hadamard(i, ct);
  for (const State& ch : children) {
    Vec pre = x ? affine(w.Wf, *x, w.bf) : w.bf;
    const Vec f = vsigmoid(add(pre, matvec(w.Uf, ch.h)));
    s.c = add(s.c, hadamard(f, ch.c));
  }
  s.h = hadamard(o, vtanh(s.c));
  return s;
}

struct BinaryW {
  Mat Wi, Uil, Uir;
  Vec bi;
  Mat Wo, Uol, Uor;
  Vec bo;
  Mat Wc, Ucl, Ucr;
  Vec bc;
  Mat Wf, Uf_ll, Uf_lr, Uf_rl, Uf_rr;
  Vec bf;
};

// Binary (2-ary) step with per-position U matrices and the 2x2 block of
// forget cross-matrices.  Overrides replace the child hiddens in i/o/c-tilde;
// attend_forget extends that to the forget gates.
inline State binary_step(const Vec* x, const State& l, const State& r,
                         const Vec* ol, const Vec* orr, const BinaryW& w,
                         bool attend_forget) {
  const Vec& hl_io = ol ? *ol : l.h;
  const Vec& hr_io = orr ? *orr : r.h;
  const Vec& hl_f = attend_forget ? hl_io : l.h;
  const Vec& hr_f = attend_forget ? hr_io : r.h;

  auto gate = [&](const Mat& W, const Mat& Ul, const Mat& Ur, const Vec& b,
                  const Vec& hl, const Vec& hr) {
    Vec pre = x ? affine(W, *x, b) : b;
    pre = add(pre, matvec(Ul, hl));
    pre = add(pre, matvec(Ur, hr));
    return pre;
  };
  const Vec i = vsigmoid(gate(w.Wi, w.Uil, w.Uir, w.bi, hl_io, hr_io));
  const Vec o = vsigmoid(gate(w.Wo, w.Uol, w.Uor, w.bo, hl_io, hr_io));
  const Vec ct = vtanh(gate(w.Wc, w.Ucl, w.Ucr, w.bc, hl_io, hr_io));
  const Vec fl = vsigmoid(gate(w.Wf, w.Uf_ll, w.Uf_lr, w.bf, hl_f, hr_f));
  const Vec fr = vsigmoid(gate(w.Wf, w.Uf_rl, w.Uf_rr, w.bf, hl_f, hr_f));

  State s;
  s.c = add(hadamard(i, ct), add(hadamard(fl, l.c), hadamard(fr, r.c)));
  s.h = hadamard(o, vtanh(s.c));
  return s;
}

// Childless leaf step (preterminals in the constituency encoder): word input
// only, nothing to forget.
inline State leaf_step(const Vec& x, const Mat& Wi, const Vec& bi,
                       const Mat& Wo, const Vec& bo, const Mat& Wc,
                       const Vec& bc) {
  const Vec i = vsigmoid(affine(Wi, x, bi));
  const Vec o = vsigmoid(affine(Wo, x, bo));
  const Vec ct = vtanh(affine(Wc, x, bc));
  State s;
  s.c = hadamard(i, ct);
  s.h = hadamard(o, vtanh(s.c));
  return s;
}

// ---------------------------------------------------------------------------
// Normalizations.

// Max-subtracted softmax with long-double accumulation.
inline Vec softmax(const Vec& v) {
  long double mx = v[0];
  for (double x : v) mx = std::max<long double>(mx, x);
  std::vector<long double> e(v.size());
  long double sum = 0.0L;
  for (std::size_t i = 0; i < v.size(); ++i) {
    e[i] = std::exp(static_cast<long double>(v[i]) - mx);
    sum += e[i];
  }
  Vec y(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    y[i] = static_cast<double>(e[i] / sum);
  }
  return y;
}

// Plain ratio weights: divide by the sum, the denominator magnitude clamped
// up to eps (sign kept) when the sum is tiny.
inline Vec ratio_weights(const Vec& v, double eps = 1e-8) {
  double s = 0.0;
  for (double x : v) s += x;
  const double d = std::fabs(s) < eps ? (s >= 0.0 ? eps : -eps) : s;
  Vec y(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) y[i] = v[i] / d;
  return y;
}

// ---------------------------------------------------------------------------
// Attention mechanisms.  Child hiddens arrive as a list of d-vectors; query
// rows likewise (one row for sentence/phrase queries, n rows for self).

struct SoftW {
  Mat Wm, Um;
  Vec w;
  Mat Wa;
  Vec ba;
};

struct SoftOut {
  Vec alpha;
  Vec h;
};

inline SoftOut soft_attention(const std::vector<Vec>& hs, const Vec& s,
                              const SoftW& p) {
  const std::size_t n = hs.size();
  const Vec us = matvec(p.Um, s);
  Vec t(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Vec m = vtanh(add(matvec(p.Wm, hs[k]), us));
    t[k] = dot(p.w, m);
  }
  SoftOut out;
  out.alpha = ratio_weights(t);
  Vec g = zeros(hs[0].size());
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += out.alpha[k] * hs[k][j];
  }
  out.h = vtanh(affine(p.Wa, g, p.ba));
  return out;
}

struct KqvW {
  Mat Wk, Wq, Wv;  // Wv used by model 1 only
  Mat W;           // model 2 output layer
  Vec b;
};

// scores[i][k] = <query_i, key_k> / sqrt(d), then per-row softmax or ratio.
inline Mat align(const std::vector<Vec>& query, const std::vector<Vec>& key,
                 bool use_softmax) {
  const double inv = 1.0 / std::sqrt(static_cast<double>(key[0].size()));
  Mat alpha(query.size());
  for (std::size_t i = 0; i < query.size(); ++i) {
    Vec row(key.size());
    for (std::size_t k = 0; k < key.size(); ++k) {
      row[k] = dot(query[i], key[k]) * inv;
    }
    alpha[i] = use_softmax ? softmax(row) : ratio_weights(row);
  }
  return alpha;
}

struct AttnOut {
  Mat alpha;  // one row per query row
  Mat h;      // attended rows, same row count as alpha
};

inline AttnOut model1(const std::vector<Vec>& hs, const std::vector<Vec>& q,
                      const KqvW& p, bool use_softmax) {
  std::vector<Vec> key, value, query;
  for (const Vec& h : hs) key.push_back(matvec(p.Wk, h));
  for (const Vec& h : hs) value.push_back(matvec(p.Wv, h));
  for (const Vec& row : q) query.push_back(matvec(p.Wq, row));
  AttnOut out;
  out.alpha = align(query, key, use_softmax);
  for (const Vec& arow : out.alpha) {
    Vec h = zeros(hs[0].size());
    for (std::size_t k = 0; k < hs.size(); ++k) {
      for (std::size_t j = 0; j < h.size(); ++j) h[j] += arow[k] * value[k][j];
    }
    out.h.push_back(h);
  }
  return out;
}

inline AttnOut model2(const std::vector<Vec>& hs, const std::vector<Vec>& q,
                      const KqvW& p, bool use_softmax) {
  std::vector<Vec> key, query;
  for (const Vec& h : hs) key.push_back(matvec(p.Wk, h));
  for (const Vec& row : q) query.push_back(matvec(p.Wq, row));
  AttnOut out;
  out.alpha = align(query, key, use_softmax);
  for (const Vec& arow : out.alpha) {
    Vec ht = zeros(hs[0].size());
    for (std::size_t k = 0; k < hs.size(); ++k) {
      for (std::size_t j = 0; j < ht.size(); ++j) ht[j] += arow[k] * hs[k][j];
    }
    out.h.push_back(vtanh(affine(p.W, ht, p.b)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss and metrics.

// KL(p || q) with 0 log 0 = 0.
inline double kl(const Vec& p, const Vec& q) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      s += static_cast<long double>(p[i]) *
           (std::log(static_cast<long double>(p[i])) -
            std::log(static_cast<long double>(q[i])));
    }
  }
  return static_cast<double>(s);
}

inline double pearson(const Vec& xs, const Vec& ys) {
  const std::size_t n = xs.size();
  long double mx = 0.0L, my = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  long double sxy = 0.0L, sxx = 0.0L, syy = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    const long double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

}  // namespace oracle
