#pragma once

// Bridges between the library's Tensor and the oracle's nested-vector types,
// plus small random-fill helpers shared by the test binaries.  Conversion
// only — no arithmetic lives here.

#include <cstdint>
#include <vector>

#include "oracles.hpp"
#include "treeattn/rng.hpp"
#include "treeattn/tensor.hpp"

namespace testutil {

inline oracle::Vec to_vec(const treeattn::Tensor& t) {
  return oracle::Vec(t.data(), t.data() + t.size());
}

inline oracle::Mat to_mat(const treeattn::Tensor& t) {
  oracle::Mat m(static_cast<std::size_t>(t.rows()));
  for (int r = 0; r < t.rows(); ++r) {
    m[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(t.cols()));
    for (int c = 0; c < t.cols(); ++c) {
      m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = t.at(r, c);
    }
  }
  return m;
}

inline treeattn::Tensor from_vec(const oracle::Vec& v) {
  return treeattn::Tensor(1, static_cast<int>(v.size()), v);
}

inline treeattn::Tensor random_tensor(int rows, int cols, treeattn::Rng& rng,
                                      double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(rows) * cols);
  for (double& x : v) x = rng.uniform(lo, hi);
  return treeattn::Tensor(rows, cols, std::move(v));
}

inline double max_abs_diff(const treeattn::Tensor& t, const oracle::Vec& v) {
  double worst = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = t.data()[i] - v[i];
    worst = std::max(worst, d < 0 ? -d : d);
  }
  return worst;
}

inline double max_rel_diff(const treeattn::Tensor& t, const oracle::Vec& v) {
  double worst = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double a = t.data()[i], b = v[i];
    double d = a - b;
    if (d < 0) d = -d;
    double scale = 1.0;
    if (a > scale || -a > scale) scale = a < 0 ? -a : a;
    if (b > scale || -b > scale) scale = b < 0 ? -b : b;
    worst = std::max(worst, d / scale);
  }
  return worst;
}

}  // namespace testutil
