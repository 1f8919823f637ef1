#include "treeattn/params.hpp"

#include <cmath>

#include "treeattn/errors.hpp"
#include "treeattn/rng.hpp"

namespace treeattn {

Tensor& ParamStore::create(const std::string& name, int rows, int cols,
                           bool random_init) {
  auto it = entries_.find(name);
  if (it != entries_.end()) {
    Tensor& existing = it->second.value;
    if (existing.rows() != rows || existing.cols() != cols) {
      throw DimensionError("parameter '" + name + "' re-registered as " +
                           std::to_string(rows) + "x" + std::to_string(cols) +
                           " but exists as " + std::to_string(existing.rows()) +
                           "x" + std::to_string(existing.cols()));
    }
    return existing;
  }
  Entry e;
  e.value = Tensor::zeros(rows, cols);
  e.random_init = random_init;
  return entries_.emplace(name, std::move(e)).first->second.value;
}

bool ParamStore::has(const std::string& name) const {
  return entries_.count(name) != 0;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw ArgumentError("unknown parameter '" + name + "'");
  }
  return it->second.value;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw ArgumentError("unknown parameter '" + name + "'");
  }
  return it->second.value;
}

void ParamStore::init(std::uint64_t seed, double range) {
  for (auto& [name, entry] : entries_) {
    if (!entry.random_init) continue;
    Rng rng = Rng::substream(seed, "init:" + name);
    double* v = entry.value.mutable_data();
    const std::size_t n = entry.value.size();
    for (std::size_t i = 0; i < n; ++i) v[i] = rng.uniform(-range, range);
  }
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, entry] : entries_) n += entry.value.size();
  return n;
}

ParamContext::ParamContext(const ParamStore& store, Tape* tape)
    : store_(&store), tape_(tape) {}

const Tensor& ParamContext::operator[](const std::string& name) {
  if (!tape_) return store_->get(name);
  auto it = leaves_.find(name);
  if (it != leaves_.end()) return it->second;
  Tensor leaf = store_->get(name);
  tape_->track(leaf);
  return leaves_.emplace(name, std::move(leaf)).first->second;
}

GradMap ParamContext::grads(const Tape& tape) const {
  GradMap out;
  for (const auto& [name, leaf] : leaves_) {
    const std::vector<double>* g = tape.grad(leaf);
    if (!g) continue;
    out.emplace(name, Tensor(leaf.rows(), leaf.cols(), *g));
  }
  return out;
}

void accumulate_grads(GradMap& total, const GradMap& g) {
  for (const auto& [name, grad] : g) {
    auto it = total.find(name);
    if (it == total.end()) {
      total.emplace(name, grad.clone());
      continue;
    }
    Tensor& t = it->second;
    if (t.rows() != grad.rows() || t.cols() != grad.cols()) {
      throw DimensionError("gradient shape for '" + name + "' changed between accumulations");
    }
    double* td = t.mutable_data();
    const double* gd = grad.data();
    for (std::size_t i = 0; i < t.size(); ++i) td[i] += gd[i];
  }
}

void scale_grads(GradMap& grads, double s) {
  for (auto& [name, grad] : grads) {
    double* d = grad.mutable_data();
    for (std::size_t i = 0; i < grad.size(); ++i) d[i] *= s;
  }
}

double clip_gradients(GradMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, grad] : grads) {
    const double* d = grad.data();
    for (std::size_t i = 0; i < grad.size(); ++i) sq += d[i] * d[i];
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    scale_grads(grads, max_norm / norm);
  }
  return norm;
}

Adagrad::Adagrad(double lr, double weight_decay)
    : lr_(lr), weight_decay_(weight_decay) {}

void Adagrad::step(ParamStore& store, const GradMap& grads) {
  for (const auto& [name, grad] : grads) {
    Tensor& theta = store.get(name);
    if (theta.rows() != grad.rows() || theta.cols() != grad.cols()) {
      throw DimensionError("gradient for '" + name + "' is " +
                           std::to_string(grad.rows()) + "x" +
                           std::to_string(grad.cols()) + " but parameter is " +
                           std::to_string(theta.rows()) + "x" +
                           std::to_string(theta.cols()));
    }
    auto& acc = accum_[name];
    if (acc.empty()) acc.assign(theta.size(), 0.0);
    double* t = theta.mutable_data();
    const double* g = grad.data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i] + weight_decay_ * t[i];
      acc[i] += gi * gi;
      t[i] -= lr_ * gi / (std::sqrt(acc[i]) + 1e-10);
    }
  }
}

}  // namespace treeattn
