#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "treeattn/tape.hpp"
#include "treeattn/tensor.hpp"

namespace treeattn {

// Gradients keyed by parameter name.  std::map keeps iteration order sorted,
// which the optimizer and clipping rely on for run-to-run determinism.
using GradMap = std::map<std::string, Tensor>;

// Named model parameters.  Weight matrices are registered with random_init
// and drawn uniformly from (-range, range); biases stay zero.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    bool random_init = false;
  };

  // Registers a new parameter (zero-filled until init).  Re-registering an
  // existing name must repeat the same shape and returns the old tensor.
  Tensor& create(const std::string& name, int rows, int cols, bool random_init);

  bool has(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  // Fills every random_init parameter from its own named substream of seed,
  // so results do not depend on registration order.
  void init(std::uint64_t seed, double range = 0.05);

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& entries() { return entries_; }
  std::size_t total_elements() const;

 private:
  std::map<std::string, Entry> entries_;
};

// Per-pass view of a ParamStore.  With a tape, the first access to each
// parameter registers one tracked leaf that all later accesses share, so the
// whole pass accumulates into a single gradient per parameter.  Without a
// tape it just hands back the stored tensors.
class ParamContext {
 public:
  ParamContext(const ParamStore& store, Tape* tape);

  const Tensor& operator[](const std::string& name);

  // Extracts gradients recorded by tape.backward(); parameters the pass never
  // touched are absent from the result.
  GradMap grads(const Tape& tape) const;

 private:
  const ParamStore* store_;
  Tape* tape_;
  std::map<std::string, Tensor> leaves_;
};

// total += g, adopting entries absent from total.
void accumulate_grads(GradMap& total, const GradMap& g);
void scale_grads(GradMap& grads, double s);

// Global L2-norm clipping: when the joint norm exceeds max_norm, every
// gradient is scaled by max_norm / norm.  max_norm <= 0 disables clipping.
// Returns the pre-clip norm.
double clip_gradients(GradMap& grads, double max_norm);

// Adagrad with L2 weight decay folded into the gradient:
//   g' = g + weight_decay * theta
//   accum += g'^2
//   theta -= lr * g' / (sqrt(accum) + 1e-10)
class Adagrad {
 public:
  Adagrad(double lr, double weight_decay);
  void step(ParamStore& store, const GradMap& grads);

 private:
  double lr_;
  double weight_decay_;
  std::map<std::string, std::vector<double>> accum_;
};

}  // namespace treeattn
