#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "treeattn/tensor.hpp"

namespace treeattn {

class Tape;

// Backward rule for one recorded op.  Receives the incoming gradient of the
// op's output (row-major, sized like the output) and accumulates into parent
// buffers via tape.grad_buffer().
using PullFn = std::function<void(const double* gout, Tape& tape)>;

// Reverse-mode tape, rebuilt per forward pass (define-by-run).  Ops append
// records in topological order, so backward() is a single reverse sweep.
// Not thread-safe; each worker builds its own tape.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::uint64_t id() const { return id_; }
  std::size_t size() const { return records_.size(); }

  // Appends a record and returns its node index.  pull may be null (leaf).
  int emit(int rows, int cols, PullFn pull);

  // Registers t as a leaf of this tape (no backward rule of its own).
  void track(Tensor& t);

  // True when t carries a live node on this tape.
  bool owns(const Tensor& t) const {
    return t.tape_id() == id_ && t.has_node() &&
           static_cast<std::size_t>(t.node()) < records_.size();
  }

  // Seeds d(output)/d(output) = 1 and sweeps the tape once.  The output must
  // be a tracked 1x1 tensor of this tape.
  void backward(const Tensor& output);

  // Gradient buffer for a node, zero-allocated on first touch.  Only valid
  // during/after backward().
  double* grad_buffer(int node);

  // Gradient of a tracked tensor after backward(); nullptr when the tensor
  // is untracked or never influenced the output.
  const std::vector<double>* grad(const Tensor& t) const;

  // Tape receiving new op records on this thread, or nullptr.
  static Tape* active();

 private:
  friend class TapeScope;

  struct Record {
    int rows = 0;
    int cols = 0;
    PullFn pull;
  };

  std::uint64_t id_;
  std::vector<Record> records_;
  std::vector<std::vector<double>> grads_;
};

// Installs a tape as the thread's active tape for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace treeattn
