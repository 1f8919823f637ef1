#include "treeattn/tape.hpp"

#include <atomic>
#include <string>
#include <utility>

#include "treeattn/errors.hpp"

namespace treeattn {

namespace {

std::atomic<std::uint64_t> g_next_tape_id{1};
thread_local Tape* g_active_tape = nullptr;

}  // namespace

Tape::Tape() : id_(g_next_tape_id.fetch_add(1, std::memory_order_relaxed)) {}

int Tape::emit(int rows, int cols, PullFn pull) {
  records_.push_back(Record{rows, cols, std::move(pull)});
  return static_cast<int>(records_.size()) - 1;
}

void Tape::track(Tensor& t) {
  t.set_tracking(id_, emit(t.rows(), t.cols(), nullptr));
}

void Tape::backward(const Tensor& output) {
  if (!owns(output)) {
    throw ArgumentError("backward: output is not tracked on this tape");
  }
  if (output.rows() != 1 || output.cols() != 1) {
    throw ArgumentError("backward: output must be a 1x1 scalar, got " +
                        std::to_string(output.rows()) + "x" +
                        std::to_string(output.cols()));
  }
  grads_.assign(records_.size(), {});
  grads_[output.node()] = {1.0};
  for (int i = output.node(); i >= 0; --i) {
    if (grads_[i].empty() || !records_[i].pull) continue;
    records_[i].pull(grads_[i].data(), *this);
  }
}

double* Tape::grad_buffer(int node) {
  auto& g = grads_[node];
  if (g.empty()) {
    const Record& r = records_[node];
    g.assign(static_cast<std::size_t>(r.rows) * r.cols, 0.0);
  }
  return g.data();
}

const std::vector<double>* Tape::grad(const Tensor& t) const {
  if (!owns(t) || grads_.empty()) return nullptr;
  const auto& g = grads_[t.node()];
  return g.empty() ? nullptr : &g;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

}  // namespace treeattn
