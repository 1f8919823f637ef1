#pragma once

#include <cstdint>
#include <memory>
#include <vector>

namespace treeattn {

// Dense row-major matrix of doubles.  A 1xN tensor doubles as a row vector
// and a 1x1 tensor as a scalar.  Copies share storage; mutable_data() clones
// when the buffer is shared, so writes never alias another tensor.
//
// A tensor may additionally be *tracked*: (tape_id, node) names the tape
// record produced by the op that built it.  Tensors from a dead or foreign
// tape simply act untracked — there is no dangling state to invalidate.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols, std::vector<double> values);

  static Tensor zeros(int rows, int cols);
  static Tensor full(int rows, int cols, double value);
  static Tensor scalar(double value) { return full(1, 1, value); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const {
    return static_cast<std::size_t>(rows_) * static_cast<std::size_t>(cols_);
  }
  bool empty() const { return data_ == nullptr; }

  const double* data() const { return data_ ? data_->data() : nullptr; }
  double* mutable_data();

  double at(int r, int c) const;
  void set(int r, int c, double v);
  // Scalar read; throws DimensionError unless 1x1.
  double value() const;

  // Deep copy with tracking cleared.
  Tensor clone() const;

  std::uint64_t tape_id() const { return tape_id_; }
  int node() const { return node_; }
  bool has_node() const { return node_ >= 0; }
  void set_tracking(std::uint64_t tape_id, int node) {
    tape_id_ = tape_id;
    node_ = node;
  }
  void clear_tracking() {
    tape_id_ = 0;
    node_ = -1;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::shared_ptr<std::vector<double>> data_;
  std::uint64_t tape_id_ = 0;
  int node_ = -1;
};

}  // namespace treeattn
