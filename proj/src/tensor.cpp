#include "treeattn/tensor.hpp"

#include <string>

#include "treeattn/errors.hpp"

namespace treeattn {

namespace {

void check_dims(int rows, int cols) {
  if (rows <= 0 || cols <= 0) {
    throw DimensionError("tensor dimensions must be positive, got " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

Tensor::Tensor(int rows, int cols, std::vector<double> values)
    : rows_(rows), cols_(cols) {
  check_dims(rows, cols);
  if (values.size() != size()) {
    throw DimensionError("tensor " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " cannot hold " +
                         std::to_string(values.size()) + " values");
  }
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(int rows, int cols) {
  check_dims(rows, cols);
  Tensor t;
  t.rows_ = rows;
  t.cols_ = cols;
  t.data_ = std::make_shared<std::vector<double>>(t.size(), 0.0);
  return t;
}

Tensor Tensor::full(int rows, int cols, double value) {
  Tensor t = zeros(rows, cols);
  for (double& v : *t.data_) v = value;
  return t;
}

double* Tensor::mutable_data() {
  if (!data_) throw DimensionError("mutable_data on empty tensor");
  if (data_.use_count() > 1) {
    data_ = std::make_shared<std::vector<double>>(*data_);
  }
  return data_->data();
}

double Tensor::at(int r, int c) const {
  return (*data_)[static_cast<std::size_t>(r) * cols_ + c];
}

void Tensor::set(int r, int c, double v) {
  mutable_data()[static_cast<std::size_t>(r) * cols_ + c] = v;
}

double Tensor::value() const {
  if (rows_ != 1 || cols_ != 1) {
    throw DimensionError("value() needs a 1x1 tensor, got " +
                         std::to_string(rows_) + "x" + std::to_string(cols_));
  }
  return (*data_)[0];
}

Tensor Tensor::clone() const {
  Tensor t;
  t.rows_ = rows_;
  t.cols_ = cols_;
  if (data_) t.data_ = std::make_shared<std::vector<double>>(*data_);
  return t;
}

}  // namespace treeattn
