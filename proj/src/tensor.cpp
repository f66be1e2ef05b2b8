#include "fcl/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "fcl/error.hpp"

namespace fcl {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (product(shape_) != values_.size()) {
    throw DimensionError("tensor: shape " + shape_string() + " does not match " +
                         std::to_string(values_.size()) + " values");
  }
}

std::size_t Tensor::rows() const noexcept {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? 1 : shape_[0];
}

std::size_t Tensor::cols() const noexcept {
  if (shape_.empty()) return 0;
  return std::accumulate(shape_.begin() + 1, shape_.end(), shape_.size() == 1 ? shape_[0] : std::size_t{1},
                         std::multiplies<>());
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const noexcept {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << ']';
  return os.str();
}

}  // namespace fcl
