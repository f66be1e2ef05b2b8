#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fcl {

/// Dense row-major tensor of doubles. Rank 1 and rank 2 cover everything the
/// network needs; higher ranks are accepted but only indexed through values().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor vector(std::size_t n, double fill = 0.0) { return Tensor({n}, fill); }

  [[nodiscard]] const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  [[nodiscard]] bool empty() const noexcept { return values_.empty(); }
  /// First dimension (1 for rank-1 tensors).
  [[nodiscard]] std::size_t rows() const noexcept;
  /// Product of the trailing dimensions (the full length for rank-1 tensors).
  [[nodiscard]] std::size_t cols() const noexcept;

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  [[nodiscard]] std::span<double> values() noexcept { return values_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
  [[nodiscard]] std::span<double> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
  [[nodiscard]] std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols(), cols()};
  }

  void fill(double v);
  [[nodiscard]] bool all_finite() const noexcept;
  [[nodiscard]] bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  [[nodiscard]] std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

}  // namespace fcl
