#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ctrace {

/// Dense row-major matrix of doubles.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  /// Throws a shape error when data.size() != rows * cols.
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2 identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::string shape_string() const;

  bool all_finite() const;

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using Vector = std::vector<double>;

/// Matrix product. The inner k-loop always runs 0..n-1 in order, so
/// results are bit-reproducible regardless of caller threading.
Tensor2 matmul(const Tensor2& a, const Tensor2& b);

/// Row vector times matrix: x (len a.rows) · a -> vector (len a.cols).
Vector vecmat(std::span<const double> x, const Tensor2& a);

/// Row-wise softmax with per-row max subtraction.
Tensor2 softmax_rows(const Tensor2& x);

/// Softmax of a single vector (same numerics as softmax_rows).
Vector softmax(std::span<const double> x);

/// (x - mean) / sqrt(var + eps) * gamma + beta, population variance.
Vector layer_norm(std::span<const double> x, std::span<const double> gamma,
                  std::span<const double> beta, double eps);

/// Tanh-approximation GELU, elementwise:
///   gelu(x) = 0.5 * x * (1 + tanh(sqrt(2/pi) * (x + 0.044715 * x^3)))
Vector gelu(std::span<const double> x);
double gelu(double x);

/// Index of the maximum element; ties go to the lowest index.
std::size_t argmax(std::span<const double> x);

bool all_finite(std::span<const double> x);

}  // namespace ctrace
