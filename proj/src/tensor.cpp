#include "ctrace/tensor.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "ctrace/error.hpp"

namespace ctrace {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_)
    throw Error(ErrorKind::Shape, fmt::format("tensor data has {} entries, expected {}x{}",
                                              data_.size(), rows_, cols_));
}

Tensor2 Tensor2::identity(std::size_t n) {
  Tensor2 t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::string Tensor2::shape_string() const { return fmt::format("[{}x{}]", rows_, cols_); }

bool Tensor2::all_finite() const { return ctrace::all_finite(data_); }

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.rows())
    throw Error(ErrorKind::Shape,
                fmt::format("matmul shape mismatch: {} x {}", a.shape_string(), b.shape_string()));
  Tensor2 out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto src = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

Vector vecmat(std::span<const double> x, const Tensor2& a) {
  if (x.size() != a.rows())
    throw Error(ErrorKind::Shape,
                fmt::format("vecmat shape mismatch: [1x{}] x {}", x.size(), a.shape_string()));
  Vector out(a.cols(), 0.0);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double xk = x[k];
    auto src = a.row(k);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += xk * src[j];
  }
  return out;
}

namespace {

void softmax_into(std::span<const double> x, std::span<double> out) {
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
}

}  // namespace

Tensor2 softmax_rows(const Tensor2& x) {
  Tensor2 out(x.rows(), x.cols());
  if (x.cols() == 0) return out;
  for (std::size_t r = 0; r < x.rows(); ++r) softmax_into(x.row(r), out.row(r));
  return out;
}

Vector softmax(std::span<const double> x) {
  Vector out(x.size());
  if (!x.empty()) softmax_into(x, out);
  return out;
}

Vector layer_norm(std::span<const double> x, std::span<const double> gamma,
                  std::span<const double> beta, double eps) {
  if (gamma.size() != x.size() || beta.size() != x.size())
    throw Error(ErrorKind::Shape, fmt::format("layer_norm length mismatch: x={} gamma={} beta={}",
                                              x.size(), gamma.size(), beta.size()));
  if (!(eps > 0.0)) throw Error(ErrorKind::InvalidSpec, "layer_norm eps must be positive");
  if (x.empty()) return {};
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + eps);
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
  return out;
}

double gelu(double x) {
  constexpr double kAlpha = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(kAlpha * (x + 0.044715 * x * x * x)));
}

Vector gelu(std::span<const double> x) {
  Vector out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](double v) { return gelu(v); });
  return out;
}

std::size_t argmax(std::span<const double> x) {
  if (x.empty()) throw Error(ErrorKind::Range, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

}  // namespace ctrace
