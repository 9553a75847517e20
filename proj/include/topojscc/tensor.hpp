#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace topojscc {

// Domain error: invalid inputs, malformed files, contract violations.
// CLI maps it to exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline std::int64_t shape_numel(const std::vector<int>& shape) {
  if (shape.empty()) throw Error("tensor shape must be non-empty");
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw Error("tensor extent must be positive");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// Dense N-d array of 64-bit reals with an optional gradient slot.
// Invariants: data.size() == product(shape); grad empty or same length.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
      throw Error("tensor data length does not match shape " + shape_str(shape));
  }

  static Tensor zeros(std::vector<int> s) {
    const auto n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  }
  static Tensor full(std::vector<int> s, double v) {
    const auto n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), v));
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace topojscc
