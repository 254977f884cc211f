#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace meteo {

/// Dense row-major array of 64-bit floats. The carrier of all model math.
///
/// Indexing invariant: element (i, j) of an [m, n] tensor lives at
/// data[i * n + j]; higher ranks extend the same rule.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);  // zero-filled
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor row_major(std::initializer_list<std::initializer_list<double>> rows);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& at(std::size_t i) { return data_[i]; }
  double at(std::size_t i) const { return data_[i]; }
  double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at3(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at3(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// Same data, new shape; element count must match.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  void fill(double value);
  void add(const Tensor& other);               // this += other
  void axpy(double a, const Tensor& other);    // this += a * other
  void scale(double a);

  bool all_finite() const;
  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Standard matrix product of a [m,k] and b [k,n]. Throws ShapeError naming
/// both shapes when the inner dimensions disagree.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Rank-2 transpose.
Tensor transpose(const Tensor& a);

/// Softmax along `axis`, shift-stable (per-slice max subtracted before exp).
/// Each slice sums to 1 within 1e-12 for finite input.
Tensor softmax(const Tensor& x, std::size_t axis);

enum class Activation { Sigmoid, Tanh, Linear };

Activation activation_from_string(std::string_view name);
const char* to_string(Activation kind);

/// Elementwise activation. Unknown kind values throw ConfigError.
Tensor activate(const Tensor& x, Activation kind);

double sigmoid(double x);

/// Eigendecomposition of a symmetric matrix (cyclic Jacobi rotations).
/// Eigenvalues ascend; eigenvectors are the columns of `vectors`.
struct SymEig {
  Tensor values;   // [n]
  Tensor vectors;  // [n,n]
};
SymEig sym_eig(const Tensor& a);

}  // namespace meteo
