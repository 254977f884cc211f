#include "meteocast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "meteocast/errors.hpp"

namespace meteo {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ",";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape_));
  }
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::row_major(std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t m = rows.size();
  std::size_t n = m ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(m * n);
  for (const auto& row : rows) {
    if (row.size() != n) throw ShapeError("ragged initializer for rank-2 tensor");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({m, n}, std::move(data));
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  if (shape_product(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str() + " to " + shape_to_string(shape) +
                     ": element count differs");
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::add(const Tensor& other) {
  if (!same_shape(other)) {
    throw ShapeError("add: shape mismatch " + shape_str() + " vs " + other.shape_str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

void Tensor::axpy(double a, const Tensor& other) {
  if (!same_shape(other)) {
    throw ShapeError("axpy: shape mismatch " + shape_str() + " vs " + other.shape_str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * other.data_[i];
}

void Tensor::scale(double a) {
  for (double& v : data_) v *= a;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + a.shape_str() + " x " + b.shape_str());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    double* orow = po + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = pb + kk * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank-2, got " + a.shape_str());
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at2(j, i) = a.at2(i, j);
  }
  return out;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " + x.shape_str());
  }
  const std::size_t len = x.dim(axis);
  std::size_t inner = 1, outer = 1;
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);

  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = px[base];
      for (std::size_t t = 1; t < len; ++t) mx = std::max(mx, px[base + t * inner]);
      double z = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        const double e = std::exp(px[base + t * inner] - mx);
        po[base + t * inner] = e;
        z += e;
      }
      for (std::size_t t = 0; t < len; ++t) po[base + t * inner] /= z;
    }
  }
  return out;
}

Activation activation_from_string(std::string_view name) {
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "tanh") return Activation::Tanh;
  if (name == "linear") return Activation::Linear;
  throw ConfigError("unknown activation kind: " + std::string(name));
}

const char* to_string(Activation kind) {
  switch (kind) {
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
    case Activation::Linear: return "linear";
  }
  throw ConfigError("unknown activation kind value");
}

double sigmoid(double x) {
  // Split on sign so exp never overflows.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor activate(const Tensor& x, Activation kind) {
  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  switch (kind) {
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) po[i] = sigmoid(px[i]);
      return out;
    case Activation::Tanh:
      for (std::size_t i = 0; i < x.size(); ++i) po[i] = std::tanh(px[i]);
      return out;
    case Activation::Linear:
      return x;
  }
  throw ConfigError("unknown activation kind value");
}

SymEig sym_eig(const Tensor& a) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw ShapeError("sym_eig: expected square matrix, got " + a.shape_str());
  }
  const std::size_t n = a.dim(0);
  Tensor m = a;  // working copy
  Tensor v({n, n});
  for (std::size_t i = 0; i < n; ++i) v.at2(i, i) = 1.0;

  auto off_norm = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += m.at2(i, j) * m.at2(i, j);
    return std::sqrt(2.0 * s);
  };
  double fro = 0.0;
  for (std::size_t i = 0; i < n * n; ++i) fro += m.at(i) * m.at(i);
  fro = std::sqrt(fro);
  const double tol = 1e-14 * std::max(fro, 1.0);

  for (int sweep = 0; sweep < 128 && off_norm() > tol; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m.at2(p, q);
        if (std::abs(apq) <= tol / (n * n)) continue;
        const double app = m.at2(p, p), aqq = m.at2(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m.at2(k, p), mkq = m.at2(k, q);
          m.at2(k, p) = c * mkp - s * mkq;
          m.at2(k, q) = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m.at2(p, k), mqk = m.at2(q, k);
          m.at2(p, k) = c * mpk - s * mqk;
          m.at2(q, k) = s * mpk + c * mqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at2(k, p), vkq = v.at2(k, q);
          v.at2(k, p) = c * vkp - s * vkq;
          v.at2(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  // Sort ascending, permuting eigenvector columns along.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return m.at2(i, i) < m.at2(j, j); });
  SymEig out{Tensor({n}), Tensor({n, n})};
  for (std::size_t i = 0; i < n; ++i) {
    out.values.at(i) = m.at2(order[i], order[i]);
    for (std::size_t k = 0; k < n; ++k) out.vectors.at2(k, i) = v.at2(k, order[i]);
  }
  return out;
}

}  // namespace meteo
