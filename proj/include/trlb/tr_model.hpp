#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "trlb/sparse_tensor.hpp"

namespace trlb {

/// Third-order core of shape R x mode_size x R, stored as mode_size
/// contiguous R x R lateral slices in row-major order. Element
/// (left, n, right) lives at data[(n * R + left) * R + right].
class CoreTensor {
 public:
  CoreTensor() = default;
  CoreTensor(std::size_t mode_size, std::size_t rank)
      : mode_size_(mode_size), rank_(rank), data_(mode_size * rank * rank, 0.0) {}

  std::size_t mode_size() const { return mode_size_; }
  std::size_t rank() const { return rank_; }

  /// Lateral slice n as an R x R row-major matrix.
  std::span<double> slice(std::size_t n) { return {data_.data() + n * rank_ * rank_, rank_ * rank_}; }
  std::span<const double> slice(std::size_t n) const {
    return {data_.data() + n * rank_ * rank_, rank_ * rank_};
  }

  double& at(std::size_t left, std::size_t n, std::size_t right) {
    return data_[(n * rank_ + left) * rank_ + right];
  }
  double at(std::size_t left, std::size_t n, std::size_t right) const {
    return data_[(n * rank_ + left) * rank_ + right];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  friend bool operator==(const CoreTensor&, const CoreTensor&) = default;

 private:
  std::size_t mode_size_ = 0;
  std::size_t rank_ = 0;
  std::vector<double> data_;
};

/// Dense mode_size x R matrix; row n is the diagonal of the n-th lateral
/// slice of a diagonal bias core.
class BiasMatrix {
 public:
  BiasMatrix() = default;
  BiasMatrix(std::size_t mode_size, std::size_t rank)
      : mode_size_(mode_size), rank_(rank), data_(mode_size * rank, 0.0) {}

  std::size_t mode_size() const { return mode_size_; }
  std::size_t rank() const { return rank_; }

  std::span<double> row(std::size_t n) { return {data_.data() + n * rank_, rank_}; }
  std::span<const double> row(std::size_t n) const { return {data_.data() + n * rank_, rank_}; }

  double& at(std::size_t n, std::size_t r) { return data_[n * rank_ + r]; }
  double at(std::size_t n, std::size_t r) const { return data_[n * rank_ + r]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  friend bool operator==(const BiasMatrix&, const BiasMatrix&) = default;

 private:
  std::size_t mode_size_ = 0;
  std::size_t rank_ = 0;
  std::vector<double> data_;
};

/// Tensor-ring factors U, V, W plus linear-bias matrices D, E, F sharing one rank.
///
/// The core prediction is tr(U_i V_j W_k); the bias is sum_r d_ir e_jr f_kr.
struct TrModel {
  Dims dims;
  std::size_t rank = 0;
  CoreTensor u, v, w;
  BiasMatrix d, e, f;

  /// All-zero model with consistent shapes.
  static TrModel zeros(Dims dims, std::size_t rank);

  CoreTensor& core(Mode m) { return m == Mode::I ? u : (m == Mode::J ? v : w); }
  const CoreTensor& core(Mode m) const { return m == Mode::I ? u : (m == Mode::J ? v : w); }
  BiasMatrix& bias(Mode m) { return m == Mode::I ? d : (m == Mode::J ? e : f); }
  const BiasMatrix& bias(Mode m) const { return m == Mode::I ? d : (m == Mode::J ? e : f); }

  /// Throws DomainError when shapes disagree with dims/rank.
  void check_shapes() const;
  /// Smallest parameter value over all six blocks.
  double min_parameter() const;
  bool all_finite() const;

  friend bool operator==(const TrModel&, const TrModel&) = default;
};

/// tr(U_i V_j W_k).
double predict_core(const TrModel& m, std::size_t i, std::size_t j, std::size_t k);
/// sum_r d_ir e_jr f_kr.
double predict_bias(const TrModel& m, std::size_t i, std::size_t j, std::size_t k);
/// predict_core + predict_bias.
double predict(const TrModel& m, std::size_t i, std::size_t j, std::size_t k);

/// Every parameter drawn i.i.d. uniform on [lo, hi) from a seeded stream, in
/// the order U, V, W, D, E, F. Requires rank >= 1 and 0 < lo < hi.
TrModel init_model(Dims dims, std::size_t rank, std::uint64_t seed, double lo = 0.01, double hi = 0.1);

namespace kernels {

// Unchecked building blocks shared by prediction and training.

/// out = a * b for R x R row-major matrices.
inline void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t r) {
  for (std::size_t x = 0; x < r; ++x) {
    for (std::size_t y = 0; y < r; ++y) out[x * r + y] = 0.0;
    for (std::size_t z = 0; z < r; ++z) {
      const double axz = a[x * r + z];
      for (std::size_t y = 0; y < r; ++y) out[x * r + y] += axz * b[z * r + y];
    }
  }
}

/// tr(a * b) without forming the product.
inline double trace_of_product(std::span<const double> a, std::span<const double> b, std::size_t r) {
  double t = 0.0;
  for (std::size_t x = 0; x < r; ++x) {
    for (std::size_t z = 0; z < r; ++z) t += a[x * r + z] * b[z * r + x];
  }
  return t;
}

inline double triple_dot(std::span<const double> a, std::span<const double> b, std::span<const double> c) {
  double s = 0.0;
  for (std::size_t x = 0; x < a.size(); ++x) s += a[x] * b[x] * c[x];
  return s;
}

}  // namespace kernels

}  // namespace trlb
