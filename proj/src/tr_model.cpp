#include "trlb/tr_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "trlb/errors.hpp"
#include "trlb/rng.hpp"

namespace trlb {

namespace {

void check_index(const Dims& dims, std::size_t i, std::size_t j, std::size_t k) {
  if (i >= dims.i || j >= dims.j || k >= dims.k) {
    throw DomainError("index (" + std::to_string(i) + "," + std::to_string(j) + "," + std::to_string(k) +
                      ") outside model extents (" + std::to_string(dims.i) + "," + std::to_string(dims.j) +
                      "," + std::to_string(dims.k) + ")");
  }
}

}  // namespace

TrModel TrModel::zeros(Dims dims, std::size_t rank) {
  TrModel m;
  m.dims = dims;
  m.rank = rank;
  m.u = CoreTensor(dims.i, rank);
  m.v = CoreTensor(dims.j, rank);
  m.w = CoreTensor(dims.k, rank);
  m.d = BiasMatrix(dims.i, rank);
  m.e = BiasMatrix(dims.j, rank);
  m.f = BiasMatrix(dims.k, rank);
  return m;
}

void TrModel::check_shapes() const {
  if (rank == 0) throw DomainError("model rank must be >= 1");
  for (Mode m : kModes) {
    const CoreTensor& c = core(m);
    const BiasMatrix& b = bias(m);
    if (c.rank() != rank || c.mode_size() != dims[m] || b.rank() != rank || b.mode_size() != dims[m]) {
      throw DomainError("model block for mode " + std::string(mode_name(m)) + " has inconsistent shape");
    }
  }
}

double TrModel::min_parameter() const {
  double lo = std::numeric_limits<double>::infinity();
  for (Mode m : kModes) {
    for (double x : core(m).data()) lo = std::min(lo, x);
    for (double x : bias(m).data()) lo = std::min(lo, x);
  }
  return lo;
}

bool TrModel::all_finite() const {
  const auto finite = [](std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
  };
  for (Mode m : kModes) {
    if (!finite(core(m).data()) || !finite(bias(m).data())) return false;
  }
  return true;
}

double predict_core(const TrModel& m, std::size_t i, std::size_t j, std::size_t k) {
  check_index(m.dims, i, j, k);
  const std::size_t r = m.rank;
  std::vector<double> uv(r * r);
  kernels::matmul(m.u.slice(i), m.v.slice(j), uv, r);
  return kernels::trace_of_product(uv, m.w.slice(k), r);
}

double predict_bias(const TrModel& m, std::size_t i, std::size_t j, std::size_t k) {
  check_index(m.dims, i, j, k);
  return kernels::triple_dot(m.d.row(i), m.e.row(j), m.f.row(k));
}

double predict(const TrModel& m, std::size_t i, std::size_t j, std::size_t k) {
  return predict_core(m, i, j, k) + predict_bias(m, i, j, k);
}

TrModel init_model(Dims dims, std::size_t rank, std::uint64_t seed, double lo, double hi) {
  if (rank == 0) throw DomainError("rank must be >= 1");
  if (!(lo > 0.0) || !(lo < hi) || !std::isfinite(hi)) {
    throw DomainError("initialization range must satisfy 0 < lo < hi");
  }
  TrModel m = TrModel::zeros(dims, rank);
  Rng rng(seed);
  for (Mode mode : kModes) {
    for (double& x : m.core(mode).data()) x = rng.uniform(lo, hi);
  }
  for (Mode mode : kModes) {
    for (double& x : m.bias(mode).data()) x = rng.uniform(lo, hi);
  }
  return m;
}

}  // namespace trlb
