#include "trlb/cp_model.hpp"

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
                      ") outside model extents");
  }
}

}  // namespace

CpModel CpModel::zeros(Dims dims, std::size_t rank) {
  CpModel m;
  m.dims = dims;
  m.rank = rank;
  for (Mode mode : kModes) {
    m.factor(mode) = BiasMatrix(dims[mode], rank);
    m.bias(mode) = BiasMatrix(dims[mode], rank);
  }
  return m;
}

void CpModel::check_shapes() const {
  if (rank == 0) throw DomainError("model rank must be >= 1");
  for (Mode m : kModes) {
    for (const BiasMatrix* b : {&factor(m), &bias(m)}) {
      if (b->rank() != rank || b->mode_size() != dims[m]) {
        throw DomainError("CP factor for mode " + std::string(mode_name(m)) + " has inconsistent shape");
      }
    }
  }
}

double CpModel::min_parameter() const {
  double lo = std::numeric_limits<double>::infinity();
  for (Mode m : kModes) {
    for (double x : factor(m).data()) lo = std::min(lo, x);
    for (double x : bias(m).data()) lo = std::min(lo, x);
  }
  return lo;
}

bool CpModel::all_finite() const {
  for (Mode m : kModes) {
    for (const BiasMatrix* b : {&factor(m), &bias(m)}) {
      for (double x : b->data()) {
        if (!std::isfinite(x)) return false;
      }
    }
  }
  return true;
}

double predict_core(const CpModel& m, std::size_t i, std::size_t j, std::size_t k) {
  check_index(m.dims, i, j, k);
  return kernels::triple_dot(m.u.row(i), m.v.row(j), m.w.row(k));
}

double predict_bias(const CpModel& m, std::size_t i, std::size_t j, std::size_t k) {
  check_index(m.dims, i, j, k);
  return kernels::triple_dot(m.d.row(i), m.e.row(j), m.f.row(k));
}

double predict(const CpModel& m, std::size_t i, std::size_t j, std::size_t k) {
  return predict_core(m, i, j, k) + predict_bias(m, i, j, k);
}

CpModel init_cp_model(Dims dims, std::size_t rank, std::uint64_t seed, double lo, double hi) {
  if (rank == 0) throw DomainError("rank must be >= 1");
  if (!(lo > 0.0) || !(lo < hi) || !std::isfinite(hi)) {
    throw DomainError("initialization range must satisfy 0 < lo < hi");
  }
  CpModel m = CpModel::zeros(dims, rank);
  Rng rng(seed);
  for (Mode mode : kModes) {
    for (double& x : m.factor(mode).data()) x = rng.uniform(lo, hi);
  }
  for (Mode mode : kModes) {
    for (double& x : m.bias(mode).data()) x = rng.uniform(lo, hi);
  }
  return m;
}

}  // namespace trlb
