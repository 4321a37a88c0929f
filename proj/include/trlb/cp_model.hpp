#pragma once

#include <cstdint>

#include "trlb/tr_model.hpp"

namespace trlb {

/// Biased CP baseline: sum_r u_ir v_jr w_kr + sum_r d_ir e_jr f_kr.
/// All six factors are mode_size x R matrices.
struct CpModel {
  Dims dims;
  std::size_t rank = 0;
  BiasMatrix u, v, w;
  BiasMatrix d, e, f;

  static CpModel zeros(Dims dims, std::size_t rank);

  BiasMatrix& factor(Mode m) { return m == Mode::I ? u : (m == Mode::J ? v : w); }
  const BiasMatrix& factor(Mode m) const { return m == Mode::I ? u : (m == Mode::J ? v : w); }
  BiasMatrix& bias(Mode m) { return m == Mode::I ? d : (m == Mode::J ? e : f); }
  const BiasMatrix& bias(Mode m) const { return m == Mode::I ? d : (m == Mode::J ? e : f); }

  void check_shapes() const;
  double min_parameter() const;
  bool all_finite() const;

  friend bool operator==(const CpModel&, const CpModel&) = default;
};

double predict_core(const CpModel& m, std::size_t i, std::size_t j, std::size_t k);
double predict_bias(const CpModel& m, std::size_t i, std::size_t j, std::size_t k);
double predict(const CpModel& m, std::size_t i, std::size_t j, std::size_t k);

/// Uniform [lo, hi) initialization in the order U, V, W, D, E, F.
CpModel init_cp_model(Dims dims, std::size_t rank, std::uint64_t seed, double lo = 0.01, double hi = 0.1);

}  // namespace trlb
