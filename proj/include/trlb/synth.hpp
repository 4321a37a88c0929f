#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "trlb/checkpoint.hpp"
#include "trlb/sparse_tensor.hpp"
#include "trlb/trainer.hpp"

namespace trlb {

/// Parameters of a synthetic tensor with known low-rank structure.
struct SynthSpec {
  Dims dims;
  std::size_t true_rank = 2;
  double density = 0.1;      // in (0, 1]
  double noise_sigma = 0.0;  // Gaussian noise, truncated at 0
  double weight_scale = 10.0;  // ground truth scaled so the mean sampled cell is about weight_scale / 2
  std::uint64_t seed = 1;
  ModelFamily family = ModelFamily::tr;

  void validate() const;
};

struct SynthData {
  SparseTensor tensor;
  AnyModel truth;  // bias blocks are zero
};

/// Draws a ground-truth model with entries uniform on [0.1, 1.0), samples
/// ceil(density * cells) distinct cells uniformly, and sets each weight to the
/// element-wise oracle value plus truncated noise.
SynthData generate(const SynthSpec& spec);

/// Writes `data` as a text tensor and `truth` as a checkpoint.
void write_synth(const SynthData& data, const std::filesystem::path& data_path,
                 const std::filesystem::path& model_path, const SynthSpec& spec);

// Brute-force references. These use explicit scalar loops over the raw
// parameter arrays and share no arithmetic with the model or trainer code.

/// sum_{r1,r2,r3} u(r3,i,r1) v(r1,j,r2) w(r2,k,r3).
double oracle_tr_element(const CoreTensor& u, const CoreTensor& v, const CoreTensor& w, std::size_t i,
                         std::size_t j, std::size_t k);

/// tr(A_i B_j C_k) with A_i = diag(d_i), B_j = diag(e_j), C_k = diag(f_k) built as full matrices.
double oracle_bias_element(const BiasMatrix& d, const BiasMatrix& e, const BiasMatrix& f, std::size_t i,
                           std::size_t j, std::size_t k);

/// sum_r u_ir v_jr w_kr.
double oracle_cp_element(const BiasMatrix& u, const BiasMatrix& v, const BiasMatrix& w, std::size_t i,
                         std::size_t j, std::size_t k);

/// One epoch written parameter by parameter, O(|train| * R^3) per block.
/// Intended for tensors with at most a few dozen entries.
TrModel oracle_epoch(TrModel m, const SparseTensor& t, std::span<const EntryPos> train, const TrainConfig& cfg);
CpModel oracle_epoch(CpModel m, const SparseTensor& t, std::span<const EntryPos> train, const TrainConfig& cfg);

}  // namespace trlb
