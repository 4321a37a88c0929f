#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "trlb/cp_model.hpp"
#include "trlb/sparse_tensor.hpp"
#include "trlb/split.hpp"
#include "trlb/tr_model.hpp"

namespace trlb {

struct TrainConfig {
  std::size_t rank = 3;
  double lambda1 = 1e-4;  // core regularization
  double lambda2 = 1e-4;  // bias regularization
  std::size_t max_epochs = 500;
  std::size_t patience = 0;  // 0 disables early stopping
  double min_delta = 0.0;
  std::uint64_t seed = 1;
  double eps = 1e-12;  // added to every update denominator
  bool bias_enabled = true;
  double init_lo = 0.01;
  double init_hi = 0.1;
  std::size_t threads = 1;

  /// Every violated constraint, one message each; empty when valid.
  std::vector<std::string> problems() const;
  /// Throws DomainError listing all problems.
  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 0 is the initial model
  double objective = 0.0;  // biased objective on the training subset
  double train_rmse = 0.0;
  double val_rmse = 0.0;
  double val_mae = 0.0;
  double seconds = 0.0;  // wall time since training started
};

template <class Model>
struct TrainResult {
  Model model;  // snapshot with the best validation RMSE
  std::vector<EpochStats> stats;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Sum over `subset` of the squared residual plus, per entry, lambda1 times the
/// squared norms of the three core slices it touches and lambda2 times the
/// squared norms of its three bias rows. Bias terms are dropped when
/// cfg.bias_enabled is false.
double objective(const TrModel& m, const SparseTensor& t, std::span<const EntryPos> subset, const TrainConfig& cfg);
double objective(const CpModel& m, const SparseTensor& t, std::span<const EntryPos> subset, const TrainConfig& cfg);

/// One epoch of multiplicative updates over the training positions.
///
/// Blocks run in the order U, V, W, D, E, F. Within a block every slice (row)
/// is updated from predictions taken with the parameters current at the start
/// of the block:
///
///   x <- x * sum(y * c) / (sum(yhat * c + lambda * x) + eps)
///
/// where the sums run over the training entries of the slice and c is the
/// partial derivative of the prediction with respect to x. Slices without
/// training entries and parameters whose numerator is zero keep their value.
/// With bias disabled the D/E/F blocks are skipped and excluded from yhat.
/// Throws NumericError if a non-finite value appears.
void epoch_update(TrModel& m, const SparseTensor& t, std::span<const EntryPos> train, const TrainConfig& cfg);
void epoch_update(CpModel& m, const SparseTensor& t, std::span<const EntryPos> train, const TrainConfig& cfg);

/// Trains from init_model(dims, cfg.rank, cfg.seed, ...) with validation-RMSE
/// early stopping.
TrainResult<TrModel> train(const SparseTensor& t, const Split& split, const TrainConfig& cfg,
                           const EpochCallback& on_epoch = {});

/// Same harness starting from a caller-supplied model.
TrainResult<TrModel> train(const SparseTensor& t, const Split& split, const TrainConfig& cfg, TrModel initial,
                           const EpochCallback& on_epoch = {});

/// Biased CP baseline trained by the same harness.
TrainResult<CpModel> train_cp_baseline(const SparseTensor& t, const Split& split, const TrainConfig& cfg,
                                       const EpochCallback& on_epoch = {});

TrainResult<CpModel> train_cp_baseline(const SparseTensor& t, const Split& split, const TrainConfig& cfg,
                                       CpModel initial, const EpochCallback& on_epoch = {});

}  // namespace trlb
