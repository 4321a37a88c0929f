#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "trlb/cp_model.hpp"
#include "trlb/sparse_tensor.hpp"
#include "trlb/tr_model.hpp"

namespace trlb {

struct MetricsReport {
  double rmse = 0.0;
  double mae = 0.0;
  std::size_t count = 0;
};

// Single-pass double accumulation; throws DomainError on an empty subset.
MetricsReport evaluate(const TrModel& m, const SparseTensor& t, std::span<const EntryPos> subset);
MetricsReport evaluate(const CpModel& m, const SparseTensor& t, std::span<const EntryPos> subset);

/// RMSE/MAE of raw residuals y - yhat.
MetricsReport metrics_from_residuals(std::span<const double> residuals);

/// `{"rmse":...,"mae":...,"count":...}` with round-trip precision.
std::string to_json(const MetricsReport& r);

}  // namespace trlb
