#include "trlb/metrics.hpp"

#include <cmath>
#include <json.hpp>

#include "trlb/errors.hpp"

namespace trlb {

namespace {

template <class Model>
MetricsReport evaluate_impl(const Model& m, const SparseTensor& t, std::span<const EntryPos> subset) {
  if (subset.empty()) throw DomainError("cannot evaluate on an empty subset");
  double sq = 0.0;
  double abs = 0.0;
  for (EntryPos p : subset) {
    const Entry& e = t[p];
    const double r = e.y - predict(m, e.i, e.j, e.k);
    sq += r * r;
    abs += std::abs(r);
  }
  const double n = static_cast<double>(subset.size());
  return {std::sqrt(sq / n), abs / n, subset.size()};
}

}  // namespace

MetricsReport evaluate(const TrModel& m, const SparseTensor& t, std::span<const EntryPos> subset) {
  return evaluate_impl(m, t, subset);
}

MetricsReport evaluate(const CpModel& m, const SparseTensor& t, std::span<const EntryPos> subset) {
  return evaluate_impl(m, t, subset);
}

MetricsReport metrics_from_residuals(std::span<const double> residuals) {
  if (residuals.empty()) throw DomainError("cannot evaluate on an empty subset");
  double sq = 0.0;
  double abs = 0.0;
  for (double r : residuals) {
    sq += r * r;
    abs += std::abs(r);
  }
  const double n = static_cast<double>(residuals.size());
  return {std::sqrt(sq / n), abs / n, residuals.size()};
}

std::string to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["rmse"] = r.rmse;
  j["mae"] = r.mae;
  j["count"] = r.count;
  return j.dump();
}

}  // namespace trlb
