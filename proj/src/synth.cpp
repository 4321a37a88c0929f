#include "trlb/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "trlb/errors.hpp"
#include "trlb/rng.hpp"

namespace trlb {

void SynthSpec::validate() const {
  if (dims.i == 0 || dims.j == 0 || dims.k == 0) throw DomainError("synthetic extents must be positive");
  if (true_rank < 1) throw DomainError("true rank must be >= 1");
  if (!(density > 0.0 && density <= 1.0)) throw DomainError("density must lie in (0, 1]");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw DomainError("noise sigma must be >= 0");
  if (!(weight_scale > 0.0) || !std::isfinite(weight_scale)) throw DomainError("weight scale must be > 0");
}

double oracle_tr_element(const CoreTensor& u, const CoreTensor& v, const CoreTensor& w, std::size_t i,
                         std::size_t j, std::size_t k) {
  const std::size_t r = u.rank();
  if (v.rank() != r || w.rank() != r) throw DomainError("oracle: core ranks differ");
  if (i >= u.mode_size() || j >= v.mode_size() || k >= w.mode_size()) throw DomainError("oracle: index out of range");
  double sum = 0.0;
  for (std::size_t r1 = 0; r1 < r; ++r1) {
    for (std::size_t r2 = 0; r2 < r; ++r2) {
      for (std::size_t r3 = 0; r3 < r; ++r3) {
        sum += u.at(r3, i, r1) * v.at(r1, j, r2) * w.at(r2, k, r3);
      }
    }
  }
  return sum;
}

double oracle_bias_element(const BiasMatrix& d, const BiasMatrix& e, const BiasMatrix& f, std::size_t i,
                           std::size_t j, std::size_t k) {
  const std::size_t r = d.rank();
  if (e.rank() != r || f.rank() != r) throw DomainError("oracle: bias ranks differ");
  if (i >= d.mode_size() || j >= e.mode_size() || k >= f.mode_size()) throw DomainError("oracle: index out of range");
  std::vector<double> a(r * r, 0.0), b(r * r, 0.0), c(r * r, 0.0);
  for (std::size_t q = 0; q < r; ++q) {
    a[q * r + q] = d.at(i, q);
    b[q * r + q] = e.at(j, q);
    c[q * r + q] = f.at(k, q);
  }
  double trace = 0.0;
  for (std::size_t x = 0; x < r; ++x) {
    for (std::size_t y = 0; y < r; ++y) {
      for (std::size_t z = 0; z < r; ++z) trace += a[x * r + y] * b[y * r + z] * c[z * r + x];
    }
  }
  return trace;
}

double oracle_cp_element(const BiasMatrix& u, const BiasMatrix& v, const BiasMatrix& w, std::size_t i,
                         std::size_t j, std::size_t k) {
  const std::size_t r = u.rank();
  if (v.rank() != r || w.rank() != r) throw DomainError("oracle: factor ranks differ");
  if (i >= u.mode_size() || j >= v.mode_size() || k >= w.mode_size()) throw DomainError("oracle: index out of range");
  double sum = 0.0;
  for (std::size_t q = 0; q < r; ++q) sum += u.at(i, q) * v.at(j, q) * w.at(k, q);
  return sum;
}

namespace {

std::vector<std::size_t> sample_cells(std::size_t cells, std::size_t count, Rng& rng) {
  std::vector<std::size_t> out;
  if (cells <= (std::size_t{1} << 24)) {
    std::vector<std::size_t> all(cells);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t q = 0; q < count; ++q) {
      const std::size_t pick = q + static_cast<std::size_t>(rng.below(cells - q));
      std::swap(all[q], all[pick]);
    }
    out.assign(all.begin(), all.begin() + count);
  } else {
    std::unordered_set<std::size_t> seen;
    out.reserve(count);
    while (out.size() < count) {
      const auto c = static_cast<std::size_t>(rng.below(cells));
      if (seen.insert(c).second) out.push_back(c);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double sum_bias(const BiasMatrix& d, const BiasMatrix& e, const BiasMatrix& f, const Entry& x) {
  double s = 0.0;
  for (std::size_t q = 0; q < d.rank(); ++q) s += d.at(x.i, q) * e.at(x.j, q) * f.at(x.k, q);
  return s;
}

[[noreturn]] void oracle_non_finite(const char* block) {
  throw NumericError(std::string("oracle: non-finite parameter in block ") + block, 0);
}

void check_train(const SparseTensor& t, std::span<const EntryPos> train) {
  for (EntryPos p : train) {
    if (p >= t.size()) throw DomainError("oracle: training position out of range");
  }
}

}  // namespace

SynthData generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t cells = spec.dims.cells();
  const double wanted = spec.density * static_cast<double>(cells);
  auto count = static_cast<std::size_t>(std::ceil(wanted * (1.0 - 1e-12)));
  count = std::min(count, cells);
  if (count == 0) throw DomainError("density too low: no cells would be sampled");

  Rng rng(spec.seed);
  const std::size_t r = spec.true_rank;
  TrModel tr;
  CpModel cp;
  std::vector<std::span<double>> factors;
  if (spec.family == ModelFamily::tr) {
    tr = TrModel::zeros(spec.dims, r);
    for (Mode m : kModes) factors.push_back(tr.core(m).data());
  } else {
    cp = CpModel::zeros(spec.dims, r);
    for (Mode m : kModes) factors.push_back(cp.factor(m).data());
  }
  for (auto block : factors) {
    for (double& x : block) x = rng.uniform(0.1, 1.0);
  }

  const auto cell_ids = sample_cells(cells, count, rng);
  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::size_t c : cell_ids) {
    const std::size_t k = c % spec.dims.k;
    const std::size_t j = (c / spec.dims.k) % spec.dims.j;
    const std::size_t i = c / (spec.dims.k * spec.dims.j);
    entries.push_back({i, j, k, 0.0});
  }
  const auto clean = [&](const Entry& e) {
    return spec.family == ModelFamily::tr ? oracle_tr_element(tr.u, tr.v, tr.w, e.i, e.j, e.k)
                                          : oracle_cp_element(cp.u, cp.v, cp.w, e.i, e.j, e.k);
  };

  // Rescale every factor by the same constant so the sampled mean hits weight_scale / 2.
  double mean = 0.0;
  for (const Entry& e : entries) mean += clean(e);
  mean /= static_cast<double>(count);
  const double scale = std::cbrt(0.5 * spec.weight_scale / mean);
  for (auto block : factors) {
    for (double& x : block) x *= scale;
  }

  for (Entry& e : entries) {
    double y = clean(e);
    if (spec.noise_sigma > 0.0) y = std::max(0.0, y + spec.noise_sigma * rng.normal());
    e.y = y;
  }

  SynthData out{SparseTensor(spec.dims, std::move(entries)), AnyModel{}};
  if (spec.family == ModelFamily::tr) {
    out.truth = std::move(tr);
  } else {
    out.truth = std::move(cp);
  }
  return out;
}

void write_synth(const SynthData& data, const std::filesystem::path& data_path,
                 const std::filesystem::path& model_path, const SynthSpec& spec) {
  std::ostringstream header;
  header << "synthetic " << (spec.family == ModelFamily::tr ? "tr" : "cp") << " dims=" << spec.dims.i << 'x'
         << spec.dims.j << 'x' << spec.dims.k << " rank=" << spec.true_rank << " density=" << spec.density
         << " noise=" << spec.noise_sigma << " scale=" << spec.weight_scale << " seed=" << spec.seed;
  write_entries(data_path, data.tensor, header.str());
  std::visit([&](const auto& m) { save_model(m, model_path); }, data.truth);
}

TrModel oracle_epoch(TrModel m, const SparseTensor& t, std::span<const EntryPos> train, const TrainConfig& cfg) {
  check_train(t, train);
  const std::size_t R = m.rank;
  const double l1 = cfg.lambda1;
  const double l2 = cfg.lambda2;

  const auto yhat = [&](const TrModel& mm, const Entry& x) {
    double s = oracle_tr_element(mm.u, mm.v, mm.w, x.i, x.j, x.k);
    if (cfg.bias_enabled) s += sum_bias(mm.d, mm.e, mm.f, x);
    return s;
  };
  const auto predictions = [&](const TrModel& mm) {
    std::vector<double> out;
    for (EntryPos p : train) out.push_back(yhat(mm, t[p]));
    return out;
  };

  // U: d yhat / d u(r3,i,r1) = sum_r2 v(r1,j,r2) w(r2,k,r3)
  {
    const auto yh = predictions(m);
    TrModel next = m;
    for (std::size_t i = 0; i < m.dims.i; ++i) {
      for (std::size_t r3 = 0; r3 < R; ++r3) {
        for (std::size_t r1 = 0; r1 < R; ++r1) {
          double num = 0.0, den = 0.0;
          for (std::size_t q = 0; q < train.size(); ++q) {
            const Entry& x = t[train[q]];
            if (x.i != i) continue;
            double coef = 0.0;
            for (std::size_t r2 = 0; r2 < R; ++r2) coef += m.v.at(r1, x.j, r2) * m.w.at(r2, x.k, r3);
            num += x.y * coef;
            den += yh[q] * coef + l1 * m.u.at(r3, i, r1);
          }
          if (num > 0.0) next.u.at(r3, i, r1) = m.u.at(r3, i, r1) * num / (den + cfg.eps);
          if (!std::isfinite(next.u.at(r3, i, r1))) oracle_non_finite("U");
        }
      }
    }
    m = std::move(next);
  }
  // V: d yhat / d v(r1,j,r2) = sum_r3 w(r2,k,r3) u(r3,i,r1)
  {
    const auto yh = predictions(m);
    TrModel next = m;
    for (std::size_t j = 0; j < m.dims.j; ++j) {
      for (std::size_t r1 = 0; r1 < R; ++r1) {
        for (std::size_t r2 = 0; r2 < R; ++r2) {
          double num = 0.0, den = 0.0;
          for (std::size_t q = 0; q < train.size(); ++q) {
            const Entry& x = t[train[q]];
            if (x.j != j) continue;
            double coef = 0.0;
            for (std::size_t r3 = 0; r3 < R; ++r3) coef += m.w.at(r2, x.k, r3) * m.u.at(r3, x.i, r1);
            num += x.y * coef;
            den += yh[q] * coef + l1 * m.v.at(r1, j, r2);
          }
          if (num > 0.0) next.v.at(r1, j, r2) = m.v.at(r1, j, r2) * num / (den + cfg.eps);
          if (!std::isfinite(next.v.at(r1, j, r2))) oracle_non_finite("V");
        }
      }
    }
    m = std::move(next);
  }
  // W: d yhat / d w(r2,k,r3) = sum_r1 u(r3,i,r1) v(r1,j,r2)
  {
    const auto yh = predictions(m);
    TrModel next = m;
    for (std::size_t k = 0; k < m.dims.k; ++k) {
      for (std::size_t r2 = 0; r2 < R; ++r2) {
        for (std::size_t r3 = 0; r3 < R; ++r3) {
          double num = 0.0, den = 0.0;
          for (std::size_t q = 0; q < train.size(); ++q) {
            const Entry& x = t[train[q]];
            if (x.k != k) continue;
            double coef = 0.0;
            for (std::size_t r1 = 0; r1 < R; ++r1) coef += m.u.at(r3, x.i, r1) * m.v.at(r1, x.j, r2);
            num += x.y * coef;
            den += yh[q] * coef + l1 * m.w.at(r2, k, r3);
          }
          if (num > 0.0) next.w.at(r2, k, r3) = m.w.at(r2, k, r3) * num / (den + cfg.eps);
          if (!std::isfinite(next.w.at(r2, k, r3))) oracle_non_finite("W");
        }
      }
    }
    m = std::move(next);
  }
  if (!cfg.bias_enabled) return m;

  // D, E, F: d yhat / d d_ir = e_jr f_kr, and cyclically.
  {
    const auto yh = predictions(m);
    TrModel next = m;
    for (std::size_t i = 0; i < m.dims.i; ++i) {
      for (std::size_t r = 0; r < R; ++r) {
        double num = 0.0, den = 0.0;
        for (std::size_t q = 0; q < train.size(); ++q) {
          const Entry& x = t[train[q]];
          if (x.i != i) continue;
          const double coef = m.e.at(x.j, r) * m.f.at(x.k, r);
          num += x.y * coef;
          den += yh[q] * coef + l2 * m.d.at(i, r);
        }
        if (num > 0.0) next.d.at(i, r) = m.d.at(i, r) * num / (den + cfg.eps);
        if (!std::isfinite(next.d.at(i, r))) oracle_non_finite("D");
      }
    }
    m = std::move(next);
  }
  {
    const auto yh = predictions(m);
    TrModel next = m;
    for (std::size_t j = 0; j < m.dims.j; ++j) {
      for (std::size_t r = 0; r < R; ++r) {
        double num = 0.0, den = 0.0;
        for (std::size_t q = 0; q < train.size(); ++q) {
          const Entry& x = t[train[q]];
          if (x.j != j) continue;
          const double coef = m.f.at(x.k, r) * m.d.at(x.i, r);
          num += x.y * coef;
          den += yh[q] * coef + l2 * m.e.at(j, r);
        }
        if (num > 0.0) next.e.at(j, r) = m.e.at(j, r) * num / (den + cfg.eps);
        if (!std::isfinite(next.e.at(j, r))) oracle_non_finite("E");
      }
    }
    m = std::move(next);
  }
  {
    const auto yh = predictions(m);
    TrModel next = m;
    for (std::size_t k = 0; k < m.dims.k; ++k) {
      for (std::size_t r = 0; r < R; ++r) {
        double num = 0.0, den = 0.0;
        for (std::size_t q = 0; q < train.size(); ++q) {
          const Entry& x = t[train[q]];
          if (x.k != k) continue;
          const double coef = m.d.at(x.i, r) * m.e.at(x.j, r);
          num += x.y * coef;
          den += yh[q] * coef + l2 * m.f.at(k, r);
        }
        if (num > 0.0) next.f.at(k, r) = m.f.at(k, r) * num / (den + cfg.eps);
        if (!std::isfinite(next.f.at(k, r))) oracle_non_finite("F");
      }
    }
    m = std::move(next);
  }
  return m;
}

CpModel oracle_epoch(CpModel m, const SparseTensor& t, std::span<const EntryPos> train, const TrainConfig& cfg) {
  check_train(t, train);
  const std::size_t R = m.rank;

  const auto yhat = [&](const CpModel& mm, const Entry& x) {
    double s = oracle_cp_element(mm.u, mm.v, mm.w, x.i, x.j, x.k);
    if (cfg.bias_enabled) s += sum_bias(mm.d, mm.e, mm.f, x);
    return s;
  };

  // The coefficient of x(n, r) is the product of the other two modes' entries at r.
  const auto run_block = [&](BiasMatrix CpModel::*target, BiasMatrix CpModel::*other_a,
                             BiasMatrix CpModel::*other_b, int mode, double lambda, const char* name) {
    std::vector<double> yh;
    for (EntryPos p : train) yh.push_back(yhat(m, t[p]));
    CpModel next = m;
    const BiasMatrix& x_old = m.*target;
    for (std::size_t n = 0; n < x_old.mode_size(); ++n) {
      for (std::size_t r = 0; r < R; ++r) {
        double num = 0.0, den = 0.0;
        for (std::size_t q = 0; q < train.size(); ++q) {
          const Entry& x = t[train[q]];
          const std::size_t own = mode == 0 ? x.i : (mode == 1 ? x.j : x.k);
          if (own != n) continue;
          const std::size_t ia = mode == 0 ? x.j : (mode == 1 ? x.k : x.i);
          const std::size_t ib = mode == 0 ? x.k : (mode == 1 ? x.i : x.j);
          const double coef = (m.*other_a).at(ia, r) * (m.*other_b).at(ib, r);
          num += x.y * coef;
          den += yh[q] * coef + lambda * x_old.at(n, r);
        }
        if (num > 0.0) (next.*target).at(n, r) = x_old.at(n, r) * num / (den + cfg.eps);
        if (!std::isfinite((next.*target).at(n, r))) oracle_non_finite(name);
      }
    }
    m = std::move(next);
  };

  run_block(&CpModel::u, &CpModel::v, &CpModel::w, 0, cfg.lambda1, "U");
  run_block(&CpModel::v, &CpModel::w, &CpModel::u, 1, cfg.lambda1, "V");
  run_block(&CpModel::w, &CpModel::u, &CpModel::v, 2, cfg.lambda1, "W");
  if (cfg.bias_enabled) {
    run_block(&CpModel::d, &CpModel::e, &CpModel::f, 0, cfg.lambda2, "D");
    run_block(&CpModel::e, &CpModel::f, &CpModel::d, 1, cfg.lambda2, "E");
    run_block(&CpModel::f, &CpModel::d, &CpModel::e, 2, cfg.lambda2, "F");
  }
  return m;
}

}  // namespace trlb
