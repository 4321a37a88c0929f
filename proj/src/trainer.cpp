#include "trlb/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <array>
#include <sstream>
#include <thread>

#include "trlb/errors.hpp"
#include "trlb/metrics.hpp"

namespace trlb {

std::vector<std::string> TrainConfig::problems() const {
  std::vector<std::string> out;
  if (rank < 1) out.emplace_back("rank must be >= 1");
  if (!(lambda1 >= 0.0) || !std::isfinite(lambda1)) out.emplace_back("lambda1 must be a finite value >= 0");
  if (!(lambda2 >= 0.0) || !std::isfinite(lambda2)) out.emplace_back("lambda2 must be a finite value >= 0");
  if (max_epochs < 1) out.emplace_back("epochs must be >= 1");
  if (!(min_delta >= 0.0) || !std::isfinite(min_delta)) out.emplace_back("min_delta must be a finite value >= 0");
  if (!(eps > 0.0) || !std::isfinite(eps)) out.emplace_back("eps must be a finite value > 0");
  if (!(init_lo > 0.0) || !(init_lo < init_hi) || !std::isfinite(init_hi)) {
    out.emplace_back("initialization range must satisfy 0 < init_lo < init_hi");
  }
  if (threads < 1) out.emplace_back("threads must be >= 1");
  return out;
}

void TrainConfig::validate() const {
  const auto errs = problems();
  if (errs.empty()) return;
  std::string msg = "invalid training configuration:";
  for (const auto& e : errs) msg += "\n  - " + e;
  throw DomainError(msg);
}

namespace {

constexpr Mode next_mode(Mode m) { return m == Mode::I ? Mode::J : (m == Mode::J ? Mode::K : Mode::I); }

// Training positions grouped by slice for each mode, ascending within a slice.
struct SliceLists {
  std::vector<std::size_t> offsets;
  std::vector<EntryPos> positions;

  std::size_t count() const { return offsets.size() - 1; }
  std::span<const EntryPos> slice(std::size_t n) const {
    return std::span<const EntryPos>(positions).subspan(offsets[n], offsets[n + 1] - offsets[n]);
  }
};

struct Plan {
  std::array<SliceLists, 3> modes;
  std::vector<EntryPos> train;  // ascending

  const SliceLists& lists(Mode m) const { return modes[static_cast<std::size_t>(m)]; }
};

Plan make_plan(const SparseTensor& t, std::span<const EntryPos> train) {
  std::vector<bool> member(t.size(), false);
  for (EntryPos p : train) {
    if (p >= t.size()) throw DomainError("training position " + std::to_string(p) + " out of range");
    if (member[p]) throw DomainError("training position " + std::to_string(p) + " listed twice");
    member[p] = true;
  }
  Plan plan;
  for (EntryPos p = 0; p < t.size(); ++p) {
    if (member[p]) plan.train.push_back(p);
  }
  for (Mode m : kModes) {
    SliceLists& sl = plan.modes[static_cast<std::size_t>(m)];
    const std::size_t extent = t.dims()[m];
    sl.offsets.assign(extent + 1, 0);
    sl.positions.reserve(plan.train.size());
    for (std::size_t n = 0; n < extent; ++n) {
      for (EntryPos p : t.slice(m, n)) {
        if (member[p]) sl.positions.push_back(p);
      }
      sl.offsets[n + 1] = sl.positions.size();
    }
  }
  return plan;
}

// Runs fn(begin, end) over contiguous chunks of [0, n). Chunks never share a
// slice and each slice is reduced in entry order, so the result does not
// depend on the worker count.
template <class Fn>
void parallel_chunks(std::size_t n, std::size_t threads, Fn&& fn) {
  const std::size_t workers = std::min(threads, n / 8 + 1);
  if (workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  const auto run = [&](std::size_t w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    try {
      fn(begin, end);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run, w);
  run(0);
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

[[noreturn]] void report_non_finite(const char* block, Mode mode, std::size_t slice) {
  std::ostringstream msg;
  msg << "non-finite parameter produced in block " << block << " (mode " << mode_name(mode) << ", slice " << slice
      << ")";
  throw NumericError(msg.str(), 0);
}

// Multiplicative rule applied to a block of parameters; keeps parameters whose
// numerator vanished.
bool apply_ratio(std::span<double> x, std::span<const double> num, std::span<const double> den, double eps) {
  bool finite = true;
  for (std::size_t a = 0; a < x.size(); ++a) {
    if (num[a] > 0.0) x[a] = x[a] * num[a] / (den[a] + eps);
    finite = finite && std::isfinite(x[a]);
  }
  return finite;
}

template <class Model>
double bias_of(const Model& m, const Entry& e) {
  return kernels::triple_dot(m.d.row(e.i), m.e.row(e.j), m.f.row(e.k));
}

// Core block of the tensor-ring model for `mode`. With X the slice being
// updated and A, B the next two slices around the ring, yhat = tr(X A B) and
// d yhat / d X[row][col] = (A B)[col][row].
void update_tr_core(TrModel& m, const SparseTensor& t, const Plan& plan, Mode mode, const TrainConfig& cfg) {
  const std::size_t r = m.rank;
  const Mode ma = next_mode(mode);
  const Mode mb = next_mode(ma);
  CoreTensor& target = m.core(mode);
  const CoreTensor& ca = m.core(ma);
  const CoreTensor& cb = m.core(mb);
  const SliceLists& lists = plan.lists(mode);
  const TrModel& model = m;

  parallel_chunks(lists.count(), cfg.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> prod(r * r), num(r * r), den(r * r);
    for (std::size_t n = begin; n < end; ++n) {
      const auto entries = lists.slice(n);
      if (entries.empty()) continue;
      std::fill(num.begin(), num.end(), 0.0);
      std::fill(den.begin(), den.end(), 0.0);
      const std::span<double> x = target.slice(n);
      for (EntryPos p : entries) {
        const Entry& e = t[p];
        kernels::matmul(ca.slice(e.index(ma)), cb.slice(e.index(mb)), prod, r);
        double yhat = kernels::trace_of_product(x, prod, r);
        if (cfg.bias_enabled) yhat += bias_of(model, e);
        for (std::size_t row = 0; row < r; ++row) {
          for (std::size_t col = 0; col < r; ++col) {
            const double c = prod[col * r + row];
            num[row * r + col] += e.y * c;
            den[row * r + col] += yhat * c + cfg.lambda1 * x[row * r + col];
          }
        }
      }
      if (!apply_ratio(x, num, den, cfg.eps)) report_non_finite("core", mode, n);
    }
  });
}

// Row-wise block shared by the bias matrices of both families and the CP
// factors: yhat is supplied by the caller and d yhat / d x_r = a_r * b_r with
// a, b the rows of the other two modes.
template <class Yhat>
void update_rows(BiasMatrix& target, const BiasMatrix& fa, const BiasMatrix& fb, const SparseTensor& t,
                 const SliceLists& lists, Mode mode, double lambda, const TrainConfig& cfg, const char* block,
                 const Yhat& yhat_of) {
  const std::size_t r = target.rank();
  const Mode ma = next_mode(mode);
  const Mode mb = next_mode(ma);
  parallel_chunks(lists.count(), cfg.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> num(r), den(r);
    for (std::size_t n = begin; n < end; ++n) {
      const auto entries = lists.slice(n);
      if (entries.empty()) continue;
      std::fill(num.begin(), num.end(), 0.0);
      std::fill(den.begin(), den.end(), 0.0);
      const std::span<double> x = target.row(n);
      for (EntryPos p : entries) {
        const Entry& e = t[p];
        const auto a = fa.row(e.index(ma));
        const auto b = fb.row(e.index(mb));
        const double yhat = yhat_of(p, e);
        for (std::size_t q = 0; q < r; ++q) {
          const double c = a[q] * b[q];
          num[q] += e.y * c;
          den[q] += yhat * c + lambda * x[q];
        }
      }
      if (!apply_ratio(x, num, den, cfg.eps)) report_non_finite(block, mode, n);
    }
  });
}

template <class Model>
void update_bias_blocks(Model& m, const SparseTensor& t, const Plan& plan, const TrainConfig& cfg,
                        const std::vector<double>& core) {
  for (Mode mode : kModes) {
    const Mode ma = next_mode(mode);
    const Mode mb = next_mode(ma);
    const Model& model = m;
    update_rows(m.bias(mode), model.bias(ma), model.bias(mb), t, plan.lists(mode), mode, cfg.lambda2, cfg, "bias",
                [&](EntryPos p, const Entry& e) {
                  return core[p] + bias_of(model, e);
                });
  }
}

void run_epoch(TrModel& m, const SparseTensor& t, const Plan& plan, const TrainConfig& cfg) {
  for (Mode mode : kModes) update_tr_core(m, t, plan, mode, cfg);
  if (!cfg.bias_enabled) return;
  const std::size_t r = m.rank;
  std::vector<double> core(t.size(), 0.0);
  parallel_chunks(plan.train.size(), cfg.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> uv(r * r);
    for (std::size_t q = begin; q < end; ++q) {
      const Entry& e = t[plan.train[q]];
      kernels::matmul(m.u.slice(e.i), m.v.slice(e.j), uv, r);
      core[plan.train[q]] = kernels::trace_of_product(uv, m.w.slice(e.k), r);
    }
  });
  update_bias_blocks(m, t, plan, cfg, core);
}

void run_epoch(CpModel& m, const SparseTensor& t, const Plan& plan, const TrainConfig& cfg) {
  for (Mode mode : kModes) {
    const Mode ma = next_mode(mode);
    const Mode mb = next_mode(ma);
    const CpModel& model = m;
    update_rows(m.factor(mode), model.factor(ma), model.factor(mb), t, plan.lists(mode), mode, cfg.lambda1, cfg,
                "core", [&](EntryPos, const Entry& e) {
                  double yhat = kernels::triple_dot(model.u.row(e.i), model.v.row(e.j), model.w.row(e.k));
                  if (cfg.bias_enabled) yhat += bias_of(model, e);
                  return yhat;
                });
  }
  if (!cfg.bias_enabled) return;
  std::vector<double> core(t.size(), 0.0);
  for (EntryPos p : plan.train) {
    const Entry& e = t[p];
    core[p] = kernels::triple_dot(m.u.row(e.i), m.v.row(e.j), m.w.row(e.k));
  }
  update_bias_blocks(m, t, plan, cfg, core);
}

void check_model_against(const Dims& model_dims, const SparseTensor& t) {
  if (!(model_dims == t.dims())) throw DomainError("model extents do not match the tensor");
}

template <class Norm>
std::vector<double> squared_norms(std::size_t count, const Norm& norm_of) {
  std::vector<double> out(count);
  for (std::size_t n = 0; n < count; ++n) {
    double s = 0.0;
    for (double x : norm_of(n)) s += x * x;
    out[n] = s;
  }
  return out;
}

template <class Model, class CoreFactor, class CoreFn>
double objective_impl(const Model& m, const SparseTensor& t, std::span<const EntryPos> subset, const TrainConfig& cfg,
                      const CoreFactor& core_factor, const CoreFn& core_of) {
  if (subset.empty()) throw DomainError("objective needs a non-empty subset");
  check_model_against(m.dims, t);
  std::array<std::vector<double>, 3> core_sq, bias_sq;
  for (Mode mode : kModes) {
    const auto idx = static_cast<std::size_t>(mode);
    core_sq[idx] = squared_norms(m.dims[mode], [&](std::size_t n) { return core_factor(mode, n); });
    bias_sq[idx] = squared_norms(m.dims[mode], [&](std::size_t n) { return m.bias(mode).row(n); });
  }
  double total = 0.0;
  for (EntryPos p : subset) {
    if (p >= t.size()) throw DomainError("position " + std::to_string(p) + " out of range");
    const Entry& e = t[p];
    double yhat = core_of(e);
    double reg = cfg.lambda1 * (core_sq[0][e.i] + core_sq[1][e.j] + core_sq[2][e.k]);
    if (cfg.bias_enabled) {
      yhat += bias_of(m, e);
      reg += cfg.lambda2 * (bias_sq[0][e.i] + bias_sq[1][e.j] + bias_sq[2][e.k]);
    }
    const double res = e.y - yhat;
    total += res * res + reg;
  }
  return total;
}

template <class Model>
TrainResult<Model> train_loop(const SparseTensor& t, const Split& split, const TrainConfig& cfg, Model model,
                              const EpochCallback& on_epoch) {
  cfg.validate();
  if (split.train.empty()) throw DomainError("training subset is empty");
  if (split.val.empty()) throw DomainError("validation subset is empty");
  if (split.total() != t.size()) throw DomainError("split does not cover the tensor's entries");
  model.check_shapes();
  check_model_against(model.dims, t);
  if (model.rank != cfg.rank) throw DomainError("initial model rank differs from the configured rank");
  if (!cfg.bias_enabled) {
    for (Mode mode : kModes) std::ranges::fill(model.bias(mode).data(), 0.0);
  }

  const Plan plan = make_plan(t, split.train);
  const auto start = std::chrono::steady_clock::now();
  const auto stats_for = [&](std::size_t epoch) {
    EpochStats s;
    s.epoch = epoch;
    s.objective = objective(model, t, split.train, cfg);
    s.train_rmse = evaluate(model, t, split.train).rmse;
    const MetricsReport val = evaluate(model, t, split.val);
    s.val_rmse = val.rmse;
    s.val_mae = val.mae;
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return s;
  };

  TrainResult<Model> result;
  result.stats.push_back(stats_for(0));
  if (on_epoch) on_epoch(result.stats.back());
  result.model = model;
  double best_val = result.stats.back().val_rmse;
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    try {
      run_epoch(model, t, plan, cfg);
    } catch (NumericError& err) {
      err.set_epoch(epoch);
      throw;
    }
    result.stats.push_back(stats_for(epoch));
    const EpochStats& s = result.stats.back();
    if (on_epoch) on_epoch(s);
    if (!std::isfinite(s.objective) || !std::isfinite(s.val_rmse)) {
      throw NumericError("non-finite objective or validation RMSE", epoch);
    }
    if (s.val_rmse < best_val - cfg.min_delta) {
      best_val = s.val_rmse;
      result.model = model;
      result.best_epoch = epoch;
      stale = 0;
    } else {
      ++stale;
      if (cfg.patience > 0 && stale >= cfg.patience) {
        result.stopped_early = true;
        break;
      }
    }
  }
  return result;
}

}  // namespace

double objective(const TrModel& m, const SparseTensor& t, std::span<const EntryPos> subset, const TrainConfig& cfg) {
  std::vector<double> uv(m.rank * m.rank);
  return objective_impl(
      m, t, subset, cfg, [&](Mode mode, std::size_t n) { return m.core(mode).slice(n); },
      [&](const Entry& e) {
        kernels::matmul(m.u.slice(e.i), m.v.slice(e.j), uv, m.rank);
        return kernels::trace_of_product(uv, m.w.slice(e.k), m.rank);
      });
}

double objective(const CpModel& m, const SparseTensor& t, std::span<const EntryPos> subset, const TrainConfig& cfg) {
  return objective_impl(
      m, t, subset, cfg, [&](Mode mode, std::size_t n) { return m.factor(mode).row(n); },
      [&](const Entry& e) { return kernels::triple_dot(m.u.row(e.i), m.v.row(e.j), m.w.row(e.k)); });
}

void epoch_update(TrModel& m, const SparseTensor& t, std::span<const EntryPos> train, const TrainConfig& cfg) {
  cfg.validate();
  m.check_shapes();
  check_model_against(m.dims, t);
  run_epoch(m, t, make_plan(t, train), cfg);
}

void epoch_update(CpModel& m, const SparseTensor& t, std::span<const EntryPos> train, const TrainConfig& cfg) {
  cfg.validate();
  m.check_shapes();
  check_model_against(m.dims, t);
  run_epoch(m, t, make_plan(t, train), cfg);
}

TrainResult<TrModel> train(const SparseTensor& t, const Split& split, const TrainConfig& cfg,
                           const EpochCallback& on_epoch) {
  cfg.validate();
  return train(t, split, cfg, init_model(t.dims(), cfg.rank, cfg.seed, cfg.init_lo, cfg.init_hi), on_epoch);
}

TrainResult<TrModel> train(const SparseTensor& t, const Split& split, const TrainConfig& cfg, TrModel initial,
                           const EpochCallback& on_epoch) {
  return train_loop(t, split, cfg, std::move(initial), on_epoch);
}

TrainResult<CpModel> train_cp_baseline(const SparseTensor& t, const Split& split, const TrainConfig& cfg,
                                       const EpochCallback& on_epoch) {
  cfg.validate();
  return train_cp_baseline(t, split, cfg, init_cp_model(t.dims(), cfg.rank, cfg.seed, cfg.init_lo, cfg.init_hi),
                           on_epoch);
}

TrainResult<CpModel> train_cp_baseline(const SparseTensor& t, const Split& split, const TrainConfig& cfg,
                                       CpModel initial, const EpochCallback& on_epoch) {
  return train_loop(t, split, cfg, std::move(initial), on_epoch);
}

}  // namespace trlb
