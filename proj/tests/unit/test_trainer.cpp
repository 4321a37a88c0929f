#include <doctest.h>

#include <limits>

#include "test_support.hpp"
#include "trlb/errors.hpp"
#include "trlb/metrics.hpp"
#include "trlb/split.hpp"
#include "trlb/synth.hpp"
#include "trlb/trainer.hpp"

using namespace trlb;

namespace {

// Objective written out term by term with explicit index loops.
double naive_objective(const TrModel& m, const SparseTensor& t, std::span<const EntryPos> subset, double l1,
                       double l2) {
  const std::size_t r = m.rank;
  double total = 0.0;
  for (EntryPos p : subset) {
    const Entry& e = t[p];
    double core = 0.0, bias = 0.0, reg_core = 0.0, reg_bias = 0.0;
    for (std::size_t r1 = 0; r1 < r; ++r1)
      for (std::size_t r2 = 0; r2 < r; ++r2)
        for (std::size_t r3 = 0; r3 < r; ++r3) core += m.u.at(r3, e.i, r1) * m.v.at(r1, e.j, r2) * m.w.at(r2, e.k, r3);
    for (std::size_t a = 0; a < r; ++a) {
      bias += m.d.at(e.i, a) * m.e.at(e.j, a) * m.f.at(e.k, a);
      reg_bias += m.d.at(e.i, a) * m.d.at(e.i, a) + m.e.at(e.j, a) * m.e.at(e.j, a) + m.f.at(e.k, a) * m.f.at(e.k, a);
      for (std::size_t b = 0; b < r; ++b) {
        reg_core += m.u.at(a, e.i, b) * m.u.at(a, e.i, b) + m.v.at(a, e.j, b) * m.v.at(a, e.j, b) +
                    m.w.at(a, e.k, b) * m.w.at(a, e.k, b);
      }
    }
    const double res = e.y - core - bias;
    total += res * res + l1 * reg_core + l2 * reg_bias;
  }
  return total;
}

TrainConfig config(std::size_t rank, double l1, double l2, bool bias = true) {
  TrainConfig cfg;
  cfg.rank = rank;
  cfg.lambda1 = l1;
  cfg.lambda2 = l2;
  cfg.bias_enabled = bias;
  return cfg;
}

// Tensor whose weights equal the model's own predictions.
SparseTensor consistent_tensor(const TrModel& m, std::size_t count, std::uint64_t seed) {
  SparseTensor cells = test::random_tensor(m.dims, count, seed);
  std::vector<Entry> entries(cells.entries().begin(), cells.entries().end());
  for (Entry& e : entries) e.y = predict(m, e.i, e.j, e.k);
  return SparseTensor(m.dims, std::move(entries));
}

}  // namespace

TEST_CASE("objective of a perfect model is zero and of a zero model is sum of squares") {
  const TrModel m = test::random_tr_model({3, 3, 2}, 2, 4);
  const SparseTensor t = consistent_tensor(m, 12, 2);
  const auto all = test::all_positions(t);
  CHECK(objective(m, t, all, config(2, 0.0, 0.0)) <= 1e-24);

  const TrModel zero = TrModel::zeros({3, 3, 2}, 2);
  double sum_sq = 0.0;
  for (const Entry& e : t.entries()) sum_sq += e.y * e.y;
  CHECK(objective(zero, t, all, config(2, 0.5, 0.5)) == sum_sq);
  CHECK_THROWS_AS(objective(m, t, std::vector<EntryPos>{}, config(2, 0, 0)), DomainError);
}

TEST_CASE("objective matches the naive scalar-loop evaluation") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const Dims dims{5, 4, 3};
    const std::size_t rank = 1 + seed % 4;
    const TrModel m = test::random_tr_model(dims, rank, seed);
    const SparseTensor t = test::random_tensor(dims, 30, seed + 50);
    const auto all = test::all_positions(t);
    const double expected = naive_objective(m, t, all, 0.3, 0.7);
    CHECK(std::abs(objective(m, t, all, config(rank, 0.3, 0.7)) - expected) <= 1e-10 * std::max(1.0, expected));
  }
}

TEST_CASE("single entry: update is u * y / yhat and fixed when yhat == y") {
  TrModel m = test::random_tr_model({1, 1, 1}, 1, 3);
  const double yhat = predict(m, 0, 0, 0);
  const double u0 = m.u.data()[0];
  const SparseTensor t({1, 1, 1}, {{0, 0, 0, 2.0 * yhat}});
  TrainConfig cfg = config(1, 0.0, 0.0);
  cfg.eps = 1e-300;
  epoch_update(m, t, std::vector<EntryPos>{0}, cfg);
  CHECK(m.u.data()[0] == doctest::Approx(2.0 * u0).epsilon(1e-14));

  TrModel fixed = test::random_tr_model({1, 1, 1}, 1, 3);
  const SparseTensor same({1, 1, 1}, {{0, 0, 0, predict(fixed, 0, 0, 0)}});
  const TrModel before = fixed;
  epoch_update(fixed, same, std::vector<EntryPos>{0}, cfg);
  CHECK(test::max_abs_diff(fixed, before) <= 1e-15);
}

TEST_CASE("zero parameters stay zero") {
  const Dims dims{4, 4, 3};
  TrModel m = test::random_tr_model(dims, 3, 8);
  m.u.at(1, 2, 0) = 0.0;
  m.w.at(2, 1, 2) = 0.0;
  m.e.at(3, 1) = 0.0;
  const SparseTensor t = test::random_tensor(dims, 30, 3);
  for (int epoch = 0; epoch < 5; ++epoch) epoch_update(m, t, test::all_positions(t), config(3, 0.01, 0.01));
  CHECK(m.u.at(1, 2, 0) == 0.0);
  CHECK(m.w.at(2, 1, 2) == 0.0);
  CHECK(m.e.at(3, 1) == 0.0);
}

TEST_CASE("one epoch on a dense 2x2x2 tensor matches the scalar-loop reference") {
  const Dims dims{2, 2, 2};
  const SparseTensor t = test::dense_tensor(dims, 77);
  for (bool bias : {true, false}) {
    const TrainConfig cfg = config(2, 0.05, 0.02, bias);
    TrModel fast = test::random_tr_model(dims, 2, 31);
    const TrModel expected = oracle_epoch(fast, t, test::all_positions(t), cfg);
    epoch_update(fast, t, test::all_positions(t), cfg);
    CHECK(test::max_abs_diff(fast, expected) <= 1e-10);
    CHECK_FALSE(test::max_abs_diff(fast, test::random_tr_model(dims, 2, 31)) == 0.0);
  }
}

TEST_CASE("epoch_update matches the reference on random small instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    const Dims dims{1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4)};
    const std::size_t rank = 1 + rng.below(4);
    const std::size_t count = 1 + rng.below(std::min<std::size_t>(dims.cells(), 64));
    const SparseTensor t = test::random_tensor(dims, count, 1000 + trial);
    std::vector<EntryPos> train;
    for (EntryPos p = 0; p < t.size(); ++p) {
      if (rng.uniform() < 0.8) train.push_back(p);
    }
    if (train.empty()) train.push_back(0);
    rng.shuffle(train.begin(), train.end());
    const TrainConfig cfg = config(rank, rng.uniform(0.0, 0.2), rng.uniform(0.0, 0.2), trial % 3 != 0);
    TrModel fast = test::random_tr_model(dims, rank, 500 + trial);
    const TrModel expected = oracle_epoch(fast, t, train, cfg);
    epoch_update(fast, t, train, cfg);
    CHECK(test::max_abs_diff(fast, expected) <= 1e-10);
  }
}

TEST_CASE("slices without training entries keep their values") {
  const Dims dims{3, 2, 2};
  TrModel m = test::random_tr_model(dims, 2, 6);
  const TrModel before = m;
  // Observations only in i = 0 and i = 1.
  const SparseTensor t(dims, {{0, 0, 0, 1.0}, {0, 1, 1, 2.0}, {1, 0, 1, 3.0}});
  epoch_update(m, t, test::all_positions(t), config(2, 0.1, 0.1));
  for (std::size_t q = 0; q < 4; ++q) CHECK(m.u.slice(2)[q] == before.u.slice(2)[q]);
  CHECK(m.d.row(2)[0] == before.d.row(2)[0]);
  CHECK(m.d.row(2)[1] == before.d.row(2)[1]);
}

TEST_CASE("a model that reproduces its data is a fixed point") {
  const Dims dims{5, 4, 3};
  // Parameters of order one keep the denominator guard far below 1e-12.
  TrModel m = test::random_tr_model(dims, 3, 12, 0.5, 1.5);
  const SparseTensor t = consistent_tensor(m, 40, 9);
  const TrModel before = m;
  epoch_update(m, t, test::all_positions(t), config(3, 0.0, 0.0));
  CHECK(test::max_abs_diff(m, before) <= 1e-12);
}

TEST_CASE("thread count does not change the result") {
  SynthSpec spec;
  spec.dims = {30, 25, 12};
  spec.density = 0.2;
  spec.true_rank = 3;
  spec.seed = 4;
  const SparseTensor t = generate(spec).tensor;
  const Split s = split(t, 1);
  TrainConfig cfg = config(3, 1e-3, 1e-3);
  TrModel a = init_model(t.dims(), 3, 5);
  TrModel b = a;
  for (int epoch = 0; epoch < 3; ++epoch) {
    cfg.threads = 1;
    epoch_update(a, t, s.train, cfg);
    cfg.threads = 4;
    epoch_update(b, t, s.train, cfg);
  }
  CHECK(a == b);
}

TEST_CASE("non-finite updates abort with a numeric error") {
  const Dims dims{2, 2, 1};
  TrModel m = test::random_tr_model(dims, 1, 1);
  const SparseTensor t(dims, {{0, 0, 0, std::numeric_limits<double>::max()}, {1, 1, 0, 1.0}});
  CHECK_THROWS_AS(epoch_update(m, t, test::all_positions(t), config(1, 0.0, 0.0)), NumericError);
}

TEST_CASE("invalid configurations are reported all at once") {
  TrainConfig cfg;
  cfg.rank = 0;
  cfg.lambda1 = -1.0;
  cfg.eps = 0.0;
  cfg.max_epochs = 0;
  CHECK(cfg.problems().size() == 4);
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  CHECK(TrainConfig{}.problems().empty());
}

TEST_CASE("train runs the full budget without patience and is deterministic") {
  SynthSpec spec;
  spec.dims = {12, 12, 6};
  spec.density = 0.3;
  spec.true_rank = 2;
  spec.seed = 21;
  const SparseTensor t = generate(spec).tensor;
  const Split s = split(t, 3);
  TrainConfig cfg = config(2, 1e-4, 1e-4);
  cfg.max_epochs = 15;
  cfg.patience = 0;
  const auto a = train(t, s, cfg);
  const auto b = train(t, s, cfg);
  REQUIRE(a.stats.size() == 16);
  CHECK(a.stats.front().epoch == 0);
  CHECK(a.stats.back().epoch == 15);
  CHECK_FALSE(a.stopped_early);
  CHECK(a.model == b.model);
  for (std::size_t q = 0; q < a.stats.size(); ++q) {
    CHECK(a.stats[q].objective == b.stats[q].objective);
    CHECK(a.stats[q].val_rmse == b.stats[q].val_rmse);
    CHECK(a.stats[q].objective >= 0.0);
  }
  // The returned snapshot is the best validation epoch.
  double best = a.stats.front().val_rmse;
  for (const auto& st : a.stats) best = std::min(best, st.val_rmse);
  CHECK(a.stats[a.best_epoch].val_rmse == best);
  CHECK(evaluate(a.model, t, s.val).rmse == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("early stopping triggers after `patience` stale epochs") {
  SynthSpec spec;
  spec.dims = {10, 10, 5};
  spec.density = 0.4;
  spec.seed = 2;
  const SparseTensor t = generate(spec).tensor;
  const Split s = split(t, 3);
  TrainConfig cfg = config(2, 1e-4, 1e-4);
  cfg.max_epochs = 100;
  cfg.patience = 2;
  cfg.min_delta = 1e9;  // nothing counts as an improvement
  const auto r = train(t, s, cfg);
  CHECK(r.stopped_early);
  CHECK(r.stats.back().epoch == 2);
  CHECK(r.best_epoch == 0);
}

TEST_CASE("training rejects empty subsets") {
  const SparseTensor t = test::random_tensor({4, 4, 4}, 20, 1);
  Split s = split(t, 1);
  s.test.insert(s.test.end(), s.train.begin(), s.train.end());
  s.train.clear();
  CHECK_THROWS_AS(train(t, s, config(2, 0, 0)), DomainError);
}

TEST_CASE("bias-disabled training keeps D, E, F at zero") {
  SynthSpec spec;
  spec.dims = {10, 8, 5};
  spec.density = 0.3;
  spec.seed = 6;
  const SparseTensor t = generate(spec).tensor;
  TrainConfig cfg = config(2, 1e-3, 1e-3, false);
  cfg.max_epochs = 20;
  const auto r = train(t, split(t, 2), cfg);
  for (Mode mode : kModes) {
    for (double x : r.model.bias(mode).data()) CHECK(x == 0.0);
  }
  CHECK(r.model.min_parameter() >= 0.0);
}

TEST_CASE("noiseless rank-2 data is fitted to 1% of the weight spread") {
  // Seeds calibrated once; multiplicative updates converge at init-dependent speed.
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SynthSpec spec;
    spec.dims = {20, 20, 10};
    spec.density = 0.3;
    spec.true_rank = 2;
    spec.seed = seed;
    const SparseTensor t = generate(spec).tensor;
    const Split s = split(t, seed);
    TrainConfig cfg = config(2, 1e-6, 1e-6);
    cfg.max_epochs = 2000;
    cfg.seed = seed;
    cfg.threads = 4;
    const auto r = train(t, s, cfg);
    const double train_rmse = evaluate(r.model, t, s.train).rmse;
    MESSAGE("seed " << seed << ": train RMSE " << train_rmse << " vs std(y) " << test::stddev(t));
    CHECK(train_rmse < 0.01 * test::stddev(t));
  }
}

TEST_CASE("objective decreases on synthetic data") {
  std::size_t transitions = 0, increases = 0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    SynthSpec spec;
    spec.dims = {15, 15, 8};
    spec.density = 0.05 + 0.05 * static_cast<double>(seed - 1);
    spec.true_rank = 2 + seed % 3;
    spec.noise_sigma = 0.2;
    spec.seed = seed;
    const SparseTensor t = generate(spec).tensor;
    TrainConfig cfg = config(spec.true_rank, 1e-3, 1e-3);
    cfg.max_epochs = 60;
    const auto r = train(t, split(t, seed), cfg);
    for (std::size_t q = 1; q < r.stats.size(); ++q) {
      ++transitions;
      if (r.stats[q].objective > r.stats[q - 1].objective) ++increases;
    }
    CHECK(r.stats.back().objective < 0.5 * r.stats.front().objective);
  }
  CHECK(static_cast<double>(increases) <= 0.05 * static_cast<double>(transitions));
}

TEST_CASE("larger lambda1 does not grow the core norm") {
  SynthSpec spec;
  spec.dims = {15, 12, 8};
  spec.density = 0.2;
  spec.true_rank = 3;
  spec.noise_sigma = 0.3;
  spec.seed = 19;
  const SparseTensor t = generate(spec).tensor;
  const Split s = split(t, 5);
  double previous = std::numeric_limits<double>::infinity();
  for (double l1 : {0.0, 0.05, 0.5}) {
    TrainConfig cfg = config(3, l1, 1e-3);
    cfg.max_epochs = 80;
    TrModel m = init_model(t.dims(), 3, 7);
    for (std::size_t e = 0; e < cfg.max_epochs; ++e) epoch_update(m, t, s.train, cfg);
    double norm = 0.0;
    for (Mode mode : kModes) {
      for (double x : m.core(mode).data()) norm += x * x;
    }
    norm = std::sqrt(norm);
    MESSAGE("lambda1 " << l1 << " -> ||U,V,W|| " << norm);
    CHECK(norm <= previous);
    previous = norm;
  }
}

TEST_CASE("parameters stay non-negative after every epoch") {
  SynthSpec spec;
  spec.dims = {20, 15, 10};
  spec.density = 0.1;
  spec.true_rank = 3;
  spec.noise_sigma = 1.0;
  spec.seed = 8;
  const SparseTensor t = generate(spec).tensor;
  const Split s = split(t, 8);
  const TrainConfig cfg = config(4, 1e-2, 1e-2);
  TrModel m = init_model(t.dims(), 4, 8);
  for (int epoch = 0; epoch < 50; ++epoch) {
    epoch_update(m, t, s.train, cfg);
    REQUIRE(m.min_parameter() >= 0.0);
  }
}
