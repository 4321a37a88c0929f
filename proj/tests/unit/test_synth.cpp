#include <doctest.h>

#include <set>

#include "test_support.hpp"
#include "trlb/errors.hpp"
#include "trlb/synth.hpp"

using namespace trlb;

TEST_CASE("oracle hand examples") {
  CoreTensor u(1, 1), v(1, 1), w(1, 1);
  u.at(0, 0, 0) = 2.0;
  v.at(0, 0, 0) = 3.0;
  w.at(0, 0, 0) = 0.5;
  CHECK(oracle_tr_element(u, v, w, 0, 0, 0) == 3.0);

  CoreTensor a(1, 2), b(1, 2), c(1, 2);
  for (std::size_t r = 0; r < 2; ++r) a.at(r, 0, r) = b.at(r, 0, r) = c.at(r, 0, r) = 1.0;
  CHECK(oracle_tr_element(a, b, c, 0, 0, 0) == 2.0);

  BiasMatrix d(1, 2), e(1, 2), f(1, 2);
  d.at(0, 0) = 1.0;
  d.at(0, 1) = 2.0;
  e.at(0, 0) = 3.0;
  e.at(0, 1) = 4.0;
  f.at(0, 0) = 5.0;
  f.at(0, 1) = 6.0;
  CHECK(oracle_bias_element(d, e, f, 0, 0, 0) == 63.0);
  CHECK(oracle_cp_element(d, e, f, 0, 0, 0) == 63.0);
}

TEST_CASE("oracles reject inconsistent shapes and indices") {
  CoreTensor u(2, 2), v(2, 3), w(2, 2);
  CHECK_THROWS_AS(oracle_tr_element(u, v, w, 0, 0, 0), DomainError);
  CHECK_THROWS_AS(oracle_tr_element(u, u, u, 2, 0, 0), DomainError);
  BiasMatrix d(2, 2), e(2, 1);
  CHECK_THROWS_AS(oracle_bias_element(d, e, d, 0, 0, 0), DomainError);
  CHECK_THROWS_AS(oracle_cp_element(d, d, d, 0, 5, 0), DomainError);
}

TEST_CASE("noiseless full-density data equals the oracle contraction exactly") {
  for (ModelFamily family : {ModelFamily::tr, ModelFamily::cp}) {
    SynthSpec spec;
    spec.dims = {4, 3, 5};
    spec.density = 1.0;
    spec.true_rank = 3;
    spec.family = family;
    const SynthData data = generate(spec);
    REQUIRE(data.tensor.size() == 60);
    for (const Entry& e : data.tensor.entries()) {
      double expected = 0.0;
      if (family == ModelFamily::tr) {
        const auto& m = std::get<TrModel>(data.truth);
        expected = oracle_tr_element(m.u, m.v, m.w, e.i, e.j, e.k);
      } else {
        const auto& m = std::get<CpModel>(data.truth);
        expected = oracle_cp_element(m.u, m.v, m.w, e.i, e.j, e.k);
      }
      CHECK(e.y == expected);
    }
  }
}

TEST_CASE("ground truth has zero bias and predicts the data") {
  SynthSpec spec;
  spec.dims = {6, 5, 4};
  spec.density = 0.5;
  spec.true_rank = 2;
  const SynthData data = generate(spec);
  const auto& m = std::get<TrModel>(data.truth);
  for (Mode mode : kModes) {
    for (double x : m.bias(mode).data()) CHECK(x == 0.0);
  }
  for (const Entry& e : data.tensor.entries()) CHECK(std::abs(predict(m, e.i, e.j, e.k) - e.y) <= 1e-12);
}

TEST_CASE("same seed gives identical tensors, different seeds differ") {
  SynthSpec spec;
  spec.dims = {10, 10, 10};
  spec.density = 0.2;
  spec.noise_sigma = 0.5;
  const SynthData a = generate(spec);
  const SynthData b = generate(spec);
  CHECK(std::ranges::equal(a.tensor.entries(), b.tensor.entries(),
                           [](const Entry& x, const Entry& y) { return x.i == y.i && x.j == y.j && x.k == y.k && x.y == y.y; }));
  spec.seed = 2;
  const SynthData c = generate(spec);
  bool differs = false;
  for (std::size_t q = 0; q < a.tensor.size(); ++q) differs = differs || a.tensor[q].y != c.tensor[q].y;
  CHECK(differs);
}

TEST_CASE("entry counts follow the density") {
  SynthSpec spec;
  spec.dims = {20, 20, 10};
  spec.density = 0.05;
  CHECK(generate(spec).tensor.size() == 200);
  spec.density = 0.001;  // 4 cells
  CHECK(generate(spec).tensor.size() == 4);
  spec.density = 0.0013;  // 5.2 -> 6
  CHECK(generate(spec).tensor.size() == 6);
  spec.dims = {3, 3, 3};
  spec.density = 1.0;
  CHECK(generate(spec).tensor.size() == 27);
}

TEST_CASE("sampled cells are distinct and cover the grid uniformly") {
  SynthSpec spec;
  spec.dims = {10, 10, 10};
  spec.density = 0.5;
  std::array<std::size_t, 10> per_i{};
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    spec.seed = seed;
    const SynthData data = generate(spec);
    seen.clear();
    for (const Entry& e : data.tensor.entries()) {
      CHECK(seen.emplace(e.i, e.j, e.k).second);
      ++per_i[e.i];
    }
  }
  // 10000 draws over 10 slices: each slice gets 1000 on average.
  for (std::size_t n : per_i) {
    CHECK(n > 900);
    CHECK(n < 1100);
  }
}

TEST_CASE("weights are non-negative and centred near weight_scale / 2") {
  for (double sigma : {0.0, 2.0}) {
    SynthSpec spec;
    spec.dims = {30, 30, 15};
    spec.density = 0.1;
    spec.true_rank = 3;
    spec.noise_sigma = sigma;
    spec.seed = 5;
    const SynthData data = generate(spec);
    double mean = 0.0;
    for (const Entry& e : data.tensor.entries()) {
      CHECK(e.y >= 0.0);
      mean += e.y;
    }
    mean /= static_cast<double>(data.tensor.size());
    CHECK(mean == doctest::Approx(5.0).epsilon(0.05));
  }
}

TEST_CASE("large sparse grids use the rejection sampler") {
  SynthSpec spec;
  spec.dims = {1000, 1000, 100};
  spec.density = 1e-5;
  const SynthData data = generate(spec);
  CHECK(data.tensor.size() == 1000);
  CHECK(data.tensor.dims() == spec.dims);
}

TEST_CASE("invalid specs are rejected") {
  SynthSpec spec;
  spec.dims = {5, 5, 5};
  spec.density = 0.0;
  CHECK_THROWS_AS(generate(spec), DomainError);
  spec.density = 1.5;
  CHECK_THROWS_AS(generate(spec), DomainError);
  spec.density = 0.5;
  spec.true_rank = 0;
  CHECK_THROWS_AS(generate(spec), DomainError);
  spec.true_rank = 2;
  spec.noise_sigma = -1.0;
  CHECK_THROWS_AS(generate(spec), DomainError);
  spec.noise_sigma = 0.0;
  spec.weight_scale = 0.0;
  CHECK_THROWS_AS(generate(spec), DomainError);
  spec.weight_scale = 10.0;
  spec.dims = {0, 5, 5};
  CHECK_THROWS_AS(generate(spec), DomainError);
}

TEST_CASE("write_synth produces loadable data and checkpoint") {
  test::TempDir dir("synth");
  SynthSpec spec;
  spec.dims = {6, 6, 3};
  spec.density = 0.5;
  const SynthData data = generate(spec);
  write_synth(data, dir.path() / "data.tsv", dir.path() / "truth.trlb", spec);
  LoadOptions opts;
  opts.dims = spec.dims;
  const LoadResult loaded = load_entries(dir.path() / "data.tsv", TextFormat::tsv, opts);
  REQUIRE(loaded.tensor.size() == data.tensor.size());
  for (std::size_t q = 0; q < data.tensor.size(); ++q) CHECK(loaded.tensor[q].y == data.tensor[q].y);
  CHECK(load_model(dir.path() / "truth.trlb") == std::get<TrModel>(data.truth));
  CHECK(test::read_file(dir.path() / "data.tsv").starts_with("#"));
}
