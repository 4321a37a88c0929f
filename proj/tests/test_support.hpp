#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "trlb/cp_model.hpp"
#include "trlb/rng.hpp"
#include "trlb/sparse_tensor.hpp"
#include "trlb/tr_model.hpp"

namespace trlb::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("trlb_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Random tensor with `count` distinct cells and weights in (0, 10).
inline SparseTensor random_tensor(Dims dims, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<bool> used(dims.cells(), false);
  std::vector<Entry> entries;
  while (entries.size() < count) {
    const auto c = static_cast<std::size_t>(rng.below(dims.cells()));
    if (used[c]) continue;
    used[c] = true;
    entries.push_back({c / (dims.j * dims.k), (c / dims.k) % dims.j, c % dims.k, rng.uniform(0.1, 9.9)});
  }
  return SparseTensor(dims, std::move(entries));
}

/// Every cell of a dense tensor observed, weights in (0, 10).
inline SparseTensor dense_tensor(Dims dims, std::uint64_t seed) { return random_tensor(dims, dims.cells(), seed); }

inline TrModel random_tr_model(Dims dims, std::size_t rank, std::uint64_t seed, double lo = 0.05, double hi = 1.0) {
  return init_model(dims, rank, seed, lo, hi);
}

inline CpModel random_cp_model(Dims dims, std::size_t rank, std::uint64_t seed, double lo = 0.05, double hi = 1.0) {
  return init_cp_model(dims, rank, seed, lo, hi);
}

inline std::vector<EntryPos> all_positions(const SparseTensor& t) {
  std::vector<EntryPos> out(t.size());
  for (EntryPos p = 0; p < t.size(); ++p) out[p] = p;
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t q = 0; q < a.size(); ++q) m = std::max(m, std::abs(a[q] - b[q]));
  return m;
}

inline double max_abs_diff(const TrModel& a, const TrModel& b) {
  double m = 0.0;
  for (Mode mode : kModes) {
    m = std::max(m, max_abs_diff(a.core(mode).data(), b.core(mode).data()));
    m = std::max(m, max_abs_diff(a.bias(mode).data(), b.bias(mode).data()));
  }
  return m;
}

inline double max_abs_diff(const CpModel& a, const CpModel& b) {
  double m = 0.0;
  for (Mode mode : kModes) {
    m = std::max(m, max_abs_diff(a.factor(mode).data(), b.factor(mode).data()));
    m = std::max(m, max_abs_diff(a.bias(mode).data(), b.bias(mode).data()));
  }
  return m;
}

inline double stddev(const SparseTensor& t) {
  double mean = 0.0;
  for (const Entry& e : t.entries()) mean += e.y;
  mean /= static_cast<double>(t.size());
  double var = 0.0;
  for (const Entry& e : t.entries()) var += (e.y - mean) * (e.y - mean);
  return std::sqrt(var / static_cast<double>(t.size()));
}

}  // namespace trlb::test
