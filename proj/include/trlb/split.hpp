#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "trlb/sparse_tensor.hpp"

namespace trlb {

enum class Subset : std::uint8_t { train, val, test };

/// Disjoint train / validation / test partition of entry positions.
struct Split {
  std::vector<EntryPos> train;
  std::vector<EntryPos> val;
  std::vector<EntryPos> test;
  std::uint64_t seed = 0;

  const std::vector<EntryPos>& subset(Subset s) const {
    switch (s) {
      case Subset::train: return train;
      case Subset::val: return val;
      default: return test;
    }
  }
  std::size_t total() const { return train.size() + val.size() + test.size(); }
};

/// Seeded 7:1:2 partition: floor(0.7n) train, floor(0.1n) validation, the
/// remainder test. Each subset is returned in ascending position order.
/// Requires at least 10 entries.
Split split(const SparseTensor& t, std::uint64_t seed);

/// Manifest: a header, `seed <s>`, `entries <n>`, then one `<pos> <train|val|test>` line per entry.
void write_manifest(const std::filesystem::path& path, const Split& s);

/// Reads a manifest; throws FormatError when it is not an exhaustive partition
/// of `expected_entries` positions (pass 0 to skip the size check).
Split read_manifest(const std::filesystem::path& path, std::size_t expected_entries = 0);

}  // namespace trlb
