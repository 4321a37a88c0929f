#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace trlb {

enum class Mode : std::uint8_t { I = 0, J = 1, K = 2 };

inline constexpr std::array<Mode, 3> kModes{Mode::I, Mode::J, Mode::K};

std::string_view mode_name(Mode m);

/// Tensor extents (|I|, |J|, |K|).
struct Dims {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t k = 0;

  std::size_t operator[](Mode m) const {
    switch (m) {
      case Mode::I: return i;
      case Mode::J: return j;
      default: return k;
    }
  }
  std::size_t cells() const { return i * j * k; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// One observed link weight y at (source i, target j, time slot k).
struct Entry {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t k = 0;
  double y = 0.0;

  std::size_t index(Mode m) const {
    switch (m) {
      case Mode::I: return i;
      case Mode::J: return j;
      default: return k;
    }
  }
  friend bool operator==(const Entry&, const Entry&) = default;
};

/// Position of an entry inside SparseTensor::entries().
using EntryPos = std::size_t;

/// Immutable COO tensor of observed entries with per-mode slice indices.
///
/// Entries are kept sorted by (i, j, k) with no duplicate cells. For every
/// mode index n, slice(mode, n) lists the positions of the entries whose
/// coordinate in that mode equals n, in ascending position order.
class SparseTensor {
 public:
  SparseTensor() = default;

  /// Builds the tensor from entries that are already deduplicated. Entries are
  /// sorted; throws DomainError on negative/non-finite weights, out-of-range
  /// coordinates, or duplicate cells.
  SparseTensor(Dims dims, std::vector<Entry> entries);

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::span<const Entry> entries() const { return entries_; }
  const Entry& operator[](EntryPos p) const { return entries_[p]; }

  /// Positions of entries with coordinate `index` in `mode`; throws DomainError
  /// when index >= dims[mode].
  std::span<const EntryPos> slice(Mode mode, std::size_t index) const;

 private:
  struct SliceIndex {
    std::vector<std::size_t> offsets;  // size = extent + 1
    std::vector<EntryPos> positions;
  };

  static SliceIndex build_index(const std::vector<Entry>& entries, Mode mode, std::size_t extent);

  Dims dims_;
  std::vector<Entry> entries_;
  std::array<SliceIndex, 3> index_;
};

enum class TextFormat { tsv, csv };

/// Maps original (possibly sparse) IDs to dense 0-based indices per mode.
struct IdMap {
  std::array<std::vector<std::uint64_t>, 3> original;  // dense index -> original id
};

struct LoadOptions {
  /// Overrides the inferred extents; must cover every coordinate.
  std::optional<Dims> dims;
  /// Compact arbitrary non-negative IDs to dense indices (order of first sorted id).
  bool remap = false;
};

struct LoadResult {
  SparseTensor tensor;
  std::optional<IdMap> id_map;
};

/// Parses `i j k weight` lines (whitespace separated for tsv, comma separated
/// for csv). Blank lines and lines starting with '#' are skipped. Duplicate
/// cells are averaged.
LoadResult load_entries(const std::filesystem::path& path, TextFormat format,
                        const LoadOptions& options = {});

/// Same as load_entries but reads from an in-memory buffer; `source` is used
/// in error messages.
LoadResult parse_entries(std::string_view text, TextFormat format, const LoadOptions& options = {},
                         const std::string& source = "<memory>");

/// Picks csv for a ".csv" extension, tsv otherwise.
TextFormat format_for_path(const std::filesystem::path& path);

/// Writes entries as `i j k weight` lines (weights printed round-trip exact).
void write_entries(const std::filesystem::path& path, const SparseTensor& t,
                   std::string_view header_comment = {});

/// Writes `mode dense_index original_id` lines.
void write_id_map(const std::filesystem::path& path, const IdMap& map);

}  // namespace trlb
