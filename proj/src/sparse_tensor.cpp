#include "trlb/sparse_tensor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "trlb/errors.hpp"

namespace trlb {

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::I: return "I";
    case Mode::J: return "J";
    default: return "K";
  }
}

namespace {

bool cell_less(const Entry& a, const Entry& b) {
  if (a.i != b.i) return a.i < b.i;
  if (a.j != b.j) return a.j < b.j;
  return a.k < b.k;
}

bool same_cell(const Entry& a, const Entry& b) { return a.i == b.i && a.j == b.j && a.k == b.k; }

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, TextFormat format) {
  std::vector<std::string_view> out;
  if (format == TextFormat::csv) {
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return out;
  }
  std::size_t p = 0;
  while (p < line.size()) {
    while (p < line.size() && (line[p] == ' ' || line[p] == '\t')) ++p;
    if (p >= line.size()) break;
    std::size_t q = p;
    while (q < line.size() && line[q] != ' ' && line[q] != '\t') ++q;
    out.push_back(line.substr(p, q - p));
    p = q;
  }
  return out;
}

std::uint64_t parse_id(std::string_view field, const std::string& source, std::size_t line_no,
                       const char* what) {
  std::uint64_t v = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc{} || ptr != end) {
    throw ParseError(source, line_no, std::string("invalid ") + what + " '" + std::string(field) + "'");
  }
  return v;
}

double parse_weight(std::string_view field, const std::string& source, std::size_t line_no) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc{} || ptr != end || !std::isfinite(v)) {
    throw ParseError(source, line_no, "invalid weight '" + std::string(field) + "'");
  }
  return v;
}

struct RawEntry {
  std::array<std::uint64_t, 3> id;
  double y;
};

}  // namespace

SparseTensor::SparseTensor(Dims dims, std::vector<Entry> entries)
    : dims_(dims), entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(), cell_less);
  for (std::size_t p = 0; p < entries_.size(); ++p) {
    const Entry& e = entries_[p];
    if (!(e.y >= 0.0) || !std::isfinite(e.y)) {
      throw DomainError("entry (" + std::to_string(e.i) + "," + std::to_string(e.j) + "," +
                        std::to_string(e.k) + ") has invalid weight " + std::to_string(e.y));
    }
    if (e.i >= dims_.i || e.j >= dims_.j || e.k >= dims_.k) {
      throw DomainError("entry (" + std::to_string(e.i) + "," + std::to_string(e.j) + "," +
                        std::to_string(e.k) + ") lies outside the tensor extents");
    }
    if (p > 0 && same_cell(entries_[p - 1], e)) {
      throw DomainError("duplicate cell (" + std::to_string(e.i) + "," + std::to_string(e.j) + "," +
                        std::to_string(e.k) + ")");
    }
  }
  for (Mode m : kModes) {
    index_[static_cast<std::size_t>(m)] = build_index(entries_, m, dims_[m]);
  }
}

SparseTensor::SliceIndex SparseTensor::build_index(const std::vector<Entry>& entries, Mode mode,
                                                   std::size_t extent) {
  SliceIndex idx;
  idx.offsets.assign(extent + 1, 0);
  for (const Entry& e : entries) ++idx.offsets[e.index(mode) + 1];
  for (std::size_t n = 0; n < extent; ++n) idx.offsets[n + 1] += idx.offsets[n];
  idx.positions.resize(entries.size());
  std::vector<std::size_t> cursor(idx.offsets.begin(), idx.offsets.end() - 1);
  for (EntryPos p = 0; p < entries.size(); ++p) {
    idx.positions[cursor[entries[p].index(mode)]++] = p;
  }
  return idx;
}

std::span<const EntryPos> SparseTensor::slice(Mode mode, std::size_t index) const {
  if (index >= dims_[mode]) {
    throw DomainError("slice index " + std::to_string(index) + " out of bounds for mode " +
                      std::string(mode_name(mode)) + " (extent " + std::to_string(dims_[mode]) + ")");
  }
  const SliceIndex& idx = index_[static_cast<std::size_t>(mode)];
  const std::span<const EntryPos> all(idx.positions);
  return all.subspan(idx.offsets[index], idx.offsets[index + 1] - idx.offsets[index]);
}

LoadResult parse_entries(std::string_view text, TextFormat format, const LoadOptions& options,
                         const std::string& source) {
  std::vector<RawEntry> raw;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const auto line = trim(text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
    ++line_no;
    start = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    if (line.empty() || line.front() == '#') continue;

    const auto fields = split_fields(line, format);
    if (fields.size() != 4) {
      throw ParseError(source, line_no, "expected 4 fields (i j k weight), found " + std::to_string(fields.size()));
    }
    RawEntry r{};
    r.id[0] = parse_id(fields[0], source, line_no, "source index");
    r.id[1] = parse_id(fields[1], source, line_no, "target index");
    r.id[2] = parse_id(fields[2], source, line_no, "time index");
    r.y = parse_weight(fields[3], source, line_no);
    if (r.y < 0.0) {
      throw DomainError(source + ":" + std::to_string(line_no) + ": negative weight " + std::string(fields[3]));
    }
    raw.push_back(r);
  }
  if (raw.empty()) throw DomainError(source + ": no observations");

  LoadResult result;
  if (options.remap) {
    IdMap map;
    for (std::size_t m = 0; m < 3; ++m) {
      auto& ids = map.original[m];
      ids.reserve(raw.size());
      for (const auto& r : raw) ids.push_back(r.id[m]);
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
      for (auto& r : raw) {
        r.id[m] = static_cast<std::uint64_t>(std::lower_bound(ids.begin(), ids.end(), r.id[m]) - ids.begin());
      }
    }
    result.id_map = std::move(map);
  }

  std::vector<Entry> entries;
  entries.reserve(raw.size());
  for (const auto& r : raw) entries.push_back({r.id[0], r.id[1], r.id[2], r.y});
  std::stable_sort(entries.begin(), entries.end(), cell_less);

  // Average duplicate cells.
  std::vector<Entry> merged;
  merged.reserve(entries.size());
  for (std::size_t p = 0; p < entries.size();) {
    std::size_t q = p;
    double sum = 0.0;
    while (q < entries.size() && same_cell(entries[p], entries[q])) sum += entries[q++].y;
    Entry e = entries[p];
    e.y = sum / static_cast<double>(q - p);
    merged.push_back(e);
    p = q;
  }

  Dims inferred;
  for (const Entry& e : merged) {
    inferred.i = std::max(inferred.i, e.i + 1);
    inferred.j = std::max(inferred.j, e.j + 1);
    inferred.k = std::max(inferred.k, e.k + 1);
  }
  Dims dims = inferred;
  if (options.dims) {
    const Dims& d = *options.dims;
    if (d.i < inferred.i || d.j < inferred.j || d.k < inferred.k) {
      throw DomainError(source + ": requested extents smaller than the observed index range");
    }
    dims = d;
  }
  result.tensor = SparseTensor(dims, std::move(merged));
  return result;
}

LoadResult load_entries(const std::filesystem::path& path, TextFormat format, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_entries(buf.str(), format, options, path.string());
}

TextFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? TextFormat::csv : TextFormat::tsv;
}

void write_entries(const std::filesystem::path& path, const SparseTensor& t, std::string_view header_comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  char buf[64];
  for (const Entry& e : t.entries()) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), e.y);
    out << e.i << ' ' << e.j << ' ' << e.k << ' ' << std::string_view(buf, ptr - buf) << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_id_map(const std::filesystem::path& path, const IdMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "# mode dense_index original_id\n";
  for (Mode m : kModes) {
    const auto& ids = map.original[static_cast<std::size_t>(m)];
    for (std::size_t n = 0; n < ids.size(); ++n) out << mode_name(m) << ' ' << n << ' ' << ids[n] << '\n';
  }
}

}  // namespace trlb
