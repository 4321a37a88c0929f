#include "trlb/split.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "trlb/errors.hpp"
#include "trlb/rng.hpp"

namespace trlb {

Split split(const SparseTensor& t, std::uint64_t seed) {
  const std::size_t n = t.size();
  if (n < 10) throw DomainError("split needs at least 10 entries, got " + std::to_string(n));

  std::vector<EntryPos> order(n);
  std::iota(order.begin(), order.end(), EntryPos{0});
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());

  // Integer arithmetic keeps floor(0.7n) and floor(0.1n) exact.
  const std::size_t n_train = n * 7 / 10;
  const std::size_t n_val = n / 10;

  Split s;
  s.seed = seed;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

void write_manifest(const std::filesystem::path& path, const Split& s) {
  const std::size_t n = s.total();
  std::vector<const char*> label(n, nullptr);
  for (EntryPos p : s.train) label.at(p) = "train";
  for (EntryPos p : s.val) label.at(p) = "val";
  for (EntryPos p : s.test) label.at(p) = "test";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "# trlb split manifest v1\n";
  out << "seed " << s.seed << '\n';
  out << "entries " << n << '\n';
  for (std::size_t p = 0; p < n; ++p) {
    if (label[p] == nullptr) throw FormatError("split is not exhaustive: position " + std::to_string(p) + " missing");
    out << p << ' ' << label[p] << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Split read_manifest(const std::filesystem::path& path, std::size_t expected_entries) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  Split s;
  bool have_seed = false;
  std::size_t declared = 0;
  bool have_count = false;
  std::vector<bool> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string a, b, extra;
    if (!(ls >> a >> b) || (ls >> extra)) throw ParseError(path.string(), line_no, "expected two fields");
    try {
      if (a == "seed") {
        s.seed = std::stoull(b);
        have_seed = true;
        continue;
      }
      if (a == "entries") {
        declared = std::stoull(b);
        have_count = true;
        seen.assign(declared, false);
        continue;
      }
    } catch (const std::exception&) {
      throw ParseError(path.string(), line_no, "invalid number '" + b + "'");
    }
    if (!have_count) throw FormatError(path.string() + ": 'entries' header must precede positions");
    std::size_t pos = 0;
    try {
      std::size_t used = 0;
      pos = std::stoull(a, &used);
      if (used != a.size()) throw std::invalid_argument(a);
    } catch (const std::exception&) {
      throw ParseError(path.string(), line_no, "invalid position '" + a + "'");
    }
    if (pos >= declared) throw FormatError(path.string() + ": position " + a + " out of range");
    if (seen[pos]) throw FormatError(path.string() + ": position " + a + " listed twice");
    seen[pos] = true;
    if (b == "train") s.train.push_back(pos);
    else if (b == "val") s.val.push_back(pos);
    else if (b == "test") s.test.push_back(pos);
    else throw ParseError(path.string(), line_no, "unknown subset '" + b + "'");
  }
  if (!have_seed || !have_count) throw FormatError(path.string() + ": missing seed/entries header");
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw FormatError(path.string() + ": manifest does not cover every entry");
  }
  if (expected_entries != 0 && declared != expected_entries) {
    throw FormatError(path.string() + ": manifest lists " + std::to_string(declared) +
                      " entries but the dataset has " + std::to_string(expected_entries));
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

}  // namespace trlb
