#include "trlb/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "trlb/errors.hpp"

namespace trlb {

namespace {

constexpr std::array<char, 4> kTrMagic{'T', 'R', 'L', 'B'};
constexpr std::array<char, 4> kCpMagic{'C', 'P', 'L', 'B'};
constexpr std::size_t kHeaderBytes = 40;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>(v >> (8 * b)));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(v >> (8 * b)));
}

void put_f64s(std::vector<unsigned char>& out, std::span<const double> xs) {
  for (double x : xs) put_u64(out, std::bit_cast<std::uint64_t>(x));
}

class Reader {
 public:
  Reader(std::vector<unsigned char> bytes, std::string source)
      : bytes_(std::move(bytes)), source_(std::move(source)) {}

  std::uint64_t u64() { return read_le(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(read_le(4)); }
  void f64s(std::span<double> out) {
    for (double& x : out) x = std::bit_cast<double>(read_le(8));
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& source() const { return source_; }

 private:
  std::uint64_t read_le(std::size_t n) {
    if (remaining() < n) throw FormatError(source_ + ": truncated checkpoint");
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < n; ++b) v |= std::uint64_t(bytes_[pos_ + b]) << (8 * b);
    pos_ += n;
    return v;
  }

  std::vector<unsigned char> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<unsigned char> header(const std::array<char, 4>& magic, const Dims& dims, std::size_t rank) {
  std::vector<unsigned char> out;
  for (char c : magic) out.push_back(static_cast<unsigned char>(c));
  put_u32(out, kCheckpointVersion);
  put_u64(out, dims.i);
  put_u64(out, dims.j);
  put_u64(out, dims.k);
  put_u64(out, rank);
  return out;
}

std::array<char, 4> peek_magic(const std::vector<unsigned char>& bytes, const std::string& source) {
  if (bytes.size() < 4) throw FormatError(source + ": truncated checkpoint");
  return {static_cast<char>(bytes[0]), static_cast<char>(bytes[1]), static_cast<char>(bytes[2]),
          static_cast<char>(bytes[3])};
}

struct Header {
  Dims dims;
  std::size_t rank = 0;
};

// Reads the fields after the magic and checks the payload length. Core blocks
// hold `core_width` values per (mode index, rank) pair: R for TR slices, 1 for CP.
Header read_header(Reader& r, bool tr_cores) {
  r.u32();  // magic, already verified
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(r.source() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Header h;
  h.dims.i = r.u64();
  h.dims.j = r.u64();
  h.dims.k = r.u64();
  h.rank = r.u64();
  if (h.rank == 0) throw FormatError(r.source() + ": rank field is 0");
  if (h.dims.i == 0 || h.dims.j == 0 || h.dims.k == 0) throw FormatError(r.source() + ": zero extent");

  // Payload bytes: 8 * (I + J + K) * R * (core width + 1), core width R for TR and 1 for CP.
  const std::uint64_t factors[] = {h.dims.i + h.dims.j + h.dims.k, h.rank, (tr_cores ? h.rank : 1) + 1, 8};
  bool overflow = h.dims.i + h.dims.j < h.dims.i || h.dims.i + h.dims.j + h.dims.k < h.dims.k;
  std::uint64_t bytes = 1;
  for (std::uint64_t f : factors) {
    if (f != 0 && bytes > std::numeric_limits<std::uint64_t>::max() / f) overflow = true;
    bytes *= f;
  }
  if (overflow || bytes != r.remaining()) {
    throw FormatError(r.source() + ": payload size does not match the declared shape");
  }
  return h;
}

}  // namespace

void save_model(const TrModel& m, const std::filesystem::path& path) {
  m.check_shapes();
  auto out = header(kTrMagic, m.dims, m.rank);
  for (Mode mode : kModes) put_f64s(out, m.core(mode).data());
  for (Mode mode : kModes) put_f64s(out, m.bias(mode).data());
  write_bytes(path, out);
}

void save_model(const CpModel& m, const std::filesystem::path& path) {
  m.check_shapes();
  auto out = header(kCpMagic, m.dims, m.rank);
  for (Mode mode : kModes) put_f64s(out, m.factor(mode).data());
  for (Mode mode : kModes) put_f64s(out, m.bias(mode).data());
  write_bytes(path, out);
}

namespace {

TrModel decode_tr(std::vector<unsigned char> bytes, const std::string& source) {
  if (peek_magic(bytes, source) != kTrMagic) throw FormatError(source + ": bad magic, expected TRLB");
  Reader r(std::move(bytes), source);
  const Header h = read_header(r, true);
  TrModel m = TrModel::zeros(h.dims, h.rank);
  for (Mode mode : kModes) r.f64s(m.core(mode).data());
  for (Mode mode : kModes) r.f64s(m.bias(mode).data());
  return m;
}

CpModel decode_cp(std::vector<unsigned char> bytes, const std::string& source) {
  if (peek_magic(bytes, source) != kCpMagic) throw FormatError(source + ": bad magic, expected CPLB");
  Reader r(std::move(bytes), source);
  const Header h = read_header(r, false);
  CpModel m = CpModel::zeros(h.dims, h.rank);
  for (Mode mode : kModes) r.f64s(m.factor(mode).data());
  for (Mode mode : kModes) r.f64s(m.bias(mode).data());
  return m;
}

}  // namespace

TrModel load_model(const std::filesystem::path& path) { return decode_tr(read_bytes(path), path.string()); }

CpModel load_cp_model(const std::filesystem::path& path) { return decode_cp(read_bytes(path), path.string()); }

AnyModel load_any_model(const std::filesystem::path& path) {
  auto bytes = read_bytes(path);
  const auto magic = peek_magic(bytes, path.string());
  if (magic == kTrMagic) return decode_tr(std::move(bytes), path.string());
  if (magic == kCpMagic) return decode_cp(std::move(bytes), path.string());
  throw FormatError(path.string() + ": bad magic");
}

}  // namespace trlb
