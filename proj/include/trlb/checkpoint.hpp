#pragma once

#include <filesystem>
#include <variant>

#include "trlb/cp_model.hpp"
#include "trlb/tr_model.hpp"

namespace trlb {

// Checkpoint layout (little-endian):
//
//   offset  size  field
//   0       4     magic "TRLB" (tensor ring) or "CPLB" (CP baseline)
//   4       4     format version, u32 = 1
//   8       8     |I| as u64
//   16      8     |J| as u64
//   24      8     |K| as u64
//   32      8     R as u64
//   40      ...   U, V, W, D, E, F as contiguous f64
//
// TRLB cores are written slice by slice: for n in [0, mode_size), the R x R
// lateral slice n in row-major order (element (left, n, right) at index
// (n * R + left) * R + right). Every other block is mode_size x R row-major.
// CPLB stores its U, V, W factors with the same mode_size x R layout as D, E, F.

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelFamily { tr, cp };

void save_model(const TrModel& m, const std::filesystem::path& path);
TrModel load_model(const std::filesystem::path& path);

void save_model(const CpModel& m, const std::filesystem::path& path);
CpModel load_cp_model(const std::filesystem::path& path);

using AnyModel = std::variant<TrModel, CpModel>;

/// Loads either family, dispatching on the magic.
AnyModel load_any_model(const std::filesystem::path& path);

}  // namespace trlb
