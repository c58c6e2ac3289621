#pragma once

#include <filesystem>

#include "yawdrive/autodiff.hpp"

namespace yawdrive {

/// "YWTS" binary: u32 version, u32 count, then per tensor u16 name length,
/// name, u8 rank, u32 dims, f64 data. Little-endian.
void save_weights(const ParameterSet<double>& params, const std::filesystem::path& path);

/// Throws FormatError on bad magic/version, CorruptData on truncation.
ParameterSet<double> load_weights(const std::filesystem::path& path);

} // namespace yawdrive
