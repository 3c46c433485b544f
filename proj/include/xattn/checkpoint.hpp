// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "xattn/model.hpp"

namespace xattn {

inline constexpr std::uint16_t kCheckpointVersion = 1;

// Binary checkpoint: magic "XATN", u16 version, then named tensor records
// (u32 name length, name, u32 rank, u32 dims, f32 little-endian payload).
// Includes batch-norm running statistics and the model configuration.
// Writes are atomic (temp file + rename).
void save_checkpoint(const ModelParams& params, const std::string& path);

// Throws BadMagic, VersionUnsupported, IoFailure, ParseError.
ModelParams load_checkpoint(const std::string& path);

}  // namespace xattn
