#pragma once

#include <string>
#include <string_view>

#include "json.hpp"
#include "restorekit/nn.hpp"

namespace restorekit {

inline constexpr int kCheckpointSchemaVersion = 1;

/// Decoded checkpoint: structured header plus named tensors.
struct CheckpointData {
  nlohmann::json header;
  nn::ParameterSet params;
};

/// Container layout (all integers little-endian):
///   8 bytes   magic "RKCKPT\r\n"
///   u32       header length, then the header as compact JSON text
///             (always carries "schema_version")
///   u32       tensor count
///   per tensor: u32 name length, name bytes, u32 rank (4), u32 dims[4],
///               float32 values
///   u32       CRC-32 of every preceding byte
/// Parameters must be float32-representable; anything else is a CheckpointError.
std::string encode_checkpoint(const nn::ParameterSet& params, nlohmann::json header);

/// Throws CheckpointError on bad magic, truncation, checksum mismatch, or an
/// unsupported schema version.
CheckpointData decode_checkpoint(std::string_view bytes);

}  // namespace restorekit
