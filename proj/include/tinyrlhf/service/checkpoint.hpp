#ifndef TINYRLHF_SERVICE_CHECKPOINT_HPP_
#define TINYRLHF_SERVICE_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "tinyrlhf/transformer.hpp"

namespace tinyrlhf {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "TRLHFCKP";

// Layout, all integers little-endian:
//   magic (8 bytes) | u32 format version | u64 header length | header JSON
//   | f64 payload of every tensor, in header order | u64 FNV-1a checksum
// The header carries the backbone config, head kind and the tensor table
// (name, shape). The checksum covers every preceding byte.
std::string serialize_checkpoint(const Transformer& model);

// Raises kSchema on a malformed file, kVersionMismatch on an unknown format
// version and kChecksum when the stored checksum disagrees.
Transformer deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Transformer& model);
Transformer load_checkpoint(const std::filesystem::path& path);

// Stored checksum of a checkpoint file, after verifying it.
std::uint64_t checkpoint_checksum(const std::filesystem::path& path);

}  // namespace tinyrlhf

#endif  // TINYRLHF_SERVICE_CHECKPOINT_HPP_
