#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "odgcnn/params.hpp"

namespace odgcnn {

// ODGC1 layout (little-endian):
//   "ODGC1\n"
//   u32 entry count
//   per entry: u32 name length, UTF-8 name, u32 rank, u64 dims[rank], f64 data[numel]
std::vector<unsigned char> encode_checkpoint(const ParamRegistry& params);
ParamRegistry decode_checkpoint(std::span<const unsigned char> bytes);

void save_checkpoint(const ParamRegistry& params, const std::filesystem::path& path);
ParamRegistry load_checkpoint(const std::filesystem::path& path);

// Copies a checkpoint into an existing registry; every name and shape must
// match. Throws naming the first mismatched tensor.
void load_into(ParamRegistry& params, const ParamRegistry& checkpoint);

// Git blob object id (SHA-1 of "blob <size>\0" + content), hex encoded.
std::string git_blob_hash(std::span<const unsigned char> content);

}  // namespace odgcnn
