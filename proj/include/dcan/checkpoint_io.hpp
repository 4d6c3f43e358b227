#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace dcan {

// Self-describing binary container: magic bytes, format version, one JSON
// metadata block, named little-endian tensor blocks, and a trailing CRC32
// over everything before it. Round trips are byte-identical.
struct TensorRecord {
    std::string name;
    uint8_t dtype = 0;  // 0 = f64, 1 = f32
    std::vector<int64_t> dims;
    std::vector<uint8_t> payload;  // dtype-sized little-endian scalars
};

struct CheckpointFile {
    nlohmann::json meta;
    std::vector<TensorRecord> tensors;
};

inline constexpr char kCheckpointMagic[8] = {'D', 'C', 'A', 'N', 'C', 'K', 'P', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;

uint32_t crc32(const uint8_t* data, size_t len);

std::vector<uint8_t> serialize_checkpoint(const CheckpointFile& file);
CheckpointFile parse_checkpoint(const std::vector<uint8_t>& bytes, const std::string& origin);

void write_checkpoint_file(const std::string& path, const CheckpointFile& file);
CheckpointFile read_checkpoint_file(const std::string& path);

}  // namespace dcan
