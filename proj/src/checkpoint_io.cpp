#include "dcan/checkpoint_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "dcan/error.hpp"

namespace dcan {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;
    const std::string& origin;

    void need(size_t n, const char* what) const {
        if (pos + n > bytes.size())
            throw ParseError(origin + ": truncated at byte " + std::to_string(pos) +
                             " while reading " + what);
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    uint8_t u8(const char* what) {
        need(1, what);
        return bytes[pos++];
    }
    std::vector<uint8_t> raw(size_t n, const char* what) {
        need(n, what);
        std::vector<uint8_t> out(bytes.begin() + static_cast<ptrdiff_t>(pos),
                                 bytes.begin() + static_cast<ptrdiff_t>(pos + n));
        pos += n;
        return out;
    }
};

const std::array<uint32_t, 256>& crc_table() {
    static const std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int j = 0; j < 8; ++j) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    return table;
}

size_t dtype_size(uint8_t dtype) {
    if (dtype == 0) return 8;
    if (dtype == 1) return 4;
    throw ParseError("unknown tensor dtype code " + std::to_string(dtype));
}

}  // namespace

uint32_t crc32(const uint8_t* data, size_t len) {
    uint32_t c = 0xffffffffu;
    for (size_t i = 0; i < len; ++i) c = crc_table()[(c ^ data[i]) & 0xff] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

std::vector<uint8_t> serialize_checkpoint(const CheckpointFile& file) {
    std::vector<uint8_t> out;
    out.insert(out.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
    put_u32(out, kCheckpointVersion);
    const std::string meta = file.meta.dump();
    put_u64(out, meta.size());
    out.insert(out.end(), meta.begin(), meta.end());
    put_u64(out, file.tensors.size());
    for (const auto& t : file.tensors) {
        put_u64(out, t.name.size());
        out.insert(out.end(), t.name.begin(), t.name.end());
        out.push_back(t.dtype);
        out.push_back(static_cast<uint8_t>(t.dims.size()));
        uint64_t numel = 1;
        for (int64_t d : t.dims) {
            put_u64(out, static_cast<uint64_t>(d));
            numel *= static_cast<uint64_t>(d);
        }
        if (t.payload.size() != numel * dtype_size(t.dtype))
            throw ContractViolation("checkpoint tensor '" + t.name +
                                    "' payload size does not match its dims");
        out.insert(out.end(), t.payload.begin(), t.payload.end());
    }
    put_u32(out, crc32(out.data(), out.size()));
    return out;
}

CheckpointFile parse_checkpoint(const std::vector<uint8_t>& bytes, const std::string& origin) {
    if (bytes.size() < sizeof(kCheckpointMagic) + 8)
        throw ParseError(origin + ": too short to be a checkpoint (" +
                         std::to_string(bytes.size()) + " bytes)");
    if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
        throw ParseError(origin + ": bad magic bytes");

    const size_t body_len = bytes.size() - 4;
    uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= uint32_t(bytes[body_len + i]) << (8 * i);
    if (crc32(bytes.data(), body_len) != stored)
        throw ParseError(origin + ": checksum mismatch, file is corrupt or truncated");

    Reader r{bytes, sizeof(kCheckpointMagic), origin};
    const uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw ParseError(origin + ": unsupported checkpoint version " + std::to_string(version));

    CheckpointFile file;
    const uint64_t meta_len = r.u64("metadata length");
    const auto meta_bytes = r.raw(meta_len, "metadata block");
    file.meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end(), nullptr, false);
    if (file.meta.is_discarded()) throw ParseError(origin + ": metadata block is not valid JSON");

    const uint64_t count = r.u64("tensor count");
    for (uint64_t i = 0; i < count; ++i) {
        TensorRecord t;
        const uint64_t name_len = r.u64("tensor name length");
        const auto name_bytes = r.raw(name_len, "tensor name");
        t.name.assign(name_bytes.begin(), name_bytes.end());
        t.dtype = r.u8("tensor dtype");
        const uint8_t rank = r.u8("tensor rank");
        uint64_t numel = 1;
        for (uint8_t d = 0; d < rank; ++d) {
            const uint64_t dim = r.u64("tensor dim");
            if (dim == 0 || dim > (uint64_t(1) << 32))
                throw ParseError(origin + ": tensor '" + t.name + "' has invalid dim");
            t.dims.push_back(static_cast<int64_t>(dim));
            numel *= dim;
        }
        t.payload = r.raw(numel * dtype_size(t.dtype), "tensor payload");
        file.tensors.push_back(std::move(t));
    }
    if (r.pos != body_len)
        throw ParseError(origin + ": trailing bytes after tensor blocks at byte " +
                         std::to_string(r.pos));
    return file;
}

void write_checkpoint_file(const std::string& path, const CheckpointFile& file) {
    const std::vector<uint8_t> bytes = serialize_checkpoint(file);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint file for writing: " + path);
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("failed writing checkpoint file: " + path);
}

CheckpointFile read_checkpoint_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                               std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes, path);
}

}  // namespace dcan
