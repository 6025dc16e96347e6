#include "ssql/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "ssql/config.hpp"
#include "ssql/data.hpp"

namespace ssql::ckpt {

namespace {

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(uint8_t(v & 0xff));
    b.push_back(uint8_t(v >> 8));
}

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<uint8_t>& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& b, float v) { put_u32(b, std::bit_cast<uint32_t>(v)); }

void put_str(std::vector<uint8_t>& b, const std::string& s, bool long_len) {
    if (long_len) {
        put_u32(b, static_cast<uint32_t>(s.size()));
    } else {
        check(s.size() <= 0xffff, "checkpoint: name too long");
        put_u16(b, static_cast<uint16_t>(s.size()));
    }
    b.insert(b.end(), s.begin(), s.end());
}

struct Reader {
    const std::vector<uint8_t>& b;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > b.size())
            throw FormatError("checkpoint truncated: need " + std::to_string(n) + " bytes at " +
                              std::to_string(pos) + ", file has " + std::to_string(b.size()));
    }
    uint16_t u16() {
        need(2);
        uint16_t v = uint16_t(b[pos]) | uint16_t(b[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(b[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(b[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(bool long_len) {
        size_t n = long_len ? u32() : u16();
        need(n);
        std::string s(reinterpret_cast<const char*>(b.data() + pos), n);
        pos += n;
        return s;
    }
};

}  // namespace

std::vector<uint8_t> serialize_checkpoint(const Checkpoint& c) {
    std::vector<uint8_t> b;
    b.push_back('S');
    b.push_back('S');
    b.push_back('Q');
    b.push_back('L');
    put_u16(b, kCheckpointVersion);
    put_str(b, c.spec.to_text(), true);
    put_u32(b, static_cast<uint32_t>(c.params.items.size()));
    for (const auto& item : c.params.items) {
        put_str(b, item.name, false);
        b.push_back(item.trainable ? 1 : 0);
        const auto& shape = item.tensor.shape();
        put_u32(b, static_cast<uint32_t>(shape.size()));
        for (int d : shape) put_u32(b, static_cast<uint32_t>(d));
        for (float v : item.tensor.data()) put_f32(b, v);
    }
    put_str(b, config::train_to_text(c.cfg), true);
    put_u64(b, c.step);
    put_u32(b, static_cast<uint32_t>(c.rng_states.size()));
    for (const auto& [name, words] : c.rng_states) {
        put_str(b, name, false);
        put_u64(b, words[0]);
        put_u64(b, words[1]);
    }
    return b;
}

Checkpoint deserialize_checkpoint(const std::vector<uint8_t>& bytes) {
    Reader r{bytes};
    r.need(4);
    if (std::memcmp(bytes.data(), "SSQL", 4) != 0)
        throw FormatError("not a checkpoint: bad magic (expected 'SSQL')");
    r.pos = 4;
    uint16_t version = r.u16();
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint format version " + std::to_string(version) +
                          ", this build reads version " + std::to_string(kCheckpointVersion));
    Checkpoint c;
    c.spec = nn::ModelSpec::from_text(r.str(true));
    uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.str(false);
        r.need(1);
        bool trainable = bytes[r.pos++] != 0;
        uint32_t ndim = r.u32();
        check(ndim >= 1 && ndim <= 8, "checkpoint: implausible tensor rank");
        Shape shape(ndim);
        size_t numel = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            shape[d] = static_cast<int>(r.u32());
            check(shape[d] > 0, "checkpoint: nonpositive dimension");
            numel *= static_cast<size_t>(shape[d]);
        }
        Tensor t = Tensor::zeros(shape, trainable);
        auto dst = t.data_mut();
        for (size_t k = 0; k < numel; ++k) dst[k] = r.f32();
        c.params.add(name, t, trainable);
    }
    c.cfg = config::train_from_text(r.str(true));
    c.step = r.u64();
    uint32_t streams = r.u32();
    for (uint32_t i = 0; i < streams; ++i) {
        std::string name = r.str(false);
        uint64_t a = r.u64();
        uint64_t b2 = r.u64();
        c.rng_states.emplace_back(name, std::array<uint64_t, 2>{a, b2});
    }
    if (r.pos != bytes.size())
        throw FormatError("checkpoint has " + std::to_string(bytes.size() - r.pos) +
                          " trailing bytes");
    return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
    std::vector<uint8_t> bytes = serialize_checkpoint(c);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open checkpoint for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace ssql::ckpt
