#include "iic/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace iic {

namespace {

constexpr char kMagic[8] = {'I', 'I', 'C', 'C', 'K', 'P', 'T', '1'};

void put_u16(std::ofstream& out, uint16_t v) {
    const uint8_t b[2] = {static_cast<uint8_t>(v & 0xff), static_cast<uint8_t>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ofstream& out, uint32_t v) {
    const uint8_t b[4] = {static_cast<uint8_t>(v & 0xff), static_cast<uint8_t>((v >> 8) & 0xff),
                          static_cast<uint8_t>((v >> 16) & 0xff), static_cast<uint8_t>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint16_t get_u16(std::ifstream& in) {
    uint8_t b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return static_cast<uint16_t>(b[0] | (uint16_t(b[1]) << 8));
}

uint32_t get_u32(std::ifstream& in) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedArray>& arrays) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CkptError("save_checkpoint: cannot open " + path);
    out.write(kMagic, 8);
    put_u32(out, static_cast<uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
        if (a.name.size() > 0xffff) throw CkptError("save_checkpoint: name too long");
        put_u16(out, static_cast<uint16_t>(a.name.size()));
        out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
        out.put(static_cast<char>(a.dtype));
        out.put(static_cast<char>(a.dims.size()));
        int64_t numel = 1;
        for (int64_t d : a.dims) {
            put_u32(out, static_cast<uint32_t>(d));
            numel *= d;
        }
        if (a.dtype == 0) {
            if (static_cast<int64_t>(a.f32.size()) != numel) throw CkptError("save_checkpoint: f32 size mismatch");
            out.write(reinterpret_cast<const char*>(a.f32.data()), numel * 4);
        } else if (a.dtype == 1) {
            if (static_cast<int64_t>(a.f64.size()) != numel) throw CkptError("save_checkpoint: f64 size mismatch");
            out.write(reinterpret_cast<const char*>(a.f64.data()), numel * 8);
        } else {
            throw CkptError("save_checkpoint: unknown dtype code");
        }
    }
    if (!out) throw CkptError("save_checkpoint: write failed for " + path);
}

std::vector<NamedArray> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CkptError("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) throw CkptError("load_checkpoint: bad magic");
    const uint32_t count = get_u32(in);
    if (!in) throw CkptError("load_checkpoint: truncated header");
    std::vector<NamedArray> arrays;
    arrays.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        NamedArray a;
        const uint16_t name_len = get_u16(in);
        a.name.resize(name_len);
        in.read(a.name.data(), name_len);
        a.dtype = static_cast<uint8_t>(in.get());
        const int rank = in.get();
        if (!in || rank < 0 || rank > 4) throw CkptError("load_checkpoint: bad rank");
        int64_t numel = 1;
        for (int r = 0; r < rank; ++r) {
            const uint32_t d = get_u32(in);
            a.dims.push_back(static_cast<int64_t>(d));
            numel *= d;
        }
        if (!in || numel < 0 || numel > (int64_t(1) << 32)) throw CkptError("load_checkpoint: bad dims");
        if (a.dtype == 0) {
            a.f32.resize(static_cast<size_t>(numel));
            in.read(reinterpret_cast<char*>(a.f32.data()), numel * 4);
        } else if (a.dtype == 1) {
            a.f64.resize(static_cast<size_t>(numel));
            in.read(reinterpret_cast<char*>(a.f64.data()), numel * 8);
        } else {
            throw CkptError("load_checkpoint: unknown dtype code");
        }
        if (!in) throw CkptError("load_checkpoint: truncated array data for " + a.name);
        arrays.push_back(std::move(a));
    }
    return arrays;
}

}  // namespace iic
