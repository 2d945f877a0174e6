#include "gwcosal/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "gwcosal/runconfig.hpp"

namespace gwcosal::pipeline {

namespace {

constexpr char kMagic[4] = {'G', 'W', 'C', 'S'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kPrecF32 = 0;

void put_u8(std::ostream& out, std::uint8_t v) {
    out.put(static_cast<char>(v));
}

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                 static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    out.write(b, 4);
}

void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    std::ifstream in;
    std::string path;

    explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) throw IoError("cannot open weights file: " + p);
    }

    void bytes(void* dst, std::size_t n) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (in.gcount() != static_cast<std::streamsize>(n)) {
            throw ConfigError("truncated weights file: " + path);
        }
    }

    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }

    std::uint32_t u32() {
        std::uint8_t b[4];
        bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) |
               (static_cast<std::uint32_t>(b[3]) << 24);
    }

    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    bool at_end() {
        in.peek();
        return in.eof();
    }
};

} // namespace

void save_weights(const net::ParamStore<float>& params, const net::NetConfig& cfg,
                  const std::string& path) {
    cfg.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write weights file: " + path);

    out.write(kMagic, 4);
    put_u32(out, kVersion);
    const std::string cfg_json = net_config_to_json(cfg);
    put_u32(out, static_cast<std::uint32_t>(cfg_json.size()));
    out.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
    put_u32(out, static_cast<std::uint32_t>(params.entries.size()));

    for (const auto& [name, entry] : params.entries) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u8(out, kPrecF32);
        put_u32(out, 4);
        const Shape4& s = entry.value.shape;
        put_u32(out, static_cast<std::uint32_t>(s.n));
        put_u32(out, static_cast<std::uint32_t>(s.c));
        put_u32(out, static_cast<std::uint32_t>(s.h));
        put_u32(out, static_cast<std::uint32_t>(s.w));
        for (float v : entry.value.data) put_f32(out, v);
    }
    out.flush();
    if (!out) throw IoError("failed writing weights file: " + path);
}

std::pair<net::ParamStore<float>, net::NetConfig> load_weights(const std::string& path,
                                                               const net::NetConfig* expect) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw ConfigError("not a GWCS weights file: " + path);
    }
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw ConfigError("unsupported weights file version " + std::to_string(version) +
                          ": " + path);
    }
    const std::uint32_t cfg_len = r.u32();
    std::string cfg_json(cfg_len, '\0');
    r.bytes(cfg_json.data(), cfg_len);
    net::NetConfig cfg = net_config_from_json(cfg_json);
    if (expect && !(cfg == *expect)) {
        throw ConfigError("weights file config does not match the requested configuration: " +
                          path);
    }

    const std::map<std::string, Shape4> expected = net::param_shapes(cfg);
    const std::uint32_t count = r.u32();
    if (count != expected.size()) {
        throw ConfigError("weights file has " + std::to_string(count) + " tensors, expected " +
                          std::to_string(expected.size()) + ": " + path);
    }

    net::ParamStore<float> params;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint32_t name_len = r.u32();
        if (name_len > 4096) throw ConfigError("implausible tensor name length: " + path);
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len);
        const std::uint8_t prec = r.u8();
        if (prec != kPrecF32) {
            throw ConfigError("unsupported precision tag for \"" + name + "\": " + path);
        }
        const std::uint32_t rank = r.u32();
        if (rank != 4) {
            throw ConfigError("unsupported tensor rank " + std::to_string(rank) + " for \"" +
                              name + "\": " + path);
        }
        Shape4 shape{static_cast<long>(r.u32()), static_cast<long>(r.u32()),
                     static_cast<long>(r.u32()), static_cast<long>(r.u32())};
        const auto it = expected.find(name);
        if (it == expected.end()) {
            throw ConfigError("unexpected tensor \"" + name + "\" in weights file: " + path);
        }
        if (!(it->second == shape)) {
            throw ConfigError("tensor \"" + name + "\" has shape " + shape.str() +
                              ", config implies " + it->second.str() + ": " + path);
        }
        if (params.contains(name)) {
            throw ConfigError("duplicate tensor \"" + name + "\" in weights file: " + path);
        }
        Tensor<float> value(shape);
        for (std::size_t i = 0; i < value.data.size(); ++i) value.data[i] = r.f32();
        params.insert(name, std::move(value));
    }
    if (!r.at_end()) {
        throw ConfigError("trailing data after last tensor in weights file: " + path);
    }
    return {std::move(params), std::move(cfg)};
}

} // namespace gwcosal::pipeline
