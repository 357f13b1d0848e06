#include "vbs/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace vbs {

namespace {

constexpr char kMagic[4] = {'V', 'B', 'S', 'G'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(out, bits);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError("checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw DataError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

double read_f64(std::istream& in) {
    const std::uint64_t bits = read_u64(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void save_checkpoint(const ParameterSet& params, const std::string& config_echo,
                     const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(config_echo.size()));
    out.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
    write_u64(out, params.size());
    for (const auto& [name, t] : params) {
        write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, static_cast<std::uint32_t>(t->shape.size()));
        for (auto e : t->shape) write_u64(out, static_cast<std::uint64_t>(e));
        for (double v : t->values) write_f64(out, v);
    }
    if (!out) throw DataError("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(ParameterSet& params, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("not a checkpoint file (bad magic): " + path);
    const std::uint32_t version = read_u32(in);
    if (version != kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    LoadedCheckpoint loaded;
    const std::uint32_t echo_len = read_u32(in);
    loaded.config_echo.resize(echo_len);
    in.read(loaded.config_echo.data(), echo_len);
    if (!in) throw DataError("checkpoint truncated");
    const std::uint64_t count = read_u64(in);
    if (count != params.size())
        throw DataError("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                          std::to_string(params.size()));
    auto it = params.begin();
    for (std::uint64_t k = 0; k < count; ++k, ++it) {
        const std::uint32_t name_len = read_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw DataError("checkpoint truncated");
        if (name != it->first)
            throw DataError("checkpoint parameter order mismatch: got " + name + ", expected " +
                              it->first);
        const std::uint32_t rank = read_u32(in);
        Shape shape(rank);
        for (auto& e : shape) e = static_cast<std::int64_t>(read_u64(in));
        if (shape != it->second->shape)
            throw DataError("checkpoint shape mismatch for " + name + ": " + shape_str(shape) +
                              " vs " + shape_str(it->second->shape));
        for (auto& v : it->second->values) v = read_f64(in);
    }
    return loaded;
}

}  // namespace vbs
