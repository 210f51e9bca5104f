#include "xgap/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "xgap/error.hpp"

namespace xgap {

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw IoError("archive truncated while reading " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& os, double v) {
    // Host is little-endian; stored byte order is the wire format.
    os.write(reinterpret_cast<const char*>(&v), 8);
}

double read_f64(std::istream& is, const std::string& what) {
    double v;
    if (!is.read(reinterpret_cast<char*>(&v), 8))
        throw IoError("archive truncated while reading " + what);
    return v;
}

void write_name(std::ostream& os, const std::string& name) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
}

std::string read_name(std::istream& is) {
    const std::uint32_t len = read_u32(is, "name length");
    if (len > 4096) throw IoError("archive name length implausible: " + std::to_string(len));
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw IoError("archive truncated while reading name");
    return name;
}

}  // namespace

double Archive::meta_value(const std::string& name) const {
    for (const auto& [k, v] : meta)
        if (k == name) return v;
    throw IoError("archive metadata missing entry '" + name + "'");
}

bool Archive::has_meta(const std::string& name) const {
    for (const auto& [k, v] : meta)
        if (k == name) return true;
    return false;
}

const Tensor& Archive::tensor(const std::string& name) const {
    for (const auto& [k, t] : tensors)
        if (k == name) return t;
    throw IoError("archive missing tensor '" + name + "'");
}

void Archive::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        write_name(os, k);
        write_f64(os, v);
    }
    write_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [k, t] : tensors) {
        write_name(os, k);
        write_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) write_u32(os, static_cast<std::uint32_t>(t.dim(i)));
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!os) throw IoError("write failed for '" + path + "'");
}

Archive Archive::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("'" + path + "' is not an XGAP archive (bad magic)");
    const std::uint32_t version = read_u32(is, "version");
    if (version != kVersion)
        throw IoError("'" + path + "' has unsupported format version " + std::to_string(version));

    Archive a;
    const std::uint32_t n_meta = read_u32(is, "metadata count");
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string name = read_name(is);
        const double v = read_f64(is, "metadata value");
        a.meta.emplace_back(std::move(name), v);
    }
    const std::uint32_t n_tensors = read_u32(is, "tensor count");
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        std::string name = read_name(is);
        const std::uint32_t rank = read_u32(is, "rank");
        if (rank > 8) throw IoError("archive tensor rank implausible: " + std::to_string(rank));
        std::vector<int> shape;
        std::size_t count = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t dim = read_u32(is, "dim");
            if (dim == 0 || dim > (1u << 28)) throw IoError("archive dim out of range");
            shape.push_back(static_cast<int>(dim));
            count *= dim;
        }
        std::vector<double> data(count);
        if (!is.read(reinterpret_cast<char*>(data.data()),
                     static_cast<std::streamsize>(count * sizeof(double))))
            throw IoError("archive truncated inside tensor '" + name + "'");
        a.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return a;
}

bool Archive::sniff(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    char magic[4];
    return is && is.read(magic, 4) && std::memcmp(magic, kMagic, 4) == 0;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
}

std::string format_f64(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace xgap
