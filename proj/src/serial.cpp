#include "hieradapt/serial.hpp"

#include <bit>
#include <fstream>
#include <sstream>
#include <vector>

#include "hieradapt/errors.hpp"

namespace hieradapt::io {

namespace {

void put_bytes(std::ostream& out, std::uint64_t v, int n) {
    char buf[8];
    for (int i = 0; i < n; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, n);
}

std::uint64_t get_bytes(std::istream& in, int n) {
    char buf[8];
    in.read(buf, n);
    if (!in) throw IoError("unexpected end of stream");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return v;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { put_bytes(out, v, 4); }
void write_u64(std::ostream& out, std::uint64_t v) { put_bytes(out, v, 8); }
void write_f64(std::ostream& out, double v) { put_bytes(out, std::bit_cast<std::uint64_t>(v), 8); }

void write_string(std::ostream& out, std::string_view s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) { return static_cast<std::uint32_t>(get_bytes(in, 4)); }
std::uint64_t read_u64(std::istream& in) { return get_bytes(in, 8); }
double read_f64(std::istream& in) { return std::bit_cast<double>(get_bytes(in, 8)); }

std::string read_string(std::istream& in) {
    const std::uint32_t n = read_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw IoError("unexpected end of stream while reading string");
    return s;
}

void write_named_tensor(std::ostream& out, std::string_view name, const numcore::Tensor& t) {
    write_string(out, name);
    write_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) write_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) write_f64(out, v);
}

std::pair<std::string, numcore::Tensor> read_named_tensor(std::istream& in) {
    std::string name = read_string(in);
    const std::uint32_t rank = read_u32(in);
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
        d = read_u32(in);
        n *= d;
    }
    std::vector<double> values(n);
    for (double& v : values) v = read_f64(in);
    return {std::move(name), numcore::Tensor::from_data(std::move(shape), std::move(values))};
}

std::uint64_t fnv1a64(const void* bytes, std::size_t n) {
    return fnv1a64_append(1469598103934665603ULL, bytes, n);
}

std::uint64_t fnv1a64_append(std::uint64_t h, const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t hash_file(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    return fnv1a64(bytes.data(), bytes.size());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void atomic_write_file(const std::filesystem::path& path, std::string_view bytes) {
    namespace fs = std::filesystem;
    const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    fs::create_directories(dir);
    const fs::path tmp = dir / (path.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open temp file: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

}  // namespace hieradapt::io
