#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>

#include "hieradapt/tensor.hpp"

namespace hieradapt::io {

// Little-endian primitives, written byte by byte so files are portable.
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, std::string_view s);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in);

// Named tensor block: name, rank, dims (u32 each), then values as f64.
void write_named_tensor(std::ostream& out, std::string_view name,
                        const numcore::Tensor& t);
std::pair<std::string, numcore::Tensor> read_named_tensor(std::istream& in);

// FNV-1a, used for artifact manifests and freeze checksums.
std::uint64_t fnv1a64(const void* bytes, std::size_t n);
std::uint64_t fnv1a64_append(std::uint64_t h, const void* bytes, std::size_t n);
std::uint64_t hash_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

// Writes to a temp file in the target directory, then renames into place.
void atomic_write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace hieradapt::io
