#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "xtra/common.hpp"

namespace xtra {

// Calls fn(line_number, line) for every line; line numbers are 1-based and
// a trailing \r is stripped.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::size_t, const std::string&)>& fn);

std::uint64_t hash_file(const std::filesystem::path& path);

// Little-endian scalar IO, independent of host byte order.
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
std::uint32_t read_u32(std::istream& in, const char* what);
std::uint64_t read_u64(std::istream& in, const char* what);
float read_f32(std::istream& in, const char* what);
double read_f64(std::istream& in, const char* what);

std::ofstream open_out(const std::filesystem::path& path, bool binary = false);
std::ifstream open_in(const std::filesystem::path& path, bool binary = false);

}  // namespace xtra
