#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace remap {

constexpr std::string_view kToolVersion = "0.1.0";

// FNV-1a 64-bit. Content fingerprint for provenance checks, not security.
uint64_t fnv1a64(std::string_view bytes);
uint64_t fnv1a64_file(const std::string& path);
std::string hash_hex(uint64_t h);

// Shortest round-trip decimal form via std::to_chars. All numeric text this
// project writes goes through here so reruns are byte-identical.
std::string format_double(double v);
double parse_double(std::string_view s);
uint64_t parse_u64(std::string_view s);
uint64_t parse_u64_hex(std::string_view s);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

std::vector<std::string_view> split_ws(std::string_view line);

// Default output directory: $REMAP_OUT_DIR when set, else ".".
std::string default_out_dir();

}  // namespace remap
