#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace gapa {

/// Version written into every file this library produces.
inline constexpr int kFormatVersion = 1;

/// Shortest-safe text for a double: 17 significant digits, with negative
/// zero spelled "-0.0" so it survives a round trip through a JSON parser.
std::string format_real(double v);

/// JSON array of reals formatted with format_real.
std::string real_array(std::span<const double> values);

/// JSON string literal with escaping.
std::string quote(std::string_view s);

/// 64-bit FNV-1a hash rendered as 16 hex digits.
std::string digest_hex(std::string_view text);

/// Writes `text` to `path`; throws PersistenceError on failure.
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace gapa
