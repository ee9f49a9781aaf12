#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace dmlsl {

// Lowercase hex SHA-256 digest (64 characters).
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

bool is_sha256_hex(std::string_view key) noexcept;

}  // namespace dmlsl
