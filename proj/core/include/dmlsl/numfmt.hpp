#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace dmlsl {

// Shortest decimal string that parses back to the same double.
std::string format_double(double value);

// Whole-string parse; leading/trailing ASCII whitespace allowed. Accepts
// "nan"/"inf" spellings, so callers must check finiteness themselves.
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);
std::optional<unsigned long long> parse_uint(std::string_view text);

std::string_view trim(std::string_view text) noexcept;

}  // namespace dmlsl
