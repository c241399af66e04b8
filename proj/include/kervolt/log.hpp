#pragma once

#include <cstddef>
#include <string_view>

namespace kervolt::log {

// Warnings go to stderr; the counter lets callers (and tests) detect that a
// warning fired without parsing the stream.
void warn(std::string_view msg);
std::size_t warn_count();
void reset_warn_count();

}  // namespace kervolt::log
