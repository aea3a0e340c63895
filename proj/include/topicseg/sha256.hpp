#pragma once

#include <string>
#include <string_view>

namespace topicseg {

// SHA-256 digest of the input bytes, as a lowercase hex string.
std::string sha256_hex(std::string_view data);

}  // namespace topicseg
