#pragma once

#include <string>
#include <string_view>

namespace affect {

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

/// First 16 hex characters of the SHA-256 digest; used for schema and config tags.
std::string short_hash(std::string_view bytes);

}  // namespace affect
