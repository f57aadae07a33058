#pragma once

#include <string>
#include <string_view>

namespace geoprobe::crypto {

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

// Lowercase hex HMAC-SHA256 of `message` under `key`.
std::string hmac_sha256_hex(std::string_view key, std::string_view message);

// Constant-time comparison for digests.
bool digest_equal(std::string_view a, std::string_view b) noexcept;

}  // namespace geoprobe::crypto
