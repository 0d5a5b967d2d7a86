#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace giva {

/// SHA-256 digest as a lowercase hex string. Used for checkpoint content
/// hashes; self-contained so blobs stay auditable without extra tooling.
std::string sha256_hex(std::span<const unsigned char> data);

} // namespace giva
