// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>

namespace dormctl {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// First 16 hex chars of sha256_hex; used for trace payload digests.
std::string short_digest(std::string_view data);

/// `nbytes` bytes from the system CSPRNG, as lowercase hex.
std::string random_hex(std::size_t nbytes);

} // namespace dormctl
