// SPDX-License-Identifier: Apache-2.0
#include "dormctl/digest.hpp"

#include "dormctl/error.hpp"

#include <openssl/rand.h>
#include <openssl/sha.h>

#include <array>
#include <vector>

namespace dormctl {

namespace {

std::string to_hex(const unsigned char* data, std::size_t n)
{
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(hex[data[i] >> 4]);
        out.push_back(hex[data[i] & 0x0f]);
    }
    return out;
}

} // namespace

std::string sha256_hex(std::string_view data)
{
    std::array<unsigned char, SHA256_DIGEST_LENGTH> md{};
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), md.data());
    return to_hex(md.data(), md.size());
}

std::string short_digest(std::string_view data)
{
    return sha256_hex(data).substr(0, 16);
}

std::string random_hex(std::size_t nbytes)
{
    std::vector<unsigned char> buf(nbytes);
    if (nbytes > 0 && RAND_bytes(buf.data(), static_cast<int>(nbytes)) != 1)
        throw Error(ErrorCode::TransportError, "system random source unavailable");
    return to_hex(buf.data(), buf.size());
}

} // namespace dormctl
