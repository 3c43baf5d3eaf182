#include "gridcert/digest.hpp"

#include <array>
#include <cstdio>

#include <openssl/sha.h>

namespace gridcert {

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> md{};
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), md.data());
  std::string out;
  out.reserve(md.size() * 2);
  char buf[3];
  for (unsigned char c : md) {
    std::snprintf(buf, sizeof(buf), "%02x", c);
    out += buf;
  }
  return out;
}

}  // namespace gridcert
