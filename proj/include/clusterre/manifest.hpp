#pragma once

#include <openssl/evp.h>

#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

// Content hashing for run manifests. Requires linking OpenSSL's libcrypto.
namespace clusterre {

inline std::string hex_digest(const unsigned char* md, unsigned int len) {
  std::string out;
  out.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    out += buf;
  }
  return out;
}

inline std::string sha1_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("sha1: digest failed");
  return hex_digest(md, len);
}

// Hash of `content` as git stores it: sha1("blob <size>\0" + content).
inline std::string git_blob_hash(std::string_view content) {
  std::string framed = "blob " + std::to_string(content.size());
  framed.push_back('\0');
  framed.append(content);
  return sha1_hex(framed);
}

}  // namespace clusterre
