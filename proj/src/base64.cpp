#include "egoassist/base64.hpp"

#include <openssl/evp.h>

#include "egoassist/error.hpp"

namespace egoassist {

std::string base64_encode(const std::uint8_t* data, std::size_t size) {
  std::string out(4 * ((size + 2) / 3), '\0');
  const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data,
                                      static_cast<int>(size));
  out.resize(static_cast<std::size_t>(written));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorCode::MalformedLine, "base64 length not a multiple of 4");
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  const int written = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                      static_cast<int>(text.size()));
  if (written < 0) throw Error(ErrorCode::MalformedLine, "invalid base64 payload");
  // EVP_DecodeBlock keeps the bytes that padding stands for; drop them.
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(written) - padding);
  return out;
}

}  // namespace egoassist
