#include "truthprobe/digest.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <stdexcept>

namespace truthprobe {

struct Sha256::Impl {
  EVP_MD_CTX* ctx = nullptr;
  ~Impl() { EVP_MD_CTX_free(ctx); }
};

Sha256::Sha256() : impl_(std::make_unique<Impl>()) {
  impl_->ctx = EVP_MD_CTX_new();
  if (impl_->ctx == nullptr || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: context init failed");
  }
}

Sha256::~Sha256() = default;

Sha256& Sha256::update(std::span<const std::byte> bytes) {
  EVP_DigestUpdate(impl_->ctx, bytes.data(), bytes.size());
  return *this;
}

Sha256& Sha256::update(std::string_view text) {
  update(static_cast<std::uint64_t>(text.size()));
  return update(std::as_bytes(std::span(text.data(), text.size())));
}

Sha256& Sha256::update(std::uint64_t value) {
  std::byte buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::byte>((value >> (8 * i)) & 0xffu);
  return update(std::span<const std::byte>(buf, 8));
}

Sha256& Sha256::update(double value) { return update(std::bit_cast<std::uint64_t>(value)); }

Sha256& Sha256::update(const Matrix& m) {
  update(static_cast<std::uint64_t>(m.rows()));
  update(static_cast<std::uint64_t>(m.cols()));
  if constexpr (std::endian::native == std::endian::little) {
    return update(std::as_bytes(std::span(m.data(), static_cast<std::size_t>(m.size()))));
  }
  for (Index i = 0; i < m.size(); ++i) update(m.data()[i]);
  return *this;
}

Sha256& Sha256::update(const Vector& v) {
  update(static_cast<std::uint64_t>(v.size()));
  if constexpr (std::endian::native == std::endian::little) {
    return update(std::as_bytes(std::span(v.data(), static_cast<std::size_t>(v.size()))));
  }
  for (Index i = 0; i < v.size(); ++i) update(v[i]);
  return *this;
}

std::string Sha256::hex() {
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(impl_->ctx, out, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    s.push_back(kHex[out[i] >> 4]);
    s.push_back(kHex[out[i] & 0xf]);
  }
  return s;
}

std::string sha256_hex(std::string_view text) {
  Sha256 h;
  h.update(std::as_bytes(std::span(text.data(), text.size())));
  return h.hex();
}

}  // namespace truthprobe
