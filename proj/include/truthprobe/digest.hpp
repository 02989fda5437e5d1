#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "truthprobe/linalg.hpp"

namespace truthprobe {

/// Incremental SHA-256 used for content digests (dataset identity, cache keys,
/// output directory names).
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const std::byte> bytes);
  Sha256& update(std::string_view text);
  Sha256& update(std::uint64_t value);
  Sha256& update(double value);
  Sha256& update(const Matrix& m);
  Sha256& update(const Vector& v);

  /// Lowercase hex. The hasher must not be used afterwards.
  std::string hex();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view text);

}  // namespace truthprobe
