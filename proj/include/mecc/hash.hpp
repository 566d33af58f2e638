#pragma once
// SHA-256 helpers (OpenSSL EVP).

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "mecc/tensor.hpp"

namespace mecc {

using Digest = std::array<std::uint8_t, 32>;

class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const std::byte> data);
  Sha256& update(std::string_view data);
  Digest finish();

 private:
  struct Ctx;
  std::unique_ptr<Ctx> ctx_;
};

Digest sha256(std::span<const std::byte> data);
Digest sha256(std::string_view data);
std::string to_hex(const Digest& digest);

// Hash of dtype, shape and raw values, so equal digests mean bitwise-equal
// tensors.
Digest tensor_sha256(const Tensor& tensor);

}  // namespace mecc
