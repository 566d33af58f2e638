#include "mecc/hash.hpp"

#include <openssl/evp.h>

#include <stdexcept>

namespace mecc {

struct Sha256::Ctx {
  EVP_MD_CTX* md = nullptr;
};

Sha256::Sha256() : ctx_(std::make_unique<Ctx>()) {
  ctx_->md = EVP_MD_CTX_new();
  if (!ctx_->md || EVP_DigestInit_ex(ctx_->md, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: cannot initialize digest");
  }
}

Sha256::~Sha256() { EVP_MD_CTX_free(ctx_->md); }

Sha256& Sha256::update(std::span<const std::byte> data) {
  if (EVP_DigestUpdate(ctx_->md, data.data(), data.size()) != 1) {
    throw std::runtime_error("sha256: update failed");
  }
  return *this;
}

Sha256& Sha256::update(std::string_view data) {
  return update(std::as_bytes(std::span<const char>(data.data(), data.size())));
}

Digest Sha256::finish() {
  Digest out{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx_->md, out.data(), &len) != 1 || len != out.size()) {
    throw std::runtime_error("sha256: finalize failed");
  }
  return out;
}

Digest sha256(std::span<const std::byte> data) { return Sha256().update(data).finish(); }

Digest sha256(std::string_view data) { return Sha256().update(data).finish(); }

std::string to_hex(const Digest& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (auto b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 15]);
  }
  return out;
}

Digest tensor_sha256(const Tensor& tensor) {
  Sha256 h;
  std::string header(dtype_name(tensor.dtype()));
  header += shape_str(tensor.shape());
  h.update(header);
  h.update(tensor.bytes());
  return h.finish();
}

}  // namespace mecc
