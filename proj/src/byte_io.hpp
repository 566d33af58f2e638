#pragma once
// Little-endian byte buffer writer/reader shared by the file formats.

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mecc::detail {

// Thrown by ByteReader on running past the end of the buffer.
struct TruncatedInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ByteWriter {
 public:
  template <class T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::byte*>(&value);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(std::span<const std::byte> bytes) {
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_bytes(std::as_bytes(std::span<const char>(s.data(), s.size())));
  }
  std::vector<std::byte>& buffer() { return buf_; }

 private:
  std::vector<std::byte> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> data) : data_(data) {}

  template <class T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)).data(), sizeof(T));
    return value;
  }
  std::span<const std::byte> take(std::size_t n) {
    if (n > data_.size() - pos_) {
      throw TruncatedInput("unexpected end of data at byte " + std::to_string(pos_));
    }
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::string get_string(std::size_t max_len) {
    const auto n = get<std::uint32_t>();
    if (n > max_len) throw std::runtime_error("string length " + std::to_string(n) + " too large");
    auto b = take(n);
    return std::string(reinterpret_cast<const char*>(b.data()), n);
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::byte> data_;
  std::size_t pos_ = 0;
};

std::vector<std::byte> read_file(const std::string& path);
// Writes to path + ".tmp" then renames over path.
void write_file_atomic(const std::string& path, std::span<const std::byte> data);

}  // namespace mecc::detail
