// Little-endian encoding helpers shared by the on-disk formats.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pixadapt/error.hpp"

namespace pixadapt::detail {

template <typename T>
T byteswap_if_big(T value) {
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    return value;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
      std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
}

class ByteWriter {
 public:
  void magic(std::string_view tag) { buffer_.insert(buffer_.end(), tag.begin(), tag.end()); }

  template <typename T>
  void put(T value) {
    value = byteswap_if_big(value);
    const auto* raw = reinterpret_cast<const char*>(&value);
    buffer_.insert(buffer_.end(), raw, raw + sizeof(T));
  }

  const std::vector<char>& bytes() const { return buffer_; }

 private:
  std::vector<char> buffer_;
};

class ByteReader {
 public:
  ByteReader(std::vector<char> bytes, std::string source)
      : bytes_(std::move(bytes)), source_(std::move(source)) {}

  void expect_magic(std::string_view tag) {
    if (remaining() < tag.size() ||
        std::string_view(bytes_.data() + offset_, tag.size()) != tag) {
      throw Error(ErrorCode::kBadMagic,
                  source_ + ": expected magic \"" + std::string(tag) + "\"");
    }
    offset_ += tag.size();
  }

  template <typename T>
  T get() {
    if (remaining() < sizeof(T)) {
      throw Error(ErrorCode::kTruncated, source_ + ": truncated payload at byte " +
                                             std::to_string(offset_));
    }
    T value;
    std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return byteswap_if_big(value);
  }

  std::size_t remaining() const { return bytes_.size() - offset_; }

  void require(std::size_t count) const {
    if (remaining() < count) {
      throw Error(ErrorCode::kTruncated,
                  source_ + ": truncated payload, expected " + std::to_string(count) +
                      " bytes, found " + std::to_string(remaining()));
    }
  }

  void expect_end() const {
    if (remaining() != 0) {
      throw Error(ErrorCode::kTrailingData,
                  source_ + ": " + std::to_string(remaining()) + " unexpected trailing bytes");
    }
  }

  const std::string& source() const { return source_; }

 private:
  std::vector<char> bytes_;
  std::string source_;
  std::size_t offset_ = 0;
};

std::vector<char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace pixadapt::detail
