#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace picsift {

using Digest = std::array<std::uint8_t, 32>;

/// SHA-256 of an in-memory buffer.
Digest sha256(std::span<const std::uint8_t> bytes);
Digest sha256(std::string_view text);

/// SHA-256 of a file's bytes, streamed. Throws Error(io_error) when the file
/// cannot be read.
Digest sha256_file(const std::filesystem::path& path);

std::string to_hex(const Digest& digest);

/// Inverse of to_hex; throws Error(invalid_argument) on malformed input.
Digest digest_from_hex(std::string_view hex);

/// Incremental hasher for data produced in pieces.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::span<const std::uint8_t> bytes);
  void update(std::string_view text);
  Digest finish();

 private:
  void* ctx_;
};

}  // namespace picsift
