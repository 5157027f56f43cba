#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mils {

using Digest = std::array<std::uint8_t, 32>;

/// SHA-256 of a byte range.
Digest sha256(std::span<const std::uint8_t> bytes);
Digest sha256(std::string_view bytes);
std::string to_hex(const Digest& digest);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::string base64_encode(std::string_view bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

enum class MediaKind { image, video, audio };

std::string to_string(MediaKind kind);
MediaKind media_kind_from_string(std::string_view name);

/// A reference to media bytes on disk, pinned by content hash.
struct MediaHandle {
  MediaKind kind = MediaKind::image;
  std::string uri_or_path;
  Digest content_hash{};

  /// Reads the file and records its hash. Throws IoError if unreadable.
  static MediaHandle from_file(MediaKind kind, const std::filesystem::path& path);

  /// Writes bytes into `dir` under a content-addressed name and returns the handle.
  static MediaHandle store(MediaKind kind, std::span<const std::uint8_t> bytes,
                           const std::filesystem::path& dir, std::string_view extension);

  std::vector<std::uint8_t> read_bytes() const;

  /// True when the referenced bytes still hash to content_hash.
  bool verify() const;

  std::string hash_hex() const { return to_hex(content_hash); }

  friend bool operator==(const MediaHandle&, const MediaHandle&) = default;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace mils
