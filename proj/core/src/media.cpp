#include <fstream>
#include <random>

#include "mils/errors.hpp"
#include "mils/media.hpp"

namespace mils {

std::string to_string(MediaKind kind) {
  switch (kind) {
    case MediaKind::image: return "image";
    case MediaKind::video: return "video";
    case MediaKind::audio: return "audio";
  }
  return "image";
}

MediaKind media_kind_from_string(std::string_view name) {
  if (name == "image") return MediaKind::image;
  if (name == "video") return MediaKind::video;
  if (name == "audio") return MediaKind::audio;
  throw ConfigError("unknown media kind '" + std::string(name) + "'", "kind");
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  thread_local std::mt19937_64 rng{std::random_device{}()};
  auto tmp = path;
  tmp += ".tmp" + std::to_string(rng() & 0xFFFFFFFF);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

MediaHandle MediaHandle::from_file(MediaKind kind, const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return MediaHandle{kind, path.string(), sha256(bytes)};
}

MediaHandle MediaHandle::store(MediaKind kind, std::span<const std::uint8_t> bytes, const std::filesystem::path& dir,
                               std::string_view extension) {
  const auto digest = sha256(bytes);
  auto path = dir / (to_hex(digest) + "." + std::string(extension));
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) write_file_atomic(path, bytes);
  return MediaHandle{kind, path.string(), digest};
}

std::vector<std::uint8_t> MediaHandle::read_bytes() const { return read_file_bytes(uri_or_path); }

bool MediaHandle::verify() const {
  try {
    return sha256(read_bytes()) == content_hash;
  } catch (const IoError&) {
    return false;
  }
}

}  // namespace mils
