#include <gtest/gtest.h>

#include "mils/errors.hpp"
#include "mils/media.hpp"
#include "support.hpp"

namespace mils {
namespace {

TEST(Digest, KnownVectors) {
  EXPECT_EQ(to_hex(sha256(std::string_view(""))),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(to_hex(sha256(std::string_view("abc"))),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Base64, RoundTripAndKnown) {
  EXPECT_EQ(base64_encode(std::string_view("foobar")), "Zm9vYmFy");
  EXPECT_EQ(base64_encode(std::string_view("fo")), "Zm8=");
  for (const std::string& s : std::vector<std::string>{"", "f", "fo", "foo", "foob", "fooba", "foobar",
                                                       std::string("\0\xff\x10", 3)}) {
    const auto bytes = base64_decode(base64_encode(s));
    EXPECT_EQ(std::string(bytes.begin(), bytes.end()), s);
  }
}

TEST(MediaHandle, StoreIsContentAddressedAndVerifies) {
  test::TempDir dir;
  const std::string payload = "\x89PNG fake bytes";
  const std::vector<std::uint8_t> bytes(payload.begin(), payload.end());
  const auto h = MediaHandle::store(MediaKind::image, bytes, dir.path(), "png");
  EXPECT_EQ(h.content_hash, sha256(bytes));
  EXPECT_EQ(std::filesystem::path(h.uri_or_path).filename().string(), h.hash_hex() + ".png");
  EXPECT_TRUE(h.verify());
  EXPECT_EQ(MediaHandle::store(MediaKind::image, bytes, dir.path(), "png"), h);

  test::spit(h.uri_or_path, "tampered");
  EXPECT_FALSE(h.verify());
}

TEST(MediaHandle, FromFileHashesBytes) {
  test::TempDir dir;
  test::spit(dir / "a.wav", "RIFF....");
  const auto h = MediaHandle::from_file(MediaKind::audio, dir / "a.wav");
  EXPECT_EQ(h.hash_hex(), to_hex(sha256(std::string_view("RIFF...."))));
  EXPECT_THROW(MediaHandle::from_file(MediaKind::audio, dir / "missing.wav"), IoError);
}

TEST(MediaKind, Names) {
  for (auto k : {MediaKind::image, MediaKind::video, MediaKind::audio}) {
    EXPECT_EQ(media_kind_from_string(to_string(k)), k);
  }
  EXPECT_THROW(media_kind_from_string("smell"), ConfigError);
}

TEST(WriteAtomic, LeavesNoTempFiles) {
  test::TempDir dir;
  write_file_atomic(dir / "x.txt", std::string_view("one"));
  write_file_atomic(dir / "x.txt", std::string_view("two"));
  EXPECT_EQ(test::slurp(dir / "x.txt"), "two");
  int files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
  EXPECT_EQ(files, 1);
}

}  // namespace
}  // namespace mils
