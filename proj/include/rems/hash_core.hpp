#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rems {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

std::string to_hex(ByteView data);
/// Decodes lowercase or uppercase hex. Throws std::invalid_argument on odd
/// length or non-hex characters.
Bytes from_hex(std::string_view hex);

/// Fixed 32-byte value. The tag keeps digests, keys and seeds from mixing.
template <typename Tag>
struct Bytes32 {
  std::array<std::uint8_t, 32> bytes{};

  auto operator<=>(const Bytes32&) const = default;

  ByteView view() const { return {bytes.data(), bytes.size()}; }
  std::string hex() const { return to_hex(view()); }
  bool is_zero() const {
    for (auto b : bytes)
      if (b != 0) return false;
    return true;
  }

  static Bytes32 from_bytes(ByteView data);
  static Bytes32 from_hex(std::string_view hex) {
    return from_bytes(rems::from_hex(hex));
  }
};

struct DigestTag;
struct PublicKeyTag;
struct SeedTag;

/// 256-bit big-endian value, bit 0 is the MSB of byte 0.
using Digest = Bytes32<DigestTag>;
using PublicKey = Bytes32<PublicKeyTag>;
/// Per-attempt nonce appended to the header draft.
using Seed = Bytes32<SeedTag>;

template <typename Tag>
Bytes32<Tag> Bytes32<Tag>::from_bytes(ByteView data) {
  if (data.size() != 32) throw std::invalid_argument("expected 32 bytes");
  Bytes32 out;
  std::copy(data.begin(), data.end(), out.bytes.begin());
  return out;
}

/// Half-open bit range [from, to) over a 256-bit digest.
struct BitWindow {
  std::uint16_t from = 0;
  std::uint16_t to = 0;

  std::size_t width() const { return to >= from ? to - from : 0; }
  bool valid() const { return from <= to && to <= 256; }
  bool operator==(const BitWindow&) const = default;
};

/// Bit string packed MSB-first; padding bits in the last byte are zero.
class BitString {
 public:
  BitString() = default;
  BitString(Bytes packed, std::size_t length);

  /// Parses a string of '0'/'1' characters.
  static BitString from_string(std::string_view bits);

  std::size_t size() const { return length_; }
  bool empty() const { return length_ == 0; }
  bool bit(std::size_t i) const {
    return (packed_[i / 8] >> (7 - i % 8)) & 1u;
  }
  const Bytes& packed() const { return packed_; }
  std::string to_string() const;

  bool operator==(const BitString&) const = default;

 private:
  Bytes packed_;
  std::size_t length_ = 0;
};

/// Streaming SHA-256. Each finalize() counts as one invocation.
class Sha256 {
 public:
  Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;
  ~Sha256();

  Sha256& update(ByteView data);
  Sha256& update(std::uint8_t byte) { return update(ByteView{&byte, 1}); }
  Digest finalize();

 private:
  void* ctx_;
};

Digest sha256(ByteView data);
inline Digest sha256(std::string_view text) {
  return sha256(
      ByteView{reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

/// SHA-256 applied `reps` times; the first round consumes `data`, later ones
/// the previous 32-byte digest. Throws std::invalid_argument when reps == 0.
Digest iterate_hash(ByteView data, std::uint64_t reps);
Digest iterate_hash(const Digest& d, std::uint64_t reps);

/// Number of SHA-256 compressions finalized on the calling thread.
std::uint64_t sha256_invocations();

/// Throws std::out_of_range if the window is invalid.
BitString trim_bits(const Digest& d, BitWindow w);
/// Same as trim_bits(d, w) == target without materialising the substring.
bool window_matches(const Digest& d, BitWindow w, const BitString& target);

class Difficulty {
 public:
  /// Throws std::invalid_argument on a zero threshold.
  explicit Difficulty(Digest threshold);

  /// Threshold 2^exponent, exponent in [0, 255].
  static Difficulty power_of_two(unsigned exponent);
  /// Threshold 2^256 - 1; every digest qualifies.
  static Difficulty maximum();

  const Digest& threshold() const { return threshold_; }
  /// (threshold + 1) / 2^256 under the uniform-output model.
  double acceptance_probability() const;

  bool operator==(const Difficulty&) const = default;

 private:
  Digest threshold_;
};

/// True iff d, read as a big-endian integer, is <= the threshold.
bool meets_difficulty(const Digest& d, const Difficulty& diff);

void append_u64(Bytes& out, std::uint64_t v);
void append_u16(Bytes& out, std::uint16_t v);

}  // namespace rems
