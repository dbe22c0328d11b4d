#include "rems/hash_core.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <stdexcept>

namespace rems {

namespace {

thread_local std::uint64_t g_invocations = 0;

const EVP_MD* sha256_md() {
  // Explicit fetch avoids the per-call implicit lookup in OpenSSL 3.
  static EVP_MD* md = EVP_MD_fetch(nullptr, "SHA256", nullptr);
  if (md == nullptr) throw std::runtime_error("SHA256 unavailable in libcrypto");
  return md;
}

EVP_MD_CTX* as_ctx(void* p) { return static_cast<EVP_MD_CTX*>(p); }

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string to_hex(ByteView data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw std::invalid_argument("odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex character");
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

BitString::BitString(Bytes packed, std::size_t length)
    : packed_(std::move(packed)), length_(length) {
  if (packed_.size() != (length_ + 7) / 8)
    throw std::invalid_argument("packed size does not match bit length");
  if (length_ % 8 != 0) {
    std::uint8_t mask = static_cast<std::uint8_t>(0xff >> (length_ % 8));
    if (packed_.back() & mask)
      throw std::invalid_argument("nonzero padding bits in bit string");
  }
}

BitString BitString::from_string(std::string_view bits) {
  Bytes packed((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] == '1')
      packed[i / 8] |= static_cast<std::uint8_t>(0x80 >> (i % 8));
    else if (bits[i] != '0')
      throw std::invalid_argument("bit string must contain only 0 and 1");
  }
  return BitString(std::move(packed), bits.size());
}

std::string BitString::to_string() const {
  std::string out(length_, '0');
  for (std::size_t i = 0; i < length_; ++i)
    if (bit(i)) out[i] = '1';
  return out;
}

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  if (ctx_ == nullptr || EVP_DigestInit_ex(as_ctx(ctx_), sha256_md(), nullptr) != 1)
    throw std::runtime_error("EVP_DigestInit_ex failed");
}

Sha256::~Sha256() { EVP_MD_CTX_free(as_ctx(ctx_)); }

Sha256& Sha256::update(ByteView data) {
  if (EVP_DigestUpdate(as_ctx(ctx_), data.data(), data.size()) != 1)
    throw std::runtime_error("EVP_DigestUpdate failed");
  return *this;
}

Digest Sha256::finalize() {
  Digest out;
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(as_ctx(ctx_), out.bytes.data(), &len) != 1 || len != 32)
    throw std::runtime_error("EVP_DigestFinal_ex failed");
  EVP_DigestInit_ex(as_ctx(ctx_), sha256_md(), nullptr);
  ++g_invocations;
  return out;
}

Digest sha256(ByteView data) {
  thread_local Sha256 hasher;
  return hasher.update(data).finalize();
}

Digest iterate_hash(ByteView data, std::uint64_t reps) {
  if (reps == 0) throw std::invalid_argument("iterate_hash requires reps >= 1");
  Digest d = sha256(data);
  for (std::uint64_t i = 1; i < reps; ++i) d = sha256(d.view());
  return d;
}

Digest iterate_hash(const Digest& d, std::uint64_t reps) {
  return iterate_hash(d.view(), reps);
}

std::uint64_t sha256_invocations() { return g_invocations; }

BitString trim_bits(const Digest& d, BitWindow w) {
  if (!w.valid()) throw std::out_of_range("bit window out of range");
  std::size_t width = w.width();
  Bytes packed((width + 7) / 8, 0);
  for (std::size_t i = 0; i < width; ++i) {
    std::size_t src = w.from + i;
    if ((d.bytes[src / 8] >> (7 - src % 8)) & 1u)
      packed[i / 8] |= static_cast<std::uint8_t>(0x80 >> (i % 8));
  }
  return BitString(std::move(packed), width);
}

bool window_matches(const Digest& d, BitWindow w, const BitString& target) {
  if (!w.valid()) throw std::out_of_range("bit window out of range");
  if (target.size() != w.width()) return false;
  for (std::size_t i = 0; i < target.size(); ++i) {
    std::size_t src = w.from + i;
    bool bit = (d.bytes[src / 8] >> (7 - src % 8)) & 1u;
    if (bit != target.bit(i)) return false;
  }
  return true;
}

Difficulty::Difficulty(Digest threshold) : threshold_(threshold) {
  if (threshold_.is_zero())
    throw std::invalid_argument("difficulty threshold must be positive");
}

Difficulty Difficulty::power_of_two(unsigned exponent) {
  if (exponent > 255) throw std::invalid_argument("exponent must be <= 255");
  Digest t;
  t.bytes[31 - exponent / 8] = static_cast<std::uint8_t>(1u << (exponent % 8));
  return Difficulty(t);
}

Difficulty Difficulty::maximum() {
  Digest t;
  t.bytes.fill(0xff);
  return Difficulty(t);
}

double Difficulty::acceptance_probability() const {
  // Leading 64 bits carry all the precision a double can hold.
  long double v = 0;
  for (auto b : threshold_.bytes) v = v * 256.0L + b;
  return static_cast<double>(std::ldexp(v + 1.0L, -256));
}

bool meets_difficulty(const Digest& d, const Difficulty& diff) {
  return d.bytes <= diff.threshold().bytes;
}

void append_u64(Bytes& out, std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8)
    out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void append_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace rems
