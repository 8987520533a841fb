#pragma once

// Canonical binary encoding: fixed field order, big-endian integers,
// u32 length prefixes on variable-length fields. Every digest and signature
// in the system is computed over bytes produced here.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xdeal/crypto.hpp"
#include "xdeal/errors.hpp"

namespace xdeal {

class Encoder {
 public:
  Encoder& u8(std::uint8_t v) {
    out_.push_back(v);
    return *this;
  }
  Encoder& u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
  }
  Encoder& u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
  }
  Encoder& boolean(bool v) { return u8(v ? 1 : 0); }
  Encoder& bytes(ByteView v) {
    u32(static_cast<std::uint32_t>(v.size()));
    out_.insert(out_.end(), v.begin(), v.end());
    return *this;
  }
  Encoder& str(std::string_view s) { return bytes(as_bytes(s)); }
  template <std::size_t N, class Tag>
  Encoder& fixed(const FixedBytes<N, Tag>& v) {
    out_.insert(out_.end(), v.bytes.begin(), v.bytes.end());
    return *this;
  }
  template <class T, class F>
  Encoder& list(const std::vector<T>& items, F&& each) {
    u32(static_cast<std::uint32_t>(items.size()));
    for (const auto& item : items) each(*this, item);
    return *this;
  }

  const Bytes& data() const { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Decoder {
 public:
  explicit Decoder(ByteView in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = v << 8 | in_[pos_++];
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = v << 8 | in_[pos_++];
    return v;
  }
  bool boolean() {
    auto v = u8();
    if (v > 1) throw Error(Errc::DecodeError, "bad bool");
    return v == 1;
  }
  Bytes bytes() {
    auto n = u32();
    need(n);
    Bytes out(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
              in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }
  std::string str() {
    auto b = bytes();
    return {b.begin(), b.end()};
  }
  template <class T>
  T fixed() {
    need(T::size);
    auto v = T::from_view(in_.subspan(pos_, T::size));
    pos_ += T::size;
    return v;
  }
  template <class F>
  auto list(F&& each) {
    auto n = u32();
    if (n > in_.size() - pos_) throw Error(Errc::DecodeError, "list length exceeds input");
    std::vector<decltype(each(*this))> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) out.push_back(each(*this));
    return out;
  }

  bool done() const { return pos_ == in_.size(); }
  void expect_done() const {
    if (!done()) throw Error(Errc::DecodeError, "trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw Error(Errc::DecodeError, "truncated input");
  }

  ByteView in_;
  std::size_t pos_ = 0;
};

}  // namespace xdeal
