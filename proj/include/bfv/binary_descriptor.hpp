/*
 * Copyright 2026 The bfv authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bfv/error.hpp"

namespace bfv {

inline constexpr std::uint32_t kMaxDims = 1024;

// Bit layout shared with the on-disk feature format: bit d lives in byte
// floor(d/8) at position (d mod 8), bytes in little-endian order. Packed into
// 64-bit words that is bit d of word floor(d/64) at position (d mod 64).
inline constexpr std::size_t words_for_dims(std::uint32_t dims) {
  return (static_cast<std::size_t>(dims) + 63) / 64;
}

inline constexpr std::size_t bytes_for_dims(std::uint32_t dims) {
  return (static_cast<std::size_t>(dims) + 7) / 8;
}

namespace detail {

inline void check_dims(std::uint32_t dims) {
  if (dims < 1 || dims > kMaxDims) {
    throw validation_error("descriptor dimension must be in [1, " +
                           std::to_string(kMaxDims) + "], got " +
                           std::to_string(dims));
  }
}

// Zeroes the padding bits above `dims` in the last word.
inline void mask_tail(std::vector<std::uint64_t>& words, std::uint32_t dims) {
  const std::uint32_t used = dims % 64;
  if (used != 0 && !words.empty()) {
    words.back() &= (std::uint64_t{1} << used) - 1;
  }
}

}  // namespace detail

/// One D-bit binary feature, bit-packed. Immutable in spirit: built once,
/// then only read. Padding bits beyond D are always zero.
class BinaryDescriptor {
 public:
  BinaryDescriptor() = default;

  explicit BinaryDescriptor(std::uint32_t dims) : dims_(dims) {
    detail::check_dims(dims);
    words_.assign(words_for_dims(dims), 0);
  }

  /// Parses "1010..." with bit d at string position d.
  static BinaryDescriptor from_string(std::string_view bits) {
    BinaryDescriptor x(static_cast<std::uint32_t>(bits.size()));
    for (std::uint32_t d = 0; d < bits.size(); ++d) {
      if (bits[d] == '1') {
        x.set_bit(d, true);
      } else if (bits[d] != '0') {
        throw validation_error("bit string may contain only '0' and '1'");
      }
    }
    return x;
  }

  /// Rebuilds a descriptor from ceil(dims/8) bytes in the shared bit layout.
  /// Padding bits in the final byte must be zero.
  static BinaryDescriptor from_bytes(std::uint32_t dims,
                                     std::span<const std::uint8_t> bytes) {
    BinaryDescriptor x(dims);
    if (bytes.size() != bytes_for_dims(dims)) {
      throw validation_error("descriptor byte count does not match dimension");
    }
    for (std::size_t b = 0; b < bytes.size(); ++b) {
      x.words_[b / 8] |= static_cast<std::uint64_t>(bytes[b]) << (8 * (b % 8));
    }
    std::vector<std::uint64_t> masked = x.words_;
    detail::mask_tail(masked, dims);
    if (masked != x.words_) {
      throw validation_error("nonzero padding bits beyond the descriptor dimension");
    }
    return x;
  }

  std::uint32_t dims() const noexcept { return dims_; }

  bool bit(std::uint32_t d) const {
    if (d >= dims_) throw validation_error("bit index out of range");
    return (words_[d / 64] >> (d % 64)) & 1u;
  }

  void set_bit(std::uint32_t d, bool value) {
    if (d >= dims_) throw validation_error("bit index out of range");
    const std::uint64_t mask = std::uint64_t{1} << (d % 64);
    if (value) {
      words_[d / 64] |= mask;
    } else {
      words_[d / 64] &= ~mask;
    }
  }

  std::span<const std::uint64_t> words() const noexcept { return words_; }

  std::vector<std::uint8_t> to_bytes() const {
    std::vector<std::uint8_t> bytes(bytes_for_dims(dims_));
    for (std::size_t b = 0; b < bytes.size(); ++b) {
      bytes[b] = static_cast<std::uint8_t>(words_[b / 8] >> (8 * (b % 8)));
    }
    return bytes;
  }

  std::string to_string() const {
    std::string s(dims_, '0');
    for (std::uint32_t d = 0; d < dims_; ++d) {
      if (bit(d)) s[d] = '1';
    }
    return s;
  }

  friend bool operator==(const BinaryDescriptor&, const BinaryDescriptor&) = default;

 private:
  std::uint32_t dims_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Hamming distance between two packed word spans of equal length.
/// Padding bits are zero by construction, so no masking is needed.
inline std::uint32_t hamming_words(std::span<const std::uint64_t> a,
                                   std::span<const std::uint64_t> b) {
  std::uint32_t distance = 0;
  for (std::size_t w = 0; w < a.size(); ++w) {
    distance += static_cast<std::uint32_t>(std::popcount(a[w] ^ b[w]));
  }
  return distance;
}

inline std::uint32_t hamming(const BinaryDescriptor& a, const BinaryDescriptor& b) {
  if (a.dims() != b.dims()) {
    throw dimension_error("hamming: descriptors have different dimensions (" +
                          std::to_string(a.dims()) + " vs " +
                          std::to_string(b.dims()) + ")");
  }
  return hamming_words(a.words(), b.words());
}

/// Keeps the first `keep_dims` bits, dropping the rest.
inline BinaryDescriptor truncate(const BinaryDescriptor& x, std::uint32_t keep_dims) {
  if (keep_dims < 1 || keep_dims > x.dims()) {
    throw validation_error("truncate: kept dimension must be in [1, D]");
  }
  BinaryDescriptor out(keep_dims);
  for (std::uint32_t d = 0; d < keep_dims; ++d) {
    out.set_bit(d, x.bit(d));
  }
  return out;
}

/// The descriptors of one image, all sharing one dimension D. Stored as one
/// flat word array so per-descriptor access is a span, not an allocation.
class FeatureSet {
 public:
  explicit FeatureSet(std::uint32_t dims) : dims_(dims) {
    detail::check_dims(dims);
  }

  std::uint32_t dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }
  std::size_t words_per_descriptor() const noexcept { return words_for_dims(dims_); }

  void add(const BinaryDescriptor& x) {
    if (x.dims() != dims_) {
      throw dimension_error("FeatureSet::add: descriptor dimension " +
                            std::to_string(x.dims()) + " does not match set dimension " +
                            std::to_string(dims_));
    }
    words_.insert(words_.end(), x.words().begin(), x.words().end());
    ++count_;
  }

  std::span<const std::uint64_t> words(std::size_t t) const {
    const std::size_t w = words_per_descriptor();
    return {words_.data() + t * w, w};
  }

  bool bit(std::size_t t, std::uint32_t d) const {
    return (words(t)[d / 64] >> (d % 64)) & 1u;
  }

  BinaryDescriptor descriptor(std::size_t t) const {
    BinaryDescriptor x(dims_);
    auto src = words(t);
    for (std::uint32_t d = 0; d < dims_; ++d) {
      if ((src[d / 64] >> (d % 64)) & 1u) x.set_bit(d, true);
    }
    return x;
  }

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;

 private:
  std::uint32_t dims_;
  std::size_t count_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Prefix-truncates every descriptor in the set.
inline FeatureSet truncate(const FeatureSet& xs, std::uint32_t keep_dims) {
  if (keep_dims < 1 || keep_dims > xs.dims()) {
    throw validation_error("truncate: kept dimension must be in [1, D]");
  }
  FeatureSet out(keep_dims);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    out.add(truncate(xs.descriptor(t), keep_dims));
  }
  return out;
}

}  // namespace bfv
