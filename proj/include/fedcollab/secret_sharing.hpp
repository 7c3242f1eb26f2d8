#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fedcollab/rng.hpp"

namespace fedcollab {

/// One element of the ring Z_{2^64}. All arithmetic wraps, so addition is an
/// exact group operation and a sum of uniform shares reveals nothing about
/// any proper subset.
struct RingElement {
  std::uint64_t value = 0;

  friend RingElement operator+(RingElement a, RingElement b) {
    return {a.value + b.value};
  }
  friend RingElement operator-(RingElement a, RingElement b) {
    return {a.value - b.value};
  }
  RingElement& operator+=(RingElement other) {
    value += other.value;
    return *this;
  }
  RingElement& operator-=(RingElement other) {
    value -= other.value;
    return *this;
  }
  friend bool operator==(RingElement a, RingElement b) { return a.value == b.value; }
};

/// Scale used to embed reals into the ring: x maps to round(x * 2^bits) in
/// two's complement. 16 fractional bits give about 1.5e-5 resolution and
/// headroom up to |x| < 2^47.
struct FixedPointCodec {
  unsigned fractional_bits = 16;

  double resolution() const { return std::ldexp(1.0, -static_cast<int>(fractional_bits)); }
  double max_magnitude() const { return std::ldexp(1.0, 63 - static_cast<int>(fractional_bits)); }
};

/// Additive shares of one secret; they sum to the secret mod 2^64.
struct ShareSet {
  std::vector<RingElement> shares;
};

/// Embeds a real into the ring. Throws RangeError when |x| reaches the codec's
/// representable magnitude or x is not finite.
RingElement encode_fixed(double x, const FixedPointCodec& codec);

/// Inverse of encode_fixed up to quantization: values at or above 2^63 are
/// read as negative two's-complement integers.
double decode_fixed(RingElement v, const FixedPointCodec& codec);

/// Splits a secret into k additive shares: k - 1 uniform draws and one
/// balancing share. Throws InputError when k == 0.
ShareSet share(RingElement secret, std::size_t k, Rng& rng);

/// Wrapping sum of all shares. Throws InputError on an empty set.
RingElement reconstruct(const ShareSet& shares);

/// Simulates one secure-sum exchange among k workers: every worker encodes
/// its value and splits it into k shares, hands share j to worker j, each
/// worker forwards the sum of what it received, and the aggregator adds the
/// partials and decodes. Returns the decoded sum, which equals the plaintext
/// sum of the encoded values exactly. Throws InputError when values.size()
/// != k and RangeError when the encoded sum leaves the representable range.
double secure_sum_round(const std::vector<double>& values, std::size_t k,
                        const FixedPointCodec& codec, Rng& rng);

}  // namespace fedcollab
