#include "fedcollab/secret_sharing.hpp"

#include <string>

#include "fedcollab/errors.hpp"

namespace fedcollab {

RingElement encode_fixed(double x, const FixedPointCodec& codec) {
  if (!std::isfinite(x)) {
    throw RangeError("encode_fixed: value is not finite");
  }
  if (std::abs(x) >= codec.max_magnitude()) {
    throw RangeError("encode_fixed: |" + std::to_string(x) + "| >= " +
                     std::to_string(codec.max_magnitude()));
  }
  const double scaled = x * std::ldexp(1.0, static_cast<int>(codec.fractional_bits));
  const std::int64_t rounded = std::llround(scaled);
  return {static_cast<std::uint64_t>(rounded)};
}

double decode_fixed(RingElement v, const FixedPointCodec& codec) {
  const std::int64_t signed_value = static_cast<std::int64_t>(v.value);
  return static_cast<double>(signed_value) * codec.resolution();
}

ShareSet share(RingElement secret, std::size_t k, Rng& rng) {
  if (k == 0) throw InputError("share: k must be >= 1");
  ShareSet out;
  out.shares.reserve(k);
  RingElement remainder = secret;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    const RingElement draw{rng.next_u64()};
    out.shares.push_back(draw);
    remainder -= draw;
  }
  out.shares.push_back(remainder);
  return out;
}

RingElement reconstruct(const ShareSet& shares) {
  if (shares.shares.empty()) throw InputError("reconstruct: empty share set");
  RingElement sum{0};
  for (RingElement s : shares.shares) sum += s;
  return sum;
}

double secure_sum_round(const std::vector<double>& values, std::size_t k,
                        const FixedPointCodec& codec, Rng& rng) {
  if (values.size() != k) {
    throw InputError("secure_sum_round: expected " + std::to_string(k) +
                     " values, got " + std::to_string(values.size()));
  }
  if (k == 0) throw InputError("secure_sum_round: k must be >= 1");

  // The exact signed sum of the encodings must stay representable, otherwise
  // the ring total silently wraps.
  __int128 plain_total = 0;

  // received[j] collects the shares handed to worker j.
  std::vector<std::vector<RingElement>> received(k);
  for (auto& bucket : received) bucket.reserve(k);
  for (std::size_t sender = 0; sender < k; ++sender) {
    const RingElement encoded = encode_fixed(values[sender], codec);
    plain_total += static_cast<std::int64_t>(encoded.value);
    const ShareSet shares = share(encoded, k, rng);
    for (std::size_t j = 0; j < k; ++j) received[j].push_back(shares.shares[j]);
  }
  constexpr __int128 kInt64Min = -(static_cast<__int128>(1) << 63);
  constexpr __int128 kInt64Max = (static_cast<__int128>(1) << 63) - 1;
  if (plain_total < kInt64Min || plain_total > kInt64Max) {
    throw RangeError("secure_sum_round: encoded sum overflows the ring");
  }

  RingElement total{0};
  for (std::size_t j = 0; j < k; ++j) {
    total += reconstruct(ShareSet{received[j]});  // worker j's partial sum
  }
  return decode_fixed(total, codec);
}

}  // namespace fedcollab
