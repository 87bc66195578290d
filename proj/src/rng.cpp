#include "aphi/rng.hpp"

#include <cmath>
#include <numbers>

namespace aphi {

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> c,
                                           std::array<std::uint32_t, 2> k) {
    constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t(m0) * c[0];
        const std::uint64_t p1 = std::uint64_t(m1) * c[2];
        const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
        const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
        k[0] += w0;
        k[1] += w1;
    }
    return c;
}

RngStream::RngStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t trajectory)
    : seed_(seed), purpose_(purpose), trajectory_(trajectory),
      key_{std::uint32_t(seed), std::uint32_t(seed >> 32)} {}

void RngStream::refill() {
    // counter = (block lo, block hi, trajectory lo, purpose << 16 | trajectory bits 32..47)
    const std::uint32_t tag =
        (std::uint32_t(purpose_) << 16) | std::uint32_t((trajectory_ >> 32) & 0xFFFFu);
    buffer_ = philox4x32_10(
        {std::uint32_t(block_), std::uint32_t(block_ >> 32), std::uint32_t(trajectory_), tag},
        key_);
    ++block_;
    used_ = 0;
}

std::uint32_t RngStream::next_u32() {
    if (used_ == 4) refill();
    return buffer_[used_++];
}

double RngStream::uniform() {
    const std::uint64_t a = next_u32() >> 5, b = next_u32() >> 6;
    return (double(a * 67108864u + b) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    const double u1 = uniform(), u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_normal_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
}

}  // namespace aphi
