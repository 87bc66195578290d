#pragma once

#include <array>
#include <cstdint>

namespace aphi {

// Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

// What a stream is used for. Distinct purposes never share counters.
enum class StreamPurpose : std::uint16_t {
    space_noise = 1,
    time_noise = 2,
    ou_initial = 3,
    conditioning = 4,
    initial_data = 5,
    test_function = 6,
    misc = 7,
};

// Counter-based stream keyed by (seed, purpose, trajectory). Draws depend only on these and
// on the position in the stream, never on which thread consumes them.
class RngStream {
public:
    RngStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t trajectory);

    std::uint32_t next_u32();
    // Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform();
    double normal();

    std::uint64_t seed() const { return seed_; }
    StreamPurpose purpose() const { return purpose_; }
    std::uint64_t trajectory() const { return trajectory_; }

private:
    void refill();

    std::uint64_t seed_;
    StreamPurpose purpose_;
    std::uint64_t trajectory_;
    std::array<std::uint32_t, 2> key_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int used_ = 4;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace aphi
