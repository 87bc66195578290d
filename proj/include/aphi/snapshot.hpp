#pragma once

#include <cstdint>
#include <string>

#include "aphi/grid.hpp"

namespace aphi {

// Binary field snapshot: 32-byte little-endian header
//   char[4] "APHI", u32 version, u32 M, f64 L, f64 time, u32 reserved
// followed by M*M f64 values in row-major order.
inline constexpr std::uint32_t kSnapshotVersion = 1;

struct Snapshot {
    RealField field;
    double time = 0.0;
};

std::string encode_snapshot(const RealField& f, double time);
Snapshot decode_snapshot(const std::string& bytes);
void write_snapshot(const std::string& path, const RealField& f, double time);
Snapshot read_snapshot(const std::string& path);

}  // namespace aphi
