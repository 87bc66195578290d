#include "aphi/snapshot.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "aphi/errors.hpp"

namespace aphi {

namespace {

static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes little endian");

template <class T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <class T>
T get(const std::string& in, std::size_t offset) {
    T v;
    std::memcpy(&v, in.data() + offset, sizeof(T));
    return v;
}

constexpr std::size_t kHeader = 32;

}  // namespace

std::string encode_snapshot(const RealField& f, double time) {
    std::string out;
    out.reserve(kHeader + 8 * f.values.size());
    out.append("APHI", 4);
    put<std::uint32_t>(out, kSnapshotVersion);
    put<std::uint32_t>(out, std::uint32_t(f.grid.points_per_side));
    put<double>(out, f.grid.side_length);
    put<double>(out, time);
    put<std::uint32_t>(out, 0);
    for (int i = 0; i < f.values.size(); ++i) put<double>(out, f.values[i]);
    return out;
}

Snapshot decode_snapshot(const std::string& bytes) {
    if (bytes.size() < kHeader) throw FormatError("snapshot truncated: header incomplete");
    if (bytes.compare(0, 4, "APHI") != 0) throw FormatError("snapshot magic mismatch");
    const auto version = get<std::uint32_t>(bytes, 4);
    if (version != kSnapshotVersion)
        throw FormatError("snapshot version " + std::to_string(version) + " unsupported");
    const auto M = get<std::uint32_t>(bytes, 8);
    const double L = get<double>(bytes, 12);
    const double t = get<double>(bytes, 20);
    if (M == 0 || (M & (M - 1)) != 0 || M > 4096) throw FormatError("snapshot grid size invalid");
    if (!(L > 0.0)) throw FormatError("snapshot side length invalid");
    const std::size_t n = std::size_t(M) * M;
    if (bytes.size() != kHeader + 8 * n)
        throw FormatError(bytes.size() < kHeader + 8 * n ? "snapshot truncated: payload incomplete"
                                                         : "snapshot has trailing bytes");
    Snapshot s{RealField(TorusGrid{int(M), L}), t};
    for (std::size_t i = 0; i < n; ++i) s.field.values[i] = get<double>(bytes, kHeader + 8 * i);
    return s;
}

void write_snapshot(const std::string& path, const RealField& f, double time) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    const std::string bytes = encode_snapshot(f, time);
    os.write(bytes.data(), std::streamsize(bytes.size()));
}

Snapshot read_snapshot(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return decode_snapshot(ss.str());
}

}  // namespace aphi
