// SPDX-License-Identifier: Apache-2.0
#include "ttpo/field_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

#include "ttpo/error.hpp"

namespace ttpo::io {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "field binaries assume a little-endian host");

namespace {

fs::path sidecar_path(const fs::path& path) {
    fs::path p = path;
    p += ".json";
    return p;
}

std::string field_bytes(const Field& f) {
    std::string bytes(f.size() * sizeof(double), '\0');
    std::memcpy(bytes.data(), f.data().data(), bytes.size());
    return bytes;
}

}  // namespace

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

void write_field(const fs::path& path, const Field& f) {
    write_text(path, field_bytes(f));
    nlohmann::json meta = {{"height", f.height()}, {"width", f.width()}, {"dtype", "f64"}};
    write_text(sidecar_path(path), meta.dump() + "\n");
}

Field read_field(const fs::path& path) {
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_text(sidecar_path(path)));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidInput, "bad field sidecar for " + path.string() + ": " + e.what());
    }
    if (meta.value("dtype", "") != "f64") {
        throw Error(ErrorCode::InvalidInput, "unsupported dtype in " + sidecar_path(path).string());
    }
    const auto height = meta.at("height").get<std::size_t>();
    const auto width = meta.at("width").get<std::size_t>();
    const std::string bytes = read_text(path);
    if (bytes.size() != height * width * sizeof(double)) {
        throw Error(ErrorCode::InvalidInput, "size of " + path.string() + " does not match its sidecar");
    }
    std::vector<double> data(height * width);
    std::memcpy(data.data(), bytes.data(), bytes.size());
    return Field(height, width, std::move(data));
}

std::vector<double> unit_scaled(const Field& f) {
    const auto [lo, hi] = std::minmax_element(f.data().begin(), f.data().end());
    const double range = *hi - *lo;
    std::vector<double> out(f.size(), 0.0);
    if (range > 0.0) {
        for (std::size_t i = 0; i < f.size(); ++i) out[i] = (f[i] - *lo) / range;
    }
    return out;
}

std::string to_pgm(const Field& f) {
    const auto scaled = unit_scaled(f);
    std::ostringstream os;
    os << "P2\n" << f.width() << ' ' << f.height() << "\n255\n";
    for (std::size_t r = 0; r < f.height(); ++r) {
        for (std::size_t c = 0; c < f.width(); ++c) {
            const long v = std::lround(scaled[r * f.width() + c] * 255.0);
            os << v << (c + 1 == f.width() ? '\n' : ' ');
        }
    }
    return os.str();
}

void write_pgm(const fs::path& path, const Field& f) { write_text(path, to_pgm(f)); }

std::uint64_t checksum_bytes(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t checksum(const Field& f) { return checksum_bytes(field_bytes(f)); }

std::string hex64(std::uint64_t v) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
        v >>= 4;
    }
    return s;
}

}  // namespace ttpo::io
