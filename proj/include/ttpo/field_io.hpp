// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ttpo/field.hpp"

namespace ttpo::io {

/// Writes `<path>` as little-endian f64 row-major and `<path>.json` as
/// {"height", "width", "dtype": "f64"}.
void write_field(const std::filesystem::path& path, const Field& f);
Field read_field(const std::filesystem::path& path);

/// ASCII P2, maxval 255, values min-max scaled. A constant field maps to 0.
void write_pgm(const std::filesystem::path& path, const Field& f);
std::string to_pgm(const Field& f);

/// Min-max scaling to [0, 1] shared by the PGM dump and the HTTP pixel arrays.
std::vector<double> unit_scaled(const Field& f);

/// FNV-1a over the little-endian byte image of the field.
std::uint64_t checksum(const Field& f);
std::uint64_t checksum_bytes(std::string_view bytes);
std::string hex64(std::uint64_t v);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace ttpo::io
