#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "akl/grid.hpp"

namespace akl {

/// Plain-text CSV: one line per pixel row, channels interleaved. The channel
/// count is inferred from columns / rows (must be 1 or 3).
ImageGrid read_image_csv(const std::filesystem::path& path);
void write_image_csv(const ImageGrid& img, const std::filesystem::path& path);

/// 8-bit binary PGM (P5, 1 channel) or PPM (P6, 3 channels); ASCII P2/P3 are
/// accepted on read. Intensities map [0, 1] <-> [0, 255].
ImageGrid read_netpbm(const std::filesystem::path& path);
void write_netpbm(const ImageGrid& img, const std::filesystem::path& path);

/// Dispatches on extension: .csv, .pgm, .ppm.
ImageGrid read_image(const std::filesystem::path& path);
void write_image(const ImageGrid& img, const std::filesystem::path& path);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// Comma-separated doubles of one CSV line; throws InvalidInput on a bad field.
std::vector<double> parse_csv_doubles(const std::string& line);

}  // namespace akl
