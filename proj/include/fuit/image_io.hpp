#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fuit/image.hpp"

namespace fuit::io {

/// Raised for unreadable, truncated or malformed image files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ImageFormat { kPgm, kPng };

ImageU8 read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const ImageU8& img);
/// Writes the index values verbatim with maxval = levels.
void write_pgm(const std::filesystem::path& path, const IndexImage& img);

ImageU8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageU8& img);

/// Dispatches on extension (.pgm / .png) and falls back to the magic bytes.
ImageU8 read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const ImageU8& img, ImageFormat format);
ImageFormat format_for(const std::filesystem::path& path);

/// One row per image row, comma separated.
void write_csv(const std::filesystem::path& path, const IndexImage& img);

/// IDX ubyte tensors (the MNIST container). Images are rank-3 [n, rows, cols],
/// labels rank-1 [n].
std::vector<ImageU8> read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const std::vector<ImageU8>& images);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

/// CRC-32 of a file's bytes, lowercase hex.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace fuit::io
