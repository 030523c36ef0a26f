#include "fuit/image_io.hpp"

#include <png.h>
#include <zlib.h>

#include <array>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace fuit::io {

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

// Netpbm header token reader: skips whitespace and '#' comments.
class PnmHeader {
 public:
  PnmHeader(const std::vector<std::uint8_t>& bytes, const std::string& name)
      : bytes_(bytes), name_(name) {}

  std::string magic() {
    if (bytes_.size() < 2) fail("file too short");
    pos_ = 2;
    return std::string(bytes_.begin(), bytes_.begin() + 2);
  }

  long number() {
    skip_space();
    long value = 0;
    std::size_t start = pos_;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) fail("header value too large");
      ++pos_;
    }
    if (pos_ == start) fail("expected a number at byte " + std::to_string(start));
    return value;
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing raster separator");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(name_ + ": malformed PGM: " + what);
  }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw FormatError(path.string() + ": truncated IDX header at byte offset " +
                      std::to_string(bytes.size()));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                        static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::size_t data_offset = 0;
};

IdxTensor parse_idx(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path,
                    std::size_t expected_rank) {
  std::uint32_t magic = read_be32(bytes, 0, path);
  if ((magic >> 16) != 0 || ((magic >> 8) & 0xff) != 0x08) {
    throw FormatError(path.string() + ": not an unsigned-byte IDX file (magic 0x" +
                      [&] {
                        std::ostringstream s;
                        s << std::hex << magic;
                        return s.str();
                      }() +
                      ")");
  }
  std::size_t rank = magic & 0xff;
  if (rank != expected_rank) {
    throw FormatError(path.string() + ": expected IDX rank " + std::to_string(expected_rank) +
                      ", found " + std::to_string(rank));
  }
  IdxTensor t;
  std::size_t count = 1;
  for (std::size_t d = 0; d < rank; ++d) {
    t.dims.push_back(read_be32(bytes, 4 + 4 * d, path));
    count *= t.dims.back();
  }
  t.data_offset = 4 + 4 * rank;
  std::size_t need = t.data_offset + count;
  if (bytes.size() < need) {
    throw FormatError(path.string() + ": truncated IDX payload, data ends at byte offset " +
                      std::to_string(bytes.size()) + " but header requires " +
                      std::to_string(need) + " bytes");
  }
  return t;
}

}  // namespace

ImageU8 read_pgm(const std::filesystem::path& path) {
  auto bytes = slurp(path);
  PnmHeader header(bytes, path.string());
  if (header.magic() != "P5") header.fail("only binary P5 graymaps are supported");
  long cols = header.number();
  long rows = header.number();
  long maxval = header.number();
  if (cols <= 0 || rows <= 0) header.fail("non-positive dimensions");
  if (maxval <= 0 || maxval > 255) header.fail("maxval must be in [1, 255]");
  std::size_t offset = header.raster_offset();
  std::size_t n = static_cast<std::size_t>(rows * cols);
  if (bytes.size() < offset + n) {
    throw FormatError(path.string() + ": truncated PGM raster at byte offset " +
                      std::to_string(bytes.size()));
  }
  ImageU8 img(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  for (std::size_t i = 0; i < n; ++i) {
    unsigned v = bytes[offset + i];
    if (v > static_cast<unsigned>(maxval)) header.fail("pixel exceeds maxval");
    // Rescale to the full 8-bit range when the file uses a smaller maxval.
    img.pixels[i] = static_cast<std::uint8_t>(maxval == 255 ? v : (v * 255 + maxval / 2) / maxval);
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const ImageU8& img) {
  auto out = open_out(path);
  out << "P5\n" << img.cols << ' ' << img.rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

void write_pgm(const std::filesystem::path& path, const IndexImage& img) {
  if (img.levels < 1 || img.levels > 255) {
    throw FormatError("index image with " + std::to_string(img.levels) +
                      " levels cannot be stored as 8-bit PGM");
  }
  auto out = open_out(path);
  out << "P5\n" << img.cols << ' ' << img.rows << '\n' << img.levels << '\n';
  std::vector<char> raster(img.indices.begin(), img.indices.end());
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
}

ImageU8 read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError(path.string() + ": " + image.message);
  }
  if (image.format & PNG_FORMAT_FLAG_COLOR) {
    png_image_free(&image);
    throw FormatError(path.string() + ": color PNG; only grayscale images are supported");
  }
  image.format = PNG_FORMAT_GRAY;
  ImageU8 img(image.height, image.width);
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError(path.string() + ": " + msg);
  }
  return img;
}

void write_png(const std::filesystem::path& path, const ImageU8& img) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.cols);
  image.height = static_cast<png_uint_32>(img.rows);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw FormatError(path.string() + ": " + image.message);
  }
}

ImageFormat format_for(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(c));
  if (ext == ".png") return ImageFormat::kPng;
  if (ext == ".pgm") return ImageFormat::kPgm;
  std::ifstream in(path, std::ios::binary);
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() >= 2 && magic[0] == 'P' && magic[1] == '5') return ImageFormat::kPgm;
  if (in.gcount() == 4 && static_cast<unsigned char>(magic[0]) == 0x89 && magic[1] == 'P') {
    return ImageFormat::kPng;
  }
  throw FormatError(path.string() + ": unrecognised image format");
}

ImageU8 read_image(const std::filesystem::path& path) {
  return format_for(path) == ImageFormat::kPng ? read_png(path) : read_pgm(path);
}

void write_image(const std::filesystem::path& path, const ImageU8& img, ImageFormat format) {
  if (format == ImageFormat::kPng) {
    write_png(path, img);
  } else {
    write_pgm(path, img);
  }
}

void write_csv(const std::filesystem::path& path, const IndexImage& img) {
  auto out = open_out(path);
  for (std::size_t r = 0; r < img.rows; ++r) {
    for (std::size_t c = 0; c < img.cols; ++c) {
      if (c) out << ',';
      out << img.at(r, c);
    }
    out << '\n';
  }
}

std::vector<ImageU8> read_idx_images(const std::filesystem::path& path) {
  auto bytes = slurp(path);
  auto t = parse_idx(bytes, path, 3);
  std::size_t n = t.dims[0], rows = t.dims[1], cols = t.dims[2];
  if (rows == 0 || cols == 0) throw FormatError(path.string() + ": zero-sized images");
  std::vector<ImageU8> out;
  out.reserve(n);
  auto it = bytes.begin() + static_cast<std::ptrdiff_t>(t.data_offset);
  for (std::size_t i = 0; i < n; ++i) {
    out.emplace_back(rows, cols, std::vector<std::uint8_t>(it, it + rows * cols));
    it += static_cast<std::ptrdiff_t>(rows * cols);
  }
  return out;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  auto bytes = slurp(path);
  auto t = parse_idx(bytes, path, 1);
  auto begin = bytes.begin() + static_cast<std::ptrdiff_t>(t.data_offset);
  return {begin, begin + t.dims[0]};
}

void write_idx_images(const std::filesystem::path& path, const std::vector<ImageU8>& images) {
  std::size_t rows = images.empty() ? 0 : images.front().rows;
  std::size_t cols = images.empty() ? 0 : images.front().cols;
  auto out = open_out(path);
  write_be32(out, 0x00000803);
  write_be32(out, static_cast<std::uint32_t>(images.size()));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  for (const auto& img : images) {
    if (img.rows != rows || img.cols != cols) {
      throw FormatError("IDX images must share one shape");
    }
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
  }
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  auto out = open_out(path);
  write_be32(out, 0x00000801);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

std::string file_checksum(const std::filesystem::path& path) {
  auto bytes = slurp(path);
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

}  // namespace fuit::io
