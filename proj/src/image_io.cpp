#include <png.h>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include "fisheval/error.hpp"
#include "fisheval/image.hpp"

namespace fisheval {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  return f;
}

bool has_png_signature(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

GrayImage read_png_gray(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorCode::CorruptFile, path.string() + ": " + img.message);
  }
  GrayImage out(img.height, img.width);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = buffer[i] / 255.0f;
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

GrayImage read_jpeg_gray(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  GrayImage out;
  std::vector<JSAMPLE> row;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(ErrorCode::CorruptFile, "cannot decode JPEG " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_GRAYSCALE;
  jpeg_start_decompress(&cinfo);
  out.resize(cinfo.output_height, cinfo.output_width);
  row.resize(cinfo.output_width);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW ptr = row.data();
    const auto y = cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &ptr, 1);
    for (JDIMENSION x = 0; x < cinfo.output_width; ++x) out(y, x) = row[x] / 255.0f;
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace

GrayImage read_gray_image(const std::filesystem::path& path) {
  return has_png_signature(path) ? read_png_gray(path) : read_jpeg_gray(path);
}

void write_gray_png(const std::filesystem::path& path, const GrayImage& image) {
  std::vector<png_byte> buffer(static_cast<std::size_t>(image.size()));
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    const float v = std::clamp(image.data()[i], 0.0f, 1.0f);
    buffer[i] = static_cast<png_byte>(std::lround(v * 255.0f));
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.cols());
  img.height = static_cast<png_uint_32>(image.rows());
  img.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw Error(ErrorCode::MissingFile, "cannot write " + path.string() + ": " + img.message);
  }
}

Raw16Image read_png16(const std::filesystem::path& path) {
  if (!has_png_signature(path)) throw Error(ErrorCode::CorruptFile, path.string() + " is not a PNG");
  FilePtr file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::CorruptFile, "cannot decode PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_png(png, info, PNG_TRANSFORM_SWAP_ENDIAN, nullptr);
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  if (depth != 16 || channels != 1) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::CorruptFile, path.string() + ": expected 16-bit single-channel PNG");
  }
  png_bytepp rows = png_get_rows(png, info);
  Raw16Image out(height, width);
  for (png_uint_32 y = 0; y < height; ++y) {
    const auto* row = reinterpret_cast<const std::uint16_t*>(rows[y]);
    for (png_uint_32 x = 0; x < width; ++x) out(y, x) = row[x];
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png16(const std::filesystem::path& path, const Raw16Image& image) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::MissingFile, "cannot write " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.cols()),
               static_cast<png_uint_32>(image.rows()), 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_set_swap(png);
  Raw16Image copy = image;
  for (Eigen::Index y = 0; y < copy.rows(); ++y) {
    png_write_row(png, reinterpret_cast<png_const_bytep>(copy.row(y).data()));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ByteMask read_mask(const std::filesystem::path& path) {
  const GrayImage g = read_gray_image(path);
  return (g.array() > 0.5f).cast<std::uint8_t>();
}

void write_mask(const std::filesystem::path& path, const ByteMask& mask) {
  write_gray_png(path, (mask.array() != 0).cast<float>());
}

}  // namespace fisheval
