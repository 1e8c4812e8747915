#include "image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "error.hpp"

namespace flowstyle {
namespace {

unsigned char to_byte(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) fail(ErrorCode::Io, "cannot open " + path.string());
  return f;
}

// Skips whitespace and '#' comments in a PNM header.
int read_pnm_int(std::istream& in, const std::filesystem::path& path) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  int value = 0;
  if (!(in >> value) || value <= 0) {
    fail(ErrorCode::ParseError, "malformed PPM header in " + path.string());
  }
  return value;
}

}  // namespace

ImageTensor quantize_8bit(const ImageTensor& image) {
  ImageTensor out = image;
  for (float& v : out.data()) v = static_cast<float>(to_byte(v)) / 255.0f;
  return out;
}

ImageTensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6') {
    fail(ErrorCode::BadMagic, path.string() + " is not a binary PPM");
  }
  const int width = read_pnm_int(in, path);
  const int height = read_pnm_int(in, path);
  const int maxval = read_pnm_int(in, path);
  if (maxval > 255) fail(ErrorCode::ParseError, "16-bit PPM unsupported: " + path.string());
  in.get();  // single whitespace after maxval
  std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * height * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    fail(ErrorCode::TruncatedFile, "truncated PPM " + path.string());
  }
  std::vector<float> data(bytes.size());
  std::transform(bytes.begin(), bytes.end(), data.begin(),
                 [maxval](unsigned char b) { return static_cast<float>(b) / static_cast<float>(maxval); });
  return ImageTensor(height, width, 3, std::move(data));
}

void write_ppm(const ImageTensor& image, const std::filesystem::path& path) {
  if (image.channels() != 3 && image.channels() != 1) {
    fail(ErrorCode::ChannelMismatch, "PPM output needs 1 or 3 channels");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << "P6\n" << image.width() << " " << image.height() << "\n255\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(image.pixel_count() * 3);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        bytes.push_back(to_byte(image.at(y, x, image.channels() == 3 ? c : 0)));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "failed writing " + path.string());
}

ImageTensor read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    fail(ErrorCode::Io, "cannot read PNG " + path.string() + ": " + png.message);
  }
  const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    fail(ErrorCode::Io, "cannot decode PNG " + path.string() + ": " + msg);
  }
  std::vector<float> data(bytes.size());
  std::transform(bytes.begin(), bytes.end(), data.begin(),
                 [](unsigned char b) { return static_cast<float>(b) / 255.0f; });
  return ImageTensor(static_cast<int>(png.height), static_cast<int>(png.width),
                     gray ? 1 : 3, std::move(data));
}

void write_png(const ImageTensor& image, const std::filesystem::path& path) {
  if (image.channels() != 3 && image.channels() != 1) {
    fail(ErrorCode::ChannelMismatch, "PNG output needs 1 or 3 channels");
  }
  std::vector<unsigned char> bytes(image.size());
  std::transform(image.data().begin(), image.data().end(), bytes.begin(), to_byte);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = image.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    fail(ErrorCode::Io, "cannot write PNG " + path.string() + ": " + png.message);
  }
}

ImageTensor read_image(const std::filesystem::path& path) {
  auto f = open_file(path, "rb");
  unsigned char head[2] = {};
  const std::size_t got = std::fread(head, 1, 2, f.get());
  f.reset();
  if (got == 2 && head[0] == 'P' && head[1] == '6') return read_ppm(path);
  return read_png(path);
}

void write_image(const ImageTensor& image, const std::filesystem::path& path) {
  if (path.extension() == ".ppm") {
    write_ppm(image, path);
  } else {
    write_png(image, path);
  }
}

}  // namespace flowstyle
