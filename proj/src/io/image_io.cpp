#include "gsavatar/io/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gsavatar/common/error.hpp"

namespace gsavatar::io {

std::uint8_t quantize(double v) {
  const double c = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::round(c * 255.0));
}

namespace {

void write_png_raw(const std::vector<std::uint8_t>& px, int width, int height, png_uint_32 format,
                   const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, px.data(), 0, nullptr))
    throw Error(ErrorCode::Io, "cannot write png " + path.string() + ": " + img.message);
}

}  // namespace

void write_png(const render::Frame& f, const std::filesystem::path& path) {
  std::vector<std::uint8_t> px(f.rgb.size());
  std::transform(f.rgb.begin(), f.rgb.end(), px.begin(), quantize);
  write_png_raw(px, f.width, f.height, PNG_FORMAT_RGB, path);
}

void write_png_gray(const std::vector<double>& plane, int width, int height, const std::filesystem::path& path) {
  if (plane.size() != static_cast<std::size_t>(width) * height)
    throw Error(ErrorCode::LengthMismatch, "length mismatch: gray plane");
  std::vector<std::uint8_t> px(plane.size());
  std::transform(plane.begin(), plane.end(), px.begin(), quantize);
  write_png_raw(px, width, height, PNG_FORMAT_GRAY, path);
}

render::Frame read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw Error(ErrorCode::Io, "cannot read png " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, px.data(), 0, nullptr))
    throw Error(ErrorCode::Parse, "cannot decode png " + path.string() + ": " + img.message);
  render::Frame f = render::Frame::filled(static_cast<int>(img.width), static_cast<int>(img.height), Vec3::Zero());
  for (std::size_t p = 0; p < f.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) f.rgb[p * 3 + c] = px[p * 4 + c] / 255.0;
    f.alpha[p] = px[p * 4 + 3] / 255.0;
  }
  return f;
}

void write_npy(const std::filesystem::path& path, const std::vector<std::size_t>& shape,
               const std::vector<double>& data) {
  std::size_t count = 1;
  for (auto s : shape) count *= s;
  if (count != data.size()) throw Error(ErrorCode::LengthMismatch, "length mismatch: npy shape vs data");
  std::ostringstream dict;
  dict << "{'descr': '<f4', 'fortran_order': False, 'shape': (";
  for (std::size_t k = 0; k < shape.size(); ++k) dict << shape[k] << (shape.size() == 1 || k + 1 < shape.size() ? "," : "");
  dict << "), }";
  std::string header = dict.str();
  // Pad so the data starts on a 64-byte boundary; header ends with '\n'.
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  os.write("\x93NUMPY\x01\x00", 8);
  const auto hlen = static_cast<std::uint16_t>(header.size());
  os.put(static_cast<char>(hlen & 0xff));
  os.put(static_cast<char>(hlen >> 8));
  os << header;
  for (double v : data) {
    const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    const char b[4] = {static_cast<char>(u), static_cast<char>(u >> 8), static_cast<char>(u >> 16),
                       static_cast<char>(u >> 24)};
    os.write(b, 4);
  }
  if (!os) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

NpyArray read_npy(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path.string());
  char magic[10];
  if (!is.read(magic, 10) || std::memcmp(magic, "\x93NUMPY", 6) != 0 || magic[6] != 1)
    throw Error(ErrorCode::Parse, path.string() + ": not an npy v1 file (byte offset 0)");
  const std::size_t hlen = static_cast<unsigned char>(magic[8]) | static_cast<unsigned char>(magic[9]) << 8;
  std::string header(hlen, '\0');
  if (!is.read(header.data(), static_cast<std::streamsize>(hlen)))
    throw Error(ErrorCode::Parse, path.string() + ": truncated header at byte offset 10");
  if (header.find("'descr': '<f4'") == std::string::npos || header.find("'fortran_order': False") == std::string::npos)
    throw Error(ErrorCode::Parse, path.string() + ": only C-order '<f4' arrays are supported");
  const auto open = header.find('(', header.find("'shape'")), close = header.find(')', open);
  if (open == std::string::npos || close == std::string::npos) throw Error(ErrorCode::Parse, path.string() + ": no shape");
  NpyArray a;
  std::stringstream ss(header.substr(open + 1, close - open - 1));
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (tok.find_first_not_of(' ') != std::string::npos) a.shape.push_back(std::stoul(tok));
  std::size_t count = 1;
  for (auto s : a.shape) count *= s;
  a.data.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
      throw Error(ErrorCode::Parse, path.string() + ": truncated data at byte offset " + std::to_string(10 + hlen + 4 * k));
    const std::uint32_t u = b[0] | b[1] << 8 | b[2] << 16 | static_cast<std::uint32_t>(b[3]) << 24;
    a.data[k] = static_cast<double>(std::bit_cast<float>(u));
  }
  return a;
}

void write_frame_npy(const render::Frame& f, const std::filesystem::path& path) {
  std::vector<double> data(f.pixel_count() * 4);
  for (std::size_t p = 0; p < f.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) data[p * 4 + c] = f.rgb[p * 3 + c];
    data[p * 4 + 3] = f.alpha[p];
  }
  write_npy(path, {static_cast<std::size_t>(f.height), static_cast<std::size_t>(f.width), 4}, data);
}

render::Frame read_frame_npy(const std::filesystem::path& path) {
  const auto a = read_npy(path);
  if (a.shape.size() != 3 || (a.shape[2] != 4 && a.shape[2] != 3))
    throw Error(ErrorCode::Parse, path.string() + ": expected an H x W x 3 or H x W x 4 array");
  const std::size_t ch = a.shape[2];
  render::Frame f = render::Frame::filled(static_cast<int>(a.shape[1]), static_cast<int>(a.shape[0]), Vec3::Zero(), 1.0);
  for (std::size_t p = 0; p < f.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) f.rgb[p * 3 + c] = a.data[p * ch + c];
    if (ch == 4) f.alpha[p] = a.data[p * 4 + 3];
  }
  return f;
}

render::Frame read_frame(const std::filesystem::path& path) {
  const auto e = path.extension().string();
  if (e == ".npy") return read_frame_npy(path);
  if (e == ".png") return read_png(path);
  throw Error(ErrorCode::InvalidArgument, "unsupported image extension: " + path.string());
}

}  // namespace gsavatar::io
