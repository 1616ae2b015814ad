#include "gsavatar/io/gsav.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "gsavatar/common/error.hpp"
#include "gsavatar/io/json_io.hpp"

namespace gsavatar::io {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, double v) { put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

class Reader {
 public:
  Reader(std::istream& is, const std::filesystem::path& path) : is_(is), path_(path) {}

  std::uint32_t u32() {
    unsigned char b[4];
    if (!is_.read(reinterpret_cast<char*>(b), 4))
      throw Error(ErrorCode::Parse, path_.string() + ": truncated at byte offset " + std::to_string(offset_));
    offset_ += 4;
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  std::size_t offset() const { return offset_; }

 private:
  std::istream& is_;
  const std::filesystem::path& path_;
  std::size_t offset_ = 0;
};

}  // namespace

void save_gsav(const core::GaussianSet& g, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  os.write("GSAV", 4);
  put_u32(os, kGsavVersion);
  put_u32(os, static_cast<std::uint32_t>(g.size()));
  put_u32(os, static_cast<std::uint32_t>(g.feature_dim()));
  for (const auto& p : g.positions)
    for (int c = 0; c < 3; ++c) put_f32(os, p[c]);
  for (std::size_t i = 0; i < g.size(); ++i)
    for (int f = 0; f < g.feature_dim(); ++f) put_f32(os, g.features(static_cast<Eigen::Index>(i), f));
  for (const auto& q : g.rotations)
    for (int c = 0; c < 4; ++c) put_f32(os, q[c]);
  for (const auto& s : g.log_scales)
    for (int c = 0; c < 3; ++c) put_f32(os, s[c]);
  for (double o : g.opacity_logits) put_f32(os, o);
  if (!os) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

core::GaussianSet load_gsav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "GSAV", 4) != 0)
    throw Error(ErrorCode::Parse, path.string() + ": bad magic at byte offset 0");
  Reader r(is, path);
  const auto version = r.u32();
  if (version != kGsavVersion)
    throw Error(ErrorCode::Parse, path.string() + ": unsupported version " + std::to_string(version));
  const auto n = r.u32(), d = r.u32();
  auto g = core::make_gaussian_set(n, static_cast<int>(d));
  for (auto& p : g.positions)
    for (int c = 0; c < 3; ++c) p[c] = r.f32();
  for (std::size_t i = 0; i < n; ++i)
    for (std::uint32_t f = 0; f < d; ++f) g.features(static_cast<Eigen::Index>(i), f) = r.f32();
  for (auto& q : g.rotations)
    for (int c = 0; c < 4; ++c) q[c] = r.f32();
  for (auto& s : g.log_scales)
    for (int c = 0; c < 3; ++c) s[c] = r.f32();
  for (auto& o : g.opacity_logits) o = r.f32();
  if (is.peek() != std::char_traits<char>::eof())
    throw Error(ErrorCode::Parse, path.string() + ": trailing bytes at offset " + std::to_string(r.offset() + 4));
  return g;
}

std::string gaussians_to_json(const core::GaussianSet& g) { return gaussians_json(g).dump(); }

core::GaussianSet gaussians_from_json(const std::string& text) {
  try {
    return gaussians_from_json_value(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("gaussian json: ") + e.what());
  }
}

}  // namespace gsavatar::io
