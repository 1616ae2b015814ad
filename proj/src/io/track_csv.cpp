#include "gsavatar/io/track_csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "gsavatar/common/error.hpp"

namespace gsavatar::io {

namespace {

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

void save_track(const std::vector<TrackRow>& rows, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  const int d = rows.empty() ? 0 : rows.front().theta.dim();
  os << "frame";
  for (int k = 0; k < d; ++k) os << ",theta_" << k;
  os << ",beta_rx,beta_ry,beta_rz,beta_tx,beta_ty,beta_tz,T_qw,T_qx,T_qy,T_qz,T_tx,T_ty,T_tz\n";
  for (std::size_t f = 0; f < rows.size(); ++f) {
    const auto& r = rows[f];
    if (r.theta.dim() != d) throw Error(ErrorCode::LengthMismatch, "track rows differ in expression dimension");
    os << f;
    for (int k = 0; k < d; ++k) os << ',' << num(r.theta.coefficients[k]);
    for (int k = 0; k < 3; ++k) os << ',' << num(r.beta.rotation[k]);
    for (int k = 0; k < 3; ++k) os << ',' << num(r.beta.translation[k]);
    for (int k = 0; k < 4; ++k) os << ',' << num(r.transform.rotation[k]);
    for (int k = 0; k < 3; ++k) os << ',' << num(r.transform.translation[k]);
    os << '\n';
  }
  if (!os) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

std::vector<TrackRow> load_track(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::Parse, path.string() + ":1: missing header");
  std::size_t cols = 1;
  for (char c : line) cols += c == ',';
  if (cols < 1 + 6 + 7) throw Error(ErrorCode::Parse, path.string() + ":1: too few columns");
  const int d = static_cast<int>(cols - 14);
  std::vector<TrackRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      double v = 0;
      const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (r.ec != std::errc() || r.ptr != tok.data() + tok.size())
        throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
      vals.push_back(v);
    }
    if (vals.size() != cols)
      throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                        std::to_string(cols) + " columns");
    TrackRow r;
    r.theta.coefficients = Eigen::Map<const VecX>(vals.data() + 1, d);
    std::size_t k = 1 + static_cast<std::size_t>(d);
    r.beta.rotation = Vec3(vals[k], vals[k + 1], vals[k + 2]);
    r.beta.translation = Vec3(vals[k + 3], vals[k + 4], vals[k + 5]);
    k += 6;
    r.transform.rotation = Vec4(vals[k], vals[k + 1], vals[k + 2], vals[k + 3]);
    r.transform.translation = Vec3(vals[k + 4], vals[k + 5], vals[k + 6]);
    try {
      core::validate(r.theta);
      core::validate(r.beta);
      core::validate(r.transform);
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace gsavatar::io
