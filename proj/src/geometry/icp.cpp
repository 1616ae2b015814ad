#include "gsavatar/geometry/icp.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gsavatar/common/error.hpp"
#include "gsavatar/common/parallel.hpp"
#include "gsavatar/simd/kernels.hpp"

namespace gsavatar::geometry {

namespace {

void check_rank(std::span<const Vec3> pts) {
  if (pts.size() < 3) throw Error(ErrorCode::DegenerateConfiguration, "degenerate configuration: fewer than 3 points");
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  const Vec3 ev = Eigen::SelfAdjointEigenSolver<Mat3>(cov, Eigen::EigenvaluesOnly).eigenvalues();
  if (!(ev[2] > 0) || ev[0] <= 1e-12 * ev[2])
    throw Error(ErrorCode::DegenerateConfiguration, "degenerate configuration: source rank < 3");
}

struct Cloud {
  std::vector<double> xs, ys, zs;
  explicit Cloud(std::span<const Vec3> pts) {
    for (const auto& p : pts) {
      xs.push_back(p.x());
      ys.push_back(p.y());
      zs.push_back(p.z());
    }
  }
};

struct Match {
  std::size_t index;
  double d2;
};

std::vector<Match> nearest(const Cloud& cloud, std::span<const Vec3> queries) {
  std::vector<Match> out(queries.size());
  const auto& k = simd::active();
  const std::size_t chunk = 64;
  const std::size_t chunks = (queries.size() + chunk - 1) / chunk;
  parallel_for_chunks(chunks, [&](std::size_t c) {
    std::vector<double> d2(cloud.xs.size());
    for (std::size_t q = c * chunk; q < std::min(queries.size(), (c + 1) * chunk); ++q) {
      k.squared_distances(cloud.xs.data(), cloud.ys.data(), cloud.zs.data(), d2.size(), queries[q].x(),
                          queries[q].y(), queries[q].z(), d2.data());
      const auto it = std::min_element(d2.begin(), d2.end());
      out[q] = {static_cast<std::size_t>(it - d2.begin()), *it};
    }
  });
  return out;
}

}  // namespace

core::RigidTransform kabsch(std::span<const Vec3> src, std::span<const Vec3> dst) {
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t k = 0; k < src.size(); ++k) {
    cs += src[k];
    cd += dst[k];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(src.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t k = 0; k < src.size(); ++k) h += (src[k] - cs) * (dst[k] - cd).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU(), v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Mat3 r = v * d * u.transpose();
  Eigen::Quaterniond q(r);
  q.normalize();
  core::RigidTransform t{Vec4(q.w(), q.x(), q.y(), q.z()), Vec3::Zero()};
  if (t.rotation[0] < 0) t.rotation = -t.rotation;
  t.translation = cd - t.matrix() * cs;
  return t;
}

IcpResult icp_align(std::span<const Vec3> source, std::span<const Vec3> target, const IcpConfig& cfg) {
  if (source.empty() || target.empty()) throw Error(ErrorCode::InvalidArgument, "icp needs nonempty clouds");
  if (cfg.trim_fraction < 0 || cfg.trim_fraction >= 1)
    throw Error(ErrorCode::InvalidArgument, "icp trim_fraction must lie in [0, 1)");
  check_rank(source);
  const Cloud cloud(target);

  IcpResult res;
  std::vector<Vec3> moved(source.size());
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Mat3 r = res.transform.matrix();
    for (std::size_t k = 0; k < source.size(); ++k) moved[k] = r * source[k] + res.transform.translation;
    const auto matches = nearest(cloud, moved);

    std::vector<std::size_t> keep(source.size());
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    const auto n_keep = std::max<std::size_t>(
        3, source.size() - static_cast<std::size_t>(std::floor(cfg.trim_fraction * source.size())));
    if (n_keep < source.size()) {
      std::stable_sort(keep.begin(), keep.end(),
                       [&](std::size_t a, std::size_t b) { return matches[a].d2 < matches[b].d2; });
      keep.resize(n_keep);
      std::sort(keep.begin(), keep.end());
    }
    double sum = 0.0;
    std::vector<Vec3> src, dst;
    for (auto k : keep) {
      sum += matches[k].d2;
      src.push_back(source[k]);
      dst.push_back(target[matches[k].index]);
    }
    const double rms = std::sqrt(sum / static_cast<double>(keep.size()));
    res.iterations = it + 1;
    if (std::abs(prev - rms) < cfg.tol) {
      res.rms = rms;
      return res;
    }
    prev = rms;
    res.transform = kabsch(src, dst);
  }
  const Mat3 r = res.transform.matrix();
  for (std::size_t k = 0; k < source.size(); ++k) moved[k] = r * source[k] + res.transform.translation;
  double sum = 0.0;
  for (const auto& m : nearest(cloud, moved)) sum += m.d2;
  res.rms = std::sqrt(sum / static_cast<double>(source.size()));
  return res;
}

}  // namespace gsavatar::geometry
