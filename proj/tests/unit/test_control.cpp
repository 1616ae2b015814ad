#include <doctest.h>

#include <algorithm>
#include <set>

#include "gsavatar/common/error.hpp"
#include "gsavatar/control/controllable.hpp"
#include "gsavatar/control/spatial_index.hpp"
#include "gsavatar/control/split.hpp"
#include "support.hpp"

using namespace gsavatar;
using namespace gsavatar::control;
using testing::Gen;

namespace {

std::vector<std::size_t> brute_neighbors(std::span<const Vec3> pts, std::size_t i, const std::set<std::size_t>& ctl,
                                         double r) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < pts.size(); ++j)
    if (j != i && !ctl.count(j) && (pts[j] - pts[i]).norm() < r) out.push_back(j);
  return out;
}

std::vector<Vec3> cloud(Gen& gen, std::size_t n, double extent) {
  std::vector<Vec3> p(n);
  for (auto& x : p) x = gen.vec3(extent);
  return p;
}

}  // namespace

TEST_CASE("displacement magnitude is the euclidean norm of the expression field only") {
  auto bank = core::ResidualFieldBank::linear_blend(1, 3, 1);
  bank.field(core::Attribute::Def, core::Driver::Expression).params() = {0.3, 0.4, 0.0};
  bank.field(core::Attribute::Def, core::Driver::Pose).params().assign(18, 0.7);
  const std::vector<Vec3> x{Vec3::Zero()};
  const auto d = displacement_magnitudes(x, core::ExpressionParams{VecX::Ones(1)}, bank);
  CHECK(d[0] == doctest::Approx(0.5).epsilon(1e-15));

  const auto zero = core::ResidualFieldBank::linear_blend(4, 3, 2);
  for (double v : displacement_magnitudes(std::vector<Vec3>(4, Vec3::Ones()), core::ExpressionParams{VecX::Ones(2)}, zero))
    CHECK(v == 0.0);
}

TEST_CASE("displacement magnitudes match per-element recomputation") {
  Gen gen(1);
  const std::size_t n = 20;
  const auto g = gen.gaussians(n, 3);
  auto bank = core::ResidualFieldBank::linear_blend(n, 3, 4);
  gen.fill(bank, 0.3);
  core::ExpressionParams theta{VecX::Random(4)};
  const auto d = displacement_magnitudes(g.positions, theta, bank);
  const auto& p = bank.field(core::Attribute::Def, core::Driver::Expression).params();
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 r = Vec3::Zero();
    for (int o = 0; o < 3; ++o)
      for (int k = 0; k < 4; ++k) r[o] += p[i * 12 + o * 4 + k] * theta.coefficients[k];
    CHECK(std::abs(d[i] - r.norm()) < 1e-14);
  }
}

TEST_CASE("select_controls uses a strict threshold") {
  const std::vector<double> delta{0.1, 0.35, 0.30};
  CHECK(select_controls(delta, 0.3) == std::vector<std::size_t>{1});
  CHECK(select_controls(delta, 0.35).empty());
}

TEST_CASE("control sets shrink as tau grows") {
  Gen gen(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto delta = gen.values(50, 1.0);
    const double t1 = gen.uniform(-1, 1), t2 = gen.uniform(t1, 1.0);
    const auto c1 = select_controls(delta, t1), c2 = select_controls(delta, t2);
    CHECK(std::includes(c1.begin(), c1.end(), c2.begin(), c2.end()));
    CHECK(std::is_sorted(c1.begin(), c1.end()));
  }
}

TEST_CASE("neighborhoods on colinear points") {
  const std::vector<Vec3> p{Vec3(0, 0, 0), Vec3(0.04, 0, 0), Vec3(0.10, 0, 0)};
  ControlConfig cfg;
  const SpatialIndex idx(p, cfg.radius);
  const std::vector<std::size_t> ctl{0};
  const auto n = neighborhoods(p, ctl, cfg, idx);
  CHECK(n[0] == std::vector<std::size_t>{1});

  cfg.radius = 0.03;
  const SpatialIndex small(p, cfg.radius);
  CHECK(neighborhoods(p, ctl, cfg, small)[0].empty());
}

TEST_CASE("controls are never neighbours of other controls; radius is strict") {
  const std::vector<Vec3> p{Vec3(0, 0, 0), Vec3(0.02, 0, 0), Vec3(0.05, 0, 0)};
  ControlConfig cfg;
  const SpatialIndex idx(p, cfg.radius);
  const std::vector<std::size_t> ctl{0, 1};
  const auto n = neighborhoods(p, ctl, cfg, idx);
  CHECK(n[0].empty());  // 2 sits exactly at r
  CHECK(n[1] == std::vector<std::size_t>{2});
}

TEST_CASE("spatial index matches the brute-force scan") {
  Gen gen(3);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = static_cast<std::size_t>(gen.integer(1, 300));
    const auto p = cloud(gen, n, 0.3);
    ControlConfig cfg;
    cfg.radius = gen.uniform(0.01, 0.2);
    const SpatialIndex idx(p, cfg.radius);
    CHECK(idx.entry_count() == n);
    std::vector<std::size_t> ctl;
    for (std::size_t i = 0; i < n; ++i)
      if (gen.uniform() < 0.2) ctl.push_back(i);
    const std::set<std::size_t> ctl_set(ctl.begin(), ctl.end());
    const auto nb = neighborhoods(p, ctl, cfg, idx);
    for (std::size_t c = 0; c < ctl.size(); ++c) CHECK(nb[c] == brute_neighbors(p, ctl[c], ctl_set, cfg.radius));
  }
}

TEST_CASE("propagation weights") {
  const std::vector<Vec3> p{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(3, 0, 0)};
  const std::vector<std::size_t> one{1};
  CHECK(propagation_weights(p, 0, one, 0.5)[0] == 1.0);
  const std::vector<std::size_t> two{1, 2};
  const auto w = propagation_weights(p, 0, two, 0.5);
  CHECK(w[0] == doctest::Approx(0.5));
  CHECK(w[1] == doctest::Approx(0.5));

  // distances 1 and 2 with sigma 1
  const std::vector<Vec3> q{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
  const std::vector<std::size_t> pair{1, 2};
  const auto v = propagation_weights(q, 0, pair, 1.0);
  const double e1 = std::exp(-1.0), e4 = std::exp(-4.0);
  CHECK(std::abs(v[0] - e1 / (e1 + e4)) < 1e-12);
  CHECK(std::abs(v[0] - 0.9526) < 1e-3);
  CHECK(std::abs(v[1] - 0.0474) < 1e-3);

  CHECK_THROWS_AS(propagation_weights(q, 0, std::vector<std::size_t>{}, 1.0), Error);
}

TEST_CASE("propagation weights are normalized and uniform as sigma grows") {
  Gen gen(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = static_cast<std::size_t>(gen.integer(2, 12));
    const auto p = cloud(gen, n, 0.05);
    std::vector<std::size_t> c;
    for (std::size_t i = 1; i < n; ++i) c.push_back(i);
    const auto w = propagation_weights(p, 0, c, gen.uniform(0.005, 0.1));
    double s = 0;
    for (double x : w) {
      CHECK(x > 0.0);
      CHECK(x <= 1.0);
      s += x;
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
    for (double x : propagation_weights(p, 0, c, 1e6)) CHECK(std::abs(x - 1.0 / static_cast<double>(c.size())) < 1e-6);
  }
}

TEST_CASE("propagate single control, empty set and manual two-control composition") {
  ControlConfig cfg;
  const std::vector<Vec3> x{Vec3(0, 0, 0), Vec3(0.01, 0, 0)};
  std::vector<std::vector<std::size_t>> members{{}, {0}};
  const std::vector<std::size_t> ctl{0};
  const std::vector<Vec3> disp{Vec3(0.4, 0, 0)};
  auto out = propagate(x, x, ctl, disp, members, cfg);
  CHECK(out[1] == x[1] + Vec3(0.4, 0, 0));
  CHECK(out[0] == x[0]);

  const std::vector<std::vector<std::size_t>> none(2);
  out = propagate(x, x, {}, {}, none, cfg);
  CHECK(out == x);

  // five points, two overlapping controls
  cfg.radius = 0.1;
  cfg.sigma = 0.05;
  const std::vector<Vec3> p{Vec3(0, 0, 0), Vec3(0.05, 0, 0), Vec3(0.1 - 1e-3, 0, 0), Vec3(-0.03, 0.03, 0),
                            Vec3(0.5, 0.5, 0)};
  const std::vector<Vec3> base{p[0] + Vec3(0.01, 0, 0), p[1], p[2], p[3] + Vec3(0, 0, 0.02), p[4]};
  const std::vector<std::size_t> cs{0, 2};
  const std::vector<Vec3> cd{Vec3(0.4, 0, 0), Vec3(0, 0.5, 0)};
  const SpatialIndex idx(p, cfg.radius);
  const auto nb = neighborhoods(p, cs, cfg, idx);
  const auto m = memberships(p.size(), cs, nb);
  out = propagate(base, p, cs, cd, m, cfg);
  auto weight = [&](std::size_t j, std::size_t i, const std::vector<std::size_t>& among) {
    double den = 0;
    for (std::size_t k : among) den += std::exp(-(p[j] - p[k]).squaredNorm() / (cfg.sigma * cfg.sigma));
    return std::exp(-(p[j] - p[i]).squaredNorm() / (cfg.sigma * cfg.sigma)) / den;
  };
  // gaussian 1 sees both controls, 3 sees only control 0
  CHECK(m[1] == std::vector<std::size_t>{0, 2});
  CHECK(m[3] == std::vector<std::size_t>{0});
  const Vec3 e1 = base[1] + weight(1, 0, {0, 2}) * cd[0] + weight(1, 2, {0, 2}) * cd[1];
  CHECK((out[1] - e1).norm() < 1e-15);
  CHECK((out[3] - (base[3] + cd[0])).norm() < 1e-15);
  CHECK(out[0] == base[0]);
  CHECK(out[2] == base[2]);
  CHECK(out[4] == base[4]);

  std::vector<std::vector<std::size_t>> bad(5);
  bad[1] = {3};
  CHECK_THROWS_AS(propagate(base, p, cs, cd, bad, cfg), Error);
}

TEST_CASE("propagation is local to the union of neighbourhoods") {
  Gen gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 150;
    const auto p = cloud(gen, n, 0.4);
    std::vector<Vec3> base(n);
    for (std::size_t i = 0; i < n; ++i) base[i] = p[i] + gen.vec3(0.01);
    ControlConfig cfg;
    cfg.radius = 0.1;
    cfg.sigma = 0.05;
    std::vector<std::size_t> cs;
    std::vector<Vec3> cd;
    for (std::size_t i = 0; i < n; i += 17) {
      cs.push_back(i);
      cd.push_back(gen.vec3(0.5));
    }
    const SpatialIndex idx(p, cfg.radius);
    const auto nb = neighborhoods(p, cs, cfg, idx);
    std::set<std::size_t> touched;
    for (const auto& l : nb) touched.insert(l.begin(), l.end());
    const auto out = propagate(base, p, cs, cd, memberships(n, cs, nb), cfg);
    for (std::size_t j = 0; j < n; ++j)
      if (!touched.count(j)) CHECK(out[j] == base[j]);
  }
}

TEST_CASE("propagate_vjp matches finite differences") {
  Gen gen(6);
  const std::size_t n = 10;
  auto p = cloud(gen, n, 0.06);
  ControlConfig cfg;
  cfg.radius = 0.3;
  cfg.sigma = 0.05;
  const std::vector<std::size_t> cs{0, 3, 7};
  std::vector<Vec3> cd{gen.vec3(0.3), gen.vec3(0.3), gen.vec3(0.3)};
  const SpatialIndex idx(p, cfg.radius);
  const auto m = memberships(n, cs, neighborhoods(p, cs, cfg, idx));
  std::vector<Vec3> up(n);
  for (auto& u : up) u = gen.vec3();
  auto scalar = [&]() {
    const std::vector<Vec3> zero(n, Vec3::Zero());
    const auto out = propagate(zero, p, cs, cd, m, cfg);
    double s = 0;
    for (std::size_t j = 0; j < n; ++j) s += up[j].dot(out[j]);
    return s;
  };
  const auto g = propagate_vjp(p, cs, cd, m, cfg, up);
  CHECK(testing::relative_error(testing::as_span(g.control_displacements),
                                testing::numeric_gradient(scalar, testing::as_span(cd), 1e-6)) < 1e-6);
  CHECK(testing::relative_error(testing::as_span(g.canonical),
                                testing::numeric_gradient(scalar, testing::as_span(p), 1e-7)) < 1e-5);
}

TEST_CASE("split_gaussians contract") {
  auto g = core::make_gaussian_set(2, 3);
  g.positions = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  g.log_scales = {Vec3::Constant(std::log(0.1)), Vec3::Constant(std::log(0.2))};
  ControlConfig cfg;
  const std::vector<double> delta{0.25, 0.05};
  const std::vector<Vec3> dirs{Vec3(0, 2, 0), Vec3(1, 0, 0)};
  const auto r = split_gaussians(g, delta, dirs, cfg, 7);
  CHECK(r.set.size() == 3);
  CHECK(r.report.parents == std::vector<std::size_t>{0});
  CHECK(r.report.children == std::vector<std::size_t>{0, 2});
  CHECK(r.report.iteration == 7);
  CHECK((r.set.positions[0] - Vec3(0, 0.25 * 0.1, 0)).norm() < 1e-15);
  CHECK((r.set.positions[2] - Vec3(0, -0.25 * 0.1, 0)).norm() < 1e-15);
  CHECK(r.set.positions[1] == g.positions[1]);

  const std::vector<double> quiet{0.1, 0.05};
  const auto q = split_gaussians(g, quiet, dirs, cfg);
  CHECK(q.set.size() == 2);
  CHECK(q.report.empty());

  cfg.max_gaussians = 2;
  CHECK_THROWS_AS(split_gaussians(g, delta, dirs, cfg), Error);
}

TEST_CASE("split children inherit attributes and shrink scales") {
  Gen gen(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = static_cast<std::size_t>(gen.integer(1, 40));
    const auto g = gen.gaussians(n, 5);
    std::vector<double> delta(n);
    std::vector<Vec3> dirs(n);
    for (std::size_t i = 0; i < n; ++i) {
      delta[i] = gen.uniform(0, 0.5);
      dirs[i] = gen.vec3();
    }
    ControlConfig cfg;
    const auto r = split_gaussians(g, delta, dirs, cfg);
    const auto expected = static_cast<std::size_t>(std::count_if(delta.begin(), delta.end(), [](double d) { return d > 0.2; }));
    CHECK(r.set.size() == n + expected);
    CHECK(r.report.children.size() == 2 * r.report.parents.size());
    std::set<std::size_t> parents(r.report.parents.begin(), r.report.parents.end());
    for (std::size_t i = 0; i < n; ++i) {
      if (parents.count(i)) continue;
      CHECK(r.set.positions[i] == g.positions[i]);
      CHECK(r.set.log_scales[i] == g.log_scales[i]);
    }
    for (std::size_t k = 0; k < r.report.parents.size(); ++k) {
      const std::size_t p = r.report.parents[k];
      for (std::size_t c : {r.report.children[2 * k], r.report.children[2 * k + 1]}) {
        CHECK(r.set.rotations[c] == g.rotations[p]);
        CHECK(r.set.opacity_logits[c] == g.opacity_logits[p]);
        CHECK(r.set.features.row(static_cast<Eigen::Index>(c)) == g.features.row(static_cast<Eigen::Index>(p)));
        const Vec3 ratio = r.set.decoded_scale(c).cwiseQuotient(g.decoded_scale(p));
        CHECK((ratio - Vec3::Constant(0.8)).norm() < 1e-12);
      }
    }
  }
}

TEST_CASE("zero displacement direction is flagged and offset along +x") {
  auto g = core::make_gaussian_set(1, 3);
  const std::vector<double> delta{0.5};
  const std::vector<Vec3> dirs{Vec3::Zero()};
  const auto r = split_gaussians(g, delta, dirs, ControlConfig{});
  CHECK(r.report.degenerate == std::vector<std::size_t>{0});
  CHECK(r.set.positions[0].x() > 0.0);
  CHECK(r.set.positions[1].x() < 0.0);
}

TEST_CASE("split count is non-increasing in tau_split") {
  Gen gen(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto delta = gen.values(100, 0.6);
    std::size_t prev = delta.size() + 1;
    for (double tau = 0.0; tau <= 0.6; tau += 0.05) {
      const auto c = split_candidates(delta, tau).size();
      CHECK(c <= prev);
      prev = c;
    }
  }
}

TEST_CASE("control config validation") {
  ControlConfig c;
  CHECK_NOTHROW(c.validate(10));
  c.tau_control = 0;
  CHECK_THROWS_AS(c.validate(10), Error);
  c = {};
  c.split_scale_factor = 1.5;
  CHECK_THROWS_AS(c.validate(10), Error);
  c = {};
  c.max_gaussians = 5;
  CHECK_THROWS_AS(c.validate(10), Error);
}
