#include "gsavatar/io/json_io.hpp"

#include <fstream>
#include <sstream>

#include "gsavatar/common/error.hpp"

namespace gsavatar::io {

using nlohmann::json;

namespace {

template <typename V>
json vec_list(const std::vector<V>& v) {
  json out = json::array();
  for (const auto& x : v) out.push_back(std::vector<double>(x.data(), x.data() + x.size()));
  return out;
}

template <typename V>
std::vector<V> vec_list_from(const json& j) {
  std::vector<V> out;
  for (const auto& e : j) {
    const auto vals = e.get<std::vector<double>>();
    if (vals.size() != static_cast<std::size_t>(V::SizeAtCompileTime))
      throw Error(ErrorCode::Parse, "vector of wrong length in json");
    out.push_back(Eigen::Map<const V>(vals.data()));
  }
  return out;
}

json matrix_json(const MatX& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

MatX matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
  MatX m(rows, cols);
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows) throw Error(ErrorCode::Parse, "matrix row count mismatch");
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = data[static_cast<std::size_t>(r)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) throw Error(ErrorCode::Parse, "matrix column count mismatch");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

}  // namespace

json gaussians_json(const core::GaussianSet& g) {
  return json{{"positions", vec_list(g.positions)}, {"features", matrix_json(g.features)},
              {"rotations", vec_list(g.rotations)}, {"log_scales", vec_list(g.log_scales)},
              {"opacity_logits", g.opacity_logits}};
}

core::GaussianSet gaussians_from_json_value(const json& j) {
  core::GaussianSet g;
  g.positions = vec_list_from<Vec3>(j.at("positions"));
  g.features = matrix_from(j.at("features"));
  g.rotations = vec_list_from<Vec4>(j.at("rotations"));
  g.log_scales = vec_list_from<Vec3>(j.at("log_scales"));
  g.opacity_logits = j.at("opacity_logits").get<std::vector<double>>();
  return g;
}

json bank_json(const core::ResidualFieldBank& bank) {
  json fields = json::array();
  for (auto a : core::kAttributes)
    for (auto d : core::kDrivers) {
      const auto& f = bank.field(a, d);
      json jf{{"name", core::ResidualFieldBank::field_name(a, d)},
              {"input_dim", f.input_dim()},
              {"output_dim", f.output_dim()},
              {"driver_dim", f.driver_dim()},
              {"projection", f.has_projection()},
              {"params", f.params()}};
      if (const auto* lb = std::get_if<core::LinearBlendField>(&f.impl())) {
        jf["kind"] = "linear_blend";
        jf["count"] = lb->count;
      } else {
        const auto& rb = std::get<core::RadialBasisField>(f.impl());
        jf["kind"] = "radial_basis";
        jf["centers"] = matrix_json(rb.centers);
        jf["bandwidth"] = rb.bandwidth;
      }
      fields.push_back(std::move(jf));
    }
  return json{{"fields", fields}};
}

core::ResidualFieldBank bank_from_json(const json& j) {
  core::ResidualFieldBank bank;
  const auto& fields = j.at("fields");
  if (fields.size() != 10) throw Error(ErrorCode::Parse, "bank json needs exactly ten fields");
  std::size_t k = 0;
  for (auto a : core::kAttributes)
    for (auto d : core::kDrivers) {
      const auto& jf = fields[k++];
      if (jf.at("name").get<std::string>() != core::ResidualFieldBank::field_name(a, d))
        throw Error(ErrorCode::Parse, "bank json field order mismatch at " + jf.at("name").get<std::string>());
      const int in = jf.at("input_dim"), out = jf.at("output_dim"), drv = jf.at("driver_dim");
      const bool proj = jf.at("projection");
      core::ResidualField f;
      if (jf.at("kind") == "linear_blend")
        f = core::ResidualField::linear_blend(jf.at("count").get<std::size_t>(), in, out, drv, proj);
      else if (jf.at("kind") == "radial_basis")
        f = core::ResidualField::radial_basis(matrix_from(jf.at("centers")), jf.at("bandwidth"), out, drv, proj);
      else
        throw Error(ErrorCode::Parse, "unknown field kind");
      auto params = jf.at("params").get<std::vector<double>>();
      if (params.size() != f.params().size()) throw Error(ErrorCode::Parse, "field parameter count mismatch");
      f.params() = std::move(params);
      bank.field(a, d) = std::move(f);
    }
  return bank;
}

json split_report_json(const control::SplitReport& r) {
  return json{{"parents", r.parents},       {"children", r.children}, {"magnitudes", r.magnitudes},
              {"degenerate", r.degenerate}, {"iteration", r.iteration}};
}

control::SplitReport split_report_from_json(const json& j) {
  control::SplitReport r;
  r.parents = j.at("parents").get<std::vector<std::size_t>>();
  r.children = j.at("children").get<std::vector<std::size_t>>();
  r.magnitudes = j.at("magnitudes").get<std::vector<double>>();
  r.degenerate = j.value("degenerate", std::vector<std::size_t>{});
  r.iteration = j.at("iteration").get<long>();
  if (r.children.size() != 2 * r.parents.size() || r.magnitudes.size() != r.parents.size())
    throw Error(ErrorCode::Parse, "split report arrays are inconsistent");
  return r;
}

json grid_json(const geometry::SdfGrid& g) {
  return json{{"resolution", g.resolution},
              {"lower", std::vector<double>(g.lower.data(), g.lower.data() + 3)},
              {"upper", std::vector<double>(g.upper.data(), g.upper.data() + 3)},
              {"feature_dim", g.feature_dim},
              {"sdf", g.sdf},
              {"eta", g.eta}};
}

geometry::SdfGrid grid_from_json(const json& j) {
  geometry::SdfGrid g;
  g.resolution = j.at("resolution");
  const auto lo = j.at("lower").get<std::vector<double>>(), hi = j.at("upper").get<std::vector<double>>();
  if (lo.size() != 3 || hi.size() != 3) throw Error(ErrorCode::Parse, "grid bounds need 3 values");
  g.lower = Vec3(lo[0], lo[1], lo[2]);
  g.upper = Vec3(hi[0], hi[1], hi[2]);
  g.feature_dim = j.at("feature_dim");
  g.sdf = j.at("sdf").get<std::vector<double>>();
  g.eta = j.at("eta").get<std::vector<double>>();
  g.validate();
  return g;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  os << text;
  if (!os) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

json read_json(const std::filesystem::path& path) {
  const auto text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

void save_avatar(const train::AvatarState& s, const std::filesystem::path& path) {
  json j{{"format", "gsavatar-avatar"},
         {"version", 1},
         {"gaussians", gaussians_json(s.gaussians)},
         {"bank", bank_json(s.bank)},
         {"generation", s.generation}};
  write_text(path, j.dump());
}

train::AvatarState load_avatar(const std::filesystem::path& path) {
  const auto j = read_json(path);
  try {
    if (j.value("format", "") != "gsavatar-avatar") throw Error(ErrorCode::Parse, path.string() + ": not an avatar file");
    train::AvatarState s;
    s.gaussians = core::validate_neutral_set(gaussians_from_json_value(j.at("gaussians")));
    s.bank = bank_from_json(j.at("bank"));
    s.generation = j.value("generation", std::vector<std::uint8_t>{});
    if (s.generation.size() != s.gaussians.size()) s.generation.assign(s.gaussians.size(), 0);
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

}  // namespace gsavatar::io
