#include "gsavatar/io/toml_config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <variant>
#include <vector>

#include "gsavatar/common/error.hpp"
#include "gsavatar/io/json_io.hpp"

namespace gsavatar::io {

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seed and count keys share one binding type");
using Target = std::variant<double*, int*, bool*, std::size_t*, std::string*, Vec3*>;

struct Binding {
  std::string table;
  std::string key;
  Target target;
};

std::vector<Binding> bindings(AppConfig& c) {
  auto& s1 = c.stage1;
  auto& s2 = c.stage2;
  return {
      {"model", "feature_dim", &c.model.feature_dim},
      {"model", "expression_dim", &c.model.expression_dim},
      {"model", "grid_resolution", &c.model.grid_resolution},
      {"model", "eta_dim", &c.model.eta_dim},
      {"model", "field_kind", &c.model.field_kind},
      {"model", "rbf_centers", &c.model.rbf_centers},
      {"control", "tau_control", &c.control.tau_control},
      {"control", "tau_split", &c.control.tau_split},
      {"control", "radius", &c.control.radius},
      {"control", "sigma", &c.control.sigma},
      {"control", "max_gaussians", &c.control.max_gaussians},
      {"control", "split_epsilon", &c.control.split_epsilon},
      {"control", "split_scale_factor", &c.control.split_scale_factor},
      {"control", "enable_control", &c.control.enable_control},
      {"control", "enable_split", &c.control.enable_split},
      {"control", "split_interval", &c.control.split_interval},
      {"control", "split_generations", &c.control.split_generations},
      {"weights", "rgb", &c.weights.rgb},
      {"weights", "sil", &c.weights.sil},
      {"weights", "offset", &c.weights.offset},
      {"weights", "lmk", &c.weights.lmk},
      {"weights", "lap", &c.weights.lap},
      {"weights", "mesh", &c.weights.mesh},
      {"weights", "rgb2", &c.weights.rgb2},
      {"weights", "perc", &c.weights.perc},
      {"adam", "beta1", &c.adam.beta1},
      {"adam", "beta2", &c.adam.beta2},
      {"adam", "eps", &c.adam.eps},
      {"stage1", "iterations", &s1.iterations},
      {"stage1", "batch", &s1.batch},
      {"stage1", "extract_every", &s1.extract_every},
      {"stage1", "lr", &s1.lr},
      {"stage1", "icp", &s1.icp},
      {"stage1", "icp_max_iters", &s1.icp_config.max_iters},
      {"stage1", "icp_tol", &s1.icp_config.tol},
      {"stage1", "icp_trim_fraction", &s1.icp_config.trim_fraction},
      {"stage1", "vertex_scale", &s1.vertex_scale},
      {"stage1", "vertex_opacity", &s1.vertex_opacity},
      {"stage1", "seed", &s1.seed},
      {"stage1", "psnr_every", &s1.psnr_every},
      {"stage2", "iterations", &s2.iterations},
      {"stage2", "batch", &s2.batch},
      {"stage2", "lr_fields", &s2.lr.fields},
      {"stage2", "lr_positions", &s2.lr.positions},
      {"stage2", "lr_features", &s2.lr.features},
      {"stage2", "lr_rotations", &s2.lr.rotations},
      {"stage2", "lr_scales", &s2.lr.scales},
      {"stage2", "lr_opacity", &s2.lr.opacity},
      {"stage2", "perceptual", &s2.perceptual},
      {"stage2", "patch_size", &s2.patches.size},
      {"stage2", "patch_count", &s2.patches.count},
      {"stage2", "seed", &s2.seed},
      {"stage2", "psnr_every", &s2.psnr_every},
      {"render", "background", &c.background},
  };
}

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

/// Pushes the shared sub-configs into the stage configs.
void sync(AppConfig& c) {
  c.stage1.weights = c.weights;
  c.stage2.weights = c.weights;
  c.stage1.adam = c.adam;
  c.stage2.adam = c.adam;
  c.stage1.background = c.background;
  c.stage2.background = c.background;
}

struct Value {
  std::variant<double, long long, bool, std::string, std::vector<double>> v;
  bool is_integer() const { return std::holds_alternative<long long>(v); }
};

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::Parse, "config line " + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double parse_number(const std::string& tok, std::size_t line, bool& integer) {
  std::string t;
  for (char ch : tok)
    if (ch != '_') t.push_back(ch);
  if (t.empty()) fail(line, "empty value");
  integer = t.find_first_of(".eE") == std::string::npos && t != "inf" && t != "nan";
  const char* b = t.data() + (t[0] == '+' ? 1 : 0);
  double d = 0;
  const auto r = std::from_chars(b, t.data() + t.size(), d);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) fail(line, "bad number '" + tok + "'");
  return d;
}

Value parse_value(const std::string& raw, std::size_t line) {
  const std::string s = trim(raw);
  if (s == "true") return {true};
  if (s == "false") return {false};
  if (!s.empty() && s[0] == '"') {
    if (s.size() < 2 || s.back() != '"') fail(line, "unterminated string");
    return {s.substr(1, s.size() - 2)};
  }
  if (!s.empty() && s[0] == '[') {
    if (s.back() != ']') fail(line, "unterminated array");
    std::vector<double> out;
    std::stringstream ss(s.substr(1, s.size() - 2));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) continue;
      bool integer = false;
      out.push_back(parse_number(tok, line, integer));
    }
    return {out};
  }
  bool integer = false;
  const double d = parse_number(s, line, integer);
  if (integer) return {static_cast<long long>(d)};
  return {d};
}

std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    if (line[k] == '"') in_str = !in_str;
    if (line[k] == '#' && !in_str) return line.substr(0, k);
  }
  return line;
}

}  // namespace

std::string to_toml(const AppConfig& cfg_in) {
  AppConfig cfg = cfg_in;
  std::ostringstream os;
  std::string table;
  for (const auto& b : bindings(cfg)) {
    if (b.table != table) {
      os << (table.empty() ? "" : "\n") << '[' << b.table << "]\n";
      table = b.table;
    }
    os << b.key << " = ";
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, double>) os << fmt_double(*p);
          else if constexpr (std::is_same_v<T, bool>) os << (*p ? "true" : "false");
          else if constexpr (std::is_same_v<T, std::string>) os << '"' << *p << '"';
          else if constexpr (std::is_same_v<T, Vec3>)
            os << '[' << fmt_double((*p)[0]) << ", " << fmt_double((*p)[1]) << ", " << fmt_double((*p)[2]) << ']';
          else os << *p;
        },
        b.target);
    os << '\n';
  }
  return os.str();
}

AppConfig parse_toml(const std::string& text, const AppConfig& base) {
  AppConfig cfg = base;
  auto binds = bindings(cfg);
  std::map<std::pair<std::string, std::string>, Target> lookup;
  std::set<std::string> tables;
  for (const auto& b : binds) {
    lookup.emplace(std::make_pair(b.table, b.key), b.target);
    tables.insert(b.table);
  }

  std::istringstream is(text);
  std::string raw, table;
  std::size_t line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail(line, "malformed table header");
      table = trim(s.substr(1, s.size() - 2));
      if (!tables.count(table)) fail(line, "unknown table [" + table + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    const auto it = lookup.find({table, key});
    if (it == lookup.end()) fail(line, "unknown key '" + (table.empty() ? key : table + "." + key) + "'");
    const Value v = parse_value(s.substr(eq + 1), line);
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, double>) {
            if (const auto* d = std::get_if<double>(&v.v)) *p = *d;
            else if (const auto* i = std::get_if<long long>(&v.v)) *p = static_cast<double>(*i);
            else fail(line, "'" + key + "' expects a number");
          } else if constexpr (std::is_same_v<T, bool>) {
            if (const auto* b = std::get_if<bool>(&v.v)) *p = *b;
            else fail(line, "'" + key + "' expects true or false");
          } else if constexpr (std::is_same_v<T, std::string>) {
            if (const auto* str = std::get_if<std::string>(&v.v)) *p = *str;
            else fail(line, "'" + key + "' expects a string");
          } else if constexpr (std::is_same_v<T, Vec3>) {
            const auto* arr = std::get_if<std::vector<double>>(&v.v);
            if (!arr || arr->size() != 3) fail(line, "'" + key + "' expects an array of 3 numbers");
            *p = Vec3((*arr)[0], (*arr)[1], (*arr)[2]);
          } else {
            const auto* i = std::get_if<long long>(&v.v);
            if (!i) fail(line, "'" + key + "' expects an integer");
            if (*i < 0 && !std::is_signed_v<T>) fail(line, "'" + key + "' must be non-negative");
            *p = static_cast<T>(*i);
          }
        },
        it->second);
  }
  sync(cfg);
  if (cfg.model.feature_dim < 1 || cfg.model.expression_dim < 1 || cfg.model.grid_resolution < 1 ||
      cfg.model.eta_dim < 3 || cfg.model.rbf_centers < 1)
    throw Error(ErrorCode::InvalidArgument, "model dimensions must be positive (eta_dim >= 3)");
  if (cfg.model.field_kind != "linear_blend" && cfg.model.field_kind != "radial_basis")
    throw Error(ErrorCode::InvalidArgument, "model.field_kind must be linear_blend or radial_basis");
  cfg.control.validate(0);
  cfg.weights.validate();
  cfg.stage1.validate();
  cfg.stage2.validate();
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
  AppConfig base;
  sync(base);
  return parse_toml(read_text(path), base);
}

}  // namespace gsavatar::io
