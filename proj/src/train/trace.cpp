#include "gsavatar/train/trace.hpp"

#include <cstring>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "gsavatar/common/error.hpp"

namespace gsavatar::train {

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

void FitTrace::record(TraceEntry e) {
  if (!entries.empty() && e.iteration <= entries.back().iteration)
    throw Error(ErrorCode::InvalidArgument, "trace iterations must increase");
  entries.push_back(std::move(e));
}

bool FitTrace::same_trajectory(const FitTrace& o) const {
  if (entries.size() != o.entries.size() || splits.size() != o.splits.size()) return false;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto &a = entries[k], &b = o.entries[k];
    if (a.iteration != b.iteration || !same_bits(a.loss, b.loss) || a.gaussians != b.gaussians) return false;
    if (a.psnr.has_value() != b.psnr.has_value() || (a.psnr && !same_bits(*a.psnr, *b.psnr))) return false;
    if (a.components.size() != b.components.size()) return false;
    for (std::size_t c = 0; c < a.components.size(); ++c)
      if (a.components[c].first != b.components[c].first || !same_bits(a.components[c].second, b.components[c].second))
        return false;
  }
  for (std::size_t k = 0; k < splits.size(); ++k)
    if (splits[k].iteration != o.splits[k].iteration || splits[k].parents != o.splits[k].parents ||
        splits[k].gaussians_after != o.splits[k].gaussians_after)
      return false;
  return true;
}

std::string FitTrace::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "iteration,loss";
  if (!entries.empty())
    for (const auto& [name, v] : entries.front().components) os << ',' << name;
  os << ",psnr,gaussians\n";
  for (const auto& e : entries) {
    os << e.iteration << ',' << e.loss;
    for (const auto& [name, v] : e.components) os << ',' << v;
    os << ',';
    if (e.psnr) os << *e.psnr;
    os << ',' << e.gaussians << '\n';
  }
  return os.str();
}

std::string FitTrace::to_json() const {
  nlohmann::json j;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json je{{"iteration", e.iteration}, {"loss", e.loss}, {"gaussians", e.gaussians}};
    je["psnr"] = e.psnr ? nlohmann::json(*e.psnr) : nlohmann::json(nullptr);
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& [name, v] : e.components) comps.push_back({{"name", name}, {"value", v}});
    je["components"] = std::move(comps);
    j["entries"].push_back(std::move(je));
  }
  j["splits"] = nlohmann::json::array();
  for (const auto& s : splits)
    j["splits"].push_back({{"iteration", s.iteration}, {"parents", s.parents}, {"gaussians_after", s.gaussians_after}});
  j["wall_clock_seconds"] = wall_clock_seconds;
  return j.dump(2);
}

FitTrace FitTrace::from_json(const std::string& text) {
  FitTrace t;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& je : j.at("entries")) {
      TraceEntry e;
      e.iteration = je.at("iteration").get<long>();
      e.loss = je.at("loss").get<double>();
      e.gaussians = je.at("gaussians").get<std::size_t>();
      if (!je.at("psnr").is_null()) e.psnr = je.at("psnr").get<double>();
      for (const auto& c : je.at("components")) e.components.emplace_back(c.at("name"), c.at("value").get<double>());
      t.entries.push_back(std::move(e));
    }
    for (const auto& s : j.at("splits"))
      t.splits.push_back({s.at("iteration").get<long>(), s.at("parents").get<std::size_t>(),
                          s.at("gaussians_after").get<std::size_t>()});
    t.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("trace json: ") + e.what());
  }
  return t;
}

}  // namespace gsavatar::train
