#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "sceneforge_cli/cli.hpp"

namespace sceneforge::cli {

namespace {

namespace pt = boost::property_tree;

template <typename T>
T convert(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (!in || !(in >> std::ws).eof())
    throw ConfigError("config key " + key + ": cannot parse '" + text + "'");
  return value;
}

bool convert_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("config key " + key + ": expected a boolean, got '" + text + "'");
}

}  // namespace

void RunConfig::validate() const {
  if (provider != "live" && provider != "scripted")
    throw ConfigError("provider must be 'live' or 'scripted', got '" + provider + "'");
  if (handedness != "right" && handedness != "left")
    throw ConfigError("handedness must be 'right' or 'left'");
  if (buffer < 0.0) throw ConfigError("buffer must be non-negative");
  if (refinement_sweeps < 1 || refinement_sweeps > 3)
    throw ConfigError("refinement_sweeps must be between 1 and 3");
  if (k < 1) throw ConfigError("k must be at least 1");
  if (repair_retries < 0) throw ConfigError("repair_retries must be non-negative");
  if (timeout_seconds < 1) throw ConfigError("timeout_seconds must be positive");
  if (rate_per_second < 0.0 || burst < 1.0) throw ConfigError("rate limits out of range");
  if (facing_tolerance < 0.0 || alignment_tolerance < 0.0 || adjacency_gap < 0.0)
    throw ConfigError("validation tolerances must be non-negative");
  static const std::set<std::string> levels{"trace", "debug", "info", "warn", "error", "off"};
  if (!levels.count(log_level)) throw ConfigError("unknown log level '" + log_level + "'");
}

void apply_config_file(const std::filesystem::path& path, RunConfig& c,
                       const std::function<bool(const std::string& key)>& flag_given) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }

  using Setter = std::function<void(const std::string& key, const std::string& value)>;
  auto str = [](std::string& field) -> Setter {
    return [&field](const std::string&, const std::string& v) { field = v; };
  };
  auto num = [](double& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = convert<double>(k, v); };
  };
  auto integer = [](int& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = convert<int>(k, v); };
  };
  auto boolean = [](bool& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = convert_bool(k, v); };
  };
  const std::map<std::string, Setter> setters{
      {"provider.kind", str(c.provider)},
      {"provider.fixture", str(c.fixture)},
      {"provider.endpoint", str(c.endpoint)},
      {"provider.text_model", str(c.text_model)},
      {"provider.vision_model", str(c.vision_model)},
      {"provider.embedding_model", str(c.embedding_model)},
      {"provider.temperature", num(c.temperature)},
      {"provider.timeout_seconds", integer(c.timeout_seconds)},
      {"provider.rate_per_second", num(c.rate_per_second)},
      {"provider.burst", num(c.burst)},
      {"provider.repair_retries", integer(c.repair_retries)},
      {"provider.handedness", str(c.handedness)},
      {"library.path", str(c.library)},
      {"layout.buffer", num(c.buffer)},
      {"layout.refinement_sweeps", integer(c.refinement_sweeps)},
      {"layout.skip_refinement", boolean(c.skip_refinement)},
      {"retrieval.k", integer(c.k)},
      {"validation.facing_tolerance", num(c.facing_tolerance)},
      {"validation.alignment_tolerance", num(c.alignment_tolerance)},
      {"validation.adjacency_gap", num(c.adjacency_gap)},
      {"validation.support_tolerance", num(c.support_tolerance)},
      {"output.dir", str(c.out_dir)},
      {"output.log_level", str(c.log_level)},
      {"output.data_dir", str(c.data_dir)},
  };

  for (const auto& [section, entries] : tree) {
    if (entries.empty() && !entries.data().empty())
      throw ConfigError("config key '" + section + "' must live inside a section");
    for (const auto& [name, value] : entries) {
      const std::string key = section + "." + name;
      auto it = setters.find(key);
      if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
      if (flag_given(key)) continue;
      it->second(key, value.data());
    }
  }
}

std::array<double, 3> parse_bounds(const std::string& text) {
  std::array<double, 3> out{};
  std::string rest = text;
  std::replace(rest.begin(), rest.end(), 'X', 'x');
  std::istringstream in(rest);
  for (int i = 0; i < 3; ++i) {
    std::string part;
    if (!std::getline(in, part, 'x')) throw ConfigError("bounds must look like WxDxH, got '" + text + "'");
    try {
      std::size_t used = 0;
      out[i] = std::stod(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ConfigError("bounds must look like WxDxH, got '" + text + "'");
    }
    if (!(out[i] > 0.0)) throw ConfigError("bounds must be positive");
  }
  std::string extra;
  if (std::getline(in, extra)) throw ConfigError("bounds must look like WxDxH, got '" + text + "'");
  return out;
}

std::filesystem::path output_path(const std::filesystem::path& out_dir, const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path root = fs::weakly_canonical(fs::absolute(out_dir));
  const fs::path target = fs::weakly_canonical(root / name);
  auto r = root.begin();
  auto t = target.begin();
  for (; r != root.end(); ++r, ++t) {
    if (t == target.end() || *r != *t) throw ConfigError("output " + name + " is outside --out-dir");
  }
  if (target == root) throw ConfigError("output name '" + name + "' is not a file inside --out-dir");
  return target;
}

}  // namespace sceneforge::cli
