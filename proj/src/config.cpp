#include "evb/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>

#include "evb/error.hpp"
#include "evb/io_util.hpp"

extern char** environ;

namespace evb {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

template <typename T>
T scalar(const YAML::Node& n, const std::string& key) {
  if (!n.IsScalar()) throw InvalidArgument(key + ": expected a scalar");
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw InvalidArgument(key + ": cannot parse '" + n.Scalar() + "'");
  }
}

struct Field {
  std::string key;
  std::function<void(ToolConfig&, const YAML::Node&)> set;
  std::function<std::string(const ToolConfig&)> get;  // YAML flow text
};

template <typename T, typename Acc>
Field num(std::string key, Acc acc) {
  return {key,
          [key, acc](ToolConfig& c, const YAML::Node& n) {
            if constexpr (std::is_unsigned_v<T>) {
              if (n.IsScalar() && !n.Scalar().empty() && n.Scalar()[0] == '-') {
                throw InvalidArgument(key + ": must be non-negative");
              }
            }
            acc(c) = scalar<T>(n, key);
          },
          [acc](const ToolConfig& c) {
            const auto v = acc(const_cast<ToolConfig&>(c));
            if constexpr (std::is_floating_point_v<T>) {
              return fmt_double(v);
            } else if constexpr (std::is_same_v<T, bool>) {
              return std::string(v ? "true" : "false");
            } else {
              return std::to_string(v);
            }
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    v.push_back(num<std::uint64_t>("seed", [](ToolConfig& c) -> std::uint64_t& { return c.seed; }));
    v.push_back(num<unsigned>("threads", [](ToolConfig& c) -> unsigned& { return c.threads; }));
    v.push_back(num<int>("curation.k", [](ToolConfig& c) -> int& { return c.curation.k; }));
    v.push_back(num<std::size_t>("curation.max_pairs_per_scene", [](ToolConfig& c) -> std::size_t& {
      return c.curation.max_pairs_per_scene;
    }));
    v.push_back(
        num<bool>("curation.balance", [](ToolConfig& c) -> bool& { return c.curation.balance; }));
    v.push_back(num<bool>("curation.scale_filter",
                          [](ToolConfig& c) -> bool& { return c.curation.scale_filter; }));
    v.push_back(num<double>("curation.fov_delta_max",
                            [](ToolConfig& c) -> double& { return c.curation.fov_delta_max; }));
    v.push_back(num<double>("curation.focal_ratio_max",
                            [](ToolConfig& c) -> double& { return c.curation.focal_ratio_max; }));
    v.push_back(num<double>("curation.resolution_ratio_max", [](ToolConfig& c) -> double& {
      return c.curation.resolution_ratio_max;
    }));
    v.push_back(num<double>("curation.coverage_threshold", [](ToolConfig& c) -> double& {
      return c.curation.coverage_threshold;
    }));
    v.push_back(num<bool>("curation.use_camera_centers",
                          [](ToolConfig& c) -> bool& { return c.curation.use_camera_centers; }));
    v.push_back({"curation.euler",
                 [](ToolConfig& c, const YAML::Node& n) {
                   c.curation.euler = parse_euler_convention(scalar<std::string>(n, "curation.euler"));
                 },
                 [](const ToolConfig& c) { return std::string(to_string(c.curation.euler)); }});
    v.push_back({"pose.thresholds",
                 [](ToolConfig& c, const YAML::Node& n) {
                   if (!n.IsSequence()) throw InvalidArgument("pose.thresholds: expected a list");
                   std::vector<double> t;
                   for (const auto& e : n) t.push_back(scalar<double>(e, "pose.thresholds"));
                   c.pose.thresholds = t;
                 },
                 [](const ToolConfig& c) {
                   std::string s = "[";
                   for (std::size_t i = 0; i < c.pose.thresholds.size(); ++i) {
                     if (i) s += ", ";
                     s += fmt_double(c.pose.thresholds[i]);
                   }
                   return s + "]";
                 }});
    v.push_back(num<double>("pose.auc_max", [](ToolConfig& c) -> double& { return c.pose.auc_max; }));
    v.push_back(num<bool>("pose.strict", [](ToolConfig& c) -> bool& { return c.pose.strict; }));
    v.push_back(
        num<bool>("pose.permissive", [](ToolConfig& c) -> bool& { return c.pose.permissive; }));
    v.push_back(num<int>("recon.icp_max_iters",
                         [](ToolConfig& c) -> int& { return c.recon.icp.max_iters; }));
    v.push_back(num<double>("recon.icp_rmse_tol",
                            [](ToolConfig& c) -> double& { return c.recon.icp.rmse_tol; }));
    v.push_back(
        num<double>("recon.icp_gate", [](ToolConfig& c) -> double& { return c.recon.icp.gate; }));
    v.push_back(num<double>("recon.icp_gate_factor",
                            [](ToolConfig& c) -> double& { return c.recon.icp.gate_factor; }));
    v.push_back(num<bool>("recon.icp_with_scale",
                          [](ToolConfig& c) -> bool& { return c.recon.icp.with_scale; }));
    v.push_back(num<std::size_t>("recon.subsample_cap", [](ToolConfig& c) -> std::size_t& {
      return c.recon.subsample_cap;
    }));
    v.push_back(num<std::size_t>("recon.coarse_cap", [](ToolConfig& c) -> std::size_t& {
      return c.recon.coarse_cap;
    }));
    v.push_back(num<bool>("depth.median_align",
                          [](ToolConfig& c) -> bool& { return c.depth_median_align; }));
    v.push_back(num<int>("layers.delta", [](ToolConfig& c) -> int& { return c.layers_delta; }));
    v.push_back(num<std::size_t>("sampler.n", [](ToolConfig& c) -> std::size_t& { return c.sampler.n; }));
    v.push_back(
        num<double>("sampler.w_conn", [](ToolConfig& c) -> double& { return c.sampler.w_conn; }));
    v.push_back(
        num<double>("sampler.w_div", [](ToolConfig& c) -> double& { return c.sampler.w_div; }));
    v.push_back(num<std::size_t>("sampler.min_shared",
                                 [](ToolConfig& c) -> std::size_t& { return c.covis.min_shared; }));
    v.push_back(num<double>("sampler.min_translation_m", [](ToolConfig& c) -> double& {
      return c.covis.min_translation_m;
    }));
    v.push_back(
        num<double>("loss.lambda_t", [](ToolConfig& c) -> double& { return c.loss_lambda_t; }));
    v.push_back({"loss.translation_mode",
                 [](ToolConfig& c, const YAML::Node& n) {
                   const auto s = scalar<std::string>(n, "loss.translation_mode");
                   if (s == "none") {
                     c.loss_translation_mode.reset();
                   } else {
                     c.loss_translation_mode = parse_translation_mode(s);
                   }
                 },
                 [](const ToolConfig& c) {
                   return c.loss_translation_mode
                              ? std::string(to_string(*c.loss_translation_mode))
                              : std::string("none");
                 }});
    return v;
  }();
  return f;
}

const Field* find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

ParseError config_error(const std::string& file, const YAML::Mark& mark, const std::string& msg) {
  return ParseError(ParseError::Kind::kInvalidValue, file, std::nullopt,
                    mark.line >= 0 ? std::optional<std::uint64_t>(mark.line + 1) : std::nullopt,
                    msg);
}

}  // namespace

std::vector<std::string> ToolConfig::keys() {
  std::vector<std::string> k;
  for (const auto& f : fields()) k.push_back(f.key);
  return k;
}

std::string ToolConfig::env_name(std::string_view key) {
  std::string s = "EVB_";
  for (char c : key) s += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string ToolConfig::dump() const {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    if (dot == std::string::npos) {
      out += f.key + ": " + f.get(*this) + "\n";
      continue;
    }
    const auto sec = f.key.substr(0, dot);
    if (sec != section) {
      out += sec + ":\n";
      section = sec;
    }
    out += "  " + f.key.substr(dot + 1) + ": " + f.get(*this) + "\n";
  }
  return out;
}

std::string ToolConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(dump())));
  return buf;
}

void ToolConfig::load_yaml(std::string_view text, const std::string& file) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw config_error(file, e.mark, e.msg);
  }
  if (root.IsNull()) return;
  if (!root.IsMap()) throw config_error(file, root.Mark(), "top level must be a mapping");
  ToolConfig next = *this;
  std::function<void(const YAML::Node&, const std::string&)> walk =
      [&](const YAML::Node& node, const std::string& prefix) {
        for (const auto& kv : node) {
          const auto name = kv.first.as<std::string>();
          const auto key = prefix.empty() ? name : prefix + "." + name;
          if (const Field* f = find_field(key)) {
            try {
              f->set(next, kv.second);
            } catch (const Error& e) {
              throw config_error(file, kv.second.Mark(), e.what());
            }
          } else if (kv.second.IsMap() && prefix.empty()) {
            bool known = false;
            for (const auto& f : fields()) known = known || f.key.rfind(key + ".", 0) == 0;
            if (!known) throw config_error(file, kv.first.Mark(), "unknown section '" + key + "'");
            walk(kv.second, key);
          } else {
            throw config_error(file, kv.first.Mark(), "unknown key '" + key + "'");
          }
        }
      };
  walk(root, "");
  try {
    next.validate();
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    const auto key = msg.substr(0, msg.find(':'));
    // Point at the offending key when the file sets it.
    YAML::Node n = root;
    std::size_t pos = 0;
    bool found = true;
    while (found && pos <= key.size()) {
      const auto dot = key.find('.', pos);
      const auto part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
      found = n.IsMap() && n[part].IsDefined();
      if (found) n = n[part];
      if (dot == std::string::npos) break;
      pos = dot + 1;
    }
    if (found) throw config_error(file, n.Mark(), msg);
    throw ParseError(ParseError::Kind::kInvalidValue, file, std::nullopt, std::nullopt, msg);
  }
  *this = next;
}

void ToolConfig::set(std::string_view assignment, const std::string& origin) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw InvalidArgument(origin + ": expected key=value, got '" + std::string(assignment) + "'");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string value(assignment.substr(eq + 1));
  const Field* f = find_field(key);
  if (!f) throw InvalidArgument(origin + ": unknown key '" + key + "'");
  ToolConfig next = *this;
  try {
    f->set(next, YAML::Load(value));
  } catch (const YAML::Exception& e) {
    throw InvalidArgument(origin + ": " + key + ": " + e.msg);
  } catch (const Error& e) {
    throw InvalidArgument(origin + ": " + e.what());
  }
  next.validate();
  *this = next;
}

void ToolConfig::apply_env(const std::map<std::string, std::string>& env) {
  for (const auto& f : fields()) {
    const auto it = env.find(env_name(f.key));
    if (it != env.end()) set(f.key + "=" + it->second, it->first);
  }
}

void ToolConfig::validate() const {
  curation.validate();
  if (pose.thresholds.empty()) throw InvalidArgument("pose.thresholds: must not be empty");
  for (double t : pose.thresholds) {
    if (!(t > 0.0) || !std::isfinite(t)) throw InvalidArgument("pose.thresholds: must be positive");
  }
  if (!(pose.auc_max >= 1.0) || !std::isfinite(pose.auc_max)) {
    throw InvalidArgument("pose.auc_max: must be >= 1");
  }
  if (recon.icp.max_iters < 0) throw InvalidArgument("recon.icp_max_iters: must be >= 0");
  if (!(recon.icp.rmse_tol >= 0.0)) throw InvalidArgument("recon.icp_rmse_tol: must be >= 0");
  if (!(recon.icp.gate >= 0.0)) throw InvalidArgument("recon.icp_gate: must be >= 0 (0 = auto)");
  if (!(recon.icp.gate_factor > 0.0)) throw InvalidArgument("recon.icp_gate_factor: must be > 0");
  if (layers_delta < 0) throw InvalidArgument("layers.delta: must be >= 0");
  if (sampler.n == 0) throw InvalidArgument("sampler.n: must be >= 1");
  if (!(sampler.w_conn >= 0.0)) throw InvalidArgument("sampler.w_conn: must be >= 0");
  if (!(sampler.w_div >= 0.0)) throw InvalidArgument("sampler.w_div: must be >= 0");
  if (!(covis.min_translation_m >= 0.0)) {
    throw InvalidArgument("sampler.min_translation_m: must be >= 0");
  }
  if (!(loss_lambda_t >= 0.0)) throw InvalidArgument("loss.lambda_t: must be >= 0");
  if (threads == 0) throw InvalidArgument("threads: must be >= 1");
}

std::map<std::string, std::string> evb_environment() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    const std::string_view kv(*e);
    if (kv.rfind("EVB_", 0) != 0) continue;
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) continue;
    env.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
  }
  return env;
}

}  // namespace evb
