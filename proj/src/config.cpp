// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/config.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <system_error>
#include <type_traits>
#include <vector>

#include "vg3s/error.hpp"

namespace vg3s {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

double to_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) {
    throw ConfigError("expected a number, got '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

std::string fmt(double v) {
  if (std::isinf(v)) return "inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string fmt_list(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

struct Field {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

Field size_field(std::size_t& ref) {
  return {[&ref](const std::string& s) { ref = static_cast<std::size_t>(to_u64(s)); },
          [&ref] { return std::to_string(ref); }};
}
Field u64_field(std::uint64_t& ref) {
  return {[&ref](const std::string& s) { ref = to_u64(s); }, [&ref] { return std::to_string(ref); }};
}
Field double_field(double& ref) {
  return {[&ref](const std::string& s) { ref = to_double(s); }, [&ref] { return fmt(ref); }};
}
Field bool_field(bool& ref) {
  return {[&ref](const std::string& s) { ref = to_bool(s); }, [&ref] { return std::string(ref ? "true" : "false"); }};
}
Field size_list_field(std::vector<std::size_t>& ref) {
  return {[&ref](const std::string& s) {
            ref.clear();
            for (const std::string& x : split_list(s)) ref.push_back(static_cast<std::size_t>(to_u64(x)));
          },
          [&ref] { return fmt_list(ref); }};
}
Field double_list_field(std::vector<double>& ref) {
  return {[&ref](const std::string& s) {
            ref.clear();
            if (trim(s).empty()) return;
            for (const std::string& x : split_list(s)) ref.push_back(to_double(x));
          },
          [&ref] { return fmt_list(ref); }};
}
template <std::size_t N, typename T>
Field array_field(std::array<T, N>& ref) {
  return {[&ref](const std::string& s) {
            const auto items = split_list(s);
            if (items.size() != N) throw ConfigError("expected " + std::to_string(N) + " comma-separated values");
            for (std::size_t i = 0; i < N; ++i) {
              if constexpr (std::is_floating_point_v<T>) {
                ref[i] = to_double(items[i]);
              } else {
                ref[i] = static_cast<T>(to_u64(items[i]));
              }
            }
          },
          [&ref] { return fmt_list(std::vector<T>(ref.begin(), ref.end())); }};
}

std::map<std::string, Field> fields(RunConfig& c) {
  std::map<std::string, Field> f;
  f["seed"] = u64_field(c.seed);
  f["scene"] = {[&c](const std::string& s) {
                  if (s != "toy" && s != "empty") throw ConfigError("expected toy or empty, got '" + s + "'");
                  c.scene = s;
                },
                [&c] { return c.scene; }};
  f["classes"] = size_field(c.num_classes);
  f["grid.dims"] = array_field(c.grid.dims);
  f["grid.origin"] = array_field(c.grid.origin);
  f["grid.voxel_size"] = double_field(c.grid.voxel_size);

  f["camera.views"] = size_field(c.rig.views);
  f["camera.radius"] = double_field(c.rig.radius);
  f["camera.height"] = double_field(c.rig.height);
  f["camera.fov_deg"] = double_field(c.rig.fov_deg);
  f["camera.width"] = size_field(c.rig.width);
  f["camera.height_px"] = size_field(c.rig.height_px);

  f["tokens.layers"] = size_field(c.tokens.layers);
  f["tokens.patch_h"] = size_field(c.tokens.patch_h);
  f["tokens.patch_w"] = size_field(c.tokens.patch_w);
  f["tokens.channels"] = size_field(c.tokens.channels);
  f["tokens.rays_per_side"] = size_field(c.tokens.rays_per_side);
  f["tokens.far"] = double_field(c.tokens.far);
  f["tokens.noise"] = double_field(c.tokens.noise);
  f["tokens.layer_variation"] = double_field(c.tokens.layer_variation);
  f["tokens.dtype"] = {[&c](const std::string& s) {
                         if (s == "f32") {
                           c.tokens.dtype = TokenDtype::kFloat32;
                         } else if (s == "f64") {
                           c.tokens.dtype = TokenDtype::kFloat64;
                         } else {
                           throw ConfigError("expected f32 or f64, got '" + s + "'");
                         }
                       },
                       [&c] { return std::string(c.tokens.dtype == TokenDtype::kFloat32 ? "f32" : "f64"); }};

  f["hgfa.groups"] = size_field(c.hgfa.groups);
  f["hgfa.layers_per_group"] = size_field(c.hgfa.layers_per_group);
  f["hgfa.expansion_ratios"] = double_list_field(c.hgfa.expansion_ratios);
  f["hgfa.pyramid_dims"] = size_list_field(c.hgfa.pyramid_dims);
  f["hgfa.scale_factors"] = double_list_field(c.hgfa.scale_factors);
  f["hgfa.target_dim"] = size_field(c.hgfa.target_dim);
  f["hgfa.se_reduction"] = size_field(c.hgfa.se_reduction);
  f["hgfa.dropout"] = double_field(c.hgfa.dropout);
  f["hgfa.se_bypass"] = bool_field(c.hgfa.se_bypass);

  f["decoder.blocks"] = size_field(c.decoder.blocks);
  f["decoder.hidden"] = size_field(c.decoder.hidden);
  f["decoder.fourier_bands"] = size_field(c.decoder.fourier_bands);
  f["decoder.max_shift_voxels"] = double_field(c.decoder.max_shift_voxels);
  f["decoder.max_log_scale"] = double_field(c.decoder.max_log_scale);
  f["decoder.max_rotation"] = double_field(c.decoder.max_rotation);
  f["decoder.max_opacity_logit"] = double_field(c.decoder.max_opacity_logit);
  f["decoder.max_class_logit"] = double_field(c.decoder.max_class_logit);
  f["decoder.min_scale_voxels"] = double_field(c.decoder.min_scale_voxels);
  f["decoder.max_scale_voxels"] = double_field(c.decoder.max_scale_voxels);

  f["gaussians.count"] = size_field(c.gaussians);
  f["gaussians.scale_voxels"] = double_field(c.init.scale_voxels);
  f["gaussians.initial_opacity"] = double_field(c.init.initial_opacity);
  f["gaussians.jitter"] = double_field(c.init.jitter);

  f["splat.kappa"] = double_field(c.splat.kappa);
  f["splat.workers"] = {[&c](const std::string& s) { c.splat.workers = static_cast<unsigned>(to_u64(s)); },
                        [&c] { return std::to_string(c.splat.workers); }};
  f["eval.threshold"] = double_field(c.threshold);

  f["loss.lambda"] = double_field(c.loss.lambda);
  f["loss.beta"] = double_field(c.loss.beta);
  f["loss.class_weights"] = double_list_field(c.loss.class_weights);

  f["train.peak_lr"] = double_field(c.optim.peak_lr);
  f["train.warmup"] = size_field(c.optim.warmup);
  f["train.steps"] = size_field(c.optim.steps);
  f["train.beta1"] = double_field(c.optim.beta1);
  f["train.beta2"] = double_field(c.optim.beta2);
  f["train.eps"] = double_field(c.optim.eps);
  return f;
}

}  // namespace

void RunConfig::validate() const {
  if (num_classes < 1 || num_classes > 254) throw ConfigError("classes must be in [1, 254]");
  for (std::size_t d : grid.dims) {
    if (d == 0) throw ConfigError("grid.dims entries must be positive");
  }
  if (!(grid.voxel_size > 0)) throw ConfigError("grid.voxel_size must be positive");
  if (rig.views == 0) throw ConfigError("camera.views must be positive");
  if (!(rig.fov_deg > 0 && rig.fov_deg < 180)) throw ConfigError("camera.fov_deg must be in (0, 180)");
  if (!(rig.radius > 0)) throw ConfigError("camera.radius must be positive");
  if (tokens.patch_h == 0 || tokens.patch_w == 0 || rig.height_px % tokens.patch_h || rig.width % tokens.patch_w) {
    throw ConfigError("tokens.patch_h and tokens.patch_w must divide camera.height_px = " + std::to_string(rig.height_px) +
                      " and camera.width = " + std::to_string(rig.width));
  }
  if (tokens.rays_per_side == 0) throw ConfigError("tokens.rays_per_side must be positive");
  if (!(tokens.far > 0)) throw ConfigError("tokens.far must be positive");
  if (!(tokens.noise >= 0) || !(tokens.layer_variation >= 0)) {
    throw ConfigError("tokens.noise and tokens.layer_variation must be non-negative");
  }
  hgfa.validate(tokens.layers, tokens.channels, tokens.patch_h, tokens.patch_w);
  decoder.validate();
  if (gaussians == 0) throw ConfigError("gaussians.count must be positive");
  if (!(init.scale_voxels >= decoder.min_scale_voxels && init.scale_voxels <= decoder.max_scale_voxels)) {
    throw ConfigError("gaussians.scale_voxels must lie in [decoder.min_scale_voxels, decoder.max_scale_voxels]");
  }
  if (!(init.initial_opacity > 0 && init.initial_opacity < 1)) {
    throw ConfigError("gaussians.initial_opacity must be in (0, 1)");
  }
  if (!(init.jitter >= 0 && init.jitter < 0.5)) throw ConfigError("gaussians.jitter must be in [0, 0.5)");
  if (!(splat.kappa > 0)) throw ConfigError("splat.kappa must be positive");
  if (splat.workers == 0) throw ConfigError("splat.workers must be positive");
  if (!(threshold > 0 && threshold < 1)) throw ConfigError("eval.threshold must be in (0, 1)");
  loss.validate(num_classes + 1);
  if (!(optim.peak_lr >= 0)) throw ConfigError("train.peak_lr must be non-negative");
  if (optim.steps == 0) throw ConfigError("train.steps must be positive");
  if (optim.warmup >= optim.steps) {
    throw ConfigError("train.warmup (" + std::to_string(optim.warmup) + ") must be below train.steps (" +
                      std::to_string(optim.steps) + ")");
  }
  if (!(optim.beta1 >= 0 && optim.beta1 < 1) || !(optim.beta2 >= 0 && optim.beta2 < 1) || !(optim.eps > 0)) {
    throw ConfigError("train.beta1 and train.beta2 must be in [0, 1) and train.eps positive");
  }
}

RunConfig parse_config_text(const std::string& text, const std::string& source) {
  RunConfig cfg;
  auto table = fields(cfg);
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' set twice");
    try {
      it->second.set(value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  cfg.tokens.groups = cfg.hgfa.groups;
  cfg.tokens.num_classes = cfg.num_classes;
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read config " + path);
  return parse_config_text(ss.str(), path);
}

std::string dump_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string out;
  for (const auto& [key, field] : fields(copy)) out += key + " = " + field.get() + "\n";
  return out;
}

}  // namespace vg3s
