#pragma once

// Pipeline configuration: `key = value` files plus `key=value` overrides.

#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <type_traits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "har/bgmodel.hpp"
#include "har/flowdesc.hpp"
#include "har/frame.hpp"
#include "har/mlp.hpp"

namespace har {

class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct PipelineConfig {
  Resolution working_resolution{160, 120};
  double frame_rate = 25.0;
  int flow_step = 3;
  int window_frames = 25;
  /// 0 means non-overlapping (stride == window_frames).
  int stride = 0;
  int feature_size = 10;
  int hidden_nodes = 200;
  int epochs = 100;
  std::uint64_t seed = 1;
  double activation_a = 1.0;
  double activation_beta = 1.0;
  bool foreground_gating = false;
  int threads = 1;

  BackgroundParams background;
  GoodFeatureParams features;
  TrackerParams tracker;
  RpropParams rprop;
  double jacobian_offset = 2.0;
  /// Standardization never divides by a spread smaller than this.
  double min_input_spread = 1.0;

  int effective_stride() const { return stride > 0 ? stride : window_frames; }

  DescriptorParams descriptor_params() const {
    DescriptorParams d;
    d.feature_size = feature_size;
    d.flow_step = flow_step;
    d.jacobian_offset = jacobian_offset;
    d.features = features;
    d.features.max_features = feature_size;
    d.tracker = tracker;
    return d;
  }

  void validate() const {
    if (flow_step < 1) throw ConfigError("flow_step must be >= 1");
    if (window_frames < flow_step + 1) throw ConfigError("window_frames must be >= flow_step + 1");
    if (feature_size < 1) throw ConfigError("feature_size must be >= 1");
    if (hidden_nodes < 1) throw ConfigError("hidden_nodes must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (stride < 0) throw ConfigError("stride must be >= 0");
    if (!(activation_a > 0.0) || !(activation_beta > 0.0)) throw ConfigError("activation parameters must be positive");
    if (!(features.quality_rel > 0.0 && features.quality_rel <= 1.0)) throw ConfigError("quality_rel must be in (0, 1]");
    if (tracker.levels < 1) throw ConfigError("tracker_levels must be >= 1");
    if (tracker.half_window < 1) throw ConfigError("tracker_half_window must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (!(min_input_spread >= 0.0)) throw ConfigError("min_input_spread must be >= 0");
  }

  /// Applies one `key=value` setting.
  void set(std::string_view key, std::string_view value);

  /// Every key with its current value, in a stable order.
  std::vector<std::pair<std::string, std::string>> entries() const;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  std::istringstream is{std::string(text)};
  T v{};
  if (!(is >> v) || !(is >> std::ws).eof())
    throw ConfigError("config: bad value '" + std::string(text) + "' for " + std::string(key));
  return v;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw ConfigError("config: bad boolean '" + std::string(text) + "' for " + std::string(key));
}

struct ConfigKey {
  std::function<void(PipelineConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const PipelineConfig&)> get;
};



template <typename T>
ConfigKey number_key(T PipelineConfig::*field) {
  return {[field](PipelineConfig& c, std::string_view k, std::string_view v) { c.*field = parse_number<T>(k, v); },
          [field](const PipelineConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.*field);
            else return std::to_string(c.*field);
          }};
}

template <typename S, typename T>
ConfigKey nested_key(S PipelineConfig::*group, T S::*field) {
  return {[group, field](PipelineConfig& c, std::string_view k, std::string_view v) {
            (c.*group).*field = parse_number<T>(k, v);
          },
          [group, field](const PipelineConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double((c.*group).*field);
            else return std::to_string((c.*group).*field);
          }};
}

inline const std::map<std::string, ConfigKey, std::less<>>& config_keys() {
  static const std::map<std::string, ConfigKey, std::less<>> keys = {
      {"working_resolution",
       {[](PipelineConfig& c, std::string_view, std::string_view v) {
          try {
            c.working_resolution = parse_resolution(v);
          } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config: working_resolution: ") + e.what());
          }
        },
        [](const PipelineConfig& c) {
          return std::to_string(c.working_resolution.width) + "x" + std::to_string(c.working_resolution.height);
        }}},
      {"frame_rate", number_key(&PipelineConfig::frame_rate)},
      {"flow_step", number_key(&PipelineConfig::flow_step)},
      {"window_frames", number_key(&PipelineConfig::window_frames)},
      {"stride", number_key(&PipelineConfig::stride)},
      {"feature_size", number_key(&PipelineConfig::feature_size)},
      {"hidden_nodes", number_key(&PipelineConfig::hidden_nodes)},
      {"epochs", number_key(&PipelineConfig::epochs)},
      {"seed", number_key(&PipelineConfig::seed)},
      {"activation_a", number_key(&PipelineConfig::activation_a)},
      {"activation_beta", number_key(&PipelineConfig::activation_beta)},
      {"foreground_gating",
       {[](PipelineConfig& c, std::string_view k, std::string_view v) { c.foreground_gating = parse_bool(k, v); },
        [](const PipelineConfig& c) { return std::string(c.foreground_gating ? "true" : "false"); }}},
      {"threads", number_key(&PipelineConfig::threads)},
      {"jacobian_offset", number_key(&PipelineConfig::jacobian_offset)},
      {"min_input_spread", number_key(&PipelineConfig::min_input_spread)},
      {"gmm_components", nested_key(&PipelineConfig::background, &BackgroundParams::components)},
      {"gmm_learning_rate", nested_key(&PipelineConfig::background, &BackgroundParams::learning_rate)},
      {"gmm_threshold", nested_key(&PipelineConfig::background, &BackgroundParams::background_threshold)},
      {"gmm_match_radius", nested_key(&PipelineConfig::background, &BackgroundParams::match_radius)},
      {"gmm_initial_variance", nested_key(&PipelineConfig::background, &BackgroundParams::initial_variance)},
      {"gmm_variance_floor", nested_key(&PipelineConfig::background, &BackgroundParams::variance_floor)},
      {"quality_rel", nested_key(&PipelineConfig::features, &GoodFeatureParams::quality_rel)},
      {"min_distance", nested_key(&PipelineConfig::features, &GoodFeatureParams::min_distance)},
      {"tensor_half_window", nested_key(&PipelineConfig::features, &GoodFeatureParams::half_window)},
      {"tracker_half_window", nested_key(&PipelineConfig::tracker, &TrackerParams::half_window)},
      {"tracker_levels", nested_key(&PipelineConfig::tracker, &TrackerParams::levels)},
      {"tracker_iterations", nested_key(&PipelineConfig::tracker, &TrackerParams::max_iterations)},
      {"tracker_eps", nested_key(&PipelineConfig::tracker, &TrackerParams::convergence_eps)},
      {"tracker_residual_max", nested_key(&PipelineConfig::tracker, &TrackerParams::residual_max)},
      {"rprop_eta_plus", nested_key(&PipelineConfig::rprop, &RpropParams::eta_plus)},
      {"rprop_eta_minus", nested_key(&PipelineConfig::rprop, &RpropParams::eta_minus)},
      {"rprop_delta0", nested_key(&PipelineConfig::rprop, &RpropParams::delta_initial)},
      {"rprop_delta_min", nested_key(&PipelineConfig::rprop, &RpropParams::delta_min)},
      {"rprop_delta_max", nested_key(&PipelineConfig::rprop, &RpropParams::delta_max)},
  };
  return keys;
}

}  // namespace detail

inline void PipelineConfig::set(std::string_view key, std::string_view value) {
  const auto& keys = detail::config_keys();
  const auto it = keys.find(detail::trim(key));
  if (it == keys.end()) throw ConfigError("config: unknown key '" + std::string(key) + "'");
  it->second.set(*this, it->first, detail::trim(value));
}

inline std::vector<std::pair<std::string, std::string>> PipelineConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, v] : detail::config_keys()) out.emplace_back(k, v.get(*this));
  return out;
}

/// Applies `key = value` lines; `#` starts a comment.
inline void apply_config(PipelineConfig& cfg, std::istream& is) {
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    cfg.set(std::string_view(line).substr(0, eq), std::string_view(line).substr(eq + 1));
  }
}

inline void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  apply_config(cfg, is);
}

/// `key=value` override as given on the command line.
inline void apply_override(PipelineConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override must be key=value: " + std::string(assignment));
  cfg.set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

}  // namespace har
