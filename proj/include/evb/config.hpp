#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evb/alignment_loss.hpp"
#include "evb/greedy_sampler.hpp"
#include "evb/pair_curation.hpp"
#include "evb/pose_metrics.hpp"
#include "evb/recon_metrics.hpp"

namespace evb {

/// Every tunable default of the toolkit. Keys are dotted paths such as
/// "curation.k"; the YAML file nests them by section.
struct ToolConfig {
  CurationConfig curation;
  EvaluationOptions pose;
  ReconOptions recon;
  bool depth_median_align = true;
  int layers_delta = 2;
  CovisParams covis;
  SamplerParams sampler;
  double loss_lambda_t = 1.0;
  std::optional<TranslationMode> loss_translation_mode;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  /// Canonical YAML, every key in fixed order. load(dump()) reproduces the
  /// settings exactly.
  std::string dump() const;
  /// fnv1a64 of dump(), 16 hex digits.
  std::string hash() const;

  /// Parses YAML text over the current values. Errors carry the line.
  void load_yaml(std::string_view text, const std::string& file = "<config>");
  /// Applies one "key=value" override; `value` is a YAML scalar or flow list.
  void set(std::string_view assignment, const std::string& origin = "--set");
  /// Applies EVB_<SECTION>_<KEY> variables found in `env`.
  void apply_env(const std::map<std::string, std::string>& env);

  void validate() const;

  static std::vector<std::string> keys();
  static std::string env_name(std::string_view key);
};

/// Snapshot of the process environment restricted to EVB_ variables.
std::map<std::string, std::string> evb_environment();

}  // namespace evb
