#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "evb/tensor.hpp"

namespace evb {

/// Predicted and GT depth of one frame, same H x W shape. A pixel is valid
/// when both depths are finite and > 0.
struct DepthFrame {
  Tensor pred;
  Tensor gt;
};

struct DepthScores {
  double abs_rel = 0.0;
  double delta1 = 0.0;  // fraction with max(p/g, g/p) < 1.25
  std::size_t n_valid = 0;
};

std::vector<bool> valid_mask(const DepthFrame& frame);

/// median(gt_valid) / median(pred_valid). Throws DegenerateInput when no
/// pixel is valid.
double median_scale_factor(const DepthFrame& frame);

/// Copy of the frame with pred multiplied by median_scale_factor(). The
/// scaled prediction is always f64.
DepthFrame median_scale(const DepthFrame& frame);

/// Scores over valid pixels. With `align`, median scaling is applied first.
DepthScores depth_metrics(const DepthFrame& frame, bool align = false);

struct DepthManifestRow {
  std::string scene;
  std::string image;
  std::filesystem::path pred_path;
  std::filesystem::path gt_path;
};

/// CSV with header `scene,image,pred_path,gt_path`. Relative paths are
/// resolved against `base`.
std::vector<DepthManifestRow> parse_depth_manifest(std::string_view text,
                                                   const std::filesystem::path& base = {},
                                                   const std::string& file = {});

struct DepthFrameResult {
  std::string scene;
  std::string image;
  double scale = 1.0;
  DepthScores scores;
};

struct DepthReport {
  std::vector<DepthFrameResult> frames;  // manifest order
  double abs_rel = 0.0;                  // mean over frames
  double delta1 = 0.0;
};

DepthReport evaluate_depth(const std::vector<DepthManifestRow>& rows, bool align = true,
                           unsigned threads = 1);

}  // namespace evb
