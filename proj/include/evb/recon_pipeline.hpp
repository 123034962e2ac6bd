#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "evb/colmap_io.hpp"
#include "evb/recon_metrics.hpp"

namespace evb {

/// One depth map with the predicted world-to-camera pose of its image.
/// Intrinsics come from `camera` or, when absent, from the GT model's
/// camera of the image named `image`.
struct DepthView {
  std::filesystem::path depth;
  std::string image;
  UnitQuaternion q;
  Translation3 t = Translation3::Zero();
  std::optional<PinholeCamera> camera;
};

struct ReconSceneSpec {
  std::string id;
  std::filesystem::path gt;  // COLMAP model directory or .evbt N x 3 cloud
  std::vector<std::filesystem::path> pointmaps;  // H x W x 3 .evbt
  std::vector<DepthView> depths;
  std::optional<double> scale_to_meters;
};

/// {"scenes": [{"id", "gt", "pointmaps": [...], "depths": [{"depth",
/// "image", "q", "t", "camera": {"width", "height", "fx", "fy", "cx",
/// "cy"}}], "scale_to_meters"}]}. Paths are relative to the manifest.
std::vector<ReconSceneSpec> load_recon_manifest(const std::filesystem::path& path);

/// GT cloud plus the sparse model when `gt` is a model directory.
struct GroundTruth {
  PointCloud cloud;
  std::optional<SparseScene> scene;
};
GroundTruth load_ground_truth(const std::filesystem::path& gt);

/// Fuses every point map and unprojected depth of the scene.
PointCloud assemble_prediction(const ReconSceneSpec& spec, const GroundTruth& gt);

struct ReconSceneResult {
  std::string id;
  bool ok = false;
  std::string error;
  std::optional<ReconEvaluation> eval;
  double scale_to_meters = 0.0;
};

/// Evaluates each scene; failures are recorded per scene rather than thrown.
/// `scale_lookup` supplies the metric scale for scenes whose spec has none.
std::vector<ReconSceneResult> evaluate_recon_scenes(
    const std::vector<ReconSceneSpec>& specs, const ReconOptions& opts,
    const std::function<std::optional<double>(const std::string&)>& scale_lookup = {});

}  // namespace evb
