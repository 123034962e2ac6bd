#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "evb/colmap_io.hpp"
#include "evb/so3.hpp"
#include "evb/tensor.hpp"

namespace evb {

enum class LengthUnit { kModel, kMeters };

struct PointCloud {
  std::vector<Vec3> points;
  LengthUnit unit = LengthUnit::kModel;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// x -> s R x + t.
struct Sim3 {
  double s = 1.0;
  RotationSO3 r;
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return s * (r * x) + t; }
  PointCloud apply(const PointCloud& c) const;
  Sim3 inverse() const;
  /// (*this) after `rhs`: x -> this(rhs(x)).
  Sim3 compose(const Sim3& rhs) const;
};

struct ReconSummary {
  double acc_mean = 0.0;
  double acc_median = 0.0;
  double cmp_mean = 0.0;
  double cmp_median = 0.0;
};

/// Back-projects every pixel with a finite depth d > 0:
///   X_world = R^T (d K^-1 (u, v, 1) - t), with (u, v) the column/row index.
/// The depth map may be a uniformly downscaled version of the camera image;
/// intrinsics are rescaled accordingly.
PointCloud unproject_depth(const Tensor& depth, const PinholeCamera& cam, const RotationSO3& r,
                           const Translation3& t);

/// H x W x 3 world-space point map; non-finite points are dropped.
PointCloud cloud_from_pointmap(const Tensor& pointmap);
/// N x 3 (or N x >=3) tensor of points.
PointCloud cloud_from_tensor(const Tensor& points);
PointCloud cloud_from_scene(const SparseScene& scene);
Tensor cloud_to_tensor(const PointCloud& cloud);

/// Least-squares similarity (or rigid, when with_scale is false) mapping src
/// onto dst. The sign-corrected SVD keeps det(R) = +1. Throws
/// DegenerateInput for N < 3 or a src covariance of rank < 2.
Sim3 umeyama(const PointCloud& src, const PointCloud& dst, bool with_scale = true);

struct IcpParams {
  int max_iters = 50;
  double rmse_tol = 1e-6;
  /// Correspondences farther than this are ignored. <= 0 means: derive it as
  /// gate_factor x median nearest-neighbour spacing of dst.
  double gate = 0.0;
  double gate_factor = 10.0;
  bool with_scale = true;
  unsigned threads = 1;
};

struct IcpResult {
  Sim3 transform;
  int iterations = 0;
  double initial_rmse = 0.0;
  double final_rmse = 0.0;
  std::vector<double> rmse_history;  // one entry per accepted iteration
  bool no_correspondences = false;
  bool converged = false;
};

/// Median distance from each point to its nearest other point.
double median_nn_spacing(const PointCloud& cloud);

/// Point-to-point ICP. Each iteration matches transformed src points to
/// their nearest dst point (gated) and re-solves with umeyama(). Iterations
/// that would raise the RMSE are rejected, so final_rmse <= initial_rmse.
IcpResult icp_refine(const PointCloud& src, const PointCloud& dst, const Sim3& init,
                     const IcpParams& params = {});

/// ACC: stats of nearest-GT distances from each predicted point. CMP: stats
/// of nearest-prediction distances from each GT point. All distances are
/// multiplied by scale_to_meters.
ReconSummary acc_cmp(const PointCloud& pred, const PointCloud& gt, double scale_to_meters,
                     unsigned threads = 1);

PointCloud apply_metric_scale(const PointCloud& cloud, double s);

struct ReconOptions {
  IcpParams icp;
  std::size_t subsample_cap = 1'000'000;
  /// While choosing among the coarse hypotheses, the prediction is matched
  /// against the full GT from at most this many points, and the completeness
  /// half of the chamfer score uses at most this many GT points. 0 disables.
  std::size_t coarse_cap = 20'000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct ReconEvaluation {
  ReconSummary summary;
  Sim3 alignment;  // maps prediction into the GT frame
  IcpResult icp;
  std::size_t pred_points = 0;
  std::size_t gt_points = 0;
  std::vector<std::string> log;
};

/// Normalizes both clouds (centroid, RMS radius), tries the principal-axis
/// rotation hypotheses plus identity as coarse starts, refines each with
/// ICP, keeps the lowest RMSE, then reports ACC/CMP in meters on the full
/// clouds.
ReconEvaluation evaluate_recon(const PointCloud& pred, const PointCloud& gt,
                               double scale_to_meters, const ReconOptions& opts = {});

}  // namespace evb
