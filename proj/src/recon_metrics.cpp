#include "evb/recon_metrics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "evb/error.hpp"
#include "evb/io_util.hpp"
#include "evb/kdtree.hpp"
#include "evb/pose_metrics.hpp"

namespace evb {

PointCloud Sim3::apply(const PointCloud& c) const {
  PointCloud out;
  out.unit = c.unit;
  out.points.reserve(c.size());
  for (const auto& p : c.points) out.points.push_back(apply(p));
  return out;
}

Sim3 Sim3::inverse() const {
  Sim3 inv;
  inv.s = 1.0 / s;
  inv.r = r.transpose();
  inv.t = -(inv.s * (inv.r * t));
  return inv;
}

Sim3 Sim3::compose(const Sim3& rhs) const {
  Sim3 out;
  out.s = s * rhs.s;
  out.r = r * rhs.r;
  out.t = s * (r * rhs.t) + t;
  return out;
}

PointCloud unproject_depth(const Tensor& depth, const PinholeCamera& cam, const RotationSO3& r,
                           const Translation3& t) {
  const bool ok_rank = depth.rank() == 2 || (depth.rank() == 3 && depth.dim(2) == 1);
  if (!ok_rank) throw InvalidArgument("depth map must be H x W (or H x W x 1)");
  const auto h = depth.dim(0);
  const auto w = depth.dim(1);
  if (h == 0 || w == 0) throw InvalidArgument("depth map is empty");
  const double fx_scale = static_cast<double>(cam.width) / static_cast<double>(w);
  const double fy_scale = static_cast<double>(cam.height) / static_cast<double>(h);
  if (std::abs(fx_scale - fy_scale) > 1e-9 * std::max(fx_scale, fy_scale)) {
    throw InvalidArgument("depth map " + std::to_string(h) + "x" + std::to_string(w) +
                          " is not a uniform rescale of the " + std::to_string(cam.height) + "x" +
                          std::to_string(cam.width) + " camera");
  }
  const double fx = cam.fx() / fx_scale;
  const double fy = cam.fy() / fx_scale;
  const double cx = cam.cx() / fx_scale;
  const double cy = cam.cy() / fx_scale;
  const Mat3 rt = r.matrix().transpose();

  PointCloud out;
  for (std::uint64_t v = 0; v < h; ++v) {
    for (std::uint64_t u = 0; u < w; ++u) {
      const double d = depth.at(v * w + u);
      if (!std::isfinite(d) || !(d > 0.0)) continue;
      const Vec3 xc((static_cast<double>(u) - cx) / fx * d, (static_cast<double>(v) - cy) / fy * d,
                    d);
      out.points.push_back(rt * (xc - t));
    }
  }
  return out;
}

PointCloud cloud_from_pointmap(const Tensor& pointmap) {
  if (pointmap.rank() != 3 || pointmap.dim(2) != 3) {
    throw InvalidArgument("point map must be H x W x 3");
  }
  PointCloud out;
  const std::size_t n = pointmap.dim(0) * pointmap.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p(pointmap.at(3 * i), pointmap.at(3 * i + 1), pointmap.at(3 * i + 2));
    if (p.allFinite()) out.points.push_back(p);
  }
  return out;
}

PointCloud cloud_from_tensor(const Tensor& points) {
  if (points.rank() == 3) return cloud_from_pointmap(points);
  if (points.rank() != 2 || points.dim(1) < 3) {
    throw InvalidArgument("point tensor must be N x 3 (extra columns ignored) or H x W x 3");
  }
  const auto cols = points.dim(1);
  PointCloud out;
  for (std::size_t i = 0; i < points.dim(0); ++i) {
    const Vec3 p(points.at(i * cols), points.at(i * cols + 1), points.at(i * cols + 2));
    if (p.allFinite()) out.points.push_back(p);
  }
  return out;
}

PointCloud cloud_from_scene(const SparseScene& scene) {
  PointCloud out;
  out.points.reserve(scene.points3d.size());
  for (const auto& [id, pt] : scene.points3d) out.points.push_back(pt.xyz);
  return out;
}

Tensor cloud_to_tensor(const PointCloud& cloud) {
  std::vector<double> data;
  data.reserve(cloud.size() * 3);
  for (const auto& p : cloud.points) data.insert(data.end(), {p.x(), p.y(), p.z()});
  return Tensor({cloud.size(), 3}, std::move(data));
}

Sim3 umeyama(const PointCloud& src, const PointCloud& dst, bool with_scale) {
  const std::size_t n = src.size();
  if (n != dst.size()) throw InvalidArgument("umeyama: point counts differ");
  if (n < 3) throw DegenerateInput("umeyama needs at least 3 correspondences");
  const double inv_n = 1.0 / static_cast<double>(n);

  Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mu_s += src.points[i];
    mu_d += dst.points[i];
  }
  mu_s *= inv_n;
  mu_d *= inv_n;

  Mat3 sigma = Mat3::Zero();
  Mat3 cov_s = Mat3::Zero();
  double var_s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 a = src.points[i] - mu_s;
    const Vec3 b = dst.points[i] - mu_d;
    sigma += b * a.transpose();
    cov_s += a * a.transpose();
    var_s += a.squaredNorm();
  }
  sigma *= inv_n;
  cov_s *= inv_n;
  var_s *= inv_n;

  const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov_s);
  const Vec3 ev = eig.eigenvalues();  // ascending
  if (!(ev(2) > 0.0) || ev(1) <= 1e-12 * ev(2)) {
    throw DegenerateInput("umeyama: source points are collinear or coincident");
  }

  const Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 s_diag = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s_diag(2) = -1.0;

  Sim3 out;
  out.r = RotationSO3::from_matrix(svd.matrixU() * s_diag.asDiagonal() * svd.matrixV().transpose());
  out.s = with_scale ? svd.singularValues().dot(s_diag) / var_s : 1.0;
  if (!(out.s > 0.0)) throw DegenerateInput("umeyama: non-positive scale");
  out.t = mu_d - out.s * (out.r * mu_s);
  return out;
}

double median_nn_spacing(const PointCloud& cloud) {
  if (cloud.size() < 2) throw DegenerateInput("spacing needs at least 2 points");
  const KdTree3 tree(cloud.points);
  constexpr std::size_t kMaxProbe = 100'000;
  std::vector<std::size_t> probe;
  if (cloud.size() > kMaxProbe) {
    SeededRng rng(0);
    probe = rng.sample_indices(cloud.size(), kMaxProbe);
  } else {
    probe.resize(cloud.size());
    std::iota(probe.begin(), probe.end(), 0);
  }
  std::vector<double> d;
  d.reserve(probe.size());
  for (auto i : probe) d.push_back(std::sqrt(tree.knn(cloud.points[i], 1, i).front().dist_sq));
  return median(std::move(d));
}

namespace {

struct Matches {
  PointCloud src, dst;
  double rmse = std::numeric_limits<double>::infinity();
};

Matches correspond(const PointCloud& src, const KdTree3& tree, const PointCloud& dst,
                   const Sim3& t, double gate, unsigned threads) {
  const double gate_sq = gate * gate;
  std::vector<KdTree3::Neighbor> nb(src.size());
  parallel_for(src.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) nb[i] = tree.nearest(t.apply(src.points[i]));
  });
  Matches m;
  double sum = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!(nb[i].dist_sq <= gate_sq)) continue;
    m.src.points.push_back(src.points[i]);
    m.dst.points.push_back(dst.points[nb[i].index]);
    sum += nb[i].dist_sq;
  }
  if (!m.src.empty()) m.rmse = std::sqrt(sum / static_cast<double>(m.src.size()));
  return m;
}

}  // namespace

IcpResult icp_refine(const PointCloud& src, const PointCloud& dst, const Sim3& init,
                     const IcpParams& params) {
  if (src.empty() || dst.empty()) throw InvalidArgument("icp_refine: empty cloud");
  const double gate = params.gate > 0.0
                          ? params.gate
                          : (dst.size() >= 2 ? params.gate_factor * median_nn_spacing(dst)
                                             : std::numeric_limits<double>::infinity());
  const KdTree3 tree(dst.points);

  IcpResult res;
  res.transform = init;
  Matches cur = correspond(src, tree, dst, init, gate, params.threads);
  res.initial_rmse = res.final_rmse = cur.rmse;
  if (cur.src.size() < 3) {
    res.no_correspondences = true;
    return res;
  }
  res.rmse_history.push_back(cur.rmse);

  for (int it = 0; it < params.max_iters; ++it) {
    ++res.iterations;
    Sim3 cand;
    try {
      cand = umeyama(cur.src, cur.dst, params.with_scale);
    } catch (const DegenerateInput&) {
      break;
    }
    Matches next = correspond(src, tree, dst, cand, gate, params.threads);
    if (next.src.size() < 3 || next.rmse > cur.rmse) break;
    const double improvement = cur.rmse - next.rmse;
    res.transform = cand;
    cur = std::move(next);
    res.final_rmse = cur.rmse;
    res.rmse_history.push_back(cur.rmse);
    if (improvement < params.rmse_tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

namespace {

std::vector<double> nn_distances(const PointCloud& from, const PointCloud& to, unsigned threads) {
  const KdTree3 tree(to.points);
  std::vector<double> d(from.size());
  parallel_for(from.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) d[i] = std::sqrt(tree.nearest(from.points[i]).dist_sq);
  });
  return d;
}

double mean_in_order(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

ReconSummary acc_cmp(const PointCloud& pred, const PointCloud& gt, double scale_to_meters,
                     unsigned threads) {
  if (pred.empty() || gt.empty()) throw DegenerateInput("acc_cmp: empty point cloud");
  if (!(scale_to_meters > 0.0)) throw InvalidArgument("scale_to_meters must be positive");
  auto acc = nn_distances(pred, gt, threads);
  auto cmp = nn_distances(gt, pred, threads);
  for (auto& x : acc) x *= scale_to_meters;
  for (auto& x : cmp) x *= scale_to_meters;
  ReconSummary s;
  s.acc_mean = mean_in_order(acc);
  s.cmp_mean = mean_in_order(cmp);
  s.acc_median = median(std::move(acc));
  s.cmp_median = median(std::move(cmp));
  return s;
}

PointCloud apply_metric_scale(const PointCloud& cloud, double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw InvalidArgument("metric scale must be positive");
  if (cloud.unit == LengthUnit::kMeters) {
    throw InvalidArgument("cloud is already in meters");
  }
  PointCloud out;
  out.unit = LengthUnit::kMeters;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(p * s);
  return out;
}

namespace {

struct Frame {
  Vec3 centroid;
  double rms;
  Mat3 axes;  // principal axes as columns, det +1
};

Frame principal_frame(const PointCloud& c) {
  Frame f;
  f.centroid = Vec3::Zero();
  for (const auto& p : c.points) f.centroid += p;
  f.centroid /= static_cast<double>(c.size());
  Mat3 cov = Mat3::Zero();
  double ss = 0.0;
  for (const auto& p : c.points) {
    const Vec3 d = p - f.centroid;
    cov += d * d.transpose();
    ss += d.squaredNorm();
  }
  f.rms = std::sqrt(ss / static_cast<double>(c.size()));
  if (!(f.rms > 0.0)) throw DegenerateInput("point cloud has zero extent");
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  f.axes = eig.eigenvectors();
  if (f.axes.determinant() < 0.0) f.axes.col(2) *= -1.0;
  return f;
}

PointCloud subsample(const PointCloud& c, std::size_t cap, std::uint64_t seed) {
  if (cap == 0 || c.size() <= cap) return c;
  SeededRng rng(seed);
  PointCloud out;
  out.unit = c.unit;
  for (auto i : rng.sample_indices(c.size(), cap)) out.points.push_back(c.points[i]);
  return out;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

ReconEvaluation evaluate_recon(const PointCloud& pred, const PointCloud& gt,
                               double scale_to_meters, const ReconOptions& opts) {
  if (pred.empty()) throw DegenerateInput("evaluate_recon: empty prediction");
  if (gt.empty()) throw DegenerateInput("evaluate_recon: empty ground truth");
  if (!(scale_to_meters > 0.0)) throw InvalidArgument("scale_to_meters must be positive");

  ReconEvaluation ev;
  ev.pred_points = pred.size();
  ev.gt_points = gt.size();
  const PointCloud src = subsample(pred, opts.subsample_cap, opts.seed);
  if (src.size() != pred.size()) {
    ev.log.push_back("subsampled prediction " + std::to_string(pred.size()) + " -> " +
                     std::to_string(src.size()) + " points for alignment");
  }

  const Frame fp = principal_frame(src);
  const Frame fg = principal_frame(gt);
  ev.log.push_back("normalization: pred rms " + fmt_double(fp.rms) + ", gt rms " +
                   fmt_double(fg.rms));

  // Coarse hypotheses: identity plus the four proper sign patterns mapping
  // the prediction's principal axes onto the GT's.
  std::vector<Mat3> rotations{Mat3::Identity()};
  for (const auto& d : {Vec3(1, 1, 1), Vec3(1, -1, -1), Vec3(-1, 1, -1), Vec3(-1, -1, 1)}) {
    rotations.push_back(fg.axes * d.asDiagonal() * fp.axes.transpose());
  }

  const PointCloud coarse_src = subsample(src, opts.coarse_cap, opts.seed);
  const PointCloud coarse_gt = subsample(gt, opts.coarse_cap, opts.seed + 1);
  if (coarse_src.size() != src.size() || coarse_gt.size() != gt.size()) {
    ev.log.push_back("hypothesis selection on " + std::to_string(coarse_src.size()) +
                     " pred / " + std::to_string(coarse_gt.size()) + " gt points");
  }

  IcpParams coarse = opts.icp;
  coarse.gate = std::numeric_limits<double>::infinity();
  coarse.threads = opts.threads;
  double best_score = std::numeric_limits<double>::infinity();
  Sim3 best;
  for (std::size_t h = 0; h < rotations.size(); ++h) {
    Sim3 init;
    init.s = fg.rms / fp.rms;
    init.r = RotationSO3::from_matrix(rotations[h], 1e-6);
    init.t = fg.centroid - init.s * (init.r * fp.centroid);
    const IcpResult r = icp_refine(coarse_src, gt, init, coarse);
    // Symmetric chamfer guards against hypotheses that shrink onto a part.
    const PointCloud moved = r.transform.apply(coarse_src);
    const double score = acc_cmp(moved, gt, 1.0, opts.threads).acc_mean +
                         acc_cmp(moved, coarse_gt, 1.0, opts.threads).cmp_mean;
    ev.log.push_back("hypothesis " + std::to_string(h) + ": icp iters " +
                     std::to_string(r.iterations) + ", chamfer " + fmt_double(score));
    if (score < best_score) {
      best_score = score;
      best = r.transform;
    }
  }

  IcpParams fine = opts.icp;
  fine.threads = opts.threads;
  fine.gate = opts.icp.gate > 0.0 ? opts.icp.gate
                                  : (gt.size() >= 2 ? opts.icp.gate_factor * median_nn_spacing(gt)
                                                    : std::numeric_limits<double>::infinity());
  ev.icp = icp_refine(src, gt, best, fine);
  ev.alignment = ev.icp.transform;
  ev.log.push_back("icp: gate " + fmt_double(fine.gate) + ", iterations " +
                   std::to_string(ev.icp.iterations) + ", rmse " + fmt_double(ev.icp.initial_rmse) +
                   " -> " + fmt_double(ev.icp.final_rmse) +
                   (ev.icp.no_correspondences ? " (no correspondences within gate)" : ""));

  ev.summary = acc_cmp(ev.alignment.apply(pred), gt, scale_to_meters, opts.threads);
  ev.log.push_back("acc mean " + fmt_double(ev.summary.acc_mean) + " m, cmp mean " +
                   fmt_double(ev.summary.cmp_mean) + " m");
  return ev;
}

}  // namespace evb
