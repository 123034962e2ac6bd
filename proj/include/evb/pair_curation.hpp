#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "evb/colmap_io.hpp"
#include "evb/so3.hpp"

namespace evb {

enum class OverlapCategory { kLarge, kSmall, kNone };

std::string_view to_string(OverlapCategory c);
OverlapCategory parse_overlap_category(std::string_view s);

struct ImagePair {
  std::string scene_id;
  std::uint32_t image_a = 0;  // image_a < image_b
  std::uint32_t image_b = 0;
  std::string name_a;
  std::string name_b;
  RotationSO3 r_rel_gt;  // R_b R_a^T
  Translation3 t_rel_gt = Translation3::Zero();
  OverlapCategory category = OverlapCategory::kLarge;
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  bool verified = false;
};

struct CurationConfig {
  int k = 5;
  std::size_t max_pairs_per_scene = 40;  // 0 disables the cap
  bool balance = false;
  bool scale_filter = false;
  double fov_delta_max = 15.0;
  double focal_ratio_max = 2.5;
  double resolution_ratio_max = 3.0;
  double coverage_threshold = 0.25;
  bool use_camera_centers = true;
  std::uint64_t seed = 0;
  EulerConvention euler = EulerConvention::kYXZ;

  void validate() const;
};

/// Mutual K-nearest-neighbour pairs over camera positions (centers -R^T t by
/// default, raw t otherwise). Ties break on (distance, image id). Output is
/// sorted with first < second.
std::vector<std::pair<std::uint32_t, std::uint32_t>> mutual_knn_pairs(
    const SparseScene& scene, int k, bool use_camera_centers = true);

/// Overlap case equation on already-extracted angles (degrees):
///   Large iff |yaw| < (fovx_a + fovx_b)/4 and |pitch| < (fovy_a + fovy_b)/4
///   None  iff |yaw| > (fovx_a + fovx_b)/2 and |pitch| > (fovy_a + fovy_b)/2
///   Small otherwise (including boundary equalities).
OverlapCategory classify_overlap_angles(double yaw_deg, double pitch_deg,
                                        const FieldOfView& fov_a, const FieldOfView& fov_b);

OverlapCategory classify_overlap(const RotationSO3& r_rel, const FieldOfView& fov_a,
                                 const FieldOfView& fov_b,
                                 EulerConvention convention = EulerConvention::kYXZ);

bool scale_consistent(const PinholeCamera& cam_a, const PinholeCamera& cam_b,
                      const CurationConfig& cfg);

/// Fraction of grid x grid image cells that contain at least one match.
double grid_coverage(std::span<const Eigen::Vector2d> matches, double width, double height,
                     int grid = 4);

/// Upstream correspondence verification, keyed by unordered image names.
class VerificationTable {
 public:
  struct Entry {
    std::uint64_t match_count = 0;
    double coverage = 0.0;
  };

  /// CSV with header `image_a,image_b,match_count,coverage`.
  static VerificationTable parse_csv(std::string_view text, const std::string& file = {});

  void add(const std::string& a, const std::string& b, Entry e);
  std::optional<Entry> find(const std::string& a, const std::string& b) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::pair<std::string, std::string>, Entry> entries_;
};

/// Manual-review removals: one `scene_id,image_a,image_b` per line (names).
class ExclusionList {
 public:
  static ExclusionList parse(std::string_view text, const std::string& file = {});
  void add(const std::string& scene, const std::string& a, const std::string& b);
  bool contains(const std::string& scene, const std::string& a, const std::string& b) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::set<std::tuple<std::string, std::string, std::string>> entries_;
};

struct CurationStats {
  std::size_t candidates = 0;
  std::size_t excluded = 0;
  std::size_t scale_rejected = 0;
  std::size_t unverified = 0;
  std::size_t verification_rejected = 0;
  std::size_t capped_out = 0;
  std::size_t balanced_out = 0;
  std::map<OverlapCategory, std::size_t> per_category;
};

struct CurationResult {
  std::vector<ImagePair> pairs;
  CurationStats stats;
};

/// Builds the ImagePair for (a, b) from ground-truth poses: relative pose,
/// yaw/pitch and overlap category.
ImagePair make_image_pair(const SparseScene& scene, const std::string& scene_id,
                          std::uint32_t a, std::uint32_t b,
                          EulerConvention convention = EulerConvention::kYXZ);

/// mutual K-NN -> classify -> exclusions -> (optional) scale filter ->
/// (optional) verification -> per-scene cap -> (optional) balancing.
CurationResult curate(const SparseScene& scene, const std::string& scene_id,
                      const CurationConfig& cfg, const VerificationTable* verification = nullptr,
                      const ExclusionList* exclusions = nullptr);

/// Subsamples every category to the smallest category count. Relative order
/// of the survivors is preserved.
std::vector<ImagePair> balance_categories(const std::vector<ImagePair>& pairs,
                                          std::uint64_t seed);

std::string image_pair_to_json(const ImagePair& p);
ImagePair image_pair_from_json(std::string_view line);

}  // namespace evb
