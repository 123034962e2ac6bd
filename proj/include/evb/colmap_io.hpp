#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "evb/so3.hpp"

namespace evb {

/// COLMAP camera model ids as written in cameras.bin. Models beyond OPENCV
/// are rejected at parse time.
enum class CameraModel : int {
  kSimplePinhole = 0,
  kPinhole = 1,
  kSimpleRadial = 2,
  kRadial = 3,
  kOpenCV = 4,
};

std::size_t camera_model_num_params(CameraModel model);
std::string_view camera_model_name(CameraModel model);
std::optional<CameraModel> camera_model_from_name(std::string_view name);
std::optional<CameraModel> camera_model_from_id(std::int64_t id);

struct PinholeCamera {
  std::uint32_t camera_id = 0;
  CameraModel model = CameraModel::kPinhole;
  std::uint64_t width = 0;
  std::uint64_t height = 0;
  std::vector<double> params;

  double fx() const;
  double fy() const;
  double cx() const;
  double cy() const;

  bool operator==(const PinholeCamera&) const = default;
};

constexpr std::uint64_t kInvalidPoint3DId = std::numeric_limits<std::uint64_t>::max();

struct Observation {
  double x = 0.0;
  double y = 0.0;
  std::uint64_t point3d_id = kInvalidPoint3DId;

  bool has_point() const { return point3d_id != kInvalidPoint3DId; }
  bool operator==(const Observation&) const = default;
};

/// Registered image. The pose maps world to camera; the quaternion is kept
/// exactly as stored on disk so writes are bit-stable.
struct ImageRecord {
  std::uint32_t image_id = 0;
  std::string name;
  std::uint32_t camera_id = 0;
  std::array<double, 4> qvec{1.0, 0.0, 0.0, 0.0};  // w, x, y, z
  Vec3 tvec = Vec3::Zero();
  std::vector<Observation> observations;

  RotationSO3 rotation() const;
  /// Camera center -R^T t in world coordinates.
  Vec3 center() const;

  bool operator==(const ImageRecord& o) const {
    return image_id == o.image_id && name == o.name && camera_id == o.camera_id &&
           qvec == o.qvec && tvec == o.tvec && observations == o.observations;
  }
};

struct TrackElement {
  std::uint32_t image_id = 0;
  std::uint32_t point2d_idx = 0;
  bool operator==(const TrackElement&) const = default;
};

struct Point3D {
  std::uint64_t point3d_id = 0;
  Vec3 xyz = Vec3::Zero();
  std::array<std::uint8_t, 3> rgb{0, 0, 0};
  double error = 0.0;
  std::vector<TrackElement> track;

  bool operator==(const Point3D& o) const {
    return point3d_id == o.point3d_id && xyz == o.xyz && rgb == o.rgb &&
           error == o.error && track == o.track;
  }
};

struct SparseScene {
  std::map<std::uint32_t, PinholeCamera> cameras;
  std::map<std::uint32_t, ImageRecord> images;
  std::map<std::uint64_t, Point3D> points3d;
  std::optional<double> scale_to_meters;

  const ImageRecord& image(std::uint32_t id) const;
  const PinholeCamera& camera_of(const ImageRecord& img) const;
  std::optional<std::uint32_t> find_image_by_name(std::string_view name) const;

  bool operator==(const SparseScene&) const = default;
};

enum class ModelFormat { kBinary, kText, kAuto };

/// Raw file contents of a model, used by the in-memory parsers and the
/// serializers.
struct ModelFiles {
  std::string cameras;
  std::string images;
  std::string points3d;
};

/// Returns a description of the first invariant the scene violates, if any.
std::optional<std::string> find_invariant_violation(const SparseScene& scene);

SparseScene parse_binary_model(const ModelFiles& files);
SparseScene parse_text_model(const ModelFiles& files);
ModelFiles serialize_binary_model(const SparseScene& scene);
ModelFiles serialize_text_model(const SparseScene& scene);

/// Reads cameras/images/points3D from `dir`. kAuto prefers .bin files when
/// both variants exist. Throws ParseError (naming the file and the byte
/// offset or line) on any malformed input; never returns a partial scene.
SparseScene read_sparse_model(const std::filesystem::path& dir,
                              ModelFormat format = ModelFormat::kAuto);

/// kAuto writes binary.
void write_sparse_model(const SparseScene& scene, const std::filesystem::path& dir,
                        ModelFormat format = ModelFormat::kBinary);

/// Locates a model inside a scene directory: the directory itself, then
/// sparse/0, then sparse.
std::optional<std::filesystem::path> locate_model_dir(const std::filesystem::path& scene_dir);

struct FieldOfView {
  double x_deg = 0.0;
  double y_deg = 0.0;
};

/// fov = 2 atan(size / (2 f)) per axis, in degrees.
FieldOfView camera_fov_deg(const PinholeCamera& cam);

/// Number of distinct 3D points observed by both images.
std::size_t shared_points(const SparseScene& scene, std::uint32_t a, std::uint32_t b);

/// Shared-point counts for every image pair with at least one common point,
/// keyed by (smaller id, larger id).
std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> all_shared_points(
    const SparseScene& scene);

}  // namespace evb
