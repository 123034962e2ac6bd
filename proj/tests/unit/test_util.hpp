#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "evb/colmap_io.hpp"
#include "evb/so3.hpp"

#ifndef EVB_TEST_DATA_DIR
#error "EVB_TEST_DATA_DIR must be defined"
#endif

namespace evb::test {

inline std::filesystem::path data_dir() { return EVB_TEST_DATA_DIR; }

inline Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  return {n(rng), n(rng), n(rng)};
}

/// Uniform on SO(3) via a normalized Gaussian quaternion.
inline RotationSO3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return quat_to_matrix(n(rng), n(rng), n(rng), n(rng));
}

inline std::array<double, 4> quat_array(const RotationSO3& r) {
  UnitQuaternion q = matrix_to_quat(r);
  return {q.w(), q.x(), q.y(), q.z()};
}

/// Temporary directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "evb") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(rd()) + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Adds a PINHOLE camera and returns its id.
inline std::uint32_t add_camera(SparseScene& s, std::uint64_t w = 640, std::uint64_t h = 480,
                                double f = 500.0) {
  std::uint32_t id = static_cast<std::uint32_t>(s.cameras.size() + 1);
  PinholeCamera c;
  c.camera_id = id;
  c.model = CameraModel::kPinhole;
  c.width = w;
  c.height = h;
  c.params = {f, f, w / 2.0, h / 2.0};
  s.cameras[id] = c;
  return id;
}

/// Adds an image whose camera center is `center` and rotation `r`.
inline std::uint32_t add_image(SparseScene& s, std::uint32_t id, const RotationSO3& r,
                               const Vec3& center, std::uint32_t camera_id = 1) {
  ImageRecord img;
  img.image_id = id;
  char buf[32];
  std::snprintf(buf, sizeof buf, "im_%04u.jpg", id);
  img.name = buf;
  img.camera_id = camera_id;
  img.qvec = quat_array(r);
  img.tvec = -(img.rotation().matrix() * center);
  s.images[id] = img;
  return id;
}

/// Adds a 3D point observed by the listed images (one observation each).
inline std::uint64_t add_point(SparseScene& s, std::uint64_t id, const Vec3& xyz,
                               std::initializer_list<std::uint32_t> images) {
  Point3D p;
  p.point3d_id = id;
  p.xyz = xyz;
  for (std::uint32_t im : images) {
    ImageRecord& rec = s.images.at(im);
    p.track.push_back({im, static_cast<std::uint32_t>(rec.observations.size())});
    rec.observations.push_back({1.0, 2.0, id});
  }
  s.points3d[id] = p;
  return id;
}

}  // namespace evb::test
