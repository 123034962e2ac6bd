#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "evb/annotation.hpp"
#include "evb/colmap_io.hpp"

namespace evb {

struct SceneEntry {
  std::string id;
  std::filesystem::path dir;
  std::shared_ptr<const SparseScene> scene;
};

/// Scenes found under the given roots: a root holding a model is one scene
/// named after the directory; otherwise each subdirectory holding a model
/// is a scene. Ids must be unique.
std::vector<SceneEntry> scan_scenes(const std::vector<std::filesystem::path>& roots);

struct ServiceOptions {
  std::size_t default_max_points = 100'000;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> static_dir;
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Route handlers of the annotation service, independent of the transport.
class AnnotationApi {
 public:
  AnnotationApi(std::vector<SceneEntry> scenes, AnnotationStore& store, ServiceOptions opts = {});

  ApiResponse list_scenes() const;
  ApiResponse cloud(const std::string& id, const std::optional<std::string>& max_points) const;
  ApiResponse images(const std::string& id) const;
  ApiResponse image_file(const std::string& id, const std::string& image_id) const;
  ApiResponse post_annotation(const std::string& id, const std::string& body) const;
  ApiResponse get_annotation(const std::string& id) const;

  const ServiceOptions& options() const { return opts_; }

 private:
  const SceneEntry* find(const std::string& id) const;

  std::map<std::string, SceneEntry> scenes_;
  AnnotationStore& store_;
  ServiceOptions opts_;
};

/// Downsampled colored cloud: N x 6 f32 rows (x, y, z, r, g, b) with colors
/// in [0, 1], points in id order, seeded uniform subsample when larger than
/// max_points.
std::string cloud_payload(const SparseScene& scene, std::size_t max_points, std::uint64_t seed);

/// HTTP transport for AnnotationApi.
class HttpService {
 public:
  explicit HttpService(const AnnotationApi& api);
  ~HttpService();

  /// Binds (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); blocks.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace evb
