#pragma once

#include <filesystem>
#include <array>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evb/so3.hpp"

namespace evb {

enum class Quality { kGood, kBad };
std::string_view to_string(Quality q);
Quality parse_quality(std::string_view s);

/// One annotator's verdict on a reconstruction. A good scene carries the
/// drawn line (model units) and its real length; a bad one may omit both.
struct AnnotationRecord {
  std::string scene_id;
  Quality quality = Quality::kGood;
  std::optional<std::array<Vec3, 2>> line;
  std::optional<double> measured_meters;
  std::optional<double> scale_to_meters;  // measured_meters / line length
  std::string annotator;
  std::string timestamp;

  std::optional<double> line_length() const;
  bool operator==(const AnnotationRecord&) const = default;
};

/// Validates the record, computes scale_to_meters and returns the result.
/// A supplied scale that disagrees with the recomputed one (relative
/// 1e-9) is an error. Throws InvalidArgument naming the field.
AnnotationRecord finalize_record(AnnotationRecord rec);

std::string record_to_json(const AnnotationRecord& rec);
/// Parses and finalizes. `scene_id` (when non-empty) fills or must match
/// the record's scene field.
AnnotationRecord record_from_json(std::string_view text, const std::string& scene_id = {});

bool valid_scene_id(std::string_view id);

/// Flat-file store: <dir>/annotations/<scene>.json holds the latest record
/// (written atomically), <dir>/annotations.log appends every accepted
/// record. Writes to one scene are serialized.
class AnnotationStore {
 public:
  explicit AnnotationStore(std::filesystem::path dir);

  void put(const AnnotationRecord& rec);
  std::optional<AnnotationRecord> get(const std::string& scene_id) const;
  std::vector<std::string> annotated_scenes() const;
  /// Every logged record for the scene, oldest first.
  std::vector<AnnotationRecord> history(const std::string& scene_id) const;

  /// Called between the temp write and the rename; tests use it to inject
  /// failures.
  void set_fault_hook(std::function<void()> hook) { fault_hook_ = std::move(hook); }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path record_path(const std::string& scene_id) const;
  std::mutex& scene_mutex(const std::string& scene_id);

  std::filesystem::path dir_;
  std::function<void()> fault_hook_;
  std::mutex map_mu_;
  std::mutex log_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> scene_mu_;
};

/// scale_to_meters from the store's record, if the scene is annotated good.
std::optional<double> annotated_scale(const AnnotationStore& store, const std::string& scene_id);

}  // namespace evb
