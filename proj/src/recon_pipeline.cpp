#include "evb/recon_pipeline.hpp"

#include "evb/error.hpp"
#include "evb/io_util.hpp"
#include "json.hpp"

namespace evb {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::vector<double> numbers(const json& j, const char* key, std::size_t n) {
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != n) {
    throw InvalidArgument(std::string(key) + " must have " + std::to_string(n) + " entries");
  }
  return v;
}

}  // namespace

std::vector<ReconSceneSpec> load_recon_manifest(const std::filesystem::path& path) {
  const auto base = path.parent_path();
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(ParseError::Kind::kSyntax, path.string(), e.byte, std::nullopt, e.what());
  }
  std::vector<ReconSceneSpec> out;
  std::size_t i = 0;
  try {
    for (const auto& s : j.at("scenes")) {
      ReconSceneSpec spec;
      spec.id = s.at("id").get<std::string>();
      spec.gt = resolve(base, s.at("gt").get<std::string>());
      if (s.contains("pointmaps")) {
        for (const auto& p : s.at("pointmaps")) spec.pointmaps.push_back(resolve(base, p.get<std::string>()));
      }
      if (s.contains("depths")) {
        for (const auto& d : s.at("depths")) {
          DepthView v;
          v.depth = resolve(base, d.at("depth").get<std::string>());
          v.image = d.value("image", "");
          const auto q = numbers(d, "q", 4);
          v.q = UnitQuaternion(q[0], q[1], q[2], q[3]);
          const auto t = numbers(d, "t", 3);
          v.t = Translation3(t[0], t[1], t[2]);
          if (d.contains("camera")) {
            const auto& c = d.at("camera");
            PinholeCamera cam;
            cam.model = CameraModel::kPinhole;
            cam.width = c.at("width").get<std::uint64_t>();
            cam.height = c.at("height").get<std::uint64_t>();
            cam.params = {c.at("fx").get<double>(), c.at("fy").get<double>(),
                          c.at("cx").get<double>(), c.at("cy").get<double>()};
            v.camera = cam;
          } else if (v.image.empty()) {
            throw InvalidArgument("depth entry needs an image name or a camera");
          }
          spec.depths.push_back(std::move(v));
        }
      }
      if (s.contains("scale_to_meters")) spec.scale_to_meters = s.at("scale_to_meters").get<double>();
      out.push_back(std::move(spec));
      ++i;
    }
  } catch (const std::exception& e) {
    throw ParseError(ParseError::Kind::kInvalidValue, path.string(), std::nullopt, std::nullopt,
                     "scene " + std::to_string(i) + ": " + e.what());
  }
  return out;
}

GroundTruth load_ground_truth(const std::filesystem::path& gt) {
  GroundTruth out;
  if (std::filesystem::is_directory(gt)) {
    const auto dir = locate_model_dir(gt);
    if (!dir) throw InvalidArgument("no COLMAP model under " + gt.string());
    out.scene = read_sparse_model(*dir);
    out.cloud = cloud_from_scene(*out.scene);
  } else {
    out.cloud = cloud_from_tensor(read_tensor(gt));
  }
  return out;
}

PointCloud assemble_prediction(const ReconSceneSpec& spec, const GroundTruth& gt) {
  PointCloud out;
  for (const auto& p : spec.pointmaps) {
    const auto c = cloud_from_tensor(read_tensor(p));
    out.points.insert(out.points.end(), c.points.begin(), c.points.end());
  }
  for (const auto& v : spec.depths) {
    PinholeCamera cam;
    if (v.camera) {
      cam = *v.camera;
    } else {
      if (!gt.scene) throw InvalidArgument("depth view '" + v.image + "' needs a camera");
      const auto id = gt.scene->find_image_by_name(v.image);
      if (!id) throw InvalidArgument("image '" + v.image + "' is not in the GT model");
      cam = gt.scene->cameras.at(gt.scene->images.at(*id).camera_id);
    }
    const auto c = unproject_depth(read_tensor(v.depth), cam, quat_to_matrix(v.q), v.t);
    out.points.insert(out.points.end(), c.points.begin(), c.points.end());
  }
  return out;
}

std::vector<ReconSceneResult> evaluate_recon_scenes(
    const std::vector<ReconSceneSpec>& specs, const ReconOptions& opts,
    const std::function<std::optional<double>(const std::string&)>& scale_lookup) {
  std::vector<ReconSceneResult> out(specs.size());
  // Scenes run one after another; each evaluation uses opts.threads.
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& spec = specs[i];
    auto& r = out[i];
    r.id = spec.id;
    try {
      auto scale = spec.scale_to_meters;
      if (!scale && scale_lookup) scale = scale_lookup(spec.id);
      if (!scale) throw InvalidArgument("no metric scale for scene (annotate it or set scale_to_meters)");
      r.scale_to_meters = *scale;
      const auto gt = load_ground_truth(spec.gt);
      const auto pred = assemble_prediction(spec, gt);
      if (pred.empty()) throw DegenerateInput("prediction has no valid points");
      r.eval = evaluate_recon(pred, gt.cloud, *scale, opts);
      r.ok = true;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
  }
  return out;
}

}  // namespace evb
