#include "evb/service.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <ctime>

#include "evb/error.hpp"
#include "evb/io_util.hpp"
#include "evb/tensor.hpp"
#include "httplib.h"
#include "json.hpp"

namespace evb {

using nlohmann::json;

std::vector<SceneEntry> scan_scenes(const std::vector<std::filesystem::path>& roots) {
  std::vector<SceneEntry> out;
  std::map<std::string, std::filesystem::path> seen;
  auto add = [&](const std::filesystem::path& dir, const std::filesystem::path& model) {
    auto id = dir.filename().string();
    if (id.empty()) id = dir.parent_path().filename().string();
    if (!valid_scene_id(id)) throw InvalidArgument("scene directory name '" + id + "' is not a valid id");
    if (const auto it = seen.find(id); it != seen.end()) {
      throw InvalidArgument("scene id '" + id + "' appears in both " + it->second.string() +
                            " and " + dir.string());
    }
    seen[id] = dir;
    out.push_back({id, dir, std::make_shared<const SparseScene>(read_sparse_model(model))});
  };
  for (const auto& root : roots) {
    if (!std::filesystem::is_directory(root)) {
      throw InvalidArgument("scene root " + root.string() + " is not a directory");
    }
    if (const auto model = locate_model_dir(root)) {
      add(root, *model);
      continue;
    }
    std::vector<std::filesystem::path> subdirs;
    for (const auto& e : std::filesystem::directory_iterator(root)) {
      if (e.is_directory()) subdirs.push_back(e.path());
    }
    std::sort(subdirs.begin(), subdirs.end());
    for (const auto& d : subdirs) {
      if (const auto model = locate_model_dir(d)) add(d, *model);
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

std::string cloud_payload(const SparseScene& scene, std::size_t max_points, std::uint64_t seed) {
  std::vector<const Point3D*> pts;
  pts.reserve(scene.points3d.size());
  for (const auto& [id, p] : scene.points3d) pts.push_back(&p);
  std::vector<std::size_t> keep;
  if (pts.size() > max_points) {
    SeededRng rng(seed);
    keep = rng.sample_indices(pts.size(), max_points);
  } else {
    keep.resize(pts.size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
  }
  std::vector<float> data;
  data.reserve(keep.size() * 6);
  for (auto i : keep) {
    const auto& p = *pts[i];
    data.insert(data.end(), {static_cast<float>(p.xyz.x()), static_cast<float>(p.xyz.y()),
                             static_cast<float>(p.xyz.z()), p.rgb[0] / 255.0f, p.rgb[1] / 255.0f,
                             p.rgb[2] / 255.0f});
  }
  return serialize_tensor(Tensor({keep.size(), 6}, std::move(data)));
}

namespace {

ApiResponse error_response(int status, const std::string& msg, const std::string& field = {}) {
  json j{{"error", msg}};
  if (!field.empty()) j["field"] = field;
  return {status, "application/json", j.dump()};
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string content_type_for(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".png") return "image/png";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

}  // namespace

AnnotationApi::AnnotationApi(std::vector<SceneEntry> scenes, AnnotationStore& store,
                             ServiceOptions opts)
    : store_(store), opts_(std::move(opts)) {
  for (auto& s : scenes) {
    const auto id = s.id;
    scenes_.emplace(id, std::move(s));
  }
}

const SceneEntry* AnnotationApi::find(const std::string& id) const {
  const auto it = scenes_.find(id);
  return it == scenes_.end() ? nullptr : &it->second;
}

ApiResponse AnnotationApi::list_scenes() const {
  json arr = json::array();
  for (const auto& [id, s] : scenes_) {
    bool annotated = false;
    try {
      annotated = store_.get(id).has_value();
    } catch (const Error&) {
      annotated = false;
    }
    arr.push_back({{"id", id}, {"n_images", s.scene->images.size()}, {"annotated", annotated}});
  }
  return {200, "application/json", arr.dump()};
}

ApiResponse AnnotationApi::cloud(const std::string& id,
                                 const std::optional<std::string>& max_points) const {
  const auto* s = find(id);
  if (!s) return error_response(404, "unknown scene '" + id + "'");
  std::size_t n = opts_.default_max_points;
  if (max_points) {
    const auto& v = *max_points;
    std::uint64_t parsed = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), parsed);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size() || parsed == 0) {
      return error_response(400, "max_points must be a positive integer", "max_points");
    }
    n = parsed;
  }
  return {200, "application/octet-stream",
          cloud_payload(*s->scene, n, opts_.seed ^ fnv1a64(id))};
}

ApiResponse AnnotationApi::images(const std::string& id) const {
  const auto* s = find(id);
  if (!s) return error_response(404, "unknown scene '" + id + "'");
  json arr = json::array();
  for (const auto& [iid, img] : s->scene->images) {
    const auto& cam = s->scene->cameras.at(img.camera_id);
    json e{{"image_id", iid},
           {"name", img.name},
           {"camera_id", img.camera_id},
           {"width", cam.width},
           {"height", cam.height}};
    if (std::filesystem::is_regular_file(s->dir / "images" / img.name)) {
      e["url"] = "/api/scenes/" + id + "/images/" + std::to_string(iid);
    } else {
      e["url"] = nullptr;
    }
    arr.push_back(std::move(e));
  }
  return {200, "application/json", json{{"scene", id}, {"images", arr}}.dump()};
}

ApiResponse AnnotationApi::image_file(const std::string& id, const std::string& image_id) const {
  const auto* s = find(id);
  if (!s) return error_response(404, "unknown scene '" + id + "'");
  std::uint32_t iid = 0;
  const auto r = std::from_chars(image_id.data(), image_id.data() + image_id.size(), iid);
  if (r.ec != std::errc() || r.ptr != image_id.data() + image_id.size()) {
    return error_response(400, "image id must be an integer");
  }
  const auto it = s->scene->images.find(iid);
  if (it == s->scene->images.end()) return error_response(404, "unknown image " + image_id);
  const auto path = s->dir / "images" / it->second.name;
  if (!std::filesystem::is_regular_file(path)) return error_response(404, "image file not found");
  return {200, content_type_for(path), read_file(path)};
}

ApiResponse AnnotationApi::post_annotation(const std::string& id, const std::string& body) const {
  if (!find(id)) return error_response(404, "unknown scene '" + id + "'");
  AnnotationRecord rec;
  try {
    rec = record_from_json(body, id);
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    const auto colon = msg.find(':');
    return error_response(400, msg, colon == std::string::npos ? "" : msg.substr(0, colon));
  }
  if (rec.timestamp.empty()) rec.timestamp = utc_now();
  try {
    store_.put(rec);
  } catch (const std::exception& e) {
    return error_response(500, std::string("could not store the annotation: ") + e.what());
  }
  return {200, "application/json", record_to_json(rec)};
}

ApiResponse AnnotationApi::get_annotation(const std::string& id) const {
  if (!find(id)) return error_response(404, "unknown scene '" + id + "'");
  try {
    const auto rec = store_.get(id);
    if (!rec) return error_response(404, "scene '" + id + "' has no annotation");
    return {200, "application/json", record_to_json(*rec)};
  } catch (const Error& e) {
    return error_response(500, e.what());
  }
}

struct HttpService::Impl {
  const AnnotationApi& api;
  httplib::Server server;
  explicit Impl(const AnnotationApi& a) : api(a) {}
};

namespace {

void send(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

}  // namespace

HttpService::HttpService(const AnnotationApi& api) : impl_(std::make_unique<Impl>(api)) {
  auto& srv = impl_->server;
  const AnnotationApi* a = &api;
  srv.Get("/api/scenes", [a](const httplib::Request&, httplib::Response& res) {
    send(res, a->list_scenes());
  });
  srv.Get(R"(/api/scenes/([^/]+)/cloud)", [a](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> n;
    if (req.has_param("max_points")) n = req.get_param_value("max_points");
    send(res, a->cloud(req.matches[1], n));
  });
  srv.Get(R"(/api/scenes/([^/]+)/images)", [a](const httplib::Request& req, httplib::Response& res) {
    send(res, a->images(req.matches[1]));
  });
  srv.Get(R"(/api/scenes/([^/]+)/images/([^/]+))",
          [a](const httplib::Request& req, httplib::Response& res) {
            send(res, a->image_file(req.matches[1], req.matches[2]));
          });
  srv.Post(R"(/api/scenes/([^/]+)/annotation)",
           [a](const httplib::Request& req, httplib::Response& res) {
             send(res, a->post_annotation(req.matches[1], req.body));
           });
  srv.Get(R"(/api/scenes/([^/]+)/annotation)",
          [a](const httplib::Request& req, httplib::Response& res) {
            send(res, a->get_annotation(req.matches[1]));
          });
  if (api.options().static_dir) srv.set_mount_point("/", api.options().static_dir->string());
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  if (port == 0) {
    const int p = srv.bind_to_any_port(host);
    if (p < 0) throw Error("cannot bind " + host);
    return p;
  }
  if (!srv.bind_to_port(host, port)) {
    throw Error("cannot bind " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  }
  return port;
}

void HttpService::listen() { impl_->server.listen_after_bind(); }

void HttpService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace evb
