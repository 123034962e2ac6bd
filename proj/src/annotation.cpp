#include "evb/annotation.hpp"

#include <cmath>
#include <algorithm>
#include <fstream>

#include "evb/error.hpp"
#include "evb/io_util.hpp"
#include "json.hpp"

namespace evb {

using nlohmann::json;

std::string_view to_string(Quality q) { return q == Quality::kGood ? "good" : "bad"; }

Quality parse_quality(std::string_view s) {
  if (s == "good") return Quality::kGood;
  if (s == "bad") return Quality::kBad;
  throw InvalidArgument("quality: must be 'good' or 'bad'");
}

std::optional<double> AnnotationRecord::line_length() const {
  if (!line) return std::nullopt;
  return ((*line)[1] - (*line)[0]).norm();
}

bool valid_scene_id(std::string_view id) {
  if (id.empty() || id.size() > 200 || id.front() == '.') return false;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    if (!ok) return false;
  }
  return true;
}

AnnotationRecord finalize_record(AnnotationRecord rec) {
  if (!valid_scene_id(rec.scene_id)) throw InvalidArgument("scene_id: invalid scene id");
  if (rec.line.has_value() != rec.measured_meters.has_value()) {
    throw InvalidArgument("line: line and measured_meters must be given together");
  }
  if (rec.quality == Quality::kGood && !rec.line) {
    throw InvalidArgument("line: a good reconstruction needs a measured line");
  }
  if (rec.measured_meters) {
    const double m = *rec.measured_meters;
    if (!std::isfinite(m) || !(m > 0.0)) {
      throw InvalidArgument("measured_meters: must be a positive number");
    }
    for (const auto& p : *rec.line) {
      if (!p.allFinite()) throw InvalidArgument("line: endpoints must be finite");
    }
    const double len = *rec.line_length();
    if (!(len > 0.0)) throw InvalidArgument("line: endpoints must be distinct");
    const double s = m / len;
    if (!std::isfinite(s)) throw InvalidArgument("line: segment too short");
    if (rec.scale_to_meters && std::abs(*rec.scale_to_meters - s) > 1e-9 * s) {
      throw InvalidArgument("scale_to_meters: does not equal measured_meters / line length");
    }
    rec.scale_to_meters = s;
  } else if (rec.scale_to_meters) {
    throw InvalidArgument("scale_to_meters: given without a measured line");
  }
  return rec;
}

std::string record_to_json(const AnnotationRecord& rec) {
  json j;
  j["scene_id"] = rec.scene_id;
  j["quality"] = std::string(to_string(rec.quality));
  if (rec.line) {
    j["line"] = json::array();
    for (const auto& p : *rec.line) j["line"].push_back({p.x(), p.y(), p.z()});
  }
  if (rec.measured_meters) j["measured_meters"] = *rec.measured_meters;
  if (rec.scale_to_meters) j["scale_to_meters"] = *rec.scale_to_meters;
  j["annotator"] = rec.annotator;
  j["timestamp"] = rec.timestamp;
  return j.dump();
}

AnnotationRecord record_from_json(std::string_view text, const std::string& scene_id) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("body: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw InvalidArgument("body: expected a JSON object");
  AnnotationRecord rec;
  auto field = [&](const char* key) -> const json* {
    const auto it = j.find(key);
    return it == j.end() || it->is_null() ? nullptr : &*it;
  };
  try {
    if (const json* v = field("scene_id")) rec.scene_id = v->get<std::string>();
    if (!scene_id.empty()) {
      if (!rec.scene_id.empty() && rec.scene_id != scene_id) {
        throw InvalidArgument("scene_id: does not match the request path");
      }
      rec.scene_id = scene_id;
    }
    const json* q = field("quality");
    if (!q) throw InvalidArgument("quality: required");
    rec.quality = parse_quality(q->get<std::string>());
    if (const json* v = field("line")) {
      if (!v->is_array() || v->size() != 2) throw InvalidArgument("line: expected two points");
      std::array<Vec3, 2> pts;
      for (int i = 0; i < 2; ++i) {
        const auto c = (*v)[i].get<std::vector<double>>();
        if (c.size() != 3) throw InvalidArgument("line: points need 3 coordinates");
        pts[i] = Vec3(c[0], c[1], c[2]);
      }
      rec.line = pts;
    }
    if (const json* v = field("measured_meters")) {
      if (!v->is_number()) throw InvalidArgument("measured_meters: must be a number");
      rec.measured_meters = v->get<double>();
    }
    if (const json* v = field("scale_to_meters")) rec.scale_to_meters = v->get<double>();
    if (const json* v = field("annotator")) rec.annotator = v->get<std::string>();
    if (const json* v = field("timestamp")) rec.timestamp = v->get<std::string>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("body: ") + e.what());
  }
  return finalize_record(std::move(rec));
}

AnnotationStore::AnnotationStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_ / "annotations");
}

std::filesystem::path AnnotationStore::record_path(const std::string& scene_id) const {
  if (!valid_scene_id(scene_id)) throw InvalidArgument("invalid scene id '" + scene_id + "'");
  return dir_ / "annotations" / (scene_id + ".json");
}

std::mutex& AnnotationStore::scene_mutex(const std::string& scene_id) {
  std::lock_guard lock(map_mu_);
  auto& m = scene_mu_[scene_id];
  if (!m) m = std::make_unique<std::mutex>();
  return *m;
}

void AnnotationStore::put(const AnnotationRecord& rec) {
  const AnnotationRecord r = finalize_record(rec);
  const auto path = record_path(r.scene_id);
  const std::string body = record_to_json(r);
  std::lock_guard lock(scene_mutex(r.scene_id));
  write_file_atomic(path, body + "\n", fault_hook_);
  std::lock_guard log_lock(log_mu_);
  std::ofstream log(dir_ / "annotations.log", std::ios::app | std::ios::binary);
  log << body << "\n";
  log.flush();
  if (!log) throw Error("cannot append to annotation log");
}

std::optional<AnnotationRecord> AnnotationStore::get(const std::string& scene_id) const {
  const auto path = record_path(scene_id);
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    return record_from_json(read_file(path), scene_id);
  } catch (const InvalidArgument& e) {
    throw ParseError(ParseError::Kind::kInvalidValue, path.string(), std::nullopt, 1, e.what());
  }
}

std::vector<std::string> AnnotationStore::annotated_scenes() const {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir_ / "annotations")) {
    if (e.path().extension() == ".json") out.push_back(e.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<AnnotationRecord> AnnotationStore::history(const std::string& scene_id) const {
  std::vector<AnnotationRecord> out;
  const auto path = dir_ / "annotations.log";
  if (!std::filesystem::exists(path)) return out;
  const std::string text = read_file(path);
  std::size_t pos = 0;
  std::uint64_t line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      auto rec = record_from_json(line);
      if (rec.scene_id == scene_id) out.push_back(std::move(rec));
    } catch (const InvalidArgument& e) {
      throw ParseError(ParseError::Kind::kInvalidValue, path.string(), std::nullopt, line_no,
                       e.what());
    }
  }
  return out;
}

std::optional<double> annotated_scale(const AnnotationStore& store, const std::string& scene_id) {
  const auto rec = store.get(scene_id);
  if (!rec || rec->quality != Quality::kGood) return std::nullopt;
  return rec->scale_to_meters;
}

}  // namespace evb
