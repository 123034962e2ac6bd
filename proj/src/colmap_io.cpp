#include "evb/colmap_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "evb/error.hpp"
#include "evb/io_util.hpp"

namespace evb {

static_assert(std::endian::native == std::endian::little,
              "binary model I/O assumes a little-endian host");

std::size_t camera_model_num_params(CameraModel model) {
  switch (model) {
    case CameraModel::kSimplePinhole: return 3;
    case CameraModel::kPinhole: return 4;
    case CameraModel::kSimpleRadial: return 4;
    case CameraModel::kRadial: return 5;
    case CameraModel::kOpenCV: return 8;
  }
  return 0;
}

std::string_view camera_model_name(CameraModel model) {
  switch (model) {
    case CameraModel::kSimplePinhole: return "SIMPLE_PINHOLE";
    case CameraModel::kPinhole: return "PINHOLE";
    case CameraModel::kSimpleRadial: return "SIMPLE_RADIAL";
    case CameraModel::kRadial: return "RADIAL";
    case CameraModel::kOpenCV: return "OPENCV";
  }
  return "UNKNOWN";
}

std::optional<CameraModel> camera_model_from_name(std::string_view name) {
  for (int id = 0; id <= 4; ++id) {
    const auto m = static_cast<CameraModel>(id);
    if (camera_model_name(m) == name) return m;
  }
  return std::nullopt;
}

std::optional<CameraModel> camera_model_from_id(std::int64_t id) {
  if (id < 0 || id > 4) return std::nullopt;
  return static_cast<CameraModel>(id);
}

namespace {

bool has_separate_focals(CameraModel m) {
  return m == CameraModel::kPinhole || m == CameraModel::kOpenCV;
}

}  // namespace

double PinholeCamera::fx() const { return params.at(0); }
double PinholeCamera::fy() const {
  return has_separate_focals(model) ? params.at(1) : params.at(0);
}
double PinholeCamera::cx() const {
  return has_separate_focals(model) ? params.at(2) : params.at(1);
}
double PinholeCamera::cy() const {
  return has_separate_focals(model) ? params.at(3) : params.at(2);
}

RotationSO3 ImageRecord::rotation() const {
  return quat_to_matrix(qvec[0], qvec[1], qvec[2], qvec[3]);
}

Vec3 ImageRecord::center() const { return -(rotation().matrix().transpose() * tvec); }

const ImageRecord& SparseScene::image(std::uint32_t id) const {
  const auto it = images.find(id);
  if (it == images.end()) {
    throw InvalidArgument("unknown image id " + std::to_string(id));
  }
  return it->second;
}

const PinholeCamera& SparseScene::camera_of(const ImageRecord& img) const {
  const auto it = cameras.find(img.camera_id);
  if (it == cameras.end()) {
    throw InvalidArgument("image " + std::to_string(img.image_id) +
                          " references unknown camera " + std::to_string(img.camera_id));
  }
  return it->second;
}

std::optional<std::uint32_t> SparseScene::find_image_by_name(std::string_view name) const {
  for (const auto& [id, img] : images) {
    if (img.name == name) return id;
  }
  return std::nullopt;
}

namespace {

enum class Table { kCameras, kImages, kPoints };

struct Violation {
  ParseError::Kind kind;
  Table table;
  std::uint64_t id;
  std::string message;
};

bool valid_name(const std::string& name) {
  if (name.empty()) return false;
  if (name.front() == ' ' || name.back() == ' ') return false;
  return std::none_of(name.begin(), name.end(),
                      [](char c) { return static_cast<unsigned char>(c) < 0x20; });
}

std::optional<Violation> check_camera(const PinholeCamera& cam) {
  auto bad = [&](std::string msg) {
    return Violation{ParseError::Kind::kInvalidValue, Table::kCameras, cam.camera_id,
                     "camera " + std::to_string(cam.camera_id) + ": " + std::move(msg)};
  };
  if (cam.width < 1 || cam.height < 1) return bad("width and height must be >= 1");
  if (cam.params.size() != camera_model_num_params(cam.model)) {
    return bad("parameter count does not match model");
  }
  for (double p : cam.params) {
    if (!std::isfinite(p)) return bad("non-finite parameter");
  }
  if (!(cam.fx() > 0.0) || !(cam.fy() > 0.0)) return bad("focal length must be > 0");
  return std::nullopt;
}

std::optional<Violation> check_image(const ImageRecord& img, const SparseScene& scene) {
  auto bad = [&](ParseError::Kind kind, std::string msg) {
    return Violation{kind, Table::kImages, img.image_id,
                     "image " + std::to_string(img.image_id) + ": " + std::move(msg)};
  };
  if (!valid_name(img.name)) return bad(ParseError::Kind::kInvalidValue, "invalid name");
  if (!scene.cameras.contains(img.camera_id)) {
    return bad(ParseError::Kind::kDanglingReference,
               "unknown camera " + std::to_string(img.camera_id));
  }
  double qmax = 0.0;
  for (double q : img.qvec) {
    if (!std::isfinite(q)) return bad(ParseError::Kind::kInvalidValue, "non-finite quaternion");
    qmax = std::max(qmax, std::abs(q));
  }
  if (qmax == 0.0) {
    return bad(ParseError::Kind::kInvalidValue, "zero-norm quaternion");
  }
  if (!img.tvec.allFinite()) {
    return bad(ParseError::Kind::kInvalidValue, "non-finite translation");
  }
  if (!img.center().allFinite()) {
    return bad(ParseError::Kind::kInvalidValue, "non-finite camera center");
  }
  for (const auto& obs : img.observations) {
    if (!std::isfinite(obs.x) || !std::isfinite(obs.y)) {
      return bad(ParseError::Kind::kInvalidValue, "non-finite observation");
    }
    if (obs.has_point() && !scene.points3d.contains(obs.point3d_id)) {
      return bad(ParseError::Kind::kDanglingReference,
                 "observation references unknown point " + std::to_string(obs.point3d_id));
    }
  }
  return std::nullopt;
}

std::optional<Violation> check_point(const Point3D& pt, const SparseScene& scene) {
  auto bad = [&](ParseError::Kind kind, std::string msg) {
    return Violation{kind, Table::kPoints, pt.point3d_id,
                     "point " + std::to_string(pt.point3d_id) + ": " + std::move(msg)};
  };
  if (pt.point3d_id == kInvalidPoint3DId) {
    return bad(ParseError::Kind::kInvalidValue, "reserved point id");
  }
  if (!pt.xyz.allFinite() || !std::isfinite(pt.error)) {
    return bad(ParseError::Kind::kInvalidValue, "non-finite value");
  }
  for (const auto& el : pt.track) {
    const auto it = scene.images.find(el.image_id);
    if (it == scene.images.end()) {
      return bad(ParseError::Kind::kDanglingReference,
                 "track references unknown image " + std::to_string(el.image_id));
    }
    const auto& obs = it->second.observations;
    if (el.point2d_idx >= obs.size() || obs[el.point2d_idx].point3d_id != pt.point3d_id) {
      return bad(ParseError::Kind::kDanglingReference,
                 "track entry (" + std::to_string(el.image_id) + ", " +
                     std::to_string(el.point2d_idx) + ") does not observe this point");
    }
  }
  return std::nullopt;
}

std::optional<Violation> check_scene(const SparseScene& scene) {
  for (const auto& [id, cam] : scene.cameras) {
    if (id != cam.camera_id) {
      return Violation{ParseError::Kind::kInvalidValue, Table::kCameras, id, "camera key mismatch"};
    }
    if (auto v = check_camera(cam)) return v;
  }
  for (const auto& [id, img] : scene.images) {
    if (id != img.image_id) {
      return Violation{ParseError::Kind::kInvalidValue, Table::kImages, id, "image key mismatch"};
    }
    if (auto v = check_image(img, scene)) return v;
  }
  for (const auto& [id, pt] : scene.points3d) {
    if (id != pt.point3d_id) {
      return Violation{ParseError::Kind::kInvalidValue, Table::kPoints, id, "point key mismatch"};
    }
    if (auto v = check_point(pt, scene)) return v;
  }
  if (scene.scale_to_meters && !(*scene.scale_to_meters > 0.0)) {
    return Violation{ParseError::Kind::kInvalidValue, Table::kCameras, 0,
                     "scale_to_meters must be positive"};
  }
  return std::nullopt;
}

// Where each record came from, so cross-table violations can be reported
// against the offending record's byte offset or line.
struct Location {
  std::optional<std::uint64_t> offset;
  std::optional<std::uint64_t> line;
};

struct SourceMap {
  std::string file_names[3];
  std::unordered_map<std::uint64_t, Location> where[3];
};

void throw_violation(const Violation& v, const SourceMap& src) {
  const int t = static_cast<int>(v.table);
  Location loc;
  if (auto it = src.where[t].find(v.id); it != src.where[t].end()) loc = it->second;
  throw ParseError(v.kind, src.file_names[t], loc.offset, loc.line, v.message);
}

// ---------------------------------------------------------------------------
// Binary

class BinaryCursor {
 public:
  BinaryCursor(std::string_view data, std::string file) : data_(data), file_(std::move(file)) {}

  template <typename T>
  T read() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string read_cstring() {
    const auto end = data_.find('\0', pos_);
    if (end == std::string_view::npos) fail(ParseError::Kind::kTruncated, "unterminated string");
    std::string s(data_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return s;
  }

  // Rejects counts that cannot possibly fit in the remaining bytes.
  void check_count(std::uint64_t count, std::uint64_t min_record_bytes) {
    if (min_record_bytes != 0 && count > remaining() / min_record_bytes) {
      fail(ParseError::Kind::kTruncated,
           "record count " + std::to_string(count) + " exceeds remaining data");
    }
  }

  void need(std::size_t n) {
    if (remaining() < n) {
      fail(ParseError::Kind::kTruncated, "unexpected end of data (need " + std::to_string(n) +
                                             " bytes, have " + std::to_string(remaining()) + ")");
    }
  }

  void expect_end() {
    if (remaining() != 0) {
      fail(ParseError::Kind::kSyntax, std::to_string(remaining()) + " trailing bytes");
    }
  }

  [[noreturn]] void fail(ParseError::Kind kind, const std::string& msg) const {
    throw ParseError(kind, file_, pos_, std::nullopt, msg);
  }
  [[noreturn]] void fail_at(std::uint64_t offset, ParseError::Kind kind,
                            const std::string& msg) const {
    throw ParseError(kind, file_, offset, std::nullopt, msg);
  }

  std::uint64_t pos() const { return pos_; }
  std::uint64_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  std::string file_;
  std::uint64_t pos_ = 0;
};

void parse_cameras_bin(std::string_view data, SparseScene& scene, SourceMap& src) {
  BinaryCursor cur(data, src.file_names[0]);
  const auto n = cur.read<std::uint64_t>();
  cur.check_count(n, 24);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto start = cur.pos();
    PinholeCamera cam;
    cam.camera_id = cur.read<std::uint32_t>();
    const auto model_id = cur.read<std::int32_t>();
    const auto model = camera_model_from_id(model_id);
    if (!model) {
      cur.fail_at(start + 4, ParseError::Kind::kUnknownCameraModel,
                  "unsupported camera model id " + std::to_string(model_id));
    }
    cam.model = *model;
    cam.width = cur.read<std::uint64_t>();
    cam.height = cur.read<std::uint64_t>();
    cam.params.resize(camera_model_num_params(cam.model));
    for (auto& p : cam.params) p = cur.read<double>();
    if (auto v = check_camera(cam)) cur.fail_at(start, v->kind, v->message);
    if (!scene.cameras.emplace(cam.camera_id, cam).second) {
      cur.fail_at(start, ParseError::Kind::kDuplicateId,
                  "duplicate camera id " + std::to_string(cam.camera_id));
    }
    src.where[0][cam.camera_id] = {start, std::nullopt};
  }
  cur.expect_end();
}

void parse_images_bin(std::string_view data, SparseScene& scene, SourceMap& src) {
  BinaryCursor cur(data, src.file_names[1]);
  const auto n = cur.read<std::uint64_t>();
  cur.check_count(n, 4 + 32 + 24 + 4 + 1 + 8);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto start = cur.pos();
    ImageRecord img;
    img.image_id = cur.read<std::uint32_t>();
    for (auto& q : img.qvec) q = cur.read<double>();
    for (int k = 0; k < 3; ++k) img.tvec[k] = cur.read<double>();
    img.camera_id = cur.read<std::uint32_t>();
    img.name = cur.read_cstring();
    const auto num_obs = cur.read<std::uint64_t>();
    cur.check_count(num_obs, 24);
    img.observations.resize(num_obs);
    for (auto& obs : img.observations) {
      obs.x = cur.read<double>();
      obs.y = cur.read<double>();
      obs.point3d_id = cur.read<std::uint64_t>();
    }
    const auto id = img.image_id;
    if (!scene.images.emplace(id, std::move(img)).second) {
      cur.fail_at(start, ParseError::Kind::kDuplicateId,
                  "duplicate image id " + std::to_string(id));
    }
    src.where[1][id] = {start, std::nullopt};
  }
  cur.expect_end();
}

void parse_points_bin(std::string_view data, SparseScene& scene, SourceMap& src) {
  BinaryCursor cur(data, src.file_names[2]);
  const auto n = cur.read<std::uint64_t>();
  cur.check_count(n, 8 + 24 + 3 + 8 + 8);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto start = cur.pos();
    Point3D pt;
    pt.point3d_id = cur.read<std::uint64_t>();
    for (int k = 0; k < 3; ++k) pt.xyz[k] = cur.read<double>();
    for (auto& c : pt.rgb) c = cur.read<std::uint8_t>();
    pt.error = cur.read<double>();
    const auto len = cur.read<std::uint64_t>();
    cur.check_count(len, 8);
    pt.track.resize(len);
    for (auto& el : pt.track) {
      el.image_id = cur.read<std::uint32_t>();
      el.point2d_idx = cur.read<std::uint32_t>();
    }
    const auto id = pt.point3d_id;
    if (!scene.points3d.emplace(id, std::move(pt)).second) {
      cur.fail_at(start, ParseError::Kind::kDuplicateId,
                  "duplicate point id " + std::to_string(id));
    }
    src.where[2][id] = {start, std::nullopt};
  }
  cur.expect_end();
}

class BinaryWriter {
 public:
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void put_cstring(const std::string& s) {
    out_.append(s);
    out_.push_back('\0');
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

// ---------------------------------------------------------------------------
// Text

class TextReader {
 public:
  TextReader(std::string_view data, std::string file) : data_(data), file_(std::move(file)) {}

  // Next non-empty, non-comment line (trimmed). False at end of input.
  bool next_record(std::string_view& line) {
    std::string_view raw;
    while (next_raw(raw)) {
      line = trim(raw);
      if (line.empty() || line.front() == '#') continue;
      return true;
    }
    return false;
  }

  // Next physical line, trimmed, even if empty.
  bool next_line(std::string_view& line) {
    std::string_view raw;
    if (!next_raw(raw)) return false;
    line = trim(raw);
    return true;
  }

  std::uint64_t line_no() const { return line_no_; }

  [[noreturn]] void fail(ParseError::Kind kind, const std::string& msg) const {
    throw ParseError(kind, file_, std::nullopt, line_no_, msg);
  }

  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
      s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
      s.remove_suffix(1);
    }
    return s;
  }

 private:
  bool next_raw(std::string_view& raw) {
    if (pos_ >= data_.size()) return false;
    auto end = data_.find('\n', pos_);
    if (end == std::string_view::npos) end = data_.size();
    raw = data_.substr(pos_, end - pos_);
    pos_ = end + 1;
    ++line_no_;
    return true;
  }

  std::string_view data_;
  std::string file_;
  std::size_t pos_ = 0;
  std::uint64_t line_no_ = 0;
};

class Tokens {
 public:
  Tokens(std::string_view line, const TextReader& reader) : rest_(line), reader_(reader) {}

  bool empty() {
    skip_ws();
    return rest_.empty();
  }

  std::string_view next() {
    skip_ws();
    if (rest_.empty()) reader_.fail(ParseError::Kind::kSyntax, "missing field");
    auto end = rest_.find_first_of(" \t");
    if (end == std::string_view::npos) end = rest_.size();
    auto tok = rest_.substr(0, end);
    rest_.remove_prefix(end);
    return tok;
  }

  std::string_view remainder() {
    skip_ws();
    return TextReader::trim(rest_);
  }

  template <typename T>
  T number() {
    const auto tok = next();
    T v{};
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      reader_.fail(ParseError::Kind::kSyntax, "invalid number '" + std::string(tok) + "'");
    }
    return v;
  }

 private:
  void skip_ws() {
    while (!rest_.empty() && (rest_.front() == ' ' || rest_.front() == '\t')) {
      rest_.remove_prefix(1);
    }
  }

  std::string_view rest_;
  const TextReader& reader_;
};

void parse_cameras_txt(std::string_view data, SparseScene& scene, SourceMap& src) {
  TextReader rd(data, src.file_names[0]);
  std::string_view line;
  while (rd.next_record(line)) {
    Tokens tok(line, rd);
    PinholeCamera cam;
    cam.camera_id = tok.number<std::uint32_t>();
    const auto model_name = tok.next();
    const auto model = camera_model_from_name(model_name);
    if (!model) {
      rd.fail(ParseError::Kind::kUnknownCameraModel,
              "unsupported camera model '" + std::string(model_name) + "'");
    }
    cam.model = *model;
    cam.width = tok.number<std::uint64_t>();
    cam.height = tok.number<std::uint64_t>();
    while (!tok.empty()) cam.params.push_back(tok.number<double>());
    if (auto v = check_camera(cam)) rd.fail(v->kind, v->message);
    if (!scene.cameras.emplace(cam.camera_id, cam).second) {
      rd.fail(ParseError::Kind::kDuplicateId, "duplicate camera id " + std::to_string(cam.camera_id));
    }
    src.where[0][cam.camera_id] = {std::nullopt, rd.line_no()};
  }
}

void parse_images_txt(std::string_view data, SparseScene& scene, SourceMap& src) {
  TextReader rd(data, src.file_names[1]);
  std::string_view line;
  while (rd.next_record(line)) {
    const auto header_line = rd.line_no();
    Tokens tok(line, rd);
    ImageRecord img;
    img.image_id = tok.number<std::uint32_t>();
    for (auto& q : img.qvec) q = tok.number<double>();
    for (int k = 0; k < 3; ++k) img.tvec[k] = tok.number<double>();
    img.camera_id = tok.number<std::uint32_t>();
    img.name = std::string(tok.remainder());
    if (img.name.empty()) rd.fail(ParseError::Kind::kSyntax, "missing image name");

    std::string_view obs_line;
    if (!rd.next_line(obs_line)) {
      rd.fail(ParseError::Kind::kTruncated, "missing POINTS2D line for image " +
                                                std::to_string(img.image_id));
    }
    Tokens obs_tok(obs_line, rd);
    while (!obs_tok.empty()) {
      Observation obs;
      obs.x = obs_tok.number<double>();
      obs.y = obs_tok.number<double>();
      const auto id = obs_tok.number<std::int64_t>();
      if (id < -1) rd.fail(ParseError::Kind::kInvalidValue, "negative point id");
      obs.point3d_id = id == -1 ? kInvalidPoint3DId : static_cast<std::uint64_t>(id);
      img.observations.push_back(obs);
    }
    const auto id = img.image_id;
    if (!scene.images.emplace(id, std::move(img)).second) {
      throw ParseError(ParseError::Kind::kDuplicateId, src.file_names[1], std::nullopt,
                       header_line, "duplicate image id " + std::to_string(id));
    }
    src.where[1][id] = {std::nullopt, header_line};
  }
}

void parse_points_txt(std::string_view data, SparseScene& scene, SourceMap& src) {
  TextReader rd(data, src.file_names[2]);
  std::string_view line;
  while (rd.next_record(line)) {
    Tokens tok(line, rd);
    Point3D pt;
    pt.point3d_id = tok.number<std::uint64_t>();
    for (int k = 0; k < 3; ++k) pt.xyz[k] = tok.number<double>();
    for (auto& c : pt.rgb) {
      const auto v = tok.number<unsigned>();
      if (v > 255) rd.fail(ParseError::Kind::kInvalidValue, "color component > 255");
      c = static_cast<std::uint8_t>(v);
    }
    pt.error = tok.number<double>();
    while (!tok.empty()) {
      TrackElement el;
      el.image_id = tok.number<std::uint32_t>();
      el.point2d_idx = tok.number<std::uint32_t>();
      pt.track.push_back(el);
    }
    const auto id = pt.point3d_id;
    if (!scene.points3d.emplace(id, std::move(pt)).second) {
      rd.fail(ParseError::Kind::kDuplicateId, "duplicate point id " + std::to_string(id));
    }
    src.where[2][id] = {std::nullopt, rd.line_no()};
  }
}

void append_double(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

template <typename Int>
void append_int(std::string& out, Int v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

SparseScene finish(SparseScene scene, const SourceMap& src) {
  if (auto v = check_scene(scene)) throw_violation(*v, src);
  return scene;
}

}  // namespace

std::optional<std::string> find_invariant_violation(const SparseScene& scene) {
  if (auto v = check_scene(scene)) return v->message;
  return std::nullopt;
}

SparseScene parse_binary_model(const ModelFiles& files) {
  SparseScene scene;
  SourceMap src{{"cameras.bin", "images.bin", "points3D.bin"}, {}};
  parse_cameras_bin(files.cameras, scene, src);
  parse_images_bin(files.images, scene, src);
  parse_points_bin(files.points3d, scene, src);
  return finish(std::move(scene), src);
}

SparseScene parse_text_model(const ModelFiles& files) {
  SparseScene scene;
  SourceMap src{{"cameras.txt", "images.txt", "points3D.txt"}, {}};
  parse_cameras_txt(files.cameras, scene, src);
  parse_images_txt(files.images, scene, src);
  parse_points_txt(files.points3d, scene, src);
  return finish(std::move(scene), src);
}

ModelFiles serialize_binary_model(const SparseScene& scene) {
  ModelFiles out;
  {
    BinaryWriter w;
    w.put<std::uint64_t>(scene.cameras.size());
    for (const auto& [id, cam] : scene.cameras) {
      w.put<std::uint32_t>(cam.camera_id);
      w.put<std::int32_t>(static_cast<std::int32_t>(cam.model));
      w.put<std::uint64_t>(cam.width);
      w.put<std::uint64_t>(cam.height);
      for (double p : cam.params) w.put<double>(p);
    }
    out.cameras = w.take();
  }
  {
    BinaryWriter w;
    w.put<std::uint64_t>(scene.images.size());
    for (const auto& [id, img] : scene.images) {
      w.put<std::uint32_t>(img.image_id);
      for (double q : img.qvec) w.put<double>(q);
      for (int k = 0; k < 3; ++k) w.put<double>(img.tvec[k]);
      w.put<std::uint32_t>(img.camera_id);
      w.put_cstring(img.name);
      w.put<std::uint64_t>(img.observations.size());
      for (const auto& obs : img.observations) {
        w.put<double>(obs.x);
        w.put<double>(obs.y);
        w.put<std::uint64_t>(obs.point3d_id);
      }
    }
    out.images = w.take();
  }
  {
    BinaryWriter w;
    w.put<std::uint64_t>(scene.points3d.size());
    for (const auto& [id, pt] : scene.points3d) {
      w.put<std::uint64_t>(pt.point3d_id);
      for (int k = 0; k < 3; ++k) w.put<double>(pt.xyz[k]);
      for (auto c : pt.rgb) w.put<std::uint8_t>(c);
      w.put<double>(pt.error);
      w.put<std::uint64_t>(pt.track.size());
      for (const auto& el : pt.track) {
        w.put<std::uint32_t>(el.image_id);
        w.put<std::uint32_t>(el.point2d_idx);
      }
    }
    out.points3d = w.take();
  }
  return out;
}

ModelFiles serialize_text_model(const SparseScene& scene) {
  ModelFiles out;
  {
    std::string& s = out.cameras;
    s += "# Camera list with one line of data per camera:\n";
    s += "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n";
    s += "# Number of cameras: ";
    append_int(s, scene.cameras.size());
    s += '\n';
    for (const auto& [id, cam] : scene.cameras) {
      append_int(s, cam.camera_id);
      s += ' ';
      s += camera_model_name(cam.model);
      s += ' ';
      append_int(s, cam.width);
      s += ' ';
      append_int(s, cam.height);
      for (double p : cam.params) {
        s += ' ';
        append_double(s, p);
      }
      s += '\n';
    }
  }
  {
    std::string& s = out.images;
    std::size_t total_obs = 0;
    for (const auto& [id, img] : scene.images) total_obs += img.observations.size();
    const double mean_obs =
        scene.images.empty() ? 0.0 : static_cast<double>(total_obs) / scene.images.size();
    s += "# Image list with two lines of data per image:\n";
    s += "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n";
    s += "#   POINTS2D[] as (X, Y, POINT3D_ID)\n";
    s += "# Number of images: ";
    append_int(s, scene.images.size());
    s += ", mean observations per image: ";
    append_double(s, mean_obs);
    s += '\n';
    for (const auto& [id, img] : scene.images) {
      append_int(s, img.image_id);
      for (double q : img.qvec) {
        s += ' ';
        append_double(s, q);
      }
      for (int k = 0; k < 3; ++k) {
        s += ' ';
        append_double(s, img.tvec[k]);
      }
      s += ' ';
      append_int(s, img.camera_id);
      s += ' ';
      s += img.name;
      s += '\n';
      bool first = true;
      for (const auto& obs : img.observations) {
        if (!first) s += ' ';
        first = false;
        append_double(s, obs.x);
        s += ' ';
        append_double(s, obs.y);
        s += ' ';
        if (obs.has_point()) {
          append_int(s, obs.point3d_id);
        } else {
          s += "-1";
        }
      }
      s += '\n';
    }
  }
  {
    std::string& s = out.points3d;
    std::size_t total_track = 0;
    for (const auto& [id, pt] : scene.points3d) total_track += pt.track.size();
    const double mean_track =
        scene.points3d.empty() ? 0.0 : static_cast<double>(total_track) / scene.points3d.size();
    s += "# 3D point list with one line of data per point:\n";
    s += "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n";
    s += "# Number of points: ";
    append_int(s, scene.points3d.size());
    s += ", mean track length: ";
    append_double(s, mean_track);
    s += '\n';
    for (const auto& [id, pt] : scene.points3d) {
      append_int(s, pt.point3d_id);
      for (int k = 0; k < 3; ++k) {
        s += ' ';
        append_double(s, pt.xyz[k]);
      }
      for (auto c : pt.rgb) {
        s += ' ';
        append_int(s, static_cast<unsigned>(c));
      }
      s += ' ';
      append_double(s, pt.error);
      for (const auto& el : pt.track) {
        s += ' ';
        append_int(s, el.image_id);
        s += ' ';
        append_int(s, el.point2d_idx);
      }
      s += '\n';
    }
  }
  return out;
}

namespace {

bool model_files_exist(const std::filesystem::path& dir, const char* ext) {
  for (const char* stem : {"cameras", "images", "points3D"}) {
    if (!std::filesystem::is_regular_file(dir / (std::string(stem) + ext))) return false;
  }
  return true;
}

ModelFiles load_files(const std::filesystem::path& dir, const char* ext) {
  ModelFiles f;
  f.cameras = read_file(dir / (std::string("cameras") + ext));
  f.images = read_file(dir / (std::string("images") + ext));
  f.points3d = read_file(dir / (std::string("points3D") + ext));
  return f;
}

// Re-tags a ParseError from the in-memory parser with the on-disk path.
[[noreturn]] void rethrow_with_path(const ParseError& e, const std::filesystem::path& dir) {
  throw ParseError(e.kind(), (dir / e.file()).string(), e.offset(), e.line(),
                   std::string(e.what()).substr(std::string(e.what()).find(": ") + 2));
}

}  // namespace

SparseScene read_sparse_model(const std::filesystem::path& dir, ModelFormat format) {
  if (format == ModelFormat::kAuto) {
    if (model_files_exist(dir, ".bin")) {
      format = ModelFormat::kBinary;
    } else if (model_files_exist(dir, ".txt")) {
      format = ModelFormat::kText;
    } else {
      throw ParseError(ParseError::Kind::kIo, dir.string(), std::nullopt, std::nullopt,
                       "no cameras/images/points3D (.bin or .txt) files found");
    }
  }
  const char* ext = format == ModelFormat::kBinary ? ".bin" : ".txt";
  for (const char* stem : {"cameras", "images", "points3D"}) {
    const auto p = dir / (std::string(stem) + ext);
    if (!std::filesystem::is_regular_file(p)) {
      throw ParseError(ParseError::Kind::kIo, p.string(), std::nullopt, std::nullopt,
                       "missing model file");
    }
  }
  const ModelFiles files = load_files(dir, ext);
  try {
    return format == ModelFormat::kBinary ? parse_binary_model(files) : parse_text_model(files);
  } catch (const ParseError& e) {
    rethrow_with_path(e, dir);
  }
}

void write_sparse_model(const SparseScene& scene, const std::filesystem::path& dir,
                        ModelFormat format) {
  if (auto v = find_invariant_violation(scene)) {
    throw InvalidArgument("refusing to write invalid scene: " + *v);
  }
  std::filesystem::create_directories(dir);
  const bool text = format == ModelFormat::kText;
  const ModelFiles files = text ? serialize_text_model(scene) : serialize_binary_model(scene);
  const char* ext = text ? ".txt" : ".bin";
  write_file_atomic(dir / (std::string("cameras") + ext), files.cameras);
  write_file_atomic(dir / (std::string("images") + ext), files.images);
  write_file_atomic(dir / (std::string("points3D") + ext), files.points3d);
}

std::optional<std::filesystem::path> locate_model_dir(const std::filesystem::path& scene_dir) {
  for (const auto& cand : {scene_dir, scene_dir / "sparse" / "0", scene_dir / "sparse"}) {
    if (model_files_exist(cand, ".bin") || model_files_exist(cand, ".txt")) return cand;
  }
  return std::nullopt;
}

FieldOfView camera_fov_deg(const PinholeCamera& cam) {
  if (!(cam.fx() > 0.0) || !(cam.fy() > 0.0)) {
    throw InvalidArgument("focal length must be positive");
  }
  FieldOfView fov;
  fov.x_deg = rad_to_deg(2.0 * std::atan(static_cast<double>(cam.width) / (2.0 * cam.fx())));
  fov.y_deg = rad_to_deg(2.0 * std::atan(static_cast<double>(cam.height) / (2.0 * cam.fy())));
  return fov;
}

namespace {

std::vector<std::uint64_t> observed_points(const ImageRecord& img) {
  std::vector<std::uint64_t> ids;
  ids.reserve(img.observations.size());
  for (const auto& obs : img.observations) {
    if (obs.has_point()) ids.push_back(obs.point3d_id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

}  // namespace

std::size_t shared_points(const SparseScene& scene, std::uint32_t a, std::uint32_t b) {
  const auto pa = observed_points(scene.image(a));
  if (a == b) return pa.size();
  const auto pb = observed_points(scene.image(b));
  std::vector<std::uint64_t> common;
  std::set_intersection(pa.begin(), pa.end(), pb.begin(), pb.end(), std::back_inserter(common));
  return common.size();
}

std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> all_shared_points(
    const SparseScene& scene) {
  // Built from observations (not tracks) so it agrees with shared_points().
  std::map<std::uint64_t, std::vector<std::uint32_t>> viewers;
  for (const auto& [iid, img] : scene.images) {
    for (auto pid : observed_points(img)) viewers[pid].push_back(iid);
  }
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> counts;
  for (const auto& [pid, ids] : viewers) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = i + 1; j < ids.size(); ++j) ++counts[{ids[i], ids[j]}];
    }
  }
  return counts;
}

}  // namespace evb
