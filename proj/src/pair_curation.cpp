#include "evb/pair_curation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "evb/error.hpp"
#include "evb/io_util.hpp"
#include "evb/kdtree.hpp"
#include "json.hpp"

namespace evb {

using nlohmann::json;

std::string_view to_string(OverlapCategory c) {
  switch (c) {
    case OverlapCategory::kLarge: return "large";
    case OverlapCategory::kSmall: return "small";
    case OverlapCategory::kNone: return "none";
  }
  return "?";
}

OverlapCategory parse_overlap_category(std::string_view s) {
  if (s == "large" || s == "Large") return OverlapCategory::kLarge;
  if (s == "small" || s == "Small") return OverlapCategory::kSmall;
  if (s == "none" || s == "None") return OverlapCategory::kNone;
  throw InvalidArgument("unknown overlap category '" + std::string(s) + "'");
}

void CurationConfig::validate() const {
  if (k < 1) throw InvalidArgument("curation.k: must be >= 1");
  if (!(fov_delta_max > 0.0)) throw InvalidArgument("curation.fov_delta_max: must be > 0");
  if (!(focal_ratio_max >= 1.0)) throw InvalidArgument("curation.focal_ratio_max: must be >= 1");
  if (!(resolution_ratio_max >= 1.0)) {
    throw InvalidArgument("curation.resolution_ratio_max: must be >= 1");
  }
  if (!(coverage_threshold > 0.0) || coverage_threshold > 1.0) {
    throw InvalidArgument("curation.coverage_threshold: must be in (0, 1]");
  }
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> mutual_knn_pairs(
    const SparseScene& scene, int k, bool use_camera_centers) {
  if (k < 1) throw InvalidArgument("K must be >= 1");
  std::vector<std::uint32_t> ids;
  std::vector<Vec3> pos;
  for (const auto& [id, img] : scene.images) {
    ids.push_back(id);
    pos.push_back(use_camera_centers ? img.center() : img.tvec);
  }
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  const std::size_t n = ids.size();
  if (n < 2) return out;

  // Indices follow ascending image id, so the tree's index tie-break is the
  // image-id tie-break.
  const KdTree3 tree(pos);
  std::vector<std::vector<std::size_t>> nn(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& nb : tree.knn(pos[i], static_cast<std::size_t>(k), i)) {
      nn[i].push_back(nb.index);
    }
    std::sort(nn[i].begin(), nn[i].end());
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : nn[i]) {
      if (j <= i) continue;
      if (std::binary_search(nn[j].begin(), nn[j].end(), i)) out.emplace_back(ids[i], ids[j]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

OverlapCategory classify_overlap_angles(double yaw_deg, double pitch_deg,
                                        const FieldOfView& fov_a, const FieldOfView& fov_b) {
  const double ay = std::abs(yaw_deg);
  const double ap = std::abs(pitch_deg);
  const double sx = fov_a.x_deg + fov_b.x_deg;
  const double sy = fov_a.y_deg + fov_b.y_deg;
  if (ay < sx / 4.0 && ap < sy / 4.0) return OverlapCategory::kLarge;
  if (ay > sx / 2.0 && ap > sy / 2.0) return OverlapCategory::kNone;
  return OverlapCategory::kSmall;
}

OverlapCategory classify_overlap(const RotationSO3& r_rel, const FieldOfView& fov_a,
                                 const FieldOfView& fov_b, EulerConvention convention) {
  const auto yp = yaw_pitch_deg(r_rel, convention);
  return classify_overlap_angles(yp.yaw_deg, yp.pitch_deg, fov_a, fov_b);
}

bool scale_consistent(const PinholeCamera& cam_a, const PinholeCamera& cam_b,
                      const CurationConfig& cfg) {
  const auto fa = camera_fov_deg(cam_a);
  const auto fb = camera_fov_deg(cam_b);
  if (!(std::abs(fa.x_deg - fb.x_deg) < cfg.fov_delta_max)) return false;
  if (!(std::abs(fa.y_deg - fb.y_deg) < cfg.fov_delta_max)) return false;
  const double f_hi = std::max(cam_a.fx(), cam_b.fx());
  const double f_lo = std::min(cam_a.fx(), cam_b.fx());
  if (!(f_hi / f_lo < cfg.focal_ratio_max)) return false;
  const double area_a = static_cast<double>(cam_a.width) * static_cast<double>(cam_a.height);
  const double area_b = static_cast<double>(cam_b.width) * static_cast<double>(cam_b.height);
  return std::max(area_a, area_b) / std::min(area_a, area_b) < cfg.resolution_ratio_max;
}

double grid_coverage(std::span<const Eigen::Vector2d> matches, double width, double height,
                     int grid) {
  if (grid < 1 || !(width > 0.0) || !(height > 0.0)) {
    throw InvalidArgument("grid_coverage needs grid >= 1 and a positive image size");
  }
  std::vector<bool> hit(static_cast<std::size_t>(grid * grid), false);
  for (const auto& m : matches) {
    if (!(m.x() >= 0.0 && m.x() < width && m.y() >= 0.0 && m.y() < height)) continue;
    const int cx = std::min(grid - 1, static_cast<int>(m.x() / width * grid));
    const int cy = std::min(grid - 1, static_cast<int>(m.y() / height * grid));
    hit[static_cast<std::size_t>(cy * grid + cx)] = true;
  }
  const auto n = std::count(hit.begin(), hit.end(), true);
  return static_cast<double>(n) / static_cast<double>(grid * grid);
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    while (!f.empty() && f.front() == ' ') f.erase(f.begin());
    while (!f.empty() && f.back() == ' ') f.pop_back();
  }
  return out;
}

std::pair<std::string, std::string> unordered_key(const std::string& a, const std::string& b) {
  return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::uint64_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    fn(text.substr(pos, end - pos), line_no);
    pos = end + 1;
  }
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\r' || c == '\t'; });
}

}  // namespace

VerificationTable VerificationTable::parse_csv(std::string_view text, const std::string& file) {
  VerificationTable table;
  bool header_seen = false;
  for_each_line(text, [&](std::string_view line, std::uint64_t no) {
    if (blank(line)) return;
    const auto f = split_csv_line(line);
    auto fail = [&](const std::string& msg) {
      throw ParseError(ParseError::Kind::kSyntax, file, std::nullopt, no, msg);
    };
    if (!header_seen) {
      if (f != std::vector<std::string>{"image_a", "image_b", "match_count", "coverage"}) {
        fail("expected header image_a,image_b,match_count,coverage");
      }
      header_seen = true;
      return;
    }
    if (f.size() != 4) fail("expected 4 fields");
    Entry e;
    try {
      std::size_t used = 0;
      const long long mc = std::stoll(f[2], &used);
      if (used != f[2].size() || mc < 0) fail("invalid match_count");
      e.match_count = static_cast<std::uint64_t>(mc);
      e.coverage = std::stod(f[3], &used);
      if (used != f[3].size() || !(e.coverage >= 0.0 && e.coverage <= 1.0)) {
        fail("coverage must be in [0, 1]");
      }
    } catch (const std::logic_error&) {
      fail("invalid number");
    }
    if (table.find(f[0], f[1])) fail("duplicate pair " + f[0] + "," + f[1]);
    table.add(f[0], f[1], e);
  });
  if (!header_seen) {
    throw ParseError(ParseError::Kind::kSyntax, file, std::nullopt, 1, "missing header");
  }
  return table;
}

void VerificationTable::add(const std::string& a, const std::string& b, Entry e) {
  entries_[unordered_key(a, b)] = e;
}

std::optional<VerificationTable::Entry> VerificationTable::find(const std::string& a,
                                                                const std::string& b) const {
  const auto it = entries_.find(unordered_key(a, b));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

ExclusionList ExclusionList::parse(std::string_view text, const std::string& file) {
  ExclusionList list;
  for_each_line(text, [&](std::string_view line, std::uint64_t no) {
    if (blank(line) || line.front() == '#') return;
    const auto f = split_csv_line(line);
    if (f.size() != 3 || f[0].empty() || f[1].empty() || f[2].empty()) {
      throw ParseError(ParseError::Kind::kSyntax, file, std::nullopt, no,
                       "expected scene_id,image_a,image_b");
    }
    list.add(f[0], f[1], f[2]);
  });
  return list;
}

void ExclusionList::add(const std::string& scene, const std::string& a, const std::string& b) {
  const auto [x, y] = unordered_key(a, b);
  entries_.emplace(scene, x, y);
}

bool ExclusionList::contains(const std::string& scene, const std::string& a,
                             const std::string& b) const {
  const auto [x, y] = unordered_key(a, b);
  return entries_.contains({scene, x, y});
}

ImagePair make_image_pair(const SparseScene& scene, const std::string& scene_id,
                          std::uint32_t a, std::uint32_t b, EulerConvention convention) {
  if (a == b) throw InvalidArgument("pair needs two distinct images");
  if (a > b) std::swap(a, b);
  const auto& ia = scene.image(a);
  const auto& ib = scene.image(b);
  const auto ra = ia.rotation();
  const auto rb = ib.rotation();
  ImagePair p;
  p.scene_id = scene_id;
  p.image_a = a;
  p.image_b = b;
  p.name_a = ia.name;
  p.name_b = ib.name;
  p.r_rel_gt = relative_rotation(ra, rb);
  p.t_rel_gt = relative_translation(ra, ia.tvec, rb, ib.tvec);
  const auto yp = yaw_pitch_deg(p.r_rel_gt, convention);
  p.yaw_deg = yp.yaw_deg;
  p.pitch_deg = yp.pitch_deg;
  p.category = classify_overlap_angles(yp.yaw_deg, yp.pitch_deg,
                                       camera_fov_deg(scene.camera_of(ia)),
                                       camera_fov_deg(scene.camera_of(ib)));
  return p;
}

namespace {

// Label implied by upstream matches: no matches -> None, otherwise Large or
// Small depending on how much of the image the matches cover.
OverlapCategory category_from_matches(const VerificationTable::Entry& e, double threshold) {
  if (e.match_count == 0) return OverlapCategory::kNone;
  return e.coverage >= threshold ? OverlapCategory::kLarge : OverlapCategory::kSmall;
}

}  // namespace

CurationResult curate(const SparseScene& scene, const std::string& scene_id,
                      const CurationConfig& cfg, const VerificationTable* verification,
                      const ExclusionList* exclusions) {
  cfg.validate();
  CurationResult result;
  auto& stats = result.stats;
  const auto candidates = mutual_knn_pairs(scene, cfg.k, cfg.use_camera_centers);
  stats.candidates = candidates.size();

  std::vector<ImagePair> kept;
  for (const auto& [a, b] : candidates) {
    ImagePair p = make_image_pair(scene, scene_id, a, b, cfg.euler);
    if (exclusions && exclusions->contains(scene_id, p.name_a, p.name_b)) {
      ++stats.excluded;
      continue;
    }
    if (cfg.scale_filter &&
        !scale_consistent(scene.camera_of(scene.image(a)), scene.camera_of(scene.image(b)), cfg)) {
      ++stats.scale_rejected;
      continue;
    }
    if (verification) {
      const auto entry = verification->find(p.name_a, p.name_b);
      if (!entry) {
        ++stats.unverified;
        continue;
      }
      if (category_from_matches(*entry, cfg.coverage_threshold) != p.category) {
        ++stats.verification_rejected;
        continue;
      }
      p.verified = true;
    }
    kept.push_back(std::move(p));
  }

  if (cfg.max_pairs_per_scene > 0 && kept.size() > cfg.max_pairs_per_scene) {
    SeededRng rng(cfg.seed ^ fnv1a64(scene_id));
    std::vector<ImagePair> capped;
    for (auto i : rng.sample_indices(kept.size(), cfg.max_pairs_per_scene)) {
      capped.push_back(std::move(kept[i]));
    }
    stats.capped_out = kept.size() - capped.size();
    kept = std::move(capped);
  }

  if (cfg.balance) {
    const auto before = kept.size();
    kept = balance_categories(kept, cfg.seed);
    stats.balanced_out = before - kept.size();
  }
  for (const auto& p : kept) ++stats.per_category[p.category];
  result.pairs = std::move(kept);
  return result;
}

std::vector<ImagePair> balance_categories(const std::vector<ImagePair>& pairs,
                                          std::uint64_t seed) {
  std::map<OverlapCategory, std::vector<std::size_t>> by_cat;
  for (auto c : {OverlapCategory::kLarge, OverlapCategory::kSmall, OverlapCategory::kNone}) {
    by_cat[c];
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) by_cat[pairs[i].category].push_back(i);
  std::size_t target = pairs.size();
  for (const auto& [c, idx] : by_cat) target = std::min(target, idx.size());

  std::vector<std::size_t> keep;
  for (const auto& [c, idx] : by_cat) {
    SeededRng rng(seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(c) + 1)));
    for (auto j : rng.sample_indices(idx.size(), target)) keep.push_back(idx[j]);
  }
  std::sort(keep.begin(), keep.end());
  std::vector<ImagePair> out;
  out.reserve(keep.size());
  for (auto i : keep) out.push_back(pairs[i]);
  return out;
}

std::string image_pair_to_json(const ImagePair& p) {
  const Mat3& r = p.r_rel_gt.matrix();
  const auto q = matrix_to_quat(p.r_rel_gt);
  json j;
  j["scene"] = p.scene_id;
  j["image_a"] = p.image_a;
  j["image_b"] = p.image_b;
  j["name_a"] = p.name_a;
  j["name_b"] = p.name_b;
  j["category"] = std::string(to_string(p.category));
  j["yaw_deg"] = p.yaw_deg;
  j["pitch_deg"] = p.pitch_deg;
  j["verified"] = p.verified;
  j["r_rel"] = {r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0), r(2, 1), r(2, 2)};
  j["q_rel"] = {q.w(), q.x(), q.y(), q.z()};
  j["t_rel"] = {p.t_rel_gt.x(), p.t_rel_gt.y(), p.t_rel_gt.z()};
  return j.dump();
}

ImagePair image_pair_from_json(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("invalid pair JSON: ") + e.what());
  }
  try {
    ImagePair p;
    p.scene_id = j.at("scene").get<std::string>();
    p.image_a = j.at("image_a").get<std::uint32_t>();
    p.image_b = j.at("image_b").get<std::uint32_t>();
    p.name_a = j.value("name_a", std::to_string(p.image_a));
    p.name_b = j.value("name_b", std::to_string(p.image_b));
    p.category = parse_overlap_category(j.at("category").get<std::string>());
    p.yaw_deg = j.value("yaw_deg", 0.0);
    p.pitch_deg = j.value("pitch_deg", 0.0);
    p.verified = j.value("verified", false);
    const auto r = j.at("r_rel").get<std::vector<double>>();
    if (r.size() != 9) throw InvalidArgument("r_rel must have 9 entries");
    Mat3 m;
    m << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
    p.r_rel_gt = RotationSO3::from_matrix(m);
    const auto t = j.at("t_rel").get<std::vector<double>>();
    if (t.size() != 3) throw InvalidArgument("t_rel must have 3 entries");
    p.t_rel_gt = Translation3(t[0], t[1], t[2]);
    if (p.image_a >= p.image_b) throw InvalidArgument("pair must satisfy image_a < image_b");
    return p;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("invalid pair record: ") + e.what());
  }
}

}  // namespace evb
