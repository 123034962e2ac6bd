#include "evb/pose_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "evb/error.hpp"
#include "evb/io_util.hpp"
#include "json.hpp"

namespace evb {

using nlohmann::json;

std::string_view to_string(ExclusionReason r) {
  switch (r) {
    case ExclusionReason::kDegeneratePredTranslation: return "degenerate_pred_translation";
    case ExclusionReason::kDegenerateGtTranslation: return "degenerate_gt_translation";
  }
  return "?";
}

PoseErrorRecord pair_errors(const PairPrediction& pred, const ImagePair& gt) {
  PoseErrorRecord rec;
  rec.scene_id = gt.scene_id;
  rec.image_a = gt.name_a;
  rec.image_b = gt.name_b;
  rec.category = gt.category;

  const auto ra = quat_to_matrix(pred.q_a);
  const auto rb = quat_to_matrix(pred.q_b);
  rec.rot_err = geodesic_deg(relative_rotation(ra, rb), gt.r_rel_gt);

  const Translation3 t_pred = relative_translation(ra, pred.t_a, rb, pred.t_b);
  if (!(gt.t_rel_gt.norm() >= kDegenerateNorm)) {
    rec.excluded_reason = ExclusionReason::kDegenerateGtTranslation;
  } else if (!(t_pred.norm() >= kDegenerateNorm)) {
    rec.excluded_reason = ExclusionReason::kDegeneratePredTranslation;
  } else {
    rec.trans_err = translation_angle_deg(t_pred, gt.t_rel_gt);
  }
  return rec;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of empty sequence");
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

namespace {

double fraction_below(const std::vector<double>& v, double t) {
  const auto n = std::count_if(v.begin(), v.end(), [t](double e) { return e < t; });
  return static_cast<double>(n) / static_cast<double>(v.size());
}

}  // namespace

double auc_at(std::span<const PoseErrorRecord> records, double tau_max) {
  if (records.empty()) throw InvalidArgument("auc_at: empty input");
  const int steps = static_cast<int>(std::floor(tau_max));
  if (steps < 1) throw InvalidArgument("auc_at: tau_max must be >= 1");
  std::vector<double> worst;
  worst.reserve(records.size());
  for (const auto& r : records) {
    if (!r.trans_err) throw InvalidArgument("auc_at: record without translation error");
    worst.push_back(std::max(r.rot_err, *r.trans_err));
  }
  std::sort(worst.begin(), worst.end());
  std::size_t passing = 0;
  for (int t = 1; t <= steps; ++t) {
    passing += static_cast<std::size_t>(
        std::lower_bound(worst.begin(), worst.end(), static_cast<double>(t)) - worst.begin());
  }
  // Exact rational passing / (steps * n), evaluated once.
  return static_cast<double>(passing) /
         (static_cast<double>(steps) * static_cast<double>(worst.size()));
}

MetricSummary summarize(std::span<const PoseErrorRecord> records,
                        std::span<const double> thresholds, double auc_max) {
  if (records.empty()) throw InvalidArgument("summarize: empty input");
  MetricSummary s;
  s.n_pairs = records.size();
  s.auc_max = auc_max;
  std::vector<double> rot, trans;
  rot.reserve(records.size());
  for (const auto& r : records) {
    rot.push_back(r.rot_err);
    if (r.trans_err) {
      trans.push_back(*r.trans_err);
    } else {
      ++s.n_excluded;
    }
  }
  s.mre = median(rot);
  for (double t : thresholds) s.ra[t] = fraction_below(rot, t);
  if (!trans.empty()) {
    s.mte = median(trans);
    std::map<double, double> ta;
    for (double t : thresholds) ta[t] = fraction_below(trans, t);
    s.ta = std::move(ta);
  }
  if (s.n_excluded == 0) s.auc = auc_at(records, auc_max);
  return s;
}

std::string pair_key(const std::string& scene, const std::string& a, const std::string& b) {
  return scene + "|" + a + "|" + b;
}

namespace {

std::string image_ref(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_integer()) {
    const auto i = v.get<std::int64_t>();
    if (i < 0) throw InvalidArgument("negative image id");
    return std::to_string(i);
  }
  throw InvalidArgument("image reference must be a string name or an integer id");
}

Translation3 vec3_field(const json& j, const char* key) {
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 3) throw InvalidArgument(std::string(key) + " must have 3 entries");
  Translation3 t(v[0], v[1], v[2]);
  if (!t.allFinite()) throw InvalidArgument(std::string(key) + " is not finite");
  return t;
}

UnitQuaternion quat_field(const json& j, const char* key) {
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 4) throw InvalidArgument(std::string(key) + " must have 4 entries");
  return UnitQuaternion(v[0], v[1], v[2], v[3]);
}

}  // namespace

PredictionFile parse_predictions(std::string_view text) {
  PredictionFile out;
  std::uint64_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const json j = json::parse(line);
      PairPrediction p;
      p.scene_id = j.at("scene").get<std::string>();
      p.by_id = !j.at("image_a").is_string();
      if (p.by_id != !j.at("image_b").is_string()) {
        throw InvalidArgument("image_a and image_b must both be names or both be ids");
      }
      p.image_a = image_ref(j.at("image_a"));
      p.image_b = image_ref(j.at("image_b"));
      if (p.image_a == p.image_b) throw InvalidArgument("image_a equals image_b");
      p.q_a = quat_field(j, "qa");
      p.q_b = quat_field(j, "qb");
      p.t_a = vec3_field(j, "ta");
      p.t_b = vec3_field(j, "tb");
      out.rows.push_back(std::move(p));
    } catch (const std::exception& e) {
      out.errors.push_back({line_no, e.what()});
    }
  }
  return out;
}

std::string prediction_to_json(const PairPrediction& p) {
  json j;
  j["scene"] = p.scene_id;
  if (p.by_id) {
    j["image_a"] = std::stoull(p.image_a);
    j["image_b"] = std::stoull(p.image_b);
  } else {
    j["image_a"] = p.image_a;
    j["image_b"] = p.image_b;
  }
  j["qa"] = {p.q_a.w(), p.q_a.x(), p.q_a.y(), p.q_a.z()};
  j["ta"] = {p.t_a.x(), p.t_a.y(), p.t_a.z()};
  j["qb"] = {p.q_b.w(), p.q_b.x(), p.q_b.y(), p.q_b.z()};
  j["tb"] = {p.t_b.x(), p.t_b.y(), p.t_b.z()};
  return j.dump();
}

EvaluationReport evaluate_pairs(std::span<const ImagePair> pairs, const PredictionFile& preds,
                                const EvaluationOptions& opts) {
  EvaluationReport report;
  report.row_errors = preds.errors;
  if (!opts.permissive && !preds.errors.empty()) {
    throw EvaluationError("prediction file has " + std::to_string(preds.errors.size()) +
                              " malformed row(s); first at line " +
                              std::to_string(preds.errors.front().line) + ": " +
                              preds.errors.front().message,
                          {}, preds.errors);
  }

  // Pair lookup by name and by id; both orientations resolve to the pair.
  std::unordered_map<std::string, std::size_t> by_name, by_id;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    by_name[pair_key(p.scene_id, p.name_a, p.name_b)] = i;
    by_id[pair_key(p.scene_id, std::to_string(p.image_a), std::to_string(p.image_b))] = i;
  }

  std::vector<std::optional<PairPrediction>> matched(pairs.size());
  for (const auto& row : preds.rows) {
    const auto& index = row.by_id ? by_id : by_name;
    PairPrediction p = row;
    auto it = index.find(pair_key(row.scene_id, row.image_a, row.image_b));
    if (it == index.end()) {
      it = index.find(pair_key(row.scene_id, row.image_b, row.image_a));
      if (it != index.end()) {
        std::swap(p.image_a, p.image_b);
        std::swap(p.q_a, p.q_b);
        std::swap(p.t_a, p.t_b);
      }
    }
    if (it == index.end()) {
      report.unexpected.push_back(pair_key(row.scene_id, row.image_a, row.image_b));
      continue;
    }
    if (matched[it->second]) {
      report.row_errors.push_back(
          {0, "duplicate prediction for " + pair_key(row.scene_id, row.image_a, row.image_b)});
      continue;
    }
    matched[it->second] = std::move(p);
  }

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (matched[i]) {
      order.push_back(i);
    } else {
      report.unmatched.push_back(pair_key(pairs[i].scene_id, pairs[i].name_a, pairs[i].name_b));
    }
  }
  if (opts.strict && !report.unmatched.empty()) {
    throw EvaluationError(std::to_string(report.unmatched.size()) +
                              " pair(s) have no prediction; first: " + report.unmatched.front(),
                          report.unmatched, report.row_errors);
  }

  report.records.resize(order.size());
  parallel_for(order.size(), opts.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      report.records[k] = pair_errors(*matched[order[k]], pairs[order[k]]);
    }
  });

  if (report.records.empty()) return report;
  report.buckets["all"] = summarize(report.records, opts.thresholds, opts.auc_max);
  for (auto cat : {OverlapCategory::kLarge, OverlapCategory::kSmall, OverlapCategory::kNone}) {
    std::vector<PoseErrorRecord> sub;
    for (const auto& r : report.records) {
      if (r.category == cat) sub.push_back(r);
    }
    if (!sub.empty()) {
      report.buckets[std::string(to_string(cat))] = summarize(sub, opts.thresholds, opts.auc_max);
    }
  }
  return report;
}

}  // namespace evb
