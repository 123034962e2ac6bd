#include "evb/alignment_loss.hpp"

#include <algorithm>
#include <cmath>

#include "evb/error.hpp"
#include "json.hpp"

namespace evb {

using nlohmann::json;

namespace {

constexpr double kSmoothEps = 1e-6;

Vec3 vee(const Mat3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

// Unit rotation axis of m, i.e. d angle(m exp(w^)) / dw at w = 0.
// Empty when the angle is too close to 0 or pi for the axis to be smooth.
std::optional<Vec3> angle_gradient(const Mat3& m) {
  const double c = std::clamp(0.5 * (m.trace() - 1.0), -1.0, 1.0);
  const double theta = std::acos(c);
  if (theta < kSmoothEps || theta > kPi - kSmoothEps) return std::nullopt;
  return vee(m - m.transpose()) / (2.0 * std::sin(theta));
}

}  // namespace

double rotation_loss(const LossInput& in) {
  double l = geodesic_rad(relative_rotation(in.r1p, in.r2p), relative_rotation(in.r1g, in.r2g));
  if (in.anchor) l += in.r1p.angle_rad();
  return l;
}

RotationLossGrad rotation_loss_grad(const LossInput& in) {
  RotationLossGrad g;
  const Mat3 r1 = in.r1p.matrix();
  const Mat3 a = relative_rotation(in.r1p, in.r2p).matrix();
  const Mat3 gt = relative_rotation(in.r1g, in.r2g).matrix();
  if (const auto u = angle_gradient(gt.transpose() * a)) {
    g.d_r2 = r1.transpose() * *u;
    g.d_r1 = -g.d_r2;
  } else {
    g.relative_nonsmooth = true;
  }
  if (in.anchor) {
    if (const auto u = angle_gradient(r1)) {
      g.d_r1 += *u;
    } else {
      g.anchor_nonsmooth = true;
    }
  }
  return g;
}

TranslationMode parse_translation_mode(std::string_view s) {
  if (s == "anchored_absolute") return TranslationMode::kAnchoredAbsolute;
  if (s == "relative_scaled") return TranslationMode::kRelativeScaled;
  throw InvalidArgument("unknown translation mode '" + std::string(s) +
                        "' (anchored_absolute|relative_scaled)");
}

std::string_view to_string(TranslationMode m) {
  return m == TranslationMode::kAnchoredAbsolute ? "anchored_absolute" : "relative_scaled";
}

double translation_l1(const LossInput& in, TranslationMode mode) {
  if (!in.has_translation()) throw InvalidArgument("translation loss needs t1p, t2p, t1g, t2g");
  const Translation3 rel_gt = relative_translation(in.r1g, *in.t1g, in.r2g, *in.t2g);
  if (mode == TranslationMode::kAnchoredAbsolute) {
    const double n = rel_gt.norm();
    const Translation3 target = n >= kDegenerateNorm ? Translation3(rel_gt / n) : rel_gt;
    return in.t1p->lpNorm<1>() + (*in.t2p - target).lpNorm<1>();
  }
  const Translation3 rel_pred = relative_translation(in.r1p, *in.t1p, in.r2p, *in.t2p);
  const double s = translation_scale(rel_pred, rel_gt);
  return (s * rel_pred - rel_gt).lpNorm<1>();
}

LossValue total_loss(const LossInput& in, std::optional<TranslationMode> mode) {
  if (!(in.lambda_t >= 0.0)) throw InvalidArgument("lambda_t must be >= 0");
  LossValue v;
  v.rotation = rotation_loss(in);
  v.total = v.rotation;
  if (mode && in.has_translation()) {
    v.translation = translation_l1(in, *mode);
    v.total += in.lambda_t * *v.translation;
  }
  return v;
}

namespace {

RotationSO3 rotation_field(const json& j, const std::string& name) {
  const std::string qkey = "q" + name;
  const std::string rkey = "R" + name;
  if (j.contains(qkey)) {
    const auto v = j.at(qkey).get<std::vector<double>>();
    if (v.size() != 4) throw InvalidArgument(qkey + " must have 4 entries");
    return quat_to_matrix(UnitQuaternion(v[0], v[1], v[2], v[3]));
  }
  if (j.contains(rkey)) {
    const auto v = j.at(rkey).get<std::vector<double>>();
    if (v.size() != 9) throw InvalidArgument(rkey + " must have 9 entries");
    Mat3 m;
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = v[i];
    return RotationSO3::from_matrix(m, 1e-6);
  }
  throw InvalidArgument("missing rotation " + qkey + " or " + rkey);
}

std::optional<Translation3> translation_field(const json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 3) throw InvalidArgument(std::string(key) + " must have 3 entries");
  Translation3 t(v[0], v[1], v[2]);
  if (!t.allFinite()) throw InvalidArgument(std::string(key) + " is not finite");
  return t;
}

}  // namespace

LossBatch parse_loss_batch(std::string_view text) {
  LossBatch out;
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
      LossInput in;
      in.r1p = rotation_field(j, "1p");
      in.r2p = rotation_field(j, "2p");
      in.r1g = rotation_field(j, "1g");
      in.r2g = rotation_field(j, "2g");
      in.anchor = j.value("anchor", false);
      in.lambda_t = j.value("lambda_t", 1.0);
      in.t1p = translation_field(j, "t1p");
      in.t2p = translation_field(j, "t2p");
      in.t1g = translation_field(j, "t1g");
      in.t2g = translation_field(j, "t2g");
      const int present = !!in.t1p + !!in.t2p + !!in.t1g + !!in.t2g;
      if (present != 0 && present != 4) {
        throw InvalidArgument("give all of t1p, t2p, t1g, t2g or none");
      }
      out.rows.push_back(in);
      out.lines.push_back(line_no);
    } catch (const std::exception& e) {
      out.errors.push_back({line_no, e.what()});
    }
  }
  return out;
}

}  // namespace evb
