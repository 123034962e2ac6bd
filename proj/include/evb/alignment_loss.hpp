#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evb/so3.hpp"

namespace evb {

/// Predicted and GT world-to-camera rotations of an image pair, optional
/// translations, and the anchoring switch for image 1.
struct LossInput {
  RotationSO3 r1p, r2p, r1g, r2g;
  bool anchor = false;
  std::optional<Translation3> t1p, t2p, t1g, t2g;
  double lambda_t = 1.0;

  bool has_translation() const { return t1p && t2p && t1g && t2g; }
};

/// geodesic(R2p R1p^T, R2g R1g^T) + [anchor] geodesic(R1p, I), radians.
double rotation_loss(const LossInput& in);

/// Gradient with respect to right tangent perturbations R -> R exp(w^) of
/// R1p and R2p. A term whose angle lies within 1e-6 of 0 or pi is
/// non-differentiable; it contributes zero and sets its flag.
struct RotationLossGrad {
  Vec3 d_r1 = Vec3::Zero();
  Vec3 d_r2 = Vec3::Zero();
  bool relative_nonsmooth = false;
  bool anchor_nonsmooth = false;

  bool nonsmooth() const { return relative_nonsmooth || anchor_nonsmooth; }
};

RotationLossGrad rotation_loss_grad(const LossInput& in);

enum class TranslationMode { kAnchoredAbsolute, kRelativeScaled };
TranslationMode parse_translation_mode(std::string_view s);
std::string_view to_string(TranslationMode m);

/// Anchored: |t1p|_1 + |t2p - t2g*|_1, where t2g* is the GT translation of
/// image 2 re-expressed with image 1 at the origin and scaled to unit norm.
/// Relative: |s t_rel_pred - t_rel_gt|_1 with s = |t_rel_gt| / |t_rel_pred|.
double translation_l1(const LossInput& in, TranslationMode mode);

struct LossValue {
  double rotation = 0.0;
  std::optional<double> translation;
  double total = 0.0;
};

/// rotation + lambda_t * translation (translation only when all four
/// translations are present and a mode is given).
LossValue total_loss(const LossInput& in, std::optional<TranslationMode> mode);

struct LossRowError {
  std::uint64_t line = 0;
  std::string message;
};

/// JSON Lines rows. Rotations as quaternions "q1p", "q2p", "q1g", "q2g"
/// ([w, x, y, z]) or row-major 3x3 matrices "R1p", ...; optional "anchor",
/// "t1p", "t2p", "t1g", "t2g", "lambda_t".
struct LossBatch {
  std::vector<LossInput> rows;
  std::vector<std::uint64_t> lines;
  std::vector<LossRowError> errors;
};

LossBatch parse_loss_batch(std::string_view text);

}  // namespace evb
