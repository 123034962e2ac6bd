#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "evb/alignment_loss.hpp"
#include "evb/error.hpp"
#include "test_util.hpp"

using namespace evb;

namespace {

LossInput random_input(std::mt19937_64& rng, bool anchor) {
  for (;;) {
    LossInput in;
    in.r1p = test::random_rotation(rng);
    in.r2p = test::random_rotation(rng);
    in.r1g = test::random_rotation(rng);
    in.r2g = test::random_rotation(rng);
    in.anchor = anchor;
    double rel = geodesic_rad(relative_rotation(in.r1p, in.r2p), relative_rotation(in.r1g, in.r2g));
    double anc = in.r1p.angle_rad();
    if (rel > 0.05 && rel < kPi - 0.05 && (!anchor || (anc > 0.05 && anc < kPi - 0.05))) return in;
  }
}

// Central differences of the loss along each right-tangent basis direction.
Eigen::Matrix<double, 6, 1> fd_gradient(const LossInput& in, double h) {
  Eigen::Matrix<double, 6, 1> g;
  for (int k = 0; k < 6; ++k) {
    Vec3 w = Vec3::Zero();
    w[k % 3] = h;
    LossInput p = in, m = in;
    if (k < 3) {
      p.r1p = in.r1p * RotationSO3::exp(w);
      m.r1p = in.r1p * RotationSO3::exp(-w);
    } else {
      p.r2p = in.r2p * RotationSO3::exp(w);
      m.r2p = in.r2p * RotationSO3::exp(-w);
    }
    g[k] = (rotation_loss(p) - rotation_loss(m)) / (2 * h);
  }
  return g;
}

}  // namespace

TEST(RotationLoss, Examples) {
  LossInput in;
  in.r2p = in.r2g = RotationSO3::about_x_deg(20);
  in.anchor = true;
  EXPECT_NEAR(rotation_loss(in), 0.0, 1e-7);

  LossInput off;
  off.r2g = RotationSO3::about_y_deg(5);
  off.r2p = RotationSO3::about_z_deg(30) * off.r2g;
  EXPECT_NEAR(rotation_loss(off), kPi / 6, 1e-12);

  LossInput anc;
  anc.anchor = true;
  anc.r1p = RotationSO3::about_z_deg(10);
  anc.r2p = RotationSO3::about_x_deg(7) * anc.r1p;
  anc.r1g = RotationSO3::identity();
  anc.r2g = RotationSO3::about_x_deg(7);
  EXPECT_NEAR(rotation_loss(anc), deg_to_rad(10), 1e-7);
}

TEST(RotationLoss, NonNegativeAndGaugeInvariant) {
  std::mt19937_64 rng(71);
  for (int i = 0; i < 200; ++i) {
    LossInput in = random_input(rng, false);
    double l = rotation_loss(in);
    EXPECT_GE(l, 0.0);
    auto g = test::random_rotation(rng);
    LossInput moved = in;
    moved.r1p = in.r1p * g.transpose();
    moved.r2p = in.r2p * g.transpose();
    EXPECT_NEAR(rotation_loss(moved), l, 1e-9);
  }
}

TEST(RotationLossGrad, FiniteDifferences) {
  std::mt19937_64 rng(72);
  for (int i = 0; i < 100; ++i) {
    LossInput in = random_input(rng, i % 2 == 0);
    auto an = rotation_loss_grad(in);
    ASSERT_FALSE(an.nonsmooth());
    Eigen::Matrix<double, 6, 1> g;
    g << an.d_r1, an.d_r2;
    auto fd = fd_gradient(in, 1e-5);
    EXPECT_LT((fd - g).norm() / g.norm(), 1e-4) << i;
  }
}

TEST(RotationLossGrad, AtMinimumIsFlagged) {
  LossInput in;
  in.r1p = in.r1g = RotationSO3::about_x_deg(40);
  in.r2p = in.r2g = RotationSO3::about_y_deg(40);
  auto g = rotation_loss_grad(in);
  EXPECT_TRUE(g.relative_nonsmooth);
  EXPECT_EQ(g.d_r1, Vec3::Zero());
  EXPECT_EQ(g.d_r2, Vec3::Zero());
}

TEST(RotationLossGrad, AnchorUnitSlope) {
  for (double deg : {5.0, 45.0, 120.0}) {
    LossInput in;
    in.anchor = true;
    in.r1p = RotationSO3::about_z_deg(deg);
    in.r2p = in.r1p;
    auto g = rotation_loss_grad(in);
    EXPECT_TRUE(g.relative_nonsmooth);
    EXPECT_FALSE(g.anchor_nonsmooth);
    EXPECT_NEAR((g.d_r1 - Vec3(0, 0, 1)).norm(), 0.0, 1e-9) << deg;
  }
}

TEST(TranslationL1, Examples) {
  LossInput in;
  in.t1p = Vec3::Zero();
  in.t1g = Vec3::Zero();
  in.t2g = Vec3(0, 3, 4);
  in.t2p = Vec3(0, 0.6, 0.8);
  EXPECT_NEAR(translation_l1(in, TranslationMode::kAnchoredAbsolute), 0.0, 1e-15);
  in.t2p = Vec3(0, 1.5, 2);
  EXPECT_NEAR(translation_l1(in, TranslationMode::kRelativeScaled), 0.0, 1e-15);
  in.t2g = Vec3(0, 1, 0);
  in.t2p = Vec3(1, 0, 0);
  EXPECT_NEAR(translation_l1(in, TranslationMode::kRelativeScaled), 2.0, 1e-15);
  in.t2p = Vec3::Zero();
  EXPECT_THROW(translation_l1(in, TranslationMode::kRelativeScaled), DegenerateInput);
  LossInput none;
  EXPECT_THROW(translation_l1(none, TranslationMode::kAnchoredAbsolute), InvalidArgument);
}

TEST(TranslationL1, RelativeIgnoresScale) {
  std::mt19937_64 rng(73);
  for (int i = 0; i < 100; ++i) {
    LossInput in = random_input(rng, false);
    in.t1p = test::random_vec(rng);
    in.t2p = test::random_vec(rng);
    in.t1g = test::random_vec(rng);
    in.t2g = test::random_vec(rng);
    double l = translation_l1(in, TranslationMode::kRelativeScaled);
    LossInput s = in;
    *s.t1p *= 3.7;
    *s.t2p *= 3.7;
    EXPECT_NEAR(translation_l1(s, TranslationMode::kRelativeScaled), l, 1e-9);
  }
}

TEST(TotalLoss, CombinesTerms) {
  LossInput in;
  in.r2g = RotationSO3::about_y_deg(5);
  in.r2p = RotationSO3::about_z_deg(30) * in.r2g;
  auto v = total_loss(in, TranslationMode::kRelativeScaled);
  EXPECT_FALSE(v.translation.has_value());
  EXPECT_NEAR(v.total, kPi / 6, 1e-12);
  in.t1p = in.t1g = Vec3::Zero();
  in.t2g = Vec3(0, 1, 0);
  in.t2p = Vec3(1, 0, 0);
  in.lambda_t = 0.5;
  v = total_loss(in, TranslationMode::kRelativeScaled);
  ASSERT_TRUE(v.translation.has_value());
  EXPECT_NEAR(v.total, kPi / 6 + 0.5 * *v.translation, 1e-12);
  EXPECT_FALSE(total_loss(in, std::nullopt).translation.has_value());
}

TEST(LossBatch, Parse) {
  auto b = parse_loss_batch(
      R"({"q1p":[1,0,0,0],"q2p":[1,0,0,0],"q1g":[1,0,0,0],"q2g":[1,0,0,0],"anchor":true})"
      "\n\n"
      R"({"R1p":[1,0,0,0,1,0,0,0,1],"q2p":[1,0,0,0],"q1g":[1,0,0,0],"q2g":[0,0,0,1],"t1p":[0,0,0],"t2p":[1,0,0],"t1g":[0,0,0],"t2g":[0,1,0],"lambda_t":2})"
      "\n"
      R"({"q1p":[1,0,0,0]})"
      "\n"
      R"({"q1p":[1,0,0,0],"q2p":[1,0,0,0],"q1g":[1,0,0,0],"q2g":[1,0,0,0],"t1p":[0,0,0]})"
      "\n");
  ASSERT_EQ(b.rows.size(), 2u);
  EXPECT_TRUE(b.rows[0].anchor);
  EXPECT_EQ(b.lines, (std::vector<std::uint64_t>{1, 3}));
  EXPECT_TRUE(b.rows[1].has_translation());
  EXPECT_EQ(b.rows[1].lambda_t, 2.0);
  EXPECT_NEAR(rotation_loss(b.rows[1]), kPi, 1e-9);
  ASSERT_EQ(b.errors.size(), 2u);
  EXPECT_EQ(b.errors[0].line, 4u);
  EXPECT_EQ(b.errors[1].line, 5u);
}
