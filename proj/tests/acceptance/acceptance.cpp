// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 125).
//
//   evb_acceptance --data <tests/data> --cli <path to evb>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "evb/alignment_loss.hpp"
#include "evb/colmap_io.hpp"
#include "evb/depth_metrics.hpp"
#include "evb/error.hpp"
#include "evb/greedy_sampler.hpp"
#include "evb/io_util.hpp"
#include "evb/pair_curation.hpp"
#include "evb/pose_metrics.hpp"
#include "evb/recon_metrics.hpp"
#include "evb/repr_analysis.hpp"
#include "evb/tensor.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace evb;

namespace {

// Tolerances.
constexpr double kDegTol = 1e-7;
constexpr double kAucTol = 1e-15;
constexpr double kSim3Tol = 1e-9;
constexpr double kAccCmpTol = 1e-6;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kMedianTol = 1e-9;
constexpr int kFuzzMutations = 100'000;

fs::path g_data;
fs::path g_cli;

struct Outcome {
  std::vector<std::string> failures;
  std::string note;

  void fail(std::string msg) {
    if (failures.size() < 5) failures.push_back(std::move(msg));
    else if (failures.size() == 5) failures.push_back("...");
  }
  void check(bool ok, const std::string& msg) {
    if (!ok) fail(msg);
  }
};

std::string fmt(double v) {
  char b[64];
  std::snprintf(b, sizeof b, "%.17g", v);
  return b;
}

class TempDir {
 public:
  TempDir() {
    SeededRng rng(static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()));
    path_ = fs::temp_directory_path() / ("evb_acc_" + std::to_string(rng.uniform_index(1ull << 48)));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

RotationSO3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return quat_to_matrix(n(rng), n(rng), n(rng), n(rng));
}

std::vector<ImagePair> load_pairs(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::vector<ImagePair> out;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(image_pair_from_json(line));
  return out;
}

void compare_summary(Outcome& o, const MetricSummary& s, const json& e, const std::string& tag) {
  o.check(std::abs(s.mre - e["mre"].get<double>()) <= kDegTol, tag + " mre " + fmt(s.mre));
  o.check(s.n_pairs == e["n_pairs"].get<std::size_t>(), tag + " n_pairs");
  for (auto& [k, v] : e["ra"].items())
    o.check(s.ra.at(std::stod(k)) == v.get<double>(), tag + " ra" + k);
  if (!s.mte || !s.ta || !s.auc) {
    o.fail(tag + " missing translation metrics");
    return;
  }
  o.check(std::abs(*s.mte - e["mte"].get<double>()) <= kDegTol, tag + " mte " + fmt(*s.mte));
  for (auto& [k, v] : e["ta"].items())
    o.check(s.ta->at(std::stod(k)) == v.get<double>(), tag + " ta" + k);
  o.check(std::abs(*s.auc - e["auc"].get<double>()) <= kAucTol, tag + " auc " + fmt(*s.auc));
}

// ---------------------------------------------------------------------------

Outcome pose_metrics_vs_oracle() {
  Outcome o;
  const auto dir = g_data / "pose";
  const auto pairs = load_pairs(dir / "random1000_pairs.jsonl");
  const auto preds = parse_predictions(read_file(dir / "random1000_pred.jsonl"));
  const json e = json::parse(read_file(dir / "random1000_expected.json"));
  o.check(preds.errors.empty(), "prediction rows rejected");
  const auto rep = evaluate_pairs(pairs, preds, {});
  const auto& recs = e["records"];
  o.check(recs.size() == 1000 && rep.records.size() == 1000, "expected 1000 records");
  for (std::size_t i = 0; i < std::min<std::size_t>(recs.size(), rep.records.size()); ++i) {
    const auto& r = rep.records[i];
    o.check(std::abs(r.rot_err - recs[i]["rot_err"].get<double>()) <= kDegTol,
            "record " + std::to_string(i) + " geodesic " + fmt(r.rot_err));
    o.check(r.trans_err && std::abs(*r.trans_err - recs[i]["trans_err"].get<double>()) <= kDegTol,
            "record " + std::to_string(i) + " translation angle");
  }
  for (const char* b : {"all", "large", "small", "none"}) {
    if (!rep.buckets.count(b)) {
      o.fail(std::string("missing bucket ") + b);
      continue;
    }
    compare_summary(o, rep.buckets.at(b), e[b], b);
  }
  const double tau = e["all"].value("auc_max", 30.0);
  o.check(std::abs(auc_at(rep.records, tau) - e["all"]["auc"].get<double>()) <= kAucTol, "auc_at");
  o.note = "1000 pairs";
  return o;
}

Outcome error_fixture() {
  Outcome o;
  std::istringstream in(read_file(g_data / "pose/error_fixture.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<PoseErrorRecord> recs;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string f[6];
    for (auto& x : f) std::getline(ls, x, ',');
    PoseErrorRecord r;
    r.scene_id = f[0];
    r.category = parse_overlap_category(f[3]);
    r.rot_err = std::stod(f[4]);
    r.trans_err = std::stod(f[5]);
    recs.push_back(r);
  }
  const double th[] = {15, 30};
  const auto s = summarize(recs, th);
  o.check(recs.size() == 100, "fixture has " + std::to_string(recs.size()) + " records");
  o.check(s.mre == 15.0, "MRE " + fmt(s.mre));
  o.check(s.ra.at(15) == 0.5, "RA15 " + fmt(s.ra.at(15)));
  o.check(s.ra.at(30) == 0.75, "RA30 " + fmt(s.ra.at(30)));
  o.note = "MRE=" + fmt(s.mre) + " RA15=" + fmt(s.ra.at(15)) + " RA30=" + fmt(s.ra.at(30));
  return o;
}

Outcome overlap_grid() {
  Outcome o;
  const double fovs[] = {40, 60, 90};
  std::size_t cells = 0, small_one_exceeds = 0;
  for (double fa : fovs)
    for (double fb : fovs) {
      const FieldOfView a{fa, fa}, b{fb, fb};
      const double half = (fa + fb) / 2.0, quarter = (fa + fb) / 4.0;
      for (int g = 0; g <= 180; g += 5)
        for (int be = 0; be <= 180; be += 5) {
          for (int sign : {1, -1}) {
            const double yaw = sign * g, pitch = sign * be;
            OverlapCategory want;
            if (std::abs(yaw) < quarter && std::abs(pitch) < quarter) {
              want = OverlapCategory::kLarge;
            } else if (std::abs(yaw) > half && std::abs(pitch) > half) {
              want = OverlapCategory::kNone;
            } else {
              want = OverlapCategory::kSmall;
            }
            if (want == OverlapCategory::kSmall && ((g > half) != (be > half))) ++small_one_exceeds;
            const auto got = classify_overlap_angles(yaw, pitch, a, b);
            o.check(got == want, "fov " + fmt(fa) + "/" + fmt(fb) + " yaw " + fmt(yaw) + " pitch " +
                                     fmt(pitch) + " got " + std::string(to_string(got)));
            ++cells;
          }
        }
    }
  o.check(small_one_exceeds > 0, "grid never exercised the one-angle-exceeds case");
  o.note = std::to_string(cells) + " cells, " + std::to_string(small_one_exceeds) +
           " with exactly one angle beyond the half-sum";
  return o;
}

Outcome umeyama_and_recon() {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> su(0.1, 10.0);
  double worst_param = 0.0, worst_acc = 0.0;
  for (int i = 0; i < 100; ++i) {
    PointCloud gt;
    for (int k = 0; k < 100; ++k) gt.points.push_back(random_vec(rng).cwiseProduct(Vec3(3, 2, 1)));
    const Sim3 truth{su(rng), random_rotation(rng), random_vec(rng, 5)};
    const PointCloud pred = truth.apply(gt);
    const Sim3 est = umeyama(gt, pred);
    const double err = std::max({std::abs(est.s - truth.s),
                                 (est.r.matrix() - truth.r.matrix()).cwiseAbs().maxCoeff(),
                                 (est.t - truth.t).cwiseAbs().maxCoeff()});
    worst_param = std::max(worst_param, err);
    o.check(err < kSim3Tol, "problem " + std::to_string(i) + " parameter error " + fmt(err));
    const auto ev = evaluate_recon(pred, gt, 1.0);
    const double m = std::max(ev.summary.acc_mean, ev.summary.cmp_mean);
    worst_acc = std::max(worst_acc, m);
    o.check(m < kAccCmpTol, "problem " + std::to_string(i) + " ACC/CMP " + fmt(m));
  }
  o.note = "worst parameter error " + fmt(worst_param) + ", worst ACC/CMP " + fmt(worst_acc);
  return o;
}

using PairSet = std::set<std::pair<std::uint32_t, std::uint32_t>>;

Outcome knn_and_covis() {
  Outcome o;
  std::mt19937_64 rng(5150);
  std::size_t n_pairs = 0, n_edges = 0;
  for (int scene_i = 0; scene_i < 50; ++scene_i) {
    SparseScene s;
    PinholeCamera cam;
    cam.camera_id = 1;
    cam.model = CameraModel::kPinhole;
    cam.width = 640;
    cam.height = 480;
    cam.params = {500, 500, 320, 240};
    s.cameras[1] = cam;
    const int n = 2 + static_cast<int>(rng() % 199);
    for (int i = 1; i <= n; ++i) {
      ImageRecord im;
      im.image_id = static_cast<std::uint32_t>(i);
      im.camera_id = 1;
      im.name = "im_" + std::to_string(i) + ".jpg";
      const auto r = random_rotation(rng);
      const auto q = matrix_to_quat(r);
      im.qvec = {q.w(), q.x(), q.y(), q.z()};
      im.tvec = -(r.matrix() * random_vec(rng, 10));
      s.images[im.image_id] = im;
    }
    const std::uint64_t n_points = 20ull * static_cast<std::uint64_t>(n);
    for (std::uint64_t p = 1; p <= n_points; ++p) {
      std::set<std::uint32_t> obs;
      const int views = 2 + static_cast<int>(rng() % 3);
      const std::uint32_t base = 1 + static_cast<std::uint32_t>(rng() % n);
      for (int v = 0; v < views; ++v) obs.insert(1 + (base - 1 + static_cast<std::uint32_t>(rng() % 6)) % n);
      Point3D pt;
      pt.point3d_id = p;
      pt.xyz = random_vec(rng, 5);
      for (auto id : obs) {
        auto& im = s.images.at(id);
        pt.track.push_back({id, static_cast<std::uint32_t>(im.observations.size())});
        Observation ob;
        ob.point3d_id = p;
        im.observations.push_back(ob);
      }
      s.points3d[p] = pt;
    }
    std::vector<std::uint32_t> ids;
    for (auto& [id, _] : s.images) ids.push_back(id);
    const int k = 1 + static_cast<int>(rng() % 10);
    std::map<std::uint32_t, std::set<std::uint32_t>> nn;
    for (auto a : ids) {
      std::vector<std::pair<double, std::uint32_t>> d;
      for (auto b : ids)
        if (a != b) d.push_back({(s.images.at(a).center() - s.images.at(b).center()).norm(), b});
      std::sort(d.begin(), d.end());
      for (int i = 0; i < k && i < static_cast<int>(d.size()); ++i) nn[a].insert(d[i].second);
    }
    PairSet want;
    for (auto a : ids)
      for (auto b : nn[a])
        if (a < b && nn[b].count(a)) want.insert({a, b});
    const auto got_v = mutual_knn_pairs(s, k);
    const PairSet got(got_v.begin(), got_v.end());
    o.check(got == want, "scene " + std::to_string(scene_i) + " mutual " + std::to_string(k) + "-NN");
    n_pairs += want.size();

    const CovisParams params{3, 4.0};
    const double scale = 0.5 + static_cast<double>(rng() % 100) / 50.0;
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> shared;
    for (auto& [pid, pt] : s.points3d) {
      std::set<std::uint32_t> seen;
      for (auto& t : pt.track) seen.insert(t.image_id);
      for (auto a : seen)
        for (auto b : seen)
          if (a < b) ++shared[{a, b}];
    }
    PairSet want_e;
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = i + 1; j < ids.size(); ++j) {
        const auto a = ids[i], b = ids[j];
        const auto it = shared.find({a, b});
        const std::size_t sh = it == shared.end() ? 0 : it->second;
        const double dist = (s.images.at(a).center() - s.images.at(b).center()).norm() * scale;
        if (sh >= params.min_shared && dist >= params.min_translation_m) want_e.insert({a, b});
      }
    PairSet got_e;
    for (const auto& e : build_covis_graph(s, params, scale).edges) got_e.insert({e.a, e.b});
    o.check(got_e == want_e, "scene " + std::to_string(scene_i) + " covis graph");
    n_edges += want_e.size();
  }
  o.note = "50 scenes, " + std::to_string(n_pairs) + " pairs, " + std::to_string(n_edges) + " edges";
  return o;
}

Outcome layer_selection() {
  Outcome o;
  const json j = json::parse(read_file(g_data / "layers/select_curves.json"));
  std::size_t n = 0;
  bool saw_789 = false;
  for (const auto& c : j["curves"]) {
    SimilarityCurve curve;
    curve.layers = c["layers"].get<std::vector<int>>();
    curve.sim = c["sim"].get<std::vector<double>>();
    const auto want = c["expected"].get<std::vector<int>>();
    const auto got = select_layers(curve, c["delta"].get<int>());
    o.check(got == want, "curve " + c["name"].get<std::string>());
    saw_789 |= want == std::vector<int>{7, 8, 9};
    ++n;
  }
  o.check(n == 20, "expected 20 curves, found " + std::to_string(n));
  o.check(saw_789, "no {7,8,9} expansion curve");
  const std::vector<int> fixed{4, 11, 17, 23};
  o.check(fixed_layer_set(ModelFamily::kVggt) == fixed, "vggt fixed set");
  o.check(fixed_layer_set(ModelFamily::kWorldMirror) == fixed, "wm fixed set");
  o.note = std::to_string(n) + " curves";
  return o;
}

Outcome loss_gradient() {
  Outcome o;
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    LossInput in;
    for (;;) {
      in.r1p = random_rotation(rng);
      in.r2p = random_rotation(rng);
      in.r1g = random_rotation(rng);
      in.r2g = random_rotation(rng);
      in.anchor = i % 2 == 0;
      const double rel = geodesic_rad(relative_rotation(in.r1p, in.r2p), relative_rotation(in.r1g, in.r2g));
      const double anc = in.r1p.angle_rad();
      if (rel > 0.05 && rel < kPi - 0.05 && (!in.anchor || (anc > 0.05 && anc < kPi - 0.05))) break;
    }
    const auto an = rotation_loss_grad(in);
    Eigen::Matrix<double, 6, 1> g, fd;
    g << an.d_r1, an.d_r2;
    for (int k = 0; k < 6; ++k) {
      Vec3 w = Vec3::Zero();
      w[k % 3] = kGradStep;
      LossInput p = in, m = in;
      auto& rp = k < 3 ? p.r1p : p.r2p;
      auto& rm = k < 3 ? m.r1p : m.r2p;
      rp = rp * RotationSO3::exp(w);
      rm = rm * RotationSO3::exp(-w);
      fd[k] = (rotation_loss(p) - rotation_loss(m)) / (2 * kGradStep);
    }
    const double rel = (fd - g).norm() / g.norm();
    worst = std::max(worst, rel);
    o.check(!an.nonsmooth() && rel < kGradRelTol, "instance " + std::to_string(i) + " rel err " + fmt(rel));
  }
  o.note = "worst relative error " + fmt(worst);
  return o;
}

ModelFiles load_binary(const fs::path& dir) {
  return {read_file(dir / "cameras.bin"), read_file(dir / "images.bin"), read_file(dir / "points3D.bin")};
}

Outcome colmap_io() {
  Outcome o;
  for (int i = 0; i < 10; ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "scene_%02d", i);
    const ModelFiles raw = load_binary(g_data / "colmap" / name);
    const auto scene = parse_binary_model(raw);
    const auto text = serialize_text_model(scene);
    const auto again = serialize_binary_model(parse_text_model(text));
    const auto third = serialize_binary_model(parse_binary_model(again));
    o.check(again.cameras == third.cameras && again.images == third.images &&
                again.points3d == third.points3d,
            std::string(name) + " second binary write differs");
    o.check(again.cameras == raw.cameras && again.images == raw.images && again.points3d == raw.points3d,
            std::string(name) + " binary->text->binary differs from the input");
  }
  const ModelFiles raw = load_binary(g_data / "colmap/tiny");
  const ModelFiles text = serialize_text_model(parse_binary_model(raw));
  SeededRng rng(4242);
  std::size_t parsed = 0, rejected = 0;
  for (int i = 0; i < kFuzzMutations; ++i) {
    const bool binary = i % 2 == 0;
    ModelFiles f = binary ? raw : text;
    std::string* target[] = {&f.cameras, &f.images, &f.points3d};
    std::string& s = *target[rng.uniform_index(3)];
    const auto n_edits = 1 + rng.uniform_index(3);
    for (std::uint64_t e = 0; e < n_edits; ++e) {
      switch (rng.uniform_index(3)) {
        case 0:
          if (!s.empty()) s[rng.uniform_index(s.size())] = static_cast<char>(rng.uniform_index(256));
          break;
        case 1:
          s.resize(rng.uniform_index(s.size() + 1));
          break;
        default:
          s.insert(rng.uniform_index(s.size() + 1), 1, static_cast<char>(rng.uniform_index(256)));
      }
    }
    try {
      const auto sc = binary ? parse_binary_model(f) : parse_text_model(f);
      const auto bad = find_invariant_violation(sc);
      o.check(!bad, "mutation " + std::to_string(i) + " accepted an invalid scene: " + bad.value_or(""));
      ++parsed;
    } catch (const ParseError&) {
      ++rejected;
    } catch (const std::exception& e) {
      o.fail("mutation " + std::to_string(i) + " threw " + e.what());
    }
  }
  o.note = "10 scenes, " + std::to_string(kFuzzMutations) + " mutations (" + std::to_string(parsed) +
           " parsed, " + std::to_string(rejected) + " rejected)";
  return o;
}

Outcome depth_metrics_check() {
  Outcome o;
  const DepthFrame hand{Tensor({1, 3}, std::vector<double>{1.1, 2.0, 5.2}),
                        Tensor({1, 3}, std::vector<double>{1.0, 2.0, 4.0})};
  const auto s = depth_metrics(hand);
  // (0.1/1 + 0 + 1.2/4) / 3
  const double abs_rel = (0.1 / 1.0 + 0.0 + 1.2 / 4.0) / 3.0;
  o.check(std::abs(s.abs_rel - abs_rel) <= 1e-15, "AbsRel " + fmt(s.abs_rel));
  o.check(s.delta1 == 2.0 / 3.0, "delta1 " + fmt(s.delta1));
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> depth(0.5, 80.0), scale(0.01, 100.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t h = 1 + rng() % 48, w = 1 + rng() % 64;
    std::vector<double> pred(h * w), gt(h * w);
    const double k = scale(rng);
    for (std::size_t p = 0; p < pred.size(); ++p) {
      gt[p] = depth(rng);
      pred[p] = gt[p] * k * std::exp(0.3 * (depth(rng) / 80.0 - 0.5));
      if (rng() % 10 == 0) pred[p] = 0.0;
      if (rng() % 17 == 0) gt[p] = std::nan("");
    }
    const DepthFrame f{Tensor({h, w}, pred), Tensor({h, w}, gt)};
    const auto mask = valid_mask(f);
    if (std::find(mask.begin(), mask.end(), true) == mask.end()) continue;
    const auto scaled = median_scale(f);
    std::vector<double> sp, sg;
    const auto pv = scaled.pred.to_f64(), gv = scaled.gt.to_f64();
    for (std::size_t p = 0; p < mask.size(); ++p)
      if (mask[p]) {
        sp.push_back(pv[p]);
        sg.push_back(gv[p]);
      }
    const double mp = median(sp), mg = median(sg);
    const double rel = std::abs(mp - mg) / mg;
    worst = std::max(worst, rel);
    o.check(rel <= kMedianTol, "frame " + std::to_string(i) + " median mismatch " + fmt(rel));
  }
  o.note = "AbsRel=" + fmt(s.abs_rel) + " delta1=" + fmt(s.delta1) + ", worst median mismatch " + fmt(worst);
  return o;
}

// ---- determinism -----------------------------------------------------------

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = quote(g_cli) + " " + args + " >" + quote(log) + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_file(e.path());
  return out;
}

void write_inputs(const fs::path& in) {
  std::mt19937_64 rng(31337);
  fs::create_directories(in);
  // Recon: GT cloud and one point map of the same cloud in another frame.
  std::vector<double> gt, pm;
  const Sim3 frame{2.5, random_rotation(rng), random_vec(rng, 3)};
  for (int i = 0; i < 24 * 32; ++i) {
    const Vec3 p = random_vec(rng).cwiseProduct(Vec3(3, 2, 1));
    const Vec3 q = frame.apply(p);
    gt.insert(gt.end(), {p.x(), p.y(), p.z()});
    pm.insert(pm.end(), {q.x(), q.y(), q.z()});
  }
  write_tensor(Tensor({24 * 32, 3}, gt), in / "gt.evbt");
  write_tensor(Tensor({24, 32, 3}, pm), in / "pm.evbt");
  write_file_atomic(in / "recon.json",
                    R"({"scenes": [{"id": "synth", "gt": "gt.evbt", "pointmaps": ["pm.evbt"], "scale_to_meters": 2.0}]})");
  // Depth.
  std::uniform_real_distribution<double> d(1.0, 20.0);
  std::string manifest = "scene,image,pred_path,gt_path\n";
  for (int f = 0; f < 3; ++f) {
    std::vector<double> p(12 * 16), g(12 * 16);
    for (std::size_t i = 0; i < p.size(); ++i) {
      g[i] = d(rng);
      p[i] = 0.7 * g[i] * (1.0 + 0.1 * (d(rng) / 20.0 - 0.5));
    }
    const auto n = std::to_string(f);
    write_tensor(Tensor({12, 16}, p), in / ("dp" + n + ".evbt"));
    write_tensor(Tensor({12, 16}, g), in / ("dg" + n + ".evbt"));
    manifest += "s,f" + n + ",dp" + n + ".evbt,dg" + n + ".evbt\n";
  }
  write_file_atomic(in / "depth.csv", manifest);
  // Loss rows.
  std::string rows;
  for (int i = 0; i < 50; ++i) {
    json r;
    for (const char* k : {"q1p", "q2p", "q1g", "q2g"}) {
      const auto q = matrix_to_quat(random_rotation(rng));
      r[k] = {q.w(), q.x(), q.y(), q.z()};
    }
    for (const char* k : {"t1p", "t2p", "t1g", "t2g"}) {
      const Vec3 t = random_vec(rng, 2);
      r[k] = {t.x(), t.y(), t.z()};
    }
    r["anchor"] = i % 2 == 0;
    rows += r.dump() + "\n";
  }
  write_file_atomic(in / "loss.jsonl", rows);
  // Layer traces.
  json layers = json::array();
  std::normal_distribution<double> n01;
  for (int l = 0; l < 8; ++l)
    for (const char* kind : {"frame", "global"}) {
      std::vector<double> a(10 * 6), b(10 * 6);
      for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = n01(rng);
        b[i] = a[i] + (0.2 + 0.1 * (l % 3)) * n01(rng);
      }
      const std::string stem = std::string(kind) + std::to_string(l);
      write_tensor(Tensor({10, 6}, a), in / (stem + "_in.evbt"));
      write_tensor(Tensor({10, 6}, b), in / (stem + "_out.evbt"));
      layers.push_back({{"index", l}, {"kind", kind}, {"in", stem + "_in.evbt"}, {"out", stem + "_out.evbt"}});
    }
  write_file_atomic(in / "traces.json", json{{"traces", {{{"name", "t0"}, {"layers", layers}}}}}.dump());
  // Attention: 2 heads, 1 special + 3x4 patches per image, d_h 8.
  const std::uint64_t tokens = 2 * (1 + 12);
  std::vector<double> q(2 * tokens * 8), k(2 * tokens * 8);
  for (auto& x : q) x = n01(rng);
  for (auto& x : k) x = n01(rng);
  write_tensor(Tensor({2, tokens, 8}, q), in / "q.evbt");
  write_tensor(Tensor({2, tokens, 8}, k), in / "k.evbt");
}

Outcome determinism() {
  Outcome o;
  TempDir tmp;
  const fs::path in = tmp.path() / "in";
  write_inputs(in);
  const auto pose = g_data / "pose";
  const auto colmap = g_data / "colmap";
  auto scenes = [&](const std::string& flag) {
    std::string s;
    for (int i = 0; i < 3; ++i) s += " " + flag + " " + quote(colmap / ("scene_0" + std::to_string(i)));
    return s;
  };
  struct Cmd {
    std::string name;
    std::function<std::string(const fs::path&)> args;
  };
  const std::string common = "--seed 7 --threads 2 ";
  const std::vector<Cmd> cmds = {
      {"config dump", [&](const fs::path& out) { return common + "config dump --out " + quote(out / "cfg.yaml"); }},
      {"pairs curate",
       [&](const fs::path& out) {
         return common + "--set curation.max_pairs_per_scene=5 pairs curate" + scenes("--scene") + " --out " +
                quote(out / "pairs.jsonl") + " --stats " + quote(out / "stats.json");
       }},
      {"eval pose",
       [&](const fs::path& out) {
         return common + "eval pose --pairs " + quote(pose / "random1000_pairs.jsonl") + " --pred " +
                quote(pose / "random1000_pred.jsonl") + " --out " + quote(out / "pose.json") + " --records " +
                quote(out / "records.jsonl");
       }},
      {"eval recon",
       [&](const fs::path& out) {
         return common + "eval recon --manifest " + quote(in / "recon.json") + " --out " + quote(out / "recon.json");
       }},
      {"eval depth",
       [&](const fs::path& out) {
         return common + "eval depth --manifest " + quote(in / "depth.csv") + " --out " + quote(out / "depth.json");
       }},
      {"loss",
       [&](const fs::path& out) {
         return common + "loss --mode relative_scaled --input " + quote(in / "loss.jsonl") + " --out " +
                quote(out / "loss.json");
       }},
      {"layers similarity/select/mask",
       [&](const fs::path& out) {
         return common + "layers similarity --manifest " + quote(in / "traces.json") + " --out " +
                quote(out / "curves.json") + " && " + quote(g_cli) + " " + common + "layers select --curves " +
                quote(out / "curves.json") + " --out " + quote(out / "sel.json") + " && " + quote(g_cli) +
                " layers mask --selected " + quote(out / "sel.json") + " --out " + quote(out / "mask.json");
       }},
      {"layers attention",
       [&](const fs::path& out) {
         return common + "layers attention --q " + quote(in / "q.evbt") + " --k " + quote(in / "k.evbt") +
                " --grid 3x4 --special 1 --query 5 --out " + quote(out / "attn.evbt") + " --csv " +
                quote(out / "attn.csv");
       }},
      {"sample",
       [&](const fs::path& out) {
         return common + "sample --scale 1.0" + scenes("--scene") + " --out " + quote(out / "sample.json");
       }},
      {"model convert",
       [&](const fs::path& out) {
         return common + "model convert --to text --in " + quote(colmap / "scene_03") + " --out " +
                quote(out / "text") + " && " + quote(g_cli) + " model convert --to binary --in " +
                quote(out / "text") + " --out " + quote(out / "bin");
       }},
  };
  for (const auto& c : cmds) {
    std::map<std::string, std::string> snaps[2];
    for (int run = 0; run < 2; ++run) {
      const fs::path out = tmp.path() / ("run" + std::to_string(run)) / std::to_string(&c - cmds.data());
      fs::create_directories(out);
      const fs::path log = tmp.path() / ("log" + std::to_string(run));
      const int rc = run_cli(c.args(out), log);
      if (rc != 0) {
        o.fail(c.name + " exited " + std::to_string(rc) + ": " + read_file(log).substr(0, 300));
        break;
      }
      snaps[run] = snapshot(out);
    }
    o.check(!snaps[0].empty(), c.name + " wrote nothing");
    o.check(snaps[0] == snaps[1], c.name + " outputs differ between runs");
  }

  const auto pairs = load_pairs(pose / "random1000_pairs.jsonl");
  const auto preds = parse_predictions(read_file(pose / "random1000_pred.jsonl"));
  std::vector<EvaluationReport> reps;
  for (unsigned th : {1u, 4u, 8u}) {
    EvaluationOptions opts;
    opts.threads = th;
    reps.push_back(evaluate_pairs(pairs, preds, opts));
  }
  for (std::size_t r = 1; r < reps.size(); ++r) {
    bool same = reps[r].records.size() == reps[0].records.size();
    for (std::size_t i = 0; same && i < reps[0].records.size(); ++i)
      same = reps[r].records[i].rot_err == reps[0].records[i].rot_err &&
             reps[r].records[i].trans_err == reps[0].records[i].trans_err;
    for (const auto& [k, s] : reps[0].buckets) {
      const auto& t = reps[r].buckets.at(k);
      same = same && s.mre == t.mre && s.ra == t.ra && s.mte == t.mte && s.ta == t.ta && s.auc == t.auc;
    }
    o.check(same, "pose aggregation differs between 1 and " + std::string(r == 1 ? "4" : "8") + " threads");
  }
  o.note = std::to_string(cmds.size()) + " command groups, pose threads 1/4/8";
  return o;
}

struct Criterion {
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string k = argv[i];
    if (k == "--data") g_data = argv[i + 1];
    else if (k == "--cli") g_cli = argv[i + 1];
  }
  if (g_data.empty() || g_cli.empty()) {
    std::cerr << "usage: evb_acceptance --data <dir> --cli <evb>\n";
    return 125;
  }
  const std::vector<Criterion> criteria = {
      {"pose metrics vs oracle (1000 pairs)", 5, pose_metrics_vs_oracle},
      {"error fixture MRE/RA", 1, error_fixture},
      {"overlap classifier grid", 1, overlap_grid},
      {"Umeyama and recon pipeline (100 problems)", 10, umeyama_and_recon},
      {"mutual K-NN and covis vs brute force", 10, knn_and_covis},
      {"layer selection", 1, layer_selection},
      {"rotation loss gradient", 5, loss_gradient},
      {"COLMAP round trip and fuzz", 60, colmap_io},
      {"depth metrics", 1, depth_metrics_check},
      {"determinism", 0, determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.fail(std::string("threw: ") + e.what());
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && dt >= c.budget_s) o.fail("runtime " + fmt(dt) + " s over the " + fmt(c.budget_s) + " s budget");
    const bool ok = o.failures.empty();
    failed += !ok;
    std::printf("%s  %2zu  %-44s %7.3f s", ok ? "PASS" : "FAIL", i + 1, c.name, dt);
    if (c.budget_s > 0) std::printf(" (< %g s)", c.budget_s);
    if (!o.note.empty()) std::printf("  %s", o.note.c_str());
    std::printf("\n");
    for (const auto& f : o.failures) std::printf("        %s\n", f.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return std::min(failed, 125);
}
