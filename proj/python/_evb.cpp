#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "evb/alignment_loss.hpp"
#include "evb/colmap_io.hpp"
#include "evb/depth_metrics.hpp"
#include "evb/error.hpp"
#include "evb/pair_curation.hpp"
#include "evb/pose_metrics.hpp"
#include "evb/recon_metrics.hpp"
#include "evb/repr_analysis.hpp"
#include "evb/so3.hpp"
#include "evb/tensor.hpp"

namespace py = pybind11;
using namespace evb;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

RotationSO3 rot(const Mat3& m) { return RotationSO3::from_matrix(m, 1e-6); }

PointCloud to_cloud(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw InvalidArgument("expected an N x 3 array");
  PointCloud c;
  auto v = a.unchecked<2>();
  c.points.reserve(static_cast<std::size_t>(a.shape(0)));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) c.points.emplace_back(v(i, 0), v(i, 1), v(i, 2));
  return c;
}

Tensor to_tensor(const Array& a) {
  std::vector<std::uint64_t> shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::dict summary_dict(const MetricSummary& s) {
  py::dict d;
  d["mre"] = s.mre;
  d["ra"] = s.ra;
  d["mte"] = s.mte;
  d["ta"] = s.ta;
  d["auc"] = s.auc;
  d["auc_max"] = s.auc_max;
  d["n_pairs"] = s.n_pairs;
  d["n_excluded"] = s.n_excluded;
  return d;
}

py::dict recon_dict(const ReconSummary& s) {
  py::dict d;
  d["acc_mean"] = s.acc_mean;
  d["acc_median"] = s.acc_median;
  d["cmp_mean"] = s.cmp_mean;
  d["cmp_median"] = s.cmp_median;
  return d;
}

LossInput loss_input(const Mat3& r1p, const Mat3& r2p, const Mat3& r1g, const Mat3& r2g, bool anchor) {
  LossInput in;
  in.r1p = rot(r1p);
  in.r2p = rot(r2p);
  in.r1g = rot(r1g);
  in.r2g = rot(r2g);
  in.anchor = anchor;
  return in;
}

}  // namespace

PYBIND11_MODULE(_evb, m) {
  m.doc() = "Native core of the evb toolkit";
  m.attr("__version__") = EVB_VERSION;

  // Translators run newest first, so the base class is registered first.
  const auto error = py::register_exception<Error>(m, "Error", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", error.ptr());
  py::register_exception<DegenerateInput>(m, "DegenerateInput", error.ptr());
  py::register_exception<InvalidArgument>(m, "InvalidArgument", error.ptr());

  // Rotations and poses.
  m.def("geodesic_deg", [](const Mat3& a, const Mat3& b) { return geodesic_deg(rot(a), rot(b)); },
        py::arg("r1"), py::arg("r2"));
  m.def("translation_angle_deg",
        [](const Vec3& t, const Vec3& t_star) { return translation_angle_deg(t, t_star); }, py::arg("t"),
        py::arg("t_star"));
  m.def(
      "relative_pose",
      [](const Mat3& r1, const Vec3& t1, const Mat3& r2, const Vec3& t2) {
        const auto a = rot(r1), b = rot(r2);
        return py::make_tuple(Mat3(relative_rotation(a, b).matrix()), Vec3(relative_translation(a, t1, b, t2)));
      },
      py::arg("r1"), py::arg("t1"), py::arg("r2"), py::arg("t2"),
      "Relative pose cam1 -> cam2 of two world-to-camera poses.");
  m.def(
      "yaw_pitch_deg",
      [](const Mat3& r, const std::string& convention) {
        const auto yp = yaw_pitch_deg(rot(r), parse_euler_convention(convention));
        return py::make_tuple(yp.yaw_deg, yp.pitch_deg, yp.roll_deg);
      },
      py::arg("r"), py::arg("convention") = "yxz");
  m.def(
      "classify_overlap",
      [](double yaw, double pitch, std::pair<double, double> fov_a, std::pair<double, double> fov_b) {
        return std::string(to_string(classify_overlap_angles(yaw, pitch, {fov_a.first, fov_a.second},
                                                             {fov_b.first, fov_b.second})));
      },
      py::arg("yaw_deg"), py::arg("pitch_deg"), py::arg("fov_a"), py::arg("fov_b"),
      "Overlap category from relative yaw/pitch and (x, y) fields of view in degrees.");

  // Pose metrics.
  m.def(
      "summarize",
      [](const std::vector<double>& rot_err, std::optional<std::vector<double>> trans_err,
         const std::vector<double>& thresholds, double auc_max) {
        if (trans_err && trans_err->size() != rot_err.size()) {
          throw InvalidArgument("rot_err and trans_err differ in length");
        }
        std::vector<PoseErrorRecord> recs(rot_err.size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
          recs[i].rot_err = rot_err[i];
          if (trans_err) recs[i].trans_err = (*trans_err)[i];
        }
        return summary_dict(summarize(recs, thresholds, auc_max));
      },
      py::arg("rot_err"), py::arg("trans_err") = py::none(),
      py::arg("thresholds") = std::vector<double>{15.0, 30.0}, py::arg("auc_max") = 30.0);
  m.def(
      "evaluate_pose",
      [](const std::string& pairs_jsonl, const std::string& pred_jsonl, unsigned threads, bool strict) {
        std::vector<ImagePair> pairs;
        std::size_t pos = 0;
        while (pos < pairs_jsonl.size()) {
          auto end = pairs_jsonl.find('\n', pos);
          if (end == std::string::npos) end = pairs_jsonl.size();
          const std::string_view line(pairs_jsonl.data() + pos, end - pos);
          if (line.find_first_not_of(" \t\r") != std::string_view::npos) pairs.push_back(image_pair_from_json(line));
          pos = end + 1;
        }
        EvaluationOptions opts;
        opts.threads = threads;
        opts.strict = strict;
        const auto rep = evaluate_pairs(pairs, parse_predictions(pred_jsonl), opts);
        py::dict buckets;
        for (const auto& [k, s] : rep.buckets) buckets[py::str(k)] = summary_dict(s);
        py::list records;
        for (const auto& r : rep.records) {
          py::dict d;
          d["scene"] = r.scene_id;
          d["image_a"] = r.image_a;
          d["image_b"] = r.image_b;
          d["category"] = std::string(to_string(r.category));
          d["rot_err"] = r.rot_err;
          d["trans_err"] = r.trans_err;
          records.append(d);
        }
        py::dict out;
        out["summary"] = buckets;
        out["records"] = records;
        out["unmatched"] = rep.unmatched;
        out["unexpected"] = rep.unexpected;
        return out;
      },
      py::arg("pairs_jsonl"), py::arg("pred_jsonl"), py::arg("threads") = 1, py::arg("strict") = true,
      "Evaluates prediction rows against curated pairs (both as JSON Lines text).");

  // COLMAP models and pair curation.
  m.def(
      "read_model",
      [](const std::filesystem::path& dir) {
        const auto model = locate_model_dir(dir);
        if (!model) throw InvalidArgument("no COLMAP model under " + dir.string());
        const auto s = read_sparse_model(*model);
        py::list images;
        for (const auto& [id, im] : s.images) {
          py::dict d;
          d["id"] = id;
          d["name"] = im.name;
          d["camera_id"] = im.camera_id;
          d["qvec"] = im.qvec;
          d["tvec"] = Vec3(im.tvec);
          d["n_observations"] = im.observations.size();
          images.append(d);
        }
        Array pts({static_cast<py::ssize_t>(s.points3d.size()), py::ssize_t{3}});
        auto w = pts.mutable_unchecked<2>();
        py::ssize_t i = 0;
        for (const auto& [id, p] : s.points3d) {
          for (int k = 0; k < 3; ++k) w(i, k) = p.xyz[k];
          ++i;
        }
        py::dict out;
        out["n_cameras"] = s.cameras.size();
        out["images"] = images;
        out["points"] = pts;
        return out;
      },
      py::arg("scene_dir"));
  m.def(
      "curate_scene",
      [](const std::filesystem::path& dir, const std::string& scene_id, int k, std::size_t max_pairs,
         std::uint64_t seed) {
        const auto model = locate_model_dir(dir);
        if (!model) throw InvalidArgument("no COLMAP model under " + dir.string());
        CurationConfig cfg;
        cfg.k = k;
        cfg.max_pairs_per_scene = max_pairs;
        cfg.seed = seed;
        cfg.validate();
        std::vector<std::string> out;
        for (const auto& p : curate(read_sparse_model(*model), scene_id, cfg).pairs) {
          out.push_back(image_pair_to_json(p));
        }
        return out;
      },
      py::arg("scene_dir"), py::arg("scene_id"), py::arg("k") = 5, py::arg("max_pairs") = 40,
      py::arg("seed") = 0, "Curated pairs as JSON strings.");

  // Reconstruction.
  m.def(
      "umeyama",
      [](const Array& src, const Array& dst, bool with_scale) {
        const auto s = umeyama(to_cloud(src), to_cloud(dst), with_scale);
        return py::make_tuple(s.s, Mat3(s.r.matrix()), Vec3(s.t));
      },
      py::arg("src"), py::arg("dst"), py::arg("with_scale") = true,
      "(s, R, t) minimizing |s R src + t - dst|^2.");
  m.def(
      "acc_cmp",
      [](const Array& pred, const Array& gt, double scale) { return recon_dict(acc_cmp(to_cloud(pred), to_cloud(gt), scale)); },
      py::arg("pred"), py::arg("gt"), py::arg("scale_to_meters") = 1.0);
  m.def(
      "evaluate_recon",
      [](const Array& pred, const Array& gt, double scale, std::uint64_t seed, unsigned threads) {
        ReconOptions opts;
        opts.seed = seed;
        opts.threads = threads;
        const auto ev = evaluate_recon(to_cloud(pred), to_cloud(gt), scale, opts);
        auto d = recon_dict(ev.summary);
        d["s"] = ev.alignment.s;
        d["R"] = Mat3(ev.alignment.r.matrix());
        d["t"] = Vec3(ev.alignment.t);
        d["icp_iterations"] = ev.icp.iterations;
        d["log"] = ev.log;
        return d;
      },
      py::arg("pred"), py::arg("gt"), py::arg("scale_to_meters") = 1.0, py::arg("seed") = 0,
      py::arg("threads") = 1, "Aligns pred to gt (Sim3 + ICP) and returns ACC/CMP in meters.");

  // Depth.
  m.def(
      "depth_metrics",
      [](const Array& pred, const Array& gt, bool align) {
        const auto s = depth_metrics({to_tensor(pred), to_tensor(gt)}, align);
        py::dict d;
        d["abs_rel"] = s.abs_rel;
        d["delta1"] = s.delta1;
        d["n_valid"] = s.n_valid;
        return d;
      },
      py::arg("pred"), py::arg("gt"), py::arg("align") = false);
  m.def(
      "median_scale_factor",
      [](const Array& pred, const Array& gt) { return median_scale_factor({to_tensor(pred), to_tensor(gt)}); },
      py::arg("pred"), py::arg("gt"));

  // Layers and loss.
  m.def(
      "select_layers",
      [](const std::vector<double>& sim, std::optional<std::vector<int>> layers, int delta) {
        SimilarityCurve c;
        c.sim = sim;
        if (layers) {
          c.layers = *layers;
        } else {
          for (std::size_t i = 0; i < sim.size(); ++i) c.layers.push_back(static_cast<int>(i));
        }
        return select_layers(c, delta);
      },
      py::arg("sim"), py::arg("layers") = py::none(), py::arg("delta") = 2);
  m.def(
      "fixed_layer_set", [](const std::string& family) { return fixed_layer_set(parse_model_family(family)); },
      py::arg("family"));
  m.def(
      "rotation_loss",
      [](const Mat3& r1p, const Mat3& r2p, const Mat3& r1g, const Mat3& r2g, bool anchor) {
        return rotation_loss(loss_input(r1p, r2p, r1g, r2g, anchor));
      },
      py::arg("r1p"), py::arg("r2p"), py::arg("r1g"), py::arg("r2g"), py::arg("anchor") = false);
  m.def(
      "rotation_loss_grad",
      [](const Mat3& r1p, const Mat3& r2p, const Mat3& r1g, const Mat3& r2g, bool anchor) {
        const auto g = rotation_loss_grad(loss_input(r1p, r2p, r1g, r2g, anchor));
        return py::make_tuple(Vec3(g.d_r1), Vec3(g.d_r2), g.nonsmooth());
      },
      py::arg("r1p"), py::arg("r2p"), py::arg("r1g"), py::arg("r2g"), py::arg("anchor") = false,
      "Right-tangent gradients (d_r1, d_r2) and the non-smooth flag.");
}
