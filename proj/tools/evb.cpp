#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "evb/alignment_loss.hpp"
#include "evb/annotation.hpp"
#include "evb/colmap_io.hpp"
#include "evb/config.hpp"
#include "evb/depth_metrics.hpp"
#include "evb/error.hpp"
#include "evb/greedy_sampler.hpp"
#include "evb/io_util.hpp"
#include "evb/pair_curation.hpp"
#include "evb/pose_metrics.hpp"
#include "evb/recon_pipeline.hpp"
#include "evb/repr_analysis.hpp"
#include "evb/service.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace evb;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitInternal = 3;

struct Globals {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

ToolConfig load_config(const Globals& g) {
  ToolConfig cfg;
  if (!g.config_file.empty()) cfg.load_yaml(read_file(g.config_file), g.config_file);
  cfg.apply_env(evb_environment());
  for (const auto& s : g.sets) cfg.set(s);
  if (g.seed) cfg.seed = *g.seed;
  if (g.threads) cfg.threads = *g.threads;
  cfg.validate();
  cfg.curation.seed = cfg.seed;
  cfg.sampler.seed = cfg.seed;
  cfg.recon.seed = cfg.seed;
  cfg.recon.threads = cfg.threads;
  cfg.pose.threads = cfg.threads;
  return cfg;
}

json report_header(const ToolConfig& cfg, const std::string& command) {
  return {{"tool", "evb"}, {"version", EVB_VERSION}, {"config_hash", cfg.hash()},
          {"command", command}};
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    write_file_atomic(out, text);
  }
}

std::string threshold_key(double t) {
  char buf[32];
  if (t == static_cast<double>(static_cast<long long>(t))) {
    std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(t));
  } else {
    std::snprintf(buf, sizeof buf, "%.17g", t);
  }
  return buf;
}

json summary_json(const MetricSummary& s) {
  json j{{"mre", s.mre}, {"n_pairs", s.n_pairs}, {"n_excluded", s.n_excluded},
         {"auc_max", s.auc_max}};
  json ra = json::object();
  for (const auto& [t, v] : s.ra) ra[threshold_key(t)] = v;
  j["ra"] = ra;
  j["mte"] = s.mte ? json(*s.mte) : json(nullptr);
  if (s.ta) {
    json ta = json::object();
    for (const auto& [t, v] : *s.ta) ta[threshold_key(t)] = v;
    j["ta"] = ta;
  } else {
    j["ta"] = nullptr;
  }
  j["auc"] = s.auc ? json(*s.auc) : json(nullptr);
  return j;
}

std::string scene_id_of(const fs::path& dir) {
  auto p = dir;
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

SparseScene load_scene(const fs::path& dir) {
  if (!fs::exists(dir)) {
    throw ParseError(ParseError::Kind::kIo, dir.string(), std::nullopt, std::nullopt,
                     "scene directory does not exist");
  }
  const auto model = locate_model_dir(dir);
  if (!model) {
    throw ParseError(ParseError::Kind::kIo, dir.string(), std::nullopt, std::nullopt,
                     "no cameras/images/points3D model found (looked in ., sparse/0, sparse)");
  }
  return read_sparse_model(*model);
}

// ---- pairs curate --------------------------------------------------------

struct CurateArgs {
  std::vector<std::string> scenes;
  std::string out, stats, verification_dir, exclusions;
};

int cmd_curate(const Globals& g, const CurateArgs& a) {
  const auto cfg = load_config(g);
  std::optional<ExclusionList> excl;
  if (!a.exclusions.empty()) excl = ExclusionList::parse(read_file(a.exclusions), a.exclusions);
  std::string lines;
  json stats = report_header(cfg, "pairs curate");
  stats["scenes"] = json::object();
  for (const auto& dir : a.scenes) {
    const auto id = scene_id_of(dir);
    const auto scene = load_scene(dir);
    std::optional<VerificationTable> ver;
    if (!a.verification_dir.empty()) {
      const auto path = fs::path(a.verification_dir) / (id + ".csv");
      ver = VerificationTable::parse_csv(read_file(path), path.string());
    }
    const auto res = curate(scene, id, cfg.curation, ver ? &*ver : nullptr, excl ? &*excl : nullptr);
    for (const auto& p : res.pairs) lines += image_pair_to_json(p) + "\n";
    const auto& s = res.stats;
    json cats = json::object();
    for (const auto& [c, n] : s.per_category) cats[std::string(to_string(c))] = n;
    stats["scenes"][id] = {{"candidates", s.candidates},
                           {"excluded", s.excluded},
                           {"scale_rejected", s.scale_rejected},
                           {"unverified", s.unverified},
                           {"verification_rejected", s.verification_rejected},
                           {"capped_out", s.capped_out},
                           {"balanced_out", s.balanced_out},
                           {"kept", res.pairs.size()},
                           {"per_category", cats}};
  }
  emit(a.out, lines);
  if (!a.stats.empty()) emit(a.stats, stats.dump(2) + "\n");
  return kExitOk;
}

// ---- eval pose -----------------------------------------------------------

struct PoseArgs {
  std::string pairs, pred, out, records;
  bool lenient = false;
};

std::vector<ImagePair> read_pairs(const std::string& path) {
  const auto text = read_file(path);
  std::vector<ImagePair> pairs;
  std::size_t pos = 0;
  std::uint64_t line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      pairs.push_back(image_pair_from_json(line));
    } catch (const std::exception& e) {
      throw ParseError(ParseError::Kind::kInvalidValue, path, std::nullopt, line_no, e.what());
    }
  }
  return pairs;
}

int cmd_eval_pose(const Globals& g, const PoseArgs& a) {
  auto cfg = load_config(g);
  if (a.lenient) cfg.pose.strict = false;
  const auto pairs = read_pairs(a.pairs);
  const auto preds = parse_predictions(read_file(a.pred));
  const auto rep = evaluate_pairs(pairs, preds, cfg.pose);
  json j = report_header(cfg, "eval pose");
  j["summary"] = json::object();
  for (const auto& [k, s] : rep.buckets) j["summary"][k] = summary_json(s);
  j["unmatched"] = rep.unmatched;
  j["unexpected"] = rep.unexpected;
  j["row_errors"] = json::array();
  for (const auto& e : rep.row_errors) j["row_errors"].push_back({{"line", e.line}, {"message", e.message}});
  emit(a.out, j.dump(2) + "\n");
  if (!a.records.empty()) {
    std::string lines;
    for (const auto& r : rep.records) {
      json rj{{"scene", r.scene_id}, {"image_a", r.image_a}, {"image_b", r.image_b},
              {"category", std::string(to_string(r.category))}, {"rot_err", r.rot_err}};
      rj["trans_err"] = r.trans_err ? json(*r.trans_err) : json(nullptr);
      if (r.excluded_reason) rj["excluded_reason"] = std::string(to_string(*r.excluded_reason));
      lines += rj.dump() + "\n";
    }
    emit(a.records, lines);
  }
  for (const auto& u : rep.unmatched) std::cerr << "evb: warning: no prediction for " << u << "\n";
  for (const auto& u : rep.unexpected) std::cerr << "evb: warning: prediction for unknown pair " << u << "\n";
  return kExitOk;
}

// ---- eval recon ----------------------------------------------------------

struct ReconArgs {
  std::string manifest, out, annotations;
};

int cmd_eval_recon(const Globals& g, const ReconArgs& a) {
  const auto cfg = load_config(g);
  const auto specs = load_recon_manifest(a.manifest);
  std::optional<AnnotationStore> store;
  if (!a.annotations.empty()) store.emplace(a.annotations);
  const auto results = evaluate_recon_scenes(specs, cfg.recon, [&](const std::string& id) {
    return store ? annotated_scale(*store, id) : std::nullopt;
  });
  json j = report_header(cfg, "eval recon");
  json scenes = json::array();
  double sums[4] = {0, 0, 0, 0};
  std::size_t ok = 0;
  for (const auto& r : results) {
    json s{{"id", r.id}, {"status", r.ok ? "ok" : "failed"}};
    if (!r.ok) {
      s["error"] = r.error;
      std::cerr << "evb: scene " << r.id << " failed: " << r.error << "\n";
    } else {
      const auto& e = *r.eval;
      s["scale_to_meters"] = r.scale_to_meters;
      s["acc_mean"] = e.summary.acc_mean;
      s["acc_median"] = e.summary.acc_median;
      s["cmp_mean"] = e.summary.cmp_mean;
      s["cmp_median"] = e.summary.cmp_median;
      s["pred_points"] = e.pred_points;
      s["gt_points"] = e.gt_points;
      s["icp"] = {{"iterations", e.icp.iterations},
                  {"initial_rmse", e.icp.initial_rmse},
                  {"final_rmse", e.icp.final_rmse},
                  {"converged", e.icp.converged},
                  {"no_correspondences", e.icp.no_correspondences}};
      s["alignment"] = {{"s", e.alignment.s},
                        {"q", [&] {
                           const auto q = matrix_to_quat(e.alignment.r);
                           return std::vector<double>{q.w(), q.x(), q.y(), q.z()};
                         }()},
                        {"t", {e.alignment.t.x(), e.alignment.t.y(), e.alignment.t.z()}}};
      s["log"] = e.log;
      sums[0] += e.summary.acc_mean;
      sums[1] += e.summary.acc_median;
      sums[2] += e.summary.cmp_mean;
      sums[3] += e.summary.cmp_median;
      ++ok;
    }
    scenes.push_back(std::move(s));
  }
  j["scenes"] = scenes;
  j["n_ok"] = ok;
  j["n_failed"] = results.size() - ok;
  if (ok > 0) {
    const double n = static_cast<double>(ok);
    j["aggregate"] = {{"acc_mean", sums[0] / n}, {"acc_median", sums[1] / n},
                      {"cmp_mean", sums[2] / n}, {"cmp_median", sums[3] / n}};
  } else {
    j["aggregate"] = nullptr;
  }
  emit(a.out, j.dump(2) + "\n");
  return ok == results.size() ? kExitOk : kExitInput;
}

// ---- eval depth ----------------------------------------------------------

struct DepthArgs {
  std::string manifest, out;
};

int cmd_eval_depth(const Globals& g, const DepthArgs& a) {
  const auto cfg = load_config(g);
  const auto rows = parse_depth_manifest(read_file(a.manifest), fs::path(a.manifest).parent_path(),
                                         a.manifest);
  const auto rep = evaluate_depth(rows, cfg.depth_median_align, cfg.threads);
  json j = report_header(cfg, "eval depth");
  json frames = json::array();
  for (const auto& f : rep.frames) {
    frames.push_back({{"scene", f.scene}, {"image", f.image}, {"scale", f.scale},
                      {"abs_rel", f.scores.abs_rel}, {"delta1", f.scores.delta1},
                      {"n_valid", f.scores.n_valid}});
  }
  j["frames"] = frames;
  j["abs_rel"] = rep.abs_rel;
  j["delta1"] = rep.delta1;
  emit(a.out, j.dump(2) + "\n");
  return kExitOk;
}

// ---- annotate serve ------------------------------------------------------

struct ServeArgs {
  std::vector<std::string> scenes;
  std::string state, bind = "127.0.0.1:8080", static_dir;
};

int cmd_serve(const Globals& g, const ServeArgs& a) {
  const auto cfg = load_config(g);
  std::vector<fs::path> roots(a.scenes.begin(), a.scenes.end());
  auto scenes = scan_scenes(roots);
  if (scenes.empty()) throw InvalidArgument("no scenes found under the given roots");
  AnnotationStore store(a.state);
  ServiceOptions opts;
  opts.seed = cfg.seed;
  if (!a.static_dir.empty()) opts.static_dir = a.static_dir;
  AnnotationApi api(std::move(scenes), store, opts);
  HttpService http(api);
  const auto colon = a.bind.rfind(':');
  if (colon == std::string::npos) throw InvalidArgument("--bind expects host:port");
  const int port = http.bind(a.bind.substr(0, colon), std::stoi(a.bind.substr(colon + 1)));
  std::cerr << "evb: serving on " << a.bind.substr(0, colon) << ":" << port << "\n";
  http.listen();
  return kExitOk;
}

// ---- loss ----------------------------------------------------------------

struct LossArgs {
  std::string input, out, mode;
};

int cmd_loss(const Globals& g, const LossArgs& a) {
  auto cfg = load_config(g);
  if (!a.mode.empty()) cfg.set("loss.translation_mode=" + a.mode, "--mode");
  const auto batch = parse_loss_batch(read_file(a.input));
  if (!batch.errors.empty()) {
    const auto& e = batch.errors.front();
    throw ParseError(ParseError::Kind::kInvalidValue, a.input, std::nullopt, e.line, e.message);
  }
  std::vector<json> rows(batch.rows.size());
  std::vector<double> totals(batch.rows.size());
  parallel_for(batch.rows.size(), cfg.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto& in = batch.rows[i];
      const auto v = total_loss(in, cfg.loss_translation_mode);
      const auto gr = rotation_loss_grad(in);
      json r{{"line", batch.lines[i]}, {"rotation", v.rotation}, {"total", v.total}};
      r["translation"] = v.translation ? json(*v.translation) : json(nullptr);
      r["grad_r1"] = {gr.d_r1.x(), gr.d_r1.y(), gr.d_r1.z()};
      r["grad_r2"] = {gr.d_r2.x(), gr.d_r2.y(), gr.d_r2.z()};
      r["nonsmooth"] = gr.nonsmooth();
      rows[i] = std::move(r);
      totals[i] = v.total;
    }
  });
  json j = report_header(cfg, "loss");
  j["rows"] = rows;
  double sum = 0.0;
  for (double t : totals) sum += t;
  j["mean_total"] = totals.empty() ? json(nullptr) : json(sum / static_cast<double>(totals.size()));
  emit(a.out, j.dump(2) + "\n");
  return kExitOk;
}

// ---- layers --------------------------------------------------------------

struct LayersArgs {
  std::string manifest, curves, selected, out, family;
  std::string q, k, csv;
  std::string grid;
  std::size_t special = 0, query = 0;
  bool image2_only = false;
};

json curve_json(const SimilarityCurve& c) {
  return {{"layers", c.layers}, {"sim", c.sim}, {"mean", c.mean()},
          {"std", c.sim.size() > 1 ? json(c.stddev()) : json(nullptr)}};
}

int cmd_layers_similarity(const Globals& g, const LayersArgs& a) {
  const auto cfg = load_config(g);
  const auto curves = layer_similarity(load_trace_manifest(a.manifest));
  json j = report_header(cfg, "layers similarity");
  j["curves"] = json::object();
  for (const auto& [kind, c] : curves) j["curves"][std::string(to_string(kind))] = curve_json(c);
  emit(a.out, j.dump(2) + "\n");
  return kExitOk;
}

int cmd_layers_select(const Globals& g, const LayersArgs& a) {
  const auto cfg = load_config(g);
  json j = report_header(cfg, "layers select");
  json sel = json::object();
  const auto family = a.family.empty() ? std::optional<ModelFamily>() : parse_model_family(a.family);
  if (family && *family != ModelFamily::kPi3) {
    const auto fixed = fixed_layer_set(*family);
    sel["frame"] = fixed;
    sel["global"] = fixed;
  } else {
    if (a.curves.empty()) throw InvalidArgument("--curves is required unless a fixed family is given");
    json cj;
    try {
      cj = json::parse(read_file(a.curves));
    } catch (const json::parse_error& e) {
      throw ParseError(ParseError::Kind::kSyntax, a.curves, e.byte, std::nullopt, e.what());
    }
    for (const auto& [kind, c] : cj.at("curves").items()) {
      SimilarityCurve curve;
      curve.layers = c.at("layers").get<std::vector<int>>();
      curve.sim = c.at("sim").get<std::vector<double>>();
      sel[kind] = select_layers(curve, cfg.layers_delta);
    }
  }
  j["family"] = family ? json(std::string(to_string(*family))) : json(nullptr);
  j["delta"] = cfg.layers_delta;
  j["selected"] = sel;
  emit(a.out, j.dump(2) + "\n");
  return kExitOk;
}

int cmd_layers_mask(const Globals&, const LayersArgs& a) {
  const auto j = json::parse(read_file(a.selected));
  std::map<LayerKind, std::vector<int>> sel;
  for (const auto& [kind, layers] : j.at("selected").items()) {
    sel[parse_layer_kind(kind)] = layers.get<std::vector<int>>();
  }
  emit(a.out, bias_mask_manifest(sel));
  return kExitOk;
}

int cmd_layers_attention(const Globals&, const LayersArgs& a) {
  AttentionInput in;
  in.q = read_tensor(a.q);
  in.k = read_tensor(a.k);
  const auto x = a.grid.find('x');
  if (x == std::string::npos) throw InvalidArgument("--grid expects HxW");
  in.grid_h = std::stoul(a.grid.substr(0, x));
  in.grid_w = std::stoul(a.grid.substr(x + 1));
  in.special_tokens = a.special;
  const auto map = cross_view_attention(in, a.query, a.image2_only);
  write_tensor(map, a.out);
  if (!a.csv.empty()) {
    std::string csv;
    char buf[64];
    for (std::size_t r = 0; r < in.grid_h; ++r) {
      for (std::size_t c = 0; c < in.grid_w; ++c) {
        std::snprintf(buf, sizeof buf, "%s%.17g", c ? "," : "", map.at(r * in.grid_w + c));
        csv += buf;
      }
      csv += "\n";
    }
    write_file_atomic(a.csv, csv);
  }
  return kExitOk;
}

// ---- sample --------------------------------------------------------------

struct SampleArgs {
  std::vector<std::string> scenes;
  std::string out, annotations;
  std::optional<double> scale;
  std::optional<std::uint32_t> start;
};

int cmd_sample(const Globals& g, const SampleArgs& a) {
  const auto cfg = load_config(g);
  std::optional<AnnotationStore> store;
  if (!a.annotations.empty()) store.emplace(a.annotations);
  json j = report_header(cfg, "sample");
  j["scenes"] = json::object();
  for (const auto& dir : a.scenes) {
    const auto id = scene_id_of(dir);
    const auto scene = load_scene(dir);
    std::optional<double> scale = a.scale;
    if (!scale && store) scale = annotated_scale(*store, id);
    const auto graph = build_covis_graph(scene, cfg.covis, scale);
    auto params = cfg.sampler;
    params.seed = cfg.seed ^ fnv1a64(id);
    params.start = a.start;
    const auto res = greedy_sample(graph, params);
    std::vector<std::string> names;
    for (auto i : res.images) names.push_back(scene.images.at(i).name);
    json s{{"images", names}, {"image_ids", res.images}, {"truncated", res.truncated},
           {"n_edges", graph.edges.size()}};
    if (res.truncated) {
      s["warning"] = res.warning;
      std::cerr << "evb: warning: " << id << ": " << res.warning << "\n";
    }
    j["scenes"][id] = s;
  }
  emit(a.out, j.dump(2) + "\n");
  return kExitOk;
}

// ---- model convert / config dump ----------------------------------------

struct ConvertArgs {
  std::string in, out, to = "binary";
};

int cmd_convert(const Globals&, const ConvertArgs& a) {
  const auto scene = load_scene(a.in);
  ModelFormat fmt;
  if (a.to == "binary") {
    fmt = ModelFormat::kBinary;
  } else if (a.to == "text") {
    fmt = ModelFormat::kText;
  } else {
    throw InvalidArgument("--to must be binary or text");
  }
  fs::create_directories(a.out);
  write_sparse_model(scene, a.out, fmt);
  return kExitOk;
}

int cmd_config_dump(const Globals& g, const std::string& out) {
  const auto cfg = load_config(g);
  emit(out, cfg.dump());
  return kExitOk;
}

int report_error(const char* kind, const std::string& msg, int code) {
  std::cerr << "evb: error[" << kind << "]: " << msg << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evb: evaluation toolkit for multi-view 3D models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", EVB_VERSION);
  Globals g;
  app.add_option("--config", g.config_file, "YAML config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "Override a config key (key=value), repeatable");
  app.add_option("--seed", g.seed, "Seed (overrides config key 'seed')");
  app.add_option("--threads", g.threads, "Worker threads (overrides config key 'threads')");
  app.fallthrough();

  std::function<int()> run;

  auto* pairs = app.add_subcommand("pairs", "Pair curation")->require_subcommand(1);
  CurateArgs ca;
  auto* curate_cmd = pairs->add_subcommand("curate", "Curate image pairs from scene models");
  curate_cmd->add_option("--scene", ca.scenes, "Scene directory (repeatable)")->required();
  curate_cmd->add_option("--out", ca.out, "Pair file (JSON Lines)");
  curate_cmd->add_option("--stats", ca.stats, "Statistics JSON");
  curate_cmd->add_option("--verification-dir", ca.verification_dir,
                         "Directory of <scene>.csv verification tables");
  curate_cmd->add_option("--exclude", ca.exclusions, "Manual exclusion list");
  curate_cmd->callback([&] { run = [&] { return cmd_curate(g, ca); }; });

  auto* eval = app.add_subcommand("eval", "Evaluation")->require_subcommand(1);
  PoseArgs pa;
  auto* pose = eval->add_subcommand("pose", "Relative pose metrics");
  pose->add_option("--pairs", pa.pairs, "Pair file")->required();
  pose->add_option("--pred", pa.pred, "Prediction file (JSON Lines)")->required();
  pose->add_option("--out", pa.out, "Report JSON");
  pose->add_option("--records", pa.records, "Per-pair error records (JSON Lines)");
  pose->add_flag("--lenient", pa.lenient, "Report unmatched pairs instead of failing");
  pose->callback([&] { run = [&] { return cmd_eval_pose(g, pa); }; });

  ReconArgs ra;
  auto* recon = eval->add_subcommand("recon", "Reconstruction ACC/CMP");
  recon->add_option("--manifest", ra.manifest, "Scene manifest JSON")->required();
  recon->add_option("--out", ra.out, "Report JSON");
  recon->add_option("--annotations", ra.annotations, "Annotation state dir (metric scales)");
  recon->callback([&] { run = [&] { return cmd_eval_recon(g, ra); }; });

  DepthArgs da;
  auto* depth = eval->add_subcommand("depth", "Monocular depth metrics");
  depth->add_option("--manifest", da.manifest, "Frame manifest CSV")->required();
  depth->add_option("--out", da.out, "Report JSON");
  depth->callback([&] { run = [&] { return cmd_eval_depth(g, da); }; });

  auto* annotate = app.add_subcommand("annotate", "Annotation service")->require_subcommand(1);
  ServeArgs sa;
  auto* serve = annotate->add_subcommand("serve", "Serve scenes to the annotator");
  serve->add_option("--scenes", sa.scenes, "Scene root (repeatable)")->required();
  serve->add_option("--state", sa.state, "State directory for annotations")->required();
  serve->add_option("--bind", sa.bind, "host:port")->capture_default_str();
  serve->add_option("--static", sa.static_dir, "Static UI assets");
  serve->callback([&] { run = [&] { return cmd_serve(g, sa); }; });

  LossArgs la;
  auto* loss = app.add_subcommand("loss", "Batch loss and gradient evaluation");
  loss->add_option("--input", la.input, "Loss rows (JSON Lines)")->required();
  loss->add_option("--out", la.out, "Report JSON");
  loss->add_option("--mode", la.mode, "Translation term: none|anchored_absolute|relative_scaled");
  loss->callback([&] { run = [&] { return cmd_loss(g, la); }; });

  auto* layers = app.add_subcommand("layers", "Backbone representation analysis")->require_subcommand(1);
  LayersArgs ya;
  auto* sim = layers->add_subcommand("similarity", "Layer input/output similarity curves");
  sim->add_option("--manifest", ya.manifest, "Trace manifest JSON")->required();
  sim->add_option("--out", ya.out, "Curves JSON");
  sim->callback([&] { run = [&] { return cmd_layers_similarity(g, ya); }; });
  auto* sel = layers->add_subcommand("select", "Select layers for fine-tuning");
  sel->add_option("--curves", ya.curves, "Curves JSON from 'layers similarity'");
  sel->add_option("--family", ya.family, "vggt|wm (fixed set) or pi3");
  sel->add_option("--out", ya.out, "Selection JSON");
  sel->callback([&] { run = [&] { return cmd_layers_select(g, ya); }; });
  auto* mask = layers->add_subcommand("mask", "Bias-parameter mask manifest");
  mask->add_option("--selected", ya.selected, "Selection JSON")->required();
  mask->add_option("--out", ya.out, "Mask manifest JSON");
  mask->callback([&] { run = [&] { return cmd_layers_mask(g, ya); }; });
  auto* attn = layers->add_subcommand("attention", "Cross-view attention map");
  attn->add_option("--q", ya.q, "Q tensor (heads x tokens x d_h)")->required();
  attn->add_option("--k", ya.k, "K tensor (heads x tokens x d_h)")->required();
  attn->add_option("--grid", ya.grid, "Patch grid HxW")->required();
  attn->add_option("--special", ya.special, "Special tokens per image");
  attn->add_option("--query", ya.query, "Image-1 patch index")->required();
  attn->add_flag("--image2-only", ya.image2_only, "Softmax over image-2 keys only");
  attn->add_option("--out", ya.out, "Map tensor (.evbt)")->required();
  attn->add_option("--csv", ya.csv, "Map as CSV");
  attn->callback([&] { run = [&] { return cmd_layers_attention(g, ya); }; });

  SampleArgs spa;
  auto* sample = app.add_subcommand("sample", "Graph-based image sampling");
  sample->add_option("--scene", spa.scenes, "Scene directory (repeatable)")->required();
  sample->add_option("--out", spa.out, "Selection JSON");
  sample->add_option("--scale", spa.scale, "Metric scale (model units to meters)");
  sample->add_option("--annotations", spa.annotations, "Annotation state dir (metric scales)");
  sample->add_option("--start", spa.start, "Start image id");
  sample->callback([&] { run = [&] { return cmd_sample(g, spa); }; });

  auto* model = app.add_subcommand("model", "COLMAP model utilities")->require_subcommand(1);
  ConvertArgs cva;
  auto* convert = model->add_subcommand("convert", "Convert between binary and text");
  convert->add_option("--in", cva.in, "Input scene/model directory")->required();
  convert->add_option("--out", cva.out, "Output directory")->required();
  convert->add_option("--to", cva.to, "binary|text")->capture_default_str();
  convert->callback([&] { run = [&] { return cmd_convert(g, cva); }; });

  auto* config = app.add_subcommand("config", "Configuration")->require_subcommand(1);
  std::string dump_out;
  auto* dump = config->add_subcommand("dump", "Print the effective configuration");
  dump->add_option("--out", dump_out, "Output file");
  dump->callback([&] { run = [&] { return cmd_config_dump(g, dump_out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    return run();
  } catch (const EvaluationError& e) {
    for (std::size_t i = 0; i < e.unmatched.size() && i < 20; ++i) {
      std::cerr << "evb: unmatched: " << e.unmatched[i] << "\n";
    }
    for (std::size_t i = 0; i < e.row_errors.size() && i < 20; ++i) {
      std::cerr << "evb: line " << e.row_errors[i].line << ": " << e.row_errors[i].message << "\n";
    }
    return report_error("evaluation", e.what(), kExitInput);
  } catch (const ParseError& e) {
    return report_error("parse", e.what(), kExitInput);
  } catch (const InvalidArgument& e) {
    return report_error("input", e.what(), kExitInput);
  } catch (const DegenerateInput& e) {
    return report_error("degenerate", e.what(), kExitInput);
  } catch (const nlohmann::json::exception& e) {
    return report_error("input", e.what(), kExitInput);
  } catch (const std::invalid_argument& e) {
    return report_error("input", e.what(), kExitInput);
  } catch (const std::out_of_range& e) {
    return report_error("input", e.what(), kExitInput);
  } catch (const fs::filesystem_error& e) {
    return report_error("io", e.what(), kExitInput);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), kExitInternal);
  }
}
