#include "evb/repr_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "evb/error.hpp"
#include "evb/io_util.hpp"
#include "json.hpp"

namespace evb {

using nlohmann::json;

std::string_view to_string(LayerKind k) { return k == LayerKind::kFrame ? "frame" : "global"; }

LayerKind parse_layer_kind(std::string_view s) {
  if (s == "frame") return LayerKind::kFrame;
  if (s == "global") return LayerKind::kGlobal;
  throw InvalidArgument("unknown layer kind '" + std::string(s) + "' (frame|global)");
}

double SimilarityCurve::mean() const {
  if (sim.empty()) throw InvalidArgument("empty similarity curve");
  double s = 0.0;
  for (double v : sim) s += v;
  return s / static_cast<double>(sim.size());
}

double SimilarityCurve::stddev() const {
  if (sim.size() < 2) throw InvalidArgument("stddev needs at least 2 values");
  const double m = mean();
  double ss = 0.0;
  for (double v : sim) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(sim.size() - 1));
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw InvalidArgument("cosine_similarity: shapes differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  // Scale-free accumulation guards against overflow on large activations.
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa = std::max(sa, std::abs(a.at(i)));
    sb = std::max(sb, std::abs(b.at(i)));
  }
  if (!(sa > 0.0) || !(sb > 0.0)) throw DegenerateInput("cosine_similarity: zero-norm tensor");
  if (!std::isfinite(sa) || !std::isfinite(sb)) {
    throw DegenerateInput("cosine_similarity: non-finite tensor");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.at(i) / sa, y = b.at(i) / sb;
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::map<LayerKind, SimilarityCurve> layer_similarity(const std::vector<LayerTrace>& traces) {
  if (traces.empty()) throw InvalidArgument("layer_similarity: no traces");
  std::map<LayerKind, std::map<int, double>> sums;
  std::set<std::pair<LayerKind, int>> reference;
  for (std::size_t t = 0; t < traces.size(); ++t) {
    std::set<std::pair<LayerKind, int>> seen;
    for (const auto& l : traces[t].layers) {
      if (!seen.insert({l.kind, l.index}).second) {
        throw InvalidArgument("trace '" + traces[t].name + "' lists " +
                              std::string(to_string(l.kind)) + " layer " +
                              std::to_string(l.index) + " twice");
      }
      double s;
      try {
        s = cosine_similarity(l.in, l.out);
      } catch (const Error& e) {
        throw DegenerateInput("trace '" + traces[t].name + "' " + std::string(to_string(l.kind)) +
                              " layer " + std::to_string(l.index) + ": " + e.what());
      }
      sums[l.kind][l.index] += s;
    }
    if (t == 0) {
      reference = seen;
    } else if (seen != reference) {
      throw InvalidArgument("trace '" + traces[t].name + "' exports a different layer set");
    }
  }
  std::map<LayerKind, SimilarityCurve> out;
  for (const auto& [kind, m] : sums) {
    auto& c = out[kind];
    for (const auto& [idx, s] : m) {
      c.layers.push_back(idx);
      c.sim.push_back(s / static_cast<double>(traces.size()));
    }
  }
  return out;
}

std::vector<std::size_t> local_minima(const std::vector<double>& v) {
  std::vector<std::size_t> out;
  const std::size_t n = v.size();
  std::size_t i = 1;
  while (i + 1 < n) {
    if (v[i] < v[i - 1]) {
      std::size_t j = i;
      while (j + 1 < n && v[j + 1] == v[i]) ++j;
      if (j + 1 < n && v[j + 1] > v[i]) out.push_back(i);
      i = j + 1;
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<int> select_layers(const SimilarityCurve& curve, int delta) {
  if (curve.sim.size() < 3) throw InvalidArgument("select_layers needs at least 3 layers");
  if (curve.layers.size() != curve.sim.size()) {
    throw InvalidArgument("select_layers: layer index list does not match the curve");
  }
  if (delta < 0) throw InvalidArgument("delta must be >= 0");
  const double thr = curve.mean() - curve.stddev() / 2.0;
  const auto n = static_cast<std::ptrdiff_t>(curve.sim.size());
  std::set<std::size_t> picked;
  for (auto m : local_minima(curve.sim)) {
    picked.insert(m);
    for (int k = 1; k <= delta; ++k) {
      for (const std::ptrdiff_t j : {static_cast<std::ptrdiff_t>(m) - k,
                                     static_cast<std::ptrdiff_t>(m) + k}) {
        if (j >= 0 && j < n && curve.sim[j] <= thr) picked.insert(static_cast<std::size_t>(j));
      }
    }
  }
  std::vector<int> out;
  for (auto p : picked) out.push_back(curve.layers[p]);
  std::sort(out.begin(), out.end());
  return out;
}

ModelFamily parse_model_family(std::string_view s) {
  if (s == "vggt") return ModelFamily::kVggt;
  if (s == "wm" || s == "worldmirror") return ModelFamily::kWorldMirror;
  if (s == "pi3") return ModelFamily::kPi3;
  throw InvalidArgument("unknown model family '" + std::string(s) + "' (vggt|wm|pi3)");
}

std::string_view to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::kVggt: return "vggt";
    case ModelFamily::kWorldMirror: return "wm";
    case ModelFamily::kPi3: return "pi3";
  }
  return "?";
}

std::vector<int> fixed_layer_set(ModelFamily f) {
  if (f == ModelFamily::kPi3) {
    throw InvalidArgument("pi3 has no fixed layer set; derive it with select_layers");
  }
  return {4, 11, 17, 23};
}

std::vector<std::string> bias_parameter_names(LayerKind kind, int layer) {
  const std::string p = std::string(kind == LayerKind::kFrame ? "frame_blocks." : "global_blocks.") +
                        std::to_string(layer) + ".";
  return {p + "attn.qkv.bias", p + "attn.proj.bias", p + "mlp.fc1.bias", p + "mlp.fc2.bias"};
}

std::string bias_mask_manifest(const std::map<LayerKind, std::vector<int>>& selected) {
  json arr = json::array();
  for (const auto& [kind, layers] : selected) {
    std::vector<int> sorted = layers;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    for (int l : sorted) {
      arr.push_back({{"layer", l},
                     {"kind", std::string(to_string(kind))},
                     {"parameter_names", bias_parameter_names(kind, l)}});
    }
  }
  return arr.dump(2) + "\n";
}

std::vector<LayerTrace> load_trace_manifest(const std::filesystem::path& manifest) {
  const auto base = manifest.parent_path();
  json j;
  try {
    j = json::parse(read_file(manifest));
  } catch (const json::parse_error& e) {
    throw ParseError(ParseError::Kind::kSyntax, manifest.string(), e.byte, std::nullopt, e.what());
  }
  std::vector<LayerTrace> out;
  try {
    for (const auto& t : j.at("traces")) {
      LayerTrace tr;
      tr.name = t.value("name", "trace" + std::to_string(out.size()));
      for (const auto& l : t.at("layers")) {
        LayerTensors lt;
        lt.index = l.at("index").get<int>();
        lt.kind = parse_layer_kind(l.at("kind").get<std::string>());
        auto resolve = [&](const std::string& p) {
          std::filesystem::path path(p);
          return path.is_absolute() ? path : base / path;
        };
        lt.in = read_tensor(resolve(l.at("in").get<std::string>()));
        lt.out = read_tensor(resolve(l.at("out").get<std::string>()));
        tr.layers.push_back(std::move(lt));
      }
      out.push_back(std::move(tr));
    }
  } catch (const json::exception& e) {
    throw ParseError(ParseError::Kind::kInvalidValue, manifest.string(), std::nullopt,
                     std::nullopt, e.what());
  }
  return out;
}

namespace {

struct AttnDims {
  std::size_t heads, tokens, dh, patches, per_image;
};

AttnDims check_attention(const AttentionInput& in) {
  if (in.q.rank() != 3 || in.k.rank() != 3) throw InvalidArgument("Q and K must be heads x tokens x d_h");
  if (in.q.dim(0) != in.k.dim(0) || in.q.dim(2) != in.k.dim(2)) {
    throw InvalidArgument("Q and K disagree on head count or head dimension");
  }
  AttnDims d;
  d.heads = in.q.dim(0);
  d.tokens = in.k.dim(1);
  d.dh = in.q.dim(2);
  d.patches = in.grid_h * in.grid_w;
  d.per_image = in.special_tokens + d.patches;
  if (d.heads == 0 || d.dh == 0 || d.patches == 0) throw InvalidArgument("empty attention input");
  if (d.tokens != 2 * d.per_image) {
    throw InvalidArgument("K has " + std::to_string(d.tokens) + " tokens, expected 2 x (" +
                          std::to_string(in.special_tokens) + " + " + std::to_string(d.patches) +
                          ")");
  }
  if (in.q.dim(1) != d.tokens && in.q.dim(1) != d.per_image) {
    throw InvalidArgument("Q must cover image 1 or both images");
  }
  return d;
}

std::vector<double> softmax_row(const AttentionInput& in, const AttnDims& d, std::size_t head,
                                std::size_t query, std::size_t key_begin) {
  const double inv = 1.0 / std::sqrt(static_cast<double>(d.dh));
  const std::size_t qoff = (head * in.q.dim(1) + query) * d.dh;
  std::vector<double> logits(d.tokens - key_begin);
  for (std::size_t k = key_begin; k < d.tokens; ++k) {
    const std::size_t koff = (head * d.tokens + k) * d.dh;
    double s = 0.0;
    for (std::size_t c = 0; c < d.dh; ++c) s += in.q.at(qoff + c) * in.k.at(koff + c);
    logits[k - key_begin] = s * inv;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (auto& l : logits) {
    l = std::exp(l - mx);
    z += l;
  }
  for (auto& l : logits) l /= z;
  return logits;
}

}  // namespace

std::vector<double> attention_row(const AttentionInput& in, std::size_t head,
                                  std::size_t query_token) {
  const auto d = check_attention(in);
  if (head >= d.heads) throw InvalidArgument("head index out of range");
  if (query_token >= in.q.dim(1)) throw InvalidArgument("query token out of range");
  return softmax_row(in, d, head, query_token, 0);
}

Tensor cross_view_attention(const AttentionInput& in, std::size_t query_patch, bool image2_only) {
  const auto d = check_attention(in);
  if (query_patch >= d.patches) {
    throw InvalidArgument("query index " + std::to_string(query_patch) + " outside image 1's " +
                          std::to_string(d.patches) + " patch tokens");
  }
  const std::size_t query = in.special_tokens + query_patch;
  const std::size_t key_begin = image2_only ? d.per_image : 0;
  const std::size_t img2_patch0 = d.per_image + in.special_tokens - key_begin;
  std::vector<double> map(d.patches, 0.0);
  for (std::size_t h = 0; h < d.heads; ++h) {
    const auto row = softmax_row(in, d, h, query, key_begin);
    for (std::size_t p = 0; p < d.patches; ++p) map[p] += row[img2_patch0 + p];
  }
  return Tensor({in.grid_h, in.grid_w}, std::move(map));
}

}  // namespace evb
