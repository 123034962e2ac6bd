#include "evb/greedy_sampler.hpp"

#include <algorithm>
#include <set>

#include "evb/error.hpp"
#include "evb/io_util.hpp"

namespace evb {

std::size_t CovisGraph::degree(std::uint32_t id) const {
  const auto it = adjacency.find(id);
  return it == adjacency.end() ? 0 : it->second.size();
}

std::vector<std::vector<std::uint32_t>> CovisGraph::components() const {
  std::set<std::uint32_t> seen;
  std::vector<std::vector<std::uint32_t>> out;
  for (auto root : nodes) {
    if (seen.count(root)) continue;
    std::vector<std::uint32_t> comp{root}, stack{root};
    seen.insert(root);
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      const auto it = adjacency.find(v);
      if (it == adjacency.end()) continue;
      for (auto w : it->second) {
        if (seen.insert(w).second) {
          comp.push_back(w);
          stack.push_back(w);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& x, const auto& y) { return x.size() > y.size(); });
  return out;
}

CovisGraph build_covis_graph(const SparseScene& scene, const CovisParams& params,
                             std::optional<double> scale_to_meters) {
  if (!scale_to_meters) scale_to_meters = scene.scale_to_meters;
  if (params.min_translation_m > 0.0 && !scale_to_meters) {
    throw InvalidArgument(
        "a metric scale is required for the translation threshold; annotate the scene first");
  }
  const double s = scale_to_meters.value_or(1.0);
  if (!(s > 0.0)) throw InvalidArgument("scale_to_meters must be positive");

  CovisGraph g;
  for (const auto& [id, img] : scene.images) {
    g.nodes.push_back(id);
    g.centers[id] = img.center() * s;
    g.adjacency[id];
  }
  for (const auto& [key, count] : all_shared_points(scene)) {
    if (count < params.min_shared) continue;
    const double d = (g.centers.at(key.first) - g.centers.at(key.second)).norm();
    if (d < params.min_translation_m) continue;
    g.edges.push_back({key.first, key.second, count, d});
    g.adjacency[key.first].push_back(key.second);
    g.adjacency[key.second].push_back(key.first);
    g.max_edge_translation = std::max(g.max_edge_translation, d);
  }
  for (auto& [id, adj] : g.adjacency) {
    std::sort(adj.begin(), adj.end());
    g.max_degree = std::max(g.max_degree, adj.size());
  }
  return g;
}

SampleResult greedy_sample(const CovisGraph& g, const SamplerParams& p) {
  if (g.nodes.empty()) throw InvalidArgument("greedy_sample: empty graph");
  if (p.n == 0) throw InvalidArgument("greedy_sample: n must be >= 1");
  if (p.w_conn < 0.0 || p.w_div < 0.0) throw InvalidArgument("sampler weights must be >= 0");

  SampleResult res;
  std::uint32_t start;
  if (p.start) {
    if (!g.centers.count(*p.start)) {
      throw InvalidArgument("start image " + std::to_string(*p.start) + " is not in the graph");
    }
    start = *p.start;
  } else {
    const auto comp = g.components().front();
    SeededRng rng(p.seed);
    start = comp[rng.uniform_index(comp.size())];
  }
  res.images.push_back(start);
  std::set<std::uint32_t> selected{start};
  std::set<std::uint32_t> frontier(g.adjacency.at(start).begin(), g.adjacency.at(start).end());

  while (res.images.size() < p.n && !frontier.empty()) {
    std::uint32_t best = 0;
    double best_score = -1.0;
    for (auto c : frontier) {
      const double conn =
          g.max_degree > 0 ? static_cast<double>(g.degree(c)) / static_cast<double>(g.max_degree)
                           : 0.0;
      double dist = 0.0;
      for (auto s : res.images) dist += (g.centers.at(c) - g.centers.at(s)).norm();
      dist /= static_cast<double>(res.images.size());
      const double div = g.max_edge_translation > 0.0 ? dist / g.max_edge_translation : 0.0;
      const double score = p.w_conn * conn + p.w_div * div;
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    res.images.push_back(best);
    selected.insert(best);
    frontier.erase(best);
    for (auto w : g.adjacency.at(best)) {
      if (!selected.count(w)) frontier.insert(w);
    }
  }
  if (res.images.size() < p.n) {
    res.truncated = true;
    res.warning = "component of image " + std::to_string(start) + " exhausted after " +
                  std::to_string(res.images.size()) + " of " + std::to_string(p.n) +
                  " requested images";
  }
  return res;
}

}  // namespace evb
