#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evb/colmap_io.hpp"

namespace evb {

struct CovisEdge {
  std::uint32_t a = 0;  // a < b
  std::uint32_t b = 0;
  std::size_t shared = 0;
  double distance = 0.0;  // camera-center distance, meters when scaled
};

/// Undirected co-visibility graph over the images of a scene.
struct CovisGraph {
  std::vector<std::uint32_t> nodes;  // ascending
  std::vector<CovisEdge> edges;      // ascending by (a, b)
  std::map<std::uint32_t, Vec3> centers;  // scaled camera centers
  std::map<std::uint32_t, std::vector<std::uint32_t>> adjacency;  // sorted
  std::size_t max_degree = 0;
  double max_edge_translation = 0.0;

  std::size_t degree(std::uint32_t id) const;
  /// Connected components, each sorted, largest first (ties: smallest id).
  std::vector<std::vector<std::uint32_t>> components() const;
};

struct CovisParams {
  std::size_t min_shared = 30;
  double min_translation_m = 5.0;
};

/// Edge iff shared points >= min_shared and scaled center distance >=
/// min_translation_m. `scale_to_meters` defaults to the scene's; it is
/// required when min_translation_m > 0.
CovisGraph build_covis_graph(const SparseScene& scene, const CovisParams& params = {},
                             std::optional<double> scale_to_meters = std::nullopt);

struct SamplerParams {
  std::size_t n = 10;
  double w_conn = 0.8;
  double w_div = 0.2;
  std::uint64_t seed = 0;
  std::optional<std::uint32_t> start;  // overrides the seeded start node
};

struct SampleResult {
  std::vector<std::uint32_t> images;  // selection order
  bool truncated = false;             // frontier emptied before n picks
  std::string warning;
};

/// Greedy selection: start in the largest component, then repeatedly add
/// the unselected neighbour of the selection maximizing
///   w_conn * deg / max_deg + w_div * mean_dist_to_selected / max_edge_translation,
/// ties to the smallest id.
SampleResult greedy_sample(const CovisGraph& g, const SamplerParams& params = {});

}  // namespace evb
