#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "evb/tensor.hpp"

namespace evb {

enum class LayerKind { kFrame, kGlobal };
std::string_view to_string(LayerKind k);
LayerKind parse_layer_kind(std::string_view s);

/// Input and output tokens (N_tokens x D) of one backbone layer.
struct LayerTensors {
  int index = 0;
  LayerKind kind = LayerKind::kFrame;
  Tensor in;
  Tensor out;
};

/// All exported layers for one image pair.
struct LayerTrace {
  std::string name;
  std::vector<LayerTensors> layers;
};

struct SimilarityCurve {
  std::vector<int> layers;  // layer index of each entry
  std::vector<double> sim;

  double mean() const;
  /// Sample standard deviation (n - 1 denominator).
  double stddev() const;
};

/// Cosine similarity of two tensors flattened to vectors.
double cosine_similarity(const Tensor& a, const Tensor& b);

/// One curve per layer kind, entries ordered by layer index. With several
/// traces the curves are averaged entry-wise; every trace must export the
/// same layers.
std::map<LayerKind, SimilarityCurve> layer_similarity(const std::vector<LayerTrace>& traces);

/// Interior local minima (strictly below the left neighbour and, after any
/// plateau, strictly below the right one; a plateau reports its leftmost
/// index). Positions index into `values`.
std::vector<std::size_t> local_minima(const std::vector<double>& values);

/// Each minimum, plus every neighbour within `delta` of a minimum whose value
/// is <= mean - stddev / 2. Returns layer indices, ascending.
std::vector<int> select_layers(const SimilarityCurve& curve, int delta = 2);

enum class ModelFamily { kVggt, kWorldMirror, kPi3 };
ModelFamily parse_model_family(std::string_view s);
std::string_view to_string(ModelFamily f);

/// {4, 11, 17, 23} for VGGT and WorldMirror. Pi3 has no fixed set; its
/// layers come from select_layers() and this throws InvalidArgument.
std::vector<int> fixed_layer_set(ModelFamily f);

/// Bias parameters updated during fine-tuning for one layer.
std::vector<std::string> bias_parameter_names(LayerKind kind, int layer);

/// JSON array of {layer, kind, parameter_names[]}.
std::string bias_mask_manifest(const std::map<LayerKind, std::vector<int>>& selected);

/// Trace manifest: {"traces": [{"name", "layers": [{"index", "kind", "in",
/// "out"}]}]} with tensor paths relative to `base`.
std::vector<LayerTrace> load_trace_manifest(const std::filesystem::path& manifest);

/// Q and K are heads x tokens x d_h. Tokens are laid out as
/// [image 1 special, image 1 patches (grid_h x grid_w), image 2 special,
/// image 2 patches].
struct AttentionInput {
  Tensor q;
  Tensor k;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t special_tokens = 0;  // per image
};

/// Softmax row of one head for one query token over all keys.
std::vector<double> attention_row(const AttentionInput& in, std::size_t head,
                                  std::size_t query_token);

/// Attention of image-1 patch `query_patch` onto the image-2 patch grid,
/// summed over heads. Softmax normalizes over all keys of both images
/// unless `image2_only` is set. Returns grid_h x grid_w (f64).
Tensor cross_view_attention(const AttentionInput& in, std::size_t query_patch,
                            bool image2_only = false);

}  // namespace evb
