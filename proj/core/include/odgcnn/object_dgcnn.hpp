#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "odgcnn/bev.hpp"
#include "odgcnn/geometry.hpp"
#include "odgcnn/params.hpp"
#include "odgcnn/tensor.hpp"

namespace odgcnn {

enum class Interaction { dgcnn, self_attention };

std::string to_string(Interaction kind);
Interaction parse_interaction(const std::string& text);

struct DgcnnConfig {
  std::size_t num_queries = 32;
  std::size_t query_dim = 64;
  std::size_t num_layers = 2;
  std::size_t neighbors = 16;
  std::size_t num_offsets = 4;
  std::size_t edge_hidden = 64;
  std::size_t interactions_per_layer = 2;
  Interaction interaction = Interaction::dgcnn;
  std::size_t attention_heads = 4;
  // Edge input concat(f_i, f_j - f_i) when true, concat(f_i, f_j) otherwise.
  bool edge_difference = true;
  std::size_t num_classes = 3;

  void validate() const;
};

// Network outputs that the losses consume, one row per query.
struct SetPrediction {
  Tensor probs;  // [M, C + 1], softmax over classes plus no-object
  Tensor boxes;  // [M, 10] box encoding (see encode_box)

  std::size_t size() const { return probs.rows(); }
  SetPrediction detach() const { return {probs.detach(), boxes.detach()}; }
};

std::vector<Detection> decode_detections(const SetPrediction& pred);

struct QueryDecode {
  Tensor reference;      // [M, 2] metres
  Tensor offsets;        // [M, 2K] metres, (dx, dy) per offset
  Tensor weight_logits;  // [M, K]
  Tensor sampled;        // [M * K, C]
  Tensor aggregated;     // [M, C]
};

struct KnnGraph {
  std::size_t k = 0;
  std::vector<std::size_t> neighbors;  // [M * k], row i starts with i

  std::size_t size() const { return k == 0 ? 0 : neighbors.size() / k; }
  std::span<const std::size_t> of(std::size_t i) const { return {neighbors.data() + i * k, k}; }
};

// Reference points (sigmoid scaled onto the grid extent), offsets and
// attention logits from the queries, all through shared linear maps named
// "<prefix>.ref", "<prefix>.offset", "<prefix>.atten".
QueryDecode decode_query(const Tensor& queries, const GridSpec& spec, const ParamRegistry& params,
                         const std::string& prefix, std::size_t num_offsets);

// Bilinear lookup of F^d at metric positions [n, 2].
Tensor bilinear_sample(const BevGrid& grid, const Tensor& points_m);

// Softmax-weighted sum of each query's samples. sampled: [M*K, C], logits: [M, K].
Tensor aggregate(const Tensor& sampled, const Tensor& logits);

KnnGraph knn_graph(const Tensor& features, std::size_t k);

Tensor edge_conv(const Tensor& features, const KnnGraph& graph, const ParamRegistry& params, const std::string& prefix,
                 bool edge_difference);

Tensor self_attention_alt(const Tensor& features, const ParamRegistry& params, const std::string& prefix,
                          std::size_t heads);

class ObjectDgcnn {
 public:
  struct LayerResult {
    Tensor queries;
    QueryDecode decode;
  };

  struct Output {
    BevGrid features;
    SetPrediction prediction;
  };

  ObjectDgcnn(BevConfig bev, DgcnnConfig head);

  void register_params(ParamRegistry& params, Rng& rng) const;

  LayerResult layer_forward(const Tensor& queries, const BevGrid& fd, const ParamRegistry& params,
                            std::size_t layer) const;
  SetPrediction predict_heads(const Tensor& queries, const QueryDecode& decode, const ParamRegistry& params) const;
  SetPrediction forward_head(const BevGrid& fd, const ParamRegistry& params) const;
  Output forward(const PillarBatch& batch, const ParamRegistry& params) const;

  const BevEncoder& encoder() const { return encoder_; }
  const DgcnnConfig& head_config() const { return head_; }
  GridSpec feature_spec() const { return encoder_.config().out_spec(); }

 private:
  BevEncoder encoder_;
  DgcnnConfig head_;
};

}  // namespace odgcnn
