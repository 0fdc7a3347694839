#include "odgcnn/object_dgcnn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "odgcnn/nn.hpp"
#include "odgcnn/ops.hpp"

namespace odgcnn {

std::string to_string(Interaction kind) { return kind == Interaction::dgcnn ? "dgcnn" : "self-attention"; }

Interaction parse_interaction(const std::string& text) {
  if (text == "dgcnn") return Interaction::dgcnn;
  if (text == "self-attention" || text == "self_attention" || text == "attention") return Interaction::self_attention;
  throw std::invalid_argument("unknown interaction kind '" + text + "'");
}

void DgcnnConfig::validate() const {
  if (num_queries < 1 || query_dim < 1 || num_layers < 1 || num_offsets < 1 || num_classes < 1) {
    throw std::invalid_argument("dgcnn config: sizes must be positive");
  }
  if (neighbors < 1 || neighbors > num_queries) {
    throw std::invalid_argument("dgcnn config: neighbors " + std::to_string(neighbors) + " outside [1, " +
                                std::to_string(num_queries) + "]");
  }
  if (interaction == Interaction::self_attention && (attention_heads == 0 || query_dim % attention_heads)) {
    throw std::invalid_argument("dgcnn config: query_dim " + std::to_string(query_dim) + " not divisible by " +
                                std::to_string(attention_heads) + " heads");
  }
}

std::vector<Detection> decode_detections(const SetPrediction& pred) {
  const std::size_t m = pred.probs.rows(), c = pred.probs.cols();
  std::vector<Detection> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    out[i].probs.assign(pred.probs.data().begin() + static_cast<long>(i * c),
                        pred.probs.data().begin() + static_cast<long>((i + 1) * c));
    out[i].box = decode_box(pred.boxes.data().subspan(i * kBoxEncodingDim, kBoxEncodingDim));
  }
  return out;
}

QueryDecode decode_query(const Tensor& queries, const GridSpec& spec, const ParamRegistry& params,
                         const std::string& prefix, std::size_t num_offsets) {
  const std::size_t m = queries.rows();
  QueryDecode out;
  const Tensor unit = ops::sigmoid(nn::linear(params, prefix + ".ref", queries));
  std::vector<double> extent(m * 2);
  for (std::size_t i = 0; i < m; ++i) {
    extent[2 * i] = spec.cell * static_cast<double>(spec.width);
    extent[2 * i + 1] = spec.cell * static_cast<double>(spec.height);
  }
  out.reference = ops::add_bias(ops::mul(unit, nn::constant({m, 2}, std::move(extent))),
                                nn::constant({2}, {spec.x_min, spec.y_min}));
  out.offsets = nn::linear(params, prefix + ".offset", queries);
  out.weight_logits = nn::linear(params, prefix + ".atten", queries);
  if (out.offsets.cols() != 2 * num_offsets || out.weight_logits.cols() != num_offsets) {
    throw std::invalid_argument("decode_query: parameter widths do not match " + std::to_string(num_offsets) + " offsets");
  }
  return out;
}

Tensor bilinear_sample(const BevGrid& grid, const Tensor& points_m) {
  const GridSpec& s = grid.spec;
  const Tensor cells = ops::add_bias(ops::scale(points_m, 1.0 / s.cell), nn::constant({2}, {-s.x_min / s.cell, -s.y_min / s.cell}));
  return ops::bilinear_sample(grid.data, s.height, s.width, cells);
}

Tensor aggregate(const Tensor& sampled, const Tensor& logits) {
  return ops::weighted_row_sum(ops::softmax_lastaxis(logits), sampled);
}

KnnGraph knn_graph(const Tensor& features, std::size_t k) {
  const std::size_t m = features.rows(), d = features.cols();
  if (k < 1 || k > m) throw std::out_of_range("knn_graph: k=" + std::to_string(k) + " outside [1, " + std::to_string(m) + "]");
  KnnGraph graph;
  graph.k = k;
  graph.neighbors.reserve(m * k);
  std::vector<double> dist(m);
  std::vector<std::size_t> order(m);
  const double* f = features.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = f[i * d + c] - f[j * d + c];
        acc += diff * diff;
      }
      dist[j] = acc;
    }
    std::iota(order.begin(), order.end(), 0);
    // Self first, then by distance with lower index on ties.
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(), [&](std::size_t a, std::size_t b) {
      if ((a == i) != (b == i)) return a == i;
      if (dist[a] != dist[b]) return dist[a] < dist[b];
      return a < b;
    });
    graph.neighbors.insert(graph.neighbors.end(), order.begin(), order.begin() + static_cast<long>(k));
  }
  return graph;
}

Tensor edge_conv(const Tensor& features, const KnnGraph& graph, const ParamRegistry& params, const std::string& prefix,
                 bool edge_difference) {
  const std::size_t m = features.rows(), k = graph.k;
  if (graph.size() != m) throw std::invalid_argument("edge_conv: graph built over a different query set");
  std::vector<std::size_t> centre(m * k), offsets(m + 1);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill_n(centre.begin() + static_cast<long>(i * k), k, i);
    offsets[i + 1] = (i + 1) * k;
  }
  const Tensor fi = ops::gather_rows(features, centre);
  const Tensor fj = ops::gather_rows(features, graph.neighbors);
  const Tensor edge = ops::concat_lastaxis(fi, edge_difference ? ops::sub(fj, fi) : fj);
  const Tensor hidden = ops::relu(nn::linear(params, prefix + ".l1", edge));
  const Tensor out = ops::relu(nn::linear(params, prefix + ".l2", hidden));
  return ops::segment_max(out, offsets);
}

Tensor self_attention_alt(const Tensor& features, const ParamRegistry& params, const std::string& prefix,
                          std::size_t heads) {
  const Tensor q = nn::linear(params, prefix + ".q", features);
  const Tensor k = nn::linear(params, prefix + ".k", features);
  const Tensor v = nn::linear(params, prefix + ".v", features);
  const std::size_t dim = q.cols();
  if (heads == 0 || dim % heads) {
    throw std::invalid_argument("self_attention_alt: dimension " + std::to_string(dim) + " not divisible by " +
                                std::to_string(heads) + " heads");
  }
  const std::size_t head_dim = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Tensor out;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t lo = h * head_dim, hi = lo + head_dim;
    const Tensor scores = ops::scale(ops::matmul(ops::slice_cols(q, lo, hi), ops::transpose(ops::slice_cols(k, lo, hi))), inv_sqrt);
    const Tensor head = ops::matmul(ops::softmax_lastaxis(scores), ops::slice_cols(v, lo, hi));
    out = out.defined() ? ops::concat_lastaxis(out, head) : head;
  }
  return out;
}

ObjectDgcnn::ObjectDgcnn(BevConfig bev, DgcnnConfig head) : encoder_(std::move(bev)), head_(head) { head_.validate(); }

void ObjectDgcnn::register_params(ParamRegistry& params, Rng& rng) const {
  encoder_.register_params(params, rng);
  const std::size_t q = head_.query_dim, c = encoder_.config().out_channels(), k = head_.num_offsets;
  std::vector<double> init(head_.num_queries * q);
  for (double& v : init) v = rng.normal();
  params.add("dgcnn.query0", Tensor::from({head_.num_queries, q}, std::move(init), true));
  for (std::size_t l = 0; l < head_.num_layers; ++l) {
    const std::string layer = "dgcnn.layer" + std::to_string(l);
    nn::register_linear(params, rng, layer + ".ref", q, 2, 0.5);
    nn::register_linear(params, rng, layer + ".offset", q, 2 * k, 0.05);
    // Spread the initial sampling pattern on a ring of radius one output cell.
    auto bias = params.get(layer + ".offset.b").mutable_data();
    const double radius = feature_spec().cell;
    for (std::size_t j = 0; j < k; ++j) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(k);
      bias[2 * j] = radius * std::cos(angle);
      bias[2 * j + 1] = radius * std::sin(angle);
    }
    nn::register_linear(params, rng, layer + ".atten", q, k, 0.1);
    std::size_t in = c;
    for (std::size_t e = 0; e < head_.interactions_per_layer; ++e) {
      if (head_.interaction == Interaction::dgcnn) {
        const std::string name = layer + ".edge" + std::to_string(e);
        nn::register_linear(params, rng, name + ".l1", 2 * in, head_.edge_hidden);
        nn::register_linear(params, rng, name + ".l2", head_.edge_hidden, q);
      } else {
        const std::string name = layer + ".attn" + std::to_string(e);
        for (const char* proj : {".q", ".k", ".v"}) nn::register_linear(params, rng, name + proj, in, q);
      }
      in = q;
    }
  }
  nn::register_linear(params, rng, "head.cls.l1", q, q);
  nn::register_linear(params, rng, "head.cls.l2", q, head_.num_classes + 1, 0.1);
  nn::register_linear(params, rng, "head.box.l1", q, q);
  nn::register_linear(params, rng, "head.box.l2", q, kBoxEncodingDim, 0.1);
}

ObjectDgcnn::LayerResult ObjectDgcnn::layer_forward(const Tensor& queries, const BevGrid& fd, const ParamRegistry& params,
                                                    std::size_t layer) const {
  const std::string prefix = "dgcnn.layer" + std::to_string(layer);
  const std::size_t m = queries.rows(), k = head_.num_offsets;
  LayerResult res;
  res.decode = decode_query(queries, fd.spec, params, prefix, k);
  std::vector<std::size_t> repeat(m * k);
  for (std::size_t i = 0; i < m * k; ++i) repeat[i] = i / k;
  const Tensor points = ops::add(ops::gather_rows(res.decode.reference, repeat), ops::reshape(res.decode.offsets, {m * k, 2}));
  res.decode.sampled = bilinear_sample(fd, points);
  res.decode.aggregated = aggregate(res.decode.sampled, res.decode.weight_logits);

  Tensor f = res.decode.aggregated;
  for (std::size_t e = 0; e < head_.interactions_per_layer; ++e) {
    if (head_.interaction == Interaction::dgcnn) {
      const KnnGraph graph = knn_graph(f, head_.neighbors);
      f = edge_conv(f, graph, params, prefix + ".edge" + std::to_string(e), head_.edge_difference);
    } else {
      f = self_attention_alt(f, params, prefix + ".attn" + std::to_string(e), head_.attention_heads);
    }
  }
  res.queries = ops::add(queries, f);
  return res;
}

SetPrediction ObjectDgcnn::predict_heads(const Tensor& queries, const QueryDecode& decode, const ParamRegistry& params) const {
  const std::size_t m = queries.rows();
  SetPrediction pred;
  pred.probs = ops::softmax_lastaxis(nn::linear(params, "head.cls.l2", ops::relu(nn::linear(params, "head.cls.l1", queries))));
  const Tensor raw = nn::linear(params, "head.box.l2", ops::relu(nn::linear(params, "head.box.l1", queries)));
  const Tensor anchor = ops::concat_lastaxis(decode.reference, Tensor::zeros({m, kBoxEncodingDim - 2}));
  pred.boxes = ops::add(raw, anchor);
  return pred;
}

SetPrediction ObjectDgcnn::forward_head(const BevGrid& fd, const ParamRegistry& params) const {
  Tensor queries = params.get("dgcnn.query0");
  QueryDecode last;
  for (std::size_t l = 0; l < head_.num_layers; ++l) {
    LayerResult res = layer_forward(queries, fd, params, l);
    queries = res.queries;
    last = std::move(res.decode);
  }
  return predict_heads(queries, last, params);
}

ObjectDgcnn::Output ObjectDgcnn::forward(const PillarBatch& batch, const ParamRegistry& params) const {
  Output out;
  out.features = encoder_.forward(batch, params);
  out.prediction = forward_head(out.features, params);
  return out;
}

}  // namespace odgcnn
