#include "affect/fusionnet.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "affect/error.hpp"
#include "affect/hashing.hpp"
#include "affect/text.hpp"

namespace affect::fusion {

nn::RowVector image_to_tensor(const RgbImage& crop) {
  if (crop.width != kImageSize || crop.height != kImageSize) {
    throw ShapeError("expected a " + std::to_string(kImageSize) + "x" + std::to_string(kImageSize) + " crop, got " +
                     std::to_string(crop.width) + "x" + std::to_string(crop.height));
  }
  nn::RowVector t(kImageFeatures);
  constexpr int plane = kImageSize * kImageSize;
  for (int y = 0; y < kImageSize; ++y)
    for (int x = 0; x < kImageSize; ++x)
      for (int c = 0; c < 3; ++c) {
        t(c * plane + y * kImageSize + x) = (crop.at(x, y, c) / 255.0 - kImageMean[c]) / kImageStd[c];
      }
  return t;
}

Matrix images_to_batch(std::span<const RgbImage> crops) {
  Matrix out(static_cast<Eigen::Index>(crops.size()), kImageFeatures);
  for (std::size_t i = 0; i < crops.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = image_to_tensor(crops[i]);
  return out;
}

Matrix node_features(const facegraph::FaceGraph& graph) { return graph.landmarks.coords(); }

// ---------------------------------------------------------------------------

AttentionBlock::AttentionBlock(const std::string& name, int in, int bottleneck)
    : fc1(name + ".fc1", in, bottleneck, nn::ParamGroup::head),
      fc2(name + ".fc2", bottleneck, in, nn::ParamGroup::head),
      norm(name + ".norm", in, nn::ParamGroup::head) {}

void AttentionBlock::init(std::uint64_t seed) {
  fc1.init(nn::derive_seed(seed, fc1.weight.name));
  fc2.init(nn::derive_seed(seed, fc2.weight.name));
}

Matrix AttentionBlock::weights(const Matrix& x) const {
  if (x.cols() != fc1.in()) {
    throw ShapeError("attention block of width " + std::to_string(fc1.in()) + " got input width " +
                     std::to_string(x.cols()));
  }
  return nn::sigmoid(fc2.forward(nn::relu(fc1.forward(x))));
}

Matrix AttentionBlock::refine_prenorm(const Matrix& x) const { return weights(x).cwiseProduct(x); }

Matrix AttentionBlock::forward(const Matrix& x, Cache* cache) const {
  if (!cache) return norm.forward(refine_prenorm(x));
  if (x.cols() != fc1.in()) {
    throw ShapeError("attention block of width " + std::to_string(fc1.in()) + " got input width " +
                     std::to_string(x.cols()));
  }
  cache->x = x;
  cache->hidden_pre = fc1.forward(x);
  cache->hidden = nn::relu(cache->hidden_pre);
  cache->weights = nn::sigmoid(fc2.forward(cache->hidden));
  cache->refined = cache->weights.cwiseProduct(x);
  return norm.forward(cache->refined, &cache->norm);
}

Matrix AttentionBlock::backward(const Cache& c, const Matrix& dy) {
  const Matrix dr = norm.backward(c.norm, dy);
  Matrix dx = dr.cwiseProduct(c.weights);
  const Matrix dz2 = (dr.array() * c.x.array() * c.weights.array() * (1.0 - c.weights.array())).matrix();
  const Matrix dh = fc2.backward(c.hidden, dz2);
  dx += fc1.backward(c.x, nn::relu_backward(c.hidden_pre, dh));
  return dx;
}

std::vector<nn::Parameter*> AttentionBlock::parameters() {
  return {&fc1.weight, &fc1.bias, &fc2.weight, &fc2.bias, &norm.weight, &norm.bias};
}

// ---------------------------------------------------------------------------

NormalizedAdjacency::NormalizedAdjacency(const facegraph::GraphTopology& graph) : n_(graph.num_nodes) {
  graph.validate();
  const auto deg = graph.degrees();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(n_ + 2 * graph.edges.size());
  auto weight = [&](std::size_t i, std::size_t j) {
    return 1.0 / std::sqrt(static_cast<double>((deg[i] + 1) * (deg[j] + 1)));
  };
  for (std::size_t i = 0; i < n_; ++i) triplets.emplace_back(i, i, weight(i, i));
  for (const auto& e : graph.edges) {
    triplets.emplace_back(e.i, e.j, weight(e.i, e.j));
    triplets.emplace_back(e.j, e.i, weight(e.i, e.j));
  }
  p_.resize(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
  p_.setFromTriplets(triplets.begin(), triplets.end());
}

Matrix NormalizedAdjacency::apply(const Matrix& h) const {
  const auto n = static_cast<Eigen::Index>(n_);
  if (n == 0 || h.rows() % n != 0) {
    throw ShapeError("node feature rows (" + std::to_string(h.rows()) + ") are not a multiple of the node count (" +
                     std::to_string(n_) + ")");
  }
  Matrix out(h.rows(), h.cols());
  for (Eigen::Index k = 0; k < h.rows() / n; ++k) out.middleRows(k * n, n) = p_ * h.middleRows(k * n, n);
  return out;
}

Matrix NormalizedAdjacency::dense() const { return Matrix(p_); }

GraphConvLayer::GraphConvLayer(const std::string& name, int in, int out)
    : weight(name + ".weight", Matrix::Zero(in, out), nn::ParamGroup::head),
      bias(name + ".bias", Matrix::Zero(1, out), nn::ParamGroup::head) {}

void GraphConvLayer::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double bound = std::sqrt(6.0 / static_cast<double>(weight.value.rows() + weight.value.cols()));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = u(rng);
  bias.value.setZero();
}

Matrix GraphConvLayer::forward(const NormalizedAdjacency& p, const Matrix& h, Cache* cache) const {
  if (h.cols() != weight.value.rows()) {
    throw ShapeError("graph convolution expects width " + std::to_string(weight.value.rows()) + ", got " +
                     std::to_string(h.cols()));
  }
  Matrix ph = p.apply(h);
  Matrix out = ph * weight.value;
  out.rowwise() += bias.value.row(0);
  if (cache) cache->propagated = std::move(ph);
  return out;
}

Matrix GraphConvLayer::backward(const NormalizedAdjacency& p, const Cache& cache, const Matrix& dy, bool need_dx) {
  if (!weight.frozen) weight.grad.noalias() += cache.propagated.transpose() * dy;
  if (!bias.frozen) bias.grad.row(0) += dy.colwise().sum();
  if (!need_dx) return {};
  return p.apply(dy * weight.value.transpose());
}

GraphConvStack::GraphConvStack(int in, int hidden, int out)
    : layers{GraphConvLayer("gcn.conv1", in, hidden), GraphConvLayer("gcn.conv2", hidden, out),
             GraphConvLayer("gcn.conv3", out, out)} {}

void GraphConvStack::init(std::uint64_t seed) {
  for (auto& l : layers) l.init(nn::derive_seed(seed, l.weight.name));
}

Matrix GraphConvStack::forward(const NormalizedAdjacency& p, const Matrix& h, Cache* cache) const {
  Matrix x = h;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Matrix pre = layers[i].forward(p, x, cache ? &cache->layers[i] : nullptr);
    if (i + 1 == layers.size()) return pre;
    x = nn::relu(pre);
    if (cache) cache->pre_activation[i] = std::move(pre);
  }
  return x;
}

void GraphConvStack::backward(const NormalizedAdjacency& p, const Cache& cache, const Matrix& dy) {
  Matrix d = layers[2].backward(p, cache.layers[2], dy, true);
  d = layers[1].backward(p, cache.layers[1], nn::relu_backward(cache.pre_activation[1], d), true);
  layers[0].backward(p, cache.layers[0], nn::relu_backward(cache.pre_activation[0], d), false);
}

std::vector<nn::Parameter*> GraphConvStack::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

Matrix mean_pool(const Matrix& stacked, std::size_t nodes) {
  const auto n = static_cast<Eigen::Index>(nodes);
  if (n == 0 || stacked.rows() % n != 0) throw ShapeError("mean_pool: row count is not a multiple of the node count");
  Matrix out(stacked.rows() / n, stacked.cols());
  for (Eigen::Index k = 0; k < out.rows(); ++k) out.row(k) = stacked.middleRows(k * n, n).colwise().mean();
  return out;
}

// ---------------------------------------------------------------------------

ClassifierHead::ClassifierHead(double dropout1, double dropout2)
    : l1("head.fc1", kFusedWidth, 512, nn::ParamGroup::head),
      l2("head.fc2", 512, 256, nn::ParamGroup::head),
      l3("head.fc3", 256, static_cast<int>(kNumEmotions), nn::ParamGroup::head),
      n1("head.norm1", 512, nn::ParamGroup::head),
      n2("head.norm2", 256, nn::ParamGroup::head),
      p1(dropout1),
      p2(dropout2) {
  std::size_t count = 0;
  for (auto* p : parameters()) count += static_cast<std::size_t>(p->size());
  if (count != expected_parameter_count()) {
    throw Error("classifier head has " + std::to_string(count) + " parameters, expected " +
                std::to_string(expected_parameter_count()));
  }
}

std::size_t ClassifierHead::expected_parameter_count() {
  return (2176 * 512 + 512) + (512 * 256 + 256) + (256 * 7 + 7) + 2 * (512 + 256);
}

void ClassifierHead::init(std::uint64_t seed) {
  for (auto* l : {&l1, &l2, &l3}) l->init(nn::derive_seed(seed, l->weight.name));
}

Matrix ClassifierHead::forward(const Matrix& fused, nn::Mode mode, std::uint64_t dropout_seed, Cache* cache) const {
  if (fused.cols() != kFusedWidth) {
    throw ShapeError("classifier head expects width " + std::to_string(kFusedWidth) + ", got " +
                     std::to_string(fused.cols()));
  }
  const bool train = mode == nn::Mode::train;
  Cache local;
  Cache& c = cache ? *cache : local;
  c.x = fused;
  c.z1 = l1.forward(fused);
  c.y1 = n1.forward(c.z1, &c.n1);
  c.d1 = nn::relu(c.y1);
  if (train) {
    c.mask1 = nn::dropout_mask(c.d1.rows(), c.d1.cols(), p1, nn::derive_seed(dropout_seed, "head.dropout1"));
    c.d1.array() *= c.mask1.array();
  }
  c.z2 = l2.forward(c.d1);
  c.y2 = n2.forward(c.z2, &c.n2);
  c.d2 = nn::relu(c.y2);
  if (train) {
    c.mask2 = nn::dropout_mask(c.d2.rows(), c.d2.cols(), p2, nn::derive_seed(dropout_seed, "head.dropout2"));
    c.d2.array() *= c.mask2.array();
  }
  return l3.forward(c.d2);
}

Matrix ClassifierHead::backward(const Cache& c, const Matrix& dlogits) {
  Matrix d = l3.backward(c.d2, dlogits);
  if (c.mask2.size()) d.array() *= c.mask2.array();
  d = n2.backward(c.n2, nn::relu_backward(c.y2, d));
  d = l2.backward(c.d1, d);
  if (c.mask1.size()) d.array() *= c.mask1.array();
  d = n1.backward(c.n1, nn::relu_backward(c.y1, d));
  return l1.backward(c.x, d);
}

std::vector<nn::Parameter*> ClassifierHead::parameters() {
  return {&l1.weight, &l1.bias, &n1.weight, &n1.bias, &l2.weight, &l2.bias,
          &n2.weight, &n2.bias, &l3.weight, &l3.bias};
}

// ---------------------------------------------------------------------------

void FusionConfig::validate() const {
  if (gcn_hidden <= 0 || cnn_bottleneck <= 0 || gcn_bottleneck <= 0) throw ConfigError("layer widths must be positive");
  for (double p : {dropout1, dropout2})
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probabilities must lie in [0, 1)");
}

std::string FusionConfig::canonical() const {
  std::ostringstream s;
  s << "gcn.hidden=" << gcn_hidden << "\n"
    << "attn.cnn_bottleneck=" << cnn_bottleneck << "\n"
    << "attn.gcn_bottleneck=" << gcn_bottleneck << "\n"
    << "head.dropout1=" << text::format_double(dropout1) << "\n"
    << "head.dropout2=" << text::format_double(dropout2) << "\n"
    << "backbone.kind=" << backbone_kind << "\n"
    << "backbone.frozen_prefix=" << frozen_prefix << "\n";
  return s.str();
}

std::string FusionConfig::hash() const { return short_hash(canonical()); }

FusionNet::FusionNet(FusionConfig cfg, std::shared_ptr<const facegraph::FaceTopology> topology)
    : cfg_(std::move(cfg)),
      topology_(std::move(topology)),
      cnn_attn_("attn.cnn", kBackboneWidth, cfg_.cnn_bottleneck),
      gcn_(kGcnInput, cfg_.gcn_hidden, kGcnWidth),
      gcn_attn_("attn.gcn", kGcnWidth, cfg_.gcn_bottleneck),
      head_(cfg_.dropout1, cfg_.dropout2) {
  cfg_.validate();
  if (!topology_) throw ConfigError("fusion network needs a face topology");
  adjacency_ = std::make_shared<const NormalizedAdjacency>(topology_->graph);
  backbone_ = make_backbone(cfg_.backbone_kind, cfg_.seed);
  backbone_->freeze_prefix(cfg_.frozen_prefix);
  cnn_attn_.init(nn::derive_seed(cfg_.seed, "attn.cnn"));
  gcn_.init(nn::derive_seed(cfg_.seed, "gcn"));
  gcn_attn_.init(nn::derive_seed(cfg_.seed, "attn.gcn"));
  head_.init(nn::derive_seed(cfg_.seed, "head"));
}

FusionNet::FusionNet(const FusionNet& o)
    : cfg_(o.cfg_),
      topology_(o.topology_),
      adjacency_(o.adjacency_),
      backbone_(o.backbone_->clone()),
      cnn_attn_(o.cnn_attn_),
      gcn_(o.gcn_),
      gcn_attn_(o.gcn_attn_),
      head_(o.head_) {}

FusionNet& FusionNet::operator=(const FusionNet& o) {
  if (this != &o) *this = FusionNet(o);
  return *this;
}

FusionNet::FusionNet(FusionNet&&) noexcept = default;
FusionNet& FusionNet::operator=(FusionNet&&) noexcept = default;
FusionNet::~FusionNet() = default;

std::size_t FusionNet::backbone_tensor_count() const {
  return const_cast<Backbone&>(*backbone_).parameters().size();
}

std::vector<nn::Parameter*> FusionNet::parameters() {
  auto out = backbone_->parameters();
  for (auto&& part : {cnn_attn_.parameters(), gcn_.parameters(), gcn_attn_.parameters(), head_.parameters()}) {
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<const nn::Parameter*> FusionNet::parameters() const {
  auto mut = const_cast<FusionNet&>(*this).parameters();
  return {mut.begin(), mut.end()};
}

void FusionNet::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

ForwardResult FusionNet::forward(const Matrix& images, const std::vector<Matrix>& nodes, const ForwardOptions& options,
                                 Tape* tape) const {
  const auto batch = images.rows();
  if (static_cast<std::size_t>(batch) != nodes.size()) {
    throw ShapeError("batch mismatch: " + std::to_string(batch) + " images, " + std::to_string(nodes.size()) +
                     " graphs");
  }
  ForwardResult r;

  Matrix features = backbone_->forward(images, tape ? &tape->backbone : nullptr);
  if (features.cols() != kBackboneWidth) throw ShapeError("backbone output width is not 2048");
  r.f_cnn_attn = cnn_attn_.forward(features, tape ? &tape->cnn_attn : nullptr);

  const auto n = static_cast<Eigen::Index>(adjacency_->num_nodes());
  std::vector<bool> fallback(static_cast<std::size_t>(batch), false);
  Matrix stacked = Matrix::Zero(batch * n, kGcnInput);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto& x = nodes[static_cast<std::size_t>(b)];
    if (x.rows() != n || x.cols() != kGcnInput || !x.allFinite()) {
      fallback[b] = true;
      continue;
    }
    stacked.middleRows(b * n, n) = x;
  }
  GraphConvStack::Cache local;
  GraphConvStack::Cache* gcache = tape ? &tape->gcn : &local;
  Matrix node_out;
  for (;;) {
    node_out = gcn_.forward(*adjacency_, stacked, gcache);
    bool changed = false;
    for (Eigen::Index b = 0; b < batch; ++b) {
      if (fallback[b] || node_out.middleRows(b * n, n).allFinite()) continue;
      fallback[b] = true;
      stacked.middleRows(b * n, n).setZero();
      changed = true;
    }
    if (!changed) break;
  }
  r.f_gcn = gcn_attn_.forward(mean_pool(node_out, adjacency_->num_nodes()), tape ? &tape->gcn_attn : nullptr);
  for (Eigen::Index b = 0; b < batch; ++b) {
    if (!fallback[b] && !r.f_gcn.row(b).allFinite()) fallback[b] = true;
    if (fallback[b]) {
      r.f_gcn.row(b).setZero();
      ++r.fallback_count;
    }
  }

  r.f_fused.resize(batch, kFusedWidth);
  r.f_fused << r.f_cnn_attn, r.f_gcn;
  r.logits = head_.forward(r.f_fused, options.mode, options.dropout_seed, tape ? &tape->head : nullptr);
  r.gcn_fallback = fallback;
  if (tape) tape->fallback = std::move(fallback);
  return r;
}

void FusionNet::backward(const Tape& tape, const Matrix& dlogits) {
  const Matrix dfused = head_.backward(tape.head, dlogits);
  Matrix dgcn = dfused.rightCols(kGcnWidth);
  for (std::size_t b = 0; b < tape.fallback.size(); ++b)
    if (tape.fallback[b]) dgcn.row(static_cast<Eigen::Index>(b)).setZero();
  const Matrix dpooled = gcn_attn_.backward(tape.gcn_attn, dgcn);
  const auto n = static_cast<Eigen::Index>(adjacency_->num_nodes());
  Matrix dnodes(dpooled.rows() * n, kGcnWidth);
  for (Eigen::Index b = 0; b < dpooled.rows(); ++b)
    dnodes.middleRows(b * n, n).rowwise() = dpooled.row(b) / static_cast<double>(n);
  gcn_.backward(*adjacency_, tape.gcn, dnodes);

  const Matrix dfeatures = cnn_attn_.backward(tape.cnn_attn, dfused.leftCols(kBackboneWidth));
  backbone_->backward(*tape.backbone, dfeatures);
}

std::vector<EmotionDistribution> FusionNet::predict(const Matrix& images, const std::vector<Matrix>& nodes) const {
  const Matrix probs = nn::softmax_rows(forward(images, nodes, {}).logits);
  std::vector<EmotionDistribution> out;
  out.reserve(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    EmotionDistribution::Array a{};
    for (std::size_t k = 0; k < kNumEmotions; ++k) a[k] = probs(r, static_cast<Eigen::Index>(k));
    out.emplace_back(a);
  }
  return out;
}

}  // namespace affect::fusion
