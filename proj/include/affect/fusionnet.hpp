#pragma once

#include <Eigen/SparseCore>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "affect/emotion.hpp"
#include "affect/facegraph.hpp"
#include "affect/image.hpp"
#include "affect/nn.hpp"

namespace affect::fusion {

using nn::Matrix;

inline constexpr int kImageSize = 224;
inline constexpr int kImageFeatures = 3 * kImageSize * kImageSize;
inline constexpr int kBackboneWidth = 2048;
inline constexpr int kGcnInput = 3;
inline constexpr int kGcnWidth = 128;
inline constexpr int kFusedWidth = kBackboneWidth + kGcnWidth;

// Per-channel RGB normalization applied before the backbone (ImageNet statistics).
inline constexpr std::array<double, 3> kImageMean = {0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kImageStd = {0.229, 0.224, 0.225};

/// A 224x224 crop as one row: channel-major (C, H, W), scaled to [0, 1] and normalized.
nn::RowVector image_to_tensor(const RgbImage& crop);
Matrix images_to_batch(std::span<const RgbImage> crops);

/// Landmark coordinates as a 468x3 node-feature matrix.
Matrix node_features(const facegraph::FaceGraph& graph);

// ---------------------------------------------------------------------------

/// Squeeze-style reweighting: a = sigmoid(W2 relu(W1 x)), refined = a * x,
/// output = LayerNorm(refined).
class AttentionBlock {
 public:
  struct Cache {
    Matrix x, hidden_pre, hidden, weights, refined;
    nn::LayerNorm::Cache norm;
  };

  AttentionBlock() = default;
  AttentionBlock(const std::string& name, int in, int bottleneck);
  void init(std::uint64_t seed);

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  /// Attention weights alone, each in (0, 1).
  Matrix weights(const Matrix& x) const;
  /// weights(x) * x, before the normalization.
  Matrix refine_prenorm(const Matrix& x) const;
  Matrix backward(const Cache& cache, const Matrix& dy);

  std::vector<nn::Parameter*> parameters();
  int width() const { return fc1.in(); }

  nn::Linear fc1;
  nn::Linear fc2;
  nn::LayerNorm norm;
};

/// D^-1/2 (A + I) D^-1/2 for an undirected graph, stored sparse.
class NormalizedAdjacency {
 public:
  explicit NormalizedAdjacency(const facegraph::GraphTopology& graph);

  std::size_t num_nodes() const { return n_; }
  /// Applies the operator to each consecutive num_nodes-row block of `h`.
  Matrix apply(const Matrix& h) const;
  Matrix dense() const;

 private:
  std::size_t n_ = 0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> p_;
};

/// H' = P H W + b with W stored in x out.
class GraphConvLayer {
 public:
  struct Cache {
    Matrix propagated;  // P H
  };

  GraphConvLayer() = default;
  GraphConvLayer(const std::string& name, int in, int out);
  /// Glorot-uniform weight, zero bias.
  void init(std::uint64_t seed);

  Matrix forward(const NormalizedAdjacency& p, const Matrix& h, Cache* cache = nullptr) const;
  Matrix backward(const NormalizedAdjacency& p, const Cache& cache, const Matrix& dy, bool need_dx);

  nn::Parameter weight;
  nn::Parameter bias;
};

/// Three graph convolutions, ReLU after the first two.
class GraphConvStack {
 public:
  struct Cache {
    std::array<GraphConvLayer::Cache, 3> layers;
    std::array<Matrix, 2> pre_activation;
  };

  GraphConvStack() = default;
  GraphConvStack(int in, int hidden, int out);
  void init(std::uint64_t seed);

  Matrix forward(const NormalizedAdjacency& p, const Matrix& h, Cache* cache = nullptr) const;
  void backward(const NormalizedAdjacency& p, const Cache& cache, const Matrix& dy);

  std::vector<nn::Parameter*> parameters();

  std::array<GraphConvLayer, 3> layers;
};

/// Mean over each consecutive block of `nodes` rows; one output row per block.
Matrix mean_pool(const Matrix& stacked, std::size_t nodes);

// ---------------------------------------------------------------------------

/// Image feature extractor emitting kBackboneWidth features per sample.
class Backbone {
 public:
  struct Cache {
    virtual ~Cache() = default;
  };

  virtual ~Backbone() = default;
  virtual std::string kind() const = 0;
  virtual Matrix forward(const Matrix& images, std::unique_ptr<Cache>* cache) const = 0;
  /// Accumulates gradients for trainable tensors only; frozen tensors keep zero gradient.
  virtual void backward(const Cache& cache, const Matrix& dfeatures) = 0;
  /// Canonical registration order.
  virtual std::vector<nn::Parameter*> parameters() = 0;
  virtual std::unique_ptr<Backbone> clone() const = 0;

  /// Freezes the first `count` tensors in registration order.
  void freeze_prefix(std::size_t count);
};

/// Small random convolutional stand-in: 16x16 average pooling to 14x14, a
/// 3x3 stem (3->8 channels), 15 residual 3x3 blocks, 2x2 pooling and a
/// linear map 392->2048. Each conv unit registers conv.weight, norm.weight and
/// norm.bias; 50 tensors in total.
class StubBackbone final : public Backbone {
 public:
  static constexpr int kGrid = 14;
  static constexpr int kChannels = 8;
  static constexpr int kBlocks = 15;
  static constexpr int kPooledFeatures = 7 * 7 * kChannels;

  explicit StubBackbone(std::uint64_t seed);

  std::string kind() const override { return "stub"; }
  Matrix forward(const Matrix& images, std::unique_ptr<Cache>* cache) const override;
  void backward(const Cache& cache, const Matrix& dfeatures) override;
  std::vector<nn::Parameter*> parameters() override;
  std::unique_ptr<Backbone> clone() const override { return std::make_unique<StubBackbone>(*this); }

 private:
  struct ConvUnit {
    nn::Parameter conv;   // out x (9 * in)
    nn::Parameter scale;  // 1 x out
    nn::Parameter shift;  // 1 x out
  };
  struct StubCache;

  std::vector<ConvUnit> units_;  // stem first, then the residual blocks
  nn::Linear fc_;
};

std::unique_ptr<Backbone> make_backbone(const std::string& kind, std::uint64_t seed);

// ---------------------------------------------------------------------------

class ClassifierHead {
 public:
  struct Cache {
    Matrix x, z1, y1, d1, z2, y2, d2;
    Matrix mask1, mask2;
    nn::LayerNorm::Cache n1, n2;
  };

  ClassifierHead() = default;
  ClassifierHead(double dropout1, double dropout2);
  void init(std::uint64_t seed);

  Matrix forward(const Matrix& fused, nn::Mode mode, std::uint64_t dropout_seed, Cache* cache = nullptr) const;
  Matrix backward(const Cache& cache, const Matrix& dlogits);

  std::vector<nn::Parameter*> parameters();
  static std::size_t expected_parameter_count();

  nn::Linear l1, l2, l3;
  nn::LayerNorm n1, n2;
  double p1 = 0.325;
  double p2 = 0.275;
};

// ---------------------------------------------------------------------------

struct FusionConfig {
  int gcn_hidden = 64;
  int cnn_bottleneck = 128;
  int gcn_bottleneck = 32;
  double dropout1 = 0.325;
  double dropout2 = 0.275;
  std::string backbone_kind = "stub";
  std::size_t frozen_prefix = 44;
  std::uint64_t seed = 0;

  void validate() const;
  /// Stable key=value text used for hashing and snapshots.
  std::string canonical() const;
  std::string hash() const;
};

struct ForwardOptions {
  nn::Mode mode = nn::Mode::eval;
  std::uint64_t dropout_seed = 0;
};

struct ForwardResult {
  Matrix logits;      // B x 7
  Matrix f_cnn_attn;  // B x 2048
  Matrix f_gcn;       // B x 128
  Matrix f_fused;     // B x 2176
  std::vector<bool> gcn_fallback;
  std::size_t fallback_count = 0;
};

class FusionNet {
 public:
  struct Tape;

  explicit FusionNet(FusionConfig cfg = {},
                     std::shared_ptr<const facegraph::FaceTopology> topology = facegraph::build_topology());
  FusionNet(const FusionNet& other);
  FusionNet& operator=(const FusionNet& other);
  FusionNet(FusionNet&&) noexcept;
  FusionNet& operator=(FusionNet&&) noexcept;
  ~FusionNet();

  /// `images` is B x kImageFeatures; `nodes` holds one 468x3 matrix per
  /// sample. A sample whose graph input or graph output is not finite (or
  /// has the wrong shape) gets an all-zero graph feature instead.
  ForwardResult forward(const Matrix& images, const std::vector<Matrix>& nodes, const ForwardOptions& options,
                        Tape* tape = nullptr) const;
  /// Accumulates gradients of the loss with respect to every trainable tensor.
  void backward(const Tape& tape, const Matrix& dlogits);

  /// Softmax of eval-mode logits.
  std::vector<EmotionDistribution> predict(const Matrix& images, const std::vector<Matrix>& nodes) const;

  /// Backbone tensors first, then CNN attention, graph stack, graph attention, head.
  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  void zero_grad();
  std::size_t backbone_tensor_count() const;

  const FusionConfig& config() const { return cfg_; }
  const facegraph::FaceTopology& topology() const { return *topology_; }
  const NormalizedAdjacency& adjacency() const { return *adjacency_; }

  Backbone& backbone() { return *backbone_; }
  AttentionBlock& cnn_attention() { return cnn_attn_; }
  GraphConvStack& gcn() { return gcn_; }
  AttentionBlock& gcn_attention() { return gcn_attn_; }
  ClassifierHead& head() { return head_; }

 private:
  FusionConfig cfg_;
  std::shared_ptr<const facegraph::FaceTopology> topology_;
  std::shared_ptr<const NormalizedAdjacency> adjacency_;
  std::unique_ptr<Backbone> backbone_;
  AttentionBlock cnn_attn_;
  GraphConvStack gcn_;
  AttentionBlock gcn_attn_;
  ClassifierHead head_;
};

struct FusionNet::Tape {
  std::unique_ptr<Backbone::Cache> backbone;
  AttentionBlock::Cache cnn_attn;
  GraphConvStack::Cache gcn;
  AttentionBlock::Cache gcn_attn;
  ClassifierHead::Cache head;
  std::vector<bool> fallback;
};

// ---------------------------------------------------------------------------
// Checkpoints: a text header, a JSON manifest and the raw tensor payload.

struct CheckpointExtras {
  /// Additional named tensors (optimizer moments, for instance).
  std::map<std::string, Matrix> tensors;
  /// Free-form string metadata.
  std::map<std::string, std::string> meta;
};

void save_checkpoint(const std::filesystem::path& path, const FusionNet& model, const CheckpointExtras& extras = {});

/// Reads the manifest's model config (so a matching model can be built first).
FusionConfig read_checkpoint_config(const std::filesystem::path& path);

/// Restores every tensor into `model`. Throws IntegrityError when widths,
/// tensor shapes or the topology hash differ, LoadError for unreadable files.
CheckpointExtras load_checkpoint(const std::filesystem::path& path, FusionNet& model);

}  // namespace affect::fusion
