#include <cmath>
#include <random>

#include "affect/error.hpp"
#include "affect/fusionnet.hpp"

namespace affect::fusion {

namespace {

constexpr int kCells = StubBackbone::kGrid * StubBackbone::kGrid;
constexpr int kPool = kImageSize / StubBackbone::kGrid;

// 16x16 average pooling of channel-major image rows into a (B*196) x 3 map.
Matrix average_pool_images(const Matrix& images) {
  const auto batch = images.rows();
  Matrix out = Matrix::Zero(batch * kCells, 3);
  const double inv = 1.0 / (kPool * kPool);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double* img = images.row(b).data();
    for (int c = 0; c < 3; ++c) {
      const double* plane = img + static_cast<std::ptrdiff_t>(c) * kImageSize * kImageSize;
      for (int y = 0; y < kImageSize; ++y) {
        const int gy = y / kPool;
        for (int x = 0; x < kImageSize; ++x) out(b * kCells + gy * StubBackbone::kGrid + x / kPool, c) += plane[y * kImageSize + x];
      }
    }
  }
  return out * inv;
}

// Rows are (b, y, x); patch columns are (ky * 3 + kx) * C + c, zero padded.
Matrix im2col(const Matrix& h) {
  const auto channels = h.cols();
  const auto batch = h.rows() / kCells;
  const int g = StubBackbone::kGrid;
  Matrix patches = Matrix::Zero(h.rows(), 9 * channels);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int y = 0; y < g; ++y)
      for (int x = 0; x < g; ++x) {
        const auto row = b * kCells + y * g + x;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int sy = y + ky - 1, sx = x + kx - 1;
            if (sy < 0 || sy >= g || sx < 0 || sx >= g) continue;
            patches.block(row, (ky * 3 + kx) * channels, 1, channels) = h.row(b * kCells + sy * g + sx);
          }
      }
  return patches;
}

Matrix col2im(const Matrix& dpatches, Eigen::Index channels) {
  const auto batch = dpatches.rows() / kCells;
  const int g = StubBackbone::kGrid;
  Matrix dh = Matrix::Zero(dpatches.rows(), channels);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int y = 0; y < g; ++y)
      for (int x = 0; x < g; ++x) {
        const auto row = b * kCells + y * g + x;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int sy = y + ky - 1, sx = x + kx - 1;
            if (sy < 0 || sy >= g || sx < 0 || sx >= g) continue;
            dh.row(b * kCells + sy * g + sx) += dpatches.block(row, (ky * 3 + kx) * channels, 1, channels);
          }
      }
  return dh;
}

int pooled_index(int y, int x, int c) { return ((y / 2) * 7 + x / 2) * StubBackbone::kChannels + c; }

Matrix pool2(const Matrix& h) {
  const auto batch = h.rows() / kCells;
  const int g = StubBackbone::kGrid;
  Matrix out = Matrix::Zero(batch, StubBackbone::kPooledFeatures);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int y = 0; y < g; ++y)
      for (int x = 0; x < g; ++x)
        for (int c = 0; c < StubBackbone::kChannels; ++c) out(b, pooled_index(y, x, c)) += 0.25 * h(b * kCells + y * g + x, c);
  return out;
}

Matrix unpool2(const Matrix& d) {
  const int g = StubBackbone::kGrid;
  Matrix out(d.rows() * kCells, StubBackbone::kChannels);
  for (Eigen::Index b = 0; b < d.rows(); ++b)
    for (int y = 0; y < g; ++y)
      for (int x = 0; x < g; ++x)
        for (int c = 0; c < StubBackbone::kChannels; ++c) out(b * kCells + y * g + x, c) = 0.25 * d(b, pooled_index(y, x, c));
  return out;
}

}  // namespace

struct StubBackbone::StubCache final : Backbone::Cache {
  std::vector<Matrix> inputs;  // input of every conv unit
  std::vector<Matrix> z;       // conv output
  std::vector<Matrix> t;       // tanh(scale * z + shift)
  Matrix pooled;
};

void Backbone::freeze_prefix(std::size_t count) {
  auto params = parameters();
  if (count > params.size()) {
    throw ConfigError("frozen prefix " + std::to_string(count) + " exceeds the backbone's " +
                      std::to_string(params.size()) + " parameter tensors");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->frozen = i < count;
    params[i]->zero_grad();
  }
}

StubBackbone::StubBackbone(std::uint64_t seed) {
  std::mt19937_64 rng(nn::derive_seed(seed, "backbone"));
  for (int u = 0; u <= kBlocks; ++u) {
    const int in = u == 0 ? 3 : kChannels;
    const std::string prefix = u == 0 ? "backbone.stem" : "backbone.block" + std::to_string(u);
    std::normal_distribution<double> w(0.0, std::sqrt((u == 0 ? 2.0 : 0.5) / (9.0 * in)));
    Matrix conv(kChannels, 9 * in);
    for (Eigen::Index i = 0; i < conv.size(); ++i) conv.data()[i] = w(rng);
    units_.push_back({nn::Parameter(prefix + ".conv.weight", conv, nn::ParamGroup::backbone),
                      nn::Parameter(prefix + ".norm.weight", Matrix::Ones(1, kChannels), nn::ParamGroup::backbone),
                      nn::Parameter(prefix + ".norm.bias", Matrix::Zero(1, kChannels), nn::ParamGroup::backbone)});
  }
  fc_ = nn::Linear("backbone.fc", kPooledFeatures, kBackboneWidth, nn::ParamGroup::backbone);
  fc_.init(rng());
}

std::vector<nn::Parameter*> StubBackbone::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& u : units_) {
    out.push_back(&u.conv);
    out.push_back(&u.scale);
    out.push_back(&u.shift);
  }
  out.push_back(&fc_.weight);
  out.push_back(&fc_.bias);
  return out;
}

Matrix StubBackbone::forward(const Matrix& images, std::unique_ptr<Cache>* cache) const {
  if (images.cols() != kImageFeatures) {
    throw ShapeError("backbone expects " + std::to_string(kImageFeatures) + " values per image, got " +
                     std::to_string(images.cols()));
  }
  auto c = std::make_unique<StubCache>();
  Matrix h = average_pool_images(images);
  for (std::size_t u = 0; u < units_.size(); ++u) {
    const auto& unit = units_[u];
    Matrix z = im2col(h) * unit.conv.value.transpose();
    Matrix s = z.array().rowwise() * unit.scale.value.row(0).array();
    s.rowwise() += unit.shift.value.row(0);
    Matrix t = s.array().tanh().matrix();
    Matrix next = u == 0 ? t : Matrix(h + t);
    if (cache) {
      c->inputs.push_back(std::move(h));
      c->z.push_back(std::move(z));
      c->t.push_back(std::move(t));
    }
    h = std::move(next);
  }
  Matrix pooled = pool2(h);
  Matrix features = fc_.forward(pooled);
  if (cache) {
    c->pooled = std::move(pooled);
    *cache = std::move(c);
  }
  return features;
}

void StubBackbone::backward(const Cache& base, const Matrix& dfeatures) {
  const auto& c = dynamic_cast<const StubCache&>(base);
  auto params = parameters();
  std::size_t lowest = params.size();
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!params[i]->frozen) {
      lowest = i;
      break;
    }
  const std::size_t fc_index = 3 * units_.size();
  if (lowest >= params.size()) return;
  const bool below_fc = lowest < fc_index;
  Matrix dpooled = fc_.backward(c.pooled, dfeatures, below_fc);
  if (!below_fc) return;

  Matrix dh = unpool2(dpooled);
  for (std::size_t u = units_.size(); u-- > 0;) {
    const std::size_t first = 3 * u;
    if (lowest > first + 2) break;
    auto& unit = units_[u];
    const Matrix ds = dh.array() * (1.0 - c.t[u].array().square());
    if (!unit.shift.frozen) unit.shift.grad.row(0) += ds.colwise().sum();
    if (!unit.scale.frozen) unit.scale.grad.row(0) += (ds.array() * c.z[u].array()).colwise().sum().matrix();
    if (lowest > first) break;
    const Matrix dz = ds.array().rowwise() * unit.scale.value.row(0).array();
    if (!unit.conv.frozen) unit.conv.grad.noalias() += dz.transpose() * im2col(c.inputs[u]);
    if (u == 0 || lowest >= first) break;
    dh += col2im(dz * unit.conv.value, c.inputs[u].cols());
  }
}

std::unique_ptr<Backbone> make_backbone(const std::string& kind, std::uint64_t seed) {
  if (kind == "stub") return std::make_unique<StubBackbone>(seed);
  throw ConfigError("unknown backbone.kind '" + kind + "' (available: stub)");
}

}  // namespace affect::fusion
