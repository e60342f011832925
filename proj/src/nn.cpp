#include "affect/nn.hpp"

#include <cmath>
#include <random>

namespace affect::nn {

Parameter::Parameter(std::string n, Matrix v, ParamGroup g)
    : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())), group(g) {}

Linear::Linear(std::string name, int in, int out, ParamGroup group)
    : weight(name + ".weight", Matrix::Zero(out, in), group), bias(name + ".bias", Matrix::Zero(1, out), group) {}

void Linear::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in()));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < bias.value.size(); ++i) bias.value.data()[i] = u(rng);
}

Matrix Linear::forward(const Matrix& x) const {
  Matrix y = x * weight.value.transpose();
  y.rowwise() += bias.value.row(0);
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy, bool need_dx) {
  if (!weight.frozen) weight.grad.noalias() += dy.transpose() * x;
  if (!bias.frozen) bias.grad.row(0) += dy.colwise().sum();
  if (!need_dx) return {};
  return dy * weight.value;
}

LayerNorm::LayerNorm(std::string name, int dim, ParamGroup group)
    : weight(name + ".weight", Matrix::Ones(1, dim), group), bias(name + ".bias", Matrix::Zero(1, dim), group) {}

Matrix LayerNorm::forward(const Matrix& x, Cache* cache) const {
  const auto n = static_cast<double>(x.cols());
  Matrix xhat(x.rows(), x.cols());
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / n;
    const double var = (x.row(r).array() - mean).square().sum() / n;
    inv_std(r) = 1.0 / std::sqrt(var + kEps);
    xhat.row(r) = (x.row(r).array() - mean) * inv_std(r);
  }
  Matrix y = xhat.array().rowwise() * weight.value.row(0).array();
  y.rowwise() += bias.value.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix LayerNorm::backward(const Cache& cache, const Matrix& dy) {
  if (!weight.frozen) weight.grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  if (!bias.frozen) bias.grad.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * weight.value.row(0).array();
  const auto n = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double m1 = dxhat.row(r).sum() / n;
    const double m2 = dxhat.row(r).dot(cache.xhat.row(r)) / n;
    dx.row(r) = cache.inv_std(r) * (dxhat.row(r).array() - m1 - cache.xhat.row(r).array() * m2);
  }
  return dx;
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& x, const Matrix& dy) { return (x.array() > 0.0).select(dy, 0.0); }

Matrix sigmoid(const Matrix& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::uint64_t seed) {
  Matrix mask(rows, cols);
  if (p <= 0.0) {
    mask.setOnes();
    return mask;
  }
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? scale : 0.0;
  return mask;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : tag) h = (h ^ c) * 1099511628211ULL;
  std::uint64_t z = base + h + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace affect::nn
