#pragma once

// Minimal dense layers with explicit forward caches and hand-written
// backward passes. Batches are matrices with one sample per row.

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace affect::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

enum class ParamGroup { backbone, head };

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  ParamGroup group = ParamGroup::head;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Matrix v, ParamGroup g);

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

enum class Mode { train, eval };

/// y = x W^T + b, weight stored out x in.
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in, int out, ParamGroup group);

  /// Uniform(-1/sqrt(in), 1/sqrt(in)) for weight and bias.
  void init(std::uint64_t seed);

  Matrix forward(const Matrix& x) const;
  /// Accumulates parameter gradients; returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy, bool need_dx = true);

  int in() const { return static_cast<int>(weight.value.cols()); }
  int out() const { return static_cast<int>(weight.value.rows()); }

  Parameter weight;
  Parameter bias;
};

/// Row-wise layer normalization with affine weight and bias.
class LayerNorm {
 public:
  static constexpr double kEps = 1e-5;

  struct Cache {
    Matrix xhat;
    Eigen::VectorXd inv_std;
  };

  LayerNorm() = default;
  LayerNorm(std::string name, int dim, ParamGroup group);

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Cache& cache, const Matrix& dy);

  Parameter weight;
  Parameter bias;
};

Matrix relu(const Matrix& x);
Matrix relu_backward(const Matrix& x, const Matrix& dy);
Matrix sigmoid(const Matrix& x);

/// Inverted dropout mask (entries 0 or 1/(1-p)) drawn from a seed.
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::uint64_t seed);

/// Numerically stable row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

/// Deterministic per-tensor seed derived from a base seed and a name.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

}  // namespace affect::nn
