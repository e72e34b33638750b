#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "morlbench/rng.hpp"
#include "morlbench/types.hpp"

namespace morlbench {

/// Row-major dense matrix of doubles. Everything in the training stack is
/// double precision so gradient checks and reproducibility are exact.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  std::span<double> row(int r) { return {v.data() + static_cast<size_t>(r) * cols,
                                         static_cast<size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {v.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }
  static Matrix from_row(std::span<const double> x) {
    Matrix m(1, static_cast<int>(x.size()));
    std::copy(x.begin(), x.end(), m.v.begin());
    return m;
  }
};

Matrix matmul(const Matrix& a, const Matrix& b);     // a(M,K) * b(K,N)
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T(K,M) * b(K,N) -> (M,N)
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a(M,K) * b^T(N,K) -> (M,N)

enum class Activation { kRelu, kTanh };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct MlpCache {
  // acts[0] is the input batch; acts[l+1] the post-activation output of
  // layer l (identity on the last layer).
  std::vector<Matrix> acts;
};

struct MlpGrads {
  std::vector<Matrix> d_weights;
  std::vector<std::vector<double>> d_biases;
};

class ParamFile;

/// Plain fully connected network: affine layers with relu/tanh hidden
/// activations and an identity output layer. Weights init uniform in
/// +-sqrt(6/(fan_in+fan_out)) from the given stream, biases zero.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> dims, Activation act, Rng& rng);

  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  int num_layers() const { return static_cast<int>(weights_.size()); }
  const std::vector<int>& dims() const { return dims_; }
  Activation activation() const { return act_; }

  Matrix forward(const Matrix& x, MlpCache* cache = nullptr) const;
  std::vector<double> forward_one(std::span<const double> x) const;

  /// Reverse-mode gradients for the forward pass recorded in `cache`.
  MlpGrads backward(const MlpCache& cache, const Matrix& dout) const;

  MlpGrads zero_grads() const;
  void accumulate(MlpGrads& into, const MlpGrads& g) const;

  std::vector<std::span<double>> param_views();
  std::vector<std::span<const double>> grad_views(const MlpGrads& g) const;

  const Matrix& weight(int layer) const { return weights_[layer]; }
  Matrix& weight(int layer) { return weights_[layer]; }
  const std::vector<double>& bias(int layer) const { return biases_[layer]; }
  std::vector<double>& bias(int layer) { return biases_[layer]; }

  void append_params(ParamFile& file, const std::string& prefix) const;
  static Mlp from_params(const ParamFile& file, const std::string& prefix);

 private:
  std::vector<int> dims_;
  Activation act_ = Activation::kRelu;
  std::vector<Matrix> weights_;               // dims[l] x dims[l+1]
  std::vector<std::vector<double>> biases_;   // dims[l+1]
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over an ordered list of parameter tensors. Moment
/// buffers are allocated on first use and must see the same shapes in the
/// same order on every step.
class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<std::span<double>> params, std::span<std::span<const double>> grads);
  void step(std::vector<std::span<double>> params, std::vector<std::span<const double>> grads) {
    step(std::span<std::span<double>>(params), std::span<std::span<const double>>(grads));
  }

  int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  int64_t step_count_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Numerically stable (max-subtracted) softmax.
std::vector<double> softmax(std::span<const double> logits);

/// Returns {loss, d_loss/d_logits}; gradient is softmax(logits) - onehot.
std::pair<double, std::vector<double>> softmax_cross_entropy(std::span<const double> logits,
                                                             int target);

/// Versioned checkpoint container: string metadata plus named double
/// tensors, stored little-endian for byte-exact round trips.
class ParamFile {
 public:
  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values;
  };

  std::map<std::string, std::string> meta;

  void add(const std::string& name, std::vector<int> shape, std::vector<double> values);
  void add_matrix(const std::string& name, const Matrix& m);
  void add_vector(const std::string& name, const std::vector<double>& v);

  const Entry& get(const std::string& name) const;
  Matrix get_matrix(const std::string& name) const;
  std::vector<double> get_vector(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  const std::string& meta_at(const std::string& key) const;

  void save(const std::string& path) const;
  static ParamFile load(const std::string& path);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, size_t> index_;
};

}  // namespace morlbench
