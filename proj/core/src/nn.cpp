#include "morlbench/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace morlbench {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw UsageError("matmul: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.v.data() + static_cast<size_t>(i) * a.cols;
    double* orow = out.v.data() + static_cast<size_t>(i) * out.cols;
    for (int k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.v.data() + static_cast<size_t>(k) * b.cols;
      for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw UsageError("matmul_tn: row counts differ");
  Matrix out(a.cols, b.cols);
  for (int k = 0; k < a.rows; ++k) {
    const double* arow = a.v.data() + static_cast<size_t>(k) * a.cols;
    const double* brow = b.v.data() + static_cast<size_t>(k) * b.cols;
    for (int i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* orow = out.v.data() + static_cast<size_t>(i) * out.cols;
      for (int j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw UsageError("matmul_nt: col counts differ");
  Matrix out(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.v.data() + static_cast<size_t>(i) * a.cols;
    double* orow = out.v.data() + static_cast<size_t>(i) * out.cols;
    for (int j = 0; j < b.rows; ++j) {
      const double* brow = b.v.data() + static_cast<size_t>(j) * b.cols;
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      orow[j] = acc;
    }
  }
  return out;
}

std::string activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ValidationError("unknown activation '" + name + "'");
}

Mlp::Mlp(std::vector<int> dims, Activation act, Rng& rng) : dims_(std::move(dims)), act_(act) {
  if (dims_.size() < 2) throw UsageError("Mlp: need at least input and output dims");
  for (size_t l = 0; l + 1 < dims_.size(); ++l) {
    const int fan_in = dims_[l];
    const int fan_out = dims_[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (double& x : w.v) x = rng.uniform(-bound, bound);
    weights_.push_back(std::move(w));
    biases_.emplace_back(fan_out, 0.0);
  }
}

Matrix Mlp::forward(const Matrix& x, MlpCache* cache) const {
  if (x.cols != input_dim()) throw UsageError("Mlp::forward: input width mismatch");
  if (cache) {
    cache->acts.clear();
    cache->acts.push_back(x);
  }
  Matrix cur = x;
  for (int l = 0; l < num_layers(); ++l) {
    Matrix z = matmul(cur, weights_[l]);
    const auto& b = biases_[l];
    for (int i = 0; i < z.rows; ++i) {
      double* zr = z.v.data() + static_cast<size_t>(i) * z.cols;
      for (int j = 0; j < z.cols; ++j) zr[j] += b[j];
    }
    const bool hidden = (l + 1 < num_layers());
    if (hidden) {
      if (act_ == Activation::kRelu) {
        for (double& t : z.v) t = t > 0.0 ? t : 0.0;
      } else {
        for (double& t : z.v) t = std::tanh(t);
      }
    }
    cur = std::move(z);
    if (cache) cache->acts.push_back(cur);
  }
  return cur;
}

std::vector<double> Mlp::forward_one(std::span<const double> x) const {
  Matrix out = forward(Matrix::from_row(x));
  return out.v;
}

MlpGrads Mlp::backward(const MlpCache& cache, const Matrix& dout) const {
  if (cache.acts.size() != static_cast<size_t>(num_layers()) + 1) {
    throw UsageError("Mlp::backward: no cached forward pass");
  }
  MlpGrads g = zero_grads();
  Matrix delta = dout;
  for (int l = num_layers() - 1; l >= 0; --l) {
    const Matrix& input = cache.acts[l];
    g.d_weights[l] = matmul_tn(input, delta);
    auto& db = g.d_biases[l];
    for (int i = 0; i < delta.rows; ++i) {
      const double* dr = delta.v.data() + static_cast<size_t>(i) * delta.cols;
      for (int j = 0; j < delta.cols; ++j) db[j] += dr[j];
    }
    if (l > 0) {
      delta = matmul_nt(delta, weights_[l]);
      const Matrix& act = cache.acts[l];  // post-activation of layer l-1
      if (act_ == Activation::kRelu) {
        for (size_t i = 0; i < delta.v.size(); ++i) {
          if (act.v[i] <= 0.0) delta.v[i] = 0.0;
        }
      } else {
        for (size_t i = 0; i < delta.v.size(); ++i) {
          delta.v[i] *= 1.0 - act.v[i] * act.v[i];
        }
      }
    }
  }
  return g;
}

MlpGrads Mlp::zero_grads() const {
  MlpGrads g;
  for (int l = 0; l < num_layers(); ++l) {
    g.d_weights.emplace_back(weights_[l].rows, weights_[l].cols);
    g.d_biases.emplace_back(biases_[l].size(), 0.0);
  }
  return g;
}

void Mlp::accumulate(MlpGrads& into, const MlpGrads& g) const {
  for (int l = 0; l < num_layers(); ++l) {
    for (size_t i = 0; i < g.d_weights[l].v.size(); ++i) {
      into.d_weights[l].v[i] += g.d_weights[l].v[i];
    }
    for (size_t i = 0; i < g.d_biases[l].size(); ++i) {
      into.d_biases[l][i] += g.d_biases[l][i];
    }
  }
}

std::vector<std::span<double>> Mlp::param_views() {
  std::vector<std::span<double>> views;
  for (int l = 0; l < num_layers(); ++l) {
    views.emplace_back(weights_[l].v);
    views.emplace_back(biases_[l]);
  }
  return views;
}

std::vector<std::span<const double>> Mlp::grad_views(const MlpGrads& g) const {
  std::vector<std::span<const double>> views;
  for (int l = 0; l < num_layers(); ++l) {
    views.emplace_back(g.d_weights[l].v);
    views.emplace_back(g.d_biases[l]);
  }
  return views;
}

void AdamState::step(std::span<std::span<double>> params,
                     std::span<std::span<const double>> grads) {
  if (params.size() != grads.size()) throw UsageError("AdamState::step: list sizes differ");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw UsageError("AdamState::step: tensor count changed");
  ++step_count_;
  const double b1 = cfg_.beta1;
  const double b2 = cfg_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  for (size_t t = 0; t < params.size(); ++t) {
    auto p = params[t];
    auto g = grads[t];
    if (p.size() != g.size() || p.size() != m_[t].size()) {
      throw UsageError("AdamState::step: shape mismatch");
    }
    auto& m = m_[t];
    auto& v = v_[t];
    for (size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / correction1;
      const double vhat = v[i] / correction2;
      p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& x : p) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : p) x /= z;
  return p;
}

std::pair<double, std::vector<double>> softmax_cross_entropy(std::span<const double> logits,
                                                             int target) {
  if (target < 0 || target >= static_cast<int>(logits.size())) {
    throw UsageError("softmax_cross_entropy: target out of range");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double x : logits) z += std::exp(x - mx);
  const double loss = std::log(z) - (logits[target] - mx);
  std::vector<double> grad(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) grad[i] = std::exp(logits[i] - mx) / z;
  grad[target] -= 1.0;
  return {loss, std::move(grad)};
}

// ---- checkpoint container ----

namespace {

constexpr char kMagic[8] = {'M', 'O', 'R', 'L', 'N', 'N', '0', '1'};

void write_u64(std::ostream& out, uint64_t x) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw ParseError("checkpoint: truncated file");
  uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<uint64_t>(b[i]) << (8 * i);
  return x;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const uint64_t n = read_u64(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw ParseError("checkpoint: truncated string");
  return s;
}

void write_doubles(std::ostream& out, const std::vector<double>& v) {
  write_u64(out, v.size());
  for (double d : v) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(out, bits);
  }
}

std::vector<double> read_doubles(std::istream& in) {
  const uint64_t n = read_u64(in);
  std::vector<double> v(n);
  for (uint64_t i = 0; i < n; ++i) {
    const uint64_t bits = read_u64(in);
    std::memcpy(&v[i], &bits, 8);
  }
  return v;
}

}  // namespace

void ParamFile::add(const std::string& name, std::vector<int> shape,
                    std::vector<double> values) {
  if (index_.count(name)) throw UsageError("ParamFile: duplicate tensor '" + name + "'");
  size_t expect = 1;
  for (int s : shape) expect *= static_cast<size_t>(s);
  if (expect != values.size()) throw UsageError("ParamFile: shape/value size mismatch");
  index_[name] = entries_.size();
  entries_.push_back(Entry{name, std::move(shape), std::move(values)});
}

void ParamFile::add_matrix(const std::string& name, const Matrix& m) {
  add(name, {m.rows, m.cols}, m.v);
}

void ParamFile::add_vector(const std::string& name, const std::vector<double>& v) {
  add(name, {static_cast<int>(v.size())}, v);
}

bool ParamFile::has(const std::string& name) const { return index_.count(name) > 0; }

const ParamFile::Entry& ParamFile::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("ParamFile: missing tensor '" + name + "'");
  return entries_[it->second];
}

Matrix ParamFile::get_matrix(const std::string& name) const {
  const Entry& e = get(name);
  if (e.shape.size() != 2) throw ValidationError("ParamFile: '" + name + "' is not a matrix");
  Matrix m(e.shape[0], e.shape[1]);
  m.v = e.values;
  return m;
}

std::vector<double> ParamFile::get_vector(const std::string& name) const {
  const Entry& e = get(name);
  if (e.shape.size() != 1) throw ValidationError("ParamFile: '" + name + "' is not a vector");
  return e.values;
}

const std::string& ParamFile::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw ValidationError("ParamFile: missing metadata '" + key + "'");
  return it->second;
}

void ParamFile::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("ParamFile::save: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, meta.size());
  for (const auto& [k, v] : meta) {
    write_string(out, k);
    write_string(out, v);
  }
  write_u64(out, entries_.size());
  for (const Entry& e : entries_) {
    write_string(out, e.name);
    write_u64(out, e.shape.size());
    for (int s : e.shape) write_u64(out, static_cast<uint64_t>(s));
    write_doubles(out, e.values);
  }
}

ParamFile ParamFile::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("ParamFile::load: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw ParseError("checkpoint: bad magic in " + path);
  }
  ParamFile f;
  const uint64_t n_meta = read_u64(in);
  for (uint64_t i = 0; i < n_meta; ++i) {
    std::string k = read_string(in);
    f.meta[k] = read_string(in);
  }
  const uint64_t n_entries = read_u64(in);
  for (uint64_t i = 0; i < n_entries; ++i) {
    std::string name = read_string(in);
    const uint64_t rank = read_u64(in);
    std::vector<int> shape(rank);
    for (uint64_t r = 0; r < rank; ++r) shape[r] = static_cast<int>(read_u64(in));
    f.add(name, std::move(shape), read_doubles(in));
  }
  return f;
}

void Mlp::append_params(ParamFile& file, const std::string& prefix) const {
  std::string dims;
  for (size_t i = 0; i < dims_.size(); ++i) {
    if (i) dims += ',';
    dims += std::to_string(dims_[i]);
  }
  file.meta[prefix + ".dims"] = dims;
  file.meta[prefix + ".activation"] = activation_name(act_);
  for (int l = 0; l < num_layers(); ++l) {
    file.add_matrix(prefix + ".w" + std::to_string(l), weights_[l]);
    file.add_vector(prefix + ".b" + std::to_string(l), biases_[l]);
  }
}

Mlp Mlp::from_params(const ParamFile& file, const std::string& prefix) {
  Mlp net;
  const std::string& dims = file.meta_at(prefix + ".dims");
  size_t pos = 0;
  while (pos < dims.size()) {
    size_t comma = dims.find(',', pos);
    if (comma == std::string::npos) comma = dims.size();
    net.dims_.push_back(std::stoi(dims.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  net.act_ = activation_from_name(file.meta_at(prefix + ".activation"));
  for (size_t l = 0; l + 1 < net.dims_.size(); ++l) {
    net.weights_.push_back(file.get_matrix(prefix + ".w" + std::to_string(l)));
    net.biases_.push_back(file.get_vector(prefix + ".b" + std::to_string(l)));
  }
  return net;
}

}  // namespace morlbench
