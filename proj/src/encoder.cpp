#include "vulstyle/encoder.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "vulstyle/error.hpp"
#include "vulstyle/parallel.hpp"

namespace vulstyle {

using nlohmann::json;
using Eigen::VectorXd;

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr char kMagic[8] = {'V', 'S', 'E', 'N', 'C', '0', '0', '1'};

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::invalid_argument, message);
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = stddev * rng.normal();
  }
  return m;
}

struct LnCache {
  Matrix xhat;
  VectorXd rstd;
};

Matrix layer_norm(const Matrix& x, const Matrix& g, const Matrix& b, LnCache* cache) {
  const auto d = static_cast<double>(x.cols());
  const VectorXd mean = x.rowwise().sum() / d;
  Matrix centered = x.colwise() - mean;
  const VectorXd var = centered.array().square().rowwise().sum() / d;
  const VectorXd rstd = (var.array() + kLayerNormEps).rsqrt();
  Matrix xhat = centered.array().colwise() * rstd.array();
  Matrix y = (xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = rstd;
  }
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& g, const LnCache& cache, Matrix& dg, Matrix& db) {
  dg.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  db.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * g.row(0).array();
  const auto d = static_cast<double>(dy.cols());
  const VectorXd mean_dxhat = dxhat.rowwise().sum() / d;
  const VectorXd mean_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().sum() / d;
  Matrix dx = dxhat.colwise() - mean_dxhat;
  dx -= (cache.xhat.array().colwise() * mean_dxhat_xhat.array()).matrix();
  return dx.array().colwise() * cache.rstd.array();
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + 0.044715 * u * u * u))); }

double gelu_grad(double u) {
  const double t = std::tanh(kGeluC * (u + 0.044715 * u * u * u));
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * u * u);
}

VectorXd softmax(const VectorXd& z) {
  const VectorXd e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

std::vector<std::uint8_t> key_mask_for(std::span<const TokenId> ids) {
  std::vector<std::uint8_t> valid(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) valid[i] = ids[i] != kPadId;
  return valid;
}

struct HeadCache {
  Matrix q, k, v, w;
};

struct LayerCache {
  LnCache ln1, ln2;
  Matrix a;  // ln1 output
  std::vector<HeadCache> heads;
  Matrix concat;
  Matrix b;  // ln2 output
  Matrix u;  // pre-activation
  Matrix g;  // activation
};

struct Cache {
  std::vector<LayerCache> layers;
  LnCache final_ln;
  Matrix z;
  VectorXd cls, t, drop, t_drop, logits, probs;
};

void check_ids(std::span<const TokenId> ids, const EncoderConfig& config) {
  require(!ids.empty(), "cannot run the encoder on an empty sequence");
  require(ids.size() <= static_cast<std::size_t>(config.max_positions),
          fmt::format("sequence of {} tokens exceeds max_positions {}", ids.size(), config.max_positions));
  for (const TokenId id : ids) {
    require(id < static_cast<TokenId>(config.vocab), fmt::format("token id {} outside vocabulary {}", id, config.vocab));
  }
}

// Full pass keeping everything backward needs. Dropout applies only when rng
// is given.
Matrix run_forward(std::span<const TokenId> ids, const EncoderParams& p, Cache& cache, Rng* rng,
                   ForwardTrace* trace) {
  const auto& cfg = p.config;
  const auto n = static_cast<Eigen::Index>(ids.size());
  const auto valid = key_mask_for(ids);
  Matrix x(n, cfg.hidden);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = p.token_embedding.row(ids[static_cast<std::size_t>(i)]) + p.position_embedding.row(i);
  }
  if (trace) trace->hidden.push_back(x);
  cache.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const LayerParams& L = p.layers[l];
    LayerCache& c = cache.layers[l];
    c.a = layer_norm(x, L.ln1_g, L.ln1_b, &c.ln1);
    c.heads.resize(static_cast<std::size_t>(cfg.heads));
    c.concat.resize(n, cfg.hidden);
    if (trace) trace->attention.emplace_back();
    for (int h = 0; h < cfg.heads; ++h) {
      HeadCache& hc = c.heads[static_cast<std::size_t>(h)];
      hc.q = c.a * L.wq[static_cast<std::size_t>(h)];
      hc.k = c.a * L.wk[static_cast<std::size_t>(h)];
      hc.v = c.a * L.wv[static_cast<std::size_t>(h)];
      hc.w = attention_weights(hc.q, hc.k, valid);
      c.concat.middleCols(h * cfg.d_k(), cfg.d_k()) = hc.w * hc.v;
      if (trace) trace->attention.back().push_back(hc.w);
    }
    x += c.concat * L.wo;
    c.b = layer_norm(x, L.ln2_g, L.ln2_b, &c.ln2);
    c.u = (c.b * L.w1).rowwise() + L.b1.row(0);
    c.g = c.u.unaryExpr([](double v) { return gelu(v); });
    x += (c.g * L.w2).rowwise() + L.b2.row(0);
    if (trace) trace->hidden.push_back(x);
  }
  cache.z = layer_norm(x, p.final_g, p.final_b, &cache.final_ln);
  cache.cls = cache.z.row(0).transpose();
  cache.t = ((p.dense_w.transpose() * cache.cls) + p.dense_b.row(0).transpose()).array().tanh();
  cache.drop = VectorXd::Ones(cache.t.size());
  if (rng && cfg.dropout > 0.0) {
    for (Eigen::Index i = 0; i < cache.drop.size(); ++i) {
      cache.drop(i) = rng->bernoulli(cfg.dropout) ? 0.0 : 1.0 / (1.0 - cfg.dropout);
    }
  }
  cache.t_drop = cache.t.cwiseProduct(cache.drop);
  cache.logits = p.out_w.transpose() * cache.t_drop + p.out_b.row(0).transpose();
  cache.probs = softmax(cache.logits);
  return cache.z;
}

void backward(std::span<const TokenId> ids, const EncoderParams& p, const Cache& cache, const VectorXd& dlogits,
              EncoderParams& g) {
  const auto& cfg = p.config;
  const auto n = static_cast<Eigen::Index>(ids.size());
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_k()));

  g.out_w += cache.t_drop * dlogits.transpose();
  g.out_b.row(0) += dlogits.transpose();
  const VectorXd dt = (p.out_w * dlogits).cwiseProduct(cache.drop);
  const VectorXd dpre = dt.array() * (1.0 - cache.t.array().square());
  g.dense_w += cache.cls * dpre.transpose();
  g.dense_b.row(0) += dpre.transpose();

  Matrix dz = Matrix::Zero(n, cfg.hidden);
  dz.row(0) = (p.dense_w * dpre).transpose();
  Matrix dx = layer_norm_backward(dz, p.final_g, cache.final_ln, g.final_g, g.final_b);

  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const LayerParams& L = p.layers[li];
    LayerParams& G = g.layers[li];
    const LayerCache& c = cache.layers[li];

    // Feed-forward sub-block: x_out = x_mid + gelu(b W1 + b1) W2 + b2.
    G.w2 += c.g.transpose() * dx;
    G.b2.row(0) += dx.colwise().sum();
    Matrix du = (dx * L.w2.transpose()).cwiseProduct(c.u.unaryExpr([](double v) { return gelu_grad(v); }));
    G.w1 += c.b.transpose() * du;
    G.b1.row(0) += du.colwise().sum();
    dx += layer_norm_backward(du * L.w1.transpose(), L.ln2_g, c.ln2, G.ln2_g, G.ln2_b);

    // Attention sub-block: x_mid = x_in + concat(heads) W^O.
    G.wo += c.concat.transpose() * dx;
    const Matrix dconcat = dx * L.wo.transpose();
    Matrix da = Matrix::Zero(n, cfg.hidden);
    for (int h = 0; h < cfg.heads; ++h) {
      const auto hs = static_cast<std::size_t>(h);
      const HeadCache& hc = c.heads[hs];
      const Matrix dh = dconcat.middleCols(h * cfg.d_k(), cfg.d_k());
      const Matrix dw = dh * hc.v.transpose();
      const Matrix dv = hc.w.transpose() * dh;
      const VectorXd row_dot = (dw.array() * hc.w.array()).rowwise().sum();
      const Matrix ds = hc.w.array() * (dw.colwise() - row_dot).array();
      const Matrix dq = ds * hc.k * scale;
      const Matrix dk = ds.transpose() * hc.q * scale;
      G.wq[hs] += c.a.transpose() * dq;
      G.wk[hs] += c.a.transpose() * dk;
      G.wv[hs] += c.a.transpose() * dv;
      da += dq * L.wq[hs].transpose() + dk * L.wk[hs].transpose() + dv * L.wv[hs].transpose();
    }
    dx += layer_norm_backward(da, L.ln1_g, c.ln1, G.ln1_g, G.ln1_b);
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    g.token_embedding.row(ids[static_cast<std::size_t>(i)]) += dx.row(i);
    g.position_embedding.row(i) += dx.row(i);
  }
}

template <typename T>
void write_raw(std::ostream& out, T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
  } else {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
}

template <typename T>
T read_raw(std::istream& in) {
  std::array<char, sizeof(T)> bytes{};
  if (!in.read(bytes.data(), sizeof(T))) throw Error(ErrorCode::schema, "parameter file is truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

}  // namespace

void EncoderConfig::validate() const {
  require(layers >= 1 && hidden >= 1 && heads >= 1 && ffn >= 1 && max_positions >= 1 && classes >= 2,
          "encoder dimensions must be positive");
  require(hidden % heads == 0, fmt::format("hidden {} is not divisible by heads {}", hidden, heads));
  require(vocab > static_cast<int>(kSpecialCount), fmt::format("vocabulary of {} is too small", vocab));
  require(dropout >= 0.0 && dropout < 1.0, fmt::format("dropout {} outside [0,1)", dropout));
}

json EncoderConfig::to_json() const {
  return {{"layers", layers}, {"hidden", hidden}, {"heads", heads},     {"ffn", ffn},
          {"vocab", vocab},   {"max_positions", max_positions}, {"classes", classes}, {"dropout", dropout}};
}

EncoderConfig EncoderConfig::from_json(const json& j) {
  EncoderConfig c;
  try {
    c.layers = j.at("layers").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ffn = j.at("ffn").get<int>();
    c.vocab = j.at("vocab").get<int>();
    c.max_positions = j.at("max_positions").get<int>();
    c.classes = j.at("classes").get<int>();
    c.dropout = j.at("dropout").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::schema, fmt::format("encoder config: {}", e.what()));
  }
  return c;
}

EncoderConfig EncoderConfig::full_scale(int vocab, int max_positions) {
  return {12, 768, 12, 3072, vocab, max_positions, 2, 0.1};
}

EncoderParams EncoderParams::zeros(const EncoderConfig& config) {
  config.validate();
  const int d = config.hidden;
  EncoderParams p;
  p.config = config;
  p.token_embedding = Matrix::Zero(config.vocab, d);
  p.position_embedding = Matrix::Zero(config.max_positions, d);
  p.layers.resize(static_cast<std::size_t>(config.layers));
  for (auto& L : p.layers) {
    L.wq.assign(static_cast<std::size_t>(config.heads), Matrix::Zero(d, config.d_k()));
    L.wk = L.wq;
    L.wv = L.wq;
    L.wo = Matrix::Zero(d, d);
    L.ln1_g = L.ln1_b = L.ln2_g = L.ln2_b = Matrix::Zero(1, d);
    L.w1 = Matrix::Zero(d, config.ffn);
    L.b1 = Matrix::Zero(1, config.ffn);
    L.w2 = Matrix::Zero(config.ffn, d);
    L.b2 = Matrix::Zero(1, d);
  }
  p.final_g = p.final_b = Matrix::Zero(1, d);
  p.dense_w = Matrix::Zero(d, d);
  p.dense_b = Matrix::Zero(1, d);
  p.out_w = Matrix::Zero(d, config.classes);
  p.out_b = Matrix::Zero(1, config.classes);
  return p;
}

EncoderParams EncoderParams::init(const EncoderConfig& config, std::uint64_t seed) {
  EncoderParams p = zeros(config);
  Rng rng(seed);
  const double emb = 0.02;
  const double in_d = 1.0 / std::sqrt(static_cast<double>(config.hidden));
  const double in_ffn = 1.0 / std::sqrt(static_cast<double>(config.ffn));
  p.token_embedding = normal_matrix(config.vocab, config.hidden, emb, rng);
  p.position_embedding = normal_matrix(config.max_positions, config.hidden, emb, rng);
  for (auto& L : p.layers) {
    for (int h = 0; h < config.heads; ++h) {
      const auto hs = static_cast<std::size_t>(h);
      L.wq[hs] = normal_matrix(config.hidden, config.d_k(), in_d, rng);
      L.wk[hs] = normal_matrix(config.hidden, config.d_k(), in_d, rng);
      L.wv[hs] = normal_matrix(config.hidden, config.d_k(), in_d, rng);
    }
    L.wo = normal_matrix(config.hidden, config.hidden, in_d, rng);
    L.ln1_g.setOnes();
    L.ln2_g.setOnes();
    L.w1 = normal_matrix(config.hidden, config.ffn, in_d, rng);
    L.w2 = normal_matrix(config.ffn, config.hidden, in_ffn, rng);
  }
  p.final_g.setOnes();
  p.dense_w = normal_matrix(config.hidden, config.hidden, in_d, rng);
  p.out_w = normal_matrix(config.hidden, config.classes, in_d, rng);
  return p;
}

std::vector<TensorRef> EncoderParams::tensors() {
  std::vector<TensorRef> out{{"token_embedding", &token_embedding}, {"position_embedding", &position_embedding}};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& L = layers[l];
    const auto name = [l](std::string_view what) { return fmt::format("layer{}.{}", l, what); };
    for (std::size_t h = 0; h < L.wq.size(); ++h) {
      out.push_back({name(fmt::format("head{}.wq", h)), &L.wq[h]});
      out.push_back({name(fmt::format("head{}.wk", h)), &L.wk[h]});
      out.push_back({name(fmt::format("head{}.wv", h)), &L.wv[h]});
    }
    out.push_back({name("wo"), &L.wo});
    out.push_back({name("ln1_g"), &L.ln1_g});
    out.push_back({name("ln1_b"), &L.ln1_b});
    out.push_back({name("ln2_g"), &L.ln2_g});
    out.push_back({name("ln2_b"), &L.ln2_b});
    out.push_back({name("w1"), &L.w1});
    out.push_back({name("b1"), &L.b1});
    out.push_back({name("w2"), &L.w2});
    out.push_back({name("b2"), &L.b2});
  }
  out.push_back({"final_g", &final_g});
  out.push_back({"final_b", &final_b});
  out.push_back({"dense_w", &dense_w});
  out.push_back({"dense_b", &dense_b});
  out.push_back({"out_w", &out_w});
  out.push_back({"out_b", &out_b});
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> EncoderParams::tensors() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& t : const_cast<EncoderParams*>(this)->tensors()) out.emplace_back(t.name, t.value);
  return out;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : tensors()) n += static_cast<std::size_t>(m->size());
  return n;
}

bool EncoderParams::all_finite() const {
  for (const auto& [name, m] : tensors()) {
    if (!m->allFinite()) return false;
  }
  return true;
}

void EncoderParams::set_zero() {
  for (auto& t : tensors()) t.value->setZero();
}

void EncoderParams::add_scaled(const EncoderParams& other, double scale) {
  auto mine = tensors();
  const auto theirs = other.tensors();
  require(mine.size() == theirs.size(), "parameter sets differ in structure");
  for (std::size_t i = 0; i < mine.size(); ++i) *mine[i].value += scale * *theirs[i].second;
}

void EncoderParams::save(const std::filesystem::path& path) const {
  json header;
  header["config"] = config.to_json();
  json shapes = json::array();
  for (const auto& [name, m] : tensors()) shapes.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
  header["tensors"] = shapes;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, fmt::format("cannot write '{}'", path.string()));
  out.write(kMagic, sizeof kMagic);
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, m] : tensors()) {
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) write_raw<double>(out, (*m)(r, c));
    }
  }
  if (!out) throw Error(ErrorCode::io, fmt::format("failed writing '{}'", path.string()));
}

EncoderParams EncoderParams::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, fmt::format("cannot read '{}'", path.string()));
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw Error(ErrorCode::schema, fmt::format("'{}' is not an encoder parameter file", path.string()));
  }
  const auto length = read_raw<std::uint32_t>(in);
  std::string text(length, '\0');
  if (!in.read(text.data(), length)) throw Error(ErrorCode::schema, "parameter file header is truncated");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::schema, fmt::format("parameter file header: {}", e.what()));
  }
  const EncoderConfig config = EncoderConfig::from_json(header.at("config"));
  try {
    config.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::schema, e.what());
  }
  EncoderParams p = zeros(config);
  auto tensors = p.tensors();
  const auto& shapes = header.at("tensors");
  if (!shapes.is_array() || shapes.size() != tensors.size()) {
    throw Error(ErrorCode::schema, "parameter file shape table does not match its config");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& s = shapes[i];
    if (s.value("name", "") != tensors[i].name || s.value("rows", -1) != tensors[i].value->rows() ||
        s.value("cols", -1) != tensors[i].value->cols()) {
      throw Error(ErrorCode::schema, fmt::format("tensor {} does not match its config", i));
    }
  }
  for (auto& t : tensors) {
    for (Eigen::Index r = 0; r < t.value->rows(); ++r) {
      for (Eigen::Index c = 0; c < t.value->cols(); ++c) (*t.value)(r, c) = read_raw<double>(in);
    }
  }
  return p;
}

Matrix attention_weights(const Matrix& q, const Matrix& k, std::span<const std::uint8_t> key_valid) {
  require(q.cols() > 0, "attention needs d_k > 0");
  require(q.cols() == k.cols(), fmt::format("query width {} differs from key width {}", q.cols(), k.cols()));
  require(key_valid.empty() || key_valid.size() == static_cast<std::size_t>(k.rows()),
          "key mask length differs from key count");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix s = (q * k.transpose()) * scale;
  const bool any_valid = key_valid.empty() || std::any_of(key_valid.begin(), key_valid.end(), [](auto v) { return v; });
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    double max = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (!any_valid || key_valid.empty() || key_valid[static_cast<std::size_t>(j)]) max = std::max(max, s(i, j));
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      const bool valid = !any_valid || key_valid.empty() || key_valid[static_cast<std::size_t>(j)];
      s(i, j) = valid ? std::exp(s(i, j) - max) : 0.0;
      sum += s(i, j);
    }
    s.row(i) /= sum;
  }
  return s;
}

Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, std::span<const std::uint8_t> key_valid) {
  require(k.rows() == v.rows(), fmt::format("{} keys but {} values", k.rows(), v.rows()));
  return attention_weights(q, k, key_valid) * v;
}

Matrix multi_head(const Matrix& h, const LayerParams& layer, std::span<const std::uint8_t> key_valid,
                  std::vector<Matrix>* weights_out) {
  require(!layer.wq.empty() && layer.wq.size() == layer.wk.size() && layer.wq.size() == layer.wv.size(),
          "layer has inconsistent head counts");
  require(h.cols() == layer.wq[0].rows(), fmt::format("hidden width {} differs from projection input {}", h.cols(),
                                                      layer.wq[0].rows()));
  const Eigen::Index dk = layer.wq[0].cols();
  const auto heads = static_cast<Eigen::Index>(layer.wq.size());
  require(layer.wo.rows() == heads * dk, "W^O rows differ from the concatenated head width");
  Matrix concat(h.rows(), heads * dk);
  for (Eigen::Index i = 0; i < heads; ++i) {
    const auto hs = static_cast<std::size_t>(i);
    const Matrix w = attention_weights(h * layer.wq[hs], h * layer.wk[hs], key_valid);
    concat.middleCols(i * dk, dk) = w * (h * layer.wv[hs]);
    if (weights_out) weights_out->push_back(w);
  }
  return concat * layer.wo;
}

ForwardTrace forward(std::span<const TokenId> ids, const EncoderParams& params) {
  check_ids(ids, params.config);
  ForwardTrace trace;
  Cache cache;
  trace.output = run_forward(ids, params, cache, nullptr, &trace);
  trace.logits = cache.logits;
  trace.probabilities = cache.probs;
  return trace;
}

std::vector<std::vector<double>> token_distributions(const ForwardTrace& trace, const EncoderParams& params,
                                                     std::span<const std::size_t> positions) {
  std::vector<std::vector<double>> out;
  for (const std::size_t pos : positions) {
    require(pos < static_cast<std::size_t>(trace.output.rows()), fmt::format("position {} outside sequence", pos));
    const VectorXd scores = params.token_embedding * trace.output.row(static_cast<Eigen::Index>(pos)).transpose();
    const VectorXd p = softmax(scores);
    out.emplace_back(p.data(), p.data() + p.size());
  }
  return out;
}

double accumulate_gradient(const EncoderParams& params, const Example& example, EncoderParams& grads,
                           Rng* dropout_rng) {
  check_ids(example.ids, params.config);
  require(example.label >= 0 && example.label < params.config.classes, "label outside class range");
  Cache cache;
  run_forward(example.ids, params, cache, dropout_rng, nullptr);
  VectorXd dlogits = cache.probs;
  dlogits(example.label) -= 1.0;
  dlogits *= example.weight;
  backward(example.ids, params, cache, dlogits, grads);
  return -std::log(cache.probs(example.label));
}

double weighted_loss(const EncoderParams& params, std::span<const Example> examples, unsigned threads) {
  std::vector<double> losses(examples.size());
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    const auto trace = forward(examples[i].ids, params);
    losses[i] = -std::log(trace.probabilities(examples[i].label));
  });
  double total = 0.0;
  double weight = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    total += examples[i].weight * losses[i];
    weight += examples[i].weight;
  }
  return weight > 0.0 ? total / weight : 0.0;
}

json TrainOptions::to_json() const {
  return {{"learning_rate", learning_rate}, {"epochs", epochs},
          {"batch_size", batch_size},       {"seed", seed},
          {"weight_decay", weight_decay},   {"optimizer", optimizer == Optimizer::adam ? "adam" : "sgd"}};
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_loss,validation_loss\n";
  for (const auto& e : epochs) {
    out += fmt::format("{},{:.10g},{}\n", e.epoch, e.train_loss,
                       e.validation_loss ? fmt::format("{:.10g}", *e.validation_loss) : "");
  }
  return out;
}

TrainResult train_classifier(EncoderParams params, std::span<const Example> train, const TrainOptions& options,
                             std::span<const Example> validation) {
  require(!train.empty(), "cannot train on an empty corpus");
  require(options.epochs >= 0 && options.batch_size >= 1, "epochs must be >= 0 and batch size >= 1");
  require(options.learning_rate >= 0.0 && options.weight_decay >= 0.0, "rates must be non-negative");

  TrainResult result{std::move(params), {}};
  EncoderParams& p = result.params;
  const auto record = [&](int epoch) {
    EpochRecord r{epoch, weighted_loss(p, train, options.threads), std::nullopt};
    if (!validation.empty()) r.validation_loss = weighted_loss(p, validation, options.threads);
    result.history.epochs.push_back(r);
  };
  record(0);

  EncoderParams grads = EncoderParams::zeros(p.config);
  EncoderParams m = EncoderParams::zeros(p.config);
  EncoderParams v = EncoderParams::zeros(p.config);
  const double beta1 = 0.9;
  const double beta2 = 0.999;
  const double adam_eps = 1e-8;
  std::uint64_t step = 0;

  std::vector<std::size_t> order(train.size());
  const auto batch_size = static_cast<std::size_t>(options.batch_size);
  std::vector<EncoderParams> slots;
  std::vector<std::size_t> batch;

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(mix_seed(options.seed, static_cast<std::uint64_t>(epoch)));
    shuffler.shuffle(std::span(order));
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch_size)));
      while (slots.size() < batch.size()) slots.push_back(EncoderParams::zeros(p.config));
      parallel_for(batch.size(), options.threads, [&](std::size_t b) {
        slots[b].set_zero();
        // Dropout masks depend only on the example and epoch.
        Rng dropout(mix_seed(options.seed ^ 0x5bd1e995u, static_cast<std::uint64_t>(epoch) * train.size() + batch[b]));
        accumulate_gradient(p, train[batch[b]], slots[b], &dropout);
      });
      grads.set_zero();
      double weight = 0.0;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        grads.add_scaled(slots[b], 1.0);
        weight += train[batch[b]].weight;
      }
      if (weight <= 0.0) continue;
      ++step;
      auto pt = p.tensors();
      auto gt = grads.tensors();
      auto mt = m.tensors();
      auto vt = v.tensors();
      const double lr = options.learning_rate;
      for (std::size_t i = 0; i < pt.size(); ++i) {
        Matrix& w = *pt[i].value;
        const Matrix g = *gt[i].value / weight;
        if (options.weight_decay > 0.0) w *= (1.0 - lr * options.weight_decay);
        if (options.optimizer == Optimizer::sgd) {
          w -= lr * g;
        } else {
          Matrix& mi = *mt[i].value;
          Matrix& vi = *vt[i].value;
          mi = beta1 * mi + (1.0 - beta1) * g;
          vi = beta2 * vi + (1.0 - beta2) * g.cwiseProduct(g);
          const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
          const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
          w.array() -= lr * (mi.array() / c1) / ((vi.array() / c2).sqrt() + adam_eps);
        }
      }
    }
    record(epoch);
  }
  return result;
}

std::vector<int> predict(const EncoderParams& params, std::span<const Example> examples, unsigned threads) {
  std::vector<int> out(examples.size());
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    const auto trace = forward(examples[i].ids, params);
    Eigen::Index best = 0;
    trace.probabilities.maxCoeff(&best);
    out[i] = static_cast<int>(best);
  });
  return out;
}

GradCheckResult grad_check(const EncoderParams& params, const Example& example, double epsilon, std::size_t samples,
                           std::uint64_t seed) {
  require(epsilon > 0.0 && epsilon <= 1e-2, fmt::format("epsilon {} outside (0, 1e-2]", epsilon));
  EncoderParams grads = EncoderParams::zeros(params.config);
  accumulate_gradient(params, example, grads, nullptr);

  EncoderParams probe = params;
  auto probe_tensors = probe.tensors();
  const auto grad_tensors = grads.tensors();

  // Candidate rows per tensor; embeddings only contribute rows that the
  // example touches.
  std::vector<TokenId> used_ids(example.ids.begin(), example.ids.end());
  std::sort(used_ids.begin(), used_ids.end());
  used_ids.erase(std::unique(used_ids.begin(), used_ids.end()), used_ids.end());
  std::vector<std::vector<Eigen::Index>> rows(probe_tensors.size());
  std::vector<double> weights(probe_tensors.size());
  for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
    const Matrix& m = *probe_tensors[t].value;
    if (probe_tensors[t].name == "token_embedding") {
      for (const TokenId id : used_ids) rows[t].push_back(id);
    } else if (probe_tensors[t].name == "position_embedding") {
      for (std::size_t i = 0; i < example.ids.size(); ++i) rows[t].push_back(static_cast<Eigen::Index>(i));
    } else {
      for (Eigen::Index r = 0; r < m.rows(); ++r) rows[t].push_back(r);
    }
    weights[t] = static_cast<double>(rows[t].size() * static_cast<std::size_t>(m.cols()));
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);

  const auto loss_at = [&]() {
    const auto trace = forward(example.ids, probe);
    return example.weight * -std::log(trace.probabilities(example.label));
  };

  GradCheckResult result;
  Rng rng(seed);
  for (std::size_t s = 0; s < samples; ++s) {
    double pick = rng.uniform() * total;
    std::size_t t = 0;
    while (t + 1 < weights.size() && pick >= weights[t]) pick -= weights[t++];
    Matrix& m = *probe_tensors[t].value;
    const Eigen::Index r = rows[t][rng.below(rows[t].size())];
    const auto c = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m.cols())));
    const double original = m(r, c);
    m(r, c) = original + epsilon;
    const double up = loss_at();
    m(r, c) = original - epsilon;
    const double down = loss_at();
    m(r, c) = original;
    GradCheckEntry e;
    e.tensor = probe_tensors[t].name;
    e.row = r;
    e.col = c;
    e.analytic = (*grad_tensors[t].value)(r, c);
    e.numeric = (up - down) / (2.0 * epsilon);
    e.relative_error = std::abs(e.analytic - e.numeric) /
                       std::max({std::abs(e.analytic), std::abs(e.numeric), 1e-6});
    result.max_relative_error = std::max(result.max_relative_error, e.relative_error);
    result.entries.push_back(std::move(e));
  }
  return result;
}

}  // namespace vulstyle
