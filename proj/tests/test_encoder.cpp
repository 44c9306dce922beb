#include <doctest.h>

#include <cmath>
#include <numeric>

#include "test_support.hpp"
#include "vulstyle/encoder.hpp"
#include "vulstyle/error.hpp"

using namespace vulstyle;

namespace {

EncoderConfig tiny(int vocab = 40) {
  EncoderConfig c;
  c.layers = 2;
  c.hidden = 16;
  c.heads = 2;
  c.ffn = 32;
  c.vocab = vocab;
  c.max_positions = 32;
  c.dropout = 0.0;
  return c;
}

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  }
  return m;
}

// Oracle: scalar loops, explicit exp/normalize.
Matrix naive_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  Matrix out = Matrix::Zero(q.rows(), v.cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    std::vector<double> s(k.rows());
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      double dot = 0;
      for (Eigen::Index t = 0; t < q.cols(); ++t) dot += q(i, t) * k(j, t);
      s[j] = dot * scale;
    }
    const double m = *std::max_element(s.begin(), s.end());
    double z = 0;
    for (auto& x : s) z += x = std::exp(x - m);
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      for (Eigen::Index t = 0; t < v.cols(); ++t) out(i, t) += s[j] / z * v(j, t);
    }
  }
  return out;
}

Matrix naive_multi_head(const Matrix& h, const LayerParams& layer) {
  const auto heads = static_cast<Eigen::Index>(layer.wq.size());
  const Eigen::Index dk = layer.wq[0].cols();
  Matrix concat(h.rows(), heads * dk);
  for (Eigen::Index i = 0; i < heads; ++i) {
    concat.middleCols(i * dk, dk) = naive_attention(h * layer.wq[i], h * layer.wk[i], h * layer.wv[i]);
  }
  return concat * layer.wo;
}

std::vector<TokenId> random_ids(Rng& rng, std::size_t n, int vocab) {
  std::vector<TokenId> ids{kClsId};
  while (ids.size() < n) ids.push_back(static_cast<TokenId>(kSpecialCount + rng.below(vocab - kSpecialCount)));
  return ids;
}

bool same_params(EncoderParams& a, EncoderParams& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].name != tb[i].name || *ta[i].value != *tb[i].value) return false;
  }
  return true;
}

// Two separable classes: label 1 sequences contain token 9.
std::vector<Example> separable(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    Example e;
    e.label = static_cast<int>(i % 2);
    e.ids = {kClsId};
    for (int t = 0; t < 8; ++t) e.ids.push_back(static_cast<TokenId>(10 + rng.below(20)));
    if (e.label == 1) e.ids[1 + rng.below(8)] = 9;
    e.ids.push_back(kSepId);
    out.push_back(e);
  }
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(tiny().validate());
  auto c = tiny();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny();
  c.vocab = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(EncoderConfig::from_json(tiny().to_json()) == tiny());
  const auto full = EncoderConfig::full_scale(50000, 1026);
  CHECK(full.layers == 12);
  CHECK(full.hidden == 768);
  CHECK(full.d_k() == 64);
}

TEST_CASE("attention: analytic cases") {
  Matrix v(1, 3);
  v << 0.5, -2.0, 3.0;
  CHECK(attention(v, v, v).isApprox(v, 1e-15));

  Matrix q(2, 2), k(2, 2), vals(2, 2);
  q << 1, 2, -3, 0.5;
  k << 0.7, 0.1, 0.7, 0.1;
  vals << 1, 2, 3, 6;
  Matrix mean(2, 2);
  mean << 2, 4, 2, 4;
  CHECK(attention(q, k, vals).isApprox(mean, 1e-14));

  CHECK_THROWS_AS(attention(Matrix(2, 3), Matrix(2, 2), Matrix(2, 2)), Error);
  CHECK_THROWS_AS(attention(Matrix(2, 2), Matrix(2, 2), Matrix(3, 2)), Error);
  CHECK_THROWS_AS(attention(Matrix(2, 0), Matrix(2, 0), Matrix(2, 2)), Error);
}

TEST_CASE("attention: dual implementation and weight properties") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 1 + rng.below(6);
    const Eigen::Index dk = 1 + rng.below(8);
    const Matrix q = random_matrix(rng, n, dk) * 3.0;
    const Matrix k = random_matrix(rng, n, dk);
    const Matrix v = random_matrix(rng, n, 1 + rng.below(5));
    CHECK((attention(q, k, v) - naive_attention(q, k, v)).cwiseAbs().maxCoeff() < 1e-10);

    const Matrix w = attention_weights(q, k);
    for (Eigen::Index i = 0; i < n; ++i) CHECK(std::abs(w.row(i).sum() - 1.0) < 1e-6);
    CHECK(w.minCoeff() >= 0.0);
    CHECK(w.maxCoeff() <= 1.0);

    // Joint scaling of Q and K keeps each row's argmax.
    const double c = 0.2 + 3 * rng.uniform();
    const Matrix ws = attention_weights(q * c, k * c);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index a = 0, b = 0;
      w.row(i).maxCoeff(&a);
      ws.row(i).maxCoeff(&b);
      CHECK(a == b);
    }

    // A single key-value pair returns V.
    const Matrix v1 = random_matrix(rng, 1, 3);
    CHECK(attention(random_matrix(rng, n, dk), random_matrix(rng, 1, dk), v1).isApprox(v1.replicate(n, 1), 1e-15));
  }
}

TEST_CASE("attention: masked keys get zero weight") {
  Rng rng(2);
  const Matrix q = random_matrix(rng, 4, 3), k = random_matrix(rng, 4, 3);
  const std::vector<std::uint8_t> valid{1, 0, 1, 0};
  const Matrix w = attention_weights(q, k, valid);
  CHECK(w.col(1).isZero());
  CHECK(w.col(3).isZero());
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(std::abs(w.row(i).sum() - 1.0) < 1e-12);
}

TEST_CASE("multi-head") {
  Rng rng(3);
  auto params = EncoderParams::init(tiny(), 4);
  const Matrix h = random_matrix(rng, 5, 16);
  const auto& layer = params.layers[0];
  CHECK((multi_head(h, layer) - naive_multi_head(h, layer)).cwiseAbs().maxCoeff() < 1e-10);

  LayerParams zero = layer;
  zero.wo.setZero();
  CHECK(multi_head(h, zero).isZero());

  LayerParams single = layer;
  single.wq = {random_matrix(rng, 16, 16)};
  single.wk = {random_matrix(rng, 16, 16)};
  single.wv = {random_matrix(rng, 16, 16)};
  single.wo = Matrix::Identity(16, 16);
  const Matrix expected = attention(h * single.wq[0], h * single.wk[0], h * single.wv[0]);
  CHECK((multi_head(h, single) - expected).cwiseAbs().maxCoeff() < 1e-12);

  std::vector<Matrix> weights;
  multi_head(h, layer, {}, &weights);
  CHECK(weights.size() == 2);
  CHECK_THROWS_AS(multi_head(random_matrix(rng, 5, 15), layer), Error);
}

TEST_CASE("forward: probabilities, determinism, limits") {
  const auto params = EncoderParams::init(tiny(), 5);
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ids = random_ids(rng, 2 + rng.below(30), 40);
    const auto t = forward(ids, params);
    CHECK(std::abs(t.probabilities.sum() - 1.0) < 1e-6);
    CHECK(t.attention.size() == 2);
    CHECK(t.attention[0].size() == 2);
    for (const auto& layer : t.attention) {
      for (const auto& w : layer) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) CHECK(std::abs(w.row(i).sum() - 1.0) < 1e-6);
      }
    }
    const auto again = forward(ids, params);
    CHECK(again.logits == t.logits);
    CHECK(again.output == t.output);
  }
  CHECK_THROWS_AS(forward(random_ids(rng, 33, 40), params), Error);
  const std::vector<TokenId> bad{kClsId, 40};
  CHECK_THROWS_AS(forward(bad, params), Error);
}

TEST_CASE("forward: permutation of non-CLS tokens") {
  auto params = EncoderParams::init(tiny(), 7);
  params.position_embedding.setZero();
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto ids = random_ids(rng, 3 + rng.below(20), 40);
    if (rng.bernoulli(0.5)) ids.push_back(kPadId);
    std::vector<std::size_t> perm(ids.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm).subspan(1));
    std::vector<TokenId> permuted(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) permuted[i] = ids[perm[i]];

    const auto a = forward(ids, params);
    const auto b = forward(permuted, params);
    CHECK((a.logits - b.logits).cwiseAbs().maxCoeff() < 1e-10);
    for (std::size_t l = 0; l < a.attention.size(); ++l) {
      for (std::size_t h = 0; h < a.attention[l].size(); ++h) {
        const Matrix& wa = a.attention[l][h];
        const Matrix& wb = b.attention[l][h];
        for (std::size_t i = 0; i < ids.size(); ++i) {
          for (std::size_t j = 0; j < ids.size(); ++j) CHECK(std::abs(wb(i, j) - wa(perm[i], perm[j])) < 1e-10);
        }
      }
    }
  }
}

TEST_CASE("token distributions are normalized") {
  const auto params = EncoderParams::init(tiny(), 9);
  Rng rng(10);
  const auto ids = random_ids(rng, 12, 40);
  const auto t = forward(ids, params);
  const std::vector<std::size_t> positions{1, 4, 11};
  const auto d = token_distributions(t, params, positions);
  REQUIRE(d.size() == 3);
  for (const auto& p : d) {
    CHECK(p.size() == 40);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-9);
  }
}

TEST_CASE("gradient check") {
  auto config = tiny();
  config.dropout = 0.1;  // must not affect the deterministic check
  const auto params = EncoderParams::init(config, 11);
  Rng rng(12);
  for (int trial = 0; trial < 3; ++trial) {
    const Example ex{random_ids(rng, 10, 40), static_cast<int>(trial % 2), 1.0 + trial};
    const auto r = grad_check(params, ex, 1e-5, 20, trial);
    CHECK(r.entries.size() == 20);
    CHECK(r.max_relative_error < 1e-4);
  }
  CHECK_THROWS_AS(grad_check(params, {random_ids(rng, 5, 40), 0, 1.0}, 0.0), Error);
  CHECK_THROWS_AS(grad_check(params, {random_ids(rng, 5, 40), 0, 1.0}, 0.02), Error);
}

TEST_CASE("gradient check epsilon sweep decreases then plateaus") {
  const auto params = EncoderParams::init(tiny(), 13);
  Rng rng(14);
  const Example ex{random_ids(rng, 10, 40), 1, 1.0};
  const double e3 = grad_check(params, ex, 1e-3, 40, 5).max_relative_error;
  const double e4 = grad_check(params, ex, 1e-4, 40, 5).max_relative_error;
  const double e5 = grad_check(params, ex, 1e-5, 40, 5).max_relative_error;
  MESSAGE("sweep: " << e3 << " " << e4 << " " << e5);
  CHECK(e4 < e3);
  CHECK(e5 < 1e-4);
  CHECK(e5 > e4 / 100.0);
}

TEST_CASE("zero-loss point has vanishing output gradients") {
  auto params = EncoderParams::init(tiny(), 15);
  params.out_w.setZero();
  params.out_b(0, 0) = -40.0;
  params.out_b(0, 1) = 40.0;
  Rng rng(16);
  const Example ex{random_ids(rng, 8, 40), 1, 1.0};
  auto grads = EncoderParams::zeros(params.config);
  const double loss = accumulate_gradient(params, ex, grads, nullptr);
  CHECK(loss < 1e-30);
  CHECK(grads.out_w.cwiseAbs().maxCoeff() < 1e-8);
  CHECK(grads.out_b.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("training: zero epochs and zero learning rate") {
  const auto data = separable(16, 1);
  auto params = EncoderParams::init(tiny(), 17);
  TrainOptions opt;
  opt.epochs = 0;
  auto r = train_classifier(params, data, opt);
  CHECK(same_params(r.params, params));
  CHECK(r.history.epochs.size() == 1);

  for (const auto optimizer : {Optimizer::sgd, Optimizer::adam}) {
    opt.epochs = 3;
    opt.learning_rate = 0.0;
    opt.optimizer = optimizer;
    r = train_classifier(params, data, opt, data);
    REQUIRE(r.history.epochs.size() == 4);
    for (const auto& e : r.history.epochs) {
      CHECK(e.train_loss == r.history.epochs[0].train_loss);
      CHECK(e.validation_loss == r.history.epochs[0].validation_loss);
    }
    CHECK(same_params(r.params, params));
  }
  CHECK_THROWS_AS(train_classifier(params, std::span<const Example>{}, opt), Error);
}

TEST_CASE("training: loss falls on a separable corpus and is thread independent") {
  const auto data = separable(64, 2);
  const auto params = EncoderParams::init(tiny(), 18);
  TrainOptions opt;
  opt.epochs = 5;
  opt.batch_size = 8;
  opt.learning_rate = 3e-3;
  const auto r = train_classifier(params, data, opt);
  for (std::size_t e = 1; e < r.history.epochs.size(); ++e) {
    CHECK(r.history.epochs[e].train_loss < r.history.epochs[e - 1].train_loss);
  }
  opt.threads = 3;
  auto r3 = train_classifier(params, data, opt);
  auto r1 = r;
  CHECK(same_params(r1.params, r3.params));

  const auto csv = r.history.to_csv();
  CHECK(csv.rfind("epoch,train_loss,validation_loss\n0,", 0) == 0);
}

TEST_CASE("weighted loss normalizes by total weight") {
  const auto params = EncoderParams::init(tiny(), 19);
  auto data = separable(6, 3);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i].weight = 0.5 + i;
    const auto t = forward(data[i].ids, params);
    num += data[i].weight * -std::log(t.probabilities(data[i].label));
    den += data[i].weight;
  }
  CHECK(weighted_loss(params, data) == doctest::Approx(num / den).epsilon(1e-12));
  CHECK(weighted_loss(params, data, 4) == weighted_loss(params, data, 1));
}

TEST_CASE("save and load round-trip") {
  auto params = EncoderParams::init(tiny(), 20);
  const auto dir = testing::temp_dir("enc");
  std::filesystem::create_directories(dir);
  params.save(dir / "p.bin");
  auto back = EncoderParams::load(dir / "p.bin");
  CHECK(back.config == params.config);
  CHECK(same_params(back, params));
  CHECK(back.parameter_count() == params.parameter_count());
  {
    std::ofstream(dir / "junk.bin") << "not a model";
  }
  CHECK_THROWS_AS(EncoderParams::load(dir / "junk.bin"), Error);
  CHECK_THROWS_AS(EncoderParams::load(dir / "missing.bin"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("init is seeded") {
  auto a = EncoderParams::init(tiny(), 21);
  auto b = EncoderParams::init(tiny(), 21);
  auto c = EncoderParams::init(tiny(), 22);
  CHECK(same_params(a, b));
  CHECK_FALSE(same_params(a, c));
  CHECK(a.all_finite());
}
