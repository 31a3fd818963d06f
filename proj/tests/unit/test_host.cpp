// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <doctest.h>

#include "air/host/host.hpp"
#include "air/tensor/gradcheck.hpp"
#include "air/tensor/ops.hpp"
#include "../support/adaptir_oracle.hpp"

using namespace air;
using namespace air::host;
using air::testing::AdaptIROracle;
using air::testing::max_abs_diff;
using air::testing::random_tensor;
using air::testing::randomize;

namespace {

HostConfig tiny_host() {
  HostConfig c;
  c.embed = 8;
  c.layers = 2;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.feature = 3;
  c.tail_width = 4;
  c.seed = 4;
  c.dtype = DType::f64;
  return c;
}

adaptir::AdaptIRConfig tiny_adaptir() {
  adaptir::AdaptIRConfig a;
  a.channels = 8;
  a.reduction = 2;
  a.lim_rank = 2;
  a.dtype = DType::f64;
  a.seed = 9;
  return a;
}

void randomize_adapter(const Adapter& a, Rng& rng) {
  for (auto& f : a.fields()) {
    Tensor t = f.tensor;
    dispatch(t.dtype(), [&]<typename T>() {
      for (auto& v : t.mutable_data<T>()) v = static_cast<T>(rng.uniform(-0.3, 0.3));
    });
  }
}

using Vec = std::vector<double>;

Vec layer_norm_ref(const Vec& x, const Vec& g, const Vec& b, int rows, int c) {
  Vec y(x.size());
  for (int r = 0; r < rows; ++r) {
    double mu = 0, var = 0;
    for (int i = 0; i < c; ++i) mu += x[r * c + i];
    mu /= c;
    for (int i = 0; i < c; ++i) var += (x[r * c + i] - mu) * (x[r * c + i] - mu);
    var /= c;
    for (int i = 0; i < c; ++i) y[r * c + i] = (x[r * c + i] - mu) / std::sqrt(var + 1e-5) * g[i] + b[i];
  }
  return y;
}

// y = x·Wᵀ + b for x rows×in, W out×in.
Vec affine_ref(const Vec& x, const Vec& w, const Vec& b, int rows, int in, int out) {
  Vec y(static_cast<std::size_t>(rows * out));
  for (int r = 0; r < rows; ++r)
    for (int o = 0; o < out; ++o) {
      double acc = b[o];
      for (int i = 0; i < in; ++i) acc += x[r * in + i] * w[o * in + i];
      y[r * out + o] = acc;
    }
  return y;
}

Vec attention_ref(const Vec& x, const Layer& L, int n, int t, int c, int heads) {
  const int rows = n * t, d = c / heads;
  const Vec q = affine_ref(x, L.wq.to_vector(), L.bq.to_vector(), rows, c, c);
  const Vec k = affine_ref(x, L.wk.to_vector(), L.bk.to_vector(), rows, c, c);
  const Vec v = affine_ref(x, L.wv.to_vector(), L.bv.to_vector(), rows, c, c);
  Vec o(x.size(), 0.0);
  for (int s = 0; s < n; ++s)
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < t; ++i) {
        Vec score(static_cast<std::size_t>(t));
        double hi = -1e300;
        for (int j = 0; j < t; ++j) {
          double acc = 0;
          for (int e = 0; e < d; ++e) acc += q[(s * t + i) * c + h * d + e] * k[(s * t + j) * c + h * d + e];
          score[j] = acc / std::sqrt(double(d));
          hi = std::max(hi, score[j]);
        }
        double total = 0;
        for (auto& z : score) total += (z = std::exp(z - hi));
        for (int j = 0; j < t; ++j)
          for (int e = 0; e < d; ++e) o[(s * t + i) * c + h * d + e] += score[j] / total * v[(s * t + j) * c + h * d + e];
      }
  return affine_ref(o, L.wo.to_vector(), L.bo.to_vector(), rows, c, c);
}

Vec mlp_ref(const Vec& x, const Layer& L, int rows, int c, int f) {
  Vec hdn = affine_ref(x, L.mlp_w1.to_vector(), L.mlp_b1.to_vector(), rows, c, f);
  for (auto& z : hdn) z = air::testing::gelu_ref(z);
  return affine_ref(hdn, L.mlp_w2.to_vector(), L.mlp_b2.to_vector(), rows, f, c);
}

// tokens (n·t)×c → n×c×t and back.
Vec tok2map(const Vec& x, int n, int t, int c) {
  Vec m(x.size());
  for (int s = 0; s < n; ++s)
    for (int i = 0; i < t; ++i)
      for (int ch = 0; ch < c; ++ch) m[(s * c + ch) * t + i] = x[(s * t + i) * c + ch];
  return m;
}
Vec map2tok(const Vec& m, int n, int t, int c) {
  Vec x(m.size());
  for (int s = 0; s < n; ++s)
    for (int i = 0; i < t; ++i)
      for (int ch = 0; ch < c; ++ch) x[(s * t + i) * c + ch] = m[(s * c + ch) * t + i];
  return x;
}

}  // namespace

TEST_SUITE("host") {
  TEST_CASE("config validation and insertion parsing") {
    HostConfig c;
    c.heads = 5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(InsertionSpec{} == InsertionSpec::parse("mlp:parallel"));
    CHECK(InsertionSpec::parse("attention:sequential").to_string() == "attention:sequential");
    CHECK_THROWS_AS(InsertionSpec::parse("ffn:parallel"), ConfigError);
    CHECK(HostConfig::from_json(HostConfig{}.to_json()).to_json() == HostConfig{}.to_json());
  }

  TEST_CASE("shape contract, routing and unknown tasks") {
    const HostModel m = HostModel::init(HostConfig{});
    Rng rng(1);
    const Tensor x = random_tensor({1, 3, 32, 32}, rng, 0, 1, DType::f32);
    CHECK(host_forward(x, "noise:25", m).shape() == Shape{1, 3, 32, 32});
    CHECK(host_forward(x, "sr:2", m).shape() == Shape{1, 3, 64, 64});
    CHECK_THROWS_AS(host_forward(x, "sr:3", m), LookupError);
    CHECK(m.route("second_order:2:25", 2) == "sr:2");
    CHECK(m.route("darken:0.2:1", 1) == "noise:25");
    CHECK_THROWS_AS(m.route("sr:4", 4), LookupError);
    CHECK(m.tail("sr:2").factor == 4);
    CHECK(m.tail("noise:25").factor == 2);
  }

  TEST_CASE("fresh adapters are transparent for every wiring") {
    const HostConfig cfg = tiny_host();
    const HostModel m = HostModel::init(cfg);
    Rng rng(2);
    std::vector<Adapter> adapters;
    for (const char* spec : {"mlp:parallel", "mlp:sequential", "attention:parallel", "attention:sequential"})
      adapters.push_back(Adapter::make_adaptir(cfg, tiny_adaptir(), InsertionSpec::parse(spec)));
    baselines::LoRAConfig lc;
    lc.embed = 8;
    lc.ranks = {2, 3};
    lc.dtype = DType::f64;
    adapters.push_back(Adapter::make_lora(cfg, lc));
    baselines::BottleneckConfig bc;
    bc.embed = 8;
    bc.widths = {2, 2, 3, 3};
    bc.dtype = DType::f64;
    adapters.push_back(Adapter::make_bottleneck(cfg, bc));
    for (int trial = 0; trial < 3; ++trial) {
      const Tensor x = random_tensor({2, 3, 6, 6}, rng, 0, 1);
      for (const char* task : {"sr:2", "noise:25"}) {
        const auto ref = host_forward(x, task, m).to_vector();
        for (const auto& a : adapters) CHECK(host_forward(x, task, m, &a).to_vector() == ref);
      }
    }
  }

  TEST_CASE("single layer with parallel MLP adapter vs loop oracle") {
    const HostConfig cfg = tiny_host();
    const HostModel m = HostModel::init(cfg);
    const Adapter a = Adapter::make_adaptir(cfg, tiny_adaptir());
    Rng rng(3);
    randomize_adapter(a, rng);
    const int n = 2, h = 3, w = 4, t = h * w, c = 8;
    const Tensor x = random_tensor({n * t, c}, rng);
    const Layer& L = m.layers()[1];
    const Vec xv = x.to_vector();
    const Vec a_in = layer_norm_ref(xv, L.ln1_g.to_vector(), L.ln1_b.to_vector(), n * t, c);
    const Vec a_out = attention_ref(a_in, L, n, t, c, cfg.heads);
    Vec x1(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) x1[i] = xv[i] + a_out[i];
    const Vec m_in = layer_norm_ref(x1, L.ln2_g.to_vector(), L.ln2_b.to_vector(), n * t, c);
    const Vec m_out = mlp_ref(m_in, L, n * t, c, 16);
    AdaptIROracle oracle{a.adaptir[1], n, h, w};
    const Vec adapted = map2tok(oracle.forward(tok2map(m_in, n, t, c)), n, t, c);
    Vec want(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) want[i] = x1[i] + m_out[i] + adapted[i];
    const Tensor got = layer_forward(x, L, cfg, n, h, w, &a, 1);
    CHECK(max_abs_diff(got.to_vector(), want) < 1e-10);
    // Without the adapter the same oracle minus its term.
    Vec plain(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) plain[i] = x1[i] + m_out[i];
    CHECK(max_abs_diff(layer_forward(x, L, cfg, n, h, w).to_vector(), plain) < 1e-10);
  }

  TEST_CASE("the four insertion wirings differ once the adapter is trained") {
    const HostConfig cfg = tiny_host();
    const HostModel m = HostModel::init(cfg);
    Rng rng(4);
    const Tensor x = random_tensor({1, 3, 6, 6}, rng, 0, 1);
    std::vector<std::vector<double>> outs;
    for (const char* spec : {"mlp:parallel", "mlp:sequential", "attention:parallel", "attention:sequential"}) {
      const Adapter a = Adapter::make_adaptir(cfg, tiny_adaptir(), InsertionSpec::parse(spec));
      Rng same(77);
      randomize_adapter(a, same);
      outs.push_back(host_forward(x, "noise:25", m, &a).to_vector());
    }
    for (std::size_t i = 0; i < outs.size(); ++i)
      for (std::size_t j = 0; j < i; ++j) CHECK(max_abs_diff(outs[i], outs[j]) > 1e-6);
  }

  TEST_CASE("trainable parameters are exactly the adapter's") {
    HostModel m = HostModel::init(HostConfig{});
    freeze(m);
    CHECK(m.frozen());
    CHECK(trainable_parameters(m, nullptr).empty());
    const Adapter a = Adapter::make_adaptir(HostConfig{}, adaptir::AdaptIRConfig{});
    const auto params = trainable_parameters(m, &a);
    std::int64_t total = 0;
    for (const auto& p : params) total += p.tensor.numel();
    CHECK(total == 4 * adaptir::count_parameters(adaptir::AdaptIRConfig{}));
    CHECK(total == 4 * 1365);
    for (const auto& f : m.fields()) CHECK_FALSE(f.tensor.requires_grad());
  }

  TEST_CASE("gradients reach adapters through a frozen host, and host grads are exact") {
    const HostConfig cfg = tiny_host();
    HostModel m = HostModel::init(cfg);
    const Adapter a = Adapter::make_adaptir(cfg, tiny_adaptir(), InsertionSpec::parse("attention:sequential"));
    Rng rng(5);
    randomize_adapter(a, rng);
    const Tensor x = random_tensor({1, 3, 6, 6}, rng, 0, 1);
    // Smooth objective: a fixed linear functional of the output.
    const Tensor probe = random_tensor({1, 3, 12, 12}, rng);
    auto loss = [&] { return sum(mul(host_forward(x, "sr:2", m, &a), probe)); };

    freeze(m);
    const std::string before = m.checksum();
    a.set_requires_grad(true);
    loss().backward();
    for (const auto& f : m.fields()) CHECK_FALSE(f.tensor.has_grad());
    for (auto& f : a.fields()) {
      Tensor leaf = f.tensor;
      const Tensor fd = finite_diff_grad([&] { return loss().item(); }, leaf, 1e-5);
      CAPTURE(f.name);
      CHECK(max_relative_error(leaf.grad(), fd, 1e-6) <= 1e-4);
    }
    CHECK(m.checksum() == before);

    // Host parameters themselves, as pretraining sees them.
    a.set_requires_grad(false);
    m.set_trainable(true);
    loss().backward();
    for (auto& f : m.fields()) {
      if (f.name.rfind("tail.noise", 0) == 0 || f.name.rfind("head.noise", 0) == 0) continue;
      Tensor leaf = f.tensor;
      CAPTURE(f.name);
      if (f.name.ends_with(".bk")) {
        // Softmax is shift-invariant per query, so the key bias has no effect.
        for (double g : leaf.grad().to_vector()) CHECK(std::abs(g) < 1e-12);
        continue;
      }
      const Tensor fd = finite_diff_grad([&] { return loss().item(); }, leaf, 1e-5);
      CHECK(max_relative_error(leaf.grad(), fd, 1e-6) <= 1e-4);
    }
  }

  TEST_CASE("lora and bottleneck act once trained") {
    const HostConfig cfg = tiny_host();
    const HostModel m = HostModel::init(cfg);
    Rng rng(6);
    const Tensor x = random_tensor({1, 3, 6, 6}, rng, 0, 1);
    baselines::LoRAConfig lc;
    lc.embed = 8;
    lc.ranks = {1, 2};
    lc.dtype = DType::f64;
    const Adapter lora = Adapter::make_lora(cfg, lc);
    randomize_adapter(lora, rng);
    baselines::BottleneckConfig bc;
    bc.embed = 8;
    bc.widths = {1, 1, 1, 1};
    bc.dtype = DType::f64;
    const Adapter bn = Adapter::make_bottleneck(cfg, bc);
    randomize_adapter(bn, rng);
    const auto ref = host_forward(x, "noise:25", m).to_vector();
    CHECK(max_abs_diff(host_forward(x, "noise:25", m, &lora).to_vector(), ref) > 1e-6);
    CHECK(max_abs_diff(host_forward(x, "noise:25", m, &bn).to_vector(), ref) > 1e-6);
    CHECK_THROWS_AS(Adapter::make_lora(cfg, baselines::LoRAConfig{}), ConfigError);
  }

  TEST_CASE("host and adapter checkpoints round trip") {
    const HostConfig cfg = tiny_host();
    const HostModel m = HostModel::init(cfg);
    const HostModel back = HostModel::from_checkpoint(decode_checkpoint(encode_checkpoint(m.to_checkpoint()), DType::f64));
    CHECK(back.checksum() == m.checksum());
    CHECK(back.parameter_count() == m.parameter_count());

    Rng rng(7);
    for (const char* spec : {"mlp:parallel", "attention:sequential"}) {
      const Adapter a = Adapter::make_adaptir(cfg, tiny_adaptir(), InsertionSpec::parse(spec));
      randomize_adapter(a, rng);
      const Adapter b = Adapter::from_checkpoint(decode_checkpoint(encode_checkpoint(a.to_checkpoint()), DType::f64));
      CHECK(b.kind == Adapter::Kind::adaptir);
      CHECK(b.insertion == a.insertion);
      CHECK(b.parameter_count() == a.parameter_count());
      const auto fa = a.fields(), fb = b.fields();
      for (std::size_t i = 0; i < fa.size(); ++i) {
        CHECK(fa[i].name == fb[i].name);
        CHECK(max_abs_diff(fa[i].tensor, fb[i].tensor) < 1e-7);
      }
    }
    baselines::LoRAConfig lc;
    lc.embed = 8;
    lc.ranks = {1, 2};
    const Adapter l = Adapter::make_lora(cfg, lc);
    CHECK(Adapter::from_checkpoint(l.to_checkpoint()).parameter_count() == l.parameter_count());
  }

  TEST_CASE("default host size and budget ratio") {
    const HostModel m = HostModel::init(HostConfig{});
    // Independent tally of the default layout.
    const std::int64_t C = 64;
    const std::int64_t head = (3 * 9 * C + C) + (C * C * 9 + C);
    const std::int64_t layer = 2 * (2 * C) + 4 * (C * C + C) + (4 * C * C + 4 * C) + (4 * C * C + C);
    auto tail = [&](std::int64_t f) { return (16 * f * f * C * 9 + 16 * f * f) + (3 * 16 * 9 + 3); };
    CHECK(m.parameter_count() == 2 * head + 4 * layer + tail(4) + tail(2));
    const double ratio = 5460.0 / static_cast<double>(m.parameter_count() + 5460);
    CHECK(ratio <= 0.02);
  }
}
