// SPDX-License-Identifier: Apache-2.0
#include "air/baselines/baselines.hpp"

#include <cmath>

#include "air/common/rng.hpp"
#include "air/tensor/ops.hpp"

namespace air::baselines {
namespace {

Tensor uniform_fan_in(const Shape& shape, std::int64_t fan_in, Rng& rng, DType dtype) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from_values(shape, v, dtype);
}

std::int64_t total(const std::vector<NamedTensor>& fields) {
  std::int64_t n = 0;
  for (const auto& f : fields) n += f.tensor.numel();
  return n;
}

DType parse_dtype(const nlohmann::json& j) {
  return j.value("dtype", std::string("f32")) == "f64" ? DType::f64 : DType::f32;
}

// Even split of `units` over `slots` (larger shares last), then a check that
// the resulting count lands within tolerance of the target.
std::vector<int> spread(std::int64_t target, std::int64_t fixed, std::int64_t unit, int slots, double tolerance,
                        const char* method) {
  if (slots < 1 || target <= 0) {
    throw ConfigError(std::string(method) + " budget: target and slot count must be positive");
  }
  const double ideal = static_cast<double>(target - fixed) / static_cast<double>(unit);
  const std::int64_t units = std::max<std::int64_t>(slots, std::llround(ideal));
  std::vector<int> out(static_cast<std::size_t>(slots), static_cast<int>(units / slots));
  const std::int64_t rem = units % slots;
  for (std::int64_t i = 0; i < rem; ++i) ++out[static_cast<std::size_t>(slots - 1 - i)];
  const double achieved = static_cast<double>(fixed + units * unit);
  const double rel = std::abs(achieved - static_cast<double>(target)) / static_cast<double>(target);
  if (rel > tolerance) {
    throw ConfigError(std::string(method) + " budget: closest allocation has " +
                      std::to_string(static_cast<std::int64_t>(achieved)) + " parameters, target " +
                      std::to_string(target));
  }
  return out;
}

std::vector<int> int_list(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("baseline config: ") + e.what());
  }
}

}  // namespace

Tensor lora_apply(const Tensor& w_frozen, const Tensor& a, const Tensor& b, double alpha, int rank) {
  if (rank <= 0) throw ConfigError("lora_apply: rank must be positive, got " + std::to_string(rank));
  if (w_frozen.rank() != 2 || a.rank() != 2 || b.rank() != 2 || a.dim(0) != rank || b.dim(1) != rank ||
      a.dim(1) != w_frozen.dim(1) || b.dim(0) != w_frozen.dim(0)) {
    throw ShapeError("lora_apply: W " + air::to_string(w_frozen.shape()) + ", A " + air::to_string(a.shape()) + ", B " +
                     air::to_string(b.shape()) + " at rank " + std::to_string(rank));
  }
  return add(w_frozen, scale(matmul(b, a), alpha / rank));
}

void LoRAConfig::validate() const {
  if (embed < 1) throw ConfigError("lora config: embed must be positive");
  if (ranks.empty()) throw ConfigError("lora config: at least one layer");
  for (int r : ranks)
    if (r < 1) throw ConfigError("lora config: rank must be positive, got " + std::to_string(r));
  if (alpha < 0) throw ConfigError("lora config: alpha must be non-negative");
}

nlohmann::json LoRAConfig::to_json() const {
  return {{"embed", embed}, {"ranks", ranks}, {"alpha", alpha}, {"seed", seed}, {"dtype", air::to_string(dtype)}};
}

LoRAConfig LoRAConfig::from_json(const nlohmann::json& j) {
  LoRAConfig c;
  c.embed = j.value("embed", 64);
  c.ranks = int_list(j, "ranks");
  c.alpha = j.value("alpha", 0.0);
  c.seed = j.value("seed", std::uint64_t{0});
  c.dtype = parse_dtype(j);
  c.validate();
  return c;
}

std::vector<NamedTensor> LoRAParams::fields() const {
  std::vector<NamedTensor> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    out.push_back({pre + "a_q", layers[l].a_q});
    out.push_back({pre + "b_q", layers[l].b_q});
    out.push_back({pre + "a_v", layers[l].a_v});
    out.push_back({pre + "b_v", layers[l].b_v});
  }
  return out;
}

std::int64_t LoRAParams::parameter_count() const { return total(fields()); }

void LoRAParams::set_requires_grad(bool flag) const {
  for (auto& f : fields()) f.tensor.set_requires_grad(flag);
}

LoRAParams init_lora(const LoRAConfig& config) {
  config.validate();
  LoRAParams p;
  p.config = config;
  Rng rng(config.seed, "lora.init");
  const std::int64_t C = config.embed;
  for (int r : config.ranks) {
    LoRALayer layer;
    layer.rank = r;
    layer.alpha = config.alpha > 0 ? config.alpha : r;
    layer.a_q = uniform_fan_in({r, C}, C, rng, config.dtype);
    layer.b_q = Tensor::zeros({C, r}, config.dtype);
    layer.a_v = uniform_fan_in({r, C}, C, rng, config.dtype);
    layer.b_v = Tensor::zeros({C, r}, config.dtype);
    p.layers.push_back(layer);
  }
  return p;
}

Activation parse_activation(const std::string& name) {
  if (name == "gelu") return Activation::gelu;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + name + "' (expected gelu or identity)");
}

const char* to_string(Activation a) { return a == Activation::gelu ? "gelu" : "identity"; }

void BottleneckConfig::validate() const {
  if (embed < 1) throw ConfigError("bottleneck config: embed must be positive");
  if (widths.empty()) throw ConfigError("bottleneck config: at least one site");
  for (int d : widths)
    if (d < 1) throw ConfigError("bottleneck config: width must be positive, got " + std::to_string(d));
}

nlohmann::json BottleneckConfig::to_json() const {
  return {{"embed", embed},
          {"widths", widths},
          {"activation", to_string(activation)},
          {"seed", seed},
          {"dtype", air::to_string(dtype)}};
}

BottleneckConfig BottleneckConfig::from_json(const nlohmann::json& j) {
  BottleneckConfig c;
  c.embed = j.value("embed", 64);
  c.widths = int_list(j, "widths");
  c.activation = parse_activation(j.value("activation", std::string("gelu")));
  c.seed = j.value("seed", std::uint64_t{0});
  c.dtype = parse_dtype(j);
  c.validate();
  return c;
}

std::vector<NamedTensor> BottleneckParams::fields() const {
  std::vector<NamedTensor> out;
  for (std::size_t s = 0; s < sites.size(); ++s) {
    const std::string pre = "site" + std::to_string(s) + ".";
    out.push_back({pre + "down_w", sites[s].down_w});
    out.push_back({pre + "down_b", sites[s].down_b});
    out.push_back({pre + "up_w", sites[s].up_w});
    out.push_back({pre + "up_b", sites[s].up_b});
  }
  return out;
}

std::int64_t BottleneckParams::parameter_count() const { return total(fields()); }

void BottleneckParams::set_requires_grad(bool flag) const {
  for (auto& f : fields()) f.tensor.set_requires_grad(flag);
}

BottleneckParams init_bottleneck(const BottleneckConfig& config) {
  config.validate();
  BottleneckParams p;
  p.config = config;
  Rng rng(config.seed, "bottleneck.init");
  const std::int64_t C = config.embed;
  for (int d : config.widths) {
    BottleneckSite s;
    s.down_w = uniform_fan_in({d, C}, C, rng, config.dtype);
    s.down_b = Tensor::zeros({d}, config.dtype);
    s.up_w = Tensor::zeros({C, d}, config.dtype);
    s.up_b = Tensor::zeros({C}, config.dtype);
    p.sites.push_back(s);
  }
  return p;
}

Tensor bottleneck_forward(const Tensor& x, const BottleneckSite& site, Activation activation) {
  if (x.rank() != 2 || x.dim(1) != site.down_w.dim(1)) {
    throw ShapeError("bottleneck_forward: tokens " + air::to_string(x.shape()) + " for embed " +
                     std::to_string(site.down_w.dim(1)));
  }
  Tensor hidden = linear(x, site.down_w, site.down_b);
  if (activation == Activation::gelu) hidden = gelu(hidden);
  return add(x, linear(hidden, site.up_w, site.up_b));
}

std::vector<int> lora_ranks_for_budget(std::int64_t target, int embed, int layers, double tolerance) {
  return spread(target, 0, 4LL * embed, layers, tolerance, "lora");
}

std::vector<int> bottleneck_widths_for_budget(std::int64_t target, int embed, int layers, double tolerance) {
  const int sites = 2 * layers;
  return spread(target, static_cast<std::int64_t>(sites) * embed, 2LL * embed + 1, sites, tolerance, "bottleneck");
}

std::int64_t count_parameters(const LoRAConfig& config) {
  config.validate();
  std::int64_t n = 0;
  for (int r : config.ranks) n += 2 * (static_cast<std::int64_t>(r) * config.embed * 2);
  return n;
}

std::int64_t count_parameters(const BottleneckConfig& config) {
  config.validate();
  std::int64_t n = 0;
  for (int d : config.widths) n += static_cast<std::int64_t>(d) * (2 * config.embed + 1) + config.embed;
  return n;
}

Checkpoint to_checkpoint(const LoRAParams& p) { return {"lora", p.config.to_json(), p.fields()}; }

Checkpoint to_checkpoint(const BottleneckParams& p) { return {"bottleneck", p.config.to_json(), p.fields()}; }

LoRAParams lora_from_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.kind != "lora") throw ParseError("lora checkpoint: unexpected kind '" + checkpoint.kind + "'");
  LoRAParams p = init_lora(LoRAConfig::from_json(checkpoint.config));
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    auto& layer = p.layers[l];
    for (auto [name, slot] : {std::pair{"a_q", &layer.a_q}, {"b_q", &layer.b_q}, {"a_v", &layer.a_v}, {"b_v", &layer.b_v}}) {
      const Tensor& t = checkpoint.field(pre + name);
      if (t.shape() != slot->shape()) throw ParseError("lora checkpoint: field " + pre + name + " has wrong shape");
      *slot = t.to(p.config.dtype);
    }
  }
  return p;
}

BottleneckParams bottleneck_from_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.kind != "bottleneck") {
    throw ParseError("bottleneck checkpoint: unexpected kind '" + checkpoint.kind + "'");
  }
  BottleneckParams p = init_bottleneck(BottleneckConfig::from_json(checkpoint.config));
  for (std::size_t s = 0; s < p.sites.size(); ++s) {
    const std::string pre = "site" + std::to_string(s) + ".";
    auto& site = p.sites[s];
    for (auto [name, slot] :
         {std::pair{"down_w", &site.down_w}, {"down_b", &site.down_b}, {"up_w", &site.up_w}, {"up_b", &site.up_b}}) {
      const Tensor& t = checkpoint.field(pre + name);
      if (t.shape() != slot->shape()) {
        throw ParseError("bottleneck checkpoint: field " + pre + name + " has wrong shape");
      }
      *slot = t.to(p.config.dtype);
    }
  }
  return p;
}

}  // namespace air::baselines
