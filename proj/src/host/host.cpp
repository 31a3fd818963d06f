// SPDX-License-Identifier: Apache-2.0
#include "air/host/host.hpp"

#include <cmath>

#include "air/common/digest.hpp"
#include "air/common/rng.hpp"
#include "air/tensor/ops.hpp"

namespace air::host {
namespace {

struct Slot {
  std::string name;
  Tensor* tensor;
  std::int64_t fan_in;  // 0: bias (zeros); -1: layer-norm gain (ones)
};

Tensor attention(const Tensor& x, const Layer& layer, const HostConfig& cfg, int n, int t,
                 const baselines::LoRALayer* lora) {
  const std::int64_t C = cfg.embed, h = cfg.heads, d = C / h;
  const Tensor wq = lora ? baselines::lora_apply(layer.wq, lora->a_q, lora->b_q, lora->alpha, lora->rank) : layer.wq;
  const Tensor wv = lora ? baselines::lora_apply(layer.wv, lora->a_v, lora->b_v, lora->alpha, lora->rank) : layer.wv;
  auto split = [&](const Tensor& y) { return reshape(permute(reshape(y, {n, t, h, d}), {0, 2, 1, 3}), {n * h, t, d}); };
  const Tensor q = split(linear(x, wq, layer.bq));
  const Tensor k = split(linear(x, layer.wk, layer.bk));
  const Tensor v = split(linear(x, wv, layer.bv));
  const Tensor a = softmax(scale(bmm(q, k, false, true), 1.0 / std::sqrt(static_cast<double>(d))));
  const Tensor o = reshape(permute(reshape(bmm(a, v), {n, h, t, d}), {0, 2, 1, 3}), {n * t, C});
  return linear(o, layer.wo, layer.bo);
}

Tensor mlp(const Tensor& x, const Layer& layer) {
  return linear(gelu(linear(x, layer.mlp_w1, layer.mlp_b1)), layer.mlp_w2, layer.mlp_b2);
}

// Adds the AdaptIR output to a sublayer output when this sublayer hosts it.
Tensor adapt(const Tensor& sub_in, const Tensor& sub_out, Position where, const Adapter* adapter, int l, int n, int h,
             int w) {
  if (!adapter || adapter->kind != Adapter::Kind::adaptir || adapter->insertion.position != where) return sub_out;
  const Tensor& src = adapter->insertion.form == Form::parallel ? sub_in : sub_out;
  const auto& params = adapter->adaptir.at(static_cast<std::size_t>(l));
  return add(sub_out, map_to_tokens(adaptir::forward(tokens_to_map(src, n, h, w), params)));
}

std::vector<Slot> host_slots(HostConfig& cfg, std::vector<Head>& heads, std::vector<Layer>& layers,
                             std::vector<Tail>& tails) {
  const std::int64_t C = cfg.embed, F = static_cast<std::int64_t>(cfg.mlp_ratio) * C, tw = cfg.tail_width;
  std::vector<Slot> s;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const std::string p = "head." + cfg.tasks[i].id + ".";
    s.push_back({p + "w1", &heads[i].w1, 3 * 9});
    s.push_back({p + "b1", &heads[i].b1, 0});
    s.push_back({p + "w2", &heads[i].w2, C * 9});
    s.push_back({p + "b2", &heads[i].b2, 0});
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer& L = layers[l];
    s.push_back({p + "ln1_g", &L.ln1_g, -1});
    s.push_back({p + "ln1_b", &L.ln1_b, 0});
    s.push_back({p + "wq", &L.wq, C});
    s.push_back({p + "bq", &L.bq, 0});
    s.push_back({p + "wk", &L.wk, C});
    s.push_back({p + "bk", &L.bk, 0});
    s.push_back({p + "wv", &L.wv, C});
    s.push_back({p + "bv", &L.bv, 0});
    s.push_back({p + "wo", &L.wo, C});
    s.push_back({p + "bo", &L.bo, 0});
    s.push_back({p + "ln2_g", &L.ln2_g, -1});
    s.push_back({p + "ln2_b", &L.ln2_b, 0});
    s.push_back({p + "mlp_w1", &L.mlp_w1, C});
    s.push_back({p + "mlp_b1", &L.mlp_b1, 0});
    s.push_back({p + "mlp_w2", &L.mlp_w2, F});
    s.push_back({p + "mlp_b2", &L.mlp_b2, 0});
  }
  for (std::size_t i = 0; i < tails.size(); ++i) {
    const std::string p = "tail." + cfg.tasks[i].id + ".";
    s.push_back({p + "w1", &tails[i].w1, C * 9});
    s.push_back({p + "b1", &tails[i].b1, 0});
    s.push_back({p + "w2", &tails[i].w2, tw * 9});
    s.push_back({p + "b2", &tails[i].b2, 0});
  }
  return s;
}

// Shapes the slots must take, in slot order.
std::vector<Shape> host_shapes(const HostConfig& cfg) {
  const std::int64_t C = cfg.embed, F = static_cast<std::int64_t>(cfg.mlp_ratio) * C, tw = cfg.tail_width;
  std::vector<Shape> out;
  for (std::size_t i = 0; i < cfg.tasks.size(); ++i) {
    for (const Shape& s : {Shape{C, 3, 3, 3}, Shape{C}, Shape{C, C, 3, 3}, Shape{C}}) out.push_back(s);
  }
  for (int l = 0; l < cfg.layers; ++l) {
    for (const Shape& s : {Shape{C}, Shape{C}, Shape{C, C}, Shape{C}, Shape{C, C}, Shape{C}, Shape{C, C}, Shape{C},
                           Shape{C, C}, Shape{C}, Shape{C}, Shape{C}, Shape{F, C}, Shape{F}, Shape{C, F}, Shape{C}})
      out.push_back(s);
  }
  for (const auto& task : cfg.tasks) {
    const std::int64_t f = 2LL * task.scale;
    for (const Shape& s : {Shape{tw * f * f, C, 3, 3}, Shape{tw * f * f}, Shape{3, tw, 3, 3}, Shape{3}}) out.push_back(s);
  }
  return out;
}

}  // namespace

InsertionSpec InsertionSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string pos = text.substr(0, colon), form = colon == std::string::npos ? "parallel" : text.substr(colon + 1);
  InsertionSpec s;
  if (pos == "mlp") {
    s.position = Position::mlp;
  } else if (pos == "attention") {
    s.position = Position::attention;
  } else {
    throw ConfigError("insertion '" + text + "': position must be mlp or attention");
  }
  if (form == "parallel") {
    s.form = Form::parallel;
  } else if (form == "sequential") {
    s.form = Form::sequential;
  } else {
    throw ConfigError("insertion '" + text + "': form must be parallel or sequential");
  }
  return s;
}

std::string InsertionSpec::to_string() const {
  return std::string(position == Position::mlp ? "mlp" : "attention") + ":" +
         (form == Form::parallel ? "parallel" : "sequential");
}

void HostConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("host config: " + what); };
  if (embed < 1 || layers < 1 || heads < 1 || mlp_ratio < 1 || feature < 1 || tail_width < 1) {
    fail("all sizes must be positive");
  }
  if (embed % heads != 0) {
    fail("heads " + std::to_string(heads) + " must divide embed " + std::to_string(embed));
  }
  if (tasks.empty()) fail("at least one task");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].scale < 1) fail("task " + tasks[i].id + " has non-positive scale");
    for (std::size_t j = 0; j < i; ++j)
      if (tasks[j].id == tasks[i].id) fail("duplicate task " + tasks[i].id);
  }
}

nlohmann::json HostConfig::to_json() const {
  nlohmann::json t = nlohmann::json::array();
  for (const auto& s : tasks) t.push_back({{"id", s.id}, {"scale", s.scale}});
  return {{"embed", embed},   {"layers", layers},         {"heads", heads}, {"mlp_ratio", mlp_ratio},
          {"feature", feature}, {"tail_width", tail_width}, {"tasks", t},    {"seed", seed},
          {"dtype", air::to_string(dtype)}};
}

HostConfig HostConfig::from_json(const nlohmann::json& j) {
  HostConfig c;
  try {
    c.embed = j.at("embed").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.mlp_ratio = j.at("mlp_ratio").get<int>();
    c.feature = j.value("feature", 16);
    c.tail_width = j.value("tail_width", 16);
    c.tasks.clear();
    for (const auto& t : j.at("tasks")) c.tasks.push_back({t.at("id").get<std::string>(), t.at("scale").get<int>()});
    c.seed = j.value("seed", std::uint64_t{0});
    c.dtype = j.value("dtype", std::string("f32")) == "f64" ? DType::f64 : DType::f32;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("host config: ") + e.what());
  }
  c.validate();
  return c;
}

HostModel HostModel::init(const HostConfig& config) {
  config.validate();
  HostModel m;
  m.config_ = config;
  m.heads_.resize(config.tasks.size());
  m.layers_.resize(static_cast<std::size_t>(config.layers));
  m.tails_.resize(config.tasks.size());
  for (std::size_t i = 0; i < config.tasks.size(); ++i) m.tails_[i].factor = 2 * config.tasks[i].scale;
  Rng rng(config.seed, "host.init");
  const auto shapes = host_shapes(config);
  const auto slots = host_slots(m.config_, m.heads_, m.layers_, m.tails_);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    std::vector<double> v(static_cast<std::size_t>(numel(shapes[i])), 0.0);
    if (slots[i].fan_in < 0) {
      std::fill(v.begin(), v.end(), 1.0);
    } else if (slots[i].fan_in > 0) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(slots[i].fan_in));
      for (auto& x : v) x = rng.uniform(-bound, bound);
    }
    *slots[i].tensor = Tensor::from_values(shapes[i], v, config.dtype);
  }
  return m;
}

std::size_t HostModel::task_index(const std::string& task) const {
  for (std::size_t i = 0; i < config_.tasks.size(); ++i)
    if (config_.tasks[i].id == task) return i;
  throw LookupError("host: task '" + task + "' is not registered");
}

const Head& HostModel::head(const std::string& task) const { return heads_[task_index(task)]; }
const Tail& HostModel::tail(const std::string& task) const { return tails_[task_index(task)]; }

bool HostModel::has_task(const std::string& task) const {
  for (const auto& t : config_.tasks)
    if (t.id == task) return true;
  return false;
}

std::string HostModel::route(const std::string& task, int scale) const {
  if (has_task(task)) return task;
  for (const auto& t : config_.tasks)
    if (t.scale == scale && (scale == 1 || t.id.rfind("sr:", 0) == 0)) return t.id;
  for (const auto& t : config_.tasks)
    if (t.scale == scale) return t.id;
  throw LookupError("host: no head/tail serves task '" + task + "' at scale " + std::to_string(scale));
}

std::vector<NamedTensor> HostModel::fields() const {
  auto* self = const_cast<HostModel*>(this);
  std::vector<NamedTensor> out;
  for (const auto& s : host_slots(self->config_, self->heads_, self->layers_, self->tails_))
    out.push_back({s.name, *s.tensor});
  return out;
}

std::int64_t HostModel::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& f : fields()) n += f.tensor.numel();
  return n;
}

std::string HostModel::checksum() const {
  const auto bytes = field_bytes(fields());
  return sha256_hex(bytes);
}

void HostModel::set_trainable(bool flag) const {
  for (auto& f : fields()) f.tensor.set_requires_grad(flag);
}

Checkpoint HostModel::to_checkpoint() const { return {"host", config_.to_json(), fields()}; }

HostModel HostModel::from_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.kind != "host") throw ParseError("host checkpoint: unexpected kind '" + checkpoint.kind + "'");
  HostModel m = init(HostConfig::from_json(checkpoint.config));
  const auto shapes = host_shapes(m.config_);
  const auto slots = host_slots(m.config_, m.heads_, m.layers_, m.tails_);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const Tensor& t = checkpoint.field(slots[i].name);
    if (t.shape() != shapes[i]) {
      throw ParseError("host checkpoint: field " + slots[i].name + " has shape " + air::to_string(t.shape()) +
                       ", expected " + air::to_string(shapes[i]));
    }
    *slots[i].tensor = t.to(m.config_.dtype);
  }
  return m;
}

void freeze(HostModel& model) {
  model.set_trainable(false);
  model.mark_frozen();
}

Adapter Adapter::none() { return {}; }

Adapter Adapter::make_adaptir(const HostConfig& host, adaptir::AdaptIRConfig config, InsertionSpec insertion) {
  if (config.channels != host.embed) {
    throw ConfigError("adaptir channels " + std::to_string(config.channels) + " must equal host embed " +
                      std::to_string(host.embed));
  }
  Adapter a;
  a.kind = Kind::adaptir;
  a.insertion = insertion;
  const std::uint64_t root = config.seed;
  for (int l = 0; l < host.layers; ++l) {
    config.seed = derive_seed(root, "adaptir.layer", static_cast<std::uint64_t>(l));
    a.adaptir.push_back(adaptir::init(config));
  }
  return a;
}

Adapter Adapter::make_lora(const HostConfig& host, baselines::LoRAConfig config) {
  if (config.embed != host.embed || static_cast<int>(config.ranks.size()) != host.layers) {
    throw ConfigError("lora: needs embed " + std::to_string(host.embed) + " and one rank per layer (" +
                      std::to_string(host.layers) + ")");
  }
  Adapter a;
  a.kind = Kind::lora;
  a.lora = baselines::init_lora(config);
  return a;
}

Adapter Adapter::make_bottleneck(const HostConfig& host, baselines::BottleneckConfig config) {
  if (config.embed != host.embed || static_cast<int>(config.widths.size()) != 2 * host.layers) {
    throw ConfigError("bottleneck: needs embed " + std::to_string(host.embed) + " and two widths per layer (" +
                      std::to_string(2 * host.layers) + ")");
  }
  Adapter a;
  a.kind = Kind::bottleneck;
  a.bottleneck = baselines::init_bottleneck(config);
  return a;
}

std::vector<NamedTensor> Adapter::fields() const {
  switch (kind) {
    case Kind::none:
      return {};
    case Kind::adaptir: {
      std::vector<NamedTensor> out;
      for (std::size_t l = 0; l < adaptir.size(); ++l)
        for (auto& f : adaptir[l].fields()) out.push_back({"layer" + std::to_string(l) + "." + f.name, f.tensor});
      return out;
    }
    case Kind::lora:
      return lora.fields();
    case Kind::bottleneck:
      return bottleneck.fields();
  }
  return {};
}

std::int64_t Adapter::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& f : fields()) n += f.tensor.numel();
  return n;
}

void Adapter::set_requires_grad(bool flag) const {
  for (auto& f : fields()) f.tensor.set_requires_grad(flag);
}

const char* to_string(Adapter::Kind kind) {
  switch (kind) {
    case Adapter::Kind::none:
      return "none";
    case Adapter::Kind::adaptir:
      return "adaptir";
    case Adapter::Kind::lora:
      return "lora";
    case Adapter::Kind::bottleneck:
      return "bottleneck";
  }
  return "none";
}

Adapter::Kind parse_adapter_kind(const std::string& name) {
  for (auto k : {Adapter::Kind::none, Adapter::Kind::adaptir, Adapter::Kind::lora, Adapter::Kind::bottleneck})
    if (name == to_string(k)) return k;
  throw ConfigError("unknown method '" + name + "' (expected adaptir, lora, bottleneck or none)");
}

Checkpoint Adapter::to_checkpoint() const {
  nlohmann::json cfg = {{"method", to_string(kind)}};
  switch (kind) {
    case Kind::adaptir: {
      cfg["insertion"] = insertion.to_string();
      nlohmann::json layers = nlohmann::json::array();
      for (const auto& p : adaptir) layers.push_back(p.config.to_json());
      cfg["layers"] = layers;
      break;
    }
    case Kind::lora:
      cfg["lora"] = lora.config.to_json();
      break;
    case Kind::bottleneck:
      cfg["bottleneck"] = bottleneck.config.to_json();
      break;
    case Kind::none:
      break;
  }
  return {"adapter", cfg, fields()};
}

Adapter Adapter::from_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.kind != "adapter") throw ParseError("adapter checkpoint: unexpected kind '" + checkpoint.kind + "'");
  Adapter a;
  try {
    a.kind = parse_adapter_kind(checkpoint.config.at("method").get<std::string>());
    switch (a.kind) {
      case Kind::adaptir: {
        a.insertion = InsertionSpec::parse(checkpoint.config.at("insertion").get<std::string>());
        const auto& layers = checkpoint.config.at("layers");
        for (std::size_t l = 0; l < layers.size(); ++l) {
          const std::string prefix = "layer" + std::to_string(l) + ".";
          Checkpoint sub{"adaptir", layers[l], {}};
          for (const auto& f : checkpoint.fields)
            if (f.name.rfind(prefix, 0) == 0) sub.fields.push_back({f.name.substr(prefix.size()), f.tensor});
          a.adaptir.push_back(adaptir::from_checkpoint(sub));
        }
        break;
      }
      case Kind::lora:
        a.lora = baselines::lora_from_checkpoint({"lora", checkpoint.config.at("lora"), checkpoint.fields});
        break;
      case Kind::bottleneck:
        a.bottleneck =
            baselines::bottleneck_from_checkpoint({"bottleneck", checkpoint.config.at("bottleneck"), checkpoint.fields});
        break;
      case Kind::none:
        break;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("adapter checkpoint: ") + e.what());
  }
  return a;
}

Tensor tokens_to_map(const Tensor& tokens, int n, int h, int w) {
  const std::int64_t c = tokens.dim(1);
  return reshape(permute(reshape(tokens, {n, static_cast<std::int64_t>(h) * w, c}), {0, 2, 1}), {n, c, h, w});
}

Tensor map_to_tokens(const Tensor& map) {
  const std::int64_t n = map.dim(0), c = map.dim(1), hw = map.dim(2) * map.dim(3);
  return reshape(permute(reshape(map, {n, c, hw}), {0, 2, 1}), {n * hw, c});
}

Tensor layer_forward(const Tensor& tokens, const Layer& layer, const HostConfig& config, int n, int h, int w,
                     const Adapter* adapter, int layer_index) {
  const int t = h * w;
  const baselines::LoRALayer* lora = nullptr;
  if (adapter && adapter->kind == Adapter::Kind::lora) lora = &adapter->lora.layers.at(static_cast<std::size_t>(layer_index));
  const bool bottleneck = adapter && adapter->kind == Adapter::Kind::bottleneck;
  const auto act = bottleneck ? adapter->bottleneck.config.activation : baselines::Activation::gelu;

  const Tensor a_in = layer_norm(tokens, layer.ln1_g, layer.ln1_b);
  Tensor a_out = attention(a_in, layer, config, n, t, lora);
  a_out = adapt(a_in, a_out, Position::attention, adapter, layer_index, n, h, w);
  if (bottleneck) a_out = baselines::bottleneck_forward(a_out, adapter->bottleneck.sites.at(2 * layer_index), act);
  const Tensor x = add(tokens, a_out);

  const Tensor m_in = layer_norm(x, layer.ln2_g, layer.ln2_b);
  Tensor m_out = mlp(m_in, layer);
  m_out = adapt(m_in, m_out, Position::mlp, adapter, layer_index, n, h, w);
  if (bottleneck) m_out = baselines::bottleneck_forward(m_out, adapter->bottleneck.sites.at(2 * layer_index + 1), act);
  return add(x, m_out);
}

Tensor host_forward(const Tensor& img, const std::string& task, const HostModel& model, const Adapter* adapter) {
  const Head& head = model.head(task);
  const Tail& tail = model.tail(task);
  if (img.rank() != 4 || img.dim(1) != 3 || img.dim(2) % 2 != 0 || img.dim(3) % 2 != 0) {
    throw ShapeError("host_forward: expected N×3×H×W with even H and W, got " + air::to_string(img.shape()));
  }
  const HostConfig& cfg = model.config();
  const int n = static_cast<int>(img.dim(0)), h = static_cast<int>(img.dim(2) / 2), w = static_cast<int>(img.dim(3) / 2);
  const Tensor shallow = conv2d(gelu(conv2d(img, head.w1, head.b1)), head.w2, head.b2, {.stride = 2, .groups = 1});
  Tensor tokens = map_to_tokens(shallow);
  for (int l = 0; l < cfg.layers; ++l) {
    tokens = layer_forward(tokens, model.layers()[static_cast<std::size_t>(l)], cfg, n, h, w, adapter, l);
  }
  const Tensor feature = add(tokens_to_map(tokens, n, h, w), shallow);
  const Tensor up = depth_to_space(conv2d(feature, tail.w1, tail.b1), tail.factor);
  return conv2d(up, tail.w2, tail.b2);
}

std::vector<NamedTensor> trainable_parameters(const HostModel&, const Adapter* adapter) {
  if (!adapter) return {};
  return adapter->fields();
}

}  // namespace air::host
