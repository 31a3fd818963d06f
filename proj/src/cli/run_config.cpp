// SPDX-License-Identifier: Apache-2.0
#include "air/cli/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "air/data/image.hpp"

namespace air::cli {
namespace {

enum class Kind { integer, unsigned_integer, real, text, flag };

struct Key {
  const char* name;
  Kind kind;
  const char* fallback;
};

// Declaration order is the order of resolved dumps.
constexpr Key kKeys[] = {
    {"seed", Kind::unsigned_integer, "0"},
    {"out", Kind::text, "runs/default"},
    {"method", Kind::text, "adaptir"},
    {"task", Kind::text, "second_order:2:25"},
    {"epochs", Kind::integer, "25"},
    {"lr", Kind::real, "5e-3"},
    {"weight_decay", Kind::real, "0"},
    {"host_checkpoint", Kind::text, ""},
    {"adapter_checkpoint", Kind::text, ""},
    {"pretrain.epochs", Kind::integer, "40"},
    {"pretrain.lr", Kind::real, "2e-3"},
    {"pretrain.weight_decay", Kind::real, "0"},
    {"data.corpus_size", Kind::integer, "64"},
    {"data.image_size", Kind::integer, "96"},
    {"data.crop", Kind::integer, "32"},
    {"data.batch", Kind::integer, "8"},
    {"data.heldout", Kind::integer, "16"},
    {"host.embed", Kind::integer, "64"},
    {"host.layers", Kind::integer, "4"},
    {"host.heads", Kind::integer, "4"},
    {"host.mlp_ratio", Kind::integer, "4"},
    {"host.feature", Kind::integer, "16"},
    {"host.tail_width", Kind::integer, "16"},
    {"host.tasks", Kind::text, "sr:2,noise:25"},
    {"host.dtype", Kind::text, "f32"},
    {"adaptir.reduction", Kind::integer, "8"},
    {"adaptir.lim_rank", Kind::integer, "4"},
    {"adaptir.kernel", Kind::integer, "3"},
    {"adaptir.ffn_hidden", Kind::integer, "0"},
    {"adaptir.insertion", Kind::text, "mlp:parallel"},
    {"ablate.axes", Kind::text, "efficiency,components,insertion"},
    {"ablate.epochs", Kind::integer, "10"},
    {"eval.dump_images", Kind::integer, "0"},
    {"gradcheck.fam_sign_flip", Kind::flag, "0"},
};

const Key* find_key(const std::string& name) {
  for (const auto& k : kKeys)
    if (name == k.name) return &k;
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
bool parse_number(const std::string& v, T& out) {
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  return ec == std::errc() && ptr == end;
}

void check_value(const Key& k, const std::string& v) {
  auto bad = [&](const char* what) {
    throw ConfigError("config: key '" + std::string(k.name) + "' expects " + what + ", got '" + v + "'");
  };
  switch (k.kind) {
    case Kind::integer: {
      long long x = 0;
      if (!parse_number(v, x)) bad("an integer");
      break;
    }
    case Kind::unsigned_integer: {
      std::uint64_t x = 0;
      if (!parse_number(v, x)) bad("a non-negative integer");
      break;
    }
    case Kind::real: {
      // from_chars for double is missing from older libstdc++.
      std::size_t used = 0;
      double x = 0;
      try {
        x = std::stod(v, &used);
      } catch (const std::exception&) {
        bad("a number");
      }
      if (used != v.size() || !std::isfinite(x)) bad("a number");
      break;
    }
    case Kind::flag:
      if (v != "0" && v != "1") bad("0 or 1");
      break;
    case Kind::text:
      break;
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : kKeys) entries_.emplace_back(k.name, k.fallback);
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected 'key = value'");
    }
    try {
      cfg.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(number) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FileError("cannot open config " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return parse(buf.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const Key* k = find_key(key);
  if (!k) throw ConfigError("config: unknown key '" + key + "'");
  check_value(*k, value);
  for (auto& [name, v] : entries_)
    if (name == key) v = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  for (const auto& [name, v] : entries_)
    if (name == key) return v;
  throw ConfigError("config: unknown key '" + key + "'");
}

bool RunConfig::has_key(const std::string& key) const { return find_key(key) != nullptr; }

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [name, v] : entries_) out += name + " = " + v + "\n";
  return out;
}

int RunConfig::as_int(const std::string& key) const { return std::stoi(get(key)); }
double RunConfig::as_double(const std::string& key) const { return std::stod(get(key)); }

std::filesystem::path RunConfig::out_dir() const { return get("out"); }

std::filesystem::path RunConfig::host_checkpoint() const {
  const std::string& p = get("host_checkpoint");
  return p.empty() ? out_dir() / "host.ckpt" : std::filesystem::path(p);
}

std::uint64_t RunConfig::seed() const { return std::stoull(get("seed")); }

host::HostConfig RunConfig::host() const {
  host::HostConfig h;
  h.embed = as_int("host.embed");
  h.layers = as_int("host.layers");
  h.heads = as_int("host.heads");
  h.mlp_ratio = as_int("host.mlp_ratio");
  h.feature = as_int("host.feature");
  h.tail_width = as_int("host.tail_width");
  h.tasks.clear();
  for (const auto& id : split_list(get("host.tasks"))) {
    const auto spec = data::DegradationSpec::parse(id);
    h.tasks.push_back({spec.id(), spec.output_scale()});
  }
  h.dtype = parse_dtype(get("host.dtype"));
  h.seed = seed();
  h.validate();
  return h;
}

namespace {

pipeline::DataConfig data_config(const RunConfig& c) {
  pipeline::DataConfig d;
  d.corpus_size = std::stoi(c.get("data.corpus_size"));
  d.image_size = std::stoi(c.get("data.image_size"));
  d.crop = std::stoi(c.get("data.crop"));
  d.batch = std::stoi(c.get("data.batch"));
  d.heldout = std::stoi(c.get("data.heldout"));
  if (d.corpus_size < 1 || d.batch < 1 || d.heldout < 1 || d.crop < 2) {
    throw ConfigError("config: data sizes must be positive");
  }
  return d;
}

}  // namespace

pipeline::PretrainConfig RunConfig::pretrain() const {
  pipeline::PretrainConfig p;
  p.epochs = as_int("pretrain.epochs");
  p.lr = as_double("pretrain.lr");
  p.adamw.weight_decay = as_double("pretrain.weight_decay");
  p.data = data_config(*this);
  p.seed = seed();
  if (p.epochs < 1) throw ConfigError("config: pretrain.epochs must be positive");
  return p;
}

pipeline::FinetuneConfig RunConfig::finetune() const {
  pipeline::FinetuneConfig f;
  f.method = pipeline::parse_method(get("method"));
  f.task = data::DegradationSpec::parse(get("task")).id();
  f.epochs = as_int("epochs");
  f.lr = as_double("lr");
  f.adamw.weight_decay = as_double("weight_decay");
  f.data = data_config(*this);
  f.adaptir.reduction = as_int("adaptir.reduction");
  f.adaptir.lim_rank = as_int("adaptir.lim_rank");
  f.adaptir.kernel = as_int("adaptir.kernel");
  f.adaptir.ffn_hidden = as_int("adaptir.ffn_hidden");
  f.adaptir.channels = as_int("host.embed");
  f.adaptir.validate();
  f.insertion = host::InsertionSpec::parse(get("adaptir.insertion"));
  f.seed = seed();
  if (f.epochs < 1) throw ConfigError("config: epochs must be positive");
  return f;
}

pipeline::GradcheckOptions RunConfig::gradcheck() const {
  pipeline::GradcheckOptions g;
  g.seed = seed();
  if (get("gradcheck.fam_sign_flip") == "1") g.fam_grad_factor = -1.0;
  return g;
}

std::vector<pipeline::AblationAxis> RunConfig::axes() const {
  std::vector<pipeline::AblationAxis> out;
  for (const auto& name : split_list(get("ablate.axes"))) out.push_back(pipeline::parse_axis(name));
  if (out.empty()) throw ConfigError("config: ablate.axes is empty");
  return out;
}

int RunConfig::dump_images() const { return as_int("eval.dump_images"); }

void RunConfig::validate() const {
  (void)host();
  (void)pretrain();
  (void)finetune();
  (void)axes();
  if (as_int("ablate.epochs") < 1) throw ConfigError("config: ablate.epochs must be positive");
  if (dump_images() < 0) throw ConfigError("config: eval.dump_images must be non-negative");
}

}  // namespace air::cli
