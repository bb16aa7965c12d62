// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlsr/harness.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "fedlsr/error.hpp"

namespace fedlsr {
namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Diagnostics

struct Context {
  const std::string& text;
  const std::string& origin;

  // Line of the first occurrence of "key" after the first occurrence of the
  // enclosing section's key; 0 if not found.
  int line_of(const std::string& section, const std::string& key) const {
    std::size_t from = 0;
    if (!section.empty()) {
      const auto top = section.substr(0, section.find_first_of(".["));
      const auto at = text.find('"' + top + '"');
      if (at != std::string::npos) from = at;
    }
    auto at = text.find('"' + key + '"', from);
    if (at == std::string::npos) at = text.find('"' + key + '"');
    if (at == std::string::npos) return 0;
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(at), '\n'));
  }

  [[noreturn]] void fail(const std::string& section, const std::string& key,
                         const std::string& message) const {
    const std::string where = section.empty() ? key : section + "." + key;
    const int line = line_of(section, key);
    if (line > 0) throw ConfigError(fmt::format("{}:{}: {}: {}", origin, line, where, message));
    throw ConfigError(fmt::format("{}: {}: {}", origin, where, message));
  }
};

// Reads typed fields from one JSON object and rejects keys it never asked for.
class Section {
 public:
  Section(const Context& ctx, const json* node, std::string path)
      : ctx_(ctx), node_(node), path_(std::move(path)) {
    if (node_ && !node_->is_object()) {
      const auto dot = path_.rfind('.');
      ctx_.fail(dot == std::string::npos ? "" : path_.substr(0, dot),
                dot == std::string::npos ? path_ : path_.substr(dot + 1), "expected an object");
    }
  }

  const json* raw(const std::string& key) {
    allowed_.insert(key);
    if (!node_) return nullptr;
    const auto it = node_->find(key);
    if (it == node_->end() || it->is_null()) return nullptr;
    return &*it;
  }

  std::optional<double> number(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_number()) fail(key, "expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d)) fail(key, "expected a finite number");
    return d;
  }

  std::optional<long long> integer(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_number_integer()) fail(key, "expected an integer");
    if (v->is_number_unsigned() && v->get<std::uint64_t>() > static_cast<std::uint64_t>(INT32_MAX)) {
      fail(key, "integer out of range");
    }
    const auto i = v->get<long long>();
    if (i < INT32_MIN || i > INT32_MAX) fail(key, "integer out of range");
    return i;
  }

  std::optional<std::size_t> count(const std::string& key) {
    const auto i = integer(key);
    if (!i) return std::nullopt;
    if (*i < 0) fail(key, "expected a non-negative integer");
    return static_cast<std::size_t>(*i);
  }

  std::optional<std::uint64_t> u64(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
    return v->get<std::uint64_t>();
  }

  std::optional<bool> boolean(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_boolean()) fail(key, "expected true or false");
    return v->get<bool>();
  }

  std::optional<std::string> string(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_string()) fail(key, "expected a string");
    return v->get<std::string>();
  }

  std::optional<std::vector<std::size_t>> counts(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_array()) fail(key, "expected an array of integers");
    std::vector<std::size_t> out;
    for (const auto& e : *v) {
      if (!e.is_number_unsigned()) fail(key, "expected an array of non-negative integers");
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }

  // Runs `parse` and rewraps library validation errors as config errors.
  template <class T, class Fn>
  T parsed(const std::string& key, T fallback, Fn&& parse) {
    const auto s = string(key);
    if (!s) return fallback;
    try {
      return parse(*s);
    } catch (const InvalidParameter& e) {
      fail(key, e.what());
    }
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [key, _] : node_->items()) {
      if (!allowed_.count(key)) fail(key, "unknown key");
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& message) const {
    ctx_.fail(path_, key, message);
  }

  const std::string& path() const { return path_; }

 private:
  const Context& ctx_;
  const json* node_;
  std::string path_;
  std::set<std::string> allowed_;
};

const json* child(const json& root, const std::string& key) {
  const auto it = root.find(key);
  return it == root.end() || it->is_null() ? nullptr : &*it;
}

template <class Fn>
void checked(const Context& ctx, const std::string& section, const std::string& key, Fn&& fn) {
  try {
    fn();
  } catch (const InvalidParameter& e) {
    ctx.fail(section, key, e.what());
  }
}

// ---------------------------------------------------------------------------
// Defaults

constexpr std::array<double, 5> kSymRatios{0.3, 0.4, 0.5, 0.6, 0.7};
constexpr std::array<double, 3> kPairRatios{0.2, 0.3, 0.4};

struct GammaRow {
  std::array<double, 5> sym;
  std::array<double, 3> pair;
};

constexpr GammaRow kGammaMnist{{0.15, 0.20, 0.25, 0.30, 0.80}, {0.40, 0.60, 1.00}};
constexpr GammaRow kGammaFashion{{0.15, 0.20, 0.25, 0.30, 0.60}, {0.40, 0.60, 1.00}};
constexpr GammaRow kGammaCifar{{0.10, 0.20, 0.25, 0.30, 0.60}, {0.30, 0.60, 0.80}};

template <std::size_t N>
double nearest(const std::array<double, N>& keys, const std::array<double, N>& values,
               double ratio) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < N; ++i) {
    if (std::abs(keys[i] - ratio) < std::abs(keys[best] - ratio)) best = i;
  }
  return values[best];
}

std::string augment_name(const AugmentOp& op) {
  if (std::holds_alternative<HorizontalFlip>(op)) return "flip";
  if (std::holds_alternative<Rotation>(op)) return "rotation";
  return "jitter";
}

bool needs_image(const AugmentPolicy& policy) {
  return std::any_of(policy.ops.begin(), policy.ops.end(), [](const AugmentOp& op) {
    return !std::holds_alternative<FeatureJitter>(op);
  });
}

// ---------------------------------------------------------------------------
// Parsing

DatasetSpec parse_dataset(const Context& ctx, const json* node) {
  Section s(ctx, node, "dataset");
  DatasetSpec d;
  d.source = s.parsed("source", DatasetSource::kSynthetic, [](const std::string& v) {
    if (v == "synthetic") return DatasetSource::kSynthetic;
    if (v == "idx") return DatasetSource::kIdx;
    if (v == "csv") return DatasetSource::kCsv;
    throw InvalidParameter("unknown dataset source '" + v + "' (synthetic, idx, csv)");
  });
  d.family = d.source == DatasetSource::kIdx ? DatasetFamily::kMnist : DatasetFamily::kSynthetic;
  d.family = s.parsed("family", d.family, parse_dataset_family);
  if (auto v = s.integer("num_classes")) d.num_classes = static_cast<int>(*v);
  if (d.num_classes < 2) s.fail("num_classes", "must be >= 2");

  if (d.source == DatasetSource::kSynthetic) {
    if (auto v = s.count("n")) d.n = *v;
    if (auto v = s.count("n_test")) d.n_test = *v;
    if (auto v = s.count("dim")) d.dim = *v;
    d.seed = s.u64("seed");
    if (d.n_test == 0 || d.n_test % static_cast<std::size_t>(d.num_classes) != 0) {
      s.fail("n_test", "must be a positive multiple of num_classes");
    }
    if (d.n < static_cast<std::size_t>(d.num_classes)) s.fail("n", "must be >= num_classes");
    if (d.dim < 2) s.fail("dim", "must be >= 2");
  } else if (d.source == DatasetSource::kIdx) {
    for (auto [key, field] : {std::pair{"train_images", &d.train_images},
                              std::pair{"train_labels", &d.train_labels},
                              std::pair{"test_images", &d.test_images},
                              std::pair{"test_labels", &d.test_labels}}) {
      const auto v = s.string(key);
      if (!v) s.fail(key, "required for idx datasets");
      *field = *v;
    }
  } else {
    for (auto [key, field] :
         {std::pair{"train", &d.train_csv}, std::pair{"test", &d.test_csv}}) {
      const auto v = s.string(key);
      if (!v) s.fail(key, "required for csv datasets");
      *field = *v;
    }
    if (auto v = s.counts("image_shape")) {
      if (v->size() != 3) s.fail("image_shape", "expected [height, width, channels]");
      d.image_shape = ImageShape{(*v)[0], (*v)[1], (*v)[2]};
    }
  }
  s.finish();
  return d;
}

AugmentPolicy parse_augment(const Context& ctx, const json& node) {
  if (!node.is_array()) ctx.fail("", "augment", "expected an array of operations");
  AugmentPolicy policy;
  for (std::size_t i = 0; i < node.size(); ++i) {
    Section s(ctx, &node[i], fmt::format("augment[{}]", i));
    const auto op = s.string("op");
    if (!op) s.fail("op", "required (flip, rotation, jitter)");
    if (*op == "flip") {
      policy.ops.emplace_back(HorizontalFlip{s.number("prob").value_or(0.5)});
    } else if (*op == "rotation") {
      policy.ops.emplace_back(Rotation{s.number("max_degrees").value_or(30.0)});
    } else if (*op == "jitter") {
      policy.ops.emplace_back(FeatureJitter{s.number("sigma").value_or(0.05)});
    } else {
      s.fail("op", "unknown augmentation '" + *op + "' (flip, rotation, jitter)");
    }
    s.finish();
  }
  checked(ctx, "", "augment", [&] { policy.validate(); });
  return policy;
}

void apply_overrides(const Context& ctx, json& root, const ConfigOverrides& o) {
  auto section = [&](const std::string& key) -> json& {
    json& node = root[key];
    if (node.is_null()) node = json::object();
    if (!node.is_object()) ctx.fail("", key, "expected an object");
    return node;
  };
  if (o.seed) root["seed"] = *o.seed;
  if (o.out) root["output"] = o.out->string();
  if (o.method) section("federation")["method"] = *o.method;
  if (o.noise_type) section("noise")["type"] = *o.noise_type;
  if (o.noise_ratio) section("noise")["ratio"] = *o.noise_ratio;
}

ExperimentConfig resolve(const Context& ctx, const json& root) {
  if (!root.is_object()) throw ConfigError(ctx.origin + ": top level must be a JSON object");
  static const std::set<std::string> kTop{"seed",       "output", "dataset", "noise",
                                          "partition",  "federation", "model", "lsr",
                                          "symce",      "coteaching", "augment"};
  for (const auto& [key, _] : root.items()) {
    if (!kTop.count(key)) ctx.fail("", key, "unknown key");
  }

  ExperimentConfig c;
  Section top(ctx, &root, "");
  c.setup.seed = top.u64("seed").value_or(0);
  c.output = top.string("output").value_or("out");
  const std::uint64_t seed = c.setup.seed;

  c.dataset = parse_dataset(ctx, child(root, "dataset"));
  const DatasetFamily family = c.dataset.family;

  {
    Section s(ctx, child(root, "noise"), "noise");
    c.noise.kind = s.parsed("type", NoiseKind::kNone, parse_noise_kind);
    c.noise.ratio = s.number("ratio").value_or(0.0);
    if (!(c.noise.ratio >= 0.0 && c.noise.ratio < 1.0)) s.fail("ratio", "must lie in [0, 1)");
    if (c.noise.kind == NoiseKind::kNone && c.noise.ratio != 0.0) {
      s.fail("ratio", "must be 0 when type is none");
    }
    c.noise.seed = s.u64("seed").value_or(
        RngStream(seed, {static_cast<std::uint64_t>(Purpose::kNoise)})());
    s.finish();
  }

  {
    Section s(ctx, child(root, "partition"), "partition");
    c.partition.iid = s.parsed("type", true, [](const std::string& v) {
      if (v == "iid") return true;
      if (v == "noniid") return false;
      throw InvalidParameter("unknown partition type '" + v + "' (iid, noniid)");
    });
    if (auto v = s.integer("classes_per_client")) c.partition.classes_per_client = static_cast<int>(*v);
    if (!c.partition.iid &&
        (c.partition.classes_per_client < 1 || c.partition.classes_per_client > c.dataset.num_classes)) {
      s.fail("classes_per_client", "must lie in [1, num_classes]");
    }
    s.finish();
  }

  FedConfig& f = c.setup.fed;
  {
    Section s(ctx, child(root, "federation"), "federation");
    auto int_field = [&](const char* key, int& field) {
      if (auto v = s.integer(key)) field = static_cast<int>(*v);
    };
    int_field("num_clients", f.num_clients);
    int_field("clients_per_round", f.clients_per_round);
    int_field("rounds", f.rounds);
    int_field("local_epochs", f.local_epochs);
    int_field("batch_size", f.batch_size);
    int_field("workers", f.workers);
    if (auto v = s.number("lr")) f.lr = *v;
    f.method = s.parsed("method", Method::kLsr, parse_method);
    const bool plus = f.method == Method::kLsrPlus;
    f.warmup_rounds = plus ? static_cast<int>(std::lround(0.2 * f.rounds)) : default_warmup(family);
    int_field("warmup_rounds", f.warmup_rounds);
    s.finish();
    checked(ctx, "", "federation", [&] { f.validate(); });
  }

  LsrHyperParams& hp = c.setup.lsr;
  {
    Section s(ctx, child(root, "lsr"), "lsr");
    const bool plus = f.method == Method::kLsrPlus;
    hp.gamma = plus ? 0.4 : default_gamma(family, c.noise.kind, c.noise.ratio);
    hp.entropy_weight = plus ? 0.6 : 0.0;
    hp.distill = c.partition.iid ? DistillKind::kJs : DistillKind::kL1;
    if (auto v = s.number("sharpen_temperature")) hp.sharpen_temperature = *v;
    if (auto v = s.number("distill_temperature")) hp.distill_temperature = *v;
    if (auto v = s.number("gamma")) hp.gamma = *v;
    if (auto v = s.number("entropy_weight")) hp.entropy_weight = *v;
    if (auto v = s.number("clamp_lo")) hp.clamp_lo = *v;
    if (auto v = s.number("fixed_mix_weight")) hp.fixed_mix_weight = *v;
    hp.distill = s.parsed("distill", hp.distill, parse_distill_kind);
    s.finish();
    checked(ctx, "", "lsr", [&] { hp.validate(); });
  }

  {
    Section s(ctx, child(root, "symce"), "symce");
    if (auto v = s.number("alpha")) c.setup.symce.alpha = *v;
    if (auto v = s.number("beta")) c.setup.symce.beta = *v;
    if (auto v = s.number("log_zero")) c.setup.symce.log_zero = *v;
    s.finish();
    checked(ctx, "", "symce", [&] { c.setup.symce.validate(); });
  }

  {
    Section s(ctx, child(root, "coteaching"), "coteaching");
    CoteachingConfig& ct = c.setup.coteaching;
    ct.forget_rate = s.number("forget_rate").value_or(c.noise.ratio);
    if (auto v = s.integer("ramp_length")) ct.ramp_length = static_cast<int>(*v);
    if (auto v = s.boolean("per_epoch")) ct.per_epoch = *v;
    s.finish();
    checked(ctx, "", "coteaching", [&] { ct.validate(); });
  }

  {
    Section s(ctx, child(root, "model"), "model");
    if (auto v = s.counts("hidden")) c.setup.hidden_layers = *v;
    if (c.setup.hidden_layers.empty() ||
        std::find(c.setup.hidden_layers.begin(), c.setup.hidden_layers.end(), 0u) !=
            c.setup.hidden_layers.end()) {
      s.fail("hidden", "need at least one hidden layer, all widths >= 1");
    }
    s.finish();
  }

  const json* aug = child(root, "augment");
  c.setup.augment = aug ? parse_augment(ctx, *aug) : default_augment(family);
  const bool has_image = c.dataset.source == DatasetSource::kIdx || c.dataset.image_shape;
  if (needs_image(c.setup.augment) && !has_image) {
    ctx.fail("", "augment", "flip and rotation need image data (idx, or csv with image_shape)");
  }
  return c;
}

json to_json_value(const ExperimentConfig& c) {
  json d;
  const DatasetSpec& ds = c.dataset;
  d["family"] = to_string(ds.family);
  d["num_classes"] = ds.num_classes;
  switch (ds.source) {
    case DatasetSource::kSynthetic:
      d["source"] = "synthetic";
      d["n"] = ds.n;
      d["n_test"] = ds.n_test;
      d["dim"] = ds.dim;
      if (ds.seed) d["seed"] = *ds.seed;
      break;
    case DatasetSource::kIdx:
      d["source"] = "idx";
      d["train_images"] = ds.train_images.string();
      d["train_labels"] = ds.train_labels.string();
      d["test_images"] = ds.test_images.string();
      d["test_labels"] = ds.test_labels.string();
      break;
    case DatasetSource::kCsv:
      d["source"] = "csv";
      d["train"] = ds.train_csv.string();
      d["test"] = ds.test_csv.string();
      if (ds.image_shape) {
        d["image_shape"] = {ds.image_shape->height, ds.image_shape->width, ds.image_shape->channels};
      }
      break;
  }

  const FedConfig& f = c.setup.fed;
  const LsrHyperParams& hp = c.setup.lsr;
  json lsr{{"sharpen_temperature", hp.sharpen_temperature},
           {"distill_temperature", hp.distill_temperature},
           {"gamma", hp.gamma},
           {"entropy_weight", hp.entropy_weight},
           {"distill", to_string(hp.distill)},
           {"clamp_lo", hp.clamp_lo}};
  if (hp.fixed_mix_weight) lsr["fixed_mix_weight"] = *hp.fixed_mix_weight;

  json augment = json::array();
  for (const auto& op : c.setup.augment.ops) {
    json o{{"op", augment_name(op)}};
    if (const auto* flip = std::get_if<HorizontalFlip>(&op)) o["prob"] = flip->prob;
    if (const auto* rot = std::get_if<Rotation>(&op)) o["max_degrees"] = rot->max_degrees;
    if (const auto* jit = std::get_if<FeatureJitter>(&op)) o["sigma"] = jit->sigma;
    augment.push_back(std::move(o));
  }

  return json{
      {"seed", c.setup.seed},
      {"output", c.output.string()},
      {"dataset", d},
      {"noise", {{"type", to_string(c.noise.kind)}, {"ratio", c.noise.ratio}, {"seed", c.noise.seed}}},
      {"partition",
       {{"type", c.partition.iid ? "iid" : "noniid"},
        {"classes_per_client", c.partition.classes_per_client}}},
      {"federation",
       {{"num_clients", f.num_clients},
        {"clients_per_round", f.clients_per_round},
        {"rounds", f.rounds},
        {"local_epochs", f.local_epochs},
        {"batch_size", f.batch_size},
        {"lr", f.lr},
        {"method", to_string(f.method)},
        {"warmup_rounds", f.warmup_rounds},
        {"workers", f.workers}}},
      {"model", {{"hidden", c.setup.hidden_layers}}},
      {"lsr", lsr},
      {"symce",
       {{"alpha", c.setup.symce.alpha},
        {"beta", c.setup.symce.beta},
        {"log_zero", c.setup.symce.log_zero}}},
      {"coteaching",
       {{"forget_rate", c.setup.coteaching.forget_rate},
        {"ramp_length", c.setup.coteaching.ramp_length},
        {"per_epoch", c.setup.coteaching.per_epoch}}},
      {"augment", augment},
  };
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string to_string(DatasetFamily family) {
  switch (family) {
    case DatasetFamily::kMnist: return "mnist";
    case DatasetFamily::kFashionMnist: return "fashion_mnist";
    case DatasetFamily::kCifar10: return "cifar10";
    case DatasetFamily::kSynthetic: return "synthetic";
  }
  return "synthetic";
}

DatasetFamily parse_dataset_family(const std::string& name) {
  for (DatasetFamily f : {DatasetFamily::kMnist, DatasetFamily::kFashionMnist,
                          DatasetFamily::kCifar10, DatasetFamily::kSynthetic}) {
    if (to_string(f) == name) return f;
  }
  throw InvalidParameter("unknown dataset family '" + name +
                         "' (mnist, fashion_mnist, cifar10, synthetic)");
}

double default_gamma(DatasetFamily family, NoiseKind kind, double ratio) {
  const GammaRow& row = family == DatasetFamily::kMnist     ? kGammaMnist
                        : family == DatasetFamily::kCifar10 ? kGammaCifar
                                                            : kGammaFashion;
  switch (kind) {
    case NoiseKind::kNone: return 0.0;
    case NoiseKind::kSymmetric: return nearest(kSymRatios, row.sym, ratio);
    case NoiseKind::kPairwise: return nearest(kPairRatios, row.pair, ratio);
  }
  return 0.0;
}

int default_warmup(DatasetFamily family) {
  switch (family) {
    case DatasetFamily::kMnist: return 10;
    case DatasetFamily::kCifar10: return 40;
    case DatasetFamily::kFashionMnist:
    case DatasetFamily::kSynthetic: return 20;
  }
  return 20;
}

AugmentPolicy default_augment(DatasetFamily family) {
  switch (family) {
    case DatasetFamily::kMnist:
    case DatasetFamily::kFashionMnist: return {{Rotation{30.0}}};
    case DatasetFamily::kCifar10: return {{HorizontalFlip{0.5}, FeatureJitter{0.05}}};
    case DatasetFamily::kSynthetic: return {{FeatureJitter{0.05}}};
  }
  return {};
}

std::string ExperimentConfig::to_json() const { return to_json_value(*this).dump(2) + "\n"; }

ExperimentConfig parse_config(const std::string& text, const ConfigOverrides& overrides,
                              const std::string& origin) {
  const Context ctx{text, origin};
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n');
    throw ConfigError(fmt::format("{}:{}: malformed JSON: {}", origin, line, e.what()));
  }
  if (!root.is_object()) throw ConfigError(origin + ": top level must be a JSON object");
  apply_overrides(ctx, root, overrides);
  return resolve(ctx, root);
}

ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  return parse_config(read_text(path), overrides, path.string());
}

ExperimentData prepare_data(const ExperimentConfig& config) {
  const DatasetSpec& d = config.dataset;
  ExperimentData out;
  switch (d.source) {
    case DatasetSource::kSynthetic: {
      const LabeledDataset all =
          generate_synthetic(d.n + d.n_test, d.num_classes, d.dim, d.seed.value_or(config.seed()));
      auto [train, test] =
          split_holdout(all, d.n_test / static_cast<std::size_t>(d.num_classes));
      out.train = std::move(train);
      out.test = std::move(test);
      break;
    }
    case DatasetSource::kIdx:
      out.train = load_idx(d.train_images, d.train_labels, d.num_classes);
      out.test = load_idx(d.test_images, d.test_labels, d.num_classes);
      break;
    case DatasetSource::kCsv:
      out.train = load_csv(d.train_csv, d.num_classes);
      out.test = load_csv(d.test_csv, d.num_classes);
      out.train.image = d.image_shape;
      out.test.image = d.image_shape;
      out.train.validate();
      out.test.validate();
      break;
  }
  if (out.test.size() == 0) throw DataError("test set is empty");
  if (out.train.dim() != out.test.dim()) throw DataError("train and test feature dimensions differ");

  out.train = inject_noise(out.train, config.noise);
  const std::uint64_t part_seed =
      RngStream(config.seed(), {static_cast<std::uint64_t>(Purpose::kPartition)})();
  const int clients = config.setup.fed.num_clients;
  out.partition = config.partition.iid
                      ? partition_iid(out.train, clients, part_seed)
                      : partition_noniid(out.train, clients, config.partition.classes_per_client,
                                         part_seed);
  return out;
}

ExperimentSummary summarize(const std::vector<RoundMetrics>& metrics, std::uint64_t seed) {
  ExperimentSummary s;
  s.seed = seed;
  if (metrics.empty()) return s;
  const std::size_t tail = std::min<std::size_t>(10, metrics.size());
  double sum = 0.0;
  for (std::size_t i = metrics.size() - tail; i < metrics.size(); ++i) sum += metrics[i].test_accuracy;
  s.final_acc_last10_mean = sum / static_cast<double>(tail);
  double best = metrics.front().test_accuracy;
  for (const auto& m : metrics) best = std::max(best, m.test_accuracy);
  s.best_acc = best;
  return s;
}

std::string metrics_csv(const std::vector<RoundMetrics>& metrics) {
  std::string out = "round,test_accuracy,mean_train_loss,gamma_t,selected_clients\n";
  for (const auto& m : metrics) {
    out += fmt::format("{},{},{},{},{}\n", m.round, m.test_accuracy, m.mean_train_loss, m.gamma_t,
                       fmt::join(m.selected_clients, ";"));
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ExperimentSummary execute(const ExperimentConfig& config) {
  const ExperimentData data = prepare_data(config);
  spdlog::info("{}: {} train / {} test samples, {} rounds, method {}", config.output.string(),
               data.train.size(), data.test.size(), config.setup.fed.rounds,
               to_string(config.setup.fed.method));
  const FederationResult result = run_federation(config.setup, data.train, data.partition, data.test);
  const ExperimentSummary summary = summarize(result.metrics, config.seed());

  write_file_atomic(config.output / "metrics.csv", metrics_csv(result.metrics));
  const json doc{{"final_acc_last10_mean", nullable(summary.final_acc_last10_mean)},
                 {"best_acc", nullable(summary.best_acc)},
                 {"seed", summary.seed},
                 {"config_echo", to_json_value(config)}};
  write_file_atomic(config.output / "summary.json", doc.dump(2) + "\n");
  return summary;
}

int run_experiment(const std::filesystem::path& config_path, const ConfigOverrides& overrides) {
  ExperimentConfig config;
  try {
    config = load_config(config_path, overrides);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  try {
    execute(config);
  } catch (const std::exception& e) {
    spdlog::error("run failed: {}", e.what());
    return 1;
  }
  return 0;
}

std::vector<MethodSummary> compare_methods(const std::filesystem::path& config_path,
                                           const std::vector<std::string>& methods,
                                           const std::vector<std::uint64_t>& seeds,
                                           const ConfigOverrides& overrides) {
  if (methods.empty()) throw InvalidParameter("compare_methods: need at least one method");
  if (seeds.empty()) throw InvalidParameter("compare_methods: need at least one seed");
  const std::string text = read_text(config_path);
  const std::filesystem::path base =
      overrides.out ? *overrides.out : parse_config(text, overrides, config_path.string()).output;

  std::vector<MethodSummary> table;
  for (const auto& method : methods) {
    MethodSummary row;
    row.method = method;
    for (const std::uint64_t seed : seeds) {
      ConfigOverrides o = overrides;
      o.method = method;
      o.seed = seed;
      o.out = base / method / fmt::format("seed_{}", seed);
      const ExperimentSummary s = execute(parse_config(text, o, config_path.string()));
      if (!s.final_acc_last10_mean) throw InvalidParameter("compare_methods: rounds must be >= 1");
      row.finals.push_back(*s.final_acc_last10_mean);
    }
    const double n = static_cast<double>(row.finals.size());
    double sum = 0.0;
    for (double v : row.finals) sum += v;
    row.mean = sum / n;
    if (row.finals.size() > 1) {
      double ss = 0.0;
      for (double v : row.finals) ss += (v - row.mean) * (v - row.mean);
      row.std = std::sqrt(ss / (n - 1.0));
    }
    table.push_back(std::move(row));
  }

  json rows = json::array();
  std::string csv = "method,mean,std,n\n";
  for (const auto& r : table) {
    rows.push_back({{"method", r.method}, {"mean", r.mean}, {"std", r.std}, {"seeds", seeds},
                    {"finals", r.finals}});
    csv += fmt::format("{},{},{},{}\n", r.method, r.mean, r.std, r.finals.size());
  }
  write_file_atomic(base / "comparison.json", json{{"methods", rows}}.dump(2) + "\n");
  write_file_atomic(base / "comparison.csv", csv);
  return table;
}

}  // namespace fedlsr
