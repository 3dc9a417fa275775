#include "faim/model.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "faim/errors.hpp"
#include "faim/ops.hpp"

namespace faim {

std::size_t patch_count(std::size_t length, std::size_t patch_len, std::size_t stride) {
  if (length < 1) throw InputError("series length must be >= 1");
  if (patch_len < 1 || stride < 1) throw ConfigError("patch length and stride must be >= 1");
  if (length <= patch_len) return 1;
  return (length - patch_len + stride - 1) / stride + 1;
}

Tensor patchify(const Tensor& x, std::size_t patch_len, std::size_t stride) {
  if (x.rank() < 1) throw ShapeError("patchify expects [..., T]");
  const std::size_t t = x.extent(-1);
  const std::size_t z = patch_count(t, patch_len, stride);
  const std::size_t rows = x.size() / t;
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  shape.push_back(z);
  shape.push_back(patch_len);
  std::vector<double> out(rows * z * patch_len);
  auto src = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = src.data() + r * t;
    double* dst = out.data() + r * z * patch_len;
    for (std::size_t i = 0; i < z; ++i)
      for (std::size_t j = 0; j < patch_len; ++j) dst[i * patch_len + j] = row[std::min(i * stride + j, t - 1)];
  }
  return Tensor(std::move(shape), std::move(out));
}

FaimModel FaimModel::create(const ModelConfig& config, std::size_t n_channels, std::size_t series_len,
                            std::size_t n_classes, std::uint64_t seed) {
  config.validate();
  if (n_channels < 1) throw InputError("model needs at least one channel");
  if (n_classes < 1) throw InputError("model needs at least one class");
  FaimModel m;
  m.config = config;
  m.n_channels = n_channels;
  m.n_classes = n_classes;
  m.series_len = series_len;
  m.z_max = patch_count(series_len, config.patch_len, config.stride());
  m.seed = seed;

  const std::size_t b = config.patch_len, d = config.embed_dim;
  Rng rng(seed);
  m.embed = Linear::init(b, d, rng);
  m.pos_emb = normal_param({m.z_max, d}, 0.02, rng);
  m.mask_token = normal_param({b}, 0.02, rng);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    FaimLayer layer;
    layer.afb = AfbParams::init(d, config.hidden(), config.theta_high, config.theta_low, config.tau, rng);
    layer.imb = ImbParams::init(d, config.ssm_state, config.conv_k1, config.conv_k2, config.conv_k3,
                                config.imb_concat_fusion, rng);
    layer.imb.ln_eps = config.ln_eps;
    layer.norm = NormParams::init(d);
    m.layers.push_back(std::move(layer));
  }
  m.cls_head = Linear::init(d, n_classes, rng);
  m.recon_head = Linear::init(d, b, rng);
  return m;
}

NamedTensors FaimModel::named_parameters() const {
  NamedTensors out;
  embed.collect("embed", out);
  out.emplace_back("pos_emb", pos_emb);
  out.emplace_back("mask_token", mask_token);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layers." + std::to_string(l);
    if (config.use_afb) {
      const bool need_low_band = config.afb_use_low || (config.afb_use_high && config.afb_literal_eq10);
      NamedTensors afb;
      layers[l].afb.collect(p + ".afb", afb);
      for (auto& [name, t] : afb) {
        // Local filters that are switched off never enter the graph.
        if (!config.afb_use_high && name.find(".psi_high_local") != std::string::npos) continue;
        if (!config.afb_use_low && name.find(".psi_low_local") != std::string::npos) continue;
        if (!config.afb_use_high && name.ends_with(".theta_high")) continue;
        if (!need_low_band && name.ends_with(".theta_low")) continue;
        out.emplace_back(name, t);
      }
    }
    if (config.use_imb) {
      NamedTensors imb;
      layers[l].imb.collect(p + ".imb", imb);
      for (auto& [name, t] : imb) {
        if (config.imb_share_in_proj && (name.find(".in_proj_2") != std::string::npos ||
                                         name.find(".gate_proj") != std::string::npos))
          continue;
        out.emplace_back(name, t);
      }
    }
    layers[l].norm.collect(p + ".norm", out);
  }
  cls_head.collect("cls_head", out);
  recon_head.collect("recon_head", out);
  return out;
}

std::vector<Tensor> FaimModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void FaimModel::load_values(const FaimModel& other) {
  auto dst = named_parameters();
  auto src = other.named_parameters();
  if (dst.size() != src.size()) throw InputError("parameter sets differ in size");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].first != src[i].first || dst[i].second.shape() != src[i].second.shape()) {
      throw InputError("parameter mismatch at " + dst[i].first);
    }
    auto to = dst[i].second.mutable_data();
    auto from = src[i].second.data();
    std::copy(from.begin(), from.end(), to.begin());
  }
}

FaimModel FaimModel::snapshot() const {
  FaimModel copy = create(config, n_channels, series_len, n_classes, seed);
  copy.meta = meta;
  copy.load_values(*this);
  return copy;
}

Tensor embed(const FaimModel& model, const Tensor& patches) {
  const std::size_t z = patches.extent(-2);
  if (z > model.z_max) {
    throw ConfigError("series yields " + std::to_string(z) + " patches but the model supports at most " +
                      std::to_string(model.z_max));
  }
  const Tensor pos = z == model.z_max ? model.pos_emb : ops::narrow(model.pos_emb, 0, 0, z);
  return ops::add(model.embed(patches), pos);
}

Tensor faim_trunk(const FaimModel& model, const Tensor& tokens, std::vector<LayerActivations>* acts) {
  const ModelConfig& c = model.config;
  const AfbOptions afb_opts{c.afb_use_high, c.afb_use_low, c.afb_literal_eq10};
  const ImbOptions imb_opts{c.imb_share_in_proj, c.imb_concat_fusion};
  Tensor x = tokens;
  for (const FaimLayer& layer : model.layers) {
    LayerActivations la;
    Tensor u = x;
    if (c.use_afb) {
      AfbResult r = afb_forward(x, layer.afb, afb_opts);
      u = r.output;
      if (acts) la.afb = std::move(r.activations);
    }
    Tensor v = u;
    if (c.use_imb) {
      ImbResult r = imb_forward(u, layer.imb, imb_opts);
      v = r.output;
      if (acts) la.imb = std::move(r.activations);
    }
    x = layer.norm(ops::add(v, x), c.ln_eps);
    if (acts) {
      la.output = x;
      acts->push_back(std::move(la));
    }
  }
  return x;
}

namespace {

void check_channels(const FaimModel& model, const Tensor& x) {
  if (x.rank() < 2 || x.rank() > 3) throw ShapeError("expected input [C, T] or [N, C, T], got " + shape_str(x.shape()));
  if (x.extent(-2) != model.n_channels) {
    throw InputError("input has " + std::to_string(x.extent(-2)) + " channels but the model was built for " +
                     std::to_string(model.n_channels));
  }
}

}  // namespace

ForwardResult faim_forward(const FaimModel& model, const Tensor& x) {
  check_channels(model, x);
  const bool batched = x.rank() == 3;
  const std::size_t n = batched ? x.extent(0) : 1, c = model.n_channels;
  const Tensor patches = patchify(x, model.config.patch_len, model.config.stride());
  const std::size_t z = patches.extent(-2), d = model.config.embed_dim;

  ForwardResult res;
  Tensor tokens = embed(model, ops::reshape(patches, {n * c, z, model.config.patch_len}));
  tokens = faim_trunk(model, tokens, &res.layers);
  const Tensor per_channel = ops::mean_axis(ops::reshape(tokens, {n, c, z, d}), 2);
  res.pooled = ops::mean_axis(per_channel, 1);
  res.logits = model.cls_head(res.pooled);
  if (!batched) res.logits = ops::reshape(res.logits, {model.n_classes});
  return res;
}

Tensor reconstruct_forward(const FaimModel& model, const Tensor& x, const Tensor& mask) {
  check_channels(model, x);
  const std::size_t b = model.config.patch_len;
  const Tensor patches = patchify(x, b, model.config.stride());
  const std::size_t z = patches.extent(-2), rows = patches.size() / (z * b);
  Shape mask_shape(patches.shape().begin(), patches.shape().end() - 1);
  if (mask.shape() != mask_shape) {
    throw ShapeError("mask shape " + shape_str(mask.shape()) + " does not match patches " + shape_str(mask_shape));
  }
  mask_shape.push_back(1);
  const Tensor lambda = ops::reshape(mask, mask_shape);
  std::vector<double> keep(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) keep[i] = 1.0 - mask[i];
  const Tensor masked = ops::add(ops::mul(patches, Tensor(lambda.shape(), std::move(keep))),
                                 ops::mul(lambda, model.mask_token));
  Tensor tokens = embed(model, ops::reshape(masked, {rows, z, b}));
  tokens = faim_trunk(model, tokens);
  return ops::reshape(model.recon_head(tokens), patches.shape());
}

namespace {

constexpr const char* kMagic = "FAIM1";

std::string model_config_text(const ModelConfig& c) {
  FaimConfig full;
  full.model = c;
  std::istringstream in(full.echo());
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.starts_with("model.") || line.starts_with("afb.") || line.starts_with("imb.")) out += line + "\n";
  }
  return out;
}

void write_values(std::ostream& os, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? " " : "") << format_double(values[i]);
  os << "\n";
}

std::vector<double> read_values(std::istream& is, std::size_t n, const std::string& what) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string tok;
    if (!(is >> tok)) throw InputError("checkpoint truncated in " + what);
    char* end = nullptr;
    out[i] = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) throw InputError("bad number '" + tok + "' in " + what);
  }
  return out;
}

template <typename T>
T read_field(std::istream& is, const std::string& name) {
  std::string key;
  T value{};
  if (!(is >> key) || key != name || !(is >> value)) throw InputError("checkpoint: expected field '" + name + "'");
  return value;
}

}  // namespace

void save_checkpoint(const FaimModel& model, const std::string& path) {
  std::ostringstream os;
  os << kMagic << "\n";
  os << "seed " << model.seed << "\n";
  os << "n_channels " << model.n_channels << "\n";
  os << "n_classes " << model.n_classes << "\n";
  os << "series_len " << model.series_len << "\n";
  const std::string cfg = model_config_text(model.config);
  os << "config " << std::count(cfg.begin(), cfg.end(), '\n') << "\n" << cfg;
  os << "labels " << model.meta.labels.size() << "\n";
  for (const auto& l : model.meta.labels) {
    if (l.find('\n') != std::string::npos) throw InputError("class label contains a newline");
    os << l << "\n";
  }
  os << "channel_mean " << model.meta.channel_mean.size() << "\n";
  write_values(os, model.meta.channel_mean);
  os << "channel_std " << model.meta.channel_std.size() << "\n";
  write_values(os, model.meta.channel_std);
  const auto params = model.named_parameters();
  os << "tensors " << params.size() << "\n";
  for (const auto& [name, t] : params) {
    os << name << " " << t.rank();
    for (auto e : t.shape()) os << " " << e;
    os << "\n";
    write_values(os, t.data());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write checkpoint " + path);
  f << os.str();
  if (!f) throw InputError("failed writing checkpoint " + path);
}

FaimModel load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(f, line) || line != kMagic) throw InputError(path + " is not a FAIM1 checkpoint");
  const auto seed = read_field<std::uint64_t>(f, "seed");
  const auto channels = read_field<std::size_t>(f, "n_channels");
  const auto classes = read_field<std::size_t>(f, "n_classes");
  const auto series_len = read_field<std::size_t>(f, "series_len");
  const auto n_cfg = read_field<std::size_t>(f, "config");
  std::getline(f, line);
  std::string cfg_text;
  for (std::size_t i = 0; i < n_cfg; ++i) {
    if (!std::getline(f, line)) throw InputError("checkpoint truncated in config");
    cfg_text += line + "\n";
  }
  FaimConfig cfg;
  cfg.apply_text(cfg_text);
  FaimModel model = FaimModel::create(cfg.model, channels, series_len, classes, seed);

  const auto n_labels = read_field<std::size_t>(f, "labels");
  std::getline(f, line);
  for (std::size_t i = 0; i < n_labels; ++i) {
    if (!std::getline(f, line)) throw InputError("checkpoint truncated in labels");
    model.meta.labels.push_back(line);
  }
  model.meta.channel_mean = read_values(f, read_field<std::size_t>(f, "channel_mean"), "channel_mean");
  model.meta.channel_std = read_values(f, read_field<std::size_t>(f, "channel_std"), "channel_std");

  auto params = model.named_parameters();
  if (read_field<std::size_t>(f, "tensors") != params.size()) throw InputError("checkpoint tensor count mismatch");
  for (auto& [name, t] : params) {
    std::string got;
    std::size_t rank = 0;
    if (!(f >> got >> rank)) throw InputError("checkpoint truncated before " + name);
    if (got != name) throw InputError("checkpoint has tensor '" + got + "' where '" + name + "' was expected");
    Shape shape(rank);
    for (auto& e : shape) f >> e;
    if (shape != t.shape()) throw InputError("checkpoint tensor " + name + " has shape " + shape_str(shape));
    auto values = read_values(f, t.size(), name);
    std::copy(values.begin(), values.end(), t.mutable_data().begin());
  }
  return model;
}

}  // namespace faim
