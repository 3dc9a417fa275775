#include "faim/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "faim/errors.hpp"

namespace faim {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) throw ConfigError("config key " + key + ": not a number: '" + text + "'");
  return v;
}

std::size_t parse_count(const std::string& key, const std::string& text) {
  std::size_t v = 0;
  const auto t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError("config key " + key + ": not a non-negative integer: '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const auto t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("config key " + key + ": not a boolean: '" + text + "'");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<FaimConfig::Field> FaimConfig::fields() {
  return {
      {"model.patch_len", &model.patch_len},
      {"model.patch_stride", &model.patch_stride},
      {"model.embed_dim", &model.embed_dim},
      {"model.n_layers", &model.n_layers},
      {"model.ssm_state", &model.ssm_state},
      {"model.conv_k1", &model.conv_k1},
      {"model.conv_k2", &model.conv_k2},
      {"model.conv_k3", &model.conv_k3},
      {"model.psi_hidden", &model.psi_hidden},
      {"model.ln_eps", &model.ln_eps},
      {"afb.enabled", &model.use_afb},
      {"afb.use_high", &model.afb_use_high},
      {"afb.use_low", &model.afb_use_low},
      {"afb.literal_eq10", &model.afb_literal_eq10},
      {"afb.theta_high", &model.theta_high},
      {"afb.theta_low", &model.theta_low},
      {"afb.tau", &model.tau},
      {"imb.enabled", &model.use_imb},
      {"imb.share_in_proj", &model.imb_share_in_proj},
      {"imb.concat_fusion", &model.imb_concat_fusion},
      {"train.mask_ratio", &train.mask_ratio},
      {"train.label_smooth_eps", &train.label_smooth_eps},
      {"train.lr", &train.lr},
      {"train.weight_decay", &train.weight_decay},
      {"train.pretrain_epochs", &train.pretrain_epochs},
      {"train.finetune_epochs", &train.finetune_epochs},
      {"train.batch_size", &train.batch_size},
      {"train.val_fraction", &train.val_fraction},
      {"train.seed", &train.seed},
      {"train.pretrain", &train.pretrain},
      {"train.init_checkpoint", &train.init_checkpoint},
      {"data.train", &data.train},
      {"data.test", &data.test},
      {"data.format", &data.format},
      {"data.normalize", &data.normalize},
      {"data.train_fraction", &data.train_fraction},
      {"synth.n_per_class", &synth.n_per_class},
      {"synth.length", &synth.length},
      {"synth.freqs", &synth.freqs},
      {"synth.sigma", &synth.sigma},
      {"synth.seed", &synth.seed},
      {"noise.sigmas", &noise.sigmas},
      {"noise.seed", &noise.seed},
      {"run.dir", &run.dir},
      {"run.name", &run.name},
      {"run.checkpoint", &run.checkpoint},
      {"run.variants", &run.variants},
  };
}

std::vector<std::string> FaimConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& f : const_cast<FaimConfig*>(this)->fields()) out.emplace_back(f.key);
  return out;
}

void FaimConfig::set(const std::string& key, const std::string& value) {
  for (auto& f : fields()) {
    if (key != f.key) continue;
    std::visit(
        [&](auto* ptr) {
          using T = std::remove_pointer_t<decltype(ptr)>;
          if constexpr (std::is_same_v<T, std::size_t>) {
            *ptr = parse_count(key, value);
          } else if constexpr (std::is_same_v<T, double>) {
            *ptr = parse_double(key, value);
          } else if constexpr (std::is_same_v<T, bool>) {
            *ptr = parse_bool(key, value);
          } else if constexpr (std::is_same_v<T, std::string>) {
            *ptr = trim(value);
          } else {
            ptr->clear();
            std::stringstream ss(value);
            std::string item;
            while (std::getline(ss, item, ',')) {
              if (!trim(item).empty()) ptr->push_back(parse_double(key, item));
            }
          }
        },
        f.ref);
    return;
  }
  std::string msg = "unknown config key '" + key + "'; valid keys:";
  for (const auto& k : keys()) msg += "\n  " + k;
  throw ConfigError(msg);
}

std::string FaimConfig::get(const std::string& key) const {
  for (auto& f : const_cast<FaimConfig*>(this)->fields()) {
    if (key != f.key) continue;
    return std::visit(
        [](auto* ptr) -> std::string {
          using T = std::remove_pointer_t<decltype(ptr)>;
          if constexpr (std::is_same_v<T, std::size_t>) {
            return std::to_string(*ptr);
          } else if constexpr (std::is_same_v<T, double>) {
            return format_double(*ptr);
          } else if constexpr (std::is_same_v<T, bool>) {
            return *ptr ? "true" : "false";
          } else if constexpr (std::is_same_v<T, std::string>) {
            return *ptr;
          } else {
            std::string out;
            for (std::size_t i = 0; i < ptr->size(); ++i) out += (i ? "," : "") + format_double((*ptr)[i]);
            return out;
          }
        },
        f.ref);
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void FaimConfig::apply_text(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    set(trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

void FaimConfig::apply_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  apply_text(ss.str());
}

std::string FaimConfig::echo() const {
  std::string out;
  for (const auto& k : keys()) out += k + "=" + get(k) + "\n";
  return out;
}

void ModelConfig::validate() const {
  if (patch_len < 1) throw ConfigError("model.patch_len must be >= 1");
  if (embed_dim < 1) throw ConfigError("model.embed_dim must be >= 1");
  if (n_layers < 1) throw ConfigError("model.n_layers must be >= 1");
  if (ssm_state < 1) throw ConfigError("model.ssm_state must be >= 1");
  if (conv_k1 < 1 || conv_k2 < 1 || conv_k3 < 1) throw ConfigError("conv kernel lengths must be >= 1");
  if (tau <= 0) throw ConfigError("afb.tau must be > 0");
  if (ln_eps <= 0) throw ConfigError("model.ln_eps must be > 0");
}

void TrainConfig::validate() const {
  if (mask_ratio < 0 || mask_ratio >= 1) throw ConfigError("train.mask_ratio must be in [0, 1)");
  if (label_smooth_eps < 0 || label_smooth_eps >= 1) throw ConfigError("train.label_smooth_eps must be in [0, 1)");
  if (batch_size < 1 || batch_size > 256) throw ConfigError("train.batch_size must be in [1, 256]");
  if (val_fraction < 0 || val_fraction >= 1) throw ConfigError("train.val_fraction must be in [0, 1)");
  if (lr < 0) throw ConfigError("train.lr must be >= 0");
}

void FaimConfig::validate() const {
  model.validate();
  train.validate();
  if (data.train_fraction <= 0 || data.train_fraction > 1) throw ConfigError("data.train_fraction must be in (0, 1]");
}

}  // namespace faim
