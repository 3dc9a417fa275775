#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace faim {

struct ModelConfig {
  std::size_t patch_len = 8;
  std::size_t patch_stride = 0;  // 0 means equal to patch_len
  std::size_t embed_dim = 64;
  std::size_t n_layers = 2;
  std::size_t ssm_state = 16;
  std::size_t conv_k1 = 2;
  std::size_t conv_k2 = 4;
  std::size_t conv_k3 = 1;
  std::size_t psi_hidden = 0;  // 0 means equal to embed_dim
  double ln_eps = 1e-5;

  bool use_afb = true;
  bool afb_use_high = true;
  bool afb_use_low = true;
  bool afb_literal_eq10 = false;
  double theta_high = 0.4;
  double theta_low = 0.05;
  double tau = 0.02;

  bool use_imb = true;
  bool imb_share_in_proj = false;
  bool imb_concat_fusion = false;

  std::size_t stride() const { return patch_stride == 0 ? patch_len : patch_stride; }
  std::size_t hidden() const { return psi_hidden == 0 ? embed_dim : psi_hidden; }
  void validate() const;
};

struct TrainConfig {
  double mask_ratio = 0.4;
  double label_smooth_eps = 0.1;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::size_t pretrain_epochs = 100;
  std::size_t finetune_epochs = 300;
  std::size_t batch_size = 32;
  double val_fraction = 0.2;
  std::size_t seed = 0;
  bool pretrain = true;              // pipelines run masked pretraining before fine-tuning
  std::string init_checkpoint;       // finetune starts from this checkpoint when set
  void validate() const;
};

struct DataConfig {
  std::string train;
  std::string test;
  std::string format = "auto";  // auto | ucr | jsonl
  bool normalize = true;
  double train_fraction = 1.0;  // keep this leading fraction of the (shuffled) train split
};

struct SynthConfig {
  std::size_t n_per_class = 100;
  std::size_t length = 128;
  std::vector<double> freqs{3.0, 12.0};
  double sigma = 0.5;
  std::size_t seed = 1;
};

struct NoiseConfig {
  std::vector<double> sigmas{0.0, 0.2, 0.5, 1.0};
  std::size_t seed = 7;
};

struct RunConfig {
  std::string dir = "run";
  std::string name;  // empty: derived from the current time
  std::string checkpoint;  // eval / noise-bench input checkpoint
  std::string variants = "full,no_afb,no_hf,no_lf,no_hf_lf,no_imb,no_pretrain";
};

/// Every tunable of the toolkit, addressable by dotted key (e.g. `afb.tau`).
struct FaimConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  SynthConfig synth;
  NoiseConfig noise;
  RunConfig run;

  using FieldRef = std::variant<std::size_t*, double*, bool*, std::string*, std::vector<double>*>;
  struct Field {
    const char* key;
    FieldRef ref;
  };

  std::vector<Field> fields();
  std::vector<std::string> keys() const;

  /// Assigns one key from its text form; unknown keys raise ConfigError
  /// listing every valid key.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Applies `key=value` lines; blank lines and `#` comments are skipped.
  void apply_text(const std::string& text);
  void apply_file(const std::string& path);

  /// Fully resolved `key=value` listing in a fixed order; apply_text on the
  /// result reproduces this config exactly.
  std::string echo() const;

  void validate() const;
};

std::string format_double(double v);

}  // namespace faim
