#include "faim/experiment.hpp"

#include "faim/errors.hpp"

namespace faim {

std::pair<SeriesDataset, SeriesDataset> synthetic_splits(const SynthConfig& s) {
  const std::uint64_t train_seed = Rng::stream(s.seed, 1).next_u64();
  const std::uint64_t test_seed = Rng::stream(s.seed, 2).next_u64();
  return {make_synthetic_freq_dataset(s.n_per_class, s.length, s.freqs, s.sigma, train_seed),
          make_synthetic_freq_dataset(s.n_per_class, s.length, s.freqs, s.sigma, test_seed)};
}

Splits load_splits(const FaimConfig& config, Warnings* warnings) {
  Splits out;
  if (config.data.train.empty()) {
    auto [train, test] = synthetic_splits(config.synth);
    out.train = std::move(train);
    out.test = std::move(test);
    out.synthetic = true;
  } else {
    out.train = load_dataset(config.data.train, config.data.format, warnings);
    if (!config.data.test.empty()) {
      out.test = load_dataset(config.data.test, config.data.format, warnings);
      if (out.test->n_channels() != out.train.n_channels()) {
        throw InputError("test data has " + std::to_string(out.test->n_channels()) + " channels, train data has " +
                         std::to_string(out.train.n_channels()));
      }
      align_labels(*out.test, out.train.label_names, warnings);
    }
  }
  if (config.data.normalize) {
    out.train = znormalize(out.train);
    if (out.test) out.test = znormalize(*out.test, out.train.channel_mean, out.train.channel_std);
  }
  return out;
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names{"full", "no_afb", "no_hf", "no_lf", "no_hf_lf", "no_imb", "no_pretrain"};
  return names;
}

std::string variant_label(const std::string& v) {
  if (v == "full") return "FAIM";
  if (v == "no_afb") return "w/o AFB";
  if (v == "no_hf") return "w/o HF";
  if (v == "no_lf") return "w/o LF";
  if (v == "no_hf_lf") return "w/o HF+LF";
  if (v == "no_imb") return "w/o IMB";
  if (v == "no_pretrain") return "w/o Pretrain";
  throw ConfigError("unknown variant '" + v + "'");
}

FaimConfig apply_variant(FaimConfig c, const std::string& v) {
  variant_label(v);  // validates the name
  if (v == "no_afb") c.model.use_afb = false;
  if (v == "no_hf" || v == "no_hf_lf") c.model.afb_use_high = false;
  if (v == "no_lf" || v == "no_hf_lf") c.model.afb_use_low = false;
  if (v == "no_imb") c.model.use_imb = false;
  if (v == "no_pretrain") c.train.pretrain = false;
  return c;
}

PipelineResult run_pipeline(const SeriesDataset& train, const SeriesDataset* test, const FaimConfig& config,
                            Warnings* warnings) {
  PipelineResult out;
  const FaimModel* init = nullptr;
  std::optional<FaimModel> loaded;
  if (!config.train.init_checkpoint.empty()) {
    loaded = load_checkpoint(config.train.init_checkpoint);
    init = &*loaded;
  }
  if (config.train.pretrain && config.train.pretrain_epochs > 0) {
    TrainResult pre = pretrain(train, config, init);
    out.pretrain_report = std::move(pre.report);
    loaded = std::move(pre.model);
    init = &*loaded;
  }
  const SeriesDataset labeled =
      config.data.train_fraction < 1.0 ? stratified_split(train, config.data.train_fraction, config.train.seed).first
                                       : train;
  TrainResult fine = finetune(labeled, config, init, warnings);
  out.model = std::move(fine.model);
  out.finetune_report = std::move(fine.report);
  if (test) out.test = evaluate(out.model, *test, config.train.batch_size, config.train.label_smooth_eps);
  return out;
}

}  // namespace faim
