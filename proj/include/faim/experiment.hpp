#pragma once

#include <optional>
#include <string>
#include <vector>

#include "faim/training.hpp"

namespace faim {

struct Splits {
  SeriesDataset train;
  std::optional<SeriesDataset> test;
  bool synthetic = false;
};

/// Train and test splits per data.*: files when data.train is set, otherwise
/// the synth.* corpus (train from stream 1, test from stream 2 of synth.seed).
/// Test labels follow the train label order; both are z-normalized with train
/// statistics when data.normalize is set.
Splits load_splits(const FaimConfig& config, Warnings* warnings = nullptr);

/// Synthetic train/test pair as used by load_splits.
std::pair<SeriesDataset, SeriesDataset> synthetic_splits(const SynthConfig& synth);

/// Known ablation variants in their canonical order.
const std::vector<std::string>& variant_names();
/// Human-readable row label, e.g. no_afb -> "w/o AFB".
std::string variant_label(const std::string& variant);
/// Config for a named variant; unknown names raise ConfigError.
FaimConfig apply_variant(FaimConfig config, const std::string& variant);

struct PipelineResult {
  FaimModel model;
  std::optional<TrainReport> pretrain_report;
  TrainReport finetune_report;
  std::optional<Evaluation> test;
};

/// Optional pretraining on all of `train` (labels unused), then fine-tuning on
/// the leading data.train_fraction of it (stratified), then test evaluation.
PipelineResult run_pipeline(const SeriesDataset& train, const SeriesDataset* test, const FaimConfig& config,
                            Warnings* warnings = nullptr);

}  // namespace faim
