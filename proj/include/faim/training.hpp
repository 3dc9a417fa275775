#pragma once

#include <optional>
#include <string>
#include <vector>

#include "faim/config.hpp"
#include "faim/data.hpp"
#include "faim/model.hpp"

namespace faim {

struct MaskPlan {
  Tensor lambda;  // [..., Z] in {0, 1}
  double ratio = 0.0;
  std::uint64_t seed = 0;
};

/// Masks exactly round(ratio * Z) patches in every row of a [..., Z] grid,
/// chosen by a seeded shuffle per row.
MaskPlan make_mask(const Shape& shape, double ratio, std::uint64_t seed);

/// (1 / sum(lambda)) * sum_i lambda_i * mean_j (x_ij - xhat_ij)^2 over patches
/// [..., Z, b]; zero when nothing is masked.
Tensor masked_mse(const Tensor& x_true, const Tensor& x_hat, const Tensor& lambda);

/// (1 - eps) * onehot(y) + eps / k for each label, as [N, k].
Tensor smoothed_targets(const std::vector<std::size_t>& y, std::size_t k, double eps);

/// -sum(y_smooth * log_softmax(logits)) averaged over rows of logits [N, k]
/// (or [k] with one label).
Tensor label_smoothed_ce(const Tensor& logits, const std::vector<std::size_t>& y, double eps);

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;  // pretrain | train | val | test
  double loss = 0.0;
  std::optional<double> accuracy;
  std::optional<double> macro_f1;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> rows;
  std::vector<std::pair<std::string, std::string>> summary;  // written in this order

  void add_summary(const std::string& key, const std::string& value);
  void add_summary(const std::string& key, double value);
  std::string csv() const;
  std::string summary_text() const;
};

struct TrainResult {
  FaimModel model;  // the best checkpoint
  TrainReport report;
};

struct Evaluation {
  std::vector<std::size_t> predictions;
  double loss = 0.0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

/// Forward passes in batches without recording a tape.
Evaluation evaluate(const FaimModel& model, const SeriesDataset& ds, std::size_t batch_size, double label_smooth_eps);

/// Masked-reconstruction pretraining with AdamW; keeps the lowest-loss epoch.
/// Starts from `init` when given, otherwise from a fresh model.
TrainResult pretrain(const SeriesDataset& ds, const FaimConfig& config, const FaimModel* init = nullptr);

/// Label-smoothed supervised training with AdamW on a stratified split of `ds`
/// (train.val_fraction held out); keeps the epoch with the best validation
/// accuracy, ties going to the lower validation loss.
TrainResult finetune(const SeriesDataset& ds, const FaimConfig& config, const FaimModel* init = nullptr,
                     Warnings* warnings = nullptr);

}  // namespace faim
