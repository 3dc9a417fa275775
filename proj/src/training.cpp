#include "faim/training.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>

#include "faim/errors.hpp"
#include "faim/metrics.hpp"
#include "faim/ops.hpp"
#include "faim/optim.hpp"

namespace faim {

MaskPlan make_mask(const Shape& shape, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ContractError("mask ratio must lie in [0, 1)");
  if (shape.empty() || shape.back() == 0) throw ShapeError("mask shape needs a non-empty patch axis");
  const std::size_t z = shape.back(), rows = numel(shape) / z;
  const auto n_masked = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(z)));
  std::vector<double> lambda(rows * z, 0.0);
  std::vector<std::size_t> order(z);
  for (std::size_t r = 0; r < rows; ++r) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng::stream(seed, r);
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t j = 0; j < n_masked; ++j) lambda[r * z + order[j]] = 1.0;
  }
  return {Tensor(shape, std::move(lambda)), ratio, seed};
}

Tensor masked_mse(const Tensor& x_true, const Tensor& x_hat, const Tensor& lambda) {
  if (x_true.shape() != x_hat.shape()) {
    throw ShapeError("masked_mse: " + shape_str(x_true.shape()) + " vs " + shape_str(x_hat.shape()));
  }
  const Shape patch_grid(x_true.shape().begin(), x_true.shape().end() - 1);
  if (lambda.shape() != patch_grid) {
    throw ShapeError("masked_mse: mask " + shape_str(lambda.shape()) + " does not match patches " + shape_str(patch_grid));
  }
  double total = 0.0;
  for (double v : lambda.data()) total += v;
  const Tensor per_patch = ops::mean_axis(ops::square(ops::sub(x_hat, x_true)), -1);
  const Tensor weighted = ops::sum(ops::mul(per_patch, lambda));
  return ops::scale(weighted, total == 0.0 ? 0.0 : 1.0 / total);
}

Tensor smoothed_targets(const std::vector<std::size_t>& y, std::size_t k, double eps) {
  if (k < 2) throw ContractError("label smoothing needs at least two classes");
  if (!(eps >= 0.0 && eps < 1.0)) throw ContractError("label smoothing eps must lie in [0, 1)");
  std::vector<double> t(y.size() * k, eps / static_cast<double>(k));
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] >= k) throw InputError("label " + std::to_string(y[i]) + " is out of range for " + std::to_string(k) + " classes");
    t[i * k + y[i]] += 1.0 - eps;
  }
  return Tensor(Shape{y.size(), k}, std::move(t));
}

Tensor label_smoothed_ce(const Tensor& logits, const std::vector<std::size_t>& y, double eps) {
  const Tensor l = logits.rank() == 1 ? ops::reshape(logits, {1, logits.size()}) : logits;
  if (l.rank() != 2 || l.extent(0) != y.size()) {
    throw ShapeError("label_smoothed_ce: logits " + shape_str(logits.shape()) + " for " + std::to_string(y.size()) +
                     " labels");
  }
  const Tensor targets = smoothed_targets(y, l.extent(1), eps);
  return ops::scale(ops::sum(ops::mul(targets, ops::log_softmax(l))), -1.0 / static_cast<double>(y.size()));
}

void TrainReport::add_summary(const std::string& key, const std::string& value) { summary.emplace_back(key, value); }
void TrainReport::add_summary(const std::string& key, double value) { summary.emplace_back(key, format_double(value)); }

std::string TrainReport::csv() const {
  std::string out = "epoch,split,loss,accuracy,macro_f1,seconds\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + r.split + "," + format_double(r.loss) + ",";
    out += (r.accuracy ? format_double(*r.accuracy) : "") + ",";
    out += (r.macro_f1 ? format_double(*r.macro_f1) : "") + ",";
    out += format_double(r.seconds) + "\n";
  }
  return out;
}

std::string TrainReport::summary_text() const {
  std::string out;
  for (const auto& [k, v] : summary) out += k + "=" + v + "\n";
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::stream(seed, epoch, 1);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

std::vector<Tensor> trainable(const FaimModel& model) {
  auto params = model.parameters();
  for (auto& p : params) p.set_requires_grad(true);
  return params;
}

void set_meta(FaimModel& model, const SeriesDataset& ds) {
  model.meta.labels = ds.label_names;
  model.meta.channel_mean = ds.channel_mean;
  model.meta.channel_std = ds.channel_std;
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  const std::size_t k = logits.extent(-1), n = logits.size() / k;
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = logits.data().subspan(i * k, k);
    out[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace

Evaluation evaluate(const FaimModel& model, const SeriesDataset& ds, std::size_t batch_size, double label_smooth_eps) {
  if (ds.size() == 0) throw InputError("cannot evaluate on an empty dataset");
  Evaluation ev;
  double loss = 0.0;
  for (std::size_t i = 0; i < ds.size(); i += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, ds.size() - i));
    std::iota(idx.begin(), idx.end(), i);
    const Tensor logits = faim_forward(model, ds.batch(idx)).logits;
    std::vector<std::size_t> y;
    for (auto j : idx) y.push_back(ds.y[j]);
    if (model.n_classes >= 2) loss += label_smoothed_ce(logits, y, label_smooth_eps).item() * static_cast<double>(idx.size());
    auto p = argmax_rows(logits);
    ev.predictions.insert(ev.predictions.end(), p.begin(), p.end());
  }
  ev.loss = loss / static_cast<double>(ds.size());
  const auto s = accuracy_and_macro_f1(ev.predictions, ds.y, std::max(model.n_classes, ds.n_classes()));
  ev.accuracy = s.accuracy;
  ev.macro_f1 = s.macro_f1;
  return ev;
}

TrainResult pretrain(const SeriesDataset& ds, const FaimConfig& config, const FaimModel* init) {
  if (ds.size() == 0) throw InputError("pretraining needs a non-empty dataset");
  const TrainConfig& tc = config.train;
  FaimModel model = init ? init->snapshot()
                         : FaimModel::create(config.model, ds.n_channels(), ds.length(),
                                             std::max<std::size_t>(ds.n_classes(), 1), tc.seed);
  set_meta(model, ds);
  auto params = trainable(model);
  AdamWState opt;
  opt.lr = tc.lr;
  opt.weight_decay = tc.weight_decay;

  const std::size_t b = model.config.patch_len, stride = model.config.stride();
  TrainResult result{model.snapshot(), {}};
  double best_loss = INFINITY;
  std::size_t best_epoch = 0;
  for (std::size_t epoch = 1; epoch <= tc.pretrain_epochs; ++epoch) {
    const auto t0 = Clock::now();
    double total = 0.0;
    const auto batches = epoch_batches(ds.size(), tc.batch_size, tc.seed, epoch);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Tensor xb = ds.batch(batches[bi]);
      const Tensor patches = patchify(xb, b, stride);
      Shape grid(patches.shape().begin(), patches.shape().end() - 1);
      const std::uint64_t mask_seed = Rng::stream(tc.seed, epoch, bi + 2).next_u64();
      const MaskPlan mask = make_mask(grid, tc.mask_ratio, mask_seed);
      Tape tape;
      {
        TapeScope scope(tape);
        const Tensor loss = masked_mse(patches, reconstruct_forward(model, xb, mask.lambda), mask.lambda);
        tape.backward(loss);
        total += loss.item() * static_cast<double>(batches[bi].size());
      }
      adamw_step(params, opt);
      for (auto& p : params) p.zero_grad();
    }
    const double loss = total / static_cast<double>(ds.size());
    result.report.rows.push_back({epoch, "pretrain", loss, std::nullopt, std::nullopt, seconds_since(t0)});
    if (loss < best_loss) {
      best_loss = loss;
      best_epoch = epoch;
      result.model = model.snapshot();
    }
  }
  result.report.add_summary("stage", "pretrain");
  result.report.add_summary("epochs", std::to_string(tc.pretrain_epochs));
  result.report.add_summary("best_epoch", std::to_string(best_epoch));
  result.report.add_summary("best_loss", best_epoch ? format_double(best_loss) : "");
  result.report.add_summary("n_samples", std::to_string(ds.size()));
  result.report.add_summary("n_parameters", std::to_string(params.size()));
  return result;
}

TrainResult finetune(const SeriesDataset& ds, const FaimConfig& config, const FaimModel* init, Warnings* warnings) {
  if (ds.size() == 0) throw InputError("fine-tuning needs a non-empty dataset");
  if (ds.n_classes() < 2) throw InputError("fine-tuning needs at least two classes");
  const TrainConfig& tc = config.train;

  SeriesDataset train = ds, val = ds;
  if (tc.val_fraction > 0.0) {
    auto [held, rest] = stratified_split(ds, tc.val_fraction, tc.seed);
    if (held.size() > 0 && rest.size() > 0) {
      val = std::move(held);
      train = std::move(rest);
    }
  }
  std::vector<std::size_t> counts(ds.n_classes(), 0);
  for (auto y : train.y) ++counts[y];
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      const std::string msg = "class '" + ds.label_names[c] + "' does not occur in the training split";
      if (warnings) {
        warnings->push_back(msg);
      } else {
        std::cerr << "warning: " << msg << "\n";
      }
    }
  }

  FaimModel model;
  if (init) {
    if (init->n_channels != ds.n_channels()) {
      throw InputError("initial model has " + std::to_string(init->n_channels) + " channels, data has " +
                       std::to_string(ds.n_channels()));
    }
    model = init->snapshot();
    if (model.n_classes != ds.n_classes()) {
      Rng rng = Rng::stream(tc.seed, 0xc15);
      model.cls_head = Linear::init(model.config.embed_dim, ds.n_classes(), rng);
      model.n_classes = ds.n_classes();
    }
  } else {
    model = FaimModel::create(config.model, ds.n_channels(), ds.length(), ds.n_classes(), tc.seed);
  }
  set_meta(model, ds);
  auto params = trainable(model);
  AdamWState opt;
  opt.lr = tc.lr;
  opt.weight_decay = tc.weight_decay;

  TrainResult result{model.snapshot(), {}};
  double best_acc = -1.0, best_loss = INFINITY;
  std::size_t best_epoch = 0;
  for (std::size_t epoch = 1; epoch <= tc.finetune_epochs; ++epoch) {
    const auto t0 = Clock::now();
    double total = 0.0;
    std::vector<std::size_t> preds, labels;
    for (const auto& idx : epoch_batches(train.size(), tc.batch_size, tc.seed, epoch)) {
      std::vector<std::size_t> y;
      for (auto j : idx) y.push_back(train.y[j]);
      Tape tape;
      {
        TapeScope scope(tape);
        const Tensor logits = faim_forward(model, train.batch(idx)).logits;
        const Tensor loss = label_smoothed_ce(logits, y, tc.label_smooth_eps);
        tape.backward(loss);
        total += loss.item() * static_cast<double>(idx.size());
        auto p = argmax_rows(logits);
        preds.insert(preds.end(), p.begin(), p.end());
        labels.insert(labels.end(), y.begin(), y.end());
      }
      adamw_step(params, opt);
      for (auto& p : params) p.zero_grad();
    }
    const double train_seconds = seconds_since(t0);
    const auto s = accuracy_and_macro_f1(preds, labels, ds.n_classes());
    result.report.rows.push_back(
        {epoch, "train", total / static_cast<double>(train.size()), s.accuracy, s.macro_f1, train_seconds});
    const auto t1 = Clock::now();
    const Evaluation ev = evaluate(model, val, tc.batch_size, tc.label_smooth_eps);
    result.report.rows.push_back({epoch, "val", ev.loss, ev.accuracy, ev.macro_f1, seconds_since(t1)});
    if (ev.accuracy > best_acc || (ev.accuracy == best_acc && ev.loss < best_loss)) {
      best_acc = ev.accuracy;
      best_loss = ev.loss;
      best_epoch = epoch;
      result.model = model.snapshot();
    }
  }
  result.report.add_summary("stage", "finetune");
  result.report.add_summary("epochs", std::to_string(tc.finetune_epochs));
  result.report.add_summary("best_epoch", std::to_string(best_epoch));
  result.report.add_summary("best_val_accuracy", best_epoch ? format_double(best_acc) : "");
  result.report.add_summary("best_val_loss", best_epoch ? format_double(best_loss) : "");
  result.report.add_summary("n_train", std::to_string(train.size()));
  result.report.add_summary("n_val", std::to_string(val.size()));
  result.report.add_summary("n_parameters", std::to_string(params.size()));
  return result;
}

}  // namespace faim
