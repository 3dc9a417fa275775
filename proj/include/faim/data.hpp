#pragma once

#include <string>
#include <vector>

#include "faim/tensor.hpp"

namespace faim {

/// Labeled fixed-length multichannel series held contiguously as x[N, C, T].
struct SeriesDataset {
  Tensor x;
  std::vector<std::size_t> y;
  std::vector<std::string> label_names;  // index -> original label text
  std::vector<double> channel_mean;      // set by znormalize
  std::vector<double> channel_std;

  std::size_t size() const { return y.size(); }
  std::size_t n_channels() const { return x.rank() == 3 ? x.extent(1) : 0; }
  std::size_t length() const { return x.rank() == 3 ? x.extent(2) : 0; }
  std::size_t n_classes() const { return label_names.size(); }

  /// Samples at `indices` (in that order) as a new dataset.
  SeriesDataset subset(const std::vector<std::size_t>& indices) const;
  /// Stacked series [indices.size(), C, T].
  Tensor batch(const std::vector<std::size_t>& indices) const;
};

/// Warnings are appended to `warnings` when given, otherwise printed to stderr.
using Warnings = std::vector<std::string>;

/// One sample per line: label then T values, tab or comma separated (decided
/// by the first line). Labels are remapped to 0..k-1 in first-appearance order.
SeriesDataset load_univariate(const std::string& path, Warnings* warnings = nullptr);

/// Line-delimited JSON records {"label": int|string, "series": [[...], ...]}.
SeriesDataset load_multivariate(const std::string& path, Warnings* warnings = nullptr);

/// `format` is ucr, jsonl, or auto (decided by a .jsonl/.json extension).
SeriesDataset load_dataset(const std::string& path, const std::string& format = "auto", Warnings* warnings = nullptr);

void save_univariate(const SeriesDataset& ds, const std::string& path);
void save_multivariate(const SeriesDataset& ds, const std::string& path);

/// Re-indexes `ds` to the label order of `names`; labels not in `names` are
/// appended with a warning.
void align_labels(SeriesDataset& ds, std::vector<std::string> names, Warnings* warnings = nullptr);

/// Per-channel (x - mean) / max(std, 1e-8) using statistics of `ds` itself.
SeriesDataset znormalize(const SeriesDataset& ds);
/// Applies given statistics, e.g. those of the train split, and stores them.
SeriesDataset znormalize(const SeriesDataset& ds, const std::vector<double>& mean, const std::vector<double>& std);
SeriesDataset denormalize(const SeriesDataset& ds);

/// x + sigma * n with n drawn from Rng::stream(seed, sample, channel).
SeriesDataset add_gaussian_noise(const SeriesDataset& ds, double sigma, std::uint64_t seed);

/// Class c: sin(2*pi*freqs[c]*t/T + phase) + snr_sigma * noise, phase uniform.
SeriesDataset make_synthetic_freq_dataset(std::size_t n_per_class, std::size_t length, const std::vector<double>& freqs,
                                          double snr_sigma, std::uint64_t seed);

/// Stratified seeded split: returns (kept, rest) where each class contributes
/// round(fraction * count) samples to `kept`. Both keep the original order.
std::pair<SeriesDataset, SeriesDataset> stratified_split(const SeriesDataset& ds, double fraction, std::uint64_t seed);

}  // namespace faim
