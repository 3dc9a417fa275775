#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace faim {

struct Scores {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

/// Macro-F1 averages per-class F1 over classes that occur in the labels or the
/// predictions; classes absent from both are skipped.
Scores accuracy_and_macro_f1(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels,
                             std::size_t n_classes);

/// Accuracy per (method, dataset) cell.
struct MetricTable {
  std::vector<std::string> methods;
  std::vector<std::string> datasets;
  std::map<std::pair<std::string, std::string>, double> accuracy;

  void set(const std::string& method, const std::string& dataset, double acc);
  double get(const std::string& method, const std::string& dataset) const;
};

/// Per dataset, methods ranked by descending accuracy with tied methods
/// sharing the mean of their ranks; averaged over datasets.
std::map<std::string, double> average_rank(const MetricTable& table);
std::map<std::string, double> average_accuracy(const MetricTable& table);
/// Number of datasets on which each method attains the best accuracy (ties count for all).
std::map<std::string, std::size_t> top1_counts(const MetricTable& table);

}  // namespace faim
