#include "faim/metrics.hpp"

#include <algorithm>

#include "faim/errors.hpp"

namespace faim {

Scores accuracy_and_macro_f1(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels,
                             std::size_t n_classes) {
  if (preds.empty()) throw InputError("cannot score an empty prediction set");
  if (preds.size() != labels.size()) throw InputError("predictions and labels differ in length");
  std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= n_classes || labels[i] >= n_classes) throw InputError("class index out of range");
    if (preds[i] == labels[i]) {
      ++correct;
      ++tp[preds[i]];
    } else {
      ++fp[preds[i]];
      ++fn[labels[i]];
    }
  }
  double f1_sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (tp[c] + fp[c] + fn[c] == 0) continue;
    f1_sum += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    ++counted;
  }
  return {static_cast<double>(correct) / static_cast<double>(preds.size()), f1_sum / static_cast<double>(counted)};
}

void MetricTable::set(const std::string& method, const std::string& dataset, double acc) {
  if (std::find(methods.begin(), methods.end(), method) == methods.end()) methods.push_back(method);
  if (std::find(datasets.begin(), datasets.end(), dataset) == datasets.end()) datasets.push_back(dataset);
  accuracy[{method, dataset}] = acc;
}

double MetricTable::get(const std::string& method, const std::string& dataset) const {
  auto it = accuracy.find({method, dataset});
  if (it == accuracy.end()) throw InputError("no score for method '" + method + "' on dataset '" + dataset + "'");
  return it->second;
}

std::map<std::string, double> average_rank(const MetricTable& table) {
  std::map<std::string, double> total;
  for (const auto& d : table.datasets) {
    std::vector<std::pair<double, std::string>> scores;
    for (const auto& m : table.methods) scores.emplace_back(table.get(m, d), m);
    std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; i < scores.size();) {
      std::size_t j = i;
      while (j < scores.size() && scores[j].first == scores[i].first) ++j;
      const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
      for (std::size_t k = i; k < j; ++k) total[scores[k].second] += rank;
      i = j;
    }
  }
  for (auto& [m, r] : total) r /= static_cast<double>(table.datasets.size());
  return total;
}

std::map<std::string, double> average_accuracy(const MetricTable& table) {
  std::map<std::string, double> out;
  for (const auto& m : table.methods) {
    double s = 0.0;
    for (const auto& d : table.datasets) s += table.get(m, d);
    out[m] = s / static_cast<double>(table.datasets.size());
  }
  return out;
}

std::map<std::string, std::size_t> top1_counts(const MetricTable& table) {
  std::map<std::string, std::size_t> out;
  for (const auto& m : table.methods) out[m] = 0;
  for (const auto& d : table.datasets) {
    double best = -1.0;
    for (const auto& m : table.methods) best = std::max(best, table.get(m, d));
    for (const auto& m : table.methods)
      if (table.get(m, d) == best) ++out[m];
  }
  return out;
}

}  // namespace faim
