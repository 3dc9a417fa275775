#include "faim/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <numbers>
#include <sstream>

#include "faim/config.hpp"
#include "faim/errors.hpp"
#include "faim/rng.hpp"

namespace faim {

namespace {

void warn(Warnings* warnings, const std::string& msg) {
  if (warnings) {
    warnings->push_back(msg);
  } else {
    std::cerr << "warning: " << msg << "\n";
  }
}

struct RawSample {
  std::string label;
  std::vector<std::vector<double>> channels;
};

// Pads every channel to the longest length by repeating its last value and
// assigns dense label indices in first-appearance order.
SeriesDataset assemble(const std::string& path, std::vector<RawSample> raw, Warnings* warnings) {
  if (raw.empty()) throw InputError(path + ": no samples");
  const std::size_t c = raw[0].channels.size();
  std::size_t t = 0, ragged = 0;
  for (const auto& s : raw)
    for (const auto& ch : s.channels) t = std::max(t, ch.size());
  SeriesDataset ds;
  std::vector<double> data;
  data.reserve(raw.size() * c * t);
  std::map<std::string, std::size_t> index;
  for (const auto& s : raw) {
    bool padded = false;
    for (const auto& ch : s.channels) {
      if (ch.empty()) throw InputError(path + ": empty series for label " + s.label);
      data.insert(data.end(), ch.begin(), ch.end());
      data.insert(data.end(), t - ch.size(), ch.back());
      padded = padded || ch.size() != t;
    }
    ragged += padded;
    auto [it, inserted] = index.emplace(s.label, ds.label_names.size());
    if (inserted) ds.label_names.push_back(s.label);
    ds.y.push_back(it->second);
  }
  if (ragged) {
    warn(warnings, path + ": " + std::to_string(ragged) + " sample(s) shorter than " + std::to_string(t) +
                       " padded by repeating the last value");
  }
  ds.x = Tensor(Shape{raw.size(), c, t}, std::move(data));
  return ds;
}

double parse_number(std::string_view text, const std::string& path, std::size_t line, std::size_t column) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw InputError(path + ":" + std::to_string(line) + ": column " + std::to_string(column) +
                     ": not a number: '" + std::string(text) + "'");
  }
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  return f;
}

}  // namespace

SeriesDataset SeriesDataset::subset(const std::vector<std::size_t>& indices) const {
  SeriesDataset out;
  out.x = batch(indices);
  for (auto i : indices) out.y.push_back(y.at(i));
  out.label_names = label_names;
  out.channel_mean = channel_mean;
  out.channel_std = channel_std;
  return out;
}

Tensor SeriesDataset::batch(const std::vector<std::size_t>& indices) const {
  const std::size_t stride = n_channels() * length();
  std::vector<double> data(indices.size() * stride);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= size()) throw ContractError("sample index out of range");
    std::copy_n(x.data().begin() + indices[k] * stride, stride, data.begin() + k * stride);
  }
  return Tensor(Shape{indices.size(), n_channels(), length()}, std::move(data));
}

SeriesDataset load_univariate(const std::string& path, Warnings* warnings) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open " + path);
  std::vector<RawSample> raw;
  std::string line;
  char delim = 0;
  for (std::size_t lineno = 1; std::getline(f, line); ++lineno) {
    if (trim(line).empty()) continue;
    if (!delim) delim = line.find('\t') != std::string::npos ? '\t' : ',';
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, delim)) fields.push_back(field);
    while (!fields.empty() && trim(fields.back()).empty()) fields.pop_back();
    if (fields.size() < 2) throw InputError(path + ":" + std::to_string(lineno) + ": expected a label and values");
    RawSample s;
    s.label = trim(fields[0]);
    s.channels.emplace_back();
    for (std::size_t i = 1; i < fields.size(); ++i) s.channels[0].push_back(parse_number(fields[i], path, lineno, i + 1));
    raw.push_back(std::move(s));
  }
  return assemble(path, std::move(raw), warnings);
}

SeriesDataset load_multivariate(const std::string& path, Warnings* warnings) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open " + path);
  std::vector<RawSample> raw;
  std::string line;
  for (std::size_t lineno = 1; std::getline(f, line); ++lineno) {
    if (trim(line).empty()) continue;
    const std::string where = path + ": record " + std::to_string(raw.size()) + " (line " + std::to_string(lineno) + ")";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("label") || !j.contains("series")) {
      throw InputError(where + ": expected an object with \"label\" and \"series\"");
    }
    RawSample s;
    const auto& label = j["label"];
    if (label.is_string()) {
      s.label = label.get<std::string>();
    } else if (label.is_number_integer()) {
      s.label = std::to_string(label.get<long long>());
    } else {
      throw InputError(where + ": label must be an integer or a string");
    }
    const auto& series = j["series"];
    if (!series.is_array() || series.empty()) throw InputError(where + ": series must be a non-empty array");
    for (const auto& ch : series) {
      if (!ch.is_array()) throw InputError(where + ": each channel must be an array of numbers");
      std::vector<double> values;
      for (const auto& v : ch) {
        if (!v.is_number()) throw InputError(where + ": non-numeric value " + v.dump());
        values.push_back(v.get<double>());
      }
      s.channels.push_back(std::move(values));
    }
    if (!raw.empty() && s.channels.size() != raw[0].channels.size()) {
      throw InputError(where + ": has " + std::to_string(s.channels.size()) + " channels, record 0 has " +
                       std::to_string(raw[0].channels.size()));
    }
    raw.push_back(std::move(s));
  }
  return assemble(path, std::move(raw), warnings);
}

SeriesDataset load_dataset(const std::string& path, const std::string& format, Warnings* warnings) {
  if (format == "jsonl") return load_multivariate(path, warnings);
  if (format == "ucr") return load_univariate(path, warnings);
  if (format != "auto") throw ConfigError("data.format must be auto, ucr or jsonl, got " + format);
  if (path.ends_with(".jsonl") || path.ends_with(".json")) return load_multivariate(path, warnings);
  return load_univariate(path, warnings);
}

void save_univariate(const SeriesDataset& ds, const std::string& path) {
  if (ds.n_channels() != 1) throw InputError("univariate format needs exactly one channel");
  auto f = open_out(path);
  const std::size_t t = ds.length();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    f << ds.label_names[ds.y[i]];
    for (std::size_t j = 0; j < t; ++j) f << '\t' << format_double(ds.x[i * t + j]);
    f << '\n';
  }
}

void save_multivariate(const SeriesDataset& ds, const std::string& path) {
  auto f = open_out(path);
  const std::size_t c = ds.n_channels(), t = ds.length();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    f << "{\"label\": " << nlohmann::json(ds.label_names[ds.y[i]]).dump() << ", \"series\": [";
    for (std::size_t ch = 0; ch < c; ++ch) {
      f << (ch ? ", [" : "[");
      for (std::size_t j = 0; j < t; ++j) f << (j ? ", " : "") << format_double(ds.x[(i * c + ch) * t + j]);
      f << "]";
    }
    f << "]}\n";
  }
}

void align_labels(SeriesDataset& ds, std::vector<std::string> names, Warnings* warnings) {
  std::vector<std::size_t> remap(ds.label_names.size());
  for (std::size_t k = 0; k < ds.label_names.size(); ++k) {
    auto it = std::find(names.begin(), names.end(), ds.label_names[k]);
    if (it == names.end()) {
      warn(warnings, "label '" + ds.label_names[k] + "' does not occur in the reference label set");
      names.push_back(ds.label_names[k]);
      it = names.end() - 1;
    }
    remap[k] = static_cast<std::size_t>(it - names.begin());
  }
  for (auto& y : ds.y) y = remap[y];
  ds.label_names = std::move(names);
}

SeriesDataset znormalize(const SeriesDataset& ds) {
  const std::size_t n = ds.size(), c = ds.n_channels(), t = ds.length();
  std::vector<double> mean(c, 0.0), std(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < t; ++j) s += ds.x[(i * c + ch) * t + j];
    mean[ch] = s / static_cast<double>(n * t);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < t; ++j) {
        const double d = ds.x[(i * c + ch) * t + j] - mean[ch];
        v += d * d;
      }
    std[ch] = std::sqrt(v / static_cast<double>(n * t));
  }
  return znormalize(ds, mean, std);
}

SeriesDataset znormalize(const SeriesDataset& ds, const std::vector<double>& mean, const std::vector<double>& std) {
  const std::size_t c = ds.n_channels(), t = ds.length();
  if (mean.size() != c || std.size() != c) {
    throw InputError("normalization statistics cover " + std::to_string(mean.size()) + " channels, data has " +
                     std::to_string(c));
  }
  SeriesDataset out = ds;
  out.x = ds.x.clone();
  auto data = out.x.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t ch = (i / t) % c;
    data[i] = (data[i] - mean[ch]) / std::max(std[ch], 1e-8);
  }
  out.channel_mean = mean;
  out.channel_std = std;
  return out;
}

SeriesDataset denormalize(const SeriesDataset& ds) {
  const std::size_t c = ds.n_channels(), t = ds.length();
  if (ds.channel_mean.size() != c) throw InputError("dataset carries no normalization statistics");
  SeriesDataset out = ds;
  out.x = ds.x.clone();
  auto data = out.x.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t ch = (i / t) % c;
    data[i] = data[i] * std::max(ds.channel_std[ch], 1e-8) + ds.channel_mean[ch];
  }
  out.channel_mean.clear();
  out.channel_std.clear();
  return out;
}

SeriesDataset add_gaussian_noise(const SeriesDataset& ds, double sigma, std::uint64_t seed) {
  if (sigma < 0) throw InputError("noise sigma must be >= 0");
  SeriesDataset out = ds;
  out.x = ds.x.clone();
  if (sigma == 0.0) return out;
  const std::size_t c = ds.n_channels(), t = ds.length();
  auto data = out.x.mutable_data();
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      Rng rng = Rng::stream(seed, i, ch);
      for (std::size_t j = 0; j < t; ++j) data[(i * c + ch) * t + j] += sigma * rng.normal();
    }
  return out;
}

SeriesDataset make_synthetic_freq_dataset(std::size_t n_per_class, std::size_t length, const std::vector<double>& freqs,
                                          double snr_sigma, std::uint64_t seed) {
  if (freqs.empty()) throw InputError("synthetic corpus needs at least one frequency");
  if (length < 1) throw InputError("synthetic series length must be >= 1");
  for (std::size_t a = 0; a < freqs.size(); ++a) {
    if (!(freqs[a] >= 0) || freqs[a] >= static_cast<double>(length) / 2.0) {
      throw InputError("frequency " + format_double(freqs[a]) + " must lie in [0, T/2)");
    }
    for (std::size_t b = 0; b < a; ++b)
      if (freqs[a] == freqs[b]) throw InputError("synthetic frequencies must be distinct");
  }
  if (snr_sigma < 0) throw InputError("synthetic noise sigma must be >= 0");
  SeriesDataset ds;
  for (double f : freqs) ds.label_names.push_back(format_double(f));
  const std::size_t k = freqs.size(), n = n_per_class * k;
  std::vector<double> data(n * length);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i % k;
    Rng rng = Rng::stream(seed, i);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t t = 0; t < length; ++t) {
      const double angle = 2.0 * std::numbers::pi * freqs[cls] * static_cast<double>(t) / static_cast<double>(length);
      data[i * length + t] = std::sin(angle + phase) + snr_sigma * rng.normal();
    }
    ds.y.push_back(cls);
  }
  ds.x = Tensor(Shape{n, 1, length}, std::move(data));
  return ds;
}

std::pair<SeriesDataset, SeriesDataset> stratified_split(const SeriesDataset& ds, double fraction, std::uint64_t seed) {
  if (fraction < 0 || fraction > 1) throw InputError("split fraction must lie in [0, 1]");
  std::vector<std::vector<std::size_t>> by_class(std::max<std::size_t>(ds.n_classes(), 1));
  for (std::size_t i = 0; i < ds.size(); ++i) by_class.at(ds.y[i]).push_back(i);
  std::vector<char> kept(ds.size(), 0);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    Rng rng = Rng::stream(seed, c, 0x5eed);
    rng.shuffle(std::span<std::size_t>(idx));
    const auto n_keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    for (std::size_t j = 0; j < n_keep && j < idx.size(); ++j) kept[idx[j]] = 1;
  }
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < ds.size(); ++i) (kept[i] ? a : b).push_back(i);
  return {ds.subset(a), ds.subset(b)};
}

}  // namespace faim
