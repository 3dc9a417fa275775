#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "faim/data.hpp"
#include "faim/errors.hpp"
#include "faim/spectral.hpp"
#include "test_util.hpp"

using namespace faim;
using faim::testing::max_abs_diff;
using faim::testing::random_tensor;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  const auto p = (std::filesystem::temp_directory_path() / ("faim_data_" + name)).string();
  std::ofstream(p) << text;
  return p;
}

bool same(const SeriesDataset& a, const SeriesDataset& b) {
  return a.x.shape() == b.x.shape() && max_abs_diff(a.x.data(), b.x.data()) == 0.0 && a.y == b.y &&
         a.label_names == b.label_names;
}

}  // namespace

TEST_CASE("load_univariate examples") {
  SUBCASE("tab separated") {
    auto ds = load_univariate(write_temp("u1.tsv", "0\t1\t2\n1\t3\t4\n"));
    CHECK(ds.size() == 2);
    CHECK(ds.length() == 2);
    CHECK(ds.n_channels() == 1);
    CHECK(ds.n_classes() == 2);
    CHECK(max_abs_diff(ds.x.data(), std::vector<double>{1, 2, 3, 4}) == 0.0);
  }
  SUBCASE("labels remapped in first-appearance order") {
    auto ds = load_univariate(write_temp("u2.csv", "5,1,2\n3,3,4\n5,0,0\n"));
    CHECK(ds.y == std::vector<std::size_t>{0, 1, 0});
    CHECK(ds.label_names == std::vector<std::string>{"5", "3"});
  }
  SUBCASE("ragged rows are padded with the last value and warned about") {
    Warnings w;
    auto ds = load_univariate(write_temp("u3.csv", "a,1,2,3\nb,1,2,3,4,5\n"), &w);
    CHECK(ds.length() == 5);
    CHECK(max_abs_diff(ds.x.data().subspan(0, 5), std::vector<double>{1, 2, 3, 3, 3}) == 0.0);
    CHECK(w.size() == 1);
  }
  SUBCASE("parse errors name the line and column") {
    try {
      load_univariate(write_temp("u4.csv", "0,1,2\n1,3,x4\n"));
      FAIL("expected an error");
    } catch (const InputError& e) {
      const std::string msg = e.what();
      CHECK(msg.find(":2:") != std::string::npos);
      CHECK(msg.find("column 3") != std::string::npos);
    }
  }
  CHECK_THROWS_AS(load_univariate("/nonexistent/file.tsv"), InputError);
  CHECK_THROWS_AS(load_univariate(write_temp("u5.csv", "\n\n")), InputError);
}

TEST_CASE("load_multivariate examples") {
  SUBCASE("one record") {
    auto ds = load_multivariate(write_temp("m1.jsonl", R"({"label": 0, "series": [[1, 2], [3, 4]]})" "\n"));
    CHECK(ds.size() == 1);
    CHECK(ds.n_channels() == 2);
    CHECK(ds.length() == 2);
    CHECK(ds.label_names == std::vector<std::string>{"0"});
  }
  SUBCASE("lengths are padded") {
    auto ds = load_multivariate(write_temp("m2.jsonl", "{\"label\": \"a\", \"series\": [[1, 2]]}\n"
                                                       "{\"label\": \"b\", \"series\": [[1, 2, 3]]}\n"),
                                nullptr);
    CHECK(ds.length() == 3);
    CHECK(max_abs_diff(ds.x.data(), std::vector<double>{1, 2, 2, 1, 2, 3}) == 0.0);
  }
  SUBCASE("channel mismatch names the record") {
    try {
      load_multivariate(write_temp("m3.jsonl", "{\"label\": 0, \"series\": [[1], [2]]}\n"
                                               "{\"label\": 1, \"series\": [[1], [2], [3]]}\n"));
      FAIL("expected an error");
    } catch (const InputError& e) {
      CHECK(std::string(e.what()).find("record 1") != std::string::npos);
    }
  }
  CHECK_THROWS_AS(load_multivariate(write_temp("m4.jsonl", "{\"label\": 0}\n")), InputError);
  CHECK_THROWS_AS(load_multivariate(write_temp("m5.jsonl", "{not json\n")), InputError);
  CHECK_THROWS_AS(load_multivariate(write_temp("m6.jsonl", "{\"label\": 0.5, \"series\": [[1]]}\n")), InputError);
}

TEST_CASE("save then load round-trips both formats") {
  SeriesDataset uni;
  uni.x = random_tensor({5, 1, 7}, 1);
  uni.y = {0, 1, 2, 1, 0};
  uni.label_names = {"x", "7", "-1"};
  const auto pu = write_temp("rt.tsv", "");
  save_univariate(uni, pu);
  CHECK(same(load_univariate(pu), uni));

  SeriesDataset multi;
  multi.x = random_tensor({4, 3, 6}, 2, 1e3);
  multi.y = {1, 0, 0, 1};
  multi.label_names = {"walk \"fast\"", "sit"};
  const auto pm = write_temp("rt.jsonl", "");
  save_multivariate(multi, pm);
  auto back = load_multivariate(pm);
  // Labels are re-indexed in first-appearance order on load.
  align_labels(back, multi.label_names);
  CHECK(same(back, multi));
  CHECK(same(load_dataset(pm), load_multivariate(pm)));
  CHECK_THROWS_AS(save_univariate(multi, pu), InputError);
}

TEST_CASE("bundled BasicMotions files load") {
  auto train = load_dataset(std::string(FAIM_DATA_DIR) + "/basicmotions/train.jsonl");
  auto test = load_dataset(std::string(FAIM_DATA_DIR) + "/basicmotions/test.jsonl");
  CHECK(train.size() == 40);
  CHECK(test.size() == 40);
  CHECK(train.n_channels() == 6);
  CHECK(train.length() == 100);
  CHECK(train.n_classes() == 4);
}

TEST_CASE("align_labels") {
  SeriesDataset ds;
  ds.x = Tensor(Shape{3, 1, 1});
  ds.y = {0, 1, 0};
  ds.label_names = {"b", "c"};
  Warnings w;
  align_labels(ds, {"a", "b"}, &w);
  CHECK(ds.label_names == std::vector<std::string>{"a", "b", "c"});
  CHECK(ds.y == std::vector<std::size_t>{1, 2, 1});
  CHECK(w.size() == 1);
}

TEST_CASE("znormalize examples") {
  SUBCASE("constant channel becomes zeros") {
    SeriesDataset ds;
    ds.x = Tensor(Shape{2, 1, 3}, 4.0);
    ds.y = {0, 0};
    ds.label_names = {"a"};
    auto n = znormalize(ds);
    for (double v : n.x.data()) CHECK(v == 0.0);
  }
  SUBCASE("[0, 2] -> [-1, 1]") {
    SeriesDataset ds;
    ds.x = Tensor(Shape{1, 1, 2}, {0.0, 2.0});
    ds.y = {0};
    ds.label_names = {"a"};
    CHECK(max_abs_diff(znormalize(ds).x.data(), std::vector<double>{-1, 1}) == 0.0);
  }
  SUBCASE("random data: zero mean, unit std, invertible, test split uses train stats") {
    SeriesDataset ds;
    ds.x = random_tensor({10, 3, 50}, 3, 4.0);
    auto d = ds.x.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += static_cast<double>((i / 50) % 3) * 10.0 - 7.0;
    ds.y.assign(10, 0);
    ds.label_names = {"a"};
    auto n = znormalize(ds);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      double s = 0, s2 = 0;
      for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t t = 0; t < 50; ++t) {
          const double v = n.x[(i * 3 + ch) * 50 + t];
          s += v;
          s2 += v * v;
        }
      CHECK(std::abs(s / 500) < 1e-10);
      CHECK(std::abs(std::sqrt(s2 / 500 - (s / 500) * (s / 500)) - 1.0) < 1e-6);
    }
    CHECK(max_abs_diff(denormalize(n).x.data(), ds.x.data()) < 1e-12);
    auto test = znormalize(ds.subset({0, 1}), n.channel_mean, n.channel_std);
    CHECK(max_abs_diff(test.x.data(), n.x.data().subspan(0, 300)) == 0.0);
  }
}

TEST_CASE("add_gaussian_noise") {
  SeriesDataset ds;
  ds.x = random_tensor({3, 2, 20}, 4);
  ds.y = {0, 0, 0};
  ds.label_names = {"a"};
  const auto original = ds.x.clone();
  SUBCASE("sigma 0 is an exact copy") {
    auto n = add_gaussian_noise(ds, 0.0, 1);
    CHECK(max_abs_diff(n.x.data(), ds.x.data()) == 0.0);
    CHECK(!n.x.same_storage(ds.x));
  }
  SUBCASE("same seed twice is identical, and the source is untouched") {
    auto a = add_gaussian_noise(ds, 0.5, 9);
    auto b = add_gaussian_noise(ds, 0.5, 9);
    CHECK(max_abs_diff(a.x.data(), b.x.data()) == 0.0);
    CHECK(max_abs_diff(a.x.data(), ds.x.data()) > 0.0);
    CHECK(max_abs_diff(ds.x.data(), original.data()) == 0.0);
  }
  SUBCASE("noise depends on (seed, sample, channel) only") {
    auto full = add_gaussian_noise(ds, 1.0, 5);
    auto part = add_gaussian_noise(ds.subset({2}), 1.0, 5);
    // Sample 2 alone becomes sample 0, so it draws a different stream.
    CHECK(max_abs_diff(part.x.data(), full.x.data().subspan(80, 40)) > 0.0);
    auto first = add_gaussian_noise(ds.subset({0, 1}), 1.0, 5);
    CHECK(max_abs_diff(first.x.data(), full.x.data().subspan(0, 80)) == 0.0);
  }
  SUBCASE("sigma 1 on zeros has unit sample std") {
    SeriesDataset z;
    z.x = Tensor(Shape{1, 1, 4000}, 0.0);
    z.y = {0};
    z.label_names = {"a"};
    auto n = add_gaussian_noise(z, 1.0, 11);
    double s = 0, s2 = 0;
    for (double v : n.x.data()) {
      s += v;
      s2 += v * v;
    }
    const double sd = std::sqrt(s2 / 4000 - (s / 4000) * (s / 4000));
    CHECK(std::abs(sd - 1.0) < 0.05);
  }
  CHECK_THROWS_AS(add_gaussian_noise(ds, -1.0, 1), InputError);
}

TEST_CASE("make_synthetic_freq_dataset") {
  SUBCASE("an rfft argmax-bin classifier is perfect on the noiseless set") {
    auto ds = make_synthetic_freq_dataset(20, 128, {3, 12}, 0.0, 1);
    CHECK(ds.size() == 40);
    CHECK(ds.n_classes() == 2);
    CHECK(ds.length() == 128);
    // [N, 1, T] has the same layout as [N, T, 1], i.e. T tokens of width 1.
    auto spec = spectral::rfft(Tensor(Shape{40, 128, 1}, std::vector<double>(ds.x.data().begin(), ds.x.data().end())));
    const std::size_t k = spec.n_bins();
    for (std::size_t i = 0; i < 40; ++i) {
      std::size_t best = 0;
      double best_mag = -1;
      for (std::size_t b = 0; b < k; ++b) {
        const double re = spec.bins.re[i * k + b], im = spec.bins.im[i * k + b];
        if (re * re + im * im > best_mag) {
          best_mag = re * re + im * im;
          best = b;
        }
      }
      const std::size_t predicted = best == 3 ? 0 : best == 12 ? 1 : 99;
      CHECK(predicted == ds.y[i]);
    }
  }
  SUBCASE("fixed seed gives an identical corpus") {
    auto a = make_synthetic_freq_dataset(10, 64, {3, 12}, 0.5, 4);
    auto b = make_synthetic_freq_dataset(10, 64, {3, 12}, 0.5, 4);
    CHECK(same(a, b));
    auto c = make_synthetic_freq_dataset(10, 64, {3, 12}, 0.5, 5);
    CHECK(max_abs_diff(a.x.data(), c.x.data()) > 0.0);
  }
  SUBCASE("balanced classes with amplitude-one sinusoids") {
    auto ds = make_synthetic_freq_dataset(5, 32, {1, 4, 7}, 0.0, 2);
    CHECK(std::count(ds.y.begin(), ds.y.end(), 2u) == 5);
    for (double v : ds.x.data()) CHECK(std::abs(v) <= 1.0);
  }
  CHECK_THROWS_AS(make_synthetic_freq_dataset(5, 32, {3, 3}, 0.0, 1), InputError);
  CHECK_THROWS_AS(make_synthetic_freq_dataset(5, 32, {3, 16}, 0.0, 1), InputError);
}

TEST_CASE("stratified_split") {
  auto ds = make_synthetic_freq_dataset(10, 16, {1, 3}, 0.1, 3);
  auto [a, b] = stratified_split(ds, 0.2, 8);
  CHECK(a.size() == 4);
  CHECK(b.size() == 16);
  CHECK(std::count(a.y.begin(), a.y.end(), 0u) == 2);
  auto [a2, b2] = stratified_split(ds, 0.2, 8);
  CHECK(same(a, a2));
  auto [all, none] = stratified_split(ds, 1.0, 8);
  CHECK(same(all, ds));
  CHECK(none.size() == 0);
}
