#include <sstream>
#include <cmath>

#include "doctest.h"
#include "faim/errors.hpp"
#include "faim/gradcheck.hpp"
#include "faim/ops.hpp"
#include "faim/optim.hpp"
#include "faim/training.hpp"
#include "test_util.hpp"

using namespace faim;
using faim::testing::max_abs_diff;
using faim::testing::random_tensor;

namespace {

FaimConfig tiny() {
  FaimConfig c;
  c.model.patch_len = 4;
  c.model.embed_dim = 8;
  c.model.n_layers = 1;
  c.model.ssm_state = 4;
  c.train.batch_size = 8;
  c.train.seed = 3;
  return c;
}

// Class 0 constant, class 1 ramp, both with a random offset.
SeriesDataset separable_toy(std::size_t n, std::uint64_t seed) {
  SeriesDataset ds;
  ds.label_names = {"constant", "ramp"};
  std::vector<double> data;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double offset = rng.uniform(-1, 1);
    for (std::size_t t = 0; t < 16; ++t) data.push_back(offset + (i % 2 ? static_cast<double>(t) / 8.0 : 0.0));
    ds.y.push_back(i % 2);
  }
  ds.x = Tensor(Shape{n, 1, 16}, data);
  return ds;
}

std::string without_seconds(const std::string& csv) {
  std::string out, line;
  std::istringstream in(csv);
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

}  // namespace

TEST_CASE("make_mask") {
  SUBCASE("ratio 0 masks nothing") {
    auto m = make_mask({3, 10}, 0.0, 1);
    for (double v : m.lambda.data()) CHECK(v == 0.0);
  }
  SUBCASE("ratio 0.5 with Z=10 masks exactly five per channel") {
    auto m = make_mask({2, 4, 10}, 0.5, 2);
    for (std::size_t r = 0; r < 8; ++r) {
      double s = 0;
      for (std::size_t z = 0; z < 10; ++z) s += m.lambda[r * 10 + z];
      CHECK(s == 5.0);
    }
  }
  SUBCASE("mean within 1/Z of the ratio and deterministic") {
    for (std::size_t z : {1u, 3u, 7u, 13u, 16u}) {
      auto m = make_mask({5, z}, 0.4, 9);
      for (std::size_t r = 0; r < 5; ++r) {
        double s = 0;
        for (std::size_t j = 0; j < z; ++j) {
          const double v = m.lambda[r * z + j];
          CHECK((v == 0.0 || v == 1.0));
          s += v;
        }
        CHECK(std::abs(s / static_cast<double>(z) - 0.4) <= 1.0 / static_cast<double>(z));
      }
      CHECK(max_abs_diff(m.lambda.data(), make_mask({5, z}, 0.4, 9).lambda.data()) == 0.0);
    }
    CHECK(max_abs_diff(make_mask({4, 16}, 0.4, 1).lambda.data(), make_mask({4, 16}, 0.4, 2).lambda.data()) > 0.0);
  }
  CHECK_THROWS_AS(make_mask({2, 4}, 1.0, 1), ContractError);
  CHECK_THROWS_AS(make_mask({2, 4}, -0.1, 1), ContractError);
}

TEST_CASE("masked_mse") {
  auto x = random_tensor({2, 3, 4}, 1);
  Tensor lambda(Shape{2, 3}, {0, 1, 0, 1, 0, 1});
  SUBCASE("exact reconstruction gives zero") { CHECK(masked_mse(x, x, lambda).item() == 0.0); }
  SUBCASE("one masked patch with error [1, -1, 0, 0] gives 0.5") {
    Tensor truth(Shape{1, 4}, 0.0);
    Tensor hat(Shape{1, 4}, {1, -1, 0, 0});
    CHECK(masked_mse(truth, hat, Tensor(Shape{1}, 1.0)).item() == 0.5);
  }
  SUBCASE("nothing masked gives zero") {
    CHECK(masked_mse(x, random_tensor({2, 3, 4}, 2), Tensor(Shape{2, 3}, 0.0)).item() == 0.0);
  }
  SUBCASE("unmasked patches do not matter, masked ones follow the formula") {
    auto hat = random_tensor({2, 3, 4}, 3);
    const double base = masked_mse(x, hat, lambda).item();
    auto hat2 = hat.clone();
    for (std::size_t j = 0; j < 4; ++j) hat2.mutable_data()[j] += 10.0;  // patch (0, 0) is unmasked
    CHECK(masked_mse(x, hat2, lambda).item() == base);
    double expected = 0;
    for (std::size_t p = 0; p < 6; ++p) {
      if (lambda[p] == 0) continue;
      double e = 0;
      for (std::size_t j = 0; j < 4; ++j) e += std::pow(hat[p * 4 + j] - x[p * 4 + j], 2);
      expected += e / 4;
    }
    CHECK(base == doctest::Approx(expected / 3).epsilon(1e-14));
  }
  SUBCASE("gradient is exactly zero on unmasked coordinates") {
    auto hat = random_tensor({2, 3, 4}, 4).set_requires_grad();
    Tape tape;
    {
      TapeScope scope(tape);
      tape.backward(masked_mse(x, hat, lambda));
    }
    for (std::size_t p = 0; p < 6; ++p)
      for (std::size_t j = 0; j < 4; ++j) {
        if (lambda[p] == 0) {
          CHECK(hat.grad()[p * 4 + j] == 0.0);
        } else {
          CHECK(hat.grad()[p * 4 + j] == doctest::Approx(2.0 * (hat[p * 4 + j] - x[p * 4 + j]) / 12.0));
        }
      }
    CHECK(finite_diff_check([&](const Tensor& h) { return masked_mse(x, h, lambda); }, random_tensor({2, 3, 4}, 5)) <
          1e-6);
  }
  CHECK_THROWS_AS(masked_mse(x, x, Tensor(Shape{3, 2})), ShapeError);
}

TEST_CASE("label smoothing") {
  SUBCASE("eps 0.1, k 2, y 0 -> [0.95, 0.05]") {
    auto t = smoothed_targets({0}, 2, 0.1);
    CHECK(t[0] == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(t[1] == doctest::Approx(0.05).epsilon(1e-15));
  }
  SUBCASE("targets sum to one and are one-hot at eps 0") {
    for (std::size_t k = 2; k < 9; ++k) {
      auto t = smoothed_targets({0, k - 1, k / 2}, k, 0.3);
      for (std::size_t r = 0; r < 3; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < k; ++c) s += t[r * k + c];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
      }
      auto h = smoothed_targets({1}, k, 0.0);
      for (std::size_t c = 0; c < k; ++c) CHECK(h[c] == (c == 1 ? 1.0 : 0.0));
    }
  }
  SUBCASE("uniform logits with k 4 give ln 4") {
    CHECK(label_smoothed_ce(Tensor(Shape{4}, 0.3), {2}, 0.0).item() == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    CHECK(label_smoothed_ce(Tensor(Shape{4}, -1.0), {0}, 0.2).item() == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  }
  SUBCASE("eps 0.1, k 3, logits [2, 0, 0], y 0 by direct evaluation") {
    const double z = std::exp(2.0) + 2.0;
    const double lp0 = 2.0 - std::log(z), lp1 = -std::log(z);
    const double t0 = 0.9 + 0.1 / 3, t1 = 0.1 / 3;
    const double expected = -(t0 * lp0 + 2 * t1 * lp1);
    CHECK(label_smoothed_ce(Tensor::from({2, 0, 0}), {0}, 0.1).item() == doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("minimized where softmax equals the smoothed targets") {
    for (std::size_t k : {2u, 3u, 5u}) {
      auto t = smoothed_targets({1}, k, 0.1);
      std::vector<double> opt(k);
      for (std::size_t c = 0; c < k; ++c) opt[c] = std::log(t[c]);
      auto logits = Tensor(Shape{k}, opt).set_requires_grad();
      Tape tape;
      {
        TapeScope scope(tape);
        tape.backward(label_smoothed_ce(logits, {1}, 0.1));
      }
      double norm = 0;
      for (double g : logits.grad()) norm += g * g;
      CHECK(std::sqrt(norm) < 1e-6);
    }
  }
  SUBCASE("bounded below by the target entropy") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto t = smoothed_targets({seed % 4}, 4, 0.2);
      double entropy = 0;
      for (double v : t.data()) entropy -= v * std::log(v);
      CHECK(label_smoothed_ce(random_tensor({4}, seed, 3.0), {seed % 4}, 0.2).item() >= entropy - 1e-12);
    }
  }
  SUBCASE("batched mean and gradient") {
    auto logits = random_tensor({3, 4}, 7);
    const double batch = label_smoothed_ce(logits, {0, 3, 1}, 0.1).item();
    double sum = 0;
    for (std::size_t r = 0; r < 3; ++r) {
      Tensor row(Shape{4}, std::vector<double>(logits.data().begin() + r * 4, logits.data().begin() + r * 4 + 4));
      sum += label_smoothed_ce(row, {std::vector<std::size_t>{0, 3, 1}[r]}, 0.1).item();
    }
    CHECK(batch == doctest::Approx(sum / 3).epsilon(1e-14));
    CHECK(finite_diff_check([](const Tensor& l) { return label_smoothed_ce(l, {0, 3, 1}, 0.1); }, logits) < 1e-6);
  }
  CHECK_THROWS_AS(label_smoothed_ce(Tensor(Shape{3}), {3}, 0.1), InputError);
  CHECK_THROWS_AS(smoothed_targets({0}, 2, 1.0), ContractError);
}

TEST_CASE("one small optimizer step decreases the loss on a fixed batch") {
  auto cfg = tiny();
  auto ds = separable_toy(8, 1);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto model = FaimModel::create(cfg.model, 1, 16, 2, seed);
    auto params = model.parameters();
    for (auto& p : params) p.set_requires_grad();
    auto xb = ds.batch({0, 1, 2, 3, 4, 5, 6, 7});
    AdamWState opt;
    opt.lr = 1e-4;
    double before = 0;
    {
      Tape tape;
      TapeScope scope(tape);
      auto loss = label_smoothed_ce(faim_forward(model, xb).logits, ds.y, 0.1);
      before = loss.item();
      tape.backward(loss);
    }
    adamw_step(params, opt);
    const double after = label_smoothed_ce(faim_forward(model, xb).logits, ds.y, 0.1).item();
    CHECK(after < before);
  }
}

TEST_CASE("pretrain") {
  auto cfg = tiny();
  auto ds = separable_toy(4, 2);
  SUBCASE("one epoch on a 4-sample toy has a finite loss") {
    cfg.train.pretrain_epochs = 1;
    auto r = pretrain(ds, cfg);
    REQUIRE(r.report.rows.size() == 1);
    CHECK(std::isfinite(r.report.rows[0].loss));
    CHECK(r.report.rows[0].loss > 0.0);
    CHECK(r.report.rows[0].split == "pretrain");
  }
  SUBCASE("mask ratio 0 gives an all-zero loss stream") {
    cfg.train.pretrain_epochs = 3;
    cfg.train.mask_ratio = 0.0;
    auto r = pretrain(ds, cfg);
    CHECK(r.report.rows.size() == 3);
    for (const auto& row : r.report.rows) CHECK(row.loss == 0.0);
  }
  SUBCASE("same seed twice gives identical loss streams and weights") {
    cfg.train.pretrain_epochs = 3;
    auto a = pretrain(ds, cfg);
    auto b = pretrain(ds, cfg);
    CHECK(without_seconds(a.report.csv()) == without_seconds(b.report.csv()));
    auto pa = a.model.parameters(), pb = b.model.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(max_abs_diff(pa[i].data(), pb[i].data()) == 0.0);
  }
  SUBCASE("reconstruction loss falls") {
    cfg.train.pretrain_epochs = 30;
    cfg.train.lr = 3e-3;
    auto r = pretrain(separable_toy(16, 3), cfg);
    CHECK(r.report.rows.back().loss < 0.5 * r.report.rows.front().loss);
  }
  CHECK_THROWS_AS(pretrain(ds.subset({}), cfg), InputError);
}

TEST_CASE("finetune") {
  auto cfg = tiny();
  SUBCASE("learning rate 0 leaves the parameters and accuracy unchanged") {
    cfg.train.lr = 0.0;
    cfg.train.finetune_epochs = 2;
    auto ds = separable_toy(10, 4);
    auto init = FaimModel::create(cfg.model, 1, 16, 2, 5);
    auto r = finetune(ds, cfg, &init);
    auto pa = init.parameters(), pb = r.model.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(max_abs_diff(pa[i].data(), pb[i].data()) == 0.0);
    CHECK(evaluate(init, ds, 8, 0.1).accuracy == evaluate(r.model, ds, 8, 0.1).accuracy);
  }
  SUBCASE("separable constant-vs-ramp toy reaches 100% train accuracy within 50 epochs") {
    cfg.train.finetune_epochs = 50;
    cfg.train.val_fraction = 0.0;
    auto ds = separable_toy(20, 6);
    auto r = finetune(ds, cfg);
    bool reached = false;
    for (const auto& row : r.report.rows) reached = reached || (row.split == "val" && row.accuracy == 1.0);
    CHECK(reached);
    CHECK(evaluate(r.model, ds, 8, 0.1).accuracy == 1.0);
  }
  SUBCASE("fixed seed reproduces metrics and weights") {
    cfg.train.finetune_epochs = 3;
    auto ds = separable_toy(12, 7);
    auto a = finetune(ds, cfg), b = finetune(ds, cfg);
    CHECK(without_seconds(a.report.csv()) == without_seconds(b.report.csv()));
    CHECK(a.report.summary_text() == b.report.summary_text());
  }
  SUBCASE("report layout") {
    cfg.train.finetune_epochs = 2;
    auto r = finetune(separable_toy(10, 8), cfg);
    CHECK(r.report.rows.size() == 4);
    CHECK(r.report.csv().starts_with("epoch,split,loss,accuracy,macro_f1,seconds\n1,train,"));
    CHECK(r.report.summary_text().find("best_epoch=") != std::string::npos);
  }
  SUBCASE("a class absent from training is a warning") {
    cfg.train.finetune_epochs = 1;
    cfg.train.val_fraction = 0.0;
    auto ds = separable_toy(6, 9);
    ds.label_names.push_back("unused");
    Warnings w;
    finetune(ds, cfg, nullptr, &w);
    CHECK(w.size() == 1);
  }
  SUBCASE("initial model must match the channel count") {
    auto init = FaimModel::create(cfg.model, 2, 16, 2, 1);
    CHECK_THROWS_AS(finetune(separable_toy(6, 1), cfg, &init), InputError);
  }
}
