#include "faim/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "faim/errors.hpp"
#include "faim/experiment.hpp"

namespace faim {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
}

// Exclusive claim on an output directory for the lifetime of one command.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / "lock") {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw InputError("output directory " + dir.string() + " is in use (remove " + path_.string() + " if stale)");
    std::fclose(f);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

std::string timestamp_name() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", std::localtime(&now));
  return buf;
}

// `--key value` and `--key=value` pairs left over after the named options.
void apply_overrides(FaimConfig& config, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (!tok.starts_with("--")) throw ConfigError("unexpected argument '" + tok + "'");
    std::string key = tok.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("flag --" + key + " needs a value");
      value = extras[++i];
    }
    config.set(key, value);
  }
}

struct Context {
  FaimConfig config;
  fs::path dir;
  std::ostream& out;
  std::ostream& err;
  Warnings warnings;

  void flush_warnings() {
    for (const auto& w : warnings) err << "warning: " << w << "\n";
    warnings.clear();
  }
};

std::string eval_row(std::size_t epoch, const std::string& split, const Evaluation& ev) {
  return std::to_string(epoch) + "," + split + "," + format_double(ev.loss) + "," + format_double(ev.accuracy) + "," +
         format_double(ev.macro_f1) + ",0\n";
}

void write_pipeline(Context& ctx, const fs::path& dir, const PipelineResult& r) {
  std::string csv = r.finetune_report.csv();
  std::string summary;
  if (r.pretrain_report) {
    // Pretraining rows come first; the header appears once.
    std::string pre = r.pretrain_report->csv();
    csv = pre + csv.substr(csv.find('\n') + 1);
    for (const auto& [k, v] : r.pretrain_report->summary) summary += "pretrain." + k + "=" + v + "\n";
  }
  for (const auto& [k, v] : r.finetune_report.summary) summary += "finetune." + k + "=" + v + "\n";
  if (r.test) {
    csv += eval_row(0, "test", *r.test);
    summary += "test_accuracy=" + format_double(r.test->accuracy) + "\n";
    summary += "test_macro_f1=" + format_double(r.test->macro_f1) + "\n";
    ctx.out << "test accuracy " << format_double(r.test->accuracy) << "  macro-F1 " << format_double(r.test->macro_f1)
            << "\n";
  }
  write_file(dir / "report.csv", csv);
  write_file(dir / "summary", summary);
  save_checkpoint(r.model, (dir / "checkpoint").string());
}

void cmd_synth(Context& ctx) {
  auto [train, test] = synthetic_splits(ctx.config.synth);
  save_univariate(train, (ctx.dir / "train.tsv").string());
  save_univariate(test, (ctx.dir / "test.tsv").string());
  write_file(ctx.dir / "summary", "n_train=" + std::to_string(train.size()) + "\nn_test=" + std::to_string(test.size()) +
                                      "\nlength=" + std::to_string(train.length()) + "\n");
  ctx.out << "wrote " << (ctx.dir / "train.tsv").string() << " and " << (ctx.dir / "test.tsv").string() << "\n";
}

void cmd_pretrain(Context& ctx) {
  const Splits s = load_splits(ctx.config, &ctx.warnings);
  ctx.flush_warnings();
  std::optional<FaimModel> init;
  if (!ctx.config.train.init_checkpoint.empty()) init = load_checkpoint(ctx.config.train.init_checkpoint);
  TrainResult r = pretrain(s.train, ctx.config, init ? &*init : nullptr);
  write_file(ctx.dir / "report.csv", r.report.csv());
  write_file(ctx.dir / "summary", r.report.summary_text());
  save_checkpoint(r.model, (ctx.dir / "checkpoint").string());
  ctx.out << "pretrained " << ctx.config.train.pretrain_epochs << " epochs; checkpoint in " << ctx.dir.string() << "\n";
}

void cmd_finetune(Context& ctx) {
  const Splits s = load_splits(ctx.config, &ctx.warnings);
  FaimConfig cfg = ctx.config;
  cfg.train.pretrain = false;  // pretraining is a separate command; use train.init_checkpoint
  PipelineResult r = run_pipeline(s.train, s.test ? &*s.test : nullptr, cfg, &ctx.warnings);
  ctx.flush_warnings();
  write_pipeline(ctx, ctx.dir, r);
}

SeriesDataset eval_data(Context& ctx, const FaimModel& model) {
  const auto& d = ctx.config.data;
  SeriesDataset test;
  if (d.test.empty()) {
    test = synthetic_splits(ctx.config.synth).second;
  } else {
    test = load_dataset(d.test, d.format, &ctx.warnings);
  }
  if (!model.meta.labels.empty()) align_labels(test, model.meta.labels, &ctx.warnings);
  if (!model.meta.channel_mean.empty()) test = znormalize(test, model.meta.channel_mean, model.meta.channel_std);
  ctx.flush_warnings();
  return test;
}

FaimModel checkpoint_model(Context& ctx) {
  if (ctx.config.run.checkpoint.empty()) throw InputError("this command needs --checkpoint (run.checkpoint)");
  if (!fs::exists(ctx.config.run.checkpoint)) throw InputError("checkpoint not found: " + ctx.config.run.checkpoint);
  return load_checkpoint(ctx.config.run.checkpoint);
}

void cmd_eval(Context& ctx) {
  const FaimModel model = checkpoint_model(ctx);
  const SeriesDataset test = eval_data(ctx, model);
  const Evaluation ev = evaluate(model, test, ctx.config.train.batch_size, ctx.config.train.label_smooth_eps);
  write_file(ctx.dir / "report.csv", "epoch,split,loss,accuracy,macro_f1,seconds\n" + eval_row(0, "test", ev));
  write_file(ctx.dir / "summary", "test_accuracy=" + format_double(ev.accuracy) + "\ntest_macro_f1=" +
                                      format_double(ev.macro_f1) + "\nn_test=" + std::to_string(test.size()) + "\n");
  ctx.out << "test accuracy " << format_double(ev.accuracy) << "  macro-F1 " << format_double(ev.macro_f1) << "\n";
}

void cmd_noise_bench(Context& ctx) {
  std::optional<FaimModel> model;
  SeriesDataset test;
  if (!ctx.config.run.checkpoint.empty()) {
    model = checkpoint_model(ctx);
    test = eval_data(ctx, *model);
  } else {
    const Splits s = load_splits(ctx.config, &ctx.warnings);
    if (!s.test) throw InputError("noise-bench needs test data (data.test)");
    PipelineResult r = run_pipeline(s.train, nullptr, ctx.config, &ctx.warnings);
    ctx.flush_warnings();
    write_pipeline(ctx, ctx.dir, r);
    model = std::move(r.model);
    test = *s.test;
  }
  std::string csv = "sigma,accuracy,macro_f1\n";
  for (double sigma : ctx.config.noise.sigmas) {
    const SeriesDataset noisy = add_gaussian_noise(test, sigma, ctx.config.noise.seed);
    const Evaluation ev = evaluate(*model, noisy, ctx.config.train.batch_size, ctx.config.train.label_smooth_eps);
    csv += format_double(sigma) + "," + format_double(ev.accuracy) + "," + format_double(ev.macro_f1) + "\n";
    ctx.out << "sigma " << format_double(sigma) << "  accuracy " << format_double(ev.accuracy) << "\n";
  }
  write_file(ctx.dir / "noise.csv", csv);
}

void cmd_ablate(Context& ctx) {
  const Splits s = load_splits(ctx.config, &ctx.warnings);
  ctx.flush_warnings();
  if (!s.test) throw InputError("ablate needs test data (data.test)");
  std::vector<std::string> variants;
  std::stringstream ss(ctx.config.run.variants);
  for (std::string v; std::getline(ss, v, ',');) {
    if (v.empty()) continue;
    variant_label(v);
    variants.push_back(v);
  }
  if (variants.empty()) throw ConfigError("run.variants is empty");
  std::string table = "variant,label,accuracy,macro_f1\n";
  for (const auto& v : variants) {
    const FaimConfig cfg = apply_variant(ctx.config, v);
    ctx.out << "[" << variant_label(v) << "]\n";
    PipelineResult r = run_pipeline(s.train, &*s.test, cfg, &ctx.warnings);
    ctx.flush_warnings();
    fs::create_directories(ctx.dir / v);
    write_file(ctx.dir / v / "config.echo", cfg.echo());
    write_pipeline(ctx, ctx.dir / v, r);
    table += v + "," + variant_label(v) + "," + format_double(r.test->accuracy) + "," + format_double(r.test->macro_f1) + "\n";
  }
  write_file(ctx.dir / "ablation.csv", table);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"FAIM time-series classifier"};
  app.require_subcommand(1);
  std::string config_file, variant, sigmas, name, dir, checkpoint;
  const std::pair<const char*, const char*> commands[] = {
      {"synth", "write the synthetic frequency corpus"},
      {"pretrain", "masked-reconstruction pretraining"},
      {"finetune", "supervised fine-tuning (optionally from train.init_checkpoint)"},
      {"eval", "evaluate a checkpoint on data.test"},
      {"noise-bench", "accuracy under added Gaussian noise for each noise.sigmas"},
      {"ablate", "pretrain/finetune/evaluate each variant in run.variants"},
  };
  for (const auto& [cmd, help] : commands) {
    auto* sub = app.add_subcommand(cmd, help);
    sub->allow_extras();
    sub->add_option("--config", config_file, "key=value config file applied before flag overrides");
    sub->add_option("--name", name, "run name (run.name)");
    sub->add_option("--out", dir, "output root (run.dir)");
    sub->add_option("--checkpoint", checkpoint, "checkpoint to evaluate (run.checkpoint)");
    sub->add_option("--variant", variant, "comma-separated variants (run.variants)");
    sub->add_option("--sigmas", sigmas, "comma-separated noise levels (noise.sigmas)");
    sub->footer("Any config key can be set with --key value, e.g. --model.embed_dim 32 --afb.tau 0.05");
  }

  std::vector<std::string> argv{"faim"};
  argv.insert(argv.end(), args.begin(), args.end());
  std::vector<const char*> cargv;
  for (const auto& a : argv) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    FaimConfig config;
    if (!config_file.empty()) config.apply_file(config_file);
    apply_overrides(config, sub->remaining());
    if (!name.empty()) config.run.name = name;
    if (!dir.empty()) config.run.dir = dir;
    if (!checkpoint.empty()) config.run.checkpoint = checkpoint;
    if (!variant.empty()) config.run.variants = variant;
    if (!sigmas.empty()) config.set("noise.sigmas", sigmas);
    config.validate();
    if (config.run.name.empty()) config.run.name = timestamp_name();

    const fs::path run_dir = fs::path(config.run.dir) / config.run.name;
    fs::create_directories(run_dir);
    DirLock lock(run_dir);
    write_file(run_dir / "config.echo", config.echo());
    Context ctx{config, run_dir, out, err, {}};
    const std::string cmd = sub->get_name();
    if (cmd == "synth") cmd_synth(ctx);
    if (cmd == "pretrain") cmd_pretrain(ctx);
    if (cmd == "finetune") cmd_finetune(ctx);
    if (cmd == "eval") cmd_eval(ctx);
    if (cmd == "noise-bench") cmd_noise_bench(ctx);
    if (cmd == "ablate") cmd_ablate(ctx);
    out << "outputs in " << run_dir.string() << "\n";
    return 0;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace faim
