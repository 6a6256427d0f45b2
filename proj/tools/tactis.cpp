// tactis: command-line front end (generate, train, sample, evaluate, backtest, diagnose, interp).

#include <CLI11.hpp>
#include <malloc.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tactis/autodiff/tensor.hpp"
#include "tactis/backtest/backtest.hpp"
#include "tactis/config.hpp"
#include "tactis/data/csv_io.hpp"
#include "tactis/data/synthetic.hpp"
#include "tactis/error.hpp"
#include "tactis/interp/interp.hpp"
#include "tactis/metrics/scores.hpp"
#include "tactis/training/train.hpp"

namespace fs = std::filesystem;
using namespace tactis;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
  cmd->add_option("--config", c.config_path, "config file of key = value lines");
  cmd->add_option("--set", c.overrides, "override one config key, key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "seed for every random stream (overrides train.seed)");
  cmd->add_option("--out", c.out, out_help)->required();
}

Config build_config(const Common& c) {
  Config cfg = c.config_path.empty() ? Config{} : load_config(c.config_path);
  for (const auto& o : c.overrides) cfg.apply_override(o);
  if (c.seed) cfg.train.seed = *c.seed;
  cfg.validate();
  return cfg;
}

std::uint64_t seed_of(const Common& c, const Config& cfg) { return c.seed ? *c.seed : cfg.train.seed; }

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw DataError(std::string(what) + " file not found: " + path);
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::ofstream open_out(const fs::path& p) {
  ensure_parent(p);
  std::ofstream out(p);
  if (!out) throw DataError(p.string() + ": cannot open for writing");
  return out;
}

std::string quote(std::string s) {
  for (auto& ch : s)
    if (ch == '"') ch = '\'';
    else if (ch == '\n') ch = ' ';
  return "\"" + s + "\"";
}

int fail(int code, const char* kind, const std::string& message) {
  std::cerr << "error: code=" << code << " kind=" << kind << " message=" << quote(message) << std::endl;
  return code;
}

std::string help_footer() {
  std::ostringstream s;
  s << "\nConfig keys (file lines `key = value`, or --set key=value):\n";
  for (const auto& k : config_keys()) s << "  " << k.name << "  " << k.description << "\n";
  s << "\nExit codes: 0 ok, 1 internal error, 2 config or usage error, 3 data error"
       " (missing file, malformed CSV, shape mismatch), 4 numerical failure.\n"
       "Errors print one line: error: code=<n> kind=<kind> message=\"...\"\n";
  return s.str();
}

// Window to predict: the batch as given when it has missing tokens, otherwise the
// window at --start (default: the last one) with the configured mask.
data::TimeSeriesBatch pick_window(const data::TimeSeriesBatch& d, const Config& cfg, std::optional<std::size_t> start) {
  if (!start && d.num_missing() > 0) return d;
  const auto spec = training::window_spec(cfg);
  if (d.length < spec.window_length())
    throw DataError("dataset has " + std::to_string(d.length) + " steps, a window needs " +
                    std::to_string(spec.window_length()));
  const std::size_t s = start ? *start : d.length - spec.window_length();
  if (s + spec.window_length() > d.length)
    throw DataError("--start " + std::to_string(s) + " puts the window past the end of the data");
  return data::extract_window(d, s, spec);
}

std::string fmt(double x) { return data::format_double(x); }

}  // namespace

int main(int argc, char** argv) {
  // large tensors churn through malloc; keep them on the heap instead of mmap/munmap
  mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TOP_PAD, 64 * 1024 * 1024);
  CLI::App app{"Transformer-attentional-copula forecaster: train, sample and score joint forecasts."};
  app.require_subcommand(1);
  app.footer(help_footer());

  // generate
  Common gen;
  std::string process = "stochvol";
  std::size_t gen_length = 2000, gen_series = 2;
  double correlation = 0.8;
  data::StochasticVolatilityParams sv;
  auto* generate = app.add_subcommand("generate", "write a synthetic dataset CSV");
  add_common(generate, gen, "dataset CSV to write");
  generate->add_option("--process", process, "stochvol | correlated")
      ->check(CLI::IsMember({"stochvol", "correlated"}));
  generate->add_option("--length", gen_length, "number of time steps");
  generate->add_option("--series", gen_series, "number of series (correlated)");
  generate->add_option("--correlation", correlation, "pairwise correlation (correlated)");
  generate->add_option("--mu", sv.mu, "log-variance level (stochvol)");
  generate->add_option("--phi", sv.phi, "log-variance persistence (stochvol)");
  generate->add_option("--sigma", sv.sigma, "log-variance noise (stochvol)");

  // train
  Common tr;
  std::string train_data, history_path;
  auto* train = app.add_subcommand("train", "fit a model; writes a checkpoint");
  add_common(train, tr, "checkpoint file to write");
  train->add_option("--data", train_data, "training dataset CSV")->required();
  train->add_option("--history", history_path, "optional CSV of per-epoch losses");

  // sample
  Common sa;
  std::string sample_ckpt, sample_data;
  std::size_t num_samples = 100;
  std::optional<std::size_t> sample_start;
  auto* sample = app.add_subcommand("sample", "draw joint forecasts; writes a samples CSV");
  add_common(sample, sa, "samples CSV to write");
  sample->add_option("--checkpoint", sample_ckpt, "checkpoint file")->required();
  sample->add_option("--data", sample_data,
                     "dataset CSV; its missing tokens are predicted, or, if it has none, the "
                     "masked part of the window at --start")
      ->required();
  sample->add_option("--samples", num_samples, "number of joint samples");
  sample->add_option("--start", sample_start, "window start index (default: last window)");

  // evaluate
  std::string eval_samples, eval_truth, eval_out;
  auto* evaluate = app.add_subcommand("evaluate", "score samples against the truth; writes a scores CSV");
  evaluate->add_option("--samples", eval_samples, "samples CSV")->required();
  evaluate->add_option("--truth", eval_truth, "dataset CSV holding the realized values")->required();
  evaluate->add_option("--out", eval_out, "scores CSV to write")->required();

  // backtest
  Common bt;
  std::string bt_data;
  std::size_t bt_samples = 100;
  auto* backtest_cmd = app.add_subcommand("backtest", "rolling retrain and forecast; writes per-cell and aggregate CSVs");
  add_common(backtest_cmd, bt, "output directory");
  backtest_cmd->add_option("--data", bt_data, "dataset CSV")->required();
  backtest_cmd->add_option("--samples", bt_samples, "samples per forecast");

  // diagnose
  Common dg;
  std::string dg_ckpt, dg_data;
  std::size_t dg_samples = 1000;
  std::optional<std::size_t> dg_start;
  auto* diagnose = app.add_subcommand("diagnose", "copula uniformity report (per-token Wasserstein distance to U[0,1])");
  add_common(diagnose, dg, "report CSV to write");
  diagnose->add_option("--checkpoint", dg_ckpt, "checkpoint file")->required();
  diagnose->add_option("--data", dg_data, "dataset CSV, window chosen as in `sample`")->required();
  diagnose->add_option("--samples", dg_samples, "copula samples per token");
  diagnose->add_option("--start", dg_start, "window start index (default: last window)");

  // interp
  Common ip;
  std::size_t ip_length = 2000, ip_tasks = 100, ip_samples = 100;
  std::string ip_ckpt, ip_task_file;
  auto* interp_cmd = app.add_subcommand(
      "interp", "gap interpolation benchmark on stochastic-volatility data against linear interpolation");
  add_common(interp_cmd, ip, "output directory");
  interp_cmd->add_option("--length", ip_length, "training series length");
  interp_cmd->add_option("--tasks", ip_tasks, "number of gap tasks");
  interp_cmd->add_option("--samples", ip_samples, "samples per task");
  interp_cmd->add_option("--checkpoint", ip_ckpt, "use this model instead of training one");
  interp_cmd->add_option("--task-file", ip_task_file, "use these tasks instead of generating them");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kExitConfig, "usage", e.what());
  }

  try {
    if (*generate) {
      const auto cfg = build_config(gen);
      Rng rng = Rng(seed_of(gen, cfg)).split("data");
      const auto d = process == "stochvol" ? data::generate_stochastic_volatility(gen_length, sv, rng)
                                           : data::generate_correlated_gaussian(gen_series, gen_length, correlation, rng);
      ensure_parent(gen.out);
      data::save_dataset(gen.out, d);
      std::cout << "wrote " << gen.out << " (" << d.num_series << " series x " << d.length << " steps)\n";
    } else if (*train) {
      const auto cfg = build_config(tr);
      require_file(train_data, "dataset");
      const auto d = data::load_dataset(train_data);
      training::TrainOptions opt;
      opt.on_epoch = [](const training::EpochReport& r) {
        std::cout << "epoch " << r.epoch << " train_nll " << fmt(r.train_loss) << " validation_nll "
                  << fmt(r.validation_loss) << (r.improved ? " *" : "") << std::endl;
      };
      const auto result = training::train(d, cfg, opt);
      ensure_parent(tr.out);
      model::save_checkpoint(tr.out, result.model, result.info);
      if (!history_path.empty()) {
        auto out = open_out(history_path);
        out << "epoch,train_nll,validation_nll\n";
        for (const auto& r : result.epochs)
          out << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.validation_loss) << '\n';
      }
      std::cout << "wrote " << tr.out << " (best epoch " << result.info.epoch << ", validation_nll "
                << fmt(result.info.validation_loss) << ")\n";
    } else if (*sample) {
      require_file(sample_ckpt, "checkpoint");
      require_file(sample_data, "dataset");
      const auto model = model::load_checkpoint(sample_ckpt);
      Config cfg = model.config();
      for (const auto& o : sa.overrides) cfg.apply_override(o);
      const auto window = pick_window(data::load_dataset(sample_data), cfg, sample_start);
      Rng rng = Rng(sa.seed ? *sa.seed : cfg.train.seed).split("sampling");
      const auto f = training::forecast(model, window, num_samples, rng);
      ensure_parent(sa.out);
      data::save_samples(sa.out, f);
      std::cout << "wrote " << sa.out << " (" << f.num_samples << " samples x " << f.num_series << " series x "
                << f.horizon << " steps)\n";
    } else if (*evaluate) {
      require_file(eval_samples, "samples");
      require_file(eval_truth, "truth");
      const auto f = data::load_samples(eval_samples);
      const auto truth = data::load_dataset(eval_truth);
      const auto rows = metrics::score_forecast(f, metrics::observations_for(f, truth));
      ensure_parent(eval_out);
      metrics::write_scores_csv(eval_out, rows);
      std::cout << metrics::format_summary(rows);
    } else if (*backtest_cmd) {
      const auto cfg = build_config(bt);
      require_file(bt_data, "dataset");
      const auto d = data::load_dataset(bt_data);
      backtest::BacktestOptions opt;
      opt.num_samples = bt_samples;
      opt.log = [](const std::string& m) { std::cout << m << std::endl; };
      const auto report = backtest::run_backtest(d, cfg, opt);
      backtest::write_report(bt.out, report);
      for (const auto& r : report.aggregate)
        std::cout << r.metric << " mean " << fmt(r.mean) << " std " << fmt(r.stddev) << " over " << r.count
                  << " cells\n";
    } else if (*diagnose) {
      require_file(dg_ckpt, "checkpoint");
      require_file(dg_data, "dataset");
      const auto model = model::load_checkpoint(dg_ckpt);
      Config cfg = model.config();
      for (const auto& o : dg.overrides) cfg.apply_override(o);
      const auto window = pick_window(data::load_dataset(dg_data), cfg, dg_start);
      Rng rng = Rng(dg.seed ? *dg.seed : cfg.train.seed).split("diagnose");
      const auto wd = training::copula_uniformity_report(model, window, dg_samples, rng);
      const auto layout = model::layout_of(window);
      auto out = open_out(dg.out);
      out << "series_id,timestamp,wasserstein\n";
      double mean = 0.0;
      for (std::size_t k = 0; k < wd.size(); ++k) {
        const std::size_t i = layout.missing[k] / window.length, j = layout.missing[k] % window.length;
        out << window.series_ids[i] << ',' << fmt(window.timestamp(i, j)) << ',' << fmt(wd[k]) << '\n';
        mean += wd[k] / static_cast<double>(wd.size());
      }
      std::cout << "mean_wasserstein " << fmt(mean) << " over " << wd.size() << " tokens\n";
    } else if (*interp_cmd) {
      Config cfg = build_config(ip);
      const std::uint64_t seed = seed_of(ip, cfg);
      const interp::GapGeometry geom;
      std::vector<interp::InterpolationTask> tasks;
      if (!ip_task_file.empty()) {
        require_file(ip_task_file, "task");
        tasks = interp::load_tasks(ip_task_file);
      } else {
        Rng rng = Rng(seed).split("heldout");
        tasks = interp::make_tasks(data::generate_stochastic_volatility(ip_tasks * geom.window_length(), {}, rng),
                                   geom, ip_tasks);
      }
      fs::create_directories(ip.out);
      interp::save_tasks(fs::path(ip.out) / "tasks.csv", tasks);
      std::optional<model::TactisModel> model;
      if (!ip_ckpt.empty()) {
        require_file(ip_ckpt, "checkpoint");
        model.emplace(model::load_checkpoint(ip_ckpt));
      } else {
        cfg.window.pattern = WindowPattern::gap;
        cfg.window.prediction_length = geom.gap;
        cfg.train.ratio = geom.before / geom.gap;
        cfg.window.ratio_after = geom.after / geom.gap;
        cfg.train.bag_size = 1;
        cfg.validate();
        Rng rng = Rng(seed).split("data");
        const auto series = data::generate_stochastic_volatility(ip_length, {}, rng);
        training::TrainOptions opt;
        opt.on_epoch = [](const training::EpochReport& r) {
          std::cout << "epoch " << r.epoch << " train_nll " << fmt(r.train_loss) << " validation_nll "
                    << fmt(r.validation_loss) << (r.improved ? " *" : "") << std::endl;
        };
        auto result = training::train(series, cfg, opt);
        model.emplace(std::move(result.model));
        model::save_checkpoint(fs::path(ip.out) / "model.ckpt", *model, result.info);
      }
      Rng rng = Rng(seed).split("sampling");
      const auto r = interp::run_benchmark(*model, tasks, ip_samples, rng);
      auto out = open_out(fs::path(ip.out) / "interp_scores.csv");
      out << "task,model_energy,dummy_energy\n";
      for (std::size_t k = 0; k < tasks.size(); ++k)
        out << k << ',' << fmt(r.model_energy[k]) << ',' << fmt(r.dummy_energy[k]) << '\n';
      auto summary = open_out(fs::path(ip.out) / "summary.csv");
      summary << "quantity,value\n"
              << "mean_model_energy," << fmt(r.mean_model) << '\n'
              << "mean_dummy_energy," << fmt(r.mean_dummy) << '\n'
              << "boundary_jump," << fmt(r.boundary_jump) << '\n'
              << "boundary_jump_shuffled," << fmt(r.boundary_jump_shuffled) << '\n';
      std::cout << "mean energy score: model " << fmt(r.mean_model) << ", linear interpolation " << fmt(r.mean_dummy)
                << " over " << tasks.size() << " tasks\n";
    }
  } catch (const ConfigError& e) {
    return fail(kExitConfig, "config", e.what());
  } catch (const ad::ShapeError& e) {
    return fail(kExitData, "shape", e.what());
  } catch (const DataError& e) {
    return fail(kExitData, "data", e.what());
  } catch (const NumericalError& e) {
    return fail(kExitNumerical, "numerical", e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(kExitData, "io", e.what());
  } catch (const std::exception& e) {
    return fail(1, "internal", e.what());
  }
  return 0;
}
