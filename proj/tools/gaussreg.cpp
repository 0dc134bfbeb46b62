// Copyright 2026 The gaussreg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// gaussreg command-line tool.
//
// Exit codes: 0 success, 2 input or data error, 3 numerical failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gaussreg/gaussreg.hpp"

namespace {

using gaussreg::Dataset;
using gaussreg::Model;
using gaussreg::NetworkSpec;
using gaussreg::Standardizer;
using gaussreg::TrainConfig;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;
constexpr int kReportVersion = 1;

struct NetFlags {
  std::vector<std::size_t> hidden{50};
  std::string activation = "tanh";
  std::vector<std::size_t> head{50};
  std::string head_activation = "tanh";
  double sigma_floor = 1e-6;

  void add(CLI::App* app) {
    app->add_option("--hidden", hidden, "Feature-extractor layer widths")->delimiter(',');
    app->add_option("--activation", activation, "Feature-extractor activation")->check(CLI::IsMember({"tanh", "relu"}));
    app->add_option("--head", head, "Regressor-head hidden widths")->delimiter(',');
    app->add_option("--head-activation", head_activation, "Regressor-head activation")
        ->check(CLI::IsMember({"tanh", "relu"}));
    app->add_option("--sigma-floor", sigma_floor, "Lower bound added to predicted sigma (standardized units)");
  }

  NetworkSpec spec(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed) const {
    NetworkSpec s;
    s.input_dim = input_dim;
    s.output_dim = output_dim;
    s.hidden_layers.clear();
    for (auto w : hidden) {
      if (w == 0) continue;
      s.hidden_layers.push_back({w, gaussreg::parse_activation(activation)});
    }
    s.head_hidden.clear();
    for (auto w : head) {
      if (w != 0) s.head_hidden.push_back(w);
    }
    s.head_activation = gaussreg::parse_activation(head_activation);
    s.sigma_floor = sigma_floor;
    s.seed = seed;
    return s;
  }
};

struct TrainFlags {
  std::size_t epochs;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  double clip_norm = 10.0;
  std::size_t patience = 0;
  std::string loss = "gaussian_nll";
  bool no_shuffle = false;

  explicit TrainFlags(std::size_t default_epochs) : epochs(default_epochs) {}

  void add(CLI::App* app) {
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--batch-size", batch_size, "Mini-batch size");
    app->add_option("--clip-norm", clip_norm, "Global gradient-norm clip (0 disables)");
    app->add_option("--patience", patience, "Early-stopping patience in epochs (0 disables; needs validation data)");
    app->add_option("--loss", loss, "Training loss")->check(CLI::IsMember({"gaussian_nll", "squared_error"}));
    app->add_flag("--no-shuffle", no_shuffle, "Keep file order inside each epoch");
  }

  TrainConfig config(std::uint64_t seed) const {
    TrainConfig c;
    c.epochs = epochs;
    c.learning_rate = lr;
    c.batch_size = batch_size;
    c.clip_norm = clip_norm;
    if (patience > 0) c.early_stopping_patience = patience;
    c.loss = gaussreg::parse_loss(loss);
    c.shuffle = !no_shuffle;
    c.seed = seed;
    return c;
  }
};

/// Every option of a subcommand with its effective value, as strings.
json resolved_config(const CLI::App* app) {
  json cfg = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    if (opt == app->get_help_ptr()) continue;
    const std::string name = opt->get_name();
    if (name.empty()) continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      if (res.size() == 1) {
        cfg[name] = res.front();
      } else {
        cfg[name] = res;
      }
    } else {
      cfg[name] = opt->get_default_str();
    }
  }
  return cfg;
}

json report_header(const std::string& command, const CLI::App* app) {
  return {{"format", "gaussreg-report"}, {"version", kReportVersion}, {"command", command}, {"config", resolved_config(app)}};
}

void emit(const json& doc, const std::string& path) {
  const std::string text = doc.dump(2) + "\n";
  if (path.empty()) {
    std::cout << text;
  } else {
    gaussreg::write_text_file(path, text);
  }
}

template <typename F>
void write_file(const std::string& path, F&& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw gaussreg::DataError("cannot open '" + path + "' for writing");
  body(out);
  if (!out) throw gaussreg::DataError("write to '" + path + "' failed");
}

Standardizer identity_standardizer(std::size_t p, std::size_t d) {
  auto unit = [](std::size_t n) {
    return gaussreg::ColumnStats{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0), std::vector<bool>(n, false)};
  };
  return Standardizer(unit(p), unit(d));
}

Standardizer model_standardizer(const Model& m) {
  return m.standardizer ? *m.standardizer : identity_standardizer(m.network.spec().input_dim, m.network.spec().output_dim);
}

/// Loads data with the model's target columns and checks the feature layout.
Dataset load_for_model(const Model& m, const std::string& path) {
  if (m.target_names.empty()) throw gaussreg::DataError("model file does not record target column names");
  Dataset ds = gaussreg::load_csv(path, m.target_names);
  if (ds.n_features() != m.network.spec().input_dim) {
    throw gaussreg::DataError(gaussreg::detail::concat("data has ", ds.n_features(), " feature columns, model expects ",
                                                       m.network.spec().input_dim));
  }
  if (!m.feature_names.empty() && ds.feature_names != m.feature_names) {
    throw gaussreg::DataError("feature columns of '" + path + "' do not match the model's training columns");
  }
  return ds;
}

// train ----------------------------------------------------------------------

struct TrainCmd {
  std::string data, out, history;
  std::vector<std::string> targets;
  double val_fraction = 0.0;
  std::uint64_t seed = 0;
  NetFlags net;
  TrainFlags tr{40};

  void add(CLI::App* app) {
    app->add_option("--data", data, "Training CSV")->required();
    app->add_option("--targets", targets, "Target column names")->required()->delimiter(',');
    app->add_option("--out", out, "Model file to write")->required();
    app->add_option("--history", history, "Per-epoch loss CSV (default <out>.history.csv)");
    app->add_option("--val-fraction", val_fraction, "Hold out this fraction for validation loss");
    app->add_option("--seed", seed, "Seed for initialization, shuffling and splitting")->envname("GAUSSREG_SEED");
    net.add(app);
    tr.add(app);
  }

  int run(const CLI::App*) const {
    const Dataset raw = gaussreg::load_csv(data, targets);
    Dataset fit_part = raw;
    std::optional<Dataset> val_part;
    if (val_fraction > 0.0) {
      auto split = gaussreg::random_split(raw, val_fraction, seed);
      fit_part = std::move(split.train);
      val_part = std::move(split.test);
    }
    const Standardizer st = Standardizer::fit(fit_part);
    const NetworkSpec spec = net.spec(raw.n_features(), raw.n_targets(), seed);
    const TrainConfig cfg = tr.config(seed);
    std::optional<Dataset> val_std;
    if (val_part) val_std = st.apply(*val_part);
    auto result = gaussreg::train(gaussreg::Network::init(spec), st.apply(fit_part), val_std ? &*val_std : nullptr, cfg);

    const Model model{result.network, st, raw.feature_names, raw.target_names, cfg};
    gaussreg::save_model(model, out);
    write_file(history.empty() ? out + ".history.csv" : history, [&](std::ostream& os) {
      os << "epoch,train_loss" << (result.history.val_loss.empty() ? "" : ",val_loss") << '\n';
      for (std::size_t e = 0; e < result.history.epochs(); ++e) {
        os << e + 1 << ',' << gaussreg::format_double(result.history.train_loss[e]);
        if (!result.history.val_loss.empty()) os << ',' << gaussreg::format_double(result.history.val_loss[e]);
        os << '\n';
      }
    });
    std::cerr << "trained " << result.history.epochs() << " epochs on " << fit_part.size() << " rows";
    if (raw.rejected_rows) std::cerr << " (" << raw.rejected_rows << " rows with non-finite values skipped)";
    std::cerr << "; final loss " << (result.history.epochs() ? result.history.train_loss.back() : 0.0) << '\n';
    return kExitOk;
  }
};

// eval -----------------------------------------------------------------------

struct EvalCmd {
  std::string model, data, out;

  void add(CLI::App* app) {
    app->add_option("--model", model, "Model file")->required();
    app->add_option("--data", data, "Evaluation CSV (raw units)")->required();
    app->add_option("--out", out, "Report file (default stdout)");
  }

  int run(const CLI::App* app) const {
    const Model m = gaussreg::load_model(model);
    const Dataset ds = load_for_model(m, data);
    json doc = report_header("eval", app);
    doc["report"] = gaussreg::to_json(gaussreg::evaluate(m.network, ds, model_standardizer(m)));
    doc["rejected_rows"] = ds.rejected_rows;
    emit(doc, out);
    return kExitOk;
  }
};

// benchmark ------------------------------------------------------------------

struct BenchmarkCmd {
  std::string data, out, csv;
  std::vector<std::string> targets;
  std::size_t splits = 20;
  double test_frac = 0.1;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
  NetFlags net;
  TrainFlags tr{40};

  void add(CLI::App* app) {
    app->add_option("--data", data, "Dataset CSV")->required();
    app->add_option("--targets", targets, "Target column names")->required()->delimiter(',');
    app->add_option("--splits", splits, "Number of random train/test splits");
    app->add_option("--test-frac", test_frac, "Test fraction per split");
    app->add_option("--threads", threads, "Worker threads (results do not depend on this)");
    app->add_option("--out", out, "Report file (default stdout)");
    app->add_option("--csv", csv, "Per-split CSV summary");
    app->add_option("--seed", seed, "Base seed for network and shuffling")->envname("GAUSSREG_SEED");
    net.add(app);
    tr.add(app);
  }

  int run(const CLI::App* app) const {
    const Dataset raw = gaussreg::load_csv(data, targets);
    gaussreg::BenchmarkOptions opt;
    opt.n_splits = splits;
    opt.test_fraction = test_frac;
    opt.threads = threads;
    const auto result = gaussreg::run_benchmark(raw, opt, tr.config(seed), net.spec(raw.n_features(), raw.n_targets(), seed));
    json doc = report_header("benchmark", app);
    doc["dataset"] = {{"rows", raw.size()}, {"features", raw.n_features()}, {"rejected_rows", raw.rejected_rows}};
    doc["result"] = gaussreg::to_json(result);
    emit(doc, out);
    if (!csv.empty()) write_file(csv, [&](std::ostream& os) { gaussreg::write_benchmark_csv(result, os); });
    return result.n_failed == result.splits.size() ? kExitNumeric : kExitOk;
  }
};

// anomaly --------------------------------------------------------------------

struct AnomalyCmd {
  std::string series, out, intervals, svg;
  std::size_t lookback = gaussreg::kDefaultLookback;
  double threshold = gaussreg::kDefaultAnomalyThreshold;
  bool raw_threshold = false;
  std::uint64_t seed = 0;
  NetFlags net;
  TrainFlags tr{300};

  void add(CLI::App* app) {
    app->add_option("--series", series, "Series CSV (date,value or value)")->required();
    app->add_option("--lookback", lookback, "Window length");
    app->add_option("--threshold", threshold, "Flagging threshold");
    app->add_flag("--raw-threshold", raw_threshold, "Compare raw sigma instead of normalized uncertainty");
    app->add_option("--out", out, "Report file (default stdout)");
    app->add_option("--intervals", intervals, "Flagged-interval CSV");
    app->add_option("--svg", svg, "Plot of value and uncertainty");
    app->add_option("--seed", seed, "Seed for initialization and shuffling")->envname("GAUSSREG_SEED");
    net.add(app);
    tr.add(app);
  }

  int run(const CLI::App* app) const {
    const gaussreg::Series s = gaussreg::load_series(series);
    gaussreg::AnomalyConfig cfg;
    cfg.lookback = lookback;
    cfg.flag = {threshold, !raw_threshold};
    cfg.spec = net.spec(lookback, 1, seed);
    cfg.train = tr.config(seed);
    const auto det = gaussreg::detect_anomalies(s.values, cfg);

    json doc = report_header("anomaly", app);
    doc["series_length"] = s.values.size();
    doc["report"] = gaussreg::to_json(det.report);
    json labels = json::array();
    for (auto t : det.report.flagged) labels.push_back(s.labels[t]);
    doc["flagged_labels"] = labels;
    emit(doc, out);
    if (!intervals.empty()) write_file(intervals, [&](std::ostream& os) { gaussreg::write_intervals_csv(det.report, os); });
    if (!svg.empty()) gaussreg::write_text_file(svg, gaussreg::svg::anomaly_plot(s.values, det.report));
    if (det.report.warning) std::cerr << "warning: " << *det.report.warning << '\n';
    return kExitOk;
  }
};

// clean ----------------------------------------------------------------------

struct CleanCmd {
  std::string model, data, val, out, cleaned;
  double fraction = gaussreg::kDefaultCleaningFraction;

  void add(CLI::App* app) {
    app->add_option("--model", model, "Model trained on --data")->required();
    app->add_option("--data", data, "Training CSV to clean")->required();
    app->add_option("--fraction", fraction, "Fraction of most-uncertain rows to remove");
    app->add_option("--val", val, "Validation CSV; enables retraining and before/after evaluation");
    app->add_option("--out", out, "Report file (default stdout)");
    app->add_option("--cleaned", cleaned, "Cleaned CSV (default <data>.cleaned.csv)");
  }

  int run(const CLI::App* app) const {
    const Model m = gaussreg::load_model(model);
    const Dataset raw = load_for_model(m, data);
    const Standardizer st = model_standardizer(m);
    const auto result = gaussreg::clean_dataset(m.network, st.apply(raw), fraction);
    const Dataset kept = result.removed.empty() ? raw : raw.without_rows(result.removed);
    gaussreg::write_csv(kept, cleaned.empty() ? data + ".cleaned.csv" : cleaned);

    json doc = report_header("clean", app);
    doc["removed"] = result.removed;
    doc["n_removed"] = result.removed.size();
    doc["fraction_removed"] = static_cast<double>(result.removed.size()) / static_cast<double>(raw.size());
    if (!val.empty()) {
      const Dataset v = load_for_model(m, val);
      const Standardizer st_after = Standardizer::fit(kept);
      const TrainConfig cfg = m.train_config.value_or(TrainConfig{});
      auto retrained = gaussreg::train(gaussreg::Network::init(m.network.spec()), st_after.apply(kept), nullptr, cfg);
      doc["before"] = gaussreg::to_json(gaussreg::evaluate(m.network, v, st));
      doc["after"] = gaussreg::to_json(gaussreg::evaluate(retrained.network, v, st_after));
    }
    emit(doc, out);
    return kExitOk;
  }
};

// plot-band ------------------------------------------------------------------

struct PlotBandCmd {
  std::string model, data, out;
  double k = 3.0;
  std::size_t grid = 200;

  void add(CLI::App* app) {
    app->add_option("--model", model, "Model with a single input feature")->required();
    app->add_option("--data", data, "CSV with the input and target columns")->required();
    app->add_option("--k", k, "Band half-width in standard deviations");
    app->add_option("--out", out, "SVG file to write")->required();
    app->add_option("--grid", grid, "Number of grid points for the curves");
  }

  int run(const CLI::App*) const {
    const Model m = gaussreg::load_model(model);
    if (m.network.spec().input_dim != 1) {
      throw gaussreg::DataError(gaussreg::detail::concat("plot-band needs a model with one input feature, got ",
                                                         m.network.spec().input_dim));
    }
    if (m.network.spec().output_dim != 1) throw gaussreg::DataError("plot-band needs a model with one target");
    if (grid < 2) throw gaussreg::DataError("plot-band: --grid must be at least 2");
    const Dataset ds = load_for_model(m, data);
    const Standardizer st = model_standardizer(m);
    const auto xs = ds.features.values();
    const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
    std::vector<double> gx(grid);
    for (std::size_t i = 0; i < grid; ++i) gx[i] = *lo + (*hi - *lo) * static_cast<double>(i) / static_cast<double>(grid - 1);
    const auto pred = st.invert(m.network.predict(st.apply_features(gaussreg::Tensor::matrix(grid, 1, gx))));
    gaussreg::write_text_file(out, gaussreg::svg::band_plot(gx, pred, k, xs, ds.targets.values()));
    return kExitOk;
  }
};

// synth ----------------------------------------------------------------------

struct SynthCmd {
  std::string kind, out, sidecar;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  double fraction = 0.1;
  double mu = 0.0;
  double sigma = 1.0;

  void add(CLI::App* app) {
    app->add_option("--kind", kind, "Generator")->required()->check(CLI::IsMember({"hetero", "constant", "corrupted", "series"}));
    app->add_option("--n", n, "Rows (series length for --kind series)");
    app->add_option("--seed", seed, "Generator seed")->envname("GAUSSREG_SEED");
    app->add_option("--out", out, "CSV to write")->required();
    app->add_option("--sidecar", sidecar, "Mask / anomaly index file (default <out>.mask.csv or <out>.anomalies.csv)");
    app->add_option("--fraction", fraction, "Corrupted fraction (corrupted)");
    app->add_option("--mu", mu, "Mean (constant)");
    app->add_option("--sigma", sigma, "Standard deviation (constant)");
  }

  int run(const CLI::App*) const {
    if (kind == "hetero") {
      gaussreg::write_csv(gaussreg::gen_heteroscedastic(n, seed), out);
    } else if (kind == "constant") {
      gaussreg::write_csv(gaussreg::gen_constant_gaussian(n, mu, sigma, seed), out);
    } else if (kind == "corrupted") {
      const auto c = gaussreg::gen_corrupted(gaussreg::gen_heteroscedastic(n, seed), fraction, seed);
      gaussreg::write_csv(c.data, out);
      write_file(sidecar.empty() ? out + ".mask.csv" : sidecar, [&](std::ostream& os) {
        os << "row\n";
        for (auto r : c.corrupted_rows()) os << r << '\n';
      });
    } else {
      const auto s = gaussreg::gen_series_with_anomalies(n, seed);
      write_file(out, [&](std::ostream& os) {
        os << "date,value\n";
        for (std::size_t t = 0; t < s.values.size(); ++t) os << t << ',' << gaussreg::format_double(s.values[t]) << '\n';
      });
      write_file(sidecar.empty() ? out + ".anomalies.csv" : sidecar, [&](std::ostream& os) {
        os << "index,shift\n";
        for (std::size_t i = 0; i < s.anomalies.size(); ++i) {
          os << s.anomalies[i] << ',' << gaussreg::format_double(s.shifts[i]) << '\n';
        }
      });
    }
    return kExitOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gaussreg: neural regression with a Gaussian output (mean and standard deviation)"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "Read options from a TOML or INI file; command-line flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();

  TrainCmd train_cmd;
  EvalCmd eval_cmd;
  BenchmarkCmd bench_cmd;
  AnomalyCmd anomaly_cmd;
  CleanCmd clean_cmd;
  PlotBandCmd band_cmd;
  SynthCmd synth_cmd;

  auto* train_app = app.add_subcommand("train", "Train a model on a CSV file");
  auto* eval_app = app.add_subcommand("eval", "Evaluate a model on a CSV file");
  auto* bench_app = app.add_subcommand("benchmark", "Repeated random-split benchmark");
  auto* anomaly_app = app.add_subcommand("anomaly", "Flag anomalous points of a series by predicted uncertainty");
  auto* clean_app = app.add_subcommand("clean", "Remove the most uncertain training rows");
  auto* band_app = app.add_subcommand("plot-band", "SVG of the mean with a +/- k sigma band");
  auto* synth_app = app.add_subcommand("synth", "Write a synthetic dataset");
  train_cmd.add(train_app);
  eval_cmd.add(eval_app);
  bench_cmd.add(bench_app);
  anomaly_cmd.add(anomaly_app);
  clean_cmd.add(clean_app);
  band_cmd.add(band_app);
  synth_cmd.add(synth_app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    if (train_app->parsed()) return train_cmd.run(train_app);
    if (eval_app->parsed()) return eval_cmd.run(eval_app);
    if (bench_app->parsed()) return bench_cmd.run(bench_app);
    if (anomaly_app->parsed()) return anomaly_cmd.run(anomaly_app);
    if (clean_app->parsed()) return clean_cmd.run(clean_app);
    if (band_app->parsed()) return band_cmd.run(band_app);
    if (synth_app->parsed()) return synth_cmd.run(synth_app);
  } catch (const gaussreg::TrainingAborted& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const gaussreg::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
