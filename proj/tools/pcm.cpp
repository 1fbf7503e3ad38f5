// pcm: command-line driver for the power-consumption-model toolkit.
//
//   pcm synth       generate a synthetic fleet (dataset and optional raw logs)
//   pcm preprocess  raw flight logs -> cleaned 1 Hz dataset
//   pcm train       fit a single regressor or the stacked model
//   pcm tune        cross-validated grid search for one variant
//   pcm predict     apply a model file to a dataset
//   pcm study       sensitivity | error-dist | flight-energy | trace | benchmark
//
// Every run writes a manifest.json next to its outputs. Exit codes: 0 success,
// 1 usage error, 2 data error, 3 numeric failure.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pcm/analysis.hpp"
#include "pcm/evaluate.hpp"
#include "pcm/ingest.hpp"
#include "pcm/model.hpp"
#include "pcm/preprocess.hpp"
#include "pcm/synth.hpp"
#include "pcm/text.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using pcm::text::format_double;

namespace {

struct Global {
  unsigned threads = 0;
  bool force = false;
};

// ---------------------------------------------------------------------------
// Run directories and manifests.

class Run {
 public:
  Run(const CLI::App& sub, std::string name, const std::string& out, bool force) : sub_(sub), name_(std::move(name)) {
    dir_ = out;
    if (fs::exists(dir_) && !force && !fs::is_empty(dir_)) {
      const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
      std::tm tm{};
      gmtime_r(&now, &tm);
      std::ostringstream stamp;
      stamp << std::put_time(&tm, "%Y%m%d-%H%M%S");
      fs::path candidate = out + "-" + stamp.str();
      for (int k = 2; fs::exists(candidate); ++k) candidate = out + "-" + stamp.str() + "-" + std::to_string(k);
      dir_ = candidate;
    }
    fs::create_directories(dir_);
  }

  fs::path path(const std::string& file) const { return dir_ / file; }

  void add_input(const std::string& p) {
    inputs_.push_back({{"path", p}, {"fnv1a64", pcm::text::hex64(pcm::text::fnv1a64(pcm::text::read_file(p)))}});
  }

  void write(const std::string& file, const std::string& content) {
    const auto p = dir_ / file;
    fs::create_directories(p.parent_path());
    pcm::text::write_file(p.string(), content);
    outputs_.push_back({{"file", file}, {"fnv1a64", pcm::text::hex64(pcm::text::fnv1a64(content))}});
  }

  void finish(std::uint64_t seed) {
    json cfg = json::object();
    collect(sub_, cfg);
    json m = {{"tool", "pcm"},
              {"version", std::string(pcm::kVersion)},
              {"subcommand", name_},
              {"seed", seed},
              {"config", cfg},
              {"inputs", inputs_},
              {"outputs", outputs_}};
    pcm::text::write_file((dir_ / "manifest.json").string(), m.dump(2) + "\n");
    std::cout << "run directory: " << dir_.string() << "\n";
  }

 private:
  static void collect(const CLI::App& app, json& cfg) {
    static const std::set<std::string> skip{"help", "out"};
    for (const CLI::Option* o : app.get_options()) {
      const std::string key = o->get_single_name();
      if (key.empty() || skip.count(key)) continue;
      if (o->count() > 0) {
        const auto& r = o->results();
        cfg[key] = r.size() == 1 ? json(r.front()) : json(r);
      } else if (const auto d = o->get_default_str(); !d.empty()) {
        cfg[key] = d;
      } else {
        cfg[key] = nullptr;
      }
    }
  }

  const CLI::App& sub_;
  std::string name_;
  fs::path dir_;
  json inputs_ = json::array();
  json outputs_ = json::array();
};

void require_file(const std::string& p) {
  if (!fs::is_regular_file(p)) throw pcm::DataError("input file not found: '" + p + "'");
}

std::string report_csv(std::span<const pcm::evaluate::EvalReport> reports) {
  std::string out = "model,dataset,split,mse,mape,r2\n";
  for (const auto& r : reports)
    out += r.model + "," + r.dataset + "," + std::string(pcm::evaluate::to_string(r.split)) + "," +
           format_double(r.mse) + "," + format_double(r.mape) + "," + format_double(r.r2) + "\n";
  return out;
}

std::vector<std::string> distinct_flights(const pcm::Dataset& d) {
  std::vector<std::string> out;
  for (const auto& [id, rows] : d.flights()) out.push_back(id);
  return out;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOpts {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t flights = 20;
  std::string aircraft = "matrice100";
  double min_duration = 200.0, max_duration = 600.0;
  std::optional<double> noise;
  double min_wind = 0.5, max_wind = 6.0;
  bool raw_logs = false;
};

int cmd_synth(const CLI::App& sub, const SynthOpts& o, const Global& g) {
  auto cfg = pcm::synth::preset(pcm::aircraft_from_string(o.aircraft));
  cfg.seed = o.seed;
  cfg.n_flights = o.flights;
  cfg.min_duration_s = o.min_duration;
  cfg.max_duration_s = o.max_duration;
  cfg.min_wind_mps = o.min_wind;
  cfg.max_wind_mps = o.max_wind;
  if (o.noise) cfg.noise_std_w = *o.noise;
  cfg.validate();
  if (o.raw_logs && cfg.aircraft != pcm::Aircraft::matrice100)
    throw pcm::ContractError("raw logs are only written for matrice100 fleets");
  const auto fleet = pcm::synth::generate_fleet(cfg, g.threads);
  const auto data = pcm::synth::to_dataset(fleet);
  Run run(sub, "synth", o.out, g.force);
  run.write("dataset.csv", pcm::preprocess::format_dataset(data));
  if (o.raw_logs)
    for (const auto& f : fleet) run.write("raw/" + f.front().flight_id + ".log", pcm::ingest::write_log(pcm::synth::to_raw_log(f)));
  run.finish(o.seed);
  std::cout << "synth: " << fleet.size() << " flights, " << data.size() << " samples\n";
  return 0;
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessOpts {
  std::string out;
  std::vector<std::string> logs;
  std::string schema;
  int median_window = 5;
  double power_floor = 20.0;
  bool wind_to = false;
};

int cmd_preprocess(const CLI::App& sub, const PreprocessOpts& o, const Global& g) {
  const auto schema = pcm::ingest::schema_from_string(o.schema);
  pcm::preprocess::FilterConfig fc;
  fc.median_window = o.median_window;
  fc.power_floor = o.power_floor;
  fc.wind_direction_is_from = !o.wind_to;
  fc.validate();
  for (const auto& p : o.logs) require_file(p);

  std::vector<pcm::preprocess::PreprocessResult> results(o.logs.size());
  pcm::parallel_for(o.logs.size(), g.threads, [&](std::size_t i) {
    results[i] = pcm::preprocess::preprocess_log(pcm::ingest::parse_log(o.logs[i], schema), fc);
  });
  std::vector<pcm::Dataset> parts;
  std::string summary = "flight_id,aligned,below_floor,retained\n";
  std::size_t total = 0, dropped = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const std::string id = r.samples.empty() ? o.logs[i] : r.samples.front().flight_id;
    summary += id + "," + std::to_string(r.aligned) + "," + std::to_string(r.below_floor) + "," +
               std::to_string(r.samples.size()) + "\n";
    total += r.samples.size();
    dropped += r.below_floor;
    if (!r.samples.empty()) parts.push_back(pcm::preprocess::to_feature_matrix(r.samples));
  }
  if (total == 0) throw pcm::DataError("no samples above the power floor in any log");
  const auto data = pcm::concat(parts);
  Run run(sub, "preprocess", o.out, g.force);
  for (const auto& p : o.logs) run.add_input(p);
  run.write("dataset.csv", pcm::preprocess::format_dataset(data));
  run.write("summary.csv", summary);
  run.finish(0);
  std::cout << "preprocess: " << o.logs.size() << " logs, " << total << " samples";
  if (dropped) std::cout << " (" << dropped << " below the power floor dropped)";
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Model selection shared by train and studies.

struct Hyper {
  std::optional<double> alpha, beta, feature_ratio, learning_rate, col_subsample;
  std::optional<int> trees, max_depth, min_leaf, hidden_layers, neurons, batch, max_epochs;
};

void add_hyper_options(CLI::App* sub, Hyper& h) {
  sub->add_option("--alpha", h.alpha, "EN regularization strength");
  sub->add_option("--beta", h.beta, "EN L1 ratio");
  sub->add_option("--trees", h.trees, "RF/GBRT tree count");
  sub->add_option("--max-depth", h.max_depth, "RF/GBRT maximum depth");
  sub->add_option("--min-leaf", h.min_leaf, "RF/GBRT minimum leaf size");
  sub->add_option("--feature-ratio", h.feature_ratio, "RF features tried per split");
  sub->add_option("--learning-rate", h.learning_rate, "GBRT shrinkage or MLP step size");
  sub->add_option("--col-subsample", h.col_subsample, "GBRT column subsample");
  sub->add_option("--hidden-layers", h.hidden_layers, "MLP hidden layers");
  sub->add_option("--neurons", h.neurons, "MLP neurons per layer");
  sub->add_option("--batch", h.batch, "MLP batch size");
  sub->add_option("--max-epochs", h.max_epochs, "MLP epoch limit");
}

pcm::learners::RegressorConfig build_config(pcm::learners::Variant v, const Hyper& h, std::uint64_t seed) {
  using namespace pcm::learners;
  auto cfg = default_config(v, seed);
  std::vector<std::string> unused;
  auto take = [&](const auto& opt, auto& field, const char* name, bool applies) {
    if (!opt) return;
    if (!applies) {
      unused.push_back(name);
      return;
    }
    field = *opt;
  };
  std::visit(
      [&](auto& p) {
        using T = std::decay_t<decltype(p)>;
        double dd = 0;
        int di = 0;
        constexpr bool en = std::is_same_v<T, ElasticNetParams>, rf = std::is_same_v<T, ForestParams>,
                       gb = std::is_same_v<T, BoostingParams>, mlp = std::is_same_v<T, MlpParams>;
        if constexpr (en) {
          take(h.alpha, p.alpha, "--alpha", true);
          take(h.beta, p.beta, "--beta", true);
        } else {
          take(h.alpha, dd, "--alpha", false);
          take(h.beta, dd, "--beta", false);
        }
        if constexpr (rf || gb) {
          take(h.trees, p.trees, "--trees", true);
          take(h.max_depth, p.max_depth, "--max-depth", true);
          take(h.min_leaf, p.min_leaf, "--min-leaf", true);
        } else {
          take(h.trees, di, "--trees", false);
          take(h.max_depth, di, "--max-depth", false);
          take(h.min_leaf, di, "--min-leaf", false);
        }
        if constexpr (rf) take(h.feature_ratio, p.feature_ratio, "--feature-ratio", true);
        else take(h.feature_ratio, dd, "--feature-ratio", false);
        if constexpr (gb || mlp) take(h.learning_rate, p.learning_rate, "--learning-rate", true);
        else take(h.learning_rate, dd, "--learning-rate", false);
        if constexpr (gb) take(h.col_subsample, p.col_subsample, "--col-subsample", true);
        else take(h.col_subsample, dd, "--col-subsample", false);
        if constexpr (mlp) {
          take(h.hidden_layers, p.hidden_layers, "--hidden-layers", true);
          take(h.neurons, p.neurons, "--neurons", true);
          take(h.batch, p.batch, "--batch", true);
          take(h.max_epochs, p.max_epochs, "--max-epochs", true);
        } else {
          take(h.hidden_layers, di, "--hidden-layers", false);
          take(h.neurons, di, "--neurons", false);
          take(h.batch, di, "--batch", false);
          take(h.max_epochs, di, "--max-epochs", false);
        }
      },
      cfg.params);
  if (!unused.empty()) throw pcm::ContractError("option " + unused.front() + " does not apply to " + std::string(to_string(v)));
  cfg.validate();
  return cfg;
}

struct ModelSpec {
  std::string model = "stacked";
  std::uint64_t seed = 0;
  int folds = 5;
  std::vector<std::string> bases{"RF", "GBRT"};
  Hyper hyper;
};

void add_model_options(CLI::App* sub, ModelSpec& m, bool with_hyper) {
  sub->add_option("--model-type", m.model, "EN, RF, GBRT, MLP or stacked");
  sub->add_option("--folds", m.folds, "stacking folds")->check(CLI::Range(2, 100));
  sub->add_option("--bases", m.bases, "stacking base variants")->delimiter(',');
  if (with_hyper) add_hyper_options(sub, m.hyper);
}

pcm::Model fit_model(const ModelSpec& spec, const pcm::Dataset& train, unsigned threads) {
  if (spec.model == "stacked") {
    Hyper none;
    std::vector<pcm::learners::RegressorConfig> bases;
    for (std::size_t b = 0; b < spec.bases.size(); ++b)
      bases.push_back(build_config(pcm::learners::variant_from_string(spec.bases[b]), none,
                                   pcm::derive_seed(spec.seed, 1 + b)));
    if (bases.empty()) throw pcm::ContractError("stacking needs at least one base model");
    const auto h = spec.hyper;
    if (h.alpha || h.beta || h.trees || h.max_depth || h.min_leaf || h.feature_ratio || h.learning_rate ||
        h.col_subsample || h.hidden_layers || h.neurons || h.batch || h.max_epochs)
      throw pcm::ContractError("hyperparameter options apply to single models, not to stacked");
    return pcm::Model(pcm::stacking::fit_stacked(train.X, train.y, bases, spec.folds, spec.seed, threads),
                      distinct_flights(train));
  }
  const auto cfg = build_config(pcm::learners::variant_from_string(spec.model), spec.hyper, spec.seed);
  return pcm::Model(pcm::learners::fit_regressor(cfg, train.X, train.y, threads), distinct_flights(train));
}

pcm::SplitMode split_mode(const std::string& s) {
  if (s == "sample") return pcm::SplitMode::by_sample;
  if (s == "flight") return pcm::SplitMode::by_flight;
  throw pcm::ContractError("split mode must be 'sample' or 'flight'");
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string out, data;
  ModelSpec spec;
  std::string split = "sample";
  double train_fraction = 0.7;
};

int cmd_train(const CLI::App& sub, const TrainOpts& o, const Global& g) {
  require_file(o.data);
  const auto data = pcm::preprocess::read_dataset(o.data);
  const auto parts = pcm::split(data, {o.train_fraction, o.spec.seed, split_mode(o.split)});
  const auto model = fit_model(o.spec, parts.train, g.threads);
  const auto name = model.name();
  const std::string ds = fs::path(o.data).stem().string();
  std::vector<pcm::evaluate::EvalReport> reports{
      pcm::evaluate::make_report(parts.train.y, model.predict(parts.train.X), pcm::evaluate::SplitKind::training,
                                 name, ds),
      pcm::evaluate::make_report(parts.test.y, model.predict(parts.test.X), pcm::evaluate::SplitKind::testing, name,
                                 ds)};
  Run run(sub, "train", o.out, g.force);
  run.add_input(o.data);
  run.write("model.json", model.to_json().dump() + "\n");
  run.write("report.csv", report_csv(reports));
  run.finish(o.spec.seed);
  std::cout << "train: " << name << " train R2 " << format_double(reports[0].r2) << ", test R2 "
            << format_double(reports[1].r2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// tune

struct TuneOpts {
  std::string out, data, variant, grid;
  int folds = 5;
  std::uint64_t seed = 0;
};

pcm::evaluate::GridSpec grid_from_json(pcm::learners::Variant v, const json& j) {
  auto g = pcm::evaluate::GridSpec{};
  g.variant = v;
  static const std::set<std::string> known{"alpha", "beta", "trees", "max_depth", "min_leaf", "learning_rate",
                                           "col_subsample", "hidden_layers", "neurons", "batch"};
  for (const auto& [k, val] : j.items())
    if (!known.count(k)) throw pcm::ContractError("unknown grid key '" + k + "'");
  auto get = [&](const char* k, auto& dst) {
    if (j.contains(k)) j.at(k).get_to(dst);
  };
  get("alpha", g.alpha);
  get("beta", g.beta);
  get("trees", g.trees);
  get("max_depth", g.max_depth);
  get("min_leaf", g.min_leaf);
  get("learning_rate", g.learning_rate);
  get("col_subsample", g.col_subsample);
  get("hidden_layers", g.hidden_layers);
  get("neurons", g.neurons);
  get("batch", g.batch);
  return g;
}

int cmd_tune(const CLI::App& sub, const TuneOpts& o, const Global& g) {
  require_file(o.data);
  const auto v = pcm::learners::variant_from_string(o.variant);
  pcm::evaluate::GridSpec spec = pcm::evaluate::GridSpec::full(v);
  if (!o.grid.empty()) {
    require_file(o.grid);
    spec = grid_from_json(v, json::parse(pcm::text::read_file(o.grid)));
  }
  const auto data = pcm::preprocess::read_dataset(o.data);
  const auto cells = spec.cells(o.seed);
  const auto result = pcm::evaluate::grid_search(cells, data.X, data.y, o.folds, o.seed, g.threads);
  std::string csv = "cell,config,cv_mse";
  for (int k = 0; k < o.folds; ++k) csv += ",fold" + std::to_string(k) + "_mse";
  csv += "\n";
  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    const auto& cell = result.cells[c];
    csv += std::to_string(c) + ",\"" + pcm::learners::describe(cell.config) + "\"," + format_double(cell.cv_mse);
    for (double f : cell.fold_mse) csv += "," + format_double(f);
    csv += "\n";
  }
  json best = {{"config", pcm::learners::config_to_json(result.best_cell().config)},
               {"cv_mse", result.best_cell().cv_mse},
               {"folds", result.folds},
               {"cells", result.cells.size()}};
  Run run(sub, "tune", o.out, g.force);
  run.add_input(o.data);
  if (!o.grid.empty()) run.add_input(o.grid);
  run.write("grid.csv", csv);
  run.write("best.json", best.dump(2) + "\n");
  run.finish(o.seed);
  std::cout << "tune: best " << pcm::learners::describe(result.best_cell().config) << " cv MSE "
            << format_double(result.best_cell().cv_mse) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// predict

struct PredictOpts {
  std::string out, model, data;
};

int cmd_predict(const CLI::App& sub, const PredictOpts& o, const Global& g) {
  require_file(o.model);
  require_file(o.data);
  const auto model = pcm::Model::from_json(json::parse(pcm::text::read_file(o.model)));
  const auto data = pcm::preprocess::read_dataset(o.data);
  const auto pred = model.predict(data.X);
  std::string csv = "flight_id,t,power,predicted\n";
  for (std::size_t i = 0; i < data.size(); ++i)
    csv += data.flight_id[i] + "," + format_double(data.t[i]) + "," + format_double(data.y[i]) + "," +
           format_double(pred[i]) + "\n";
  const auto report = pcm::evaluate::make_report(data.y, pred, pcm::evaluate::SplitKind::testing, model.name(),
                                                 fs::path(o.data).stem().string());
  Run run(sub, "predict", o.out, g.force);
  run.add_input(o.model);
  run.add_input(o.data);
  run.write("predictions.csv", csv);
  run.write("report.csv", report_csv(std::span(&report, 1)));
  run.finish(0);
  (void)g;
  std::cout << "predict: " << data.size() << " rows, R2 " << format_double(report.r2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// study

struct HeldOutOpts {
  std::string out, data, model_file;
  ModelSpec spec;
  double train_fraction = 0.8;
};

void add_held_out_options(CLI::App* s, HeldOutOpts& o) {
  s->add_option("--out", o.out, "output directory")->required();
  s->add_option("--data", o.data, "cleaned dataset")->required();
  s->add_option("--model", o.model_file, "trained model file; flights it was trained on are excluded");
  s->add_option("--seed", o.spec.seed, "seed for the internal split and fit");
  s->add_option("--train-fraction", o.train_fraction, "fraction of flights used for the internal fit")
      ->check(CLI::Range(0.0, 1.0));
  add_model_options(s, o.spec, false);
}

struct HeldOut {
  pcm::Model model;
  pcm::Dataset test;
};

/// A model plus the flights it never saw: either a supplied model file or an
/// internal by-flight split and fit.
HeldOut held_out(const HeldOutOpts& o, const Global& g) {
  require_file(o.data);
  const auto data = pcm::preprocess::read_dataset(o.data);
  if (!o.model_file.empty()) {
    require_file(o.model_file);
    auto model = pcm::Model::from_json(json::parse(pcm::text::read_file(o.model_file)));
    const std::set<std::string> seen(model.training_flights().begin(), model.training_flights().end());
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (!seen.count(data.flight_id[i])) rows.push_back(i);
    if (rows.empty()) throw pcm::DataError("every flight of the dataset was used to train the model");
    return {std::move(model), data.subset(rows)};
  }
  const auto parts = pcm::split(data, {o.train_fraction, o.spec.seed, pcm::SplitMode::by_flight});
  return {fit_model(o.spec, parts.train, g.threads), parts.test};
}

void held_out_inputs(Run& run, const HeldOutOpts& o) {
  run.add_input(o.data);
  if (!o.model_file.empty()) run.add_input(o.model_file);
}

struct SensitivityOpts {
  std::string out, data;
  std::uint64_t seed = 0;
  int min_size = 100, max_size = 4500, step = 100, reps = 50;
};

int cmd_sensitivity(const CLI::App& sub, const SensitivityOpts& o, const Global& g) {
  require_file(o.data);
  const auto data = pcm::preprocess::read_dataset(o.data);
  pcm::evaluate::SensitivityOptions opt;
  opt.min_size = o.min_size;
  opt.max_size = o.max_size;
  opt.step = o.step;
  opt.repetitions = o.reps;
  const auto curve = pcm::evaluate::sensitivity_study(data, o.seed, opt, g.threads);
  std::string raw = "variant,n,rep,r2\n", summary = "variant,n,mean_r2,std_r2\n";
  for (std::size_t v = 0; v < curve.variants.size(); ++v)
    for (std::size_t s = 0; s < curve.sizes.size(); ++s) {
      for (std::size_t r = 0; r < curve.r2[v][s].size(); ++r)
        raw += curve.variants[v] + "," + std::to_string(curve.sizes[s]) + "," + std::to_string(r) + "," +
               format_double(curve.r2[v][s][r]) + "\n";
      summary += curve.variants[v] + "," + std::to_string(curve.sizes[s]) + "," + format_double(curve.mean[v][s]) +
                 "," + format_double(curve.stddev[v][s]) + "\n";
    }
  Run run(sub, "study sensitivity", o.out, g.force);
  run.add_input(o.data);
  run.write("sensitivity.csv", raw);
  run.write("summary.csv", summary);
  run.finish(o.seed);
  std::cout << "sensitivity: " << curve.fits << " fits\n";
  return 0;
}

struct ErrorDistOpts {
  HeldOutOpts h;
  std::size_t bins = 40;
};

int cmd_error_dist(const CLI::App& sub, const ErrorDistOpts& o, const Global& g) {
  const auto ho = held_out(o.h, g);
  const auto pred = ho.model.predict(ho.test.X);
  const auto d = pcm::analysis::error_distribution(ho.test.y, pred, o.bins);
  std::string errors = "flight_id,t,power,predicted,error\n";
  for (std::size_t i = 0; i < ho.test.size(); ++i)
    errors += ho.test.flight_id[i] + "," + format_double(ho.test.t[i]) + "," + format_double(ho.test.y[i]) + "," +
              format_double(pred[i]) + "," + format_double(d.errors[i]) + "\n";
  std::string hist = "lower,upper,count\n";
  for (std::size_t b = 0; b < d.bin_counts.size(); ++b)
    hist += format_double(d.bin_edges[b]) + "," + format_double(d.bin_edges[b + 1]) + "," +
            std::to_string(d.bin_counts[b]) + "\n";
  json summary = {{"model", ho.model.name()},     {"samples", d.errors.size()},       {"mean", d.mean},
                  {"sigma", d.sigma},             {"within_1sigma", d.within_1sigma}, {"within_2sigma", d.within_2sigma}};
  Run run(sub, "study error-dist", o.h.out, g.force);
  held_out_inputs(run, o.h);
  run.write("errors.csv", errors);
  run.write("histogram.csv", hist);
  run.write("summary.json", summary.dump(2) + "\n");
  run.finish(o.h.spec.seed);
  std::cout << "error-dist: sigma " << format_double(d.sigma) << " W, within 1 sigma "
            << format_double(d.within_1sigma) << "\n";
  return 0;
}

struct EnergyOpts {
  HeldOutOpts h;
  double bound = pcm::analysis::kDefaultEnergyBoundJ;
  double capacity = pcm::analysis::kMatrice100CapacityJ;
};

int cmd_flight_energy(const CLI::App& sub, const EnergyOpts& o, const Global& g) {
  const auto ho = held_out(o.h, g);
  const auto flights = pcm::analysis::split_flights(ho.test);
  const pcm::analysis::Predictor predict = [&](const pcm::FeatureMatrix& X) { return ho.model.predict(X); };
  const auto rep = pcm::analysis::flight_energy_errors(predict, flights, o.bound, o.capacity);
  std::string csv = "flight_id,samples,measured_j,predicted_j,error_j,capacity_fraction,within_bound\n";
  for (const auto& f : rep.flights)
    csv += f.flight_id + "," + std::to_string(f.samples) + "," + format_double(f.measured_j) + "," +
           format_double(f.predicted_j) + "," + format_double(f.error_j) + "," + format_double(f.capacity_fraction) +
           "," + (std::abs(f.error_j) <= rep.bound_j ? "1" : "0") + "\n";
  json summary = {{"model", ho.model.name()},
                  {"flights", rep.flights.size()},
                  {"skipped", rep.skipped},
                  {"bound_j", rep.bound_j},
                  {"capacity_j", rep.capacity_j},
                  {"bound_capacity_fraction", rep.bound_j / rep.capacity_j},
                  {"coverage", rep.coverage}};
  Run run(sub, "study flight-energy", o.h.out, g.force);
  held_out_inputs(run, o.h);
  run.write("flight_energy.csv", csv);
  run.write("summary.json", summary.dump(2) + "\n");
  run.finish(o.h.spec.seed);
  std::cout << "flight-energy: " << rep.flights.size() << " flights, " << format_double(100.0 * rep.coverage)
            << "% within +/-" << format_double(rep.bound_j) << " J\n";
  return 0;
}

struct TraceOpts {
  HeldOutOpts h;
  std::string flight;
};

int cmd_trace(const CLI::App& sub, const TraceOpts& o, const Global& g) {
  const auto ho = held_out(o.h, g);
  const auto flights = pcm::analysis::split_flights(ho.test);
  if (flights.empty()) throw pcm::DataError("no held-out flights");
  const pcm::analysis::FlightData* chosen = &flights.front();
  if (!o.flight.empty()) {
    chosen = nullptr;
    for (const auto& f : flights)
      if (f.id == o.flight) chosen = &f;
    if (!chosen) throw pcm::ContractError("flight '" + o.flight + "' is not among the held-out flights");
  }
  const pcm::analysis::Predictor predict = [&](const pcm::FeatureMatrix& X) { return ho.model.predict(X); };
  const auto tr = pcm::analysis::trace_comparison(predict, *chosen, ho.model.training_flights());
  std::string csv = "t,truth,prediction\n";
  for (std::size_t i = 0; i < tr.t.size(); ++i)
    csv += format_double(tr.t[i]) + "," + format_double(tr.truth[i]) + "," + format_double(tr.prediction[i]) + "\n";
  auto report = tr.report;
  report.model = ho.model.name();
  Run run(sub, "study trace", o.h.out, g.force);
  held_out_inputs(run, o.h);
  run.write("trace.csv", csv);
  run.write("report.csv", report_csv(std::span(&report, 1)));
  run.finish(o.h.spec.seed);
  std::cout << "trace: flight " << tr.flight_id << ", R2 " << format_double(report.r2) << "\n";
  return 0;
}

struct BenchmarkOpts {
  std::string out;
  std::vector<std::string> data;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

int cmd_benchmark(const CLI::App& sub, const BenchmarkOpts& o, const Global& g) {
  std::vector<pcm::evaluate::NamedDataset> sets;
  std::vector<std::string> paths;
  for (const auto& spec : o.data) {
    const auto eq = spec.find('=');
    const std::string name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    require_file(path);
    paths.push_back(path);
    sets.push_back({name, pcm::preprocess::read_dataset(path)});
  }
  std::size_t n = o.samples;
  if (n == 0) {
    n = sets.front().data.size();
    for (const auto& s : sets) n = std::min(n, s.data.size());
  }
  const auto datasets = pcm::evaluate::benchmark_datasets(sets, n, o.seed);
  std::vector<pcm::evaluate::BenchmarkModel> models;
  for (const auto& c : pcm::evaluate::empirical_configs(o.seed)) models.push_back(pcm::evaluate::benchmark_model(c));
  models.push_back(pcm::evaluate::benchmark_model(pcm::learners::default_config(pcm::learners::Variant::MLP, o.seed)));
  models.push_back(pcm::evaluate::benchmark_stacked(pcm::stacking::default_base_configs(o.seed), 5, o.seed));
  const auto reports = pcm::evaluate::benchmark_table(models, datasets, o.seed, 0.7, g.threads);
  Run run(sub, "study benchmark", o.out, g.force);
  for (const auto& p : paths) run.add_input(p);
  run.write("benchmark.csv", report_csv(reports));
  run.finish(o.seed);
  std::cout << "benchmark: " << models.size() << " models x " << datasets.size() << " datasets\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quadrotor power-consumption modeling toolkit"};
  app.set_version_flag("--version", std::string(pcm::kVersion));
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "configuration file (TOML); command-line flags take precedence");
  Global g;
  app.add_option("--threads", g.threads, "worker threads (0: all cores)");
  app.add_flag("--force", g.force, "write into an existing output directory");

  SynthOpts so;
  auto* synth = app.add_subcommand("synth", "generate a synthetic fleet");
  synth->add_option("--out", so.out, "output directory")->required();
  synth->add_option("--seed", so.seed, "random seed");
  synth->add_option("--flights", so.flights, "number of flights")->check(CLI::PositiveNumber);
  synth->add_option("--aircraft", so.aircraft, "matrice100, mavic_pro or inspire");
  synth->add_option("--min-duration", so.min_duration, "shortest flight (s)");
  synth->add_option("--max-duration", so.max_duration, "longest flight (s)");
  synth->add_option("--noise", so.noise, "power noise standard deviation (W)");
  synth->add_option("--min-wind", so.min_wind, "weakest mean wind (m/s)");
  synth->add_option("--max-wind", so.max_wind, "strongest mean wind (m/s)");
  synth->add_flag("--raw-logs", so.raw_logs, "also write raw matrice100 logs under raw/");

  PreprocessOpts po;
  auto* pre = app.add_subcommand("preprocess", "clean raw flight logs into a 1 Hz dataset");
  pre->add_option("logs", po.logs, "raw log files")->required();
  pre->add_option("--schema", po.schema, "mavic_pro, inspire or matrice100")->required();
  pre->add_option("--out", po.out, "output directory")->required();
  pre->add_option("--median-window", po.median_window, "median filter width (odd)");
  pre->add_option("--power-floor", po.power_floor, "drop samples at or below this power (W)");
  pre->add_flag("--wind-to", po.wind_to, "wind direction is the bearing the wind blows toward");

  TrainOpts to;
  auto* train = app.add_subcommand("train", "fit a model and report train/test metrics");
  train->add_option("--data", to.data, "cleaned dataset")->required();
  train->add_option("--out", to.out, "output directory")->required();
  train->add_option("--model", to.spec.model, "EN, RF, GBRT, MLP or stacked");
  train->add_option("--seed", to.spec.seed, "random seed");
  train->add_option("--split", to.split, "sample or flight");
  train->add_option("--train-fraction", to.train_fraction, "training share")->check(CLI::Range(0.0, 1.0));
  train->add_option("--folds", to.spec.folds, "stacking folds")->check(CLI::Range(2, 100));
  train->add_option("--bases", to.spec.bases, "stacking base variants")->delimiter(',');
  add_hyper_options(train, to.spec.hyper);

  TuneOpts tu;
  auto* tune = app.add_subcommand("tune", "cross-validated grid search");
  tune->add_option("--data", tu.data, "cleaned dataset")->required();
  tune->add_option("--variant", tu.variant, "EN, RF, GBRT or MLP")->required();
  tune->add_option("--grid", tu.grid, "JSON grid file; default covers the tuning domain");
  tune->add_option("--folds", tu.folds, "cross-validation folds")->check(CLI::Range(2, 100));
  tune->add_option("--seed", tu.seed, "random seed");
  tune->add_option("--out", tu.out, "output directory")->required();

  PredictOpts pr;
  auto* predict = app.add_subcommand("predict", "apply a model to a dataset");
  predict->add_option("--model", pr.model, "model file")->required();
  predict->add_option("--data", pr.data, "cleaned dataset")->required();
  predict->add_option("--out", pr.out, "output directory")->required();

  auto* study = app.add_subcommand("study", "analysis studies");
  study->require_subcommand(1);
  study->fallthrough();

  SensitivityOpts se;
  auto* sens = study->add_subcommand("sensitivity", "R2 against training-set size");
  sens->add_option("--data", se.data, "cleaned dataset")->required();
  sens->add_option("--out", se.out, "output directory")->required();
  sens->add_option("--seed", se.seed, "random seed");
  sens->add_option("--min-size", se.min_size, "smallest sample size");
  sens->add_option("--max-size", se.max_size, "largest sample size");
  sens->add_option("--step", se.step, "size increment");
  sens->add_option("--reps", se.reps, "repetitions per size");

  ErrorDistOpts ed;
  auto* errd = study->add_subcommand("error-dist", "residual distribution on held-out flights");
  add_held_out_options(errd, ed.h);
  errd->add_option("--bins", ed.bins, "histogram bins")->check(CLI::PositiveNumber);

  EnergyOpts en;
  auto* energy = study->add_subcommand("flight-energy", "accumulated energy error per held-out flight");
  add_held_out_options(energy, en.h);
  energy->add_option("--bound", en.bound, "energy error bound (J)");
  energy->add_option("--capacity", en.capacity, "battery capacity (J)");

  TraceOpts tr;
  auto* trace = study->add_subcommand("trace", "ground truth against prediction for one held-out flight");
  add_held_out_options(trace, tr.h);
  trace->add_option("--flight", tr.flight, "flight id (default: first held-out flight)");

  BenchmarkOpts bo;
  auto* bench = study->add_subcommand("benchmark", "all models on every dataset and their combination");
  bench->add_option("--data", bo.data, "datasets as name=path")->required();
  bench->add_option("--out", bo.out, "output directory")->required();
  bench->add_option("--samples", bo.samples, "samples drawn per dataset (default: smallest dataset)");
  bench->add_option("--seed", bo.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(*synth, so, g);
    if (pre->parsed()) return cmd_preprocess(*pre, po, g);
    if (train->parsed()) return cmd_train(*train, to, g);
    if (tune->parsed()) return cmd_tune(*tune, tu, g);
    if (predict->parsed()) return cmd_predict(*predict, pr, g);
    if (sens->parsed()) return cmd_sensitivity(*sens, se, g);
    if (errd->parsed()) return cmd_error_dist(*errd, ed, g);
    if (energy->parsed()) return cmd_flight_energy(*energy, en, g);
    if (trace->parsed()) return cmd_trace(*trace, tr, g);
    if (bench->parsed()) return cmd_benchmark(*bench, bo, g);
  } catch (const pcm::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const pcm::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const pcm::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
