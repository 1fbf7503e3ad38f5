// Uniform regressor contract over elastic net, random forest, gradient
// boosting and MLP: configuration, fitting, prediction and versioned JSON
// documents.
#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pcm/core.hpp"
#include "pcm/elastic_net.hpp"
#include "pcm/ensemble.hpp"
#include "pcm/mlp.hpp"
#include "pcm/standardize.hpp"
#include "pcm/tree.hpp"

namespace pcm::learners {

using json = nlohmann::json;

inline constexpr std::string_view kModelFormat = "pcm-model/1";

enum class Variant { EN, RF, GBRT, MLP };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::EN: return "EN";
    case Variant::RF: return "RF";
    case Variant::GBRT: return "GBRT";
    case Variant::MLP: return "MLP";
  }
  return "?";
}

inline Variant variant_from_string(std::string_view s) {
  if (s == "EN") return Variant::EN;
  if (s == "RF") return Variant::RF;
  if (s == "GBRT") return Variant::GBRT;
  if (s == "MLP") return Variant::MLP;
  throw ContractError("unknown model variant '" + std::string(s) + "' (expected EN, RF, GBRT or MLP)");
}

struct ElasticNetParams {
  double alpha = 0.1;
  double beta = 0.01;  // L1 ratio
};

using Hyperparameters = std::variant<ElasticNetParams, ForestParams, BoostingParams, MlpParams>;

struct RegressorConfig {
  Hyperparameters params;
  std::uint64_t seed = 0;

  Variant variant() const { return static_cast<Variant>(params.index()); }

  /// Rejects hyperparameters outside the tuning domains:
  ///   EN    alpha in [0,1], beta in {1e-3, 1e-2, 1e-1}
  ///   RF    trees in [100,1000], depth in [2,7], min_leaf in [1,64]
  ///   GBRT  trees in [100,1000], depth in [2,7], rate in {0.1,0.3,0.5}, col in {0.5,0.8,1}
  ///   MLP   layers in {1,2,3}, neurons in [2,256], batch in {32,64,128}
  void validate() const {
    auto fail = [](const std::string& what) { throw ContractError("hyperparameter out of domain: " + what); };
    auto one_of = [](double v, std::initializer_list<double> set) {
      for (double s : set)
        if (std::abs(v - s) <= 1e-12 * std::max(1.0, std::abs(s))) return true;
      return false;
    };
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, ElasticNetParams>) {
            if (!(p.alpha >= 0.0 && p.alpha <= 1.0)) fail("EN alpha must lie in [0, 1]");
            if (!one_of(p.beta, {1e-3, 1e-2, 1e-1})) fail("EN beta must be one of {0.001, 0.01, 0.1}");
          } else if constexpr (std::is_same_v<T, ForestParams>) {
            if (p.trees < 100 || p.trees > 1000) fail("RF trees must lie in [100, 1000]");
            if (p.max_depth < 2 || p.max_depth > 7) fail("RF max_depth must lie in [2, 7]");
            if (p.min_leaf < 1 || p.min_leaf > 64) fail("RF min_leaf must lie in [1, 64]");
            if (!(p.feature_ratio > 0.0 && p.feature_ratio <= 1.0)) fail("RF feature_ratio must lie in (0, 1]");
          } else if constexpr (std::is_same_v<T, BoostingParams>) {
            if (p.trees < 100 || p.trees > 1000) fail("GBRT trees must lie in [100, 1000]");
            if (p.max_depth < 2 || p.max_depth > 7) fail("GBRT max_depth must lie in [2, 7]");
            if (!one_of(p.learning_rate, {0.1, 0.3, 0.5})) fail("GBRT learning_rate must be one of {0.1, 0.3, 0.5}");
            if (!one_of(p.col_subsample, {0.5, 0.8, 1.0})) fail("GBRT col_subsample must be one of {0.5, 0.8, 1}");
            if (p.min_leaf < 1) fail("GBRT min_leaf must be at least 1");
          } else {
            if (p.hidden_layers < 1 || p.hidden_layers > 3) fail("MLP hidden_layers must be one of {1, 2, 3}");
            if (p.neurons < 2 || p.neurons > 256) fail("MLP neurons must lie in [2, 256]");
            if (p.batch != 32 && p.batch != 64 && p.batch != 128) fail("MLP batch must be one of {32, 64, 128}");
            if (p.max_epochs < 1 || p.patience < 1) fail("MLP epochs and patience must be positive");
            if (!(p.validation_fraction >= 0.0 && p.validation_fraction < 1.0))
              fail("MLP validation_fraction must lie in [0, 1)");
          }
        },
        params);
  }
};

// Hyperparameters used when nothing else is specified; they sit inside the
// tuning domains and match the sensitivity-study settings.
inline RegressorConfig default_config(Variant v, std::uint64_t seed = 0) {
  switch (v) {
    case Variant::EN: return {ElasticNetParams{0.1, 0.01}, seed};
    case Variant::RF: return {ForestParams{300, 7, 4, 1.0 / 3.0, true}, seed};
    case Variant::GBRT: return {BoostingParams{300, 5, 0.1, 0.8, 1}, seed};
    case Variant::MLP: return {MlpParams{}, seed};
  }
  throw ContractError("unknown variant");
}

inline std::string describe(const RegressorConfig& c) {
  std::ostringstream os;
  os << to_string(c.variant()) << "(";
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ElasticNetParams>) {
          os << "alpha=" << p.alpha << ", beta=" << p.beta;
        } else if constexpr (std::is_same_v<T, ForestParams>) {
          os << "trees=" << p.trees << ", depth=" << p.max_depth << ", min_leaf=" << p.min_leaf
             << ", feature_ratio=" << p.feature_ratio << (p.bootstrap ? "" : ", no-bootstrap");
        } else if constexpr (std::is_same_v<T, BoostingParams>) {
          os << "trees=" << p.trees << ", depth=" << p.max_depth << ", rate=" << p.learning_rate
             << ", col=" << p.col_subsample;
        } else {
          os << "layers=" << p.hidden_layers << ", neurons=" << p.neurons << ", batch=" << p.batch;
        }
      },
      c.params);
  os << ", seed=" << c.seed << ")";
  return os.str();
}

/// Training-time byproducts; not part of the serialized document.
struct FitDiagnostics {
  std::vector<double> fitted;
  std::vector<double> history;  // EN objective per sweep, GBRT MSE per stage, MLP validation loss per epoch
};

using ModelParameters = std::variant<LinearModel, Forest, Boosted, MlpModel>;

class TrainedRegressor {
 public:
  TrainedRegressor() = default;
  TrainedRegressor(RegressorConfig config, Standardization standardization, ModelParameters params)
      : config_(std::move(config)), standardization_(std::move(standardization)), params_(std::move(params)) {}

  const RegressorConfig& config() const { return config_; }
  const Standardization& standardization() const { return standardization_; }
  const ModelParameters& parameters() const { return params_; }
  const FitDiagnostics& diagnostics() const { return diagnostics_; }
  FitDiagnostics& diagnostics() { return diagnostics_; }
  Variant variant() const { return config_.variant(); }

  double predict_row(std::span<const double> x) const {
    if (x.size() != kNumFeatures) throw ContractError("expected 15 feature columns");
    std::array<double, kNumFeatures> z;
    std::span<const double> in = x;
    if (!standardization_.is_identity()) {
      standardization_.apply(x, z);
      in = z;
    }
    return std::visit(
        [&](const auto& p) -> double {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, LinearModel> || std::is_same_v<T, MlpModel>)
            return p.predict_standardized(in);
          else
            return p.predict(in);
        },
        params_);
  }

  TargetVector predict(const FeatureMatrix& X) const {
    TargetVector out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predict_row(X.row(i));
    return out;
  }

  std::string describe() const { return learners::describe(config_); }

  /// Parameters the loss regularizer acts on: EN weights, tree leaf values,
  /// or network weights.
  std::vector<double> regularized_parameters() const {
    return std::visit(
        [](const auto& p) -> std::vector<double> {
          using T = std::decay_t<decltype(p)>;
          std::vector<double> out;
          if constexpr (std::is_same_v<T, LinearModel>) {
            out = p.weights;
          } else if constexpr (std::is_same_v<T, MlpModel>) {
            for (const auto& l : p.net.layers) out.insert(out.end(), l.W.begin(), l.W.end());
          } else {
            for (const auto& t : p.trees)
              for (const auto& n : t.nodes())
                if (n.is_leaf()) out.push_back(n.value);
          }
          return out;
        },
        params_);
  }

 private:
  RegressorConfig config_;
  Standardization standardization_;
  ModelParameters params_;
  FitDiagnostics diagnostics_;
};

/// Fits after validating the configuration against the tuning domains.
inline TrainedRegressor fit_regressor(const RegressorConfig& config, const FeatureMatrix& X,
                                      std::span<const double> y, unsigned threads = 1) {
  config.validate();
  if (X.rows() != y.size()) throw ContractError("feature matrix and target differ in length");
  if (y.empty()) throw ContractError("cannot fit on an empty dataset");
  if (!X.all_finite()) throw DataError("non-finite feature value in training data");
  TrainedRegressor out;
  std::vector<double> history;
  switch (config.variant()) {
    case Variant::EN: {
      const auto& p = std::get<ElasticNetParams>(config.params);
      auto fit = fit_elastic_net(X, y, p.alpha, p.beta);
      history = fit.objective_history;
      out = TrainedRegressor(config, fit.standardization, fit.model);
      break;
    }
    case Variant::RF: {
      auto forest = fit_random_forest(X, y, std::get<ForestParams>(config.params), config.seed, threads);
      out = TrainedRegressor(config, {}, std::move(forest));
      break;
    }
    case Variant::GBRT: {
      auto fit = fit_gbrt(X, y, std::get<BoostingParams>(config.params), config.seed);
      history = fit.stage_mse;
      out = TrainedRegressor(config, {}, std::move(fit.model));
      out.diagnostics().fitted = std::move(fit.fitted);
      break;
    }
    case Variant::MLP: {
      auto fit = fit_mlp(X, y, std::get<MlpParams>(config.params), config.seed);
      history = fit.validation_loss;
      out = TrainedRegressor(config, fit.standardization, std::move(fit.model));
      break;
    }
  }
  if (out.diagnostics().fitted.empty()) out.diagnostics().fitted = out.predict(X);
  out.diagnostics().history = std::move(history);
  return out;
}

// ---------------------------------------------------------------------------
// JSON documents.

inline json config_to_json(const RegressorConfig& c) {
  json j;
  j["variant"] = std::string(to_string(c.variant()));
  j["seed"] = c.seed;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        json h;
        if constexpr (std::is_same_v<T, ElasticNetParams>) {
          h = {{"alpha", p.alpha}, {"beta", p.beta}};
        } else if constexpr (std::is_same_v<T, ForestParams>) {
          h = {{"trees", p.trees},
               {"max_depth", p.max_depth},
               {"min_leaf", p.min_leaf},
               {"feature_ratio", p.feature_ratio},
               {"bootstrap", p.bootstrap}};
        } else if constexpr (std::is_same_v<T, BoostingParams>) {
          h = {{"trees", p.trees},
               {"max_depth", p.max_depth},
               {"learning_rate", p.learning_rate},
               {"col_subsample", p.col_subsample},
               {"min_leaf", p.min_leaf}};
        } else {
          h = {{"hidden_layers", p.hidden_layers},
               {"neurons", p.neurons},
               {"batch", p.batch},
               {"max_epochs", p.max_epochs},
               {"patience", p.patience},
               {"validation_fraction", p.validation_fraction},
               {"learning_rate", p.learning_rate}};
        }
        j["hyperparameters"] = h;
      },
      c.params);
  return j;
}

/// Missing hyperparameters fall back to the variant defaults.
inline RegressorConfig config_from_json(const json& j) {
  const Variant v = variant_from_string(j.at("variant").get<std::string>());
  RegressorConfig c = default_config(v, j.value("seed", std::uint64_t{0}));
  const json h = j.value("hyperparameters", json::object());
  std::visit(
      [&](auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ElasticNetParams>) {
          p.alpha = h.value("alpha", p.alpha);
          p.beta = h.value("beta", p.beta);
        } else if constexpr (std::is_same_v<T, ForestParams>) {
          p.trees = h.value("trees", p.trees);
          p.max_depth = h.value("max_depth", p.max_depth);
          p.min_leaf = h.value("min_leaf", p.min_leaf);
          p.feature_ratio = h.value("feature_ratio", p.feature_ratio);
          p.bootstrap = h.value("bootstrap", p.bootstrap);
        } else if constexpr (std::is_same_v<T, BoostingParams>) {
          p.trees = h.value("trees", p.trees);
          p.max_depth = h.value("max_depth", p.max_depth);
          p.learning_rate = h.value("learning_rate", p.learning_rate);
          p.col_subsample = h.value("col_subsample", p.col_subsample);
          p.min_leaf = h.value("min_leaf", p.min_leaf);
        } else {
          p.hidden_layers = h.value("hidden_layers", p.hidden_layers);
          p.neurons = h.value("neurons", p.neurons);
          p.batch = h.value("batch", p.batch);
          p.max_epochs = h.value("max_epochs", p.max_epochs);
          p.patience = h.value("patience", p.patience);
          p.validation_fraction = h.value("validation_fraction", p.validation_fraction);
          p.learning_rate = h.value("learning_rate", p.learning_rate);
        }
      },
      c.params);
  return c;
}

namespace detail {

inline json tree_to_json(const RegressionTree& t) {
  json feature = json::array(), threshold = json::array(), left = json::array(), right = json::array(),
       value = json::array(), count = json::array(), depth = json::array();
  for (const auto& n : t.nodes()) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
    count.push_back(n.count);
    depth.push_back(n.depth);
  }
  return {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
          {"value", value},     {"count", count},         {"depth", depth}};
}

inline RegressionTree tree_from_json(const json& j) {
  const auto& f = j.at("feature");
  std::vector<TreeNode> nodes(f.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    auto& n = nodes[k];
    n.feature = f[k].get<std::int32_t>();
    n.threshold = j.at("threshold")[k].get<double>();
    n.left = j.at("left")[k].get<std::int32_t>();
    n.right = j.at("right")[k].get<std::int32_t>();
    n.value = j.at("value")[k].get<double>();
    n.count = j.at("count")[k].get<double>();
    n.depth = j.at("depth")[k].get<std::int32_t>();
    if (!n.is_leaf()) {
      const auto sz = static_cast<std::int32_t>(nodes.size());
      if (n.feature >= static_cast<std::int32_t>(kNumFeatures) || n.left <= static_cast<std::int32_t>(k) ||
          n.right <= static_cast<std::int32_t>(k) || n.left >= sz || n.right >= sz)
        throw DataError("malformed tree node in model document");
    }
  }
  if (nodes.empty()) throw DataError("empty tree in model document");
  return RegressionTree(std::move(nodes));
}

}  // namespace detail

inline json to_json(const TrainedRegressor& model) {
  json j;
  j["format"] = std::string(kModelFormat);
  j["kind"] = "regressor";
  j["config"] = config_to_json(model.config());
  j["standardization"] = {{"mean", model.standardization().mean}, {"scale", model.standardization().scale}};
  json params;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearModel>) {
          params = {{"weights", p.weights}, {"intercept", p.intercept}};
        } else if constexpr (std::is_same_v<T, Forest>) {
          json trees = json::array();
          for (const auto& t : p.trees) trees.push_back(detail::tree_to_json(t));
          params = {{"trees", trees}};
        } else if constexpr (std::is_same_v<T, Boosted>) {
          json trees = json::array();
          for (const auto& t : p.trees) trees.push_back(detail::tree_to_json(t));
          params = {{"base_score", p.base_score}, {"learning_rate", p.learning_rate}, {"trees", trees}};
        } else {
          json layers = json::array();
          for (const auto& l : p.net.layers)
            layers.push_back({{"inputs", l.inputs}, {"outputs", l.outputs}, {"W", l.W}, {"b", l.b}});
          params = {{"y_mean", p.y_mean}, {"y_scale", p.y_scale}, {"layers", layers}};
        }
      },
      model.parameters());
  j["parameters"] = params;
  return j;
}

inline TrainedRegressor regressor_from_json(const json& j) {
  if (j.value("format", "") != kModelFormat) throw DataError("unsupported model document format");
  if (j.value("kind", "") != "regressor") throw DataError("model document is not a single regressor");
  RegressorConfig config = config_from_json(j.at("config"));
  Standardization s;
  s.mean = j.at("standardization").at("mean").get<std::vector<double>>();
  s.scale = j.at("standardization").at("scale").get<std::vector<double>>();
  if (!s.is_identity() && (s.mean.size() != kNumFeatures || s.scale.size() != kNumFeatures))
    throw DataError("standardization must have 15 entries");
  const json& p = j.at("parameters");
  ModelParameters params;
  switch (config.variant()) {
    case Variant::EN: {
      LinearModel lm{p.at("weights").get<std::vector<double>>(), p.at("intercept").get<double>()};
      if (lm.weights.size() != kNumFeatures) throw DataError("EN document needs 15 weights");
      params = std::move(lm);
      break;
    }
    case Variant::RF: {
      Forest f;
      for (const auto& t : p.at("trees")) f.trees.push_back(detail::tree_from_json(t));
      params = std::move(f);
      break;
    }
    case Variant::GBRT: {
      Boosted b;
      b.base_score = p.at("base_score").get<double>();
      b.learning_rate = p.at("learning_rate").get<double>();
      for (const auto& t : p.at("trees")) b.trees.push_back(detail::tree_from_json(t));
      params = std::move(b);
      break;
    }
    case Variant::MLP: {
      MlpModel mm;
      mm.y_mean = p.at("y_mean").get<double>();
      mm.y_scale = p.at("y_scale").get<double>();
      for (const auto& l : p.at("layers")) {
        DenseLayer L;
        L.inputs = l.at("inputs").get<std::size_t>();
        L.outputs = l.at("outputs").get<std::size_t>();
        L.W = l.at("W").get<std::vector<double>>();
        L.b = l.at("b").get<std::vector<double>>();
        if (L.W.size() != L.inputs * L.outputs || L.b.size() != L.outputs)
          throw DataError("MLP layer shape mismatch in model document");
        mm.net.layers.push_back(std::move(L));
      }
      params = std::move(mm);
      break;
    }
  }
  return TrainedRegressor(std::move(config), std::move(s), std::move(params));
}

}  // namespace pcm::learners
