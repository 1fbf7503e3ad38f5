// Fully connected ReLU network trained with mini-batch Adam on squared error.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pcm/core.hpp"
#include "pcm/standardize.hpp"

namespace pcm::learners {

struct MlpParams {
  int hidden_layers = 2;
  int neurons = 32;
  int batch = 64;
  int max_epochs = 500;
  int patience = 20;  // epochs without validation improvement before stopping
  double validation_fraction = 0.1;
  double learning_rate = 1e-3;
};

struct DenseLayer {
  std::size_t inputs = 0, outputs = 0;
  std::vector<double> W;  // outputs x inputs, row-major
  std::vector<double> b;

  bool operator==(const DenseLayer&) const = default;
};

/// Hidden layers use ReLU; the last layer is a single linear output.
struct Network {
  std::vector<DenseLayer> layers;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.W.size() + l.b.size();
    return n;
  }

  double forward(std::span<const double> x) const {
    std::vector<double> cur(x.begin(), x.end()), next;
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const auto& L = layers[li];
      next.assign(L.outputs, 0.0);
      for (std::size_t o = 0; o < L.outputs; ++o) {
        double a = L.b[o];
        const double* w = L.W.data() + o * L.inputs;
        for (std::size_t i = 0; i < L.inputs; ++i) a += w[i] * cur[i];
        next[o] = (li + 1 < layers.size() && a < 0.0) ? 0.0 : a;
      }
      cur.swap(next);
    }
    return cur[0];
  }

  std::vector<double> flatten() const {
    std::vector<double> p;
    p.reserve(parameter_count());
    for (const auto& l : layers) {
      p.insert(p.end(), l.W.begin(), l.W.end());
      p.insert(p.end(), l.b.begin(), l.b.end());
    }
    return p;
  }

  void unflatten(std::span<const double> p) {
    if (p.size() != parameter_count()) throw ContractError("parameter vector size mismatch");
    std::size_t k = 0;
    for (auto& l : layers) {
      for (auto& w : l.W) w = p[k++];
      for (auto& b : l.b) b = p[k++];
    }
  }

  bool operator==(const Network&) const = default;
};

/// He-initialized network for `inputs` features.
inline Network make_network(std::size_t inputs, int hidden_layers, int neurons, Rng& rng) {
  Network net;
  std::size_t in = inputs;
  for (int h = 0; h <= hidden_layers; ++h) {
    const std::size_t out = h < hidden_layers ? static_cast<std::size_t>(neurons) : 1;
    DenseLayer L;
    L.inputs = in;
    L.outputs = out;
    L.W.resize(out * in);
    L.b.assign(out, 0.0);
    const double sd = std::sqrt(2.0 / static_cast<double>(in));
    for (auto& w : L.W) w = sd * standard_normal(rng);
    net.layers.push_back(std::move(L));
    in = out;
  }
  return net;
}

/// Mean squared error of the network over rows `rows` of Z (standardized
/// inputs, row-major with `width` columns) against t, and its gradient with
/// respect to the flattened parameters.
inline double loss_and_gradient(const Network& net, std::span<const double> Z, std::size_t width,
                                std::span<const double> t, std::span<const std::size_t> rows,
                                std::vector<double>& grad) {
  const std::size_t L = net.layers.size();
  grad.assign(net.parameter_count(), 0.0);
  std::vector<std::size_t> offset(L);
  for (std::size_t li = 0, k = 0; li < L; ++li) {
    offset[li] = k;
    k += net.layers[li].W.size() + net.layers[li].b.size();
  }
  std::vector<std::vector<double>> act(L + 1);
  std::vector<double> delta, prev_delta;
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (std::size_t r : rows) {
    act[0].assign(Z.begin() + static_cast<std::ptrdiff_t>(r * width),
                  Z.begin() + static_cast<std::ptrdiff_t>((r + 1) * width));
    for (std::size_t li = 0; li < L; ++li) {
      const auto& layer = net.layers[li];
      auto& out = act[li + 1];
      out.assign(layer.outputs, 0.0);
      for (std::size_t o = 0; o < layer.outputs; ++o) {
        double a = layer.b[o];
        const double* w = layer.W.data() + o * layer.inputs;
        for (std::size_t i = 0; i < layer.inputs; ++i) a += w[i] * act[li][i];
        out[o] = (li + 1 < L && a < 0.0) ? 0.0 : a;
      }
    }
    const double err = act[L][0] - t[r];
    loss += err * err * inv_n;
    delta.assign(1, 2.0 * err * inv_n);
    for (std::size_t li = L; li-- > 0;) {
      const auto& layer = net.layers[li];
      double* gW = grad.data() + offset[li];
      double* gb = gW + layer.W.size();
      const auto& in = act[li];
      for (std::size_t o = 0; o < layer.outputs; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* g = gW + o * layer.inputs;
        for (std::size_t i = 0; i < layer.inputs; ++i) g[i] += d * in[i];
      }
      if (li == 0) break;
      prev_delta.assign(layer.inputs, 0.0);
      for (std::size_t o = 0; o < layer.outputs; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* w = layer.W.data() + o * layer.inputs;
        for (std::size_t i = 0; i < layer.inputs; ++i) prev_delta[i] += d * w[i];
      }
      // ReLU derivative of the previous layer's activation.
      for (std::size_t i = 0; i < layer.inputs; ++i)
        if (in[i] <= 0.0) prev_delta[i] = 0.0;
      delta.swap(prev_delta);
    }
  }
  return loss;
}

struct MlpModel {
  Network net;
  double y_mean = 0.0;
  double y_scale = 1.0;

  double predict_standardized(std::span<const double> z) const { return y_mean + y_scale * net.forward(z); }

  bool operator==(const MlpModel&) const = default;
};

struct MlpFit {
  Standardization standardization;
  MlpModel model;
  std::vector<double> train_loss;  // per epoch, standardized target units
  std::vector<double> validation_loss;
  int best_epoch = 0;
};

/// Targets are standardized internally; the best-validation weights are kept.
inline MlpFit fit_mlp(const FeatureMatrix& X, std::span<const double> y, const MlpParams& params,
                      std::uint64_t seed) {
  if (X.rows() != y.size()) throw ContractError("feature matrix and target differ in length");
  if (y.size() < 2) throw ContractError("MLP needs at least two rows");
  if (params.hidden_layers < 1 || params.hidden_layers > 3)
    throw ContractError("MLP hidden layers must be 1, 2 or 3");
  if (params.neurons < 1 || params.batch < 1 || params.max_epochs < 1)
    throw ContractError("MLP neurons, batch and epochs must be positive");

  MlpFit fit;
  fit.standardization = Standardization::fit(X);
  const std::size_t m = X.rows();
  const FeatureMatrix Zm = fit.standardization.apply(X);
  std::span<const double> Z(Zm.values());

  double mu = 0.0;
  for (double v : y) mu += v;
  mu /= static_cast<double>(m);
  double ss = 0.0;
  for (double v : y) ss += (v - mu) * (v - mu);
  double sd = std::sqrt(ss / static_cast<double>(m));
  if (!(sd > 0.0)) sd = 1.0;
  fit.model.y_mean = mu;
  fit.model.y_scale = sd;
  std::vector<double> t(m);
  for (std::size_t i = 0; i < m; ++i) t[i] = (y[i] - mu) / sd;

  Rng rng(derive_seed(seed, 0x3a9));
  auto order = permutation(m, rng);
  auto n_val = static_cast<std::size_t>(std::llround(params.validation_fraction * static_cast<double>(m)));
  if (m < 10) n_val = 0;
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(train.begin(), train.end());

  Network net = make_network(kNumFeatures, params.hidden_layers, params.neurons, rng);
  std::vector<double> theta = net.flatten();
  std::vector<double> m1(theta.size(), 0.0), m2(theta.size(), 0.0), grad;
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;

  auto dataset_loss = [&](std::span<const std::size_t> rows) {
    double l = 0.0;
    for (std::size_t r : rows) {
      const double e = net.forward(Z.subspan(r * kNumFeatures, kNumFeatures)) - t[r];
      l += e * e;
    }
    return l / static_cast<double>(rows.size());
  };

  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_theta = theta;
  int since_best = 0;
  const std::size_t batch = static_cast<std::size_t>(params.batch);
  for (int epoch = 1; epoch <= params.max_epochs; ++epoch) {
    shuffle(train, rng);
    for (std::size_t start = 0; start < train.size(); start += batch) {
      const std::size_t stop = std::min(train.size(), start + batch);
      std::span<const std::size_t> rows(train.data() + start, stop - start);
      loss_and_gradient(net, Z, kNumFeatures, t, rows, grad);
      b1t *= b1;
      b2t *= b2;
      for (std::size_t k = 0; k < theta.size(); ++k) {
        m1[k] = b1 * m1[k] + (1 - b1) * grad[k];
        m2[k] = b2 * m2[k] + (1 - b2) * grad[k] * grad[k];
        theta[k] -= params.learning_rate * (m1[k] / (1 - b1t)) / (std::sqrt(m2[k] / (1 - b2t)) + eps);
      }
      net.unflatten(theta);
    }
    const double tl = dataset_loss(train);
    const double vl = val.empty() ? tl : dataset_loss(val);
    if (!std::isfinite(tl) || !std::isfinite(vl))
      throw NumericError("MLP training diverged at epoch " + std::to_string(epoch));
    fit.train_loss.push_back(tl);
    fit.validation_loss.push_back(vl);
    if (vl < best) {
      best = vl;
      best_theta = theta;
      fit.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= params.patience) {
      break;
    }
  }
  net.unflatten(best_theta);
  fit.model.net = std::move(net);
  return fit;
}

}  // namespace pcm::learners
