// Generate a small synthetic fleet, fit the stacked model and report metrics.
#include <iostream>

#include "pcm/evaluate.hpp"
#include "pcm/stacking.hpp"
#include "pcm/synth.hpp"

int main() {
  auto cfg = pcm::synth::preset(pcm::Aircraft::matrice100);
  cfg.n_flights = 12;
  cfg.seed = 7;
  const pcm::Dataset data = pcm::synth::to_dataset(pcm::synth::generate_fleet(cfg));

  const auto parts = pcm::split(data, {0.7, 7, pcm::SplitMode::by_sample});
  const auto bases = pcm::stacking::default_base_configs(7);
  const auto model = pcm::stacking::fit_stacked(parts.train.X, parts.train.y, bases, 5, 7);

  const auto pred = model.predict(parts.test.X);
  std::cout << "samples " << data.size() << "\n"
            << "test R2   " << pcm::evaluate::r2(parts.test.y, pred) << "\n"
            << "test MAPE " << pcm::evaluate::mape(parts.test.y, pred) << "\n"
            << "test MSE  " << pcm::evaluate::mse(parts.test.y, pred) << " W^2\n";
}
