// A trained model of either kind, plus the flights it was trained on.
#pragma once

#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pcm/learners.hpp"
#include "pcm/stacking.hpp"

namespace pcm {

class Model {
 public:
  using Impl = std::variant<learners::TrainedRegressor, stacking::StackedModel>;

  Model() = default;
  Model(Impl impl, std::vector<std::string> training_flights = {})
      : impl_(std::move(impl)), training_flights_(std::move(training_flights)) {}

  const Impl& impl() const { return impl_; }
  bool is_stacked() const { return impl_.index() == 1; }
  const std::vector<std::string>& training_flights() const { return training_flights_; }

  TargetVector predict(const FeatureMatrix& X) const {
    return std::visit([&](const auto& m) { return m.predict(X); }, impl_);
  }

  std::string name() const {
    return is_stacked() ? std::string("stacked")
                        : std::string(learners::to_string(std::get<0>(impl_).variant()));
  }

  nlohmann::json to_json() const {
    auto j = std::visit(
        [](const auto& m) {
          if constexpr (std::is_same_v<std::decay_t<decltype(m)>, learners::TrainedRegressor>)
            return learners::to_json(m);
          else
            return stacking::to_json(m);
        },
        impl_);
    j["training_flights"] = training_flights_;
    return j;
  }

  static Model from_json(const nlohmann::json& j) {
    const std::string kind = j.value("kind", "");
    auto flights = j.value("training_flights", std::vector<std::string>{});
    if (kind == "regressor") return Model(learners::regressor_from_json(j), std::move(flights));
    if (kind == "stacked") return Model(stacking::stacked_from_json(j), std::move(flights));
    throw DataError("model document has unknown kind '" + kind + "'");
  }

 private:
  Impl impl_;
  std::vector<std::string> training_flights_;
};

}  // namespace pcm
