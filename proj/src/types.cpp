#include "sacl/types.hpp"

namespace sacl {

RobotId observer_of(const Measurement& m) {
  return std::visit([](const auto& v) { return v.observer; }, m);
}

std::optional<RobotId> landmark_of(const Measurement& m) {
  if (const auto* rel = std::get_if<RelativeMeasurement>(&m)) return rel->landmark;
  return std::nullopt;
}

}  // namespace sacl
