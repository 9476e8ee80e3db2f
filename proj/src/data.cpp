#include "trajcluster/data.hpp"

#include <string>

namespace trajcluster {

std::vector<double> canonical_empty_window(const FeatureLayout& layout) {
  std::vector<double> w(static_cast<std::size_t>(layout.width()), 0.0);
  for (int j = 0; j < layout.n_continuous; ++j)
    w[static_cast<std::size_t>(layout.n_binary + j)] = kMissingContinuous;
  return w;
}

void Cohort::validate() const {
  if (!outcomes.empty() && outcomes.size() != trajectories.size())
    throw std::invalid_argument("Cohort: outcomes misaligned (" + std::to_string(outcomes.size()) +
                                " outcomes for " + std::to_string(trajectories.size()) +
                                " trajectories)");
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const TrajectoryTensor& t = trajectories[i];
    if (t.windows.size() != t.mask.size())
      throw std::invalid_argument("Cohort: trajectory " + std::to_string(i) +
                                  " mask length mismatch");
    for (const auto& w : t.windows)
      if (static_cast<int>(w.size()) != layout.width())
        throw std::invalid_argument("Cohort: trajectory " + std::to_string(i) +
                                    " window width != layout width");
  }
}

}  // namespace trajcluster
