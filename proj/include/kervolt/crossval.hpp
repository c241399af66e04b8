#pragma once

#include <cstdint>
#include <vector>

#include "kervolt/policy.hpp"

namespace kervolt {

struct CvGrid {
  std::vector<double> mu_values{1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  // Gaussian widths, in multiples of the median pairwise squared feature
  // distance; ignored for kernels without a width.
  std::vector<double> gamma_multipliers{0.25, 0.5, 1.0, 2.0, 4.0};
  int folds = 5;

  void validate() const;
};

// Shuffled partition of {0..T-1} into k sets whose sizes differ by at most 1.
std::vector<std::vector<int>> kfold_split(int t, int k, std::uint64_t seed);

// Mean held-out cost of the deployed pipeline: train on k-1 folds, then on
// each held-out scenario evaluate the policies, clip to the scenario limits,
// and score ||C q + y||². Solver failures on any fold give +inf.
double cv_score(const ScenarioWindow& window, const FeederTopology& topo,
                const Sensitivities& sens, const CostTransform& ct,
                const FeatureSelector& selector, const KernelChoice& kernel,
                double mu, const std::vector<std::vector<int>>& folds,
                const TrainOptions& options = {});

struct CvRow {
  double mu = 0.0;
  double gamma = 0.0;  // multiplier for Gaussian, literal width otherwise
  double score = 0.0;
};

struct CvSelection {
  double mu = 0.0;
  double gamma = 0.0;
  double score = 0.0;
  std::vector<CvRow> table;
};

// Scores the whole grid and returns the argmin; ties break toward larger mu,
// then larger gamma. For non-Gaussian kernels only the mu axis is searched.
CvSelection grid_search(const ScenarioWindow& window, const FeederTopology& topo,
                        const Sensitivities& sens, const CostTransform& ct,
                        const FeatureSelector& selector, const KernelSpec& base,
                        const CvGrid& grid, std::uint64_t seed, int threads = 1,
                        const TrainOptions& options = {});

}  // namespace kervolt
