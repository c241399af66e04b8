#include "kervolt/crossval.hpp"

#include <algorithm>
#include <atomic>
#include <future>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "kervolt/log.hpp"
#include "kervolt/rng.hpp"

namespace kervolt {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void CvGrid::validate() const {
  if (mu_values.empty() || gamma_multipliers.empty())
    throw std::invalid_argument("cross-validation grids must be non-empty");
  for (double mu : mu_values)
    if (mu <= 0.0) throw std::invalid_argument("mu grid values must be positive");
  for (double g : gamma_multipliers)
    if (g <= 0.0) throw std::invalid_argument("gamma multipliers must be positive");
  if (folds < 2) throw std::invalid_argument("need at least 2 folds");
}

std::vector<std::vector<int>> kfold_split(int t, int k, std::uint64_t seed) {
  if (k < 1 || k > t)
    throw std::invalid_argument("fold count must lie in [1, T]");
  std::vector<int> order(t);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "kfold"));
  for (int i = t - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(0, i)]);
  std::vector<std::vector<int>> folds(k);
  const int base = t / k;
  const int extra = t % k;
  int cursor = 0;
  for (int f = 0; f < k; ++f) {
    const int size = base + (f < extra ? 1 : 0);
    folds[f].assign(order.begin() + cursor, order.begin() + cursor + size);
    std::sort(folds[f].begin(), folds[f].end());
    cursor += size;
  }
  return folds;
}

double cv_score(const ScenarioWindow& window, const FeederTopology& topo,
                const Sensitivities& sens, const CostTransform& ct,
                const FeatureSelector& selector, const KernelChoice& kernel,
                double mu, const std::vector<std::vector<int>>& folds,
                const TrainOptions& options) {
  const int n = topo.num_load_buses();
  double fold_sum = 0.0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<int> train_idx;
    for (std::size_t g = 0; g < folds.size(); ++g)
      if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
    std::sort(train_idx.begin(), train_idx.end());

    PolicySet set;
    try {
      set = train_policies(window_subset(window, train_idx), topo, sens, ct,
                           selector, kernel, mu, options);
    } catch (const std::exception& e) {
      log::warn(std::string("cross-validation fold failed: ") + e.what());
      return kInf;
    }

    double held_out_sum = 0.0;
    for (int t : folds[f]) {
      const ScenarioRecord& rec = window.records[t];
      const Eigen::VectorXd y = compute_y(rec.p_g, rec.p_c, rec.q_c, ct, sens);
      Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
      for (const InverterPolicy& pol : set.policies) {
        const double qbar = window.qbar(t, pol.bus - 1);
        const Eigen::VectorXd z =
            feature_vector(rec, qbar, pol.bus, selector, topo);
        q[pol.bus - 1] = project_to_limits(pol.evaluate(z), qbar);
      }
      held_out_sum += (ct.C * q + y).squaredNorm();
    }
    fold_sum += held_out_sum / static_cast<double>(folds[f].size());
  }
  return fold_sum / static_cast<double>(folds.size());
}

CvSelection grid_search(const ScenarioWindow& window, const FeederTopology& topo,
                        const Sensitivities& sens, const CostTransform& ct,
                        const FeatureSelector& selector, const KernelSpec& base,
                        const CvGrid& grid, std::uint64_t seed, int threads,
                        const TrainOptions& options) {
  grid.validate();
  if (grid.folds > window.size())
    throw std::invalid_argument("more folds than scenarios in the window");
  const auto folds = kfold_split(window.size(), grid.folds, seed);

  struct Point {
    double mu;
    double gamma;
  };
  std::vector<Point> points;
  if (base.kind == KernelKind::Gaussian) {
    for (double mu : grid.mu_values)
      for (double g : grid.gamma_multipliers) points.push_back({mu, g});
  } else {
    for (double mu : grid.mu_values) points.push_back({mu, base.gamma});
  }

  const auto score_point = [&](const Point& pt) {
    KernelChoice choice;
    choice.spec = base;
    if (base.kind == KernelKind::Gaussian) {
      choice.spec.gamma = pt.gamma;
      choice.gamma_is_multiplier = true;
    }
    return cv_score(window, topo, sens, ct, selector, choice, pt.mu, folds,
                    options);
  };

  std::vector<double> scores(points.size(), kInf);
  if (threads <= 1 || points.size() <= 1) {
    for (std::size_t i = 0; i < points.size(); ++i) scores[i] = score_point(points[i]);
  } else {
    std::atomic<std::size_t> next{0};
    const int workers = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(threads), points.size()));
    std::vector<std::future<void>> tasks;
    for (int w = 0; w < workers; ++w)
      tasks.push_back(std::async(std::launch::async, [&]() {
        for (std::size_t i = next.fetch_add(1); i < points.size();
             i = next.fetch_add(1))
          scores[i] = score_point(points[i]);
      }));
    for (auto& task : tasks) task.get();
  }

  CvSelection selection;
  int best = -1;
  for (std::size_t i = 0; i < points.size(); ++i) {
    selection.table.push_back({points[i].mu, points[i].gamma, scores[i]});
    if (scores[i] == kInf) continue;
    // Ties prefer the smoother policy: larger mu, then larger gamma.
    if (best < 0 || scores[i] < scores[best] ||
        (scores[i] == scores[best] &&
         (points[i].mu > points[best].mu ||
          (points[i].mu == points[best].mu && points[i].gamma > points[best].gamma))))
      best = static_cast<int>(i);
  }
  if (best < 0)
    throw std::runtime_error("every cross-validation grid point failed to solve");
  selection.mu = points[best].mu;
  selection.gamma = points[best].gamma;
  selection.score = scores[best];
  return selection;
}

}  // namespace kervolt
