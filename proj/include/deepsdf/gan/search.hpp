#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/seed.hpp"
#include "deepsdf/data/csv.hpp"
#include "deepsdf/data/panel.hpp"
#include "deepsdf/eval/metrics.hpp"
#include "deepsdf/gan/model.hpp"
#include "deepsdf/gan/train.hpp"

namespace deepsdf::gan {

/// Candidate sets for every tuned hyperparameter.
struct GanGrid {
  std::vector<std::size_t> hidden_layers = {2, 3, 4};
  std::vector<std::size_t> hidden_units = {64};
  std::vector<std::size_t> sdf_states = {4, 8};
  std::vector<std::size_t> cond_states = {16, 32};
  std::vector<std::size_t> cond_layers = {0, 1};
  std::vector<std::size_t> cond_moments = {4, 8, 16, 32};
  std::vector<double> lr = {1e-3, 5e-4, 2e-4, 1e-4};
  std::vector<double> keep_prob = {0.95};

  std::size_t size() const {
    return hidden_layers.size() * hidden_units.size() * sdf_states.size() * cond_states.size() * cond_layers.size() *
           cond_moments.size() * lr.size() * keep_prob.size();
  }

  /// Every combination, with schedule fields copied from `base`.
  std::vector<GanHyperParams> enumerate(const GanHyperParams& base = {}) const {
    std::vector<GanHyperParams> out;
    out.reserve(size());
    for (auto hl : hidden_layers)
      for (auto hu : hidden_units)
        for (auto smv : sdf_states)
          for (auto csmv : cond_states)
            for (auto chl : cond_layers)
              for (auto chu : cond_moments)
                for (auto rate : lr)
                  for (auto kp : keep_prob) {
                    GanHyperParams hp = base;
                    hp.hidden_layers = hl;
                    hp.hidden_units = hu;
                    hp.sdf_states = smv;
                    hp.cond_states = csmv;
                    hp.cond_layers = chl;
                    hp.cond_moments = chu;
                    hp.lr = rate;
                    hp.keep_prob = kp;
                    out.push_back(hp);
                  }
    return out;
  }
};

/// Runs `job(k)` for k in [0, count) on up to `workers` threads.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t k = 0; k < count; ++k) job(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t k = next.fetch_add(1);
        if (k >= count) return;
        try {
          job(k);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next.store(count);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Member k of an ensemble trains with this seed.
inline std::uint64_t member_seed(std::uint64_t base, std::size_t k) { return mix_seed(base, 1000 + k); }

using SdfTrainer = std::function<SdfModel(const data::Splits&, const GanHyperParams&)>;

inline SdfModel default_trainer(const data::Splits& splits, const GanHyperParams& hp) {
  return train_gan(splits, hp).sdf;
}

inline EnsembleModel train_ensemble(const data::Splits& splits, const GanHyperParams& hp, std::size_t workers = 1,
                                    const SdfTrainer& trainer = default_trainer) {
  if (hp.ensemble_size < 1) throw UsageError("ensemble size must be >= 1");
  std::vector<SdfModel> members(hp.ensemble_size);
  parallel_for(hp.ensemble_size, workers, [&](std::size_t k) {
    GanHyperParams m = hp;
    m.seed = member_seed(hp.seed, k);
    members[k] = trainer(splits, m);
  });
  return EnsembleModel(std::move(members));
}

/// Train and validation Sharpe ratios of a fitted model's SDF factor.
struct SplitSharpe {
  double train = 0.0;
  double valid = 0.0;
};

using EnsembleScorer = std::function<SplitSharpe(const EnsembleModel&, const data::Splits&)>;

inline double sharpe_or_lowest(const Vector& f) {
  try {
    return eval::sharpe(f);
  } catch (const NumericalError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

inline SplitSharpe default_scorer(const EnsembleModel& model, const data::Splits& splits) {
  return {sharpe_or_lowest(model.factor(splits.train).f), sharpe_or_lowest(model.factor(splits.valid).f)};
}

struct SearchLogEntry {
  std::string stage;  // "grid" or "ensemble"
  std::size_t config_id = 0;
  GanHyperParams hp;
  SplitSharpe sr;
};

struct SearchBudget {
  std::size_t max_trainings = std::numeric_limits<std::size_t>::max();
  double max_seconds = std::numeric_limits<double>::infinity();
};

struct SearchOptions {
  std::size_t top_k = 4;
  std::size_t workers = 1;
  SearchBudget budget;
  SdfTrainer trainer = default_trainer;
  EnsembleScorer scorer = default_scorer;
};

struct SearchResult {
  EnsembleModel model;
  std::size_t config_id = 0;
  std::vector<SearchLogEntry> log;
};

/// Raised when the budget runs out; carries every completed log entry.
class SearchBudgetError : public Error {
 public:
  SearchBudgetError(const std::string& msg, std::vector<SearchLogEntry> partial)
      : Error(ErrorKind::numerical, msg), log(std::move(partial)) {}
  std::vector<SearchLogEntry> log;
};

inline void write_search_log(const std::string& path, const std::vector<SearchLogEntry>& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "stage,config_id,HL,HU,SMV,CSMV,CHL,CHU,LR,DR,train_sr,valid_sr\n";
  for (const auto& e : log) {
    const auto& h = e.hp;
    out << e.stage << ',' << e.config_id << ',' << h.hidden_layers << ',' << h.hidden_units << ',' << h.sdf_states << ','
        << h.cond_states << ',' << h.cond_layers << ',' << h.cond_moments << ',' << data::fmt(h.lr) << ','
        << data::fmt(h.keep_prob) << ',' << data::fmt(e.sr.train) << ',' << data::fmt(e.sr.valid) << '\n';
  }
}

/**
 * Grid stage: one model per configuration, ranked by validation SR.
 * Ensemble stage: the top_k configurations get ensemble_size seeds each;
 * the ensemble with the best validation SR is returned.
 */
inline SearchResult hyperparameter_search(const data::Splits& splits, const std::vector<GanHyperParams>& grid,
                                          const SearchOptions& options = {}) {
  if (grid.empty()) throw UsageError("hyperparameter search: empty grid");
  if (options.top_k < 1) throw UsageError("hyperparameter search: top_k must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  std::mutex log_mutex;
  std::vector<SearchLogEntry> log;
  std::atomic<std::size_t> trainings{0};
  std::atomic<bool> exhausted{false};

  auto reserve_training = [&]() {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > options.budget.max_seconds || trainings.fetch_add(1) >= options.budget.max_trainings) {
      exhausted = true;
      return false;
    }
    return true;
  };
  auto fail = [&](const std::string& stage) {
    std::lock_guard lock(log_mutex);
    throw SearchBudgetError("hyperparameter search budget exhausted during " + stage + " stage after " +
                                std::to_string(log.size()) + " logged configurations",
                            log);
  };

  std::vector<SplitSharpe> grid_scores(grid.size());
  parallel_for(grid.size(), options.workers, [&](std::size_t k) {
    if (exhausted || !reserve_training()) return;
    GanHyperParams hp = grid[k];
    hp.ensemble_size = 1;
    EnsembleModel single({options.trainer(splits, hp)});
    grid_scores[k] = options.scorer(single, splits);
    std::lock_guard lock(log_mutex);
    log.push_back({"grid", k, grid[k], grid_scores[k]});
  });
  if (exhausted) fail("grid");

  std::vector<std::size_t> order(grid.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return grid_scores[a].valid > grid_scores[b].valid; });
  order.resize(std::min(options.top_k, order.size()));

  SearchResult result;
  double best = -std::numeric_limits<double>::infinity();
  bool have = false;
  for (std::size_t id : order) {
    const GanHyperParams& hp = grid[id];
    for (std::size_t m = 0; m < std::max<std::size_t>(1, hp.ensemble_size); ++m) {
      if (!reserve_training()) fail("ensemble");
    }
    EnsembleModel ens = train_ensemble(splits, hp, options.workers, options.trainer);
    SplitSharpe s = options.scorer(ens, splits);
    {
      std::lock_guard lock(log_mutex);
      log.push_back({"ensemble", id, hp, s});
    }
    if (!have || s.valid > best) {
      have = true;
      best = s.valid;
      result.model = std::move(ens);
      result.config_id = id;
    }
  }
  std::stable_sort(log.begin(), log.end(), [](const SearchLogEntry& a, const SearchLogEntry& b) {
    return a.stage != b.stage ? a.stage == "grid" : a.config_id < b.config_id;
  });
  result.log = std::move(log);
  return result;
}

}  // namespace deepsdf::gan
