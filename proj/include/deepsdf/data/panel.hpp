#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/month.hpp"
#include "deepsdf/core/types.hpp"

namespace deepsdf::data {

/**
 * Backing storage of an unbalanced panel. Observations are stored month by
 * month, sorted by asset id inside each month; month t owns the observation
 * rows [month_offset[t], month_offset[t + 1]).
 *
 * Row n pairs the characteristics known at month t with the excess return
 * realized over the following month.
 */
struct PanelStorage {
  std::vector<Month> months;
  std::vector<std::size_t> month_offset;  // months.size() + 1 entries
  std::vector<std::string> asset_ids;     // dense index -> external id
  std::vector<std::size_t> asset;         // per observation, dense asset index
  Vector returns;                         // per observation
  Matrix chars;                           // observations x p
  Matrix macro;                           // months x q (q may be 0)
  std::optional<Vector> market_cap;       // per observation
  std::vector<std::string> char_names;
  std::vector<std::string> macro_names;

  std::size_t num_obs() const { return static_cast<std::size_t>(returns.size()); }

  void validate() const {
    if (month_offset.size() != months.size() + 1) throw DataError("panel: month offsets malformed");
    if (month_offset.front() != 0 || month_offset.back() != num_obs()) throw DataError("panel: offsets do not cover observations");
    for (std::size_t t = 0; t < months.size(); ++t) {
      if (month_offset[t + 1] <= month_offset[t]) throw DataError("panel: month " + months[t].str() + " has no assets");
      if (t > 0 && !(months[t - 1] < months[t])) throw DataError("panel: months not strictly increasing");
    }
    if (asset.size() != num_obs() || static_cast<std::size_t>(chars.rows()) != num_obs()) {
      throw DataError("panel: per-observation arrays disagree in length");
    }
    if (static_cast<std::size_t>(chars.cols()) != char_names.size()) throw DataError("panel: characteristic names");
    if (static_cast<std::size_t>(macro.rows()) != months.size() && macro.cols() > 0) throw DataError("panel: macro rows");
    if (static_cast<std::size_t>(macro.cols()) != macro_names.size()) throw DataError("panel: macro names");
    if (!returns.allFinite()) throw DataError("panel: non-finite excess return");
    if (!chars.allFinite()) throw DataError("panel: non-finite characteristic");
    if (market_cap && static_cast<std::size_t>(market_cap->size()) != num_obs()) throw DataError("panel: market cap length");
  }
};

/**
 * Read-only view of a contiguous month range of a panel. Views share the
 * underlying storage; the full macro history before the range stays
 * reachable for recurrent encoders.
 */
class PanelDataset {
 public:
  PanelDataset() = default;
  explicit PanelDataset(std::shared_ptr<const PanelStorage> data)
      : data_(std::move(data)), begin_(0), end_(data_->months.size()) {}
  PanelDataset(std::shared_ptr<const PanelStorage> data, std::size_t begin, std::size_t end)
      : data_(std::move(data)), begin_(begin), end_(end) {
    if (begin_ > end_ || end_ > data_->months.size()) throw DataError("panel view out of range");
  }

  const PanelStorage& storage() const { return *data_; }
  const std::shared_ptr<const PanelStorage>& storage_ptr() const { return data_; }

  std::size_t num_months() const { return end_ - begin_; }
  bool empty() const { return begin_ == end_; }
  std::size_t first_month_index() const { return begin_; }  // global month index
  std::size_t end_month_index() const { return end_; }
  Month month(std::size_t t) const { return data_->months[begin_ + t]; }

  // Observation rows of local month t, in global row numbering.
  std::size_t obs_begin(std::size_t t) const { return data_->month_offset[begin_ + t]; }
  std::size_t obs_end(std::size_t t) const { return data_->month_offset[begin_ + t + 1]; }
  std::size_t assets_in_month(std::size_t t) const { return obs_end(t) - obs_begin(t); }

  std::size_t first_obs() const { return data_->month_offset[begin_]; }
  std::size_t end_obs() const { return data_->month_offset[end_]; }
  std::size_t num_obs() const { return end_obs() - first_obs(); }

  std::size_t num_chars() const { return static_cast<std::size_t>(data_->chars.cols()); }
  std::size_t num_macro() const { return static_cast<std::size_t>(data_->macro.cols()); }
  std::size_t num_assets_total() const { return data_->asset_ids.size(); }

  /// Returns of the view, one per observation (local row order).
  auto returns() const {
    return data_->returns.segment(static_cast<Eigen::Index>(first_obs()), static_cast<Eigen::Index>(num_obs()));
  }
  auto chars() const {
    return data_->chars.middleRows(static_cast<Eigen::Index>(first_obs()), static_cast<Eigen::Index>(num_obs()));
  }
  /// Macro rows from the start of the panel through the last month of the view.
  auto macro_history() const {
    return data_->macro.topRows(static_cast<Eigen::Index>(data_->macro.cols() > 0 ? end_ : 0));
  }

  PanelDataset subview(std::size_t local_begin, std::size_t local_end) const {
    return PanelDataset(data_, begin_ + local_begin, begin_ + local_end);
  }

 private:
  std::shared_ptr<const PanelStorage> data_;
  std::size_t begin_ = 0;
  std::size_t end_ = 0;
};

/// Per-view asset bookkeeping: dense local asset per observation and T_i.
struct AssetIndex {
  std::vector<std::size_t> local;  // per observation of the view
  std::vector<std::size_t> count;  // T_i per local asset
  std::vector<std::size_t> global; // local -> storage asset index
  std::vector<std::size_t> month_of_obs;

  explicit AssetIndex(const PanelDataset& view) {
    const auto& st = view.storage();
    std::vector<std::size_t> map(view.num_assets_total(), static_cast<std::size_t>(-1));
    local.resize(view.num_obs());
    month_of_obs.resize(view.num_obs());
    const std::size_t base = view.first_obs();
    for (std::size_t t = 0; t < view.num_months(); ++t) {
      for (std::size_t n = view.obs_begin(t); n < view.obs_end(t); ++n) {
        std::size_t a = st.asset[n];
        if (map[a] == static_cast<std::size_t>(-1)) {
          map[a] = global.size();
          global.push_back(a);
          count.push_back(0);
        }
        local[n - base] = map[a];
        month_of_obs[n - base] = t;
        ++count[map[a]];
      }
    }
  }
  std::size_t num_assets() const { return global.size(); }
};

/// Month range specification, inclusive on both ends.
struct MonthRange {
  Month first;
  Month last;
};

struct SplitSpec {
  MonthRange train;
  MonthRange valid;
  MonthRange test;

  void validate() const {
    for (const MonthRange* r : {&train, &valid, &test}) {
      if (r->last < r->first) throw UsageError("split range " + r->first.str() + ".." + r->last.str() + " is empty");
    }
    if (!(train.last < valid.first) || !(valid.last < test.first)) {
      throw UsageError("split ranges overlap or are out of order");
    }
  }

  /// Consecutive ranges of the given lengths starting at the panel's first month.
  static SplitSpec by_length(const PanelDataset& panel, std::size_t n_train, std::size_t n_valid, std::size_t n_test) {
    if (n_train == 0 || n_valid == 0 || n_test == 0) throw UsageError("split lengths must be positive");
    if (n_train + n_valid + n_test > panel.num_months()) throw UsageError("split lengths exceed panel length");
    auto at = [&](std::size_t k) { return panel.month(k); };
    return SplitSpec{{at(0), at(n_train - 1)},
                     {at(n_train), at(n_train + n_valid - 1)},
                     {at(n_train + n_valid), at(n_train + n_valid + n_test - 1)}};
  }
};

struct Splits {
  PanelDataset train;
  PanelDataset valid;
  PanelDataset test;

  const PanelDataset& get(std::size_t k) const { return k == 0 ? train : (k == 1 ? valid : test); }
};

inline const char* split_name(std::size_t k) { return k == 0 ? "train" : (k == 1 ? "valid" : "test"); }

inline PanelDataset view_range(const PanelDataset& panel, const MonthRange& r) {
  std::size_t lo = panel.num_months();
  std::size_t hi = 0;
  for (std::size_t t = 0; t < panel.num_months(); ++t) {
    if (r.first <= panel.month(t) && panel.month(t) <= r.last) {
      lo = std::min(lo, t);
      hi = std::max(hi, t + 1);
    }
  }
  if (lo >= hi) throw UsageError("split range " + r.first.str() + ".." + r.last.str() + " has no panel months");
  return panel.subview(lo, hi);
}

inline Splits split(const PanelDataset& panel, const SplitSpec& spec) {
  spec.validate();
  return Splits{view_range(panel, spec.train), view_range(panel, spec.valid), view_range(panel, spec.test)};
}

}  // namespace deepsdf::data
