#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/types.hpp"
#include "deepsdf/data/panel.hpp"
#include "deepsdf/gan/loss.hpp"
#include "deepsdf/gan/panel_network.hpp"

namespace deepsdf::gan {

struct GanHyperParams {
  std::size_t hidden_layers = 2;  // HL
  std::size_t hidden_units = 64;  // HU
  std::size_t sdf_states = 4;     // SMV
  std::size_t cond_states = 32;   // CSMV
  std::size_t cond_layers = 0;    // CHL
  std::size_t cond_moments = 8;   // CHU
  double lr = 1e-3;               // LR
  double keep_prob = 0.95;        // DR, read as keep probability
  std::size_t epochs_unconditional = 256;
  std::size_t epochs_moment = 256;
  std::size_t epochs_conditional = 256;
  std::size_t ensemble_size = 9;
  std::uint64_t seed = 1;
  bool use_macro = true;

  /// Equal in everything that defines the architecture and training schedule.
  bool same_configuration(const GanHyperParams& o) const {
    return hidden_layers == o.hidden_layers && hidden_units == o.hidden_units && sdf_states == o.sdf_states &&
           cond_states == o.cond_states && cond_layers == o.cond_layers && cond_moments == o.cond_moments &&
           lr == o.lr && keep_prob == o.keep_prob && epochs_unconditional == o.epochs_unconditional &&
           epochs_moment == o.epochs_moment && epochs_conditional == o.epochs_conditional && use_macro == o.use_macro;
  }

  std::string describe() const {
    std::ostringstream s;
    s << "HL=" << hidden_layers << " HU=" << hidden_units << " SMV=" << sdf_states << " CSMV=" << cond_states
      << " CHL=" << cond_layers << " CHU=" << cond_moments << " LR=" << lr << " DR=" << keep_prob;
    return s.str();
  }

  PanelNetworkSpec sdf_spec(const data::PanelDataset& panel) const {
    return {panel.num_chars(), use_macro ? panel.num_macro() : 0, std::vector<std::size_t>(hidden_layers, hidden_units),
            sdf_states, 1, keep_prob};
  }
  PanelNetworkSpec cond_spec(const data::PanelDataset& panel) const {
    return {panel.num_chars(), use_macro ? panel.num_macro() : 0, std::vector<std::size_t>(cond_layers, cond_moments),
            cond_states, cond_moments, keep_prob};
  }
};

/// Multiplies each observation by 1/N_t of its month.
inline Vector scale_by_breadth(const data::PanelDataset& view, const Eigen::Ref<const Vector>& raw) {
  Vector out = raw;
  const std::size_t base = view.first_obs();
  for (std::size_t t = 0; t < view.num_months(); ++t) {
    const auto lo = static_cast<Eigen::Index>(view.obs_begin(t) - base);
    const auto len = static_cast<Eigen::Index>(view.assets_in_month(t));
    out.segment(lo, len) /= static_cast<double>(len);
  }
  return out;
}

/// Rescales weights so that every month has ||omega_t||_1 = 1.
inline Vector l1_normalize(const data::PanelDataset& view, const Vector& omega) {
  Vector out = omega;
  const std::size_t base = view.first_obs();
  for (std::size_t t = 0; t < view.num_months(); ++t) {
    const auto lo = static_cast<Eigen::Index>(view.obs_begin(t) - base);
    const auto len = static_cast<Eigen::Index>(view.assets_in_month(t));
    const double norm = out.segment(lo, len).lpNorm<1>();
    if (!(norm > 0.0)) throw NumericalError("l1 normalization of zero weights in " + view.month(t).str());
    out.segment(lo, len) /= norm;
  }
  return out;
}

struct SdfSeries {
  Vector f;  // F_{t+1} per month
  Vector m;  // M_{t+1} = 1 - F_{t+1}
};

inline SdfSeries factor_from_weights(const data::PanelDataset& view, const Vector& omega, bool normalize) {
  SdfSeries s;
  s.f = sdf_factor_series(view, normalize ? l1_normalize(view, omega) : omega);
  s.m = Vector::Ones(s.f.size()) - s.f;
  return s;
}

/// Trained SDF: weight network with its own macro LSTM. omega = FFN([I; h]) / N_t.
class SdfModel {
 public:
  SdfModel() = default;
  SdfModel(GanHyperParams hp, PanelNetwork net) : hp_(std::move(hp)), net_(std::move(net)) {}

  const GanHyperParams& hyper() const { return hp_; }
  const PanelNetwork& network() const { return net_; }
  PanelNetwork& network() { return net_; }

  Vector weights(const data::PanelDataset& view) const {
    Matrix out = net_.forward(view, Mode::eval);
    Vector w = scale_by_breadth(view, out.col(0));
    if (!w.allFinite()) throw NumericalError("sdf weights: non-finite output");
    return w;
  }
  SdfSeries factor(const data::PanelDataset& view, bool normalize = false) const {
    return factor_from_weights(view, weights(view), normalize);
  }
  Matrix states(const data::PanelDataset& view) const { return net_.states(view); }

 private:
  GanHyperParams hp_;
  PanelNetwork net_;
};

/// Adversarial instrument network g(I_t, I_{t,i}) with its own macro LSTM.
class ConditionalModel {
 public:
  ConditionalModel() = default;
  explicit ConditionalModel(PanelNetwork net) : net_(std::move(net)) {}

  const PanelNetwork& network() const { return net_; }
  PanelNetwork& network() { return net_; }
  Matrix moments(const data::PanelDataset& view) const { return net_.forward(view, Mode::eval); }

 private:
  PanelNetwork net_;
};

/// Average of identically configured members; omega_hat = mean of member omegas.
class EnsembleModel {
 public:
  EnsembleModel() = default;
  explicit EnsembleModel(std::vector<SdfModel> members) : members_(std::move(members)) {
    if (members_.empty()) throw UsageError("ensemble needs at least one member");
    for (const auto& m : members_) {
      if (!m.hyper().same_configuration(members_.front().hyper())) {
        throw UsageError("ensemble members have mismatched hyperparameters");
      }
    }
  }

  const std::vector<SdfModel>& members() const { return members_; }
  const GanHyperParams& hyper() const { return members_.front().hyper(); }

  Vector weights(const data::PanelDataset& view) const {
    Vector sum = members_.front().weights(view);
    for (std::size_t k = 1; k < members_.size(); ++k) sum += members_[k].weights(view);
    return sum / static_cast<double>(members_.size());
  }
  SdfSeries factor(const data::PanelDataset& view, bool normalize = false) const {
    return factor_from_weights(view, weights(view), normalize);
  }

 private:
  std::vector<SdfModel> members_;
};

}  // namespace deepsdf::gan
