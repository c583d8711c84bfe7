#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/types.hpp"
#include "deepsdf/netcore/params.hpp"

namespace deepsdf::netcore {

struct LstmSpec {
  std::size_t input_dim = 1;
  std::size_t state_dim = 1;

  void validate() const {
    if (input_dim < 1 || state_dim < 1) throw DimensionError("lstm dims must be >= 1");
  }
  bool operator==(const LstmSpec&) const = default;
};

struct LstmTape {
  bool recorded = false;
  Matrix input;  // T x in
  Matrix gates;  // T x 4H: candidate, input, forget, output (post-activation)
  Matrix cell;   // T x H
  Matrix state;  // T x H
};

namespace detail {
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
}  // namespace detail

/**
 * LSTM cell with candidate/input/forget/output gates.
 *
 * Parameters: "Wx" (4H x in), "Wh" (4H x H), "b" (1 x 4H). Gate rows are
 * stacked in the order candidate, input, forget, output. Sequences start
 * from h_0 = c_0 = 0, so state t depends only on inputs 1..t.
 */
class Lstm {
 public:
  Lstm() = default;
  explicit Lstm(LstmSpec spec) : spec_(spec) { spec_.validate(); }

  const LstmSpec& spec() const { return spec_; }
  Eigen::Index hidden() const { return static_cast<Eigen::Index>(spec_.state_dim); }

  NetworkParams zero_params() const {
    NetworkParams p;
    p.add("Wx", 4 * spec_.state_dim, spec_.input_dim);
    p.add("Wh", 4 * spec_.state_dim, spec_.state_dim);
    p.add("b", 1, 4 * spec_.state_dim);
    return p;
  }

  NetworkParams init_params(std::uint64_t seed) const {
    NetworkParams p = zero_params();
    Rng rng(seed);
    for (const char* name : {"Wx", "Wh"}) {
      auto w = p.matrix(name);
      std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(w.cols())));
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    }
    return p;
  }

  /// One step; returns (h_t, c_t).
  std::pair<Vector, Vector> step(const NetworkParams& params, const Vector& x, const Vector& h_prev,
                                 const Vector& c_prev) const {
    check_layout(params);
    if (!params.all_finite()) throw NumericalError("lstm: non-finite parameter detected");
    if (static_cast<std::size_t>(x.size()) != spec_.input_dim) throw DimensionError("lstm input");
    if (h_prev.size() != hidden() || c_prev.size() != hidden()) throw DimensionError("lstm state");
    Vector gates;
    Vector c;
    Vector h;
    cell_step(params, x, h_prev, c_prev, gates, c, h);
    return {std::move(h), std::move(c)};
  }

  /// Runs the whole sequence (one row per time step), returns T x H states.
  Matrix encode(const NetworkParams& params, const Matrix& xs, LstmTape* tape = nullptr) const {
    check_layout(params);
    if (xs.rows() == 0) throw DataError("lstm_encode: empty sequence");
    if (static_cast<std::size_t>(xs.cols()) != spec_.input_dim) {
      throw DimensionError("lstm expects " + std::to_string(spec_.input_dim) + " inputs, got " +
                           std::to_string(xs.cols()));
    }
    const Eigen::Index T = xs.rows();
    const Eigen::Index H = hidden();
    Matrix states(T, H);
    Matrix gates_all;
    Matrix cells;
    if (tape) {
      gates_all.resize(T, 4 * H);
      cells.resize(T, H);
    }
    Vector h = Vector::Zero(H);
    Vector c = Vector::Zero(H);
    Vector gates;
    Vector c_new;
    Vector h_new;
    for (Eigen::Index t = 0; t < T; ++t) {
      cell_step(params, xs.row(t).transpose(), h, c, gates, c_new, h_new);
      h.swap(h_new);
      c.swap(c_new);
      states.row(t) = h.transpose();
      if (tape) {
        gates_all.row(t) = gates.transpose();
        cells.row(t) = c.transpose();
      }
    }
    if (!states.allFinite()) throw NumericalError("lstm: non-finite state");
    if (tape) {
      tape->input = xs;
      tape->gates = std::move(gates_all);
      tape->cell = std::move(cells);
      tape->state = states;
      tape->recorded = true;
    }
    return states;
  }

  /**
   * Backpropagation through time. `d_states` holds d(loss)/d(h_t) for every
   * step (T x H). Accumulates into `grad`, returns d(loss)/d(inputs).
   */
  Matrix backward(const NetworkParams& params, const LstmTape& tape, const Matrix& d_states, Vector& grad) const {
    if (!tape.recorded) throw UsageError("lstm gradient requested before forward pass");
    if (grad.size() != static_cast<Eigen::Index>(params.size())) grad = Vector::Zero(static_cast<Eigen::Index>(params.size()));
    const Eigen::Index T = tape.state.rows();
    const Eigen::Index H = hidden();
    if (d_states.rows() != T || d_states.cols() != H) throw DimensionError("lstm state gradient shape");
    auto wh = params.matrix("Wh");
    Matrix d_pre(T, 4 * H);
    Vector dh_next = Vector::Zero(H);
    Vector dc_next = Vector::Zero(H);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      auto g = tape.gates.row(t);
      auto cand = g.segment(0, H).transpose().array();
      auto in = g.segment(H, H).transpose().array();
      auto fg = g.segment(2 * H, H).transpose().array();
      auto out = g.segment(3 * H, H).transpose().array();
      Eigen::ArrayXd c_t = tape.cell.row(t).transpose().array();
      Eigen::ArrayXd c_prev = t > 0 ? Eigen::ArrayXd(tape.cell.row(t - 1).transpose().array()) : Eigen::ArrayXd::Zero(H);
      Eigen::ArrayXd tc = c_t.tanh();

      Eigen::ArrayXd dh = d_states.row(t).transpose().array() + dh_next.array();
      Eigen::ArrayXd d_out = dh * tc;
      Eigen::ArrayXd dc = dh * out * (1.0 - tc.square()) + dc_next.array();
      Eigen::ArrayXd d_forget = dc * c_prev;
      Eigen::ArrayXd d_in = dc * cand;
      Eigen::ArrayXd d_cand = dc * in;
      dc_next = (dc * fg).matrix();

      d_pre.row(t).segment(0, H) = (d_cand * (1.0 - cand.square())).matrix().transpose();
      d_pre.row(t).segment(H, H) = (d_in * in * (1.0 - in)).matrix().transpose();
      d_pre.row(t).segment(2 * H, H) = (d_forget * fg * (1.0 - fg)).matrix().transpose();
      d_pre.row(t).segment(3 * H, H) = (d_out * out * (1.0 - out)).matrix().transpose();
      dh_next.noalias() = wh.transpose() * d_pre.row(t).transpose();
    }
    Matrix h_prev = Matrix::Zero(T, H);
    if (T > 1) h_prev.bottomRows(T - 1) = tape.state.topRows(T - 1);
    NetworkParams::view(grad, params.block("Wx")).noalias() += d_pre.transpose() * tape.input;
    NetworkParams::view(grad, params.block("Wh")).noalias() += d_pre.transpose() * h_prev;
    NetworkParams::view(grad, params.block("b")).row(0) += d_pre.colwise().sum();
    return d_pre * params.matrix("Wx");
  }

  /// d h_t / d x_t with the previous state held fixed (H x in).
  Matrix input_jacobian(const NetworkParams& params, const LstmTape& tape, Eigen::Index t) const {
    if (!tape.recorded) throw UsageError("lstm jacobian requested before forward pass");
    const Eigen::Index H = hidden();
    auto g = tape.gates.row(t);
    Eigen::ArrayXd cand = g.segment(0, H).transpose().array();
    Eigen::ArrayXd in = g.segment(H, H).transpose().array();
    Eigen::ArrayXd fg = g.segment(2 * H, H).transpose().array();
    Eigen::ArrayXd out = g.segment(3 * H, H).transpose().array();
    Eigen::ArrayXd c_prev = t > 0 ? Eigen::ArrayXd(tape.cell.row(t - 1).transpose().array()) : Eigen::ArrayXd::Zero(H);
    Eigen::ArrayXd tc = tape.cell.row(t).transpose().array().tanh();
    auto wx = params.matrix("Wx");
    Eigen::ArrayXd dc_scale = out * (1.0 - tc.square());
    Matrix jac = Matrix::Zero(H, wx.cols());
    jac += ((dc_scale * in * (1.0 - cand.square())).matrix().asDiagonal()) * wx.middleRows(0, H);
    jac += ((dc_scale * cand * in * (1.0 - in)).matrix().asDiagonal()) * wx.middleRows(H, H);
    jac += ((dc_scale * c_prev * fg * (1.0 - fg)).matrix().asDiagonal()) * wx.middleRows(2 * H, H);
    jac += ((tc * out * (1.0 - out)).matrix().asDiagonal()) * wx.middleRows(3 * H, H);
    return jac;
  }

  void check_layout(const NetworkParams& params) const {
    const std::size_t H = spec_.state_dim;
    auto expect = [&](const char* name, std::size_t r, std::size_t c) {
      if (!params.has(name)) throw DimensionError(std::string("lstm parameter ") + name + " missing");
      const auto& b = params.block(name);
      if (b.rows != r || b.cols != c) throw DimensionError(std::string("lstm parameter ") + name + " shape");
    };
    expect("Wx", 4 * H, spec_.input_dim);
    expect("Wh", 4 * H, H);
    expect("b", 1, 4 * H);
  }

 private:
  void cell_step(const NetworkParams& params, const Vector& x, const Vector& h_prev, const Vector& c_prev,
                 Vector& gates, Vector& c, Vector& h) const {
    const Eigen::Index H = hidden();
    gates.noalias() = params.matrix("Wx") * x;
    gates.noalias() += params.matrix("Wh") * h_prev;
    gates += params.matrix("b").row(0).transpose();
    gates.segment(0, H) = gates.segment(0, H).array().tanh().matrix();
    for (Eigen::Index k = H; k < 4 * H; ++k) gates[k] = detail::sigmoid(gates[k]);
    c = gates.segment(2 * H, H).cwiseProduct(c_prev) + gates.segment(H, H).cwiseProduct(gates.segment(0, H));
    h = gates.segment(3 * H, H).cwiseProduct(Vector(c.array().tanh().matrix()));
  }

  LstmSpec spec_;
};

}  // namespace deepsdf::netcore
