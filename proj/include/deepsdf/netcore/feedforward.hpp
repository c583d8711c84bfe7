#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/types.hpp"
#include "deepsdf/netcore/params.hpp"

namespace deepsdf::netcore {

struct FeedforwardSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;  // empty: a single affine map
  std::size_t output_dim = 1;
  double keep_prob = 1.0;

  void validate() const {
    if (input_dim < 1 || output_dim < 1) throw DimensionError("feedforward input/output dims must be >= 1");
    for (std::size_t h : hidden_dims) {
      if (h < 1) throw DimensionError("feedforward hidden dims must be >= 1");
    }
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw UsageError("keep_prob must lie in (0, 1]");
  }
  bool operator==(const FeedforwardSpec&) const = default;
};

/// Cached activations from one batched forward pass.
struct FeedforwardTape {
  bool recorded = false;
  Matrix input;
  std::vector<Matrix> act;    // masked hidden outputs, one per hidden layer
  std::vector<Matrix> deriv;  // dropout scale * ReLU'(z), same shapes as act
};

inline std::string layer_weight(std::size_t l) { return "l" + std::to_string(l) + ".W"; }
inline std::string layer_bias(std::size_t l) { return "l" + std::to_string(l) + ".b"; }

/**
 * Dense ReLU stack: hidden layers x <- relu(W x + b) followed by a final
 * affine map. Layer l has weight "l<l>.W" (out x in) and bias "l<l>.b"
 * (1 x out); the output layer is index hidden_dims.size().
 *
 * Batched calls take one observation per row. In train mode each hidden
 * output is multiplied by a Bernoulli(keep_prob)/keep_prob mask.
 */
class Feedforward {
 public:
  Feedforward() = default;
  explicit Feedforward(FeedforwardSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  const FeedforwardSpec& spec() const { return spec_; }
  std::size_t num_layers() const { return spec_.hidden_dims.size() + 1; }

  NetworkParams zero_params() const {
    NetworkParams p;
    std::size_t in = spec_.input_dim;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      std::size_t out = l < spec_.hidden_dims.size() ? spec_.hidden_dims[l] : spec_.output_dim;
      p.add(layer_weight(l), out, in);
      p.add(layer_bias(l), 1, out);
      in = out;
    }
    return p;
  }

  /// Weights ~ N(0, 1/fan_in), biases zero. Deterministic in `seed`.
  NetworkParams init_params(std::uint64_t seed) const {
    NetworkParams p = zero_params();
    Rng rng(seed);
    for (std::size_t l = 0; l < num_layers(); ++l) {
      auto w = p.matrix(layer_weight(l));
      std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(w.cols())));
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    }
    return p;
  }

  Matrix forward(const NetworkParams& params, const Matrix& x, Mode mode = Mode::eval, Rng* rng = nullptr,
                 FeedforwardTape* tape = nullptr) const {
    check_layout(params);
    if (static_cast<std::size_t>(x.cols()) != spec_.input_dim) {
      throw DimensionError("feedforward layer 0 expects " + std::to_string(spec_.input_dim) + " inputs, got " +
                           std::to_string(x.cols()));
    }
    const bool drop = mode == Mode::train && spec_.keep_prob < 1.0;
    if (drop && rng == nullptr) throw UsageError("train-mode dropout requires a random source");
    FeedforwardTape local;
    FeedforwardTape& tp = tape ? *tape : local;
    tp.recorded = false;
    if (&x != &tp.input) tp.input = x;
    const std::size_t hidden = spec_.hidden_dims.size();
    tp.act.resize(hidden);
    tp.deriv.resize(hidden);
    // keep test on 32-bit chunks of one 64-bit draw
    const auto threshold = static_cast<std::uint64_t>(std::ldexp(spec_.keep_prob, 32));
    const double scale = 1.0 / spec_.keep_prob;
    for (std::size_t l = 0; l < hidden; ++l) {
      const Matrix& a = l == 0 ? tp.input : tp.act[l - 1];
      auto w = params.matrix(layer_weight(l));
      auto b = params.matrix(layer_bias(l));
      Matrix& z = tp.act[l];
      Matrix& d = tp.deriv[l];
      z.resize(a.rows(), w.rows());
      d.resize(a.rows(), w.rows());
      z.noalias() = a * w.transpose();
      const Eigen::Index rows = z.rows();
      std::uint64_t bits = 0;
      std::size_t draws = 0;
      for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const double bias = b(0, j);
        double* zp = z.col(j).data();
        double* dp = d.col(j).data();
        if (drop) {
          for (Eigen::Index k = 0; k < rows; ++k, ++draws) {
            if ((draws & 1) == 0) bits = (*rng)();
            const bool keep = ((draws & 1) ? (bits >> 32) : (bits & 0xffffffffULL)) < threshold;
            const double v = zp[k] + bias;
            // relu(z) * mask == z * d since d carries the indicator z > 0
            dp[k] = (keep && v > 0.0) ? scale : 0.0;
            zp[k] = v * dp[k];
          }
        } else {
          for (Eigen::Index k = 0; k < rows; ++k) {
            const double v = zp[k] + bias;
            dp[k] = v > 0.0 ? 1.0 : 0.0;
            zp[k] = v > 0.0 ? v : 0.0;
          }
        }
      }
    }
    const std::size_t out_l = hidden;
    const Matrix& a = hidden == 0 ? tp.input : tp.act[hidden - 1];
    auto w = params.matrix(layer_weight(out_l));
    auto b = params.matrix(layer_bias(out_l));
    Matrix y(a.rows(), w.rows());
    y.noalias() = a * w.transpose();
    y.rowwise() += b.row(0);
    tp.recorded = true;
    return y;
  }

  Vector forward_one(const NetworkParams& params, const Vector& x) const {
    Matrix row = x.transpose();
    return forward(params, row).row(0).transpose();
  }

  /**
   * Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output) for
   * every row of the recorded batch, and returns d(loss)/d(input).
   */
  Matrix backward(const NetworkParams& params, const FeedforwardTape& tape, const Matrix& d_out, Vector& grad) const {
    if (!tape.recorded) throw UsageError("feedforward gradient requested before forward pass");
    if (grad.size() != static_cast<Eigen::Index>(params.size())) grad = Vector::Zero(static_cast<Eigen::Index>(params.size()));
    if (d_out.rows() != tape.input.rows() || static_cast<std::size_t>(d_out.cols()) != spec_.output_dim) {
      throw DimensionError("feedforward output gradient shape");
    }
    Matrix delta = d_out;
    Matrix d_in;
    for (std::size_t l = num_layers(); l-- > 0;) {
      const Matrix& a_in = l == 0 ? tape.input : tape.act[l - 1];
      const auto& wb = params.block(layer_weight(l));
      const auto& bb = params.block(layer_bias(l));
      NetworkParams::view(grad, wb).noalias() += delta.transpose() * a_in;
      NetworkParams::view(grad, bb).row(0) += delta.colwise().sum();
      d_in.resize(delta.rows(), static_cast<Eigen::Index>(wb.cols));
      d_in.noalias() = delta * params.matrix(layer_weight(l));
      if (l > 0) d_in.array() *= tape.deriv[l - 1].array();
      delta.swap(d_in);
    }
    return delta;
  }

  void check_layout(const NetworkParams& params) const {
    std::size_t in = spec_.input_dim;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      std::size_t out = l < spec_.hidden_dims.size() ? spec_.hidden_dims[l] : spec_.output_dim;
      if (!params.has(layer_weight(l)) || !params.has(layer_bias(l))) {
        throw DimensionError("feedforward layer " + std::to_string(l) + " missing from parameters");
      }
      const auto& w = params.block(layer_weight(l));
      const auto& b = params.block(layer_bias(l));
      if (w.rows != out || w.cols != in || b.rows != 1 || b.cols != out) {
        throw DimensionError("feedforward layer " + std::to_string(l) + " has shape (" + std::to_string(w.rows) + "x" +
                             std::to_string(w.cols) + "), expected (" + std::to_string(out) + "x" +
                             std::to_string(in) + ")");
      }
      in = out;
    }
  }

 private:
  FeedforwardSpec spec_;
};

}  // namespace deepsdf::netcore
