#pragma once

#include "dagan/tensor.hpp"

#include <functional>
#include <limits>
#include <vector>

namespace dagan {

enum class Activation { Sigmoid, Tanh, Relu, LeakyRelu };

/// Negative-side slope of Activation::LeakyRelu.
inline constexpr double kLeakySlope = 0.2;

// ---------------------------------------------------------------------------
// Forward kernels. Batched layouts: every sample is one row.
//   conv1d: a row holds ch_in x T values, channel-major.
//   lstm:   a row holds T x d values, time-major.
// ---------------------------------------------------------------------------

/// out = input * weights + bias, bias broadcast over rows.
Mat dense_forward(const Mat& input, const Mat& weights, const RowVec& bias);

/// Valid cross-correlation. `kernels` is ch_out x (ch_in * k).
Mat conv1d_forward(const Mat& input, const Mat& kernels, const RowVec& bias, Index in_channels,
                   Index kernel_size, Index stride = 1);

Index conv1d_output_length(Index length, Index kernel_size, Index stride);

/// Elementwise activation.
Mat activation(const Mat& x, Activation kind);

/// -[y ln p + (1-y) ln(1-p)], p clamped to [eps, 1-eps].
double bce_loss(double prediction, double label);

inline constexpr double kBceEpsilon = 1e-7;

/// Single-layer LSTM parameters. Gate column blocks are ordered
/// [input, forget, candidate, output]; each block is `hidden` wide.
struct LstmWeights {
  Mat input;      // d x 4H
  Mat recurrent;  // H x 4H
  RowVec bias;    // 1 x 4H
};

struct LstmState {
  Mat h;  // B x H
  Mat c;  // B x H
};

/// Runs an LSTM over B time-major sequences of `steps` frames.
/// Returns B x (steps*H) hidden states; `final_state` receives (h_T, c_T).
Mat lstm_forward(const Mat& inputs, Index steps, const LstmWeights& w, const LstmState& initial,
                 LstmState* final_state = nullptr);

// ---------------------------------------------------------------------------
// Reverse-mode tape.
// ---------------------------------------------------------------------------

struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const { return id != npos; }
};

/// Records a forward computation as a flat list of nodes and replays it in
/// reverse. A tape is single-use: build, call backward once, discard.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Mat& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Data leaf; no gradient.
  Var constant(Mat value);
  /// Data leaf that aliases `value`; the matrix must outlive the tape.
  Var constant_ref(const Mat& value);
  /// Leaf that collects a gradient (readable through grad()).
  Var variable(Mat value);
  /// Trainable leaf. Gradient is added into p.grad by backward() unless p is frozen.
  Var param(Parameter& p);
  /// Read-only parameter leaf (inference, or the opponent's network in a GAN step).
  Var param(const Parameter& p);

  const Mat& value(Var v) const;
  /// Gradient of the last backward() w.r.t. `v`; zero matrix if none flowed.
  Mat grad(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a 1x1 node.
  void backward(Var loss);

  // Used by op implementations.
  Var record(Mat value, bool requires_grad, BackwardFn fn);
  void accumulate(Var v, const Mat& g);
  template <typename Expr>
  void accumulate_expr(Var v, const Expr& g);

 private:
  struct Node {
    Mat value;
    const Mat* ref = nullptr;
    Mat grad;
    bool requires_grad = false;
    bool has_grad = false;
    Parameter* target = nullptr;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;

  Node& node(Var v);
  const Node& node(Var v) const;
};

template <typename Expr>
void Tape::accumulate_expr(Var v, const Expr& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

// Differentiable ops. Each returns a fresh node on `tape`.

Var dense(Tape& tape, Var x, Var weights, Var bias);
Var activate(Tape& tape, Var x, Activation kind);
Var conv1d(Tape& tape, Var x, Var kernels, Var bias, Index in_channels, Index kernel_size,
           Index stride = 1);

/// Packed LSTM node: B x (steps*H + H) holding all hidden states followed by
/// the final cell state. Only the first steps*d columns of `seq` are read, so a
/// packed output can feed the next layer directly.
Var lstm(Tape& tape, Var seq, Index steps, Index input_dim, Var w_in, Var w_rec, Var bias, Var h0,
         Var c0);

struct LstmOutput {
  Var packed;
  Index steps = 0;
  Index hidden = 0;
  Var last_hidden(Tape& tape) const;
  Var last_cell(Tape& tape) const;
};

Var slice_cols(Tape& tape, Var x, Index start, Index count);
Var concat_cols(Tape& tape, const std::vector<Var>& parts);
/// Concatenates two channel-major batches along time.
Var concat_time(Tape& tape, Var a, Var b, Index channels);
/// B x (C * S*L) channel-major -> (B*S) x (C*L): cuts each sequence into S segments.
Var split_segments(Tape& tape, Var x, Index channels, Index segments);
/// Row-major reshape to `rows` rows.
Var reshape_rows(Tape& tape, Var x, Index rows);
/// Per-row transpose of a channel-major C x T block into time-major T x C.
Var to_time_major(Tape& tape, Var x, Index channels);

/// Mean binary cross-entropy of B x 1 predictions against a constant label.
Var bce(Tape& tape, Var prediction, double label);
/// Same loss computed from pre-sigmoid logits; the gradient sigmoid(x) - label
/// does not vanish when the prediction saturates.
Var bce_logits(Tape& tape, Var logits, double label);
/// Mean squared difference over all entries.
Var mse(Tape& tape, Var a, Var b);
Var sum(Tape& tape, Var x);
Var weighted_sum(Tape& tape, Var a, double wa, Var b, double wb);
/// limit * tanh(x / limit), column-wise limits.
Var soft_bound(Tape& tape, Var x, const RowVec& limits);

}  // namespace dagan
