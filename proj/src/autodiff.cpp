#include "dagan/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace dagan {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

// Eigen's double tanh is scalar; this form vectorizes through exp.
template <typename Derived>
auto fast_tanh(const Eigen::ArrayBase<Derived>& x) {
  return 1.0 - 2.0 / (1.0 + (2.0 * x).exp());
}

// Kept strictly inside (0, 1) even where the exact value rounds to 0 or 1.
Mat sigmoid_of(const Mat& x) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - 0x1p-53;
  return (1.0 / (1.0 + (-x.array()).exp())).max(lo).min(hi).matrix();
}

// Column matrix for valid 1-D cross-correlation:
// col(c*k + j, b*t_out + t) = x(b, c*t_in + t*stride + j).
Mat im2col(const Mat& x, Index in_channels, Index t_in, Index k, Index stride, Index t_out) {
  const Index batch = x.rows();
  Mat col(in_channels * k, batch * t_out);
  for (Index c = 0; c < in_channels; ++c)
    for (Index j = 0; j < k; ++j) {
      double* dst = col.row(c * k + j).data();
      for (Index b = 0; b < batch; ++b) {
        const double* src = x.row(b).data() + c * t_in + j;
        for (Index t = 0; t < t_out; ++t) dst[b * t_out + t] = src[t * stride];
      }
    }
  return col;
}

void col2im_add(const Mat& col, Mat& dx, Index in_channels, Index t_in, Index k, Index stride,
                Index t_out) {
  const Index batch = dx.rows();
  for (Index c = 0; c < in_channels; ++c)
    for (Index j = 0; j < k; ++j) {
      const double* src = col.row(c * k + j).data();
      for (Index b = 0; b < batch; ++b) {
        double* dst = dx.row(b).data() + c * t_in + j;
        for (Index t = 0; t < t_out; ++t) dst[t * stride] += src[b * t_out + t];
      }
    }
}

struct ConvGeometry {
  Index in_channels, t_in, k, stride, t_out, out_channels;
};

ConvGeometry conv_geometry(const Mat& x, const Mat& kernels, Index bias_size, Index in_channels,
                           Index kernel_size, Index stride) {
  require(in_channels > 0 && kernel_size > 0, "conv1d: channel count and kernel size must be positive");
  require(stride >= 1, "conv1d: stride must be >= 1");
  require(x.cols() % in_channels == 0, "conv1d: input width is not a multiple of in_channels");
  require(kernels.cols() == in_channels * kernel_size,
          "conv1d: kernel width " + std::to_string(kernels.cols()) + " != in_channels*k " +
              std::to_string(in_channels * kernel_size));
  require(bias_size == kernels.rows(), "conv1d: bias size must equal out_channels");
  const Index t_in = x.cols() / in_channels;
  require(t_in >= kernel_size, "conv1d: input length " + std::to_string(t_in) +
                                   " shorter than kernel " + std::to_string(kernel_size));
  return {in_channels, t_in, kernel_size, stride, conv1d_output_length(t_in, kernel_size, stride),
          kernels.rows()};
}

Mat conv_apply(const Mat& x, const Mat& kernels, const RowVec& bias, const ConvGeometry& g) {
  const Index batch = x.rows();
  const Mat col = im2col(x, g.in_channels, g.t_in, g.k, g.stride, g.t_out);
  const Mat y = kernels * col;  // out_channels x (batch * t_out)
  Mat out(batch, g.out_channels * g.t_out);
  for (Index b = 0; b < batch; ++b)
    for (Index o = 0; o < g.out_channels; ++o)
      out.row(b).segment(o * g.t_out, g.t_out) =
          y.row(o).segment(b * g.t_out, g.t_out).array() + bias(o);
  return out;
}

// Per-step state is kept unit-major (rows = units, columns = batch) so gate
// blocks are contiguous and the elementwise work vectorizes across the batch.
struct LstmTrace {
  Mat inputs;  // (T*B) x d
  Mat gates;   // (T*4H) x B, post-activation
  Mat cells;   // (T*H) x B
};

Mat lstm_run(const Mat& seq, Index steps, Index d, const Mat& w_in, const Mat& w_rec,
             const RowVec& bias, const Mat& h0, const Mat& c0, LstmTrace* trace, Mat* final_c) {
  const Index batch = seq.rows();
  const Index hidden = w_rec.rows();
  require(steps >= 1, "lstm: at least one step is required");
  require(seq.cols() >= steps * d, "lstm: sequence shorter than steps*input_dim");
  require(w_in.rows() == d && w_in.cols() == 4 * hidden, "lstm: input weights must be d x 4H");
  require(w_rec.cols() == 4 * hidden, "lstm: recurrent weights must be H x 4H");
  require(bias.size() == 4 * hidden, "lstm: bias must have 4H entries");
  require(h0.rows() == batch && h0.cols() == hidden, "lstm: h0 must be B x H");
  require(c0.rows() == batch && c0.cols() == hidden, "lstm: c0 must be B x H");
  const Index H = hidden;

  Mat x_all(steps * batch, d);
  for (Index t = 0; t < steps; ++t)
    for (Index b = 0; b < batch; ++b) x_all.row(t * batch + b) = seq.row(b).segment(t * d, d);
  Mat z_all = x_all * w_in;
  z_all.rowwise() += bias;
  const Mat w_rec_t = w_rec.transpose();

  Mat out(batch, steps * H);
  Mat h = h0.transpose();
  Mat c = c0.transpose();
  Mat z(4 * H, batch);
  if (trace) {
    trace->gates.resize(steps * 4 * H, batch);
    trace->cells.resize(steps * H, batch);
  }
  for (Index t = 0; t < steps; ++t) {
    z.noalias() = z_all.middleRows(t * batch, batch).transpose();
    z.noalias() += w_rec_t * h;
    auto za = z.array();
    za.topRows(2 * H) = 1.0 / (1.0 + (-za.topRows(2 * H)).exp());
    za.middleRows(2 * H, H) = fast_tanh(za.middleRows(2 * H, H));
    za.bottomRows(H) = 1.0 / (1.0 + (-za.bottomRows(H)).exp());
    c.array() = za.middleRows(H, H) * c.array() + za.topRows(H) * za.middleRows(2 * H, H);
    h.array() = za.bottomRows(H) * fast_tanh(c.array());
    out.middleCols(t * H, H) = h.transpose();
    if (trace) {
      trace->gates.middleRows(t * 4 * H, 4 * H) = z;
      trace->cells.middleRows(t * H, H) = c;
    }
  }
  if (trace) trace->inputs = std::move(x_all);
  if (final_c) *final_c = c.transpose();
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

Mat dense_forward(const Mat& input, const Mat& weights, const RowVec& bias) {
  require(input.cols() == weights.rows(),
          "dense: input width " + std::to_string(input.cols()) + " != weight rows " +
              std::to_string(weights.rows()));
  require(bias.size() == weights.cols(), "dense: bias size must equal output width");
  Mat out = input * weights;
  out.rowwise() += bias;
  return out;
}

Index conv1d_output_length(Index length, Index kernel_size, Index stride) {
  return (length - kernel_size) / stride + 1;
}

Mat conv1d_forward(const Mat& input, const Mat& kernels, const RowVec& bias, Index in_channels,
                   Index kernel_size, Index stride) {
  const auto g = conv_geometry(input, kernels, bias.size(), in_channels, kernel_size, stride);
  return conv_apply(input, kernels, bias, g);
}

Mat activation(const Mat& x, Activation kind) {
  switch (kind) {
    case Activation::Sigmoid:
      return sigmoid_of(x);
    case Activation::Tanh:
      return fast_tanh(x.array()).matrix();
    case Activation::Relu:
      return x.cwiseMax(0.0);
    case Activation::LeakyRelu:
      return x.cwiseMax(kLeakySlope * x);
  }
  return x;
}

double bce_loss(double prediction, double label) {
  const double p = std::clamp(prediction, kBceEpsilon, 1.0 - kBceEpsilon);
  return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

Mat lstm_forward(const Mat& inputs, Index steps, const LstmWeights& w, const LstmState& initial,
                 LstmState* final_state) {
  const Index d = w.input.rows();
  Mat final_c;
  Mat out = lstm_run(inputs, steps, d, w.input, w.recurrent, w.bias, initial.h, initial.c, nullptr,
                     &final_c);
  if (final_state) {
    const Index hidden = w.recurrent.rows();
    final_state->h = out.rightCols(hidden);
    final_state->c = std::move(final_c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) throw UsageError("tape: variable does not belong to this tape");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw UsageError("tape: variable does not belong to this tape");
  return nodes_[v.id];
}

Var Tape::record(Mat value, bool requires_grad, BackwardFn fn) {
  if (!value.allFinite())
    throw NumericError("non-finite value produced at tape node " + std::to_string(nodes_.size()));
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Mat value) { return record(std::move(value), false, nullptr); }

Var Tape::constant_ref(const Mat& value) {
  if (!value.allFinite()) throw NumericError("non-finite constant");
  Node n;
  n.ref = &value;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::variable(Mat value) { return record(std::move(value), true, nullptr); }

Var Tape::param(Parameter& p) {
  Node n;
  n.ref = &p.value;
  n.requires_grad = !p.frozen;
  n.target = p.frozen ? nullptr : &p;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::param(const Parameter& p) { return constant_ref(p.value); }

const Mat& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.ref ? *n.ref : n.value;
}

Mat Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.has_grad) return n.grad;
  const Mat& val = value(v);
  return Mat::Zero(val.rows(), val.cols());
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

void Tape::accumulate(Var v, const Mat& g) { accumulate_expr(v, g); }

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw UsageError("backward called before any forward computation");
  if (consumed_) throw UsageError("backward called twice on the same tape");
  const Mat& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) throw UsageError("backward requires a scalar (1x1) loss");
  consumed_ = true;
  if (!node(loss).requires_grad) return;
  accumulate(loss, Mat::Ones(1, 1));
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) {
      Mat g = std::move(n.grad);
      n.backward(*this, g);
      n.grad = std::move(g);
    }
    if (n.target) n.target->grad += n.grad;
  }
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

Var dense(Tape& tape, Var x, Var weights, Var bias) {
  const Mat& xv = tape.value(x);
  const Mat& wv = tape.value(weights);
  const Mat& bv = tape.value(bias);
  require(bv.rows() == 1, "dense: bias must be a row vector");
  Mat out = dense_forward(xv, wv, bv.row(0));
  const bool rg = tape.requires_grad(x) || tape.requires_grad(weights) || tape.requires_grad(bias);
  return tape.record(std::move(out), rg, [x, weights, bias](Tape& t, const Mat& g) {
    if (t.requires_grad(x)) t.accumulate_expr(x, g * t.value(weights).transpose());
    if (t.requires_grad(weights)) t.accumulate_expr(weights, t.value(x).transpose() * g);
    if (t.requires_grad(bias)) t.accumulate_expr(bias, g.colwise().sum());
  });
}

Var activate(Tape& tape, Var x, Activation kind) {
  Mat out = activation(tape.value(x), kind);
  return tape.record(std::move(out), tape.requires_grad(x), [x, kind](Tape& t, const Mat& g) {
    const Mat& xv = t.value(x);
    switch (kind) {
      case Activation::Sigmoid: {
        const Mat s = sigmoid_of(xv);
        t.accumulate_expr(x, (g.array() * s.array() * (1.0 - s.array())).matrix());
        break;
      }
      case Activation::Tanh: {
        const auto th = fast_tanh(xv.array());
        t.accumulate_expr(x, (g.array() * (1.0 - th * th)).matrix());
        break;
      }
      case Activation::Relu:
        t.accumulate_expr(x, (g.array() * (xv.array() > 0.0).cast<double>()).matrix());
        break;
      case Activation::LeakyRelu:
        t.accumulate_expr(x, (g.array() * (xv.array() > 0.0).select(1.0, Mat::Constant(xv.rows(), xv.cols(), kLeakySlope).array())).matrix());
        break;
    }
  });
}

Var conv1d(Tape& tape, Var x, Var kernels, Var bias, Index in_channels, Index kernel_size,
           Index stride) {
  const Mat& xv = tape.value(x);
  const Mat& kv = tape.value(kernels);
  const Mat& bv = tape.value(bias);
  require(bv.rows() == 1, "conv1d: bias must be a row vector");
  const auto geo = conv_geometry(xv, kv, bv.cols(), in_channels, kernel_size, stride);
  Mat out = conv_apply(xv, kv, bv.row(0), geo);
  const bool rg = tape.requires_grad(x) || tape.requires_grad(kernels) || tape.requires_grad(bias);
  return tape.record(std::move(out), rg, [x, kernels, bias, geo](Tape& t, const Mat& g) {
    const Mat& xv = t.value(x);
    const Index batch = xv.rows();
    Mat dy(geo.out_channels, batch * geo.t_out);
    for (Index b = 0; b < batch; ++b)
      for (Index o = 0; o < geo.out_channels; ++o)
        dy.row(o).segment(b * geo.t_out, geo.t_out) = g.row(b).segment(o * geo.t_out, geo.t_out);
    if (t.requires_grad(kernels)) {
      const Mat col = im2col(xv, geo.in_channels, geo.t_in, geo.k, geo.stride, geo.t_out);
      t.accumulate_expr(kernels, dy * col.transpose());
    }
    if (t.requires_grad(bias)) t.accumulate_expr(bias, dy.rowwise().sum().transpose());
    if (t.requires_grad(x)) {
      const Mat dcol = t.value(kernels).transpose() * dy;
      Mat dx = Mat::Zero(batch, xv.cols());
      col2im_add(dcol, dx, geo.in_channels, geo.t_in, geo.k, geo.stride, geo.t_out);
      t.accumulate(x, dx);
    }
  });
}

Var lstm(Tape& tape, Var seq, Index steps, Index input_dim, Var w_in, Var w_rec, Var bias, Var h0,
         Var c0) {
  const Mat& sv = tape.value(seq);
  const Mat& wi = tape.value(w_in);
  const Mat& wr = tape.value(w_rec);
  const Mat& bv = tape.value(bias);
  require(bv.rows() == 1, "lstm: bias must be a row vector");
  const Index batch = sv.rows();
  const Index hidden = wr.rows();
  const Mat zeros = Mat::Zero(batch, hidden);
  const Mat& h0v = h0.valid() ? tape.value(h0) : zeros;
  const Mat& c0v = c0.valid() ? tape.value(c0) : zeros;

  auto trace = std::make_shared<LstmTrace>();
  Mat final_c;
  Mat hs = lstm_run(sv, steps, input_dim, wi, wr, bv.row(0), h0v, c0v, trace.get(), &final_c);
  Mat out(batch, steps * hidden + hidden);
  out.leftCols(steps * hidden) = hs;
  out.rightCols(hidden) = final_c;

  auto grad_of = [&tape](Var v) { return v.valid() && tape.requires_grad(v); };
  const bool rg = grad_of(seq) || grad_of(w_in) || grad_of(w_rec) || grad_of(bias) ||
                  grad_of(h0) || grad_of(c0);
  const Var self{tape.size()};
  return tape.record(std::move(out), rg, [=](Tape& t, const Mat& g) {
    const Mat& wi = t.value(w_in);
    const Mat& wr = t.value(w_rec);
    const Mat& packed = t.value(self);
    const Mat zeros = Mat::Zero(batch, hidden);
    const Mat& h0v = h0.valid() ? t.value(h0) : zeros;
    const Mat& c0v = c0.valid() ? t.value(c0) : zeros;
    const Index H = hidden;

    // Unit-major gate gradients; column block t holds step t.
    Mat dz_all(4 * H, steps * batch);
    Mat dh_next = Mat::Zero(H, batch);
    Mat dc_next = g.rightCols(H).transpose();
    const Mat c0t = c0v.transpose();
    Mat dh(H, batch), dc(H, batch), dz(4 * H, batch);
    Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> tc(H, batch);
    for (Index t_ = steps; t_-- > 0;) {
      const auto gates = trace->gates.middleRows(t_ * 4 * H, 4 * H).array();
      const auto i = gates.topRows(H);
      const auto f = gates.middleRows(H, H);
      const auto cand = gates.middleRows(2 * H, H);
      const auto o = gates.bottomRows(H);
      const auto c = trace->cells.middleRows(t_ * H, H).array();
      const double* cp = t_ > 0 ? trace->cells.data() + (t_ - 1) * H * batch : c0t.data();
      const Eigen::Map<const Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
          c_prev(cp, H, batch);
      tc = fast_tanh(c);

      dh = g.middleCols(t_ * H, H).transpose() + dh_next;
      dc.array() = dc_next.array() + dh.array() * o * (1.0 - tc * tc);
      auto dza = dz.array();
      dza.topRows(H) = dc.array() * cand * i * (1.0 - i);
      dza.middleRows(H, H) = dc.array() * c_prev * f * (1.0 - f);
      dza.middleRows(2 * H, H) = dc.array() * i * (1.0 - cand * cand);
      dza.bottomRows(H) = dh.array() * tc * o * (1.0 - o);
      dc_next.array() = dc.array() * f;
      dh_next.noalias() = wr * dz;
      dz_all.middleCols(t_ * batch, batch) = dz;
    }
    dh_next.transposeInPlace();
    dc_next.transposeInPlace();

    if (t.requires_grad(w_in)) t.accumulate(w_in, (dz_all * trace->inputs).transpose());
    if (t.requires_grad(w_rec)) {
      Mat h_prev(steps * batch, H);
      h_prev.topRows(batch) = h0v;
      for (Index t_ = 1; t_ < steps; ++t_)
        h_prev.middleRows(t_ * batch, batch) = packed.middleCols((t_ - 1) * H, H);
      t.accumulate(w_rec, (dz_all * h_prev).transpose());
    }
    if (t.requires_grad(bias)) t.accumulate(bias, dz_all.rowwise().sum().transpose());
    if (t.requires_grad(seq)) {
      const Mat dx_all = dz_all.transpose() * wi.transpose();
      const Mat& sv = t.value(seq);
      Mat dseq = Mat::Zero(batch, sv.cols());
      for (Index t_ = 0; t_ < steps; ++t_)
        for (Index b = 0; b < batch; ++b)
          dseq.row(b).segment(t_ * input_dim, input_dim) = dx_all.row(t_ * batch + b);
      t.accumulate(seq, dseq);
    }
    if (h0.valid() && t.requires_grad(h0)) t.accumulate(h0, dh_next);
    if (c0.valid() && t.requires_grad(c0)) t.accumulate(c0, dc_next);
  });
}

Var LstmOutput::last_hidden(Tape& tape) const {
  return slice_cols(tape, packed, (steps - 1) * hidden, hidden);
}

Var LstmOutput::last_cell(Tape& tape) const {
  return slice_cols(tape, packed, steps * hidden, hidden);
}

Var slice_cols(Tape& tape, Var x, Index start, Index count) {
  const Mat& xv = tape.value(x);
  require(start >= 0 && count >= 0 && start + count <= xv.cols(), "slice_cols: out of range");
  Mat out = xv.middleCols(start, count);
  return tape.record(std::move(out), tape.requires_grad(x), [x, start, count](Tape& t, const Mat& g) {
    const Mat& xv = t.value(x);
    Mat dx = Mat::Zero(xv.rows(), xv.cols());
    dx.middleCols(start, count) = g;
    t.accumulate(x, dx);
  });
}

Var concat_cols(Tape& tape, const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: nothing to concatenate");
  const Index rows = tape.value(parts.front()).rows();
  Index cols = 0;
  bool rg = false;
  for (Var p : parts) {
    require(tape.value(p).rows() == rows, "concat_cols: row counts differ");
    cols += tape.value(p).cols();
    rg = rg || tape.requires_grad(p);
  }
  Mat out(rows, cols);
  Index at = 0;
  for (Var p : parts) {
    const Mat& v = tape.value(p);
    out.middleCols(at, v.cols()) = v;
    at += v.cols();
  }
  return tape.record(std::move(out), rg, [parts](Tape& t, const Mat& g) {
    Index at = 0;
    for (Var p : parts) {
      const Index w = t.value(p).cols();
      if (t.requires_grad(p)) t.accumulate_expr(p, g.middleCols(at, w));
      at += w;
    }
  });
}

Var concat_time(Tape& tape, Var a, Var b, Index channels) {
  const Mat& av = tape.value(a);
  const Mat& bv = tape.value(b);
  require(av.rows() == bv.rows(), "concat_time: batch sizes differ");
  require(av.cols() % channels == 0 && bv.cols() % channels == 0,
          "concat_time: widths are not multiples of the channel count");
  const Index ta = av.cols() / channels;
  const Index tb = bv.cols() / channels;
  Mat out(av.rows(), channels * (ta + tb));
  for (Index c = 0; c < channels; ++c) {
    out.middleCols(c * (ta + tb), ta) = av.middleCols(c * ta, ta);
    out.middleCols(c * (ta + tb) + ta, tb) = bv.middleCols(c * tb, tb);
  }
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(out), rg, [a, b, channels, ta, tb](Tape& t, const Mat& g) {
    if (t.requires_grad(a)) {
      Mat da(g.rows(), channels * ta);
      for (Index c = 0; c < channels; ++c) da.middleCols(c * ta, ta) = g.middleCols(c * (ta + tb), ta);
      t.accumulate(a, da);
    }
    if (t.requires_grad(b)) {
      Mat db(g.rows(), channels * tb);
      for (Index c = 0; c < channels; ++c)
        db.middleCols(c * tb, tb) = g.middleCols(c * (ta + tb) + ta, tb);
      t.accumulate(b, db);
    }
  });
}

Var split_segments(Tape& tape, Var x, Index channels, Index segments) {
  const Mat& xv = tape.value(x);
  require(xv.cols() % (channels * segments) == 0,
          "split_segments: width is not divisible by channels*segments");
  const Index len = xv.cols() / (channels * segments);
  const Index batch = xv.rows();
  Mat out(batch * segments, channels * len);
  for (Index b = 0; b < batch; ++b)
    for (Index s = 0; s < segments; ++s)
      for (Index c = 0; c < channels; ++c)
        out.row(b * segments + s).segment(c * len, len) =
            xv.row(b).segment(c * segments * len + s * len, len);
  return tape.record(std::move(out), tape.requires_grad(x),
                     [x, channels, segments, len, batch](Tape& t, const Mat& g) {
                       Mat dx(batch, channels * segments * len);
                       for (Index b = 0; b < batch; ++b)
                         for (Index s = 0; s < segments; ++s)
                           for (Index c = 0; c < channels; ++c)
                             dx.row(b).segment(c * segments * len + s * len, len) =
                                 g.row(b * segments + s).segment(c * len, len);
                       t.accumulate(x, dx);
                     });
}

Var reshape_rows(Tape& tape, Var x, Index rows) {
  const Mat& xv = tape.value(x);
  require(rows > 0 && xv.size() % rows == 0, "reshape_rows: size is not divisible by rows");
  const Index cols = xv.size() / rows;
  Mat out = Eigen::Map<const Mat>(xv.data(), rows, cols);
  const Index r0 = xv.rows(), c0 = xv.cols();
  return tape.record(std::move(out), tape.requires_grad(x), [x, r0, c0](Tape& t, const Mat& g) {
    t.accumulate(x, Eigen::Map<const Mat>(g.data(), r0, c0));
  });
}

Var to_time_major(Tape& tape, Var x, Index channels) {
  const Mat& xv = tape.value(x);
  require(xv.cols() % channels == 0, "to_time_major: width is not a multiple of channels");
  const Index steps = xv.cols() / channels;
  Mat out(xv.rows(), xv.cols());
  for (Index b = 0; b < xv.rows(); ++b)
    Eigen::Map<Mat>(out.row(b).data(), steps, channels) =
        Eigen::Map<const Mat>(xv.row(b).data(), channels, steps).transpose();
  return tape.record(std::move(out), tape.requires_grad(x), [x, channels, steps](Tape& t, const Mat& g) {
    Mat dx(g.rows(), g.cols());
    for (Index b = 0; b < g.rows(); ++b)
      Eigen::Map<Mat>(dx.row(b).data(), channels, steps) =
          Eigen::Map<const Mat>(g.row(b).data(), steps, channels).transpose();
    t.accumulate(x, dx);
  });
}

Var bce(Tape& tape, Var prediction, double label) {
  const Mat& pv = tape.value(prediction);
  require(pv.cols() == 1, "bce: predictions must be B x 1");
  double total = 0.0;
  for (Index i = 0; i < pv.rows(); ++i) total += bce_loss(pv(i, 0), label);
  Mat out(1, 1);
  out(0, 0) = total / static_cast<double>(pv.rows());
  return tape.record(std::move(out), tape.requires_grad(prediction),
                     [prediction, label](Tape& t, const Mat& g) {
                       const Mat& pv = t.value(prediction);
                       const double scale = g(0, 0) / static_cast<double>(pv.rows());
                       Mat dp(pv.rows(), 1);
                       for (Index i = 0; i < pv.rows(); ++i) {
                         const double p = pv(i, 0);
                         if (p < kBceEpsilon || p > 1.0 - kBceEpsilon) {
                           dp(i, 0) = 0.0;
                         } else {
                           dp(i, 0) = scale * (-label / p + (1.0 - label) / (1.0 - p));
                         }
                       }
                       t.accumulate(prediction, dp);
                     });
}

Var bce_logits(Tape& tape, Var logits, double label) {
  const Mat& xv = tape.value(logits);
  require(xv.cols() == 1, "bce_logits: logits must be B x 1");
  const auto x = xv.array();
  Mat out(1, 1);
  out(0, 0) = (x.max(0.0) - label * x + (-x.abs()).exp().log1p()).mean();
  return tape.record(std::move(out), tape.requires_grad(logits), [logits, label](Tape& t, const Mat& g) {
    const Mat& xv = t.value(logits);
    const double scale = g(0, 0) / static_cast<double>(xv.rows());
    t.accumulate(logits, (scale * (sigmoid_of(xv).array() - label)).matrix());
  });
}

Var mse(Tape& tape, Var a, Var b) {
  const Mat& av = tape.value(a);
  const Mat& bv = tape.value(b);
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "mse: shape mismatch");
  Mat out(1, 1);
  out(0, 0) = (av - bv).squaredNorm() / static_cast<double>(av.size());
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(out), rg, [a, b](Tape& t, const Mat& g) {
    const Mat& av = t.value(a);
    const Mat diff = (av - t.value(b)) * (2.0 * g(0, 0) / static_cast<double>(av.size()));
    if (t.requires_grad(a)) t.accumulate(a, diff);
    if (t.requires_grad(b)) t.accumulate_expr(b, -diff);
  });
}

Var sum(Tape& tape, Var x) {
  Mat out(1, 1);
  out(0, 0) = tape.value(x).sum();
  return tape.record(std::move(out), tape.requires_grad(x), [x](Tape& t, const Mat& g) {
    const Mat& xv = t.value(x);
    t.accumulate(x, Mat::Constant(xv.rows(), xv.cols(), g(0, 0)));
  });
}

Var soft_bound(Tape& tape, Var x, const RowVec& limits) {
  const Mat& xv = tape.value(x);
  require(limits.size() == xv.cols(), "soft_bound: one limit per column is required");
  require((limits.array() > 0.0).all(), "soft_bound: limits must be positive");
  const Mat th = fast_tanh((xv.array().rowwise() / limits.array())).matrix();
  Mat out = (th.array().rowwise() * limits.array()).matrix();
  return tape.record(std::move(out), tape.requires_grad(x), [x, th](Tape& t, const Mat& g) {
    t.accumulate(x, (g.array() * (1.0 - th.array().square())).matrix());
  });
}

Var weighted_sum(Tape& tape, Var a, double wa, Var b, double wb) {
  const Mat& av = tape.value(a);
  const Mat& bv = tape.value(b);
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "weighted_sum: shape mismatch");
  Mat out = wa * av + wb * bv;
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(out), rg, [a, wa, b, wb](Tape& t, const Mat& g) {
    if (t.requires_grad(a)) t.accumulate_expr(a, wa * g);
    if (t.requires_grad(b)) t.accumulate_expr(b, wb * g);
  });
}

}  // namespace dagan
