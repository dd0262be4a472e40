#pragma once

#include <Eigen/Dense>

#include <vector>

#include "cachecast/featurize.hpp"

namespace cachecast {

enum class Activation { ReLU, Identity };

// ---------------------------------------------------------------------------
// 1-D convolution over the time axis, same-padding with zeros, odd width.
// taps[j] maps input channels to output channels at time offset j-(k-1)/2.
// ---------------------------------------------------------------------------

struct Conv1dParams {
  std::vector<Matrix> taps;  // k matrices, each out_channels x in_channels
  Vector bias;               // out_channels

  int kernel_width() const { return static_cast<int>(taps.size()); }
  int out_channels() const { return taps.empty() ? 0 : static_cast<int>(taps.front().rows()); }
  int in_channels() const { return taps.empty() ? 0 : static_cast<int>(taps.front().cols()); }
};

/// x is T x in_channels; result is T x out_channels.
Matrix conv1d_forward(const Matrix& x, const Conv1dParams& p, Activation act);

struct Conv1dGrads {
  Conv1dParams param;  // gradient, same shapes as the parameters
  Matrix d_input;
};

Conv1dGrads conv1d_backward(const Matrix& x, const Conv1dParams& p, Activation act,
                            const Matrix& d_output);

// ---------------------------------------------------------------------------
// LSTM with gate weights of shape hidden x (hidden + input) applied to the
// concatenation [h_{t-1}, x_t].
// ---------------------------------------------------------------------------

struct LstmParams {
  Matrix w_input, w_forget, w_output, w_cell;
  Vector b_input, b_forget, b_output, b_cell;

  int hidden_size() const { return static_cast<int>(w_input.rows()); }
  int input_size() const { return static_cast<int>(w_input.cols() - w_input.rows()); }
};

struct LstmStep {
  Vector h;
  Vector c;
};

/// Single step:
///   i = sigma(W_i [h,x] + b_i)   f = sigma(W_f [h,x] + b_f)
///   o = sigma(W_o [h,x] + b_o)   c' = f (*) c + i (*) tanh(W_c [h,x] + b_c)
///   h' = o (*) tanh(c')
LstmStep lstm_cell(const Vector& x, const Vector& h_prev, const Vector& c_prev,
                   const LstmParams& p);

/// Full-sequence forward; rows of each cached matrix are time steps.
struct LstmTrace {
  Matrix h, c;
  Matrix gate_i, gate_f, gate_o, cand;
};

LstmTrace lstm_forward(const Matrix& x, const LstmParams& p);

struct LstmGrads {
  LstmParams param;
  Matrix d_input;
};

/// Backpropagation through time over the whole sequence. d_h is T x hidden,
/// the loss gradient w.r.t. every hidden state.
LstmGrads lstm_backward(const Matrix& x, const LstmParams& p, const LstmTrace& trace,
                        const Matrix& d_h);

// ---------------------------------------------------------------------------
// Recurrent baselines.
//
// VanillaRnn:  h_t = tanh(W [h_{t-1}, x_t] + b)          (w_cand/b_cand only)
// Gru:         z = sigma(W_z [h,x] + b_z)
//              r = sigma(W_r [h,x] + b_r)
//              g = tanh(W_h [r (*) h, x] + b_h)
//              h_t = (1 - z) (*) h_{t-1} + z (*) g
// ---------------------------------------------------------------------------

enum class RecurrentKind { VanillaRnn, Gru };

struct RecurrentParams {
  RecurrentKind kind = RecurrentKind::VanillaRnn;
  Matrix w_update, w_reset, w_cand;
  Vector b_update, b_reset, b_cand;

  int hidden_size() const { return static_cast<int>(w_cand.rows()); }
  int input_size() const { return static_cast<int>(w_cand.cols() - w_cand.rows()); }
};

Vector recurrent_cell(const Vector& x, const Vector& h_prev, const RecurrentParams& p);

struct RecurrentTrace {
  Matrix h;
  Matrix gate_z, gate_r, cand;  // unused matrices stay empty for VanillaRnn
};

RecurrentTrace recurrent_forward(const Matrix& x, const RecurrentParams& p);

struct RecurrentGrads {
  RecurrentParams param;
  Matrix d_input;
};

RecurrentGrads recurrent_backward(const Matrix& x, const RecurrentParams& p,
                                  const RecurrentTrace& trace, const Matrix& d_h);

// ---------------------------------------------------------------------------
// Per-step affine head y_t = w . h_t + b.
// ---------------------------------------------------------------------------

struct DenseParams {
  RowVector weight;
  double bias = 0.0;

  int hidden_size() const { return static_cast<int>(weight.size()); }
};

double dense(const Vector& h, const DenseParams& p);

/// Applies the head to every row of h; result has one entry per time step.
Vector dense_sequence(const Matrix& h, const DenseParams& p);

struct DenseGrads {
  DenseParams param;
  Matrix d_h;
};

DenseGrads dense_backward(const Matrix& h, const DenseParams& p, const Vector& d_y);

// ---------------------------------------------------------------------------
// Losses (mean over all elements).
// ---------------------------------------------------------------------------

double mse(const Vector& pred, const Vector& truth);
double mae(const Vector& pred, const Vector& truth);

/// d(mse)/d(pred) = 2 (pred - truth) / T.
Vector mse_gradient(const Vector& pred, const Vector& truth);

}  // namespace cachecast
