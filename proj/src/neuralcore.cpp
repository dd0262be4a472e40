#include "cachecast/neuralcore.hpp"

#include <algorithm>
#include <cmath>

#include "cachecast/errors.hpp"

namespace cachecast {

namespace {

void check_conv(const Matrix& x, const Conv1dParams& p) {
  const int k = p.kernel_width();
  if (k < 1 || k % 2 == 0) throw ShapeMismatch("conv kernel width must be odd");
  for (const auto& tap : p.taps)
    if (tap.rows() != p.taps.front().rows() || tap.cols() != p.taps.front().cols())
      throw ShapeMismatch("conv taps disagree on shape");
  if (p.bias.size() != p.out_channels()) throw ShapeMismatch("conv bias size");
  if (x.cols() != p.in_channels()) throw ShapeMismatch("conv input channel count");
}

/// Pre-activation convolution; shared by forward and backward.
Matrix conv1d_linear(const Matrix& x, const Conv1dParams& p) {
  const int k = p.kernel_width();
  const int half = (k - 1) / 2;
  const Eigen::Index t_len = x.rows();
  Matrix z = p.bias.transpose().replicate(t_len, 1);
  for (int j = 0; j < k; ++j) {
    const Eigen::Index offset = j - half;
    const Eigen::Index first = std::max<Eigen::Index>(0, -offset);
    const Eigen::Index last = std::min<Eigen::Index>(t_len, t_len - offset);
    if (first >= last) continue;
    const Eigen::Index len = last - first;
    z.middleRows(first, len).noalias() += x.middleRows(first + offset, len) * p.taps[j].transpose();
  }
  return z;
}

void check_lstm(const LstmParams& p) {
  const auto rows = p.w_input.rows();
  const auto cols = p.w_input.cols();
  if (rows < 1 || cols <= rows) throw ShapeMismatch("lstm gate weight shape");
  for (const Matrix* w : {&p.w_forget, &p.w_output, &p.w_cell})
    if (w->rows() != rows || w->cols() != cols) throw ShapeMismatch("lstm gate weights disagree");
  for (const Vector* b : {&p.b_input, &p.b_forget, &p.b_output, &p.b_cell})
    if (b->size() != rows) throw ShapeMismatch("lstm gate bias size");
}

void check_recurrent(const RecurrentParams& p) {
  const auto rows = p.w_cand.rows();
  const auto cols = p.w_cand.cols();
  if (rows < 1 || cols <= rows) throw ShapeMismatch("recurrent weight shape");
  if (p.b_cand.size() != rows) throw ShapeMismatch("recurrent bias size");
  if (p.kind == RecurrentKind::Gru) {
    for (const Matrix* w : {&p.w_update, &p.w_reset})
      if (w->rows() != rows || w->cols() != cols) throw ShapeMismatch("gru gate weights disagree");
    for (const Vector* b : {&p.b_update, &p.b_reset})
      if (b->size() != rows) throw ShapeMismatch("gru gate bias size");
  }
}

Vector concat(const Vector& h, const Vector& x) {
  Vector out(h.size() + x.size());
  out << h, x;
  return out;
}

}  // namespace

Matrix conv1d_forward(const Matrix& x, const Conv1dParams& p, Activation act) {
  check_conv(x, p);
  Matrix z = conv1d_linear(x, p);
  if (act == Activation::ReLU) z = z.cwiseMax(0.0);
  return z;
}

Conv1dGrads conv1d_backward(const Matrix& x, const Conv1dParams& p, Activation act,
                            const Matrix& d_output) {
  check_conv(x, p);
  if (d_output.rows() != x.rows() || d_output.cols() != p.out_channels())
    throw ShapeMismatch("conv output gradient shape");

  Matrix d_z = d_output;
  if (act == Activation::ReLU) {
    const Matrix z = conv1d_linear(x, p);
    d_z = (z.array() > 0.0).select(d_z, 0.0);
  }

  const int k = p.kernel_width();
  const int half = (k - 1) / 2;
  const Eigen::Index t_len = x.rows();
  Conv1dGrads g;
  g.param.bias = d_z.colwise().sum().transpose();
  g.param.taps.assign(k, Matrix::Zero(p.out_channels(), p.in_channels()));
  g.d_input = Matrix::Zero(x.rows(), x.cols());
  for (int j = 0; j < k; ++j) {
    const Eigen::Index offset = j - half;
    const Eigen::Index first = std::max<Eigen::Index>(0, -offset);
    const Eigen::Index last = std::min<Eigen::Index>(t_len, t_len - offset);
    if (first >= last) continue;
    const Eigen::Index len = last - first;
    g.param.taps[j].noalias() =
        d_z.middleRows(first, len).transpose() * x.middleRows(first + offset, len);
    g.d_input.middleRows(first + offset, len).noalias() += d_z.middleRows(first, len) * p.taps[j];
  }
  return g;
}

LstmStep lstm_cell(const Vector& x, const Vector& h_prev, const Vector& c_prev,
                   const LstmParams& p) {
  check_lstm(p);
  if (x.size() != p.input_size() || h_prev.size() != p.hidden_size() ||
      c_prev.size() != p.hidden_size())
    throw ShapeMismatch("lstm cell input sizes");

  const Vector hx = concat(h_prev, x);
  const Vector i = (p.w_input * hx + p.b_input).array().logistic().matrix();
  const Vector f = (p.w_forget * hx + p.b_forget).array().logistic().matrix();
  const Vector o = (p.w_output * hx + p.b_output).array().logistic().matrix();
  const Vector g = (p.w_cell * hx + p.b_cell).array().tanh().matrix();

  LstmStep step;
  step.c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
  step.h = o.cwiseProduct(step.c.array().tanh().matrix());
  return step;
}

LstmTrace lstm_forward(const Matrix& x, const LstmParams& p) {
  check_lstm(p);
  if (x.cols() != p.input_size()) throw ShapeMismatch("lstm sequence input width");
  const Eigen::Index t_len = x.rows();
  const int hidden = p.hidden_size();

  LstmTrace tr;
  tr.h.resize(t_len, hidden);
  tr.c.resize(t_len, hidden);
  tr.gate_i.resize(t_len, hidden);
  tr.gate_f.resize(t_len, hidden);
  tr.gate_o.resize(t_len, hidden);
  tr.cand.resize(t_len, hidden);

  Vector h = Vector::Zero(hidden), c = Vector::Zero(hidden);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const Vector hx = concat(h, x.row(t).transpose());
    const Vector i = (p.w_input * hx + p.b_input).array().logistic().matrix();
    const Vector f = (p.w_forget * hx + p.b_forget).array().logistic().matrix();
    const Vector o = (p.w_output * hx + p.b_output).array().logistic().matrix();
    const Vector g = (p.w_cell * hx + p.b_cell).array().tanh().matrix();
    c = f.cwiseProduct(c) + i.cwiseProduct(g);
    h = o.cwiseProduct(c.array().tanh().matrix());
    tr.gate_i.row(t) = i.transpose();
    tr.gate_f.row(t) = f.transpose();
    tr.gate_o.row(t) = o.transpose();
    tr.cand.row(t) = g.transpose();
    tr.c.row(t) = c.transpose();
    tr.h.row(t) = h.transpose();
  }
  return tr;
}

LstmGrads lstm_backward(const Matrix& x, const LstmParams& p, const LstmTrace& trace,
                        const Matrix& d_h) {
  check_lstm(p);
  const Eigen::Index t_len = x.rows();
  const int hidden = p.hidden_size();
  if (d_h.rows() != t_len || d_h.cols() != hidden)
    throw ShapeMismatch("lstm hidden gradient shape");

  LstmGrads g;
  g.param.w_input = Matrix::Zero(p.w_input.rows(), p.w_input.cols());
  g.param.w_forget = g.param.w_input;
  g.param.w_output = g.param.w_input;
  g.param.w_cell = g.param.w_input;
  g.param.b_input = Vector::Zero(hidden);
  g.param.b_forget = g.param.b_input;
  g.param.b_output = g.param.b_input;
  g.param.b_cell = g.param.b_input;
  g.d_input = Matrix::Zero(x.rows(), x.cols());

  Vector dh_next = Vector::Zero(hidden);
  Vector dc_next = Vector::Zero(hidden);
  for (Eigen::Index t = t_len - 1; t >= 0; --t) {
    const Vector i = trace.gate_i.row(t).transpose();
    const Vector f = trace.gate_f.row(t).transpose();
    const Vector o = trace.gate_o.row(t).transpose();
    const Vector cand = trace.cand.row(t).transpose();
    const Vector c = trace.c.row(t).transpose();
    const Vector c_prev = t > 0 ? Vector(trace.c.row(t - 1).transpose()) : Vector::Zero(hidden);
    const Vector h_prev = t > 0 ? Vector(trace.h.row(t - 1).transpose()) : Vector::Zero(hidden);
    const Vector tanh_c = c.array().tanh().matrix();

    const Vector dh = d_h.row(t).transpose() + dh_next;
    const Vector d_o = dh.cwiseProduct(tanh_c);
    const Vector dc =
        dc_next + dh.cwiseProduct(o).cwiseProduct((1.0 - tanh_c.array().square()).matrix());
    const Vector d_f = dc.cwiseProduct(c_prev);
    const Vector d_i = dc.cwiseProduct(cand);
    const Vector d_cand = dc.cwiseProduct(i);

    const Vector da_i = (d_i.array() * i.array() * (1.0 - i.array())).matrix();
    const Vector da_f = (d_f.array() * f.array() * (1.0 - f.array())).matrix();
    const Vector da_o = (d_o.array() * o.array() * (1.0 - o.array())).matrix();
    const Vector da_g = (d_cand.array() * (1.0 - cand.array().square())).matrix();

    const Vector hx = concat(h_prev, x.row(t).transpose());
    g.param.w_input.noalias() += da_i * hx.transpose();
    g.param.w_forget.noalias() += da_f * hx.transpose();
    g.param.w_output.noalias() += da_o * hx.transpose();
    g.param.w_cell.noalias() += da_g * hx.transpose();
    g.param.b_input += da_i;
    g.param.b_forget += da_f;
    g.param.b_output += da_o;
    g.param.b_cell += da_g;

    const Vector d_hx = p.w_input.transpose() * da_i + p.w_forget.transpose() * da_f +
                        p.w_output.transpose() * da_o + p.w_cell.transpose() * da_g;
    dh_next = d_hx.head(hidden);
    g.d_input.row(t) = d_hx.tail(x.cols()).transpose();
    dc_next = dc.cwiseProduct(f);
  }
  return g;
}

Vector recurrent_cell(const Vector& x, const Vector& h_prev, const RecurrentParams& p) {
  check_recurrent(p);
  if (x.size() != p.input_size() || h_prev.size() != p.hidden_size())
    throw ShapeMismatch("recurrent cell input sizes");

  if (p.kind == RecurrentKind::VanillaRnn)
    return (p.w_cand * concat(h_prev, x) + p.b_cand).array().tanh().matrix();

  const Vector hx = concat(h_prev, x);
  const Vector z = (p.w_update * hx + p.b_update).array().logistic().matrix();
  const Vector r = (p.w_reset * hx + p.b_reset).array().logistic().matrix();
  const Vector g =
      (p.w_cand * concat(r.cwiseProduct(h_prev), x) + p.b_cand).array().tanh().matrix();
  return (1.0 - z.array()).matrix().cwiseProduct(h_prev) + z.cwiseProduct(g);
}

RecurrentTrace recurrent_forward(const Matrix& x, const RecurrentParams& p) {
  check_recurrent(p);
  if (x.cols() != p.input_size()) throw ShapeMismatch("recurrent sequence input width");
  const Eigen::Index t_len = x.rows();
  const int hidden = p.hidden_size();

  RecurrentTrace tr;
  tr.h.resize(t_len, hidden);
  if (p.kind == RecurrentKind::Gru) {
    tr.gate_z.resize(t_len, hidden);
    tr.gate_r.resize(t_len, hidden);
    tr.cand.resize(t_len, hidden);
  }

  Vector h = Vector::Zero(hidden);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const Vector xt = x.row(t).transpose();
    if (p.kind == RecurrentKind::VanillaRnn) {
      h = (p.w_cand * concat(h, xt) + p.b_cand).array().tanh().matrix();
    } else {
      const Vector hx = concat(h, xt);
      const Vector z = (p.w_update * hx + p.b_update).array().logistic().matrix();
      const Vector r = (p.w_reset * hx + p.b_reset).array().logistic().matrix();
      const Vector g =
          (p.w_cand * concat(r.cwiseProduct(h), xt) + p.b_cand).array().tanh().matrix();
      h = (1.0 - z.array()).matrix().cwiseProduct(h) + z.cwiseProduct(g);
      tr.gate_z.row(t) = z.transpose();
      tr.gate_r.row(t) = r.transpose();
      tr.cand.row(t) = g.transpose();
    }
    tr.h.row(t) = h.transpose();
  }
  return tr;
}

RecurrentGrads recurrent_backward(const Matrix& x, const RecurrentParams& p,
                                  const RecurrentTrace& trace, const Matrix& d_h) {
  check_recurrent(p);
  const Eigen::Index t_len = x.rows();
  const int hidden = p.hidden_size();
  if (d_h.rows() != t_len || d_h.cols() != hidden)
    throw ShapeMismatch("recurrent hidden gradient shape");

  RecurrentGrads g;
  g.param.kind = p.kind;
  g.param.w_cand = Matrix::Zero(p.w_cand.rows(), p.w_cand.cols());
  g.param.b_cand = Vector::Zero(hidden);
  if (p.kind == RecurrentKind::Gru) {
    g.param.w_update = Matrix::Zero(p.w_update.rows(), p.w_update.cols());
    g.param.w_reset = Matrix::Zero(p.w_reset.rows(), p.w_reset.cols());
    g.param.b_update = Vector::Zero(hidden);
    g.param.b_reset = Vector::Zero(hidden);
  }
  g.d_input = Matrix::Zero(x.rows(), x.cols());

  Vector dh_next = Vector::Zero(hidden);
  for (Eigen::Index t = t_len - 1; t >= 0; --t) {
    const Vector xt = x.row(t).transpose();
    const Vector h_prev = t > 0 ? Vector(trace.h.row(t - 1).transpose()) : Vector::Zero(hidden);
    const Vector dh = d_h.row(t).transpose() + dh_next;

    if (p.kind == RecurrentKind::VanillaRnn) {
      const Vector h = trace.h.row(t).transpose();
      const Vector da = (dh.array() * (1.0 - h.array().square())).matrix();
      const Vector hx = concat(h_prev, xt);
      g.param.w_cand.noalias() += da * hx.transpose();
      g.param.b_cand += da;
      const Vector d_hx = p.w_cand.transpose() * da;
      dh_next = d_hx.head(hidden);
      g.d_input.row(t) = d_hx.tail(x.cols()).transpose();
      continue;
    }

    const Vector z = trace.gate_z.row(t).transpose();
    const Vector r = trace.gate_r.row(t).transpose();
    const Vector cand = trace.cand.row(t).transpose();

    const Vector d_z = dh.cwiseProduct(cand - h_prev);
    const Vector d_cand = dh.cwiseProduct(z);
    Vector d_h_prev = dh.cwiseProduct((1.0 - z.array()).matrix());

    const Vector da_g = (d_cand.array() * (1.0 - cand.array().square())).matrix();
    const Vector rh = r.cwiseProduct(h_prev);
    g.param.w_cand.noalias() += da_g * concat(rh, xt).transpose();
    g.param.b_cand += da_g;
    const Vector d_rhx = p.w_cand.transpose() * da_g;
    const Vector d_rh = d_rhx.head(hidden);
    Vector d_x = d_rhx.tail(x.cols());
    const Vector d_r = d_rh.cwiseProduct(h_prev);
    d_h_prev += d_rh.cwiseProduct(r);

    const Vector da_z = (d_z.array() * z.array() * (1.0 - z.array())).matrix();
    const Vector da_r = (d_r.array() * r.array() * (1.0 - r.array())).matrix();
    const Vector hx = concat(h_prev, xt);
    g.param.w_update.noalias() += da_z * hx.transpose();
    g.param.w_reset.noalias() += da_r * hx.transpose();
    g.param.b_update += da_z;
    g.param.b_reset += da_r;

    const Vector d_hx = p.w_update.transpose() * da_z + p.w_reset.transpose() * da_r;
    d_h_prev += d_hx.head(hidden);
    d_x += d_hx.tail(x.cols());

    dh_next = d_h_prev;
    g.d_input.row(t) = d_x.transpose();
  }
  return g;
}

double dense(const Vector& h, const DenseParams& p) {
  if (h.size() != p.weight.size()) throw ShapeMismatch("dense input size");
  return p.weight.dot(h) + p.bias;
}

Vector dense_sequence(const Matrix& h, const DenseParams& p) {
  if (h.cols() != p.weight.size()) throw ShapeMismatch("dense input width");
  return ((h * p.weight.transpose()).array() + p.bias).matrix();
}

DenseGrads dense_backward(const Matrix& h, const DenseParams& p, const Vector& d_y) {
  if (h.cols() != p.weight.size()) throw ShapeMismatch("dense input width");
  if (d_y.size() != h.rows()) throw ShapeMismatch("dense output gradient length");
  DenseGrads g;
  g.param.weight = d_y.transpose() * h;
  g.param.bias = d_y.sum();
  g.d_h = d_y * p.weight;
  return g;
}

namespace {

void check_pair(const Vector& pred, const Vector& truth) {
  if (pred.size() == 0 || truth.size() == 0) throw EmptyVector();
  if (pred.size() != truth.size())
    throw LengthMismatch(static_cast<std::size_t>(pred.size()),
                         static_cast<std::size_t>(truth.size()));
}

}  // namespace

double mse(const Vector& pred, const Vector& truth) {
  check_pair(pred, truth);
  return (pred - truth).squaredNorm() / static_cast<double>(pred.size());
}

double mae(const Vector& pred, const Vector& truth) {
  check_pair(pred, truth);
  return (pred - truth).cwiseAbs().sum() / static_cast<double>(pred.size());
}

Vector mse_gradient(const Vector& pred, const Vector& truth) {
  check_pair(pred, truth);
  return 2.0 * (pred - truth) / static_cast<double>(pred.size());
}

}  // namespace cachecast
