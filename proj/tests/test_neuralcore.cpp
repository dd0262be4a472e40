#include <doctest.h>

#include <cmath>

#include "cachecast/errors.hpp"
#include "cachecast/neuralcore.hpp"
#include "cachecast/rng.hpp"

using namespace cachecast;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, SplitMix64& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.next_symmetric(scale);
  return m;
}

Vector random_vector(Eigen::Index n, SplitMix64& rng, double scale = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.next_symmetric(scale);
  return v;
}

Conv1dParams random_conv(int out, int in, int k, SplitMix64& rng) {
  Conv1dParams p;
  for (int j = 0; j < k; ++j) p.taps.push_back(random_matrix(out, in, rng, 0.5));
  p.bias = random_vector(out, rng, 0.5);
  return p;
}

/// Direct triple-loop convolution, independent of the production kernel.
Matrix conv_reference(const Matrix& x, const Conv1dParams& p, Activation act) {
  const int k = p.kernel_width();
  const int half = (k - 1) / 2;
  Matrix out(x.rows(), p.out_channels());
  for (Eigen::Index t = 0; t < x.rows(); ++t)
    for (int o = 0; o < p.out_channels(); ++o) {
      double acc = p.bias[o];
      for (int c = 0; c < p.in_channels(); ++c)
        for (int j = 0; j < k; ++j) {
          const Eigen::Index src = t + j - half;
          if (src < 0 || src >= x.rows()) continue;
          acc += p.taps[j](o, c) * x(src, c);
        }
      out(t, o) = act == Activation::ReLU ? std::max(0.0, acc) : acc;
    }
  return out;
}

LstmParams zero_lstm(int hidden, int input) {
  LstmParams p;
  p.w_input = Matrix::Zero(hidden, hidden + input);
  p.w_forget = p.w_input;
  p.w_output = p.w_input;
  p.w_cell = p.w_input;
  p.b_input = Vector::Zero(hidden);
  p.b_forget = p.b_input;
  p.b_output = p.b_input;
  p.b_cell = p.b_input;
  return p;
}

LstmParams random_lstm(int hidden, int input, SplitMix64& rng) {
  LstmParams p = zero_lstm(hidden, input);
  p.w_input = random_matrix(hidden, hidden + input, rng, 0.5);
  p.w_forget = random_matrix(hidden, hidden + input, rng, 0.5);
  p.w_output = random_matrix(hidden, hidden + input, rng, 0.5);
  p.w_cell = random_matrix(hidden, hidden + input, rng, 0.5);
  p.b_input = random_vector(hidden, rng, 0.5);
  p.b_forget = random_vector(hidden, rng, 0.5);
  p.b_output = random_vector(hidden, rng, 0.5);
  p.b_cell = random_vector(hidden, rng, 0.5);
  return p;
}

}  // namespace

TEST_CASE("width-1 identity kernel reproduces the input") {
  Conv1dParams p;
  p.taps = {Matrix::Identity(1, 1)};
  p.bias = Vector::Zero(1);
  Matrix x(4, 1);
  x << 1, 2, 3, 4;
  const Matrix y = conv1d_forward(x, p, Activation::Identity);
  CHECK(y == x);
}

TEST_CASE("width-3 box kernel slides with zero padding") {
  Conv1dParams p;
  p.taps = {Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1)};
  p.bias = Vector::Zero(1);
  Matrix x(4, 1);
  x << 1, 2, 3, 4;
  const Matrix y = conv1d_forward(x, p, Activation::Identity);
  CHECK(y(0, 0) == doctest::Approx(3.0));
  CHECK(y(1, 0) == doctest::Approx(6.0));
  CHECK(y(2, 0) == doctest::Approx(9.0));
  CHECK(y(3, 0) == doctest::Approx(7.0));
  CHECK(y == conv_reference(x, p, Activation::Identity));
}

TEST_CASE("relu clamps all-negative pre-activations to zero") {
  Conv1dParams p;
  p.taps = {Matrix::Ones(2, 1)};
  p.bias = Vector::Constant(2, -100.0);
  Matrix x(3, 1);
  x << 1, 2, 3;
  const Matrix y = conv1d_forward(x, p, Activation::ReLU);
  CHECK(y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("conv matches the reference kernel on random shapes") {
  SplitMix64 rng(11);
  for (const int k : {1, 3, 5}) {
    const auto p = random_conv(3, 2, k, rng);
    const Matrix x = random_matrix(9, 2, rng);
    for (const auto act : {Activation::Identity, Activation::ReLU}) {
      const Matrix got = conv1d_forward(x, p, act);
      const Matrix want = conv_reference(x, p, act);
      CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("conv with identity activation and zero bias is linear") {
  SplitMix64 rng(5);
  Conv1dParams p = random_conv(4, 3, 3, rng);
  p.bias.setZero();
  const Matrix x = random_matrix(7, 3, rng);
  const Matrix y = random_matrix(7, 3, rng);
  const double a = 1.7, b = -0.4;
  const Matrix lhs = conv1d_forward(a * x + b * y, p, Activation::Identity);
  const Matrix rhs = a * conv1d_forward(x, p, Activation::Identity) +
                     b * conv1d_forward(y, p, Activation::Identity);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("even or missing kernel widths are rejected") {
  Conv1dParams p;
  p.taps = {Matrix::Ones(1, 1), Matrix::Ones(1, 1)};
  p.bias = Vector::Zero(1);
  Matrix x(3, 1);
  x.setOnes();
  CHECK_THROWS_AS(conv1d_forward(x, p, Activation::Identity), ShapeMismatch);
}

TEST_CASE("lstm cell zero case") {
  const auto p = zero_lstm(3, 2);
  const auto step = lstm_cell(Vector::Zero(2), Vector::Zero(3), Vector::Zero(3), p);
  CHECK(step.h.cwiseAbs().maxCoeff() == 0.0);
  CHECK(step.c.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scalar lstm cell with unit cell bias") {
  LstmParams p = zero_lstm(1, 1);
  p.b_cell[0] = 1.0;
  Vector one = Vector::Ones(1);
  const auto step = lstm_cell(Vector::Zero(1), Vector::Zero(1), one, p);
  const double expected_c = 0.5 * 1.0 + 0.5 * std::tanh(1.0);
  const double expected_h = 0.5 * std::tanh(expected_c);
  CHECK(step.c[0] == doctest::Approx(expected_c).epsilon(1e-12));
  CHECK(step.h[0] == doctest::Approx(expected_h).epsilon(1e-12));
  CHECK(step.c[0] == doctest::Approx(0.8808).epsilon(1e-4));
  CHECK(step.h[0] == doctest::Approx(0.3534).epsilon(1e-4));
}

TEST_CASE("lstm hidden state stays strictly inside the unit box") {
  SplitMix64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_lstm(4, 3, rng);
    const Matrix x = random_matrix(12, 3, rng, 2.0);
    const auto trace = lstm_forward(x, p);
    CHECK(trace.h.cwiseAbs().maxCoeff() < 1.0);
    CHECK((trace.gate_i.array() > 0.0).all());
    CHECK((trace.gate_i.array() < 1.0).all());
    CHECK((trace.gate_f.array() > 0.0).all());
    CHECK((trace.gate_o.array() < 1.0).all());
    // cell state can grow by at most 1 per step
    for (Eigen::Index t = 1; t < x.rows(); ++t)
      for (Eigen::Index j = 0; j < 4; ++j)
        CHECK(std::abs(trace.c(t, j)) <= std::abs(trace.c(t - 1, j)) + 1.0 + 1e-12);
  }
}

TEST_CASE("lstm full-sequence forward agrees with repeated single cells") {
  SplitMix64 rng(31);
  const auto p = random_lstm(5, 4, rng);
  const Matrix x = random_matrix(9, 4, rng);
  const auto trace = lstm_forward(x, p);
  Vector h = Vector::Zero(5), c = Vector::Zero(5);
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    const auto step = lstm_cell(x.row(t).transpose(), h, c, p);
    h = step.h;
    c = step.c;
    CHECK((trace.h.row(t).transpose() - h).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((trace.c.row(t).transpose() - c).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("cells reject inconsistent shapes") {
  const auto p = zero_lstm(3, 2);
  CHECK_THROWS_AS(lstm_cell(Vector::Zero(5), Vector::Zero(3), Vector::Zero(3), p), ShapeMismatch);
  CHECK_THROWS_AS(lstm_cell(Vector::Zero(2), Vector::Zero(4), Vector::Zero(3), p), ShapeMismatch);

  RecurrentParams r;
  r.kind = RecurrentKind::VanillaRnn;
  r.w_cand = Matrix::Zero(3, 5);
  r.b_cand = Vector::Zero(3);
  CHECK_THROWS_AS(recurrent_cell(Vector::Zero(4), Vector::Zero(3), r), ShapeMismatch);

  SplitMix64 rng(1);
  const Matrix x = random_matrix(6, 2, rng);
  CHECK_THROWS_AS(lstm_backward(x, p, lstm_forward(x, p), Matrix::Zero(5, 3)), ShapeMismatch);
}

TEST_CASE("vanilla rnn cell") {
  RecurrentParams p;
  p.kind = RecurrentKind::VanillaRnn;
  p.w_cand = Matrix::Zero(3, 5);
  p.b_cand = Vector::Zero(3);
  const Vector h = recurrent_cell(Vector::Ones(2), Vector::Ones(3), p);
  CHECK(h.cwiseAbs().maxCoeff() == 0.0);

  SplitMix64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    RecurrentParams q;
    q.kind = RecurrentKind::VanillaRnn;
    q.w_cand = random_matrix(3, 5, rng, 2.0);
    q.b_cand = random_vector(3, rng, 2.0);
    const Vector out = recurrent_cell(random_vector(2, rng, 3.0), random_vector(3, rng), q);
    CHECK(out.cwiseAbs().maxCoeff() < 1.0);
  }
}

TEST_CASE("gru cell with zero parameters halves the previous state") {
  RecurrentParams p;
  p.kind = RecurrentKind::Gru;
  p.w_update = Matrix::Zero(3, 5);
  p.w_reset = p.w_update;
  p.w_cand = p.w_update;
  p.b_update = Vector::Zero(3);
  p.b_reset = p.b_update;
  p.b_cand = p.b_update;
  Vector v(3);
  v << 0.4, -0.8, 1.2;
  const Vector h = recurrent_cell(Vector::Zero(2), v, p);
  CHECK((h - 0.5 * v).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("dense head") {
  DenseParams p;
  p.weight = RowVector::Zero(4);
  p.bias = 0.3;
  CHECK(dense(Vector::Ones(4), p) == doctest::Approx(0.3));

  DenseParams q;
  q.weight = RowVector::Ones(2);
  q.bias = 0.0;
  Vector h(2);
  h << 0.2, 0.5;
  CHECK(dense(h, q) == doctest::Approx(0.7));
  CHECK(dense(Vector::Zero(2), q) == doctest::Approx(q.bias));

  Matrix rows(2, 2);
  rows << 0.2, 0.5, 1.0, -1.0;
  const Vector y = dense_sequence(rows, q);
  CHECK(y[0] == doctest::Approx(0.7));
  CHECK(y[1] == doctest::Approx(0.0));

  CHECK_THROWS_AS(dense(Vector::Ones(3), q), ShapeMismatch);
}

TEST_CASE("mse and mae on closed-form vectors") {
  Vector pred(2), truth(2);
  pred << 0, 2;
  truth << 1, 0;
  CHECK(mse(pred, truth) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(mae(pred, truth) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(mse(truth, truth) == 0.0);
  CHECK(mae(truth, truth) == 0.0);

  CHECK_THROWS_AS(mse(Vector::Ones(2), Vector::Ones(3)), LengthMismatch);
  CHECK_THROWS_AS(mae(Vector(), Vector()), EmptyVector);
}

TEST_CASE("mae never exceeds the root of mse") {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector a = random_vector(8, rng, 3.0);
    const Vector b = random_vector(8, rng, 3.0);
    CHECK(mae(a, b) <= std::sqrt(mse(a, b)) + 1e-12);
  }
}

TEST_CASE("dense gradient matches the closed form") {
  SplitMix64 rng(29);
  const Matrix h = random_matrix(6, 3, rng);
  DenseParams p;
  p.weight = random_matrix(1, 3, rng);
  p.bias = 0.2;
  const Vector target = random_vector(6, rng);
  const Vector pred = dense_sequence(h, p);
  const auto g = dense_backward(h, p, mse_gradient(pred, target));

  const double t_count = 6.0;
  for (int j = 0; j < 3; ++j) {
    double expect = 0;
    for (int t = 0; t < 6; ++t) expect += 2.0 * (pred[t] - target[t]) * h(t, j);
    expect /= t_count;
    CHECK(g.param.weight[j] == doctest::Approx(expect).epsilon(1e-12));
  }
  double expect_b = 0;
  for (int t = 0; t < 6; ++t) expect_b += 2.0 * (pred[t] - target[t]);
  CHECK(g.param.bias == doctest::Approx(expect_b / t_count).epsilon(1e-12));
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
  SplitMix64 rng(37);
  const auto p = random_lstm(4, 3, rng);
  const Matrix x = random_matrix(8, 3, rng);
  const auto trace = lstm_forward(x, p);
  const auto g = lstm_backward(x, p, trace, Matrix::Zero(8, 4));
  CHECK(g.param.w_input.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.param.w_cell.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.param.b_forget.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.d_input.cwiseAbs().maxCoeff() == 0.0);
}
