#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "cachecast/featurize.hpp"
#include "cachecast/neuralcore.hpp"

namespace cachecast {

enum class ModelKind { CnnLstm, Lstm, Gru, Rnn, LruHeuristic, LfuHeuristic };

const char* to_string(ModelKind kind);
std::optional<ModelKind> model_kind_from_string(std::string_view name);
bool is_learned(ModelKind kind);

struct ConvLayerSpec {
  int out_channels = 0;
  int kernel_width = 0;
};

struct ArchSpec {
  ModelKind kind = ModelKind::CnnLstm;
  std::vector<ConvLayerSpec> conv_layers;  // CnnLstm only
  Activation conv_activation = Activation::ReLU;
  int hidden_size = 16;
  std::uint64_t seed = 0;
};

/// Conv stack (empty unless CnnLstm), one recurrent core, per-step dense head.
struct LearnedParams {
  std::vector<Conv1dParams> conv;
  std::variant<LstmParams, RecurrentParams> core;
  DenseParams head;
};

struct Model {
  ArchSpec spec;
  std::optional<LearnedParams> params;  // empty for heuristic kinds
  std::optional<NormStats> norm;        // applied to learned-model inputs
  int input_width = kFeatureCount;
};

/// Stock topologies: CnnLstm gets conv(16,k3)+conv(8,k3); learned kinds share
/// hidden size 16.
ArchSpec default_arch(ModelKind kind, std::uint64_t seed);

/// Weights uniform in [-s, s], s = sqrt(1/fan_in), from a counter-based
/// stream keyed by spec.seed; biases zero except the LSTM forget-gate bias,
/// which starts at 1.
Model init_model(const ArchSpec& spec, int input_width = kFeatureCount);

/// Maps a feature sequence to predicted demand. Learned kinds normalize with
/// the model's stored stats and run the network; LruHeuristic scores
/// 1/(1+recency_gap); LfuHeuristic scores cumulative access count over
/// cumulative global load. Heuristics read raw feature columns.
DemandSeries predict_sequence(const Model& model, const FeatureMatrix& features);

std::size_t count_params(const Model& model);

// --- parameter plumbing (fixed traversal order everywhere) ---

struct ParamView {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0;  // 1 for vectors/scalars
  Eigen::Index cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

std::vector<ParamView> param_views(LearnedParams& p);
Eigen::Index param_count(const LearnedParams& p);
Vector flatten(const LearnedParams& p);
void assign_flat(LearnedParams& p, const Vector& values);

// --- forward/backward through the assembled stack ---

struct ForwardTrace {
  Matrix input;                  // what the first layer consumed
  std::vector<Matrix> conv_out;  // post-activation output per conv layer
  std::variant<LstmTrace, RecurrentTrace> core;
  Vector prediction;
};

/// x must already be normalized (trainer path); predict_sequence wraps this.
ForwardTrace model_forward(const Model& model, const Matrix& x);

/// Gradients of the scalar loss w.r.t. every parameter, given dL/dy_t.
LearnedParams model_backward(const Model& model, const ForwardTrace& trace,
                             const Vector& d_prediction);

/// Mean-over-time MSE of one sequence plus its parameter gradient.
std::pair<double, LearnedParams> sequence_loss_and_grad(const Model& model,
                                                        const Matrix& x,
                                                        const Vector& target);

struct GradReport {
  std::map<std::string, double> per_tensor;  // max relative error by tensor
  double max_rel_error = 0.0;
};

/// Central-difference check of the analytic batch-loss gradient; relative
/// error denominator is max(|analytic|, |numeric|, 1e-8). analytic_scale is a
/// fault-injection hook: scaling the analytic gradient must trip the check.
GradReport grad_check(Model& model, const std::vector<std::pair<Matrix, Vector>>& batch,
                      double epsilon, double analytic_scale = 1.0);

// --- checkpointing ---

inline constexpr const char* kCheckpointMagic = "CACHECAST-CKPT v1";

/// Header line `CACHECAST-CKPT v1`, then a JSON document with the arch spec,
/// normalization stats, and base64 row-major 64-bit weight blobs.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace cachecast
