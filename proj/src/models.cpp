#include "cachecast/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cachecast/errors.hpp"
#include "cachecast/rng.hpp"

namespace cachecast {

namespace {

using json = nlohmann::ordered_json;

constexpr double kInitBiasForget = 1.0;

void fill_uniform(Matrix& m, double scale, SplitMix64& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.next_symmetric(scale);
}

void fill_uniform(RowVector& v, double scale, SplitMix64& rng) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.next_symmetric(scale);
}

std::string base64_encode(const unsigned char* data, std::size_t len) {
  static const char* alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    unsigned int chunk = data[i] << 16;
    if (i + 1 < len) chunk |= data[i + 1] << 8;
    if (i + 2 < len) chunk |= data[i + 2];
    out.push_back(alphabet[(chunk >> 18) & 63]);
    out.push_back(alphabet[(chunk >> 12) & 63]);
    out.push_back(i + 1 < len ? alphabet[(chunk >> 6) & 63] : '=');
    out.push_back(i + 2 < len ? alphabet[chunk & 63] : '=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw CorruptCheckpoint("base64 length");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = text[i + j];
      if (c == '=' && i + 4 == text.size() && j >= 2) {
        vals[j] = 0;
        ++pad;
      } else {
        vals[j] = value_of(c);
        if (vals[j] < 0 || pad > 0) throw CorruptCheckpoint("base64 character");
      }
    }
    const unsigned int chunk = (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
    out.push_back((chunk >> 16) & 0xFF);
    if (pad < 2) out.push_back((chunk >> 8) & 0xFF);
    if (pad < 1) out.push_back(chunk & 0xFF);
  }
  return out;
}

/// Row-major byte blob of one tensor view.
std::string encode_tensor(const ParamView& view) {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(view.size()) * sizeof(double));
  std::size_t offset = 0;
  for (Eigen::Index r = 0; r < view.rows; ++r)
    for (Eigen::Index c = 0; c < view.cols; ++c) {
      // views are column-major Eigen storage
      std::memcpy(bytes.data() + offset, view.data + (c * view.rows + r), sizeof(double));
      offset += sizeof(double);
    }
  return base64_encode(bytes.data(), bytes.size());
}

void decode_tensor(const ParamView& view, const std::string& blob) {
  const auto bytes = base64_decode(blob);
  if (bytes.size() != static_cast<std::size_t>(view.size()) * sizeof(double))
    throw CorruptCheckpoint("tensor byte count for " + view.name);
  std::size_t offset = 0;
  for (Eigen::Index r = 0; r < view.rows; ++r)
    for (Eigen::Index c = 0; c < view.cols; ++c) {
      std::memcpy(view.data + (c * view.rows + r), bytes.data() + offset, sizeof(double));
      offset += sizeof(double);
    }
}

const LearnedParams& learned(const Model& model) {
  if (!model.params) throw InvalidSpec("heuristic model has no network parameters");
  return *model.params;
}

}  // namespace

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::CnnLstm: return "cnn-lstm";
    case ModelKind::Lstm: return "lstm";
    case ModelKind::Gru: return "gru";
    case ModelKind::Rnn: return "rnn";
    case ModelKind::LruHeuristic: return "lru";
    case ModelKind::LfuHeuristic: return "lfu";
  }
  return "?";
}

std::optional<ModelKind> model_kind_from_string(std::string_view name) {
  if (name == "cnn-lstm") return ModelKind::CnnLstm;
  if (name == "lstm") return ModelKind::Lstm;
  if (name == "gru") return ModelKind::Gru;
  if (name == "rnn") return ModelKind::Rnn;
  if (name == "lru") return ModelKind::LruHeuristic;
  if (name == "lfu") return ModelKind::LfuHeuristic;
  return std::nullopt;
}

bool is_learned(ModelKind kind) {
  return kind == ModelKind::CnnLstm || kind == ModelKind::Lstm || kind == ModelKind::Gru ||
         kind == ModelKind::Rnn;
}

ArchSpec default_arch(ModelKind kind, std::uint64_t seed) {
  ArchSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  spec.hidden_size = is_learned(kind) ? 16 : 0;
  if (kind == ModelKind::CnnLstm) spec.conv_layers = {{16, 3}, {8, 3}};
  return spec;
}

Model init_model(const ArchSpec& spec, int input_width) {
  if (input_width < 1) throw InvalidSpec("input width must be positive");
  if (!spec.conv_layers.empty() && spec.kind != ModelKind::CnnLstm)
    throw InvalidSpec("conv layers are only valid for cnn-lstm");

  Model model;
  model.spec = spec;
  model.input_width = input_width;
  if (!is_learned(spec.kind)) return model;

  if (spec.hidden_size < 1) throw InvalidSpec("hidden size must be positive");
  for (const auto& layer : spec.conv_layers) {
    if (layer.out_channels < 1) throw InvalidSpec("conv layer needs at least one channel");
    if (layer.kernel_width < 1 || layer.kernel_width % 2 == 0)
      throw InvalidSpec("conv kernel width must be odd");
  }

  SplitMix64 rng(spec.seed);
  LearnedParams params;

  int width = input_width;
  for (const auto& layer : spec.conv_layers) {
    Conv1dParams conv;
    const double scale = std::sqrt(1.0 / (static_cast<double>(width) * layer.kernel_width));
    conv.taps.resize(layer.kernel_width);
    for (auto& tap : conv.taps) {
      tap.resize(layer.out_channels, width);
      fill_uniform(tap, scale, rng);
    }
    conv.bias = Vector::Zero(layer.out_channels);
    params.conv.push_back(std::move(conv));
    width = layer.out_channels;
  }

  const int hidden = spec.hidden_size;
  const double core_scale = std::sqrt(1.0 / (hidden + width));
  if (spec.kind == ModelKind::CnnLstm || spec.kind == ModelKind::Lstm) {
    LstmParams lstm;
    for (Matrix* w : {&lstm.w_input, &lstm.w_forget, &lstm.w_output, &lstm.w_cell}) {
      w->resize(hidden, hidden + width);
      fill_uniform(*w, core_scale, rng);
    }
    lstm.b_input = Vector::Zero(hidden);
    lstm.b_forget = Vector::Constant(hidden, kInitBiasForget);
    lstm.b_output = Vector::Zero(hidden);
    lstm.b_cell = Vector::Zero(hidden);
    params.core = std::move(lstm);
  } else {
    RecurrentParams rec;
    rec.kind = spec.kind == ModelKind::Gru ? RecurrentKind::Gru : RecurrentKind::VanillaRnn;
    if (rec.kind == RecurrentKind::Gru) {
      for (Matrix* w : {&rec.w_update, &rec.w_reset, &rec.w_cand}) {
        w->resize(hidden, hidden + width);
        fill_uniform(*w, core_scale, rng);
      }
      rec.b_update = Vector::Zero(hidden);
      rec.b_reset = Vector::Zero(hidden);
    } else {
      rec.w_cand.resize(hidden, hidden + width);
      fill_uniform(rec.w_cand, core_scale, rng);
    }
    rec.b_cand = Vector::Zero(hidden);
    params.core = std::move(rec);
  }

  params.head.weight.resize(hidden);
  fill_uniform(params.head.weight, std::sqrt(1.0 / hidden), rng);
  params.head.bias = 0.0;

  model.params = std::move(params);
  return model;
}

ForwardTrace model_forward(const Model& model, const Matrix& x) {
  const LearnedParams& p = learned(model);
  if (x.cols() != model.input_width) throw ShapeMismatch("model input width");

  ForwardTrace trace;
  trace.input = x;
  const Matrix* current = &trace.input;
  for (const auto& conv : p.conv) {
    trace.conv_out.push_back(conv1d_forward(*current, conv, model.spec.conv_activation));
    current = &trace.conv_out.back();
  }

  const Matrix* hidden = nullptr;
  if (std::holds_alternative<LstmParams>(p.core)) {
    trace.core = lstm_forward(*current, std::get<LstmParams>(p.core));
    hidden = &std::get<LstmTrace>(trace.core).h;
  } else {
    trace.core = recurrent_forward(*current, std::get<RecurrentParams>(p.core));
    hidden = &std::get<RecurrentTrace>(trace.core).h;
  }
  trace.prediction = dense_sequence(*hidden, p.head);
  return trace;
}

LearnedParams model_backward(const Model& model, const ForwardTrace& trace,
                             const Vector& d_prediction) {
  const LearnedParams& p = learned(model);

  LearnedParams grads;
  const Matrix* core_input = p.conv.empty() ? &trace.input : &trace.conv_out.back();

  const Matrix* hidden = std::holds_alternative<LstmTrace>(trace.core)
                             ? &std::get<LstmTrace>(trace.core).h
                             : &std::get<RecurrentTrace>(trace.core).h;
  DenseGrads head = dense_backward(*hidden, p.head, d_prediction);
  grads.head = std::move(head.param);

  Matrix d_core_input;
  if (std::holds_alternative<LstmParams>(p.core)) {
    LstmGrads core = lstm_backward(*core_input, std::get<LstmParams>(p.core),
                                   std::get<LstmTrace>(trace.core), head.d_h);
    grads.core = std::move(core.param);
    d_core_input = std::move(core.d_input);
  } else {
    RecurrentGrads core = recurrent_backward(*core_input, std::get<RecurrentParams>(p.core),
                                             std::get<RecurrentTrace>(trace.core), head.d_h);
    grads.core = std::move(core.param);
    d_core_input = std::move(core.d_input);
  }

  grads.conv.resize(p.conv.size());
  Matrix d_out = std::move(d_core_input);
  for (std::size_t i = p.conv.size(); i-- > 0;) {
    const Matrix& layer_input = i == 0 ? trace.input : trace.conv_out[i - 1];
    Conv1dGrads conv =
        conv1d_backward(layer_input, p.conv[i], model.spec.conv_activation, d_out);
    grads.conv[i] = std::move(conv.param);
    d_out = std::move(conv.d_input);
  }
  return grads;
}

std::pair<double, LearnedParams> sequence_loss_and_grad(const Model& model, const Matrix& x,
                                                        const Vector& target) {
  ForwardTrace trace = model_forward(model, x);
  const double loss = mse(trace.prediction, target);
  LearnedParams grads = model_backward(model, trace, mse_gradient(trace.prediction, target));
  return {loss, std::move(grads)};
}

DemandSeries predict_sequence(const Model& model, const FeatureMatrix& features) {
  DemandSeries out;
  out.block_id = features.block_id;
  const Matrix& x = features.values;

  switch (model.spec.kind) {
    case ModelKind::LruHeuristic: {
      if (x.cols() <= kFeatRecencyGap) throw ShapeMismatch("missing recency_gap column");
      out.values = (1.0 / (1.0 + x.col(kFeatRecencyGap).array())).matrix();
      return out;
    }
    case ModelKind::LfuHeuristic: {
      if (x.cols() <= kFeatGlobalLoad) throw ShapeMismatch("missing global_load column");
      out.values.resize(x.rows());
      double count_sum = 0.0, load_sum = 0.0;
      for (Eigen::Index t = 0; t < x.rows(); ++t) {
        count_sum += x(t, kFeatAccessCount);
        load_sum += x(t, kFeatGlobalLoad);
        out.values[t] = load_sum > 0.0 ? count_sum / load_sum : 0.0;
      }
      return out;
    }
    default: {
      const Matrix input = model.norm ? apply_norm(x, *model.norm) : x;
      out.values = model_forward(model, input).prediction;
      return out;
    }
  }
}

std::size_t count_params(const Model& model) {
  if (!model.params) return 0;
  return static_cast<std::size_t>(param_count(*model.params));
}

std::vector<ParamView> param_views(LearnedParams& p) {
  std::vector<ParamView> views;
  auto add_matrix = [&](const std::string& name, Matrix& m) {
    views.push_back({name, m.data(), m.rows(), m.cols()});
  };
  auto add_vector = [&](const std::string& name, Vector& v) {
    views.push_back({name, v.data(), v.size(), 1});
  };

  for (std::size_t i = 0; i < p.conv.size(); ++i) {
    for (std::size_t j = 0; j < p.conv[i].taps.size(); ++j)
      add_matrix("conv" + std::to_string(i) + ".tap" + std::to_string(j), p.conv[i].taps[j]);
    add_vector("conv" + std::to_string(i) + ".bias", p.conv[i].bias);
  }

  if (std::holds_alternative<LstmParams>(p.core)) {
    auto& lstm = std::get<LstmParams>(p.core);
    add_matrix("lstm.w_input", lstm.w_input);
    add_matrix("lstm.w_forget", lstm.w_forget);
    add_matrix("lstm.w_output", lstm.w_output);
    add_matrix("lstm.w_cell", lstm.w_cell);
    add_vector("lstm.b_input", lstm.b_input);
    add_vector("lstm.b_forget", lstm.b_forget);
    add_vector("lstm.b_output", lstm.b_output);
    add_vector("lstm.b_cell", lstm.b_cell);
  } else {
    auto& rec = std::get<RecurrentParams>(p.core);
    if (rec.kind == RecurrentKind::Gru) {
      add_matrix("gru.w_update", rec.w_update);
      add_matrix("gru.w_reset", rec.w_reset);
      add_matrix("gru.w_cand", rec.w_cand);
      add_vector("gru.b_update", rec.b_update);
      add_vector("gru.b_reset", rec.b_reset);
      add_vector("gru.b_cand", rec.b_cand);
    } else {
      add_matrix("rnn.weight", rec.w_cand);
      add_vector("rnn.bias", rec.b_cand);
    }
  }

  views.push_back({"head.weight", p.head.weight.data(), 1, p.head.weight.size()});
  views.push_back({"head.bias", &p.head.bias, 1, 1});
  return views;
}

Eigen::Index param_count(const LearnedParams& p) {
  auto views = param_views(const_cast<LearnedParams&>(p));
  Eigen::Index n = 0;
  for (const auto& v : views) n += v.size();
  return n;
}

Vector flatten(const LearnedParams& p) {
  auto views = param_views(const_cast<LearnedParams&>(p));
  Vector out(param_count(p));
  Eigen::Index at = 0;
  for (const auto& v : views) {
    std::copy(v.data, v.data + v.size(), out.data() + at);
    at += v.size();
  }
  return out;
}

void assign_flat(LearnedParams& p, const Vector& values) {
  if (values.size() != param_count(p)) throw ShapeMismatch("flat parameter vector size");
  auto views = param_views(p);
  Eigen::Index at = 0;
  for (const auto& v : views) {
    std::copy(values.data() + at, values.data() + at + v.size(), v.data);
    at += v.size();
  }
}

GradReport grad_check(Model& model, const std::vector<std::pair<Matrix, Vector>>& batch,
                      double epsilon, double analytic_scale) {
  if (!model.params) throw InvalidSpec("cannot gradient-check a heuristic model");
  if (batch.empty()) throw EmptyVector();
  if (epsilon < 1e-7 || epsilon > 1e-3) throw ConfigError("epsilon outside [1e-7, 1e-3]");

  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  auto batch_loss = [&]() {
    double total = 0.0;
    for (const auto& [x, y] : batch) total += mse(model_forward(model, x).prediction, y);
    return total * inv_batch;
  };

  Vector analytic = Vector::Zero(param_count(*model.params));
  for (const auto& [x, y] : batch) analytic += flatten(sequence_loss_and_grad(model, x, y).second);
  analytic *= inv_batch * analytic_scale;

  GradReport report;
  auto views = param_views(*model.params);
  Eigen::Index at = 0;
  for (const auto& view : views) {
    double tensor_max = 0.0;
    for (Eigen::Index i = 0; i < view.size(); ++i) {
      double& theta = view.data[i];
      const double saved = theta;
      theta = saved + epsilon;
      const double up = batch_loss();
      theta = saved - epsilon;
      const double down = batch_loss();
      theta = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[at + i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      tensor_max = std::max(tensor_max, rel);
    }
    report.per_tensor[view.name] = tensor_max;
    report.max_rel_error = std::max(report.max_rel_error, tensor_max);
    at += view.size();
  }
  return report;
}

// --- checkpoint io ---

namespace {

json arch_to_json(const ArchSpec& spec) {
  json conv = json::array();
  for (const auto& layer : spec.conv_layers)
    conv.push_back({layer.out_channels, layer.kernel_width});
  return json{{"kind", to_string(spec.kind)},
              {"conv", conv},
              {"conv_activation", spec.conv_activation == Activation::ReLU ? "relu" : "identity"},
              {"hidden", spec.hidden_size},
              {"seed", spec.seed}};
}

ArchSpec arch_from_json(const json& j) {
  ArchSpec spec;
  const auto kind = model_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw CorruptCheckpoint("unknown model kind");
  spec.kind = *kind;
  for (const auto& layer : j.at("conv"))
    spec.conv_layers.push_back({layer.at(0).get<int>(), layer.at(1).get<int>()});
  const auto act = j.at("conv_activation").get<std::string>();
  if (act == "relu") spec.conv_activation = Activation::ReLU;
  else if (act == "identity") spec.conv_activation = Activation::Identity;
  else throw CorruptCheckpoint("unknown conv activation");
  spec.hidden_size = j.at("hidden").get<int>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  return spec;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  json doc;
  doc["arch"] = arch_to_json(model.spec);
  doc["input_width"] = model.input_width;
  if (model.norm) {
    doc["norm"]["mean"] = std::vector<double>(model.norm->mean.begin(), model.norm->mean.end());
    doc["norm"]["std"] =
        std::vector<double>(model.norm->stddev.begin(), model.norm->stddev.end());
  } else {
    doc["norm"] = nullptr;
  }
  doc["tensors"] = json::array();
  if (model.params) {
    auto views = param_views(const_cast<LearnedParams&>(*model.params));
    for (const auto& view : views)
      doc["tensors"].push_back({{"name", view.name},
                                {"rows", view.rows},
                                {"cols", view.cols},
                                {"data", encode_tensor(view)}});
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << kCheckpointMagic << '\n' << doc.dump() << '\n';
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint: " + path);
  std::string header;
  if (!std::getline(in, header)) throw CorruptCheckpoint("empty file");
  if (header != kCheckpointMagic) {
    if (header.starts_with("CACHECAST-CKPT")) throw VersionMismatch(header);
    throw CorruptCheckpoint("bad magic line");
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(e.what());
  }

  try {
    Model model = init_model(arch_from_json(doc.at("arch")), doc.at("input_width").get<int>());
    if (!doc.at("norm").is_null()) {
      NormStats stats;
      const auto mean = doc["norm"].at("mean").get<std::vector<double>>();
      const auto stddev = doc["norm"].at("std").get<std::vector<double>>();
      if (mean.size() != static_cast<std::size_t>(model.input_width) ||
          stddev.size() != mean.size())
        throw CorruptCheckpoint("normalization width");
      stats.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
      stats.stddev =
          Eigen::Map<const Vector>(stddev.data(), static_cast<Eigen::Index>(stddev.size()));
      model.norm = std::move(stats);
    }
    if (model.params) {
      auto views = param_views(*model.params);
      const auto& tensors = doc.at("tensors");
      if (tensors.size() != views.size()) throw CorruptCheckpoint("tensor count");
      for (std::size_t i = 0; i < views.size(); ++i) {
        const auto& t = tensors[i];
        if (t.at("name").get<std::string>() != views[i].name ||
            t.at("rows").get<Eigen::Index>() != views[i].rows ||
            t.at("cols").get<Eigen::Index>() != views[i].cols)
          throw CorruptCheckpoint("tensor layout for " + views[i].name);
        decode_tensor(views[i], t.at("data").get<std::string>());
      }
    } else if (!doc.at("tensors").empty()) {
      throw CorruptCheckpoint("heuristic checkpoint carries tensors");
    }
    return model;
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(e.what());
  }
}

}  // namespace cachecast
