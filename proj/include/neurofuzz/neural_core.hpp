// Copyright 2026 The neurofuzz Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Stacked LSTM/GRU character model: parameters, forward pass, loss and
// backpropagation through time.
//
// Each recurrent layer keeps one weight matrix over the concatenated
// [input; previous hidden] vector, shape (in + s) x (gates * s), and one bias
// row of gates * s. Gate blocks are laid out column-wise:
//   LSTM: input | forget | output | candidate
//   GRU:  update | reset | candidate
// Activations of a whole batch are stored time-major: row t * batch + b.

#ifndef NEUROFUZZ_NEURAL_CORE_HPP
#define NEUROFUZZ_NEURAL_CORE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "neurofuzz/error.hpp"
#include "neurofuzz/random.hpp"
#include "neurofuzz/seq_data.hpp"

namespace neurofuzz {

enum class CellType { Lstm, Gru };

inline constexpr std::string_view to_string(CellType c) { return c == CellType::Lstm ? "lstm" : "gru"; }

inline CellType cell_type_from_string(std::string_view s) {
  if (s == "lstm" || s == "LSTM") return CellType::Lstm;
  if (s == "gru" || s == "GRU") return CellType::Gru;
  throw Error(ErrorCode::InvalidConfig, "unknown cell type '" + std::string(s) + "'");
}

inline constexpr std::size_t gate_count(CellType c) { return c == CellType::Lstm ? 4 : 3; }

/// ElementwiseBinary sums y*log(p) + (1-y)*log(1-p) over every softmax
/// component; Categorical is the usual -log(p_target).
enum class LossKind { ElementwiseBinary, Categorical };

inline constexpr std::string_view to_string(LossKind k) {
  return k == LossKind::ElementwiseBinary ? "elementwise-binary" : "categorical";
}

inline LossKind loss_kind_from_string(std::string_view s) {
  if (s == "elementwise-binary") return LossKind::ElementwiseBinary;
  if (s == "categorical") return LossKind::Categorical;
  throw Error(ErrorCode::InvalidConfig, "unknown loss '" + std::string(s) + "'");
}

struct ModelConfig {
  CellType cell = CellType::Gru;
  std::size_t layers = 1;
  std::size_t hidden = 64;
  std::size_t vocab = 0;
  double dropout = 0.3;
  LossKind loss = LossKind::ElementwiseBinary;

  void validate() const {
    if (layers < 1) throw Error(ErrorCode::InvalidConfig, "layers must be >= 1");
    if (hidden < 1) throw Error(ErrorCode::InvalidConfig, "hidden size must be >= 1");
    if (vocab < 1) throw Error(ErrorCode::InvalidConfig, "vocabulary size must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::InvalidConfig, "dropout must be in [0, 1)");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Number of trainable scalars: recurrent layers plus the dense output layer.
inline std::uint64_t count_parameters(const ModelConfig& c) {
  const std::uint64_t g = gate_count(c.cell), s = c.hidden, v = c.vocab, l = c.layers;
  const std::uint64_t first = g * ((v + s) * s + s);
  const std::uint64_t rest = (l - 1) * g * ((2 * s) * s + s);
  return first + rest + s * v + v;
}

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

/// Reductions accumulate in at least 64 bits.
template <class S>
using Accum = std::conditional_t<(sizeof(S) > sizeof(double)), S, double>;

inline double glorot_bound(std::size_t n_in, std::size_t n_out) {
  return std::sqrt(6.0) / std::sqrt(static_cast<double>(n_in + n_out));
}

/// n_in x n_out matrix drawn uniformly from the open Glorot interval.
template <class S>
Matrix<S> glorot_init(std::size_t n_in, std::size_t n_out, RandomStream& rng) {
  const double bound = glorot_bound(n_in, n_out);
  Matrix<S> m(n_in, n_out);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    S v = static_cast<S>(rng.symmetric(bound));
    // Narrowing may round onto the bound itself.
    while (std::abs(static_cast<double>(v)) >= bound) v = std::nextafter(v, S(0));
    m.data()[i] = v;
  }
  return m;
}

template <class S>
struct LayerParams {
  CellType cell = CellType::Gru;
  std::size_t input_size = 0;
  std::size_t hidden = 0;
  Matrix<S> weights;  // (input_size + hidden) x (gates * hidden)
  RowVector<S> bias;  // gates * hidden

  std::size_t gates() const { return gate_count(cell); }
  auto input_weights() const { return weights.topRows(static_cast<Eigen::Index>(input_size)); }
  auto recurrent_weights() const { return weights.bottomRows(static_cast<Eigen::Index>(hidden)); }
};

template <class S>
struct OutputLayerParams {
  Matrix<S> weights;  // hidden x vocab
  RowVector<S> bias;  // vocab
};

template <class S>
struct TensorView {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<S> data;
};

/// A full set of model parameters. Gradients use the same type.
template <class S>
struct Model {
  ModelConfig config;
  std::vector<LayerParams<S>> layers;
  OutputLayerParams<S> output;

  static Model zeros(const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.config = cfg;
    const auto g = static_cast<Eigen::Index>(gate_count(cfg.cell));
    const auto s = static_cast<Eigen::Index>(cfg.hidden);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      LayerParams<S> p;
      p.cell = cfg.cell;
      p.input_size = l == 0 ? cfg.vocab : cfg.hidden;
      p.hidden = cfg.hidden;
      p.weights = Matrix<S>::Zero(static_cast<Eigen::Index>(p.input_size) + s, g * s);
      p.bias = RowVector<S>::Zero(g * s);
      m.layers.push_back(std::move(p));
    }
    m.output.weights = Matrix<S>::Zero(s, static_cast<Eigen::Index>(cfg.vocab));
    m.output.bias = RowVector<S>::Zero(static_cast<Eigen::Index>(cfg.vocab));
    return m;
  }

  /// Glorot-uniform weights, zero biases.
  static Model initialized(const ModelConfig& cfg, RandomStream& rng) {
    Model m = zeros(cfg);
    for (auto& p : m.layers) {
      p.weights = glorot_init<S>(static_cast<std::size_t>(p.weights.rows()),
                                 static_cast<std::size_t>(p.weights.cols()), rng);
    }
    m.output.weights = glorot_init<S>(cfg.hidden, cfg.vocab, rng);
    return m;
  }

  std::vector<TensorView<S>> tensors() {
    std::vector<TensorView<S>> out;
    auto add = [&](std::string name, auto& t) {
      std::vector<std::size_t> shape;
      if (t.rows() != 1 || std::is_same_v<std::decay_t<decltype(t)>, Matrix<S>>)
        shape.push_back(static_cast<std::size_t>(t.rows()));
      shape.push_back(static_cast<std::size_t>(t.cols()));
      out.push_back({std::move(name), std::move(shape), std::span<S>(t.data(), static_cast<std::size_t>(t.size()))});
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
      add("layer" + std::to_string(l) + ".weights", layers[l].weights);
      add("layer" + std::to_string(l) + ".bias", layers[l].bias);
    }
    add("output.weights", output.weights);
    add("output.bias", output.bias);
    return out;
  }

  std::vector<TensorView<const S>> tensors() const {
    std::vector<TensorView<const S>> out;
    for (auto& t : const_cast<Model*>(this)->tensors())
      out.push_back({std::move(t.name), std::move(t.shape), std::span<const S>(t.data.data(), t.data.size())});
    return out;
  }

  std::uint64_t allocated_parameters() const {
    std::uint64_t n = 0;
    for (const auto& t : tensors()) n += t.data.size();
    return n;
  }

  template <class T>
  Model<T> cast() const {
    Model<T> m;
    m.config = config;
    for (const auto& p : layers) {
      LayerParams<T> q;
      q.cell = p.cell;
      q.input_size = p.input_size;
      q.hidden = p.hidden;
      q.weights = p.weights.template cast<T>();
      q.bias = p.bias.template cast<T>();
      m.layers.push_back(std::move(q));
    }
    m.output.weights = output.weights.template cast<T>();
    m.output.bias = output.bias.template cast<T>();
    return m;
  }

  void set_zero() {
    for (auto& t : tensors()) std::fill(t.data.begin(), t.data.end(), S(0));
  }
};

namespace detail {

template <class S>
void sigmoid_inplace(Eigen::Ref<Matrix<S>> x) {
  x = (S(1) / (S(1) + (-x.array()).exp())).matrix();
}

template <class S>
void tanh_inplace(Eigen::Ref<Matrix<S>> x) {
  x = x.array().tanh().matrix();
}

// One LSTM step for B rows. `gates` enters holding pre-activations
// (x Wx + h_prev Wh + b) and leaves holding activations.
template <class S>
void lstm_cell(Matrix<S>& gates, const Matrix<S>& c_prev, Matrix<S>& c, Matrix<S>& tanh_c, Matrix<S>& h) {
  const Eigen::Index s = c_prev.cols();
  sigmoid_inplace<S>(gates.leftCols(3 * s));
  tanh_inplace<S>(gates.rightCols(s));
  const auto i = gates.leftCols(s).array();
  const auto f = gates.middleCols(s, s).array();
  const auto o = gates.middleCols(2 * s, s).array();
  const auto g = gates.rightCols(s).array();
  c = (f * c_prev.array() + i * g).matrix();
  tanh_c = c.array().tanh().matrix();
  h = (o * tanh_c.array()).matrix();
}

// One GRU step. `gates` enters with the update/reset pre-activations in its
// first 2s columns and the input part of the candidate (x Wxc + bc) in the
// last s columns; it leaves holding z | r | candidate activations.
template <class S>
void gru_cell(Matrix<S>& gates, const Matrix<S>& h_prev, const Matrix<S>& recurrent_candidate_weights,
              Matrix<S>& reset_h, Matrix<S>& h) {
  const Eigen::Index s = h_prev.cols();
  sigmoid_inplace<S>(gates.leftCols(2 * s));
  reset_h = (gates.middleCols(s, s).array() * h_prev.array()).matrix();
  gates.rightCols(s).noalias() += reset_h * recurrent_candidate_weights;
  tanh_inplace<S>(gates.rightCols(s));
  const auto z = gates.leftCols(s).array();
  const auto cand = gates.rightCols(s).array();
  h = ((S(1) - z) * h_prev.array() + z * cand).matrix();
}

template <class S>
void check_shape(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

}  // namespace detail

template <class S>
struct LstmState {
  RowVector<S> h;
  RowVector<S> c;
};

/// Single LSTM step on a dense input vector.
template <class S>
LstmState<S> lstm_forward(const RowVector<S>& x, const RowVector<S>& h_prev, const RowVector<S>& c_prev,
                          const LayerParams<S>& p) {
  detail::check_shape<S>(p.cell == CellType::Lstm, "lstm_forward needs LSTM parameters");
  detail::check_shape<S>(static_cast<std::size_t>(x.size()) == p.input_size, "lstm_forward: input size");
  detail::check_shape<S>(static_cast<std::size_t>(h_prev.size()) == p.hidden &&
                             static_cast<std::size_t>(c_prev.size()) == p.hidden,
                         "lstm_forward: state size");
  Matrix<S> gates = x * p.input_weights() + h_prev * p.recurrent_weights();
  gates += p.bias;
  Matrix<S> c, tanh_c, h;
  detail::lstm_cell<S>(gates, Matrix<S>(c_prev), c, tanh_c, h);
  return {RowVector<S>(h), RowVector<S>(c)};
}

/// Single GRU step on a dense input vector.
template <class S>
RowVector<S> gru_forward(const RowVector<S>& x, const RowVector<S>& h_prev, const LayerParams<S>& p) {
  detail::check_shape<S>(p.cell == CellType::Gru, "gru_forward needs GRU parameters");
  detail::check_shape<S>(static_cast<std::size_t>(x.size()) == p.input_size, "gru_forward: input size");
  detail::check_shape<S>(static_cast<std::size_t>(h_prev.size()) == p.hidden, "gru_forward: state size");
  const auto s = static_cast<Eigen::Index>(p.hidden);
  Matrix<S> gates = x * p.input_weights();
  gates.leftCols(2 * s) += h_prev * p.recurrent_weights().leftCols(2 * s);
  gates += p.bias;
  Matrix<S> reset_h, h;
  detail::gru_cell<S>(gates, Matrix<S>(h_prev), Matrix<S>(p.recurrent_weights().rightCols(s)), reset_h, h);
  return RowVector<S>(h);
}

/// Softmax outputs of a batch, time-major: row t * batch + b.
template <class S>
struct ProbabilityTensor {
  std::size_t batch = 0;
  std::size_t steps = 0;
  Matrix<S> rows;

  std::size_t vocab() const { return static_cast<std::size_t>(rows.cols()); }
  S operator()(std::size_t b, std::size_t t, std::size_t j) const {
    return rows(static_cast<Eigen::Index>(t * batch + b), static_cast<Eigen::Index>(j));
  }
};

template <class S>
struct LayerTrace {
  Matrix<S> input;    // layers >= 1: dropped output of the layer below, T*B x in
  Matrix<S> h;        // (T+1)*B x s; first B rows are the zero initial state
  Matrix<S> c;        // LSTM cell state, same layout as h
  Matrix<S> tanh_c;   // LSTM, T*B x s
  Matrix<S> reset_h;  // GRU r * h_prev, T*B x s
  Matrix<S> gates;    // T*B x gates*s, post-activation
  Matrix<S> mask;     // dropout multipliers on the output, T*B x s; empty when off
};

/// Activations retained by stacked_forward for backward().
template <class S>
struct ForwardCache {
  std::size_t batch = 0;
  std::size_t steps = 0;
  IndexSeq inputs;   // time-major
  IndexSeq targets;  // time-major
  std::vector<LayerTrace<S>> layers;
  Matrix<S> top;  // dropped output of the last recurrent layer
  ProbabilityTensor<S> probs;
  bool valid = false;
};

namespace detail {

template <class S>
void forward_layer(const LayerParams<S>& p, const Matrix<S>& xw, std::size_t batch, std::size_t steps,
                   LayerTrace<S>& tr) {
  const auto B = static_cast<Eigen::Index>(batch);
  const auto T = static_cast<Eigen::Index>(steps);
  const auto s = static_cast<Eigen::Index>(p.hidden);
  const auto G = static_cast<Eigen::Index>(p.gates());
  const auto wh = p.recurrent_weights();
  tr.h = Matrix<S>::Zero((T + 1) * B, s);
  tr.gates.resize(T * B, G * s);
  Matrix<S> gates(B, G * s), h(B, s), h_prev(B, s);
  if (p.cell == CellType::Lstm) {
    tr.c = Matrix<S>::Zero((T + 1) * B, s);
    tr.tanh_c.resize(T * B, s);
    Matrix<S> c(B, s), c_prev(B, s), tanh_c(B, s);
    for (Eigen::Index t = 0; t < T; ++t) {
      h_prev = tr.h.middleRows(t * B, B);
      c_prev = tr.c.middleRows(t * B, B);
      gates.noalias() = h_prev * wh;
      gates += xw.middleRows(t * B, B);
      lstm_cell<S>(gates, c_prev, c, tanh_c, h);
      tr.gates.middleRows(t * B, B) = gates;
      tr.c.middleRows((t + 1) * B, B) = c;
      tr.tanh_c.middleRows(t * B, B) = tanh_c;
      tr.h.middleRows((t + 1) * B, B) = h;
    }
  } else {
    tr.reset_h.resize(T * B, s);
    const Matrix<S> wh_zr = wh.leftCols(2 * s);
    const Matrix<S> wh_c = wh.rightCols(s);
    Matrix<S> reset_h(B, s);
    for (Eigen::Index t = 0; t < T; ++t) {
      h_prev = tr.h.middleRows(t * B, B);
      gates = xw.middleRows(t * B, B);
      gates.leftCols(2 * s).noalias() += h_prev * wh_zr;
      gru_cell<S>(gates, h_prev, wh_c, reset_h, h);
      tr.gates.middleRows(t * B, B) = gates;
      tr.reset_h.middleRows(t * B, B) = reset_h;
      tr.h.middleRows((t + 1) * B, B) = h;
    }
  }
}

template <class S>
void softmax_rows(Matrix<S>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const S max = row.maxCoeff();
    row = (row.array() - max).exp().matrix();
    Accum<S> sum = 0;
    for (Eigen::Index j = 0; j < row.size(); ++j) sum += static_cast<Accum<S>>(row[j]);
    row /= static_cast<S>(sum);
  }
}

}  // namespace detail

/// Runs the stacked network over a batch. Dropout is active only when
/// `dropout_rng` is given (training mode). Pass `cache` to keep the
/// activations needed by backward().
template <class S>
ProbabilityTensor<S> stacked_forward(const SequenceBatch& batch, const Model<S>& model,
                                     RandomStream* dropout_rng = nullptr, ForwardCache<S>* cache = nullptr) {
  const auto& cfg = model.config;
  detail::check_shape<S>(model.layers.size() == cfg.layers && !model.layers.empty(), "model layer count");
  detail::check_shape<S>(batch.inputs.size() == batch.batch * batch.seq_len &&
                             batch.targets.size() == batch.inputs.size() && batch.batch > 0 && batch.seq_len > 0,
                         "batch storage does not match its dimensions");
  const std::size_t B = batch.batch, T = batch.seq_len;
  const auto rows = static_cast<Eigen::Index>(B * T);

  IndexSeq inputs(B * T), targets(B * T);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      const auto in = batch.input(b, t), out = batch.target(b, t);
      if (in < 0 || static_cast<std::size_t>(in) >= cfg.vocab || out < 0 ||
          static_cast<std::size_t>(out) >= cfg.vocab) {
        throw Error(ErrorCode::IndexOutOfAlphabet, "batch index outside the model vocabulary");
      }
      inputs[t * B + b] = in;
      targets[t * B + b] = out;
    }
  }

  ForwardCache<S> local;
  ForwardCache<S>& fc = cache ? *cache : local;
  fc.valid = false;
  fc.batch = B;
  fc.steps = T;
  fc.layers.assign(cfg.layers, LayerTrace<S>{});
  const bool dropout = dropout_rng != nullptr && cfg.dropout > 0.0;
  const double keep = 1.0 - cfg.dropout;

  Matrix<S> below;  // input to the current layer (layers >= 1)
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto& p = model.layers[l];
    auto& tr = fc.layers[l];
    Matrix<S> xw(rows, static_cast<Eigen::Index>(p.gates() * p.hidden));
    if (l == 0) {
      // One-hot input: x Wx selects a row of the input weights.
      const auto wx = p.input_weights();
      for (Eigen::Index r = 0; r < rows; ++r) xw.row(r) = wx.row(inputs[static_cast<std::size_t>(r)]);
    } else {
      xw.noalias() = below * p.input_weights();
      if (cache) tr.input = below;
    }
    xw.rowwise() += p.bias;
    detail::forward_layer<S>(p, xw, B, T, tr);
    below = tr.h.bottomRows(rows);
    if (dropout) {
      tr.mask.resize(rows, below.cols());
      const S scale = static_cast<S>(1.0 / keep);
      for (Eigen::Index i = 0; i < tr.mask.size(); ++i)
        tr.mask.data()[i] = dropout_rng->bernoulli(keep) ? scale : S(0);
      below.array() *= tr.mask.array();
    }
  }

  ProbabilityTensor<S> probs;
  probs.batch = B;
  probs.steps = T;
  probs.rows.noalias() = below * model.output.weights;
  probs.rows.rowwise() += model.output.bias;
  detail::softmax_rows(probs.rows);

  if (cache) {
    fc.inputs = std::move(inputs);
    fc.targets = std::move(targets);
    fc.top = std::move(below);
    fc.probs = probs;
    fc.valid = true;
  } else {
    fc.layers.clear();
  }
  return probs;
}

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean loss over all batch x steps positions. `targets` is in SequenceBatch
/// (window-major) order.
template <class S>
Accum<S> loss(const ProbabilityTensor<S>& probs, const SequenceBatch& batch,
            LossKind kind = LossKind::ElementwiseBinary) {
  detail::check_shape<S>(probs.batch == batch.batch && probs.steps == batch.seq_len &&
                             static_cast<std::size_t>(probs.rows.rows()) == batch.batch * batch.seq_len,
                         "loss: probability tensor does not match batch");
  using A = Accum<S>;
  const A lo = kProbabilityClamp, hi = A(1) - A(kProbabilityClamp);
  A total = 0;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    for (std::size_t t = 0; t < batch.seq_len; ++t) {
      const auto target = static_cast<std::size_t>(batch.target(b, t));
      detail::check_shape<S>(target < probs.vocab(), "loss: target outside vocabulary");
      if (kind == LossKind::Categorical) {
        total += std::log(std::clamp(static_cast<A>(probs(b, t, target)), lo, hi));
        continue;
      }
      for (std::size_t j = 0; j < probs.vocab(); ++j) {
        const A p = std::clamp(static_cast<A>(probs(b, t, j)), lo, hi);
        total += j == target ? std::log(p) : std::log(A(1) - p);
      }
    }
  }
  return -total / static_cast<A>(batch.batch * batch.seq_len);
}

namespace detail {

// d(loss)/d(logits) for time-major probabilities and targets.
template <class S>
Matrix<S> loss_logit_gradient(const Matrix<S>& probs, const IndexSeq& targets, LossKind kind) {
  using A = Accum<S>;
  const A lo = kProbabilityClamp, hi = A(1) - A(kProbabilityClamp);
  const A inv_n = A(1) / static_cast<A>(probs.rows());
  Matrix<S> grad(probs.rows(), probs.cols());
  std::vector<A> dp(static_cast<std::size_t>(probs.cols()));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const auto target = static_cast<Eigen::Index>(targets[static_cast<std::size_t>(r)]);
    A dot = 0;
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      const A p = static_cast<A>(probs(r, j));
      A g = 0;
      if (p > lo && p < hi) {
        if (j == target) {
          g = -A(1) / p;
        } else if (kind == LossKind::ElementwiseBinary) {
          g = A(1) / (A(1) - p);
        }
      }
      dp[static_cast<std::size_t>(j)] = g;
      dot += g * p;
    }
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      const A p = static_cast<A>(probs(r, j));
      grad(r, j) = static_cast<S>(p * (dp[static_cast<std::size_t>(j)] - dot) * inv_n);
    }
  }
  return grad;
}

}  // namespace detail

/// Gradients of loss(stacked_forward(batch)) with respect to every
/// parameter, by backpropagation through the full window.
template <class S>
Model<S> backward(const SequenceBatch& batch, const Model<S>& model, const ForwardCache<S>& cache) {
  if (!cache.valid) throw Error(ErrorCode::MissingCache, "backward() needs a forward pass run with a cache");
  if (cache.batch != batch.batch || cache.steps != batch.seq_len || cache.layers.size() != model.layers.size()) {
    throw Error(ErrorCode::MissingCache, "cached forward pass belongs to a different batch or model");
  }
  const auto& cfg = model.config;
  const auto B = static_cast<Eigen::Index>(cache.batch);
  const auto T = static_cast<Eigen::Index>(cache.steps);
  const Eigen::Index rows = B * T;

  Model<S> grads = Model<S>::zeros(cfg);
  const Matrix<S> d_logits = detail::loss_logit_gradient(cache.probs.rows, cache.targets, cfg.loss);
  grads.output.weights.noalias() = cache.top.transpose() * d_logits;
  grads.output.bias = d_logits.colwise().sum();
  Matrix<S> d_above = d_logits * model.output.weights.transpose();

  for (std::size_t li = cfg.layers; li-- > 0;) {
    const auto& p = model.layers[li];
    const auto& tr = cache.layers[li];
    auto& gp = grads.layers[li];
    const auto s = static_cast<Eigen::Index>(p.hidden);
    const auto G = static_cast<Eigen::Index>(p.gates());
    if (tr.mask.size() != 0) d_above.array() *= tr.mask.array();

    const auto wh = p.recurrent_weights();
    Matrix<S> dz(rows, G * s);
    Matrix<S> dh_next = Matrix<S>::Zero(B, s);
    Matrix<S> dh(B, s), dzt(B, G * s);

    if (p.cell == CellType::Lstm) {
      const Matrix<S> wh_t = wh.transpose();
      Matrix<S> dc_next = Matrix<S>::Zero(B, s);
      for (Eigen::Index t = T; t-- > 0;) {
        dh = d_above.middleRows(t * B, B) + dh_next;
        const auto gates = tr.gates.middleRows(t * B, B);
        const auto i = gates.leftCols(s).array();
        const auto f = gates.middleCols(s, s).array();
        const auto o = gates.middleCols(2 * s, s).array();
        const auto g = gates.rightCols(s).array();
        const auto tc = tr.tanh_c.middleRows(t * B, B).array();
        const auto c_prev = tr.c.middleRows(t * B, B).array();
        const Matrix<S> dc = (dc_next.array() + dh.array() * o * (S(1) - tc * tc)).matrix();
        dzt.leftCols(s) = (dc.array() * g * i * (S(1) - i)).matrix();
        dzt.middleCols(s, s) = (dc.array() * c_prev * f * (S(1) - f)).matrix();
        dzt.middleCols(2 * s, s) = (dh.array() * tc * o * (S(1) - o)).matrix();
        dzt.rightCols(s) = (dc.array() * i * (S(1) - g * g)).matrix();
        dc_next = (dc.array() * f).matrix();
        dh_next.noalias() = dzt * wh_t;
        dz.middleRows(t * B, B) = dzt;
      }
      gp.weights.bottomRows(s).noalias() = tr.h.topRows(rows).transpose() * dz;
    } else {
      const Matrix<S> wh_zr_t = wh.leftCols(2 * s).transpose();
      const Matrix<S> wh_c_t = wh.rightCols(s).transpose();
      Matrix<S> d_rh(B, s), dhp(B, s);
      for (Eigen::Index t = T; t-- > 0;) {
        dh = d_above.middleRows(t * B, B) + dh_next;
        const auto gates = tr.gates.middleRows(t * B, B);
        const auto z = gates.leftCols(s).array();
        const auto r = gates.middleCols(s, s).array();
        const auto cand = gates.rightCols(s).array();
        const auto hp = tr.h.middleRows(t * B, B).array();
        dzt.rightCols(s) = (dh.array() * z * (S(1) - cand * cand)).matrix();
        d_rh.noalias() = dzt.rightCols(s) * wh_c_t;
        dzt.leftCols(s) = (dh.array() * (cand - hp) * z * (S(1) - z)).matrix();
        dzt.middleCols(s, s) = (d_rh.array() * hp * r * (S(1) - r)).matrix();
        dhp = (dh.array() * (S(1) - z) + d_rh.array() * r).matrix();
        dhp.noalias() += dzt.leftCols(2 * s) * wh_zr_t;
        dh_next = dhp;
        dz.middleRows(t * B, B) = dzt;
      }
      gp.weights.bottomRows(s).leftCols(2 * s).noalias() = tr.h.topRows(rows).transpose() * dz.leftCols(2 * s);
      gp.weights.bottomRows(s).rightCols(s).noalias() = tr.reset_h.transpose() * dz.rightCols(s);
    }

    gp.bias = dz.colwise().sum();
    if (li == 0) {
      auto gx = gp.weights.topRows(static_cast<Eigen::Index>(p.input_size));
      for (Eigen::Index r = 0; r < rows; ++r) gx.row(cache.inputs[static_cast<std::size_t>(r)]) += dz.row(r);
    } else {
      gp.weights.topRows(static_cast<Eigen::Index>(p.input_size)).noalias() = tr.input.transpose() * dz;
      d_above.noalias() = dz * p.input_weights().transpose();
    }
  }
  return grads;
}

/// Recurrent state threaded through single-character steps (sampling).
template <class S>
struct StepState {
  std::vector<Matrix<S>> h;
  std::vector<Matrix<S>> c;

  static StepState zeros(const ModelConfig& cfg) {
    StepState st;
    const auto s = static_cast<Eigen::Index>(cfg.hidden);
    st.h.assign(cfg.layers, Matrix<S>::Zero(1, s));
    if (cfg.cell == CellType::Lstm) st.c.assign(cfg.layers, Matrix<S>::Zero(1, s));
    return st;
  }
};

/// Advances the state by one input character and returns the raw output
/// logits (before softmax), in inference mode.
template <class S>
RowVector<S> step_logits(const Model<S>& model, StepState<S>& state, std::int32_t input) {
  const auto& cfg = model.config;
  if (input < 0 || static_cast<std::size_t>(input) >= cfg.vocab)
    throw Error(ErrorCode::IndexOutOfAlphabet, "step input outside the model vocabulary");
  Matrix<S> x;  // dense input for layers >= 1
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto& p = model.layers[l];
    const auto s = static_cast<Eigen::Index>(p.hidden);
    Matrix<S> gates = l == 0 ? Matrix<S>(p.input_weights().row(input)) : Matrix<S>(x * p.input_weights());
    gates += p.bias;
    Matrix<S> h;
    if (p.cell == CellType::Lstm) {
      gates.noalias() += state.h[l] * p.recurrent_weights();
      Matrix<S> c, tanh_c;
      detail::lstm_cell<S>(gates, state.c[l], c, tanh_c, h);
      state.c[l] = std::move(c);
    } else {
      gates.leftCols(2 * s).noalias() += state.h[l] * p.recurrent_weights().leftCols(2 * s);
      Matrix<S> reset_h;
      detail::gru_cell<S>(gates, state.h[l], Matrix<S>(p.recurrent_weights().rightCols(s)), reset_h, h);
    }
    state.h[l] = h;
    x = std::move(h);
  }
  RowVector<S> logits = x * model.output.weights;
  logits += model.output.bias;
  return logits;
}

}  // namespace neurofuzz

#endif  // NEUROFUZZ_NEURAL_CORE_HPP
