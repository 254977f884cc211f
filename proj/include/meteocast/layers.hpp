#pragma once

#include <cstddef>
#include <utility>

#include "meteocast/rng.hpp"
#include "meteocast/tensor.hpp"

namespace meteo {

// Forward and analytic-backward implementations of every layer in the
// network: LSTM cell, directional sequence pass, bidirectional wrapper,
// dropout, attention scorer, and the time-distributed output head.
//
// Each forward can record a cache; the matching *_backward consumes it and
// returns parameter gradients plus the gradient w.r.t. the layer input, so
// layers compose by plain chain rule. Calling a backward with an empty
// cache throws StateError.

inline constexpr std::size_t kAttentionHidden = 64;

struct DenseParams {
  Tensor weights;  // [in, out]
  Tensor bias;     // [out]

  std::size_t input_size() const { return weights.dim(0); }
  std::size_t output_size() const { return weights.dim(1); }

  /// Glorot-uniform kernel, zero bias.
  static DenseParams glorot(std::size_t in, std::size_t out, RngStream& rng);
};

/// LSTM parameters with fused gate kernels.
/// Gate column order is fixed and serialized as-is: input, forget,
/// candidate, output: columns [0,H), [H,2H), [2H,3H), [3H,4H).
struct LstmParams {
  Tensor input_kernel;      // [in, 4H]
  Tensor recurrent_kernel;  // [H, 4H]
  Tensor bias;              // [4H]

  std::size_t input_size() const { return input_kernel.dim(0); }
  std::size_t units() const { return recurrent_kernel.dim(0); }

  /// Glorot-uniform kernels, zero bias except the forget gate columns,
  /// which start at +1.
  static LstmParams init(std::size_t in, std::size_t units, RngStream& rng,
                         double forget_bias = 1.0);
};

struct LstmParamGrads {
  Tensor input_kernel;
  Tensor recurrent_kernel;
  Tensor bias;

  static LstmParamGrads zeros_like(const LstmParams& p);
};

/// One cell update. Returns (h_t, c_t).
std::pair<Tensor, Tensor> lstm_cell_step(const Tensor& x, const Tensor& h_prev,
                                         const Tensor& c_prev, const LstmParams& p);

/// Per-timestep internals of one directional pass, in processing order.
struct LstmSeqCache {
  Tensor input;      // [T, in] as processed (already flipped when reverse)
  Tensor gate_i, gate_f, gate_g, gate_o;  // [T, H], post-activation
  Tensor cell;       // [T, H]
  Tensor cell_tanh;  // [T, H]
  Tensor hidden;     // [T, H]
  bool reverse = false;

  bool empty() const { return input.empty(); }
};

/// Runs the cell over a sequence with zero initial state. Output rows are
/// always in the input's temporal order; with reverse=true the sequence is
/// processed back-to-front and the outputs flipped back before returning.
Tensor lstm_sequence_forward(const Tensor& seq, const LstmParams& p, bool reverse,
                             LstmSeqCache* cache = nullptr);

struct LstmSeqGrads {
  LstmParamGrads params;
  Tensor input;  // [T, in], in the original temporal order
};

/// BPTT through one directional pass. `upstream` is d(loss)/d(output) in
/// the original temporal order, matching what the forward returned.
LstmSeqGrads lstm_sequence_backward(const LstmSeqCache& cache, const LstmParams& p,
                                    const Tensor& upstream);

struct BilstmCache {
  LstmSeqCache fwd;
  LstmSeqCache bwd;
  bool empty() const { return fwd.empty(); }
};

/// Per-timestep concatenation [forward states ‖ backward states] -> [T, 2H].
Tensor bilstm_forward(const Tensor& seq, const LstmParams& fwd, const LstmParams& bwd,
                      BilstmCache* cache = nullptr);

struct BilstmGrads {
  LstmParamGrads fwd;
  LstmParamGrads bwd;
  Tensor input;  // [T, in]
};

BilstmGrads bilstm_backward(const BilstmCache& cache, const LstmParams& fwd,
                            const LstmParams& bwd, const Tensor& upstream);

struct DropoutResult {
  Tensor output;
  Tensor mask;  // Bernoulli(1-rate) zeros/ones; all ones at inference
};

/// Inverted dropout: training output is x * mask / (1-rate) so the
/// expectation matches the inference pass-through.
DropoutResult dropout_apply(const Tensor& x, double rate, RngStream& rng, bool training);

Tensor dropout_backward(const Tensor& upstream, const Tensor& mask, double rate);

struct AttentionCache {
  Tensor input;       // [T, 2H]
  Tensor hidden_act;  // [T, 64], tanh of first scorer layer
  Tensor weights;     // [T]
  bool empty() const { return input.empty(); }
};

struct AttentionResult {
  Tensor weighted;  // [T, 2H], rows scaled by their weight; temporal structure kept
  Tensor weights;   // [T], softmax over timesteps, returned for reporting
};

/// Per-timestep score = score2(tanh(score1(h_t))), softmax over time,
/// then each row of h is scaled by its weight. The scorer widths are the
/// fixed architecture: hidden 64, output 1.
AttentionResult attention_apply(const Tensor& h, const DenseParams& score1,
                                const DenseParams& score2, AttentionCache* cache = nullptr);

struct AttentionGrads {
  Tensor score1_weights, score1_bias;
  Tensor score2_weights, score2_bias;
  Tensor input;  // [T, 2H]
};

AttentionGrads attention_backward(const AttentionCache& cache, const DenseParams& score1,
                                  const DenseParams& score2, const Tensor& upstream);

/// Same affine map applied to every timestep row: [T, D] -> [T, out].
Tensor time_distributed_dense(const Tensor& h, const DenseParams& p);

struct TdDenseGrads {
  Tensor weights, bias;
  Tensor input;
};

TdDenseGrads time_distributed_dense_backward(const Tensor& input, const DenseParams& p,
                                             const Tensor& upstream);

}  // namespace meteo
