#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "meteocast/data.hpp"
#include "meteocast/layers.hpp"
#include "meteocast/rng.hpp"
#include "meteocast/tensor.hpp"

namespace meteo {

// The forecasting network: a stack of BiLSTM layers with dropout after
// each, per-timestep attention re-weighting, and a shared dense head
// mapping every timestep to the three output features.

struct HParams {
  std::size_t n_past = 22;
  std::size_t n_future = 48;
  double learning_rate = 0.0031;
  double dropout_rate = 0.053;
  std::size_t n_bilstm_layers = 2;
  std::size_t units_per_direction = 8;
  std::size_t batch_size = 64;

  std::size_t window_len() const { return n_past + n_future; }

  /// Throws ConfigError on any out-of-range field.
  void validate() const;
};

struct BilstmLayerParams {
  LstmParams fwd;
  LstmParams bwd;
};

struct ForecastNet {
  HParams hparams;
  std::vector<BilstmLayerParams> stack;  // layer 1 input width 7, rest 2H
  DenseParams att_score1;                // 2H -> 64
  DenseParams att_score2;                // 64 -> 1
  DenseParams head;                      // 2H -> 3
  std::array<Scaler, kNumFeatures> scalers;
  std::uint64_t seed = 0;
};

/// Deterministic initialization: same (hparams, seed) gives bit-identical
/// parameters. Scalers start as identity [0,1] placeholders.
ForecastNet build_model(const HParams& h, std::uint64_t seed);

/// Uniform views over all trainable tensors, in the fixed serialization
/// order: per layer fwd/bwd (input kernel, recurrent kernel, bias), then
/// attention scorer 1, scorer 2, head.
std::vector<Tensor*> parameter_tensors(ForecastNet& net);
std::vector<const Tensor*> parameter_tensors(const ForecastNet& net);
std::vector<std::string> parameter_names(const ForecastNet& net);
std::size_t parameter_count(const ForecastNet& net);

struct ForwardResult {
  Tensor predictions;        // [B, T, 3]
  Tensor attention_weights;  // [B, T], each row sums to 1
};

struct SampleCache {
  std::vector<BilstmCache> bilstm;   // one per layer
  std::vector<Tensor> dropout_mask;  // one per layer, [T, 2H]
  AttentionCache attention;
  Tensor att_weighted;               // [T, 2H], input to the head
  bool training = false;             // whether dropout scaling was applied
};

struct ForwardCaches {
  std::vector<SampleCache> samples;
};

/// Batched forward pass. `batch` is [B, T, 7] with T == n_past + n_future,
/// already in scaled model space. Dropout draws one sub-seed per sample
/// from `rng` up front, so results do not depend on n_threads; with
/// training=false no randomness is consumed and the pass is pure.
ForwardResult forward(const ForecastNet& net, const Tensor& batch, bool training,
                      RngStream& rng, ForwardCaches* caches = nullptr, int n_threads = 1);

struct NetGrads {
  std::vector<LstmParamGrads> fwd;  // per layer
  std::vector<LstmParamGrads> bwd;  // per layer
  Tensor att1_weights, att1_bias;
  Tensor att2_weights, att2_bias;
  Tensor head_weights, head_bias;
  Tensor input;  // [B, T, 7] when requested, else empty

  static NetGrads zeros_like(const ForecastNet& net);
  void add(const NetGrads& other);
  void scale(double a);
};

std::vector<Tensor*> gradient_tensors(NetGrads& g);
std::vector<const Tensor*> gradient_tensors(const NetGrads& g);

/// Backpropagation through the whole network. `upstream` is
/// d(loss)/d(predictions), shape [B, T, 3]. Per-sample contributions are
/// reduced in sample order regardless of n_threads.
NetGrads backward(const ForecastNet& net, const ForwardCaches& caches, const Tensor& upstream,
                  bool want_input_grads = false, int n_threads = 1);

/// Mean absolute error over the final n_future timesteps only, averaged
/// over batch, timesteps, and features; n_future is targets.dim(1).
double loss_mae(const ForwardResult& result, const Tensor& targets);

/// d(loss_mae)/d(predictions): sign(pred - target) / (B * n_future * 3) on
/// the final n_future steps, zero elsewhere, with sign(0) = 0.
Tensor loss_mae_grad(const ForwardResult& result, const Tensor& targets);

// Versioned single-file checkpoint: magic, version, JSON manifest
// (hparams, seed, rng algorithm, scalers, tensor shapes), then raw
// little-endian doubles per tensor in parameter order.
void save_checkpoint(const ForecastNet& net, const std::string& path);
ForecastNet load_checkpoint(const std::string& path);

}  // namespace meteo
