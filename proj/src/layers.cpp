#include "meteocast/layers.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "meteocast/errors.hpp"

namespace meteo {

namespace {

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void fill_glorot(Tensor& t, std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
  const double limit = glorot_limit(fan_in, fan_out);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t.at(i) = (2.0 * rng.next_uniform() - 1.0) * limit;
  }
}

Tensor flip_rows(const Tensor& t) {
  const std::size_t rows = t.dim(0), cols = t.dim(1);
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = t.data() + (rows - 1 - r) * cols;
    double* dst = out.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dst[c] = src[c];
  }
  return out;
}

}  // namespace

DenseParams DenseParams::glorot(std::size_t in, std::size_t out, RngStream& rng) {
  DenseParams p{Tensor({in, out}), Tensor({out})};
  fill_glorot(p.weights, in, out, rng);
  return p;
}

LstmParams LstmParams::init(std::size_t in, std::size_t units, RngStream& rng,
                            double forget_bias) {
  LstmParams p{Tensor({in, 4 * units}), Tensor({units, 4 * units}), Tensor({4 * units})};
  fill_glorot(p.input_kernel, in, 4 * units, rng);
  fill_glorot(p.recurrent_kernel, units, 4 * units, rng);
  for (std::size_t j = units; j < 2 * units; ++j) p.bias.at(j) = forget_bias;
  return p;
}

LstmParamGrads LstmParamGrads::zeros_like(const LstmParams& p) {
  return LstmParamGrads{Tensor(p.input_kernel.shape()), Tensor(p.recurrent_kernel.shape()),
                        Tensor(p.bias.shape())};
}

std::pair<Tensor, Tensor> lstm_cell_step(const Tensor& x, const Tensor& h_prev,
                                         const Tensor& c_prev, const LstmParams& p) {
  const std::size_t in = p.input_size();
  const std::size_t H = p.units();
  if (x.rank() != 1 || x.dim(0) != in || h_prev.rank() != 1 || h_prev.dim(0) != H ||
      c_prev.rank() != 1 || c_prev.dim(0) != H) {
    throw ShapeError("lstm_cell_step: got x " + x.shape_str() + ", h " + h_prev.shape_str() +
                     ", c " + c_prev.shape_str() + " for cell in=" + std::to_string(in) +
                     " H=" + std::to_string(H));
  }

  std::vector<double> a(p.bias.data(), p.bias.data() + 4 * H);
  const double* wx = p.input_kernel.data();
  for (std::size_t k = 0; k < in; ++k) {
    const double xv = x.at(k);
    const double* row = wx + k * 4 * H;
    for (std::size_t j = 0; j < 4 * H; ++j) a[j] += xv * row[j];
  }
  const double* wh = p.recurrent_kernel.data();
  for (std::size_t k = 0; k < H; ++k) {
    const double hv = h_prev.at(k);
    const double* row = wh + k * 4 * H;
    for (std::size_t j = 0; j < 4 * H; ++j) a[j] += hv * row[j];
  }

  Tensor h({H}), c({H});
  for (std::size_t j = 0; j < H; ++j) {
    const double gi = sigmoid(a[j]);
    const double gf = sigmoid(a[H + j]);
    const double gg = std::tanh(a[2 * H + j]);
    const double go = sigmoid(a[3 * H + j]);
    const double cj = gf * c_prev.at(j) + gi * gg;
    c.at(j) = cj;
    h.at(j) = go * std::tanh(cj);
  }
  return {std::move(h), std::move(c)};
}

Tensor lstm_sequence_forward(const Tensor& seq, const LstmParams& p, bool reverse,
                             LstmSeqCache* cache) {
  if (seq.empty() || seq.rank() != 2 || seq.dim(0) == 0) {
    throw ShapeError("lstm_sequence_forward: empty input sequence");
  }
  const std::size_t T = seq.dim(0);
  const std::size_t in = p.input_size();
  const std::size_t H = p.units();
  if (seq.dim(1) != in) {
    throw ShapeError("lstm_sequence_forward: input " + seq.shape_str() + " vs cell in=" +
                     std::to_string(in));
  }

  const Tensor input = reverse ? flip_rows(seq) : seq;
  Tensor gi({T, H}), gf({T, H}), gg({T, H}), go({T, H});
  Tensor cell({T, H}), cell_tanh({T, H}), hidden({T, H});

  std::vector<double> a(4 * H);
  std::vector<double> h_prev(H, 0.0), c_prev(H, 0.0);
  const double* wx = p.input_kernel.data();
  const double* wh = p.recurrent_kernel.data();
  const double* b = p.bias.data();

  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < 4 * H; ++j) a[j] = b[j];
    const double* xrow = input.data() + t * in;
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xrow[k];
      const double* row = wx + k * 4 * H;
      for (std::size_t j = 0; j < 4 * H; ++j) a[j] += xv * row[j];
    }
    for (std::size_t k = 0; k < H; ++k) {
      const double hv = h_prev[k];
      const double* row = wh + k * 4 * H;
      for (std::size_t j = 0; j < 4 * H; ++j) a[j] += hv * row[j];
    }
    for (std::size_t j = 0; j < H; ++j) {
      const double vi = sigmoid(a[j]);
      const double vf = sigmoid(a[H + j]);
      const double vg = std::tanh(a[2 * H + j]);
      const double vo = sigmoid(a[3 * H + j]);
      const double cj = vf * c_prev[j] + vi * vg;
      const double tcj = std::tanh(cj);
      gi.at2(t, j) = vi;
      gf.at2(t, j) = vf;
      gg.at2(t, j) = vg;
      go.at2(t, j) = vo;
      cell.at2(t, j) = cj;
      cell_tanh.at2(t, j) = tcj;
      const double hj = vo * tcj;
      hidden.at2(t, j) = hj;
      h_prev[j] = hj;
      c_prev[j] = cj;
    }
  }

  Tensor out = reverse ? flip_rows(hidden) : hidden;
  if (cache) {
    cache->input = input;
    cache->gate_i = std::move(gi);
    cache->gate_f = std::move(gf);
    cache->gate_g = std::move(gg);
    cache->gate_o = std::move(go);
    cache->cell = std::move(cell);
    cache->cell_tanh = std::move(cell_tanh);
    cache->hidden = std::move(hidden);
    cache->reverse = reverse;
  }
  return out;
}

LstmSeqGrads lstm_sequence_backward(const LstmSeqCache& cache, const LstmParams& p,
                                    const Tensor& upstream) {
  if (cache.empty()) {
    throw StateError("lstm_sequence_backward: no cached forward state");
  }
  const std::size_t T = cache.input.dim(0);
  const std::size_t in = p.input_size();
  const std::size_t H = p.units();
  if (upstream.rank() != 2 || upstream.dim(0) != T || upstream.dim(1) != H) {
    throw ShapeError("lstm_sequence_backward: upstream " + upstream.shape_str() +
                     " vs expected [" + std::to_string(T) + "," + std::to_string(H) + "]");
  }

  const Tensor up = cache.reverse ? flip_rows(upstream) : upstream;

  LstmParamGrads grads = LstmParamGrads::zeros_like(p);
  Tensor dinput({T, in});
  std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0);
  std::vector<double> da(4 * H);

  const double* wx = p.input_kernel.data();
  const double* wh = p.recurrent_kernel.data();
  double* dwx = grads.input_kernel.data();
  double* dwh = grads.recurrent_kernel.data();
  double* db = grads.bias.data();

  for (std::size_t t = T; t-- > 0;) {
    for (std::size_t j = 0; j < H; ++j) {
      const double vi = cache.gate_i.at2(t, j);
      const double vf = cache.gate_f.at2(t, j);
      const double vg = cache.gate_g.at2(t, j);
      const double vo = cache.gate_o.at2(t, j);
      const double tc = cache.cell_tanh.at2(t, j);
      const double c_prev = t > 0 ? cache.cell.at2(t - 1, j) : 0.0;

      const double dh = up.at2(t, j) + dh_next[j];
      const double dc = dc_next[j] + dh * vo * (1.0 - tc * tc);
      const double d_o = dh * tc;
      const double d_i = dc * vg;
      const double d_f = dc * c_prev;
      const double d_g = dc * vi;
      dc_next[j] = dc * vf;

      da[j] = d_i * vi * (1.0 - vi);
      da[H + j] = d_f * vf * (1.0 - vf);
      da[2 * H + j] = d_g * (1.0 - vg * vg);
      da[3 * H + j] = d_o * vo * (1.0 - vo);
    }

    const double* xrow = cache.input.data() + t * in;
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xrow[k];
      double* row = dwx + k * 4 * H;
      for (std::size_t j = 0; j < 4 * H; ++j) row[j] += xv * da[j];
    }
    if (t > 0) {
      for (std::size_t k = 0; k < H; ++k) {
        const double hv = cache.hidden.at2(t - 1, k);
        double* row = dwh + k * 4 * H;
        for (std::size_t j = 0; j < 4 * H; ++j) row[j] += hv * da[j];
      }
    }
    for (std::size_t j = 0; j < 4 * H; ++j) db[j] += da[j];

    double* dxrow = dinput.data() + t * in;
    for (std::size_t k = 0; k < in; ++k) {
      const double* row = wx + k * 4 * H;
      double s = 0.0;
      for (std::size_t j = 0; j < 4 * H; ++j) s += row[j] * da[j];
      dxrow[k] = s;
    }
    for (std::size_t k = 0; k < H; ++k) {
      const double* row = wh + k * 4 * H;
      double s = 0.0;
      for (std::size_t j = 0; j < 4 * H; ++j) s += row[j] * da[j];
      dh_next[k] = s;
    }
  }

  LstmSeqGrads out{std::move(grads), cache.reverse ? flip_rows(dinput) : std::move(dinput)};
  return out;
}

Tensor bilstm_forward(const Tensor& seq, const LstmParams& fwd, const LstmParams& bwd,
                      BilstmCache* cache) {
  if (fwd.units() != bwd.units()) {
    throw ConfigError("bilstm_forward: direction sizes differ (" + std::to_string(fwd.units()) +
                      " vs " + std::to_string(bwd.units()) + ")");
  }
  if (fwd.input_size() != bwd.input_size()) {
    throw ConfigError("bilstm_forward: direction input widths differ");
  }
  const Tensor hf = lstm_sequence_forward(seq, fwd, false, cache ? &cache->fwd : nullptr);
  const Tensor hb = lstm_sequence_forward(seq, bwd, true, cache ? &cache->bwd : nullptr);

  const std::size_t T = seq.dim(0);
  const std::size_t H = fwd.units();
  Tensor out({T, 2 * H});
  for (std::size_t t = 0; t < T; ++t) {
    double* row = out.data() + t * 2 * H;
    const double* rf = hf.data() + t * H;
    const double* rb = hb.data() + t * H;
    for (std::size_t j = 0; j < H; ++j) row[j] = rf[j];
    for (std::size_t j = 0; j < H; ++j) row[H + j] = rb[j];
  }
  return out;
}

BilstmGrads bilstm_backward(const BilstmCache& cache, const LstmParams& fwd,
                            const LstmParams& bwd, const Tensor& upstream) {
  if (cache.empty()) throw StateError("bilstm_backward: no cached forward state");
  const std::size_t T = cache.fwd.input.dim(0);
  const std::size_t H = fwd.units();
  if (upstream.rank() != 2 || upstream.dim(0) != T || upstream.dim(1) != 2 * H) {
    throw ShapeError("bilstm_backward: upstream " + upstream.shape_str() + " vs expected [" +
                     std::to_string(T) + "," + std::to_string(2 * H) + "]");
  }
  Tensor upf({T, H}), upb({T, H});
  for (std::size_t t = 0; t < T; ++t) {
    const double* row = upstream.data() + t * 2 * H;
    for (std::size_t j = 0; j < H; ++j) upf.at2(t, j) = row[j];
    for (std::size_t j = 0; j < H; ++j) upb.at2(t, j) = row[H + j];
  }
  LstmSeqGrads gf = lstm_sequence_backward(cache.fwd, fwd, upf);
  LstmSeqGrads gb = lstm_sequence_backward(cache.bwd, bwd, upb);
  Tensor dinput = std::move(gf.input);
  dinput.add(gb.input);
  return BilstmGrads{std::move(gf.params), std::move(gb.params), std::move(dinput)};
}

DropoutResult dropout_apply(const Tensor& x, double rate, RngStream& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0,1), got " + std::to_string(rate));
  }
  if (!training) {
    return DropoutResult{x, Tensor::full(x.shape(), 1.0)};
  }
  const double keep = 1.0 - rate;
  Tensor mask(x.shape());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = rng.next_uniform() < keep ? 1.0 : 0.0;
    mask.at(i) = m;
    out.at(i) = x.at(i) * m / keep;
  }
  return DropoutResult{std::move(out), std::move(mask)};
}

Tensor dropout_backward(const Tensor& upstream, const Tensor& mask, double rate) {
  if (!upstream.same_shape(mask)) {
    throw ShapeError("dropout_backward: upstream " + upstream.shape_str() + " vs mask " +
                     mask.shape_str());
  }
  const double keep = 1.0 - rate;
  Tensor out(upstream.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.at(i) = upstream.at(i) * mask.at(i) / keep;
  }
  return out;
}

AttentionResult attention_apply(const Tensor& h, const DenseParams& score1,
                                const DenseParams& score2, AttentionCache* cache) {
  if (h.rank() != 2) throw ShapeError("attention_apply: expected [T,2H], got " + h.shape_str());
  const std::size_t T = h.dim(0), D = h.dim(1);
  if (score1.input_size() != D || score1.output_size() != kAttentionHidden ||
      score2.input_size() != kAttentionHidden || score2.output_size() != 1) {
    throw ShapeError("attention_apply: scorer shapes " + score1.weights.shape_str() + ", " +
                     score2.weights.shape_str() + " do not match input " + h.shape_str() +
                     " with hidden width " + std::to_string(kAttentionHidden));
  }

  // hidden = tanh(h W1 + b1), scores = hidden W2 + b2
  Tensor hidden_act = matmul(h, score1.weights);
  for (std::size_t t = 0; t < T; ++t) {
    double* row = hidden_act.data() + t * kAttentionHidden;
    for (std::size_t j = 0; j < kAttentionHidden; ++j) {
      row[j] = std::tanh(row[j] + score1.bias.at(j));
    }
  }
  Tensor scores({T});
  for (std::size_t t = 0; t < T; ++t) {
    const double* row = hidden_act.data() + t * kAttentionHidden;
    double s = score2.bias.at(0);
    for (std::size_t j = 0; j < kAttentionHidden; ++j) s += row[j] * score2.weights.at(j);
    scores.at(t) = s;
  }
  Tensor weights = softmax(scores, 0);

  Tensor weighted({T, D});
  for (std::size_t t = 0; t < T; ++t) {
    const double w = weights.at(t);
    const double* src = h.data() + t * D;
    double* dst = weighted.data() + t * D;
    for (std::size_t j = 0; j < D; ++j) dst[j] = w * src[j];
  }

  if (cache) {
    cache->input = h;
    cache->hidden_act = std::move(hidden_act);
    cache->weights = weights;
  }
  return AttentionResult{std::move(weighted), std::move(weights)};
}

AttentionGrads attention_backward(const AttentionCache& cache, const DenseParams& score1,
                                  const DenseParams& score2, const Tensor& upstream) {
  if (cache.empty()) throw StateError("attention_backward: no cached forward state");
  const std::size_t T = cache.input.dim(0), D = cache.input.dim(1);
  if (upstream.rank() != 2 || upstream.dim(0) != T || upstream.dim(1) != D) {
    throw ShapeError("attention_backward: upstream " + upstream.shape_str() + " vs input " +
                     cache.input.shape_str());
  }

  AttentionGrads g{Tensor(score1.weights.shape()), Tensor(score1.bias.shape()),
                   Tensor(score2.weights.shape()), Tensor(score2.bias.shape()),
                   Tensor({T, D})};

  // Through the broadcast multiply: d weights_t and the direct input term.
  Tensor dw({T});
  for (std::size_t t = 0; t < T; ++t) {
    const double* uprow = upstream.data() + t * D;
    const double* hrow = cache.input.data() + t * D;
    double* grow = g.input.data() + t * D;
    const double w = cache.weights.at(t);
    double s = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      s += uprow[j] * hrow[j];
      grow[j] = uprow[j] * w;
    }
    dw.at(t) = s;
  }

  // Softmax Jacobian in applied form: ds = w ⊙ (dw - <w, dw>).
  double inner = 0.0;
  for (std::size_t t = 0; t < T; ++t) inner += cache.weights.at(t) * dw.at(t);
  Tensor ds({T});
  for (std::size_t t = 0; t < T; ++t) {
    ds.at(t) = cache.weights.at(t) * (dw.at(t) - inner);
  }

  // Second scorer layer.
  Tensor da1({T, kAttentionHidden});
  for (std::size_t t = 0; t < T; ++t) {
    const double dst = ds.at(t);
    const double* arow = cache.hidden_act.data() + t * kAttentionHidden;
    double* darow = da1.data() + t * kAttentionHidden;
    for (std::size_t j = 0; j < kAttentionHidden; ++j) {
      g.score2_weights.at(j) += arow[j] * dst;
      darow[j] = dst * score2.weights.at(j);
    }
    g.score2_bias.at(0) += dst;
  }

  // tanh and first scorer layer.
  for (std::size_t t = 0; t < T; ++t) {
    const double* arow = cache.hidden_act.data() + t * kAttentionHidden;
    double* darow = da1.data() + t * kAttentionHidden;
    for (std::size_t j = 0; j < kAttentionHidden; ++j) {
      darow[j] *= 1.0 - arow[j] * arow[j];  // now d(pre-activation)
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    const double* hrow = cache.input.data() + t * D;
    const double* dz = da1.data() + t * kAttentionHidden;
    for (std::size_t k = 0; k < D; ++k) {
      double* wrow = g.score1_weights.data() + k * kAttentionHidden;
      const double hv = hrow[k];
      for (std::size_t j = 0; j < kAttentionHidden; ++j) wrow[j] += hv * dz[j];
    }
    for (std::size_t j = 0; j < kAttentionHidden; ++j) g.score1_bias.at(j) += dz[j];
    double* grow = g.input.data() + t * D;
    for (std::size_t k = 0; k < D; ++k) {
      const double* wrow = score1.weights.data() + k * kAttentionHidden;
      double s = 0.0;
      for (std::size_t j = 0; j < kAttentionHidden; ++j) s += wrow[j] * dz[j];
      grow[k] += s;
    }
  }
  return g;
}

Tensor time_distributed_dense(const Tensor& h, const DenseParams& p) {
  if (h.rank() != 2 || h.dim(1) != p.input_size()) {
    throw ShapeError("time_distributed_dense: input " + h.shape_str() + " vs weights " +
                     p.weights.shape_str());
  }
  Tensor out = matmul(h, p.weights);
  const std::size_t T = out.dim(0), O = out.dim(1);
  for (std::size_t t = 0; t < T; ++t) {
    double* row = out.data() + t * O;
    for (std::size_t j = 0; j < O; ++j) row[j] += p.bias.at(j);
  }
  return out;
}

TdDenseGrads time_distributed_dense_backward(const Tensor& input, const DenseParams& p,
                                             const Tensor& upstream) {
  if (input.empty()) throw StateError("time_distributed_dense_backward: no cached input");
  const std::size_t T = input.dim(0), O = p.output_size();
  if (upstream.rank() != 2 || upstream.dim(0) != T || upstream.dim(1) != O) {
    throw ShapeError("time_distributed_dense_backward: upstream " + upstream.shape_str() +
                     " vs expected [" + std::to_string(T) + "," + std::to_string(O) + "]");
  }
  TdDenseGrads g{matmul(transpose(input), upstream), Tensor({O}),
                 matmul(upstream, transpose(p.weights))};
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < O; ++j) g.bias.at(j) += upstream.at2(t, j);
  }
  return g;
}

}  // namespace meteo
