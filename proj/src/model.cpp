#include "meteocast/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <thread>
#include <utility>

#include <json.hpp>

#include "meteocast/errors.hpp"
#include "meteocast/hash.hpp"

namespace meteo {

namespace {

using nlohmann::json;

void parallel_chunks(std::size_t n, int n_threads, const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n_threads <= 1 || n <= 1) {
    fn(0, n);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(n_threads), n);
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (std::thread& t : threads) t.join();
}

Tensor slice_sample(const Tensor& batch, std::size_t b) {
  const std::size_t T = batch.dim(1), C = batch.dim(2);
  Tensor out({T, C});
  std::memcpy(out.data(), batch.data() + b * T * C, T * C * sizeof(double));
  return out;
}

constexpr char kCkptMagic[4] = {'M', 'C', 'K', 'P'};
constexpr std::uint32_t kCkptVersion = 1;

}  // namespace

void HParams::validate() const {
  if (n_past < 1) throw ConfigError("n_past must be >= 1, got " + std::to_string(n_past));
  if (n_future < 1) throw ConfigError("n_future must be >= 1, got " + std::to_string(n_future));
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive, got " + std::to_string(learning_rate));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout_rate must lie in [0,1), got " + std::to_string(dropout_rate));
  }
  if (n_bilstm_layers < 1) {
    throw ConfigError("n_bilstm_layers must be >= 1, got " + std::to_string(n_bilstm_layers));
  }
  if (units_per_direction < 1) {
    throw ConfigError("units_per_direction must be >= 1, got " +
                      std::to_string(units_per_direction));
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1, got " + std::to_string(batch_size));
}

ForecastNet build_model(const HParams& h, std::uint64_t seed) {
  h.validate();
  ForecastNet net;
  net.hparams = h;
  net.seed = seed;
  RngStream rng(seed);
  const std::size_t H = h.units_per_direction;
  net.stack.reserve(h.n_bilstm_layers);
  for (std::size_t layer = 0; layer < h.n_bilstm_layers; ++layer) {
    const std::size_t in = layer == 0 ? kNumChannels : 2 * H;
    BilstmLayerParams p{LstmParams::init(in, H, rng), LstmParams::init(in, H, rng)};
    net.stack.push_back(std::move(p));
  }
  net.att_score1 = DenseParams::glorot(2 * H, kAttentionHidden, rng);
  net.att_score2 = DenseParams::glorot(kAttentionHidden, 1, rng);
  net.head = DenseParams::glorot(2 * H, kNumFeatures, rng);
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    net.scalers[f] = Scaler{kFeatureNames[f], 0.0, 1.0};
  }
  return net;
}

namespace {

template <class Net, class Ptr>
std::vector<Ptr> collect_params(Net& net) {
  std::vector<Ptr> out;
  out.reserve(net.stack.size() * 6 + 6);
  for (auto& layer : net.stack) {
    out.push_back(&layer.fwd.input_kernel);
    out.push_back(&layer.fwd.recurrent_kernel);
    out.push_back(&layer.fwd.bias);
    out.push_back(&layer.bwd.input_kernel);
    out.push_back(&layer.bwd.recurrent_kernel);
    out.push_back(&layer.bwd.bias);
  }
  out.push_back(&net.att_score1.weights);
  out.push_back(&net.att_score1.bias);
  out.push_back(&net.att_score2.weights);
  out.push_back(&net.att_score2.bias);
  out.push_back(&net.head.weights);
  out.push_back(&net.head.bias);
  return out;
}

}  // namespace

std::vector<Tensor*> parameter_tensors(ForecastNet& net) {
  return collect_params<ForecastNet, Tensor*>(net);
}

std::vector<const Tensor*> parameter_tensors(const ForecastNet& net) {
  return collect_params<const ForecastNet, const Tensor*>(net);
}

std::vector<std::string> parameter_names(const ForecastNet& net) {
  std::vector<std::string> names;
  names.reserve(net.stack.size() * 6 + 6);
  for (std::size_t layer = 0; layer < net.stack.size(); ++layer) {
    const std::string base = "bilstm" + std::to_string(layer);
    for (const char* dir : {".fwd", ".bwd"}) {
      names.push_back(base + dir + ".input_kernel");
      names.push_back(base + dir + ".recurrent_kernel");
      names.push_back(base + dir + ".bias");
    }
  }
  for (const char* n : {"attention.score1.weights", "attention.score1.bias",
                        "attention.score2.weights", "attention.score2.bias", "head.weights",
                        "head.bias"}) {
    names.emplace_back(n);
  }
  return names;
}

std::size_t parameter_count(const ForecastNet& net) {
  std::size_t n = 0;
  for (const Tensor* t : parameter_tensors(net)) n += t->size();
  return n;
}

ForwardResult forward(const ForecastNet& net, const Tensor& batch, bool training,
                      RngStream& rng, ForwardCaches* caches, int n_threads) {
  if (batch.rank() != 3 || batch.dim(2) != kNumChannels) {
    throw ShapeError("forward: batch must be [B,T,7], got " + batch.shape_str());
  }
  const std::size_t B = batch.dim(0), T = batch.dim(1);
  if (T != net.hparams.window_len()) {
    throw ShapeError("forward: batch timesteps " + std::to_string(T) + " vs n_past+n_future " +
                     std::to_string(net.hparams.window_len()));
  }

  // One dropout sub-seed per sample, drawn up front so the result does not
  // depend on the thread count.
  std::vector<std::uint64_t> sample_seeds;
  if (training) {
    sample_seeds.resize(B);
    for (std::size_t b = 0; b < B; ++b) sample_seeds[b] = rng.next_u64();
  }

  ForwardResult result{Tensor({B, T, kNumFeatures}), Tensor({B, T})};
  if (caches) caches->samples.assign(B, SampleCache{});

  const double rate = net.hparams.dropout_rate;
  parallel_chunks(B, n_threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      SampleCache* sc = caches ? &caches->samples[b] : nullptr;
      if (sc) {
        sc->bilstm.resize(net.stack.size());
        sc->dropout_mask.resize(net.stack.size());
        sc->training = training;
      }
      RngStream sample_rng(training ? sample_seeds[b] : 0);
      Tensor x = slice_sample(batch, b);
      for (std::size_t layer = 0; layer < net.stack.size(); ++layer) {
        Tensor h = bilstm_forward(x, net.stack[layer].fwd, net.stack[layer].bwd,
                                  sc ? &sc->bilstm[layer] : nullptr);
        DropoutResult dr = dropout_apply(h, rate, sample_rng, training);
        if (sc) sc->dropout_mask[layer] = std::move(dr.mask);
        x = std::move(dr.output);
      }
      AttentionResult att =
          attention_apply(x, net.att_score1, net.att_score2, sc ? &sc->attention : nullptr);
      Tensor y = time_distributed_dense(att.weighted, net.head);
      if (sc) sc->att_weighted = std::move(att.weighted);
      std::memcpy(result.predictions.data() + b * T * kNumFeatures, y.data(),
                  T * kNumFeatures * sizeof(double));
      std::memcpy(result.attention_weights.data() + b * T, att.weights.data(),
                  T * sizeof(double));
    }
  });
  return result;
}

NetGrads NetGrads::zeros_like(const ForecastNet& net) {
  NetGrads g;
  g.fwd.reserve(net.stack.size());
  g.bwd.reserve(net.stack.size());
  for (const auto& layer : net.stack) {
    g.fwd.push_back(LstmParamGrads::zeros_like(layer.fwd));
    g.bwd.push_back(LstmParamGrads::zeros_like(layer.bwd));
  }
  g.att1_weights = Tensor(net.att_score1.weights.shape());
  g.att1_bias = Tensor(net.att_score1.bias.shape());
  g.att2_weights = Tensor(net.att_score2.weights.shape());
  g.att2_bias = Tensor(net.att_score2.bias.shape());
  g.head_weights = Tensor(net.head.weights.shape());
  g.head_bias = Tensor(net.head.bias.shape());
  return g;
}

namespace {

template <class G, class Ptr>
std::vector<Ptr> collect_grads(G& g) {
  std::vector<Ptr> out;
  out.reserve(g.fwd.size() * 6 + 6);
  for (std::size_t layer = 0; layer < g.fwd.size(); ++layer) {
    out.push_back(&g.fwd[layer].input_kernel);
    out.push_back(&g.fwd[layer].recurrent_kernel);
    out.push_back(&g.fwd[layer].bias);
    out.push_back(&g.bwd[layer].input_kernel);
    out.push_back(&g.bwd[layer].recurrent_kernel);
    out.push_back(&g.bwd[layer].bias);
  }
  out.push_back(&g.att1_weights);
  out.push_back(&g.att1_bias);
  out.push_back(&g.att2_weights);
  out.push_back(&g.att2_bias);
  out.push_back(&g.head_weights);
  out.push_back(&g.head_bias);
  return out;
}

}  // namespace

std::vector<Tensor*> gradient_tensors(NetGrads& g) { return collect_grads<NetGrads, Tensor*>(g); }

std::vector<const Tensor*> gradient_tensors(const NetGrads& g) {
  return collect_grads<const NetGrads, const Tensor*>(g);
}

void NetGrads::add(const NetGrads& other) {
  auto mine = gradient_tensors(*this);
  auto theirs = gradient_tensors(other);
  for (std::size_t i = 0; i < mine.size(); ++i) mine[i]->add(*theirs[i]);
  if (!other.input.empty()) {
    if (input.empty()) {
      input = other.input;
    } else {
      input.add(other.input);
    }
  }
}

void NetGrads::scale(double a) {
  for (Tensor* t : gradient_tensors(*this)) t->scale(a);
  if (!input.empty()) input.scale(a);
}

NetGrads backward(const ForecastNet& net, const ForwardCaches& caches, const Tensor& upstream,
                  bool want_input_grads, int n_threads) {
  const std::size_t B = caches.samples.size();
  if (B == 0) throw StateError("backward: no cached forward state");
  if (upstream.rank() != 3 || upstream.dim(0) != B || upstream.dim(2) != kNumFeatures) {
    throw ShapeError("backward: upstream must be [B,T,3], got " + upstream.shape_str());
  }
  const std::size_t T = upstream.dim(1);
  const double rate = net.hparams.dropout_rate;
  const std::size_t L = net.stack.size();

  // Per-sample gradients are computed (possibly in parallel) and then
  // reduced strictly in sample order, so the sum is independent of the
  // thread count.
  std::vector<NetGrads> per_sample;
  NetGrads total = NetGrads::zeros_like(net);
  if (want_input_grads) total.input = Tensor({B, T, kNumChannels});

  auto run_sample = [&](std::size_t b, NetGrads& out) {
    const SampleCache& sc = caches.samples[b];
    if (sc.attention.empty()) throw StateError("backward: sample cache missing");
    Tensor up({T, kNumFeatures});
    std::memcpy(up.data(), upstream.data() + b * T * kNumFeatures,
                T * kNumFeatures * sizeof(double));

    TdDenseGrads hg = time_distributed_dense_backward(sc.att_weighted, net.head, up);
    AttentionGrads ag = attention_backward(sc.attention, net.att_score1, net.att_score2, hg.input);
    out.head_weights.add(hg.weights);
    out.head_bias.add(hg.bias);
    out.att1_weights.add(ag.score1_weights);
    out.att1_bias.add(ag.score1_bias);
    out.att2_weights.add(ag.score2_weights);
    out.att2_bias.add(ag.score2_bias);

    Tensor d = std::move(ag.input);
    for (std::size_t layer = L; layer-- > 0;) {
      // Inference-mode caches have identity dropout; no mask rescaling.
      if (sc.training) d = dropout_backward(d, sc.dropout_mask[layer], rate);
      BilstmGrads bg = bilstm_backward(sc.bilstm[layer], net.stack[layer].fwd,
                                       net.stack[layer].bwd, d);
      out.fwd[layer].input_kernel.add(bg.fwd.input_kernel);
      out.fwd[layer].recurrent_kernel.add(bg.fwd.recurrent_kernel);
      out.fwd[layer].bias.add(bg.fwd.bias);
      out.bwd[layer].input_kernel.add(bg.bwd.input_kernel);
      out.bwd[layer].recurrent_kernel.add(bg.bwd.recurrent_kernel);
      out.bwd[layer].bias.add(bg.bwd.bias);
      d = std::move(bg.input);
    }
    if (want_input_grads) {
      std::memcpy(total.input.data() + b * T * kNumChannels, d.data(),
                  T * kNumChannels * sizeof(double));
    }
  };

  if (n_threads <= 1 || B <= 1) {
    for (std::size_t b = 0; b < B; ++b) run_sample(b, total);
  } else {
    per_sample.assign(B, NetGrads{});
    parallel_chunks(B, n_threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t b = begin; b < end; ++b) {
        per_sample[b] = NetGrads::zeros_like(net);
        run_sample(b, per_sample[b]);
      }
    });
    for (std::size_t b = 0; b < B; ++b) total.add(per_sample[b]);
  }
  return total;
}

namespace {

void check_loss_shapes(const ForwardResult& result, const Tensor& targets) {
  if (result.predictions.rank() != 3 || targets.rank() != 3 ||
      targets.dim(0) != result.predictions.dim(0) || targets.dim(2) != kNumFeatures ||
      targets.dim(1) > result.predictions.dim(1)) {
    throw ShapeError("loss_mae: predictions " + result.predictions.shape_str() + " vs targets " +
                     targets.shape_str());
  }
}

}  // namespace

double loss_mae(const ForwardResult& result, const Tensor& targets) {
  check_loss_shapes(result, targets);
  const std::size_t B = targets.dim(0), F = targets.dim(1);
  const std::size_t T = result.predictions.dim(1);
  const std::size_t offset = T - F;
  double sum = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < F; ++k) {
      for (std::size_t f = 0; f < kNumFeatures; ++f) {
        sum += std::abs(result.predictions.at3(b, offset + k, f) - targets.at3(b, k, f));
      }
    }
  }
  return sum / static_cast<double>(B * F * kNumFeatures);
}

Tensor loss_mae_grad(const ForwardResult& result, const Tensor& targets) {
  check_loss_shapes(result, targets);
  const std::size_t B = targets.dim(0), F = targets.dim(1);
  const std::size_t T = result.predictions.dim(1);
  const std::size_t offset = T - F;
  const double scale = 1.0 / static_cast<double>(B * F * kNumFeatures);
  Tensor g({B, T, kNumFeatures});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < F; ++k) {
      for (std::size_t f = 0; f < kNumFeatures; ++f) {
        const double d = result.predictions.at3(b, offset + k, f) - targets.at3(b, k, f);
        g.at3(b, offset + k, f) = d > 0.0 ? scale : d < 0.0 ? -scale : 0.0;
      }
    }
  }
  return g;
}

void save_checkpoint(const ForecastNet& net, const std::string& path) {
  json header;
  header["rng_algorithm"] = RngStream::kAlgorithm;
  header["seed"] = net.seed;
  header["hparams"] = {{"n_past", net.hparams.n_past},
                       {"n_future", net.hparams.n_future},
                       {"learning_rate", net.hparams.learning_rate},
                       {"dropout_rate", net.hparams.dropout_rate},
                       {"n_bilstm_layers", net.hparams.n_bilstm_layers},
                       {"units_per_direction", net.hparams.units_per_direction},
                       {"batch_size", net.hparams.batch_size}};
  header["scalers"] = json::array();
  for (const Scaler& s : net.scalers) {
    header["scalers"].push_back({{"feature", s.feature}, {"min", s.min}, {"max", s.max}});
  }
  header["tensors"] = json::array();
  auto params = parameter_tensors(net);
  auto names = parameter_names(net);
  for (std::size_t i = 0; i < params.size(); ++i) {
    header["tensors"].push_back({{"name", names[i]}, {"shape", params[i]->shape()}});
  }
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write(kCkptMagic, 4);
  out.write(reinterpret_cast<const char*>(&kCkptVersion), sizeof kCkptVersion);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::uint64_t sum = kFnv64Offset;
  for (const Tensor* t : params) {
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->size() * sizeof(double)));
    fnv1a_accumulate(sum, t->data(), t->size() * sizeof(double));
  }
  out.write(reinterpret_cast<const char*>(&sum), sizeof sum);
  if (!out) throw FormatError("write failure on " + path);
}

ForecastNet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kCkptMagic, 4) != 0) {
    throw FormatError(path + ": bad magic, not a checkpoint");
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (in.gcount() != sizeof version || version != kCkptVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (in.gcount() != sizeof len || len > (std::uint64_t{1} << 24)) {
    throw FormatError(path + ": implausible header length");
  }
  std::string text(static_cast<std::size_t>(len), '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(in.gcount()) != len) {
    throw FormatError(path + ": truncated header");
  }

  json header;
  try {
    header = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": corrupt header: " + e.what());
  }

  ForecastNet net;
  try {
    const std::string algo = header.at("rng_algorithm");
    if (algo != RngStream::kAlgorithm) {
      throw FormatError(path + ": rng_algorithm \"" + algo + "\" does not match \"" +
                        RngStream::kAlgorithm + "\"");
    }
    net.seed = header.at("seed");
    const json& h = header.at("hparams");
    net.hparams.n_past = h.at("n_past");
    net.hparams.n_future = h.at("n_future");
    net.hparams.learning_rate = h.at("learning_rate");
    net.hparams.dropout_rate = h.at("dropout_rate");
    net.hparams.n_bilstm_layers = h.at("n_bilstm_layers");
    net.hparams.units_per_direction = h.at("units_per_direction");
    net.hparams.batch_size = h.at("batch_size");
    const json& scalers = header.at("scalers");
    if (scalers.size() != kNumFeatures) {
      throw FormatError(path + ": expected 3 scalers, found " + std::to_string(scalers.size()));
    }
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      net.scalers[f].feature = scalers[f].at("feature");
      net.scalers[f].min = scalers[f].at("min");
      net.scalers[f].max = scalers[f].at("max");
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": header field error: " + e.what());
  }
  try {
    net.hparams.validate();
  } catch (const ConfigError& e) {
    throw FormatError(path + ": invalid hparams: " + e.what());
  }

  // Build the parameter skeleton, then overwrite every tensor from the blobs.
  const std::size_t H = net.hparams.units_per_direction;
  for (std::size_t layer = 0; layer < net.hparams.n_bilstm_layers; ++layer) {
    const std::size_t layer_in = layer == 0 ? kNumChannels : 2 * H;
    BilstmLayerParams p;
    p.fwd = LstmParams{Tensor({layer_in, 4 * H}), Tensor({H, 4 * H}), Tensor({4 * H})};
    p.bwd = LstmParams{Tensor({layer_in, 4 * H}), Tensor({H, 4 * H}), Tensor({4 * H})};
    net.stack.push_back(std::move(p));
  }
  net.att_score1 = DenseParams{Tensor({2 * H, kAttentionHidden}), Tensor({kAttentionHidden})};
  net.att_score2 = DenseParams{Tensor({kAttentionHidden, 1}), Tensor({1})};
  net.head = DenseParams{Tensor({2 * H, kNumFeatures}), Tensor({kNumFeatures})};

  auto params = parameter_tensors(net);
  auto names = parameter_names(net);
  const json& manifest = header.at("tensors");
  if (manifest.size() != params.size()) {
    throw FormatError(path + ": tensor manifest lists " + std::to_string(manifest.size()) +
                      " tensors, expected " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = manifest[i].at("name");
    const std::vector<std::size_t> shape = manifest[i].at("shape");
    if (name != names[i] || shape != params[i]->shape()) {
      throw FormatError(path + ": tensor " + std::to_string(i) + " is \"" + name +
                        "\", expected \"" + names[i] + "\" with matching shape");
    }
    in.read(reinterpret_cast<char*>(params[i]->data()),
            static_cast<std::streamsize>(params[i]->size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != params[i]->size() * sizeof(double)) {
      throw FormatError(path + ": truncated while reading " + names[i]);
    }
  }
  std::uint64_t sum = kFnv64Offset;
  for (const Tensor* t : params) fnv1a_accumulate(sum, t->data(), t->size() * sizeof(double));
  std::uint64_t stored = 0;
  in.read(reinterpret_cast<char*>(&stored), sizeof stored);
  if (in.gcount() != sizeof stored) throw FormatError(path + ": truncated checksum");
  if (stored != sum) throw FormatError(path + ": parameter checksum mismatch, file corrupt");
  in.peek();
  if (!in.eof()) throw FormatError(path + ": trailing bytes after parameters");
  return net;
}

}  // namespace meteo
