#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ucf/config.hpp"
#include "ucf/data.hpp"
#include "ucf/interpolate.hpp"
#include "ucf/model.hpp"
#include "ucf/rng.hpp"
#include "ucf/softmax_loss.hpp"

namespace ucf {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

// ---------------------------------------------------------------------------
// Optimizer.
// ---------------------------------------------------------------------------

/// Classical momentum: v <- mu v + g; p <- p - lr v.
inline void sgd_step(std::vector<double>& param, const std::vector<double>& grad,
                     std::vector<double>& velocity, double lr, double mu) {
  if (param.size() != grad.size() || param.size() != velocity.size())
    throw std::invalid_argument("sgd_step: shape mismatch");
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = mu * velocity[i] + grad[i];
    param[i] -= lr * velocity[i];
  }
}

using MomentumMap = std::map<std::string, std::vector<double>>;

inline void sgd_step(const std::vector<ParamView>& params, MomentumMap& momentum,
                     double lr, double mu) {
  for (const ParamView& p : params) {
    if (!p.trainable) continue;
    std::vector<double>& v = momentum[p.name];
    if (v.empty()) v.assign(std::size_t(p.count), 0.0);
    if (std::int64_t(v.size()) != p.count)
      throw std::invalid_argument("sgd_step: shape mismatch for " + p.name);
    for (std::int64_t i = 0; i < p.count; ++i) {
      v[std::size_t(i)] = mu * v[std::size_t(i)] + p.grad[i];
      p.value[i] -= lr * v[std::size_t(i)];
    }
  }
}

// ---------------------------------------------------------------------------
// Augmentation and preprocessing.
// ---------------------------------------------------------------------------

/// Pixel (r,c) maps to (c, H-1-r).
inline ImageU8 rotate90(const ImageU8& img) {
  if (img.width != img.height)
    throw std::invalid_argument("rotate90: image must be square");
  ImageU8 out = ImageU8::make(img.height, img.width, img.channels);
  for (std::int64_t r = 0; r < img.height; ++r)
    for (std::int64_t c = 0; c < img.width; ++c)
      for (std::int64_t ch = 0; ch < img.channels; ++ch)
        out.at(c, img.height - 1 - r, ch) = img.at(r, c, ch);
  return out;
}

inline ImageU8 mirror_horizontal(const ImageU8& img) {
  ImageU8 out = ImageU8::make(img.height, img.width, img.channels);
  for (std::int64_t r = 0; r < img.height; ++r)
    for (std::int64_t c = 0; c < img.width; ++c)
      for (std::int64_t ch = 0; ch < img.channels; ++ch)
        out.at(r, img.width - 1 - c, ch) = img.at(r, c, ch);
  return out;
}

/// {identity, 90, 180, 270} x {plain, mirrored}, ground truth transformed
/// identically. Order: the four rotations, then their mirrored versions.
inline std::vector<SamplePair> augment(const ImageU8& image, const ImageU8& gt) {
  if (image.width != image.height || gt.width != gt.height)
    throw std::invalid_argument("augment: images must be square");
  if (image.width != gt.width || image.height != gt.height)
    throw std::invalid_argument("augment: image/gt size mismatch");
  std::vector<SamplePair> out;
  ImageU8 img = image, mask = gt;
  for (int rot = 0; rot < 4; ++rot) {
    out.push_back(SamplePair{img, mask});
    img = rotate90(img);
    mask = rotate90(mask);
  }
  for (int rot = 0; rot < 4; ++rot) {
    out.push_back(SamplePair{mirror_horizontal(out[std::size_t(rot)].image),
                             mirror_horizontal(out[std::size_t(rot)].gt)});
  }
  return out;
}

inline std::array<double, 3> dataset_channel_mean(
    const std::vector<SamplePair>& data) {
  std::array<double, 3> sum = {0, 0, 0};
  std::int64_t count = 0;
  for (const auto& s : data) {
    if (s.image.channels != 3)
      throw std::invalid_argument("dataset_channel_mean: RGB images required");
    for (std::int64_t r = 0; r < s.image.height; ++r)
      for (std::int64_t c = 0; c < s.image.width; ++c)
        for (int ch = 0; ch < 3; ++ch)
          sum[std::size_t(ch)] += double(s.image.at(r, c, ch));
    count += s.image.height * s.image.width;
  }
  if (count == 0)
    throw std::invalid_argument("dataset_channel_mean: empty dataset");
  for (auto& v : sum) v /= double(count);
  return sum;
}

/// Per-channel mean subtraction, then bilinear resize to side x side.
inline Tensor4 preprocess(const ImageU8& image, const std::array<double, 3>& mean,
                          std::int64_t side) {
  if (image.channels != 3)
    throw std::invalid_argument("preprocess: RGB image required");
  Tensor4 t = image_to_tensor(image);
  for (std::int64_t c = 0; c < 3; ++c) {
    double* plane = t.plane(0, c);
    const std::int64_t n = image.height * image.width;
    for (std::int64_t i = 0; i < n; ++i) plane[i] -= mean[std::size_t(c)];
  }
  if (image.height == side && image.width == side) return t;
  return interpolate(t, side, side, InterpMode::bilinear);
}

/// Resize then re-binarize at 0.5, yielding an exact 0-1 label map.
inline Tensor4 preprocess_gt(const ImageU8& gt, std::int64_t side) {
  if (gt.channels != 1)
    throw std::invalid_argument("preprocess_gt: single-channel mask required");
  Tensor4 t = Tensor4::zeros({1, 1, gt.height, gt.width});
  for (std::int64_t r = 0; r < gt.height; ++r)
    for (std::int64_t c = 0; c < gt.width; ++c)
      t.at(0, 0, r, c) = gt.at(r, c, 0) ? 1.0 : 0.0;
  if (!(gt.height == side && gt.width == side))
    t = interpolate(t, side, side, InterpMode::bilinear);
  for (std::int64_t i = 0; i < t.size(); ++i)
    t.data()[i] = t.data()[i] >= 0.5 ? 1.0 : 0.0;
  return t;
}

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

constexpr char kCheckpointMagic[8] = {'U', 'C', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointBlock {
  std::string name;
  std::vector<std::int64_t> dims;
  std::vector<double> data;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t seed = 0;
  std::int64_t iteration = 0;
  std::string config_text;  // flat key=value echo of the network config
  std::vector<CheckpointBlock> blocks;
};

namespace detail {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void read_pod(std::istream& in, T& v, const char* what) {
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error(std::string("checkpoint: truncated ") + what);
}

}  // namespace detail

inline void write_checkpoint_file(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_pod(out, ck.version);
  detail::write_pod(out, ck.seed);
  detail::write_pod(out, ck.iteration);
  detail::write_pod(out, std::uint32_t(ck.config_text.size()));
  out.write(ck.config_text.data(), std::streamsize(ck.config_text.size()));
  detail::write_pod(out, std::uint32_t(ck.blocks.size()));
  for (const CheckpointBlock& b : ck.blocks) {
    detail::write_pod(out, std::uint32_t(b.name.size()));
    out.write(b.name.data(), std::streamsize(b.name.size()));
    detail::write_pod(out, std::uint32_t(b.dims.size()));
    for (std::int64_t d : b.dims) detail::write_pod(out, d);
    std::int64_t count = 1;
    for (std::int64_t d : b.dims) count *= d;
    if (count != std::int64_t(b.data.size()))
      throw std::invalid_argument("checkpoint: block " + b.name +
                                  " dims do not match data size");
    detail::write_pod(out, std::uint64_t(b.data.size()));
    out.write(reinterpret_cast<const char*>(b.data.data()),
              std::streamsize(b.data.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: failed writing " + path);
}

inline Checkpoint read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  Checkpoint ck;
  detail::read_pod(in, ck.version, "version");
  if (ck.version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(ck.version));
  detail::read_pod(in, ck.seed, "seed");
  detail::read_pod(in, ck.iteration, "iteration");
  std::uint32_t config_len = 0;
  detail::read_pod(in, config_len, "config length");
  ck.config_text.resize(config_len);
  in.read(ck.config_text.data(), std::streamsize(config_len));
  if (!in) throw std::runtime_error("checkpoint: truncated config echo");
  std::uint32_t n_blocks = 0;
  detail::read_pod(in, n_blocks, "block count");
  for (std::uint32_t i = 0; i < n_blocks; ++i) {
    CheckpointBlock b;
    std::uint32_t name_len = 0;
    detail::read_pod(in, name_len, "block name length");
    b.name.resize(name_len);
    in.read(b.name.data(), std::streamsize(name_len));
    if (!in) throw std::runtime_error("checkpoint: truncated block name");
    std::uint32_t rank = 0;
    detail::read_pod(in, rank, "block rank");
    if (rank > 8) throw std::runtime_error("checkpoint: absurd rank");
    b.dims.resize(rank);
    for (auto& d : b.dims) detail::read_pod(in, d, "block dims");
    std::uint64_t count = 0;
    detail::read_pod(in, count, "block count");
    std::int64_t prod = 1;
    for (std::int64_t d : b.dims) prod *= d;
    if (std::uint64_t(prod) != count)
      throw std::runtime_error("checkpoint: inconsistent size for block " +
                               b.name);
    b.data.resize(count);
    in.read(reinterpret_cast<char*>(b.data.data()),
            std::streamsize(count * sizeof(double)));
    if (!in)
      throw std::runtime_error("checkpoint: truncated data for block " + b.name);
    ck.blocks.push_back(std::move(b));
  }
  return ck;
}

/// Snapshot of network params/state plus momentum and any extra named blocks.
inline Checkpoint make_checkpoint(Network& net, const MomentumMap& momentum,
                                  std::int64_t iteration, std::uint64_t seed,
                                  const std::vector<CheckpointBlock>& extra = {}) {
  Checkpoint ck;
  ck.seed = seed;
  ck.iteration = iteration;
  ck.config_text = kv_to_text(net.config.to_kv());
  for (const ParamView& p : net.params()) {
    CheckpointBlock b;
    b.name = p.name;
    b.dims = p.dims;
    b.data.assign(p.value, p.value + p.count);
    ck.blocks.push_back(std::move(b));
  }
  for (const auto& [name, v] : momentum) {
    CheckpointBlock b;
    b.name = "momentum." + name;
    b.dims = {std::int64_t(v.size())};
    b.data = v;
    ck.blocks.push_back(std::move(b));
  }
  for (const CheckpointBlock& b : extra) ck.blocks.push_back(b);
  return ck;
}

inline const CheckpointBlock* find_block(const Checkpoint& ck,
                                         const std::string& name) {
  for (const auto& b : ck.blocks)
    if (b.name == name) return &b;
  return nullptr;
}

/// Restores parameters, state and momentum into an already-built network.
inline void apply_checkpoint(Network& net, const Checkpoint& ck,
                             MomentumMap* momentum = nullptr) {
  for (const ParamView& p : net.params()) {
    const CheckpointBlock* b = find_block(ck, p.name);
    if (!b) throw std::runtime_error("checkpoint: missing block " + p.name);
    if (b->dims != p.dims)
      throw std::runtime_error("checkpoint: shape mismatch for block " + p.name);
    std::copy(b->data.begin(), b->data.end(), p.value);
    if (momentum && p.trainable) {
      const CheckpointBlock* m = find_block(ck, "momentum." + p.name);
      if (m) (*momentum)[p.name] = m->data;
    }
  }
}

/// Rebuilds a network from the checkpoint's config echo and loads it.
inline Network network_from_checkpoint(const Checkpoint& ck) {
  const NetworkConfig config = NetworkConfig::from_kv(parse_kv_text(ck.config_text));
  Network net = build_network(config, ck.seed);
  apply_checkpoint(net, ck);
  return net;
}

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

enum class LossReduction { mean, sum };

inline const char* reduction_name(LossReduction r) {
  return r == LossReduction::mean ? "mean" : "sum";
}

inline LossReduction parse_reduction(const std::string& s) {
  if (s == "mean") return LossReduction::mean;
  if (s == "sum") return LossReduction::sum;
  throw std::invalid_argument("unknown loss reduction: " + s);
}

struct TrainConfig {
  std::int64_t iterations = 5000;
  std::int64_t batch = 8;
  double lr = 1e-2;
  double momentum = 0.9;
  double decay_factor = 0.5;
  std::int64_t decay_interval = 1000;
  std::uint64_t seed = 0;
  LossReduction reduction = LossReduction::mean;
  std::int64_t checkpoint_interval = 0;  // 0: checkpoint only at the end
  bool augment = false;                  // 8x rotation/mirror expansion
  std::int64_t train_side = 0;           // 0: use the network's input side
  bool auto_mean = true;                 // compute channel means from the data
  std::array<double, 3> channel_mean = {0, 0, 0};

  void validate() const {
    if (iterations < 1) throw std::invalid_argument("TrainConfig: iterations");
    if (batch < 1) throw std::invalid_argument("TrainConfig: batch must be >= 1");
    if (!(lr > 0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (!(momentum >= 0 && momentum < 1))
      throw std::invalid_argument("TrainConfig: momentum must be in [0,1)");
    if (!(decay_factor > 0))
      throw std::invalid_argument("TrainConfig: decay factor must be > 0");
    if (decay_interval < 1)
      throw std::invalid_argument("TrainConfig: decay interval must be >= 1");
    if (checkpoint_interval < 0)
      throw std::invalid_argument("TrainConfig: checkpoint interval");
  }

  KvMap to_kv() const {
    KvMap kv;
    kv["train.iterations"] = std::to_string(iterations);
    kv["train.batch"] = std::to_string(batch);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", lr);
    kv["train.lr"] = buf;
    std::snprintf(buf, sizeof buf, "%.17g", momentum);
    kv["train.momentum"] = buf;
    std::snprintf(buf, sizeof buf, "%.17g", decay_factor);
    kv["train.decay_factor"] = buf;
    kv["train.decay_interval"] = std::to_string(decay_interval);
    kv["train.seed"] = std::to_string(seed);
    kv["train.reduction"] = reduction_name(reduction);
    kv["train.checkpoint_interval"] = std::to_string(checkpoint_interval);
    kv["train.augment"] = augment ? "true" : "false";
    kv["train.side"] = std::to_string(train_side);
    return kv;
  }

  static TrainConfig from_kv(const KvMap& kv) {
    TrainConfig c;
    c.iterations = kv_get_int(kv, "train.iterations", c.iterations);
    c.batch = kv_get_int(kv, "train.batch", c.batch);
    c.lr = kv_get_double(kv, "train.lr", c.lr);
    c.momentum = kv_get_double(kv, "train.momentum", c.momentum);
    c.decay_factor = kv_get_double(kv, "train.decay_factor", c.decay_factor);
    c.decay_interval = kv_get_int(kv, "train.decay_interval", c.decay_interval);
    c.seed = std::uint64_t(kv_get_int(kv, "train.seed", std::int64_t(c.seed)));
    c.reduction = parse_reduction(
        kv_get(kv, "train.reduction", reduction_name(c.reduction)));
    c.checkpoint_interval =
        kv_get_int(kv, "train.checkpoint_interval", c.checkpoint_interval);
    c.augment = kv_get_bool(kv, "train.augment", c.augment);
    c.train_side = kv_get_int(kv, "train.side", c.train_side);
    c.validate();
    return c;
  }
};

struct LogRow {
  std::int64_t iteration = 0;  // 1-based in the log
  double lr = 0;
  double loss = 0;  // per-pixel mean under mean reduction, else the sum
};

struct TrainResult {
  std::vector<LogRow> log;
  double final_loss = 0;
  std::array<double, 3> channel_mean = {0, 0, 0};
  MomentumMap momentum;
  std::int64_t iterations_run = 0;
};

namespace detail {

/// Walks the layer list and names the first layer whose output holds a
/// non-finite value; used only on the abort path.
inline std::string first_nonfinite_layer(Network& net, const Tensor4& x,
                                         const ForwardCtx& ctx) {
  auto has_nonfinite = [](const Tensor4& t) {
    for (std::int64_t i = 0; i < t.size(); ++i)
      if (!std::isfinite(t.data()[i])) return true;
    return false;
  };
  if (has_nonfinite(x)) return "input";
  Tensor4 y = x;
  for (auto& layer : net.layers) {
    y = layer->forward(y, ctx);
    if (has_nonfinite(y)) return layer->describe();
  }
  return "loss";
}

inline void write_log_csv(const std::string& path,
                          const std::vector<LogRow>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write loss log " + path);
  out << "iteration,lr,loss\n";
  char buf[80];
  for (const LogRow& r : log) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g",
                  static_cast<long long>(r.iteration), r.lr, r.loss);
    out << buf << '\n';
  }
  if (!out) throw std::runtime_error("failed writing loss log " + path);
}

}  // namespace detail

/// Runs the training loop. Checkpoints go to `ckpt_path` (if nonempty) on the
/// configured interval and at the end; the loss log CSV goes to `log_path`
/// (if nonempty).
inline TrainResult train(Network& net, const std::vector<SamplePair>& dataset,
                         const TrainConfig& cfg, const std::string& ckpt_path = "",
                         const std::string& log_path = "") {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

  const std::int64_t side =
      cfg.train_side > 0 ? cfg.train_side : net.config.input_side;

  std::vector<SamplePair> expanded;
  const std::vector<SamplePair>* source = &dataset;
  if (cfg.augment) {
    for (const auto& s : dataset) {
      std::vector<SamplePair> aug = augment(s.image, s.gt);
      for (auto& a : aug) expanded.push_back(std::move(a));
    }
    source = &expanded;
  }

  TrainResult result;
  result.channel_mean =
      cfg.auto_mean ? dataset_channel_mean(dataset) : cfg.channel_mean;

  std::vector<Tensor4> inputs, labels;
  inputs.reserve(source->size());
  labels.reserve(source->size());
  for (const auto& s : *source) {
    inputs.push_back(preprocess(s.image, result.channel_mean, side));
    labels.push_back(preprocess_gt(s.gt, side));
  }

  const std::int64_t n = std::int64_t(inputs.size());
  const std::int64_t batch = std::min(cfg.batch, n);
  const Shape4 in_shape = inputs[0].shape();

  std::vector<ParamView> params = net.params();
  MomentumMap& momentum = result.momentum;

  auto save = [&](std::int64_t iteration) {
    if (ckpt_path.empty()) return;
    CheckpointBlock mean_block;
    mean_block.name = "preprocess.channel_mean";
    mean_block.dims = {3};
    mean_block.data.assign(result.channel_mean.begin(),
                           result.channel_mean.end());
    write_checkpoint_file(
        ckpt_path,
        make_checkpoint(net, momentum, iteration, cfg.seed, {mean_block}));
  };

  std::vector<std::int64_t> order(static_cast<std::size_t>(n), 0);
  Tensor4 batch_x({batch, in_shape.c, side, side});
  Tensor4 batch_y({batch, 1, side, side});

  for (std::int64_t iter = 0; iter < cfg.iterations; ++iter) {
    const double lr =
        cfg.lr * std::pow(cfg.decay_factor, double(iter / cfg.decay_interval));

    std::iota(order.begin(), order.end(), 0);
    if (batch < n) {
      RngStream rng =
          RngStream::derive(cfg.seed, std::uint64_t(StreamDomain::batch),
                            std::uint64_t(iter));
      for (std::int64_t j = 0; j < batch; ++j) {
        const std::int64_t pick =
            j + std::int64_t(rng.next_index(std::uint64_t(n - j)));
        std::swap(order[std::size_t(j)], order[std::size_t(pick)]);
      }
    }

    for (std::int64_t b = 0; b < batch; ++b) {
      const Tensor4& src_x = inputs[std::size_t(order[std::size_t(b)])];
      const Tensor4& src_y = labels[std::size_t(order[std::size_t(b)])];
      std::copy(src_x.data(), src_x.data() + src_x.size(),
                batch_x.data() + b * src_x.size());
      std::copy(src_y.data(), src_y.data() + src_y.size(),
                batch_y.data() + b * src_y.size());
    }

    const ForwardCtx ctx{Mode::train, cfg.seed, iter};
    const Tensor4 logits = net.forward(batch_x, ctx);
    SoftmaxLossResult loss = softmax_cross_entropy(logits, batch_y);
    const double logged =
        cfg.reduction == LossReduction::mean ? loss.ce.mean : loss.ce.sum;
    if (!std::isfinite(logged)) {
      const std::string layer = detail::first_nonfinite_layer(net, batch_x, ctx);
      throw std::runtime_error(
          "train: non-finite loss at iteration " + std::to_string(iter + 1) +
          "; first non-finite values in: " + layer);
    }

    Tensor4 grad = loss.ce.grad_logits;
    if (cfg.reduction == LossReduction::mean) {
      const double scale = 1.0 / double(loss.ce.pixels);
      for (std::int64_t i = 0; i < grad.size(); ++i) grad.data()[i] *= scale;
    }

    net.zero_grad();
    net.backward(grad);
    sgd_step(params, momentum, lr, cfg.momentum);

    result.log.push_back(LogRow{iter + 1, lr, logged});
    result.final_loss = logged;
    result.iterations_run = iter + 1;

    if (cfg.checkpoint_interval > 0 && (iter + 1) % cfg.checkpoint_interval == 0)
      save(iter + 1);
  }

  save(cfg.iterations);
  if (!log_path.empty()) detail::write_log_csv(log_path, result.log);
  return result;
}

}  // namespace ucf
