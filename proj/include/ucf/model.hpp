#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ucf/batchnorm.hpp"
#include "ucf/config.hpp"
#include "ucf/conv.hpp"
#include "ucf/interpolate.hpp"
#include "ucf/pooling.hpp"
#include "ucf/rdropout.hpp"
#include "ucf/rng.hpp"
#include "ucf/softmax_loss.hpp"
#include "ucf/tensor.hpp"
#include "ucf/upsampling.hpp"

namespace ucf {

// ---------------------------------------------------------------------------
// Network configuration.
// ---------------------------------------------------------------------------

struct EncoderStage {
  std::int64_t convs = 2;
  std::int64_t channels = 0;
  bool rdropout = true;  // dropout before this stage's pooling
};

struct DecoderStage {
  UpsampleMode mode = UpsampleMode::hybrid;
  std::int64_t convs = 2;
  std::int64_t channels = 0;
  bool rdropout = true;  // dropout after this stage's convs
};

struct NetworkConfig {
  std::int64_t input_side = 64;
  std::int64_t input_channels = 3;
  std::vector<EncoderStage> encoder;
  std::vector<DecoderStage> decoder;
  std::int64_t classifier_channels = 2;

  // Ablation flags; exactly one of {use_dropout, use_rdropout, neither}.
  bool use_dropout = false;  // classic post-activation dropout
  bool use_rdropout = true;
  bool use_restricted_deconv = true;
  bool use_interp = true;

  double dropout_rate = 0.5;
  MaskKind mask_kind = MaskKind::bernoulli;

  std::int64_t stages() const { return std::int64_t(encoder.size()); }

  bool dropout_enabled() const { return use_dropout || use_rdropout; }

  DropoutPlacement placement() const {
    return use_dropout ? DropoutPlacement::post_activation
                       : DropoutPlacement::pre_activation;
  }

  UpsampleMode flag_mode() const {
    if (use_restricted_deconv && use_interp) return UpsampleMode::hybrid;
    if (use_restricted_deconv) return UpsampleMode::deconv_restricted;
    if (use_interp) return UpsampleMode::interp_conv;
    return UpsampleMode::deconv_naive;
  }

  /// Rewrites the per-stage upsample modes and dropout switches from the
  /// four ablation flags.
  void apply_flags() {
    for (auto& st : decoder) st.mode = flag_mode();
    for (auto& st : encoder) st.rdropout = dropout_enabled();
    for (auto& st : decoder) st.rdropout = dropout_enabled();
  }

  void validate() const {
    if (input_side < 1 || input_channels < 1)
      throw std::invalid_argument("NetworkConfig: bad input dimensions");
    if (encoder.empty())
      throw std::invalid_argument("NetworkConfig: at least one stage required");
    if (encoder.size() != decoder.size())
      throw std::invalid_argument(
          "NetworkConfig: decoder must mirror the encoder stage count");
    if (classifier_channels != 2)
      throw std::invalid_argument(
          "NetworkConfig: classifier must have 2 channels");
    if (use_dropout && use_rdropout)
      throw std::invalid_argument(
          "NetworkConfig: use_dropout and use_rdropout are exclusive");
    if (!(dropout_rate > 0.0 && dropout_rate < 1.0))
      throw std::invalid_argument("NetworkConfig: dropout rate must be in (0,1)");
    std::int64_t divisor = 1;
    for (std::size_t i = 0; i < encoder.size(); ++i) divisor *= 2;
    if (input_side % divisor != 0)
      throw std::invalid_argument(
          "NetworkConfig: input side must be divisible by 2^stages");
    for (const auto& st : encoder)
      if (st.convs < 1 || st.channels < 1)
        throw std::invalid_argument("NetworkConfig: bad encoder stage");
    for (const auto& st : decoder)
      if (st.convs < 1 || st.channels < 1)
        throw std::invalid_argument("NetworkConfig: bad decoder stage");
  }

  static NetworkConfig toy_default() {
    NetworkConfig c;
    c.input_side = 64;
    c.input_channels = 3;
    c.encoder = {{2, 16, true}, {2, 32, true}, {2, 64, true}};
    c.decoder = {{UpsampleMode::hybrid, 2, 32, true},
                 {UpsampleMode::hybrid, 2, 16, true},
                 {UpsampleMode::hybrid, 2, 16, true}};
    c.apply_flags();
    return c;
  }

  KvMap to_kv() const {
    KvMap kv;
    kv["input.side"] = std::to_string(input_side);
    kv["input.channels"] = std::to_string(input_channels);
    kv["classifier.channels"] = std::to_string(classifier_channels);
    kv["stages"] = std::to_string(stages());
    for (std::size_t i = 0; i < encoder.size(); ++i) {
      const std::string p = "enc" + std::to_string(i) + ".";
      kv[p + "convs"] = std::to_string(encoder[i].convs);
      kv[p + "channels"] = std::to_string(encoder[i].channels);
      kv[p + "rdropout"] = encoder[i].rdropout ? "true" : "false";
    }
    for (std::size_t i = 0; i < decoder.size(); ++i) {
      const std::string p = "dec" + std::to_string(i) + ".";
      kv[p + "mode"] = upsample_mode_name(decoder[i].mode);
      kv[p + "convs"] = std::to_string(decoder[i].convs);
      kv[p + "channels"] = std::to_string(decoder[i].channels);
      kv[p + "rdropout"] = decoder[i].rdropout ? "true" : "false";
    }
    kv["flags.dropout"] = use_dropout ? "true" : "false";
    kv["flags.rdropout"] = use_rdropout ? "true" : "false";
    kv["flags.restricted_deconv"] = use_restricted_deconv ? "true" : "false";
    kv["flags.interp"] = use_interp ? "true" : "false";
    char rate[32];
    std::snprintf(rate, sizeof rate, "%.17g", dropout_rate);
    kv["rdropout.rate"] = rate;
    kv["rdropout.generator"] =
        mask_kind == MaskKind::bernoulli ? "bernoulli" : "uniform01";
    return kv;
  }

  static NetworkConfig from_kv(const KvMap& kv) {
    NetworkConfig c;
    c.input_side = kv_parse_int("input.side", kv_require(kv, "input.side"));
    c.input_channels =
        kv_parse_int("input.channels", kv_require(kv, "input.channels"));
    c.classifier_channels = kv_parse_int(
        "classifier.channels", kv_require(kv, "classifier.channels"));
    const std::int64_t n = kv_parse_int("stages", kv_require(kv, "stages"));
    if (n < 1 || n > 16)
      throw std::invalid_argument("NetworkConfig: bad stage count");
    for (std::int64_t i = 0; i < n; ++i) {
      const std::string p = "enc" + std::to_string(i) + ".";
      EncoderStage st;
      st.convs = kv_parse_int(p + "convs", kv_require(kv, p + "convs"));
      st.channels = kv_parse_int(p + "channels", kv_require(kv, p + "channels"));
      st.rdropout = kv_parse_bool(p + "rdropout", kv_require(kv, p + "rdropout"));
      c.encoder.push_back(st);
    }
    for (std::int64_t i = 0; i < n; ++i) {
      const std::string p = "dec" + std::to_string(i) + ".";
      DecoderStage st;
      st.mode = parse_upsample_mode(kv_require(kv, p + "mode"));
      st.convs = kv_parse_int(p + "convs", kv_require(kv, p + "convs"));
      st.channels = kv_parse_int(p + "channels", kv_require(kv, p + "channels"));
      st.rdropout = kv_parse_bool(p + "rdropout", kv_require(kv, p + "rdropout"));
      c.decoder.push_back(st);
    }
    c.use_dropout = kv_parse_bool("flags.dropout", kv_require(kv, "flags.dropout"));
    c.use_rdropout =
        kv_parse_bool("flags.rdropout", kv_require(kv, "flags.rdropout"));
    c.use_restricted_deconv = kv_parse_bool(
        "flags.restricted_deconv", kv_require(kv, "flags.restricted_deconv"));
    c.use_interp = kv_parse_bool("flags.interp", kv_require(kv, "flags.interp"));
    c.dropout_rate = kv_get_double(kv, "rdropout.rate", 0.5);
    const std::string gen = kv_get(kv, "rdropout.generator", "bernoulli");
    if (gen == "bernoulli") c.mask_kind = MaskKind::bernoulli;
    else if (gen == "uniform01") c.mask_kind = MaskKind::uniform01;
    else throw std::invalid_argument("NetworkConfig: unknown generator " + gen);
    c.validate();
    return c;
  }
};

/// Ablation presets. Modes follow the flag pairs: restricted+interp is the
/// hybrid upsampler, restricted alone a plain restricted deconvolution,
/// interp alone the interpolate+1x1 path, and neither a naive deconvolution.
inline NetworkConfig variant_config(const std::string& name) {
  NetworkConfig c = NetworkConfig::toy_default();
  if (name == "ucf") {
    c.use_dropout = false; c.use_rdropout = true;
    c.use_restricted_deconv = true; c.use_interp = true;
  } else if (name == "va") {
    c.use_dropout = true; c.use_rdropout = false;
    c.use_restricted_deconv = true; c.use_interp = false;
  } else if (name == "vb") {
    c.use_dropout = false; c.use_rdropout = true;
    c.use_restricted_deconv = true; c.use_interp = false;
  } else if (name == "vc") {
    c.use_dropout = false; c.use_rdropout = true;
    c.use_restricted_deconv = false; c.use_interp = true;
  } else if (name == "vd") {
    c.use_dropout = false; c.use_rdropout = false;
    c.use_restricted_deconv = true; c.use_interp = false;
  } else if (name == "ve") {
    c.use_dropout = false; c.use_rdropout = false;
    c.use_restricted_deconv = false; c.use_interp = true;
  } else {
    throw std::invalid_argument("unknown variant: " + name);
  }
  c.apply_flags();
  return c;
}

// ---------------------------------------------------------------------------
// Layers.
// ---------------------------------------------------------------------------

struct ForwardCtx {
  Mode mode = Mode::eval;
  std::uint64_t seed = 0;
  std::int64_t iteration = 0;
};

/// A named view over a flat parameter (or state) buffer. Pointers stay valid
/// for the network's lifetime; gradients are copied into stable buffers.
struct ParamView {
  std::string name;
  std::vector<std::int64_t> dims;
  double* value = nullptr;
  double* grad = nullptr;  // null for non-trainable state blocks
  std::int64_t count = 0;
  bool trainable = true;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor4 forward(const Tensor4& x, const ForwardCtx& ctx) = 0;
  virtual Tensor4 backward(const Tensor4& grad_out) = 0;
  virtual void collect_params(std::vector<ParamView>& out) { (void)out; }
  virtual void zero_grad() {}
  virtual std::string describe() const = 0;
};

namespace detail {

inline ParamView tensor_view(const std::string& name, Tensor4& value,
                             Tensor4& grad) {
  const Shape4 s = value.shape();
  return ParamView{name, {s.n, s.c, s.h, s.w}, value.data(), grad.data(),
                   value.size(), true};
}

inline ParamView vector_view(const std::string& name, std::vector<double>& value,
                             std::vector<double>& grad) {
  return ParamView{name,
                   {std::int64_t(value.size())},
                   value.data(),
                   grad.data(),
                   std::int64_t(value.size()),
                   true};
}

inline ParamView state_view(const std::string& name,
                            std::vector<double>& value) {
  return ParamView{name,
                   {std::int64_t(value.size())},
                   value.data(),
                   nullptr,
                   std::int64_t(value.size()),
                   false};
}

inline void copy_into(const Tensor4& src, Tensor4& dst) {
  require_same_shape(src, dst, "grad buffer");
  std::copy(src.data(), src.data() + src.size(), dst.data());
}

}  // namespace detail

class ConvLayer final : public Layer {
 public:
  ConvLayer(std::string name, const ConvSpec& spec, RngStream& rng)
      : name_(std::move(name)),
        spec_(spec),
        params_(init_conv_params(spec, rng)),
        grad_w_(Tensor4::zeros(params_.weight.shape())),
        grad_b_(params_.bias.size(), 0.0) {}

  Tensor4 forward(const Tensor4& x, const ForwardCtx&) override {
    x_ = x;
    return conv2d_forward(x, params_, spec_);
  }

  Tensor4 backward(const Tensor4& grad_out) override {
    ConvGrads g = conv2d_backward(x_, params_, spec_, grad_out);
    detail::copy_into(g.grad_w, grad_w_);
    grad_b_ = g.grad_b;
    return std::move(g.grad_x);
  }

  void collect_params(std::vector<ParamView>& out) override {
    out.push_back(detail::tensor_view(name_ + ".weight", params_.weight, grad_w_));
    out.push_back(detail::vector_view(name_ + ".bias", params_.bias, grad_b_));
  }

  void zero_grad() override {
    grad_w_.fill(0.0);
    std::fill(grad_b_.begin(), grad_b_.end(), 0.0);
  }

  std::string describe() const override {
    std::ostringstream s;
    s << name_ << ": conv " << spec_.in_channels << "->" << spec_.out_channels
      << " k" << spec_.kernel << " s" << spec_.stride << " p" << spec_.pad;
    return s.str();
  }

 private:
  std::string name_;
  ConvSpec spec_;
  ConvParams params_;
  Tensor4 grad_w_;
  std::vector<double> grad_b_;
  Tensor4 x_;
};

class BatchNormLayer final : public Layer {
 public:
  BatchNormLayer(std::string name, std::int64_t channels)
      : name_(std::move(name)),
        params_(BatchNormParams::init(channels)),
        grad_gamma_(std::size_t(channels), 0.0),
        grad_beta_(std::size_t(channels), 0.0) {}

  Tensor4 forward(const Tensor4& x, const ForwardCtx& ctx) override {
    x_ = x;
    return batchnorm_forward(x, params_, ctx.mode, &cache_);
  }

  Tensor4 backward(const Tensor4& grad_out) override {
    BatchNormGrads g = batchnorm_backward(x_, params_, cache_, grad_out);
    grad_gamma_ = g.grad_gamma;
    grad_beta_ = g.grad_beta;
    return std::move(g.grad_x);
  }

  void collect_params(std::vector<ParamView>& out) override {
    out.push_back(detail::vector_view(name_ + ".gamma", params_.gamma, grad_gamma_));
    out.push_back(detail::vector_view(name_ + ".beta", params_.beta, grad_beta_));
    out.push_back(detail::state_view(name_ + ".running_mean", params_.running_mean));
    out.push_back(detail::state_view(name_ + ".running_var", params_.running_var));
  }

  void zero_grad() override {
    std::fill(grad_gamma_.begin(), grad_gamma_.end(), 0.0);
    std::fill(grad_beta_.begin(), grad_beta_.end(), 0.0);
  }

  std::string describe() const override {
    return name_ + ": batchnorm " + std::to_string(params_.channels()) + "ch";
  }

 private:
  std::string name_;
  BatchNormParams params_;
  BatchNormCache cache_;
  std::vector<double> grad_gamma_, grad_beta_;
  Tensor4 x_;
};

inline double mask_mean(const MaskGenerator& gen) {
  switch (gen.kind) {
    case MaskKind::bernoulli:
      return gen.rate;
    case MaskKind::uniform01:
      return 0.5;
    case MaskKind::custom: {
      if (gen.table.empty())
        throw std::invalid_argument("mask_mean: empty custom table");
      double s = 0;
      for (double v : gen.table) s += v;
      return s / double(gen.table.size());
    }
  }
  throw std::logic_error("mask_mean: bad kind");
}

/// Activation with optional multiplicative-mask dropout. Mask draws are a
/// pure function of (seed, layer id, iteration), so a forward pass can be
/// replayed exactly.
class ActDropLayer final : public Layer {
 public:
  ActDropLayer(std::string name, Activation act, bool dropout_on,
               DropoutPlacement placement, MaskGenerator gen,
               std::int64_t layer_id)
      : name_(std::move(name)),
        act_(act),
        dropout_on_(dropout_on),
        placement_(placement),
        gen_(std::move(gen)),
        layer_id_(layer_id) {}

  Tensor4 forward(const Tensor4& x, const ForwardCtx& ctx) override {
    x_ = x;
    if (!dropout_on_) {
      // Plain activation; the eval-mode rule with scale 1 is exactly g(x).
      mode_used_ = Mode::eval;
      return rdropout_forward(x, mask_, act_, placement_, Mode::eval, 1.0);
    }
    mode_used_ = ctx.mode;
    if (ctx.mode == Mode::eval)
      return rdropout_forward(x, mask_, act_, placement_, Mode::eval,
                              mask_mean(gen_));
    RngStream rng =
        RngStream::derive(ctx.seed, std::uint64_t(StreamDomain::mask),
                          std::uint64_t(layer_id_),
                          std::uint64_t(ctx.iteration));
    mask_ = gen_.generate(x.shape(), rng);
    return rdropout_forward(x, mask_, act_, placement_, Mode::train, 1.0);
  }

  Tensor4 backward(const Tensor4& grad_out) override {
    const double p = dropout_on_ ? mask_mean(gen_) : 1.0;
    return rdropout_backward(grad_out, x_, mask_, act_, placement_, mode_used_,
                             mode_used_ == Mode::eval ? p : 1.0);
  }

  std::string describe() const override {
    std::string s = name_ + ": relu";
    if (act_.kind == ActKind::tanh) s = name_ + ": tanh";
    if (act_.kind == ActKind::lrelu) s = name_ + ": lrelu";
    if (dropout_on_)
      s += placement_ == DropoutPlacement::pre_activation
               ? " +rdropout(pre)"
               : " +dropout(post)";
    return s;
  }

 private:
  std::string name_;
  Activation act_;
  bool dropout_on_;
  DropoutPlacement placement_;
  MaskGenerator gen_;
  std::int64_t layer_id_;
  Tensor4 x_, mask_;
  Mode mode_used_ = Mode::eval;
};

class MaxPoolLayer final : public Layer {
 public:
  explicit MaxPoolLayer(std::string name, std::int64_t window = 2)
      : name_(std::move(name)), window_(window) {}

  Tensor4 forward(const Tensor4& x, const ForwardCtx&) override {
    fwd_ = maxpool_forward(x, window_);
    return fwd_.output;
  }

  Tensor4 backward(const Tensor4& grad_out) override {
    return maxpool_backward(grad_out, fwd_);
  }

  std::string describe() const override {
    return name_ + ": maxpool " + std::to_string(window_) + "x" +
           std::to_string(window_);
  }

 private:
  std::string name_;
  std::int64_t window_;
  MaxPoolResult fwd_;
};

class UpsampleLayer final : public Layer {
 public:
  UpsampleLayer(std::string name, const UpsampleSpec& spec, RngStream& rng)
      : name_(std::move(name)), spec_(spec), params_(init_upsampler(spec, rng)) {
    if (spec_.has_deconv()) {
      grad_dw_ = Tensor4::zeros(params_.deconv.weight.shape());
      grad_db_.assign(params_.deconv.bias.size(), 0.0);
    }
    if (spec_.has_interp()) {
      grad_pw_ = Tensor4::zeros(params_.proj.weight.shape());
      grad_pb_.assign(params_.proj.bias.size(), 0.0);
    }
  }

  Tensor4 forward(const Tensor4& x, const ForwardCtx&) override {
    x_ = x;
    return upsampler_forward(x, spec_, params_);
  }

  Tensor4 backward(const Tensor4& grad_out) override {
    UpsamplerGrads g = upsampler_backward(x_, spec_, params_, grad_out);
    if (spec_.has_deconv()) {
      detail::copy_into(g.deconv.grad_w, grad_dw_);
      grad_db_ = g.deconv.grad_b;
    }
    if (spec_.has_interp()) {
      detail::copy_into(g.proj.grad_w, grad_pw_);
      grad_pb_ = g.proj.grad_b;
    }
    return std::move(g.grad_x);
  }

  void collect_params(std::vector<ParamView>& out) override {
    if (spec_.has_deconv()) {
      out.push_back(
          detail::tensor_view(name_ + ".deconv.weight", params_.deconv.weight, grad_dw_));
      out.push_back(
          detail::vector_view(name_ + ".deconv.bias", params_.deconv.bias, grad_db_));
    }
    if (spec_.has_interp()) {
      out.push_back(
          detail::tensor_view(name_ + ".proj.weight", params_.proj.weight, grad_pw_));
      out.push_back(
          detail::vector_view(name_ + ".proj.bias", params_.proj.bias, grad_pb_));
    }
  }

  void zero_grad() override {
    if (spec_.has_deconv()) {
      grad_dw_.fill(0.0);
      std::fill(grad_db_.begin(), grad_db_.end(), 0.0);
    }
    if (spec_.has_interp()) {
      grad_pw_.fill(0.0);
      std::fill(grad_pb_.begin(), grad_pb_.end(), 0.0);
    }
  }

  std::string describe() const override {
    std::ostringstream s;
    s << name_ << ": upsample " << upsample_mode_name(spec_.mode) << " "
      << spec_.in_channels << "->" << spec_.out_channels << " k" << spec_.kernel
      << " s" << spec_.stride << " p" << spec_.resolved_pad();
    return s.str();
  }

 private:
  std::string name_;
  UpsampleSpec spec_;
  UpsamplerParams params_;
  Tensor4 grad_dw_, grad_pw_;
  std::vector<double> grad_db_, grad_pb_;
  Tensor4 x_;
};

// ---------------------------------------------------------------------------
// Network.
// ---------------------------------------------------------------------------

class Network {
 public:
  NetworkConfig config;
  std::vector<std::unique_ptr<Layer>> layers;
  std::vector<Shape4> last_trace;  // output shape of each layer, per forward

  Tensor4 forward(const Tensor4& x, const ForwardCtx& ctx) {
    last_trace.clear();
    Tensor4 y = x;
    for (auto& layer : layers) {
      y = layer->forward(y, ctx);
      last_trace.push_back(y.shape());
    }
    return y;
  }

  Tensor4 backward(const Tensor4& grad_out) {
    Tensor4 g = grad_out;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
      g = (*it)->backward(g);
    return g;
  }

  void zero_grad() {
    for (auto& layer : layers) layer->zero_grad();
  }

  std::vector<ParamView> params() {
    std::vector<ParamView> out;
    for (auto& layer : layers) layer->collect_params(out);
    return out;
  }

  std::string describe() const {
    std::ostringstream s;
    for (const auto& layer : layers) s << layer->describe() << '\n';
    return s.str();
  }
};

inline Network build_network(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Network net;
  net.config = config;

  MaskGenerator gen;
  gen.kind = config.mask_kind;
  gen.rate = config.dropout_rate;

  std::uint64_t init_index = 0;
  std::int64_t mask_id = 0;
  std::int64_t channels = config.input_channels;

  auto conv_block = [&](const std::string& prefix, std::int64_t j,
                        std::int64_t out_ch, bool drop) {
    RngStream rng = RngStream::derive(seed, std::uint64_t(StreamDomain::init),
                                      init_index++);
    const std::string idx = std::to_string(j);
    net.layers.push_back(std::make_unique<ConvLayer>(
        prefix + ".conv" + idx, ConvSpec{channels, out_ch, 3, 1, 1}, rng));
    net.layers.push_back(
        std::make_unique<BatchNormLayer>(prefix + ".bn" + idx, out_ch));
    net.layers.push_back(std::make_unique<ActDropLayer>(
        prefix + ".act" + idx, Activation{ActKind::relu}, drop,
        config.placement(), gen, mask_id++));
    channels = out_ch;
  };

  for (std::size_t i = 0; i < config.encoder.size(); ++i) {
    const EncoderStage& st = config.encoder[i];
    const std::string prefix = "enc" + std::to_string(i);
    for (std::int64_t j = 0; j < st.convs; ++j)
      conv_block(prefix, j, st.channels,
                 st.rdropout && config.dropout_enabled() && j == st.convs - 1);
    net.layers.push_back(std::make_unique<MaxPoolLayer>(prefix + ".pool", 2));
  }

  for (std::size_t i = 0; i < config.decoder.size(); ++i) {
    const DecoderStage& st = config.decoder[i];
    const std::string prefix = "dec" + std::to_string(i);
    RngStream rng = RngStream::derive(seed, std::uint64_t(StreamDomain::init),
                                      init_index++);
    UpsampleSpec us;
    us.mode = st.mode;
    us.in_channels = channels;
    us.out_channels = st.channels;
    if (st.mode == UpsampleMode::deconv_naive) {
      // Exact doubling with an overlapping stamp: k is not a multiple of s,
      // so the contribution counts tile unevenly and the block checkerboards.
      us.kernel = 3;
      us.stride = 2;
      us.pad = 1;
      us.out_pad = 1;
    } else {
      us.kernel = 4;
      us.stride = 2;
      us.pad = 1;
    }
    net.layers.push_back(
        std::make_unique<UpsampleLayer>(prefix + ".up", us, rng));
    net.layers.push_back(
        std::make_unique<BatchNormLayer>(prefix + ".bn_up", st.channels));
    net.layers.push_back(std::make_unique<ActDropLayer>(
        prefix + ".act_up", Activation{ActKind::relu}, false,
        config.placement(), gen, mask_id++));
    channels = st.channels;
    for (std::int64_t j = 0; j < st.convs; ++j)
      conv_block(prefix, j, st.channels,
                 st.rdropout && config.dropout_enabled() && j == st.convs - 1);
  }

  RngStream rng = RngStream::derive(seed, std::uint64_t(StreamDomain::init),
                                    init_index++);
  net.layers.push_back(std::make_unique<ConvLayer>(
      "cls", ConvSpec{channels, config.classifier_channels, 1, 1, 0}, rng));
  return net;
}

// ---------------------------------------------------------------------------
// Saliency inference.
// ---------------------------------------------------------------------------

struct SaliencyMap {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<double> values;  // all in [0,1]
};

/// Foreground-minus-background with negatives clipped to zero, applied to
/// two-channel logits (channel 0 background, channel 1 foreground).
inline SaliencyMap saliency_from_logits(const Tensor4& logits) {
  const Shape4 s = logits.shape();
  if (s.n != 1 || s.c != 2)
    throw std::invalid_argument("saliency_from_logits: want (1,2,h,w) logits");
  const Tensor4 probs = softmax_channels(logits);
  SaliencyMap map;
  map.h = s.h;
  map.w = s.w;
  map.values.resize(std::size_t(s.h * s.w));
  for (std::int64_t r = 0; r < s.h; ++r)
    for (std::int64_t c = 0; c < s.w; ++c) {
      const double fe = probs.at(0, 1, r, c);
      const double be = probs.at(0, 0, r, c);
      map.values[std::size_t(r * s.w + c)] = std::max(fe - be, 0.0);
    }
  return map;
}

inline SaliencyMap infer_saliency(Network& net, const Tensor4& image) {
  const Shape4 s = image.shape();
  if (s.n != 1)
    throw std::invalid_argument("infer_saliency: one image at a time");
  std::int64_t divisor = 1;
  for (std::int64_t i = 0; i < net.config.stages(); ++i) divisor *= 2;
  if (s.h % divisor != 0 || s.w % divisor != 0)
    throw std::invalid_argument(
        "infer_saliency: input sides must be divisible by " +
        std::to_string(divisor));
  ForwardCtx ctx;
  ctx.mode = Mode::eval;
  return saliency_from_logits(net.forward(image, ctx));
}

inline std::int64_t snapped_side(std::int64_t side, double scale,
                                 std::int64_t multiple) {
  const double target = double(side) * scale;
  std::int64_t snapped =
      std::int64_t(std::llround(target / double(multiple))) * multiple;
  return std::max(snapped, multiple);
}

inline SaliencyMap multiscale_ensemble(Network& net, const Tensor4& image,
                                       const std::vector<double>& scales) {
  if (scales.empty())
    throw std::invalid_argument("multiscale_ensemble: empty scale list");
  const Shape4 s = image.shape();
  std::int64_t divisor = 1;
  for (std::int64_t i = 0; i < net.config.stages(); ++i) divisor *= 2;
  std::vector<double> acc(std::size_t(s.h * s.w), 0.0);
  for (double scale : scales) {
    if (!(scale > 0))
      throw std::invalid_argument("multiscale_ensemble: scales must be > 0");
    const std::int64_t th = snapped_side(s.h, scale, divisor);
    const std::int64_t tw = snapped_side(s.w, scale, divisor);
    const Tensor4 scaled = (th == s.h && tw == s.w)
                               ? image
                               : interpolate(image, th, tw, InterpMode::bilinear);
    const SaliencyMap m = infer_saliency(net, scaled);
    Tensor4 plane = Tensor4::zeros({1, 1, th, tw});
    std::copy(m.values.begin(), m.values.end(), plane.data());
    const Tensor4 back = (th == s.h && tw == s.w)
                             ? plane
                             : interpolate(plane, s.h, s.w, InterpMode::bilinear);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += back.data()[i];
  }
  SaliencyMap out;
  out.h = s.h;
  out.w = s.w;
  out.values.resize(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i)
    out.values[i] =
        std::min(1.0, std::max(0.0, acc[i] / double(scales.size())));
  return out;
}

}  // namespace ucf
