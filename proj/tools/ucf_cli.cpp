#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ucf/data.hpp"
#include "ucf/metrics.hpp"
#include "ucf/model.hpp"
#include "ucf/parallel.hpp"
#include "ucf/training.hpp"
#include "ucf/upsampling.hpp"

namespace {

namespace fs = std::filesystem;

void print_block(const ucf::KvMap& kv) {
  for (const auto& [k, v] : kv) std::printf("%s=%s\n", k.c_str(), v.c_str());
  std::fflush(stdout);
}

std::vector<double> parse_scales(const std::string& text) {
  std::vector<double> scales;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string item = ucf::strip(text.substr(pos, comma - pos));
    if (item.empty()) throw std::runtime_error("--scales: empty entry");
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (end == nullptr || *end != '\0')
      throw std::runtime_error("--scales: bad number '" + item + "'");
    scales.push_back(v);
    pos = comma + 1;
  }
  return scales;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int run_synth(std::int64_t count, std::int64_t side, std::uint64_t seed,
              const std::string& out) {
  ucf::KvMap block;
  block["synth.count"] = std::to_string(count);
  block["synth.side"] = std::to_string(side);
  block["synth.seed"] = std::to_string(seed);
  block["synth.out"] = out;
  print_block(block);

  ucf::SynthSpec spec;
  spec.count = count;
  spec.side = side;
  spec.seed = seed;
  ucf::write_dataset(out, ucf::generate(spec));
  std::printf("written=%lld\n", static_cast<long long>(count));
  return 0;
}

int run_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_ckpt, const std::string& log_path,
              const std::string& variant, bool variant_set, std::uint64_t seed,
              bool seed_set, std::int64_t iters, bool iters_set) {
  ucf::NetworkConfig net_cfg = ucf::NetworkConfig::toy_default();
  ucf::TrainConfig tc;
  if (!config_path.empty()) {
    const ucf::KvMap kv = ucf::read_kv_file(config_path);
    if (ucf::kv_has(kv, "input.side")) net_cfg = ucf::NetworkConfig::from_kv(kv);
    tc = ucf::TrainConfig::from_kv(kv);
  }
  if (variant_set) {
    const ucf::NetworkConfig v = ucf::variant_config(variant);
    net_cfg.use_dropout = v.use_dropout;
    net_cfg.use_rdropout = v.use_rdropout;
    net_cfg.use_restricted_deconv = v.use_restricted_deconv;
    net_cfg.use_interp = v.use_interp;
    net_cfg.apply_flags();
  }
  if (seed_set) tc.seed = seed;
  if (iters_set) tc.iterations = iters;
  net_cfg.validate();
  tc.validate();

  ucf::KvMap block = net_cfg.to_kv();
  for (const auto& [k, v] : tc.to_kv()) block[k] = v;
  block["run.data"] = data_dir;
  block["run.checkpoint"] = out_ckpt;
  block["run.log"] = log_path;
  block["run.variant"] = variant_set ? variant : "ucf";
  print_block(block);

  const std::vector<ucf::SamplePair> dataset = ucf::load_dataset(data_dir);
  if (!fs::path(out_ckpt).parent_path().empty())
    fs::create_directories(fs::path(out_ckpt).parent_path());
  ucf::Network net = ucf::build_network(net_cfg, tc.seed);
  const ucf::TrainResult res = ucf::train(net, dataset, tc, out_ckpt, log_path);
  std::printf("final_loss=%s\n", fmt17(res.final_loss).c_str());
  std::printf("iterations_run=%lld\n",
              static_cast<long long>(res.iterations_run));
  return 0;
}

int run_infer(const std::string& ckpt_path, const std::string& image_path,
              const std::string& out_path, const std::string& scales_text) {
  const std::vector<double> scales = parse_scales(scales_text);
  ucf::KvMap block;
  block["infer.ckpt"] = ckpt_path;
  block["infer.image"] = image_path;
  block["infer.out"] = out_path;
  block["infer.scales"] = scales_text;
  print_block(block);

  const ucf::Checkpoint ck = ucf::read_checkpoint_file(ckpt_path);
  ucf::Network net = ucf::network_from_checkpoint(ck);
  const ucf::CheckpointBlock* mb = ucf::find_block(ck, "preprocess.channel_mean");
  if (mb == nullptr || mb->data.size() != 3)
    throw std::runtime_error("checkpoint missing preprocess.channel_mean");

  const ucf::ImageU8 img = ucf::read_pnm(image_path);
  if (img.channels != 3) throw std::runtime_error("infer: RGB image required");
  ucf::Tensor4 x = ucf::image_to_tensor(img);
  for (std::int64_t c = 0; c < 3; ++c) {
    double* plane = x.plane(0, c);
    for (std::int64_t i = 0; i < img.height * img.width; ++i)
      plane[i] -= mb->data[std::size_t(c)];
  }

  const ucf::SaliencyMap m = ucf::multiscale_ensemble(net, x, scales);
  const ucf::ImageU8 out = ucf::gray_from_unit(m.h, m.w, m.values);
  if (!fs::path(out_path).parent_path().empty())
    fs::create_directories(fs::path(out_path).parent_path());
  ucf::write_pnm(out_path, out);
  return 0;
}

int run_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& out_dir, double beta2) {
  ucf::KvMap block;
  block["eval.pred"] = pred_dir;
  block["eval.gt"] = gt_dir;
  block["eval.out"] = out_dir;
  block["eval.beta2"] = fmt17(beta2);
  print_block(block);

  const ucf::EvalReport report = ucf::evaluate_dir(pred_dir, gt_dir, beta2);
  fs::create_directories(out_dir);
  ucf::write_per_image_csv((fs::path(out_dir) / "per_image.csv").string(), report);
  ucf::write_summary_csv((fs::path(out_dir) / "summary.csv").string(), report);
  ucf::write_pr_curve_csv((fs::path(out_dir) / "pr_curve.csv").string(), report);
  std::printf("mean_fbeta=%s\n", fmt17(report.mean_fbeta).c_str());
  std::printf("mean_mae=%s\n", fmt17(report.mean_mae).c_str());
  std::printf("n_images=%lld\n", static_cast<long long>(report.n_images));
  return 0;
}

int run_arith(std::int64_t n, std::int64_t k, std::int64_t s, std::int64_t p,
              std::int64_t t) {
  ucf::KvMap block;
  block["arith.n"] = std::to_string(n);
  block["arith.k"] = std::to_string(k);
  block["arith.s"] = std::to_string(s);
  block["arith.p"] = std::to_string(p);
  block["arith.t"] = std::to_string(t);
  print_block(block);

  bool any = false;
  try {
    const std::int64_t conv_out = ucf::conv_out_side(n, k, s, p);
    std::printf("conv_out=%lld\n", static_cast<long long>(conv_out));
    any = true;
  } catch (const std::exception&) {
  }
  try {
    const ucf::DeconvArith a = ucf::arith_report(n, k, s, p, t);
    std::printf("deconv_out=%lld\n", static_cast<long long>(a.out_side));
    std::printf("stretched=%lld\n", static_cast<long long>(a.stretched_side));
    std::printf("overlap=%s\n", a.overlap ? "true" : "false");
    any = true;
  } catch (const std::exception&) {
    std::printf("overlap=%s\n", (k % s) != 0 ? "true" : "false");
  }
  if (!any) throw std::runtime_error("arith: geometry is invalid both ways");
  return 0;
}

int run_analyze(const std::string& mode, std::int64_t k, std::int64_t s,
                std::int64_t size, std::int64_t trials, std::uint64_t seed,
                std::int64_t channels, const std::string& out_csv) {
  ucf::KvMap block;
  block["analyze.mode"] = mode;
  block["analyze.k"] = std::to_string(k);
  block["analyze.s"] = std::to_string(s);
  block["analyze.size"] = std::to_string(size);
  block["analyze.trials"] = std::to_string(trials);
  block["analyze.seed"] = std::to_string(seed);
  block["analyze.channels"] = std::to_string(channels);
  block["analyze.out"] = out_csv;
  print_block(block);

  ucf::UpsampleSpec spec;
  spec.mode = ucf::parse_upsample_mode(mode);
  spec.kernel = k;
  spec.stride = s;
  spec.in_channels = channels;
  spec.out_channels = channels;
  spec.validate();

  const std::vector<ucf::SweepRow> rows =
      ucf::upsampler_sweep({spec}, size, trials, seed);
  if (!fs::path(out_csv).parent_path().empty())
    fs::create_directories(fs::path(out_csv).parent_path());
  ucf::write_sweep_csv(out_csv, rows);
  std::printf("mean_score=%s\n",
              fmt17(ucf::sweep_mean_score(rows, spec.mode)).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"saliency network toolkit: synthesis, training, inference, "
               "evaluation, upsampler analysis"};
  app.require_subcommand(1);
  int rc = 0;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::int64_t sy_count = 0, sy_side = 64;
  std::uint64_t sy_seed = 0;
  std::string sy_out;
  synth->add_option("--count", sy_count, "number of samples")->required();
  synth->add_option("--side", sy_side, "square image side");
  synth->add_option("--seed", sy_seed, "generator seed");
  synth->add_option("--out", sy_out, "output directory")->required();
  synth->callback([&] { rc = run_synth(sy_count, sy_side, sy_seed, sy_out); });

  CLI::App* train = app.add_subcommand("train", "train a network");
  std::string tr_config, tr_data, tr_out, tr_log, tr_variant = "ucf";
  std::uint64_t tr_seed = 0;
  std::int64_t tr_iters = 0;
  CLI::Option* tr_variant_opt =
      train->add_option("--variant", tr_variant, "ablation preset")
          ->check(CLI::IsMember({"ucf", "va", "vb", "vc", "vd", "ve"}));
  train->add_option("--config", tr_config, "key=value config file");
  train->add_option("--data", tr_data, "dataset directory")->required();
  train->add_option("--out", tr_out, "checkpoint path")->required();
  train->add_option("--log", tr_log, "loss log csv (default <out>.log.csv)");
  CLI::Option* tr_seed_opt = train->add_option("--seed", tr_seed, "train seed");
  CLI::Option* tr_iters_opt =
      train->add_option("--iters", tr_iters, "iteration count");
  train->callback([&] {
    const std::string log = tr_log.empty() ? tr_out + ".log.csv" : tr_log;
    rc = run_train(tr_config, tr_data, tr_out, log, tr_variant,
                   tr_variant_opt->count() > 0, tr_seed,
                   tr_seed_opt->count() > 0, tr_iters,
                   tr_iters_opt->count() > 0);
  });

  CLI::App* infer = app.add_subcommand("infer", "run saliency inference");
  std::string in_ckpt, in_image, in_out, in_scales = "1.0";
  infer->add_option("--ckpt", in_ckpt, "checkpoint path")->required();
  infer->add_option("--image", in_image, "input image (PPM)")->required();
  infer->add_option("--out", in_out, "output saliency map (PGM)")->required();
  infer->add_option("--scales", in_scales, "comma-separated scale list");
  infer->callback([&] { rc = run_infer(in_ckpt, in_image, in_out, in_scales); });

  CLI::App* eval = app.add_subcommand("eval", "score predictions against gt");
  std::string ev_pred, ev_gt, ev_out;
  double ev_beta2 = 0.3;
  eval->add_option("--pred", ev_pred, "prediction directory")->required();
  eval->add_option("--gt", ev_gt, "ground-truth directory")->required();
  eval->add_option("--out", ev_out, "report directory")->required();
  eval->add_option("--beta2", ev_beta2, "beta^2 for the F-measure");
  eval->callback([&] { rc = run_eval(ev_pred, ev_gt, ev_out, ev_beta2); });

  CLI::App* arith = app.add_subcommand("arith", "shape arithmetic report");
  std::int64_t ar_n = 0, ar_k = 0, ar_s = 1, ar_p = 0, ar_t = 0;
  arith->add_option("--n", ar_n, "input side")->required();
  arith->add_option("--k", ar_k, "kernel")->required();
  arith->add_option("--s", ar_s, "stride")->required();
  arith->add_option("--p", ar_p, "padding");
  arith->add_option("--t", ar_t, "output padding");
  arith->callback([&] { rc = run_arith(ar_n, ar_k, ar_s, ar_p, ar_t); });

  CLI::App* analyze = app.add_subcommand("analyze", "upsampler artifact sweep");
  std::string an_mode, an_out;
  std::int64_t an_k = 0, an_s = 0, an_size = 16, an_trials = 20, an_ch = 4;
  std::uint64_t an_seed = 0;
  analyze->add_option("--mode", an_mode, "upsampler mode")->required();
  analyze->add_option("--k", an_k, "kernel")->required();
  analyze->add_option("--s", an_s, "stride")->required();
  analyze->add_option("--size", an_size, "input side");
  analyze->add_option("--trials", an_trials, "trial count");
  analyze->add_option("--seed", an_seed, "sweep seed");
  analyze->add_option("--channels", an_ch, "channels per trial");
  analyze->add_option("--out", an_out, "sweep csv path")->required();
  analyze->callback([&] {
    rc = run_analyze(an_mode, an_k, an_s, an_size, an_trials, an_seed, an_ch,
                     an_out);
  });

  try {
    ucf::thread_budget();  // fail fast on a malformed UCF_THREADS
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ucf: error: %s\n", e.what());
    return 1;
  }
  return rc;
}
