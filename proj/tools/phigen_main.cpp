#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "phigen/dataset.hpp"
#include "phigen/gradcheck.hpp"
#include "phigen/manifest.hpp"
#include "phigen/pipeline.hpp"
#include "phigen/protocols.hpp"

namespace fs = std::filesystem;
using namespace phigen;

namespace {

struct CommonOpts {
  std::string config_file;
  std::vector<std::string> sets;
  std::string out;
  uint64_t seed = 0;
  int threads = 0;  // 0 keeps the configured value
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_file, "JSON config file");
  cmd->add_option("--set", o.sets, "Override as section.key=value (repeatable)");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--seed", o.seed, "Run seed");
  cmd->add_option("--threads", o.threads, "Renderer worker threads");
}

RunConfig build_config(const CommonOpts& o) {
  RunConfig cfg;
  if (!o.config_file.empty()) cfg.load_file(o.config_file);
  for (const auto& s : o.sets) cfg.set(s);
  if (o.threads > 0) cfg.set("render.threads", static_cast<long long>(o.threads));
  return cfg;
}

std::string resolve_out(const RunConfig& cfg, const CommonOpts& o, const std::string& command) {
  std::string dir = o.out;
  if (dir.empty()) {
    std::string base = cfg.get_string("output.root");
    if (base.empty()) {
      const char* env = std::getenv("PHIGEN_OUT");
      base = env ? env : "out";
    }
    dir = base + "/" + command;
  }
  fs::create_directories(dir);
  return dir;
}

ManifestBuilder make_manifest(const std::string& command, const RunConfig& cfg, uint64_t seed) {
  return ManifestBuilder(command, nlohmann::json::parse(cfg.canonical_json()), cfg.hash(), seed);
}

ImageF tensor_to_image(const Tensor<float>& t) {
  ImageF img;
  img.channels = t.shape[0];
  img.height = t.shape[1];
  img.width = t.shape[2];
  img.data.resize(t.numel());
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) img.at(y, x, c) = t.at(c, y, x);
  return img;
}

void save_losses(const std::string& path, const std::vector<double>& losses) {
  nlohmann::json j;
  j["losses"] = losses;
  write_json(path, j);
}

VaeNet<float> load_vae(const RunConfig& cfg, const std::string& path) {
  VaeNet<float> net;
  net.init(int(cfg.get_int("vae.latent_channels")), int(cfg.get_int("vae.base_channels")), Rng(0));
  vae_restore(net, read_checkpoint(path));
  return net;
}

AdapterNet<float> load_adapter(const RunConfig& cfg, const std::string& path) {
  AdapterNet<float> net;
  net.init(int(cfg.get_int("adapter.channels")), int(cfg.get_int("vae.base_channels")),
           int(cfg.get_int("dataset.classes")), int(cfg.get_int("adapter.depth_bins")), Rng(0));
  adapter_restore(net, read_checkpoint(path));
  return net;
}

int run_synth(const CommonOpts& o) {
  RunConfig cfg = build_config(o);
  const std::string dir = resolve_out(cfg, o, "dataset");
  ManifestBuilder mb = make_manifest("synth", cfg, o.seed);
  const std::vector<std::string> files = write_dataset(dir, cfg, o.seed);
  for (const auto& f : files) mb.add_artifact(dir, f);
  mb.write(dir);
  std::cout << "dataset: " << dir << " (" << files.size() << " files)\n";
  return 0;
}

int run_train_vae(const CommonOpts& o, const std::string& data) {
  RunConfig cfg = build_config(o);
  const Dataset ds = load_dataset(data, int(cfg.get_int("dataset.classes")));
  const std::string dir = resolve_out(cfg, o, "vae");
  ManifestBuilder mb = make_manifest("train-vae", cfg, o.seed);
  VaeTrainResult r = train_vae(ds, cfg, o.seed);
  write_checkpoint(dir + "/vae.ckpt", vae_checkpoint(r.net));
  save_losses(dir + "/losses.json", r.losses);
  mb.add_artifact(dir, "vae.ckpt");
  mb.add_artifact(dir, "losses.json");
  mb.add_metric("final_loss", r.losses.empty() ? 0.0 : r.losses.back());
  mb.write(dir);
  std::cout << "vae checkpoint: " << dir << "/vae.ckpt (final loss "
            << (r.losses.empty() ? 0.0 : r.losses.back()) << ")\n";
  return 0;
}

int run_train_adapter(const CommonOpts& o, const std::string& data, const std::string& vae_path) {
  RunConfig cfg = build_config(o);
  const Dataset ds = load_dataset(data, int(cfg.get_int("dataset.classes")));
  const VaeNet<float> vae = load_vae(cfg, vae_path);
  const std::string dir = resolve_out(cfg, o, "adapter");
  ManifestBuilder mb = make_manifest("train-adapter", cfg, o.seed);
  AdapterTrainResult r = train_adapter(ds, cfg, vae, o.seed);
  write_checkpoint(dir + "/adapter.ckpt", adapter_checkpoint(r.net));
  save_losses(dir + "/losses.json", r.losses);
  mb.add_artifact(dir, "adapter.ckpt");
  mb.add_artifact(dir, "losses.json");
  mb.add_metric("final_loss", r.losses.empty() ? 0.0 : r.losses.back());
  mb.write(dir);
  std::cout << "adapter checkpoint: " << dir << "/adapter.ckpt\n";
  return 0;
}

int run_train_flow(const CommonOpts& o, const std::string& data, const std::string& vae_path,
                   const std::string& adapter_path) {
  RunConfig cfg = build_config(o);
  const Dataset ds = load_dataset(data, int(cfg.get_int("dataset.classes")));
  const VaeNet<float> vae = load_vae(cfg, vae_path);
  const AdapterNet<float> adapter = load_adapter(cfg, adapter_path);
  const std::string dir = resolve_out(cfg, o, "flow");
  ManifestBuilder mb = make_manifest("train-flow", cfg, o.seed);
  FlowTrainResult r = train_flow(ds, cfg, vae, adapter, o.seed);
  write_checkpoint(dir + "/flow.ckpt", flow_checkpoint(r.net, r.stats));
  save_losses(dir + "/losses.json", r.losses);
  mb.add_artifact(dir, "flow.ckpt");
  mb.add_artifact(dir, "losses.json");
  mb.add_metric("final_loss", r.losses.empty() ? 0.0 : r.losses.back());
  mb.write(dir);
  std::cout << "flow checkpoint: " << dir << "/flow.ckpt\n";
  return 0;
}

int run_generate(const CommonOpts& o, const std::string& data, const std::string& vae_path,
                 const std::string& adapter_path, const std::string& flow_path, int episode,
                 bool full_rollout) {
  RunConfig cfg = build_config(o);
  const Dataset ds = load_dataset(data, int(cfg.get_int("dataset.classes")));
  const Models m = load_models(cfg, vae_path, adapter_path, flow_path);
  const SfParams sf = sf_params_from(cfg);
  const std::string command = full_rollout ? "rollout" : "generate";
  const std::string dir = resolve_out(cfg, o, command);
  ManifestBuilder mb = make_manifest(command, cfg, o.seed);

  if (full_rollout) {
    RolloutResult roll = rollout(m, ds, episode, sf, cfg, o.seed);
    for (size_t v = 0; v < roll.frames.size(); ++v)
      for (size_t k = 0; k < roll.frames[v].size(); ++k) {
        const std::string name = frame_name("gen", roll.frame_ids[k], int(v), "ppm");
        write_ppm(dir + "/" + name, tensor_to_image(roll.frames[v][k]));
        mb.add_artifact(dir, name);
      }
    nlohmann::json chunks = nlohmann::json::array();
    for (size_t c = 0; c < roll.chunks.size(); ++c)
      chunks.push_back({{"start", roll.chunks[c].start},
                        {"psnr", roll.chunks[c].psnr},
                        {"d_rmse", roll.chunks[c].d_rmse},
                        {"boundary_psnr", roll.boundary_psnr[c]}});
    write_json(dir + "/rollout.json", {{"episode", episode}, {"chunks", chunks}});
    mb.add_artifact(dir, "rollout.json");
    mb.write(dir);
    std::cout << "rollout: " << roll.frames[0].size() << " frames/view -> " << dir << "\n";
  } else {
    const int t_obs = int(cfg.get_int("dataset.t_obs"));
    std::vector<int> ctx;
    for (int t = 0; t < t_obs; ++t) ctx.push_back(t);
    GaussianScene scene = reconstruct_history(m, ds, episode, t_obs - 1, cfg);
    Rng root(o.seed);
    Rng chunk = root.split(rngstream::kSample).split(1);
    FutureResult fr = generate_future(m, ds, episode, scene, t_obs, sf, cfg, chunk, ctx);
    for (size_t v = 0; v < fr.frames.size(); ++v)
      for (size_t k = 0; k < fr.frames[v].size(); ++k) {
        const std::string name = frame_name("gen", fr.frame_ids[k], int(v), "ppm");
        write_ppm(dir + "/" + name, tensor_to_image(fr.frames[v][k]));
        mb.add_artifact(dir, name);
      }
    mb.write(dir);
    std::cout << "generated frames " << fr.frame_ids.front() << ".." << fr.frame_ids.back()
              << " -> " << dir << "\n";
  }
  return 0;
}

int run_render(const CommonOpts& o, const std::string& data, int episode, int t) {
  RunConfig cfg = build_config(o);
  const Dataset ds = load_dataset(data, int(cfg.get_int("dataset.classes")));
  if (episode < 0 || episode >= int(ds.episodes.size()))
    throw ConfigError("render: episode out of range");
  const Episode& ep = ds.episodes[size_t(episode)];
  if (t < 0 || t >= int(ep.trajectory.poses.size()))
    throw ConfigError("render: frame out of range");
  RenderConfig rcfg;
  rcfg.background = Eigen::Vector3f(float(cfg.get_double("render.bg_r")),
                                    float(cfg.get_double("render.bg_g")),
                                    float(cfg.get_double("render.bg_b")));
  rcfg.threads = int(cfg.get_int("render.threads"));
  const std::string dir = resolve_out(cfg, o, "render");
  ManifestBuilder mb = make_manifest("render", cfg, o.seed);
  const GaussianScene adv = advect(ep.scene, t - ep.scene.time_index);
  for (int v = 0; v < int(ds.rig.views.size()); ++v) {
    const RigView& view = ds.rig.views[size_t(v)];
    RenderOutput out =
        render(adv, view.intrinsics, compose(view.pose, ep.trajectory.poses[size_t(t)]), rcfg);
    ImageF img;
    img.width = out.width;
    img.height = out.height;
    img.channels = 3;
    img.data = out.rgb;
    const std::string rgb_name = frame_name("rgb", t, v, "ppm");
    const std::string depth_name = frame_name("depth", t, v, "pfm");
    write_ppm(dir + "/" + rgb_name, img);
    write_pfm(dir + "/" + depth_name, out.depth, out.width, out.height);
    mb.add_artifact(dir, rgb_name);
    mb.add_artifact(dir, depth_name);
  }
  mb.write(dir);
  std::cout << "rendered episode " << episode << " frame " << t << " -> " << dir << "\n";
  return 0;
}

int run_eval_nvs(const CommonOpts& o, const std::string& data, const std::string& vae_path,
                 const std::string& adapter_path, const std::string& flow_path) {
  RunConfig cfg = build_config(o);
  const Dataset ds = load_dataset(data, int(cfg.get_int("dataset.classes")));
  const Models m = load_models(cfg, vae_path, adapter_path, flow_path);
  const std::string dir = resolve_out(cfg, o, "eval-nvs");
  ManifestBuilder mb = make_manifest("evaluate-nvs", cfg, o.seed);
  NvsShiftResult res = eval_nvs_shift(m, ds, cfg);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : res.rows)
    rows.push_back({{"episode", r.episode}, {"shift", r.shift}, {"psnr", r.psnr}});
  nlohmann::json means;
  for (const auto& [mag, v] : res.mean_by_magnitude) {
    means[canonical_number(mag)] = v;
    mb.add_metric("psnr_shift_" + canonical_number(mag), v);
  }
  write_json(dir + "/nvs.json", {{"rows", rows}, {"mean_by_magnitude", means}});
  mb.add_artifact(dir, "nvs.json");
  mb.write(dir);
  for (const auto& [mag, v] : res.mean_by_magnitude)
    std::cout << "shift " << mag << " m: mean psnr " << v << "\n";
  return 0;
}

int run_eval_temporal(const CommonOpts& o, const std::string& data, const std::string& vae_path,
                      const std::string& adapter_path, const std::string& flow_path) {
  RunConfig cfg = build_config(o);
  const Dataset ds = load_dataset(data, int(cfg.get_int("dataset.classes")));
  const Models m = load_models(cfg, vae_path, adapter_path, flow_path);
  const SfParams sf = sf_params_from(cfg);
  const std::string dir = resolve_out(cfg, o, "eval-temporal");
  ManifestBuilder mb = make_manifest("evaluate-temporal", cfg, o.seed);
  CrossTemporalResult res = eval_cross_temporal(m, ds, sf, cfg, o.seed);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : res.rows)
    rows.push_back({{"episode", r.episode}, {"psnr_t5", r.psnr_t5}, {"psnr_t10", r.psnr_t10}});
  write_json(dir + "/temporal.json",
             {{"rows", rows}, {"mean_t5", res.mean_t5}, {"mean_t10", res.mean_t10}});
  mb.add_artifact(dir, "temporal.json");
  mb.add_metric("mean_t5", res.mean_t5);
  mb.add_metric("mean_t10", res.mean_t10);
  mb.write(dir);
  std::cout << "mean psnr: T+5 " << res.mean_t5 << " dB, T+10 " << res.mean_t10 << " dB\n";
  return 0;
}

int run_eval_ablate(const CommonOpts& o, const std::string& data, const std::string& vae_path,
                    const std::string& adapter_path, const std::string& flow_path, int nseeds) {
  RunConfig cfg = build_config(o);
  const Dataset ds = load_dataset(data, int(cfg.get_int("dataset.classes")));
  const Models m = load_models(cfg, vae_path, adapter_path, flow_path);
  const std::string dir = resolve_out(cfg, o, "eval-ablate-sf");
  ManifestBuilder mb = make_manifest("evaluate-ablate-sf", cfg, o.seed);
  AblateResult res = ablate_sf(m, ds, cfg, nseeds, o.seed);
  {
    std::ofstream f(dir + "/ablate_sf.csv", std::ios::binary);
    f << ablate_csv(res);
  }
  {
    std::ofstream f(dir + "/ablate_sf.json", std::ios::binary);
    f << ablate_json(res) << "\n";
  }
  mb.add_artifact(dir, "ablate_sf.csv");
  mb.add_artifact(dir, "ablate_sf.json");
  for (const auto& [mode, v] : res.mean_d_rmse) mb.add_metric("d_rmse_" + mode, v);
  mb.add_metric("win_rate_locpot_vs_off", res.win_rate_locpot_vs_off);
  mb.write(dir);
  for (const auto& [mode, v] : res.mean_d_rmse)
    std::cout << mode << ": mean depth rmse " << v << " m, mean psnr " << res.mean_psnr.at(mode)
              << " dB\n";
  std::cout << "locpot-vs-off win rate: " << res.win_rate_locpot_vs_off << "\n";
  return 0;
}

int run_gradcheck(const CommonOpts& o) {
  (void)build_config(o);
  Rng rng(o.seed == 0 ? 7 : o.seed);
  int failures = 0;
  const double tol = 1e-4;
  auto report = [&](const GradCheckEntry& e) {
    const bool ok = e.max_rel_err < tol;
    if (!ok) ++failures;
    std::cout << (ok ? "pass " : "FAIL ") << e.name << " max_rel_err " << e.max_rel_err << "\n";
  };

  {
    Conv2d<double> conv;
    conv.init(3, 2, 3, rng.split(1));
    Tensor<double> x({2, 6, 6});
    Rng xr = rng.split(2);
    for (auto& v : x.data) v = xr.uniform(-1, 1);
    x.set_requires_grad(true);
    auto loss = [&]() {
      const Tensor<double> y = conv.forward(x);
      double acc = 0;
      for (double v : y.data) acc += v * v;
      return 0.5 * acc;
    };
    const Tensor<double> y = conv.forward(x);
    conv.w.zero_grad();
    conv.b.zero_grad();
    x.zero_grad();
    Tensor<double> gy = y;
    Tensor<double> gx = conv.backward(x, gy);
    x.grad = gx.data;
    report(grad_check_tensor(loss, x, "conv.x"));
    report(grad_check_tensor(loss, conv.w, "conv.w"));
    report(grad_check_tensor(loss, conv.b, "conv.b"));
  }
  {
    GroupNorm<double> gn;
    gn.init(4, 2);
    Tensor<double> x({4, 5, 5});
    Rng xr = rng.split(3);
    for (auto& v : x.data) v = xr.uniform(-1, 1);
    x.set_requires_grad(true);
    auto loss = [&]() {
      const Tensor<double> y = gn.forward(x);
      double acc = 0;
      for (size_t i = 0; i < y.numel(); ++i) acc += y.data[i] * std::sin(double(i));
      return acc;
    };
    const Tensor<double> y = gn.forward(x);
    Tensor<double> gy = y;
    for (size_t i = 0; i < gy.numel(); ++i) gy.data[i] = std::sin(double(i));
    gn.gamma.zero_grad();
    gn.beta.zero_grad();
    x.zero_grad();
    Tensor<double> gx = gn.backward(x, gy);
    x.grad = gx.data;
    report(grad_check_tensor(loss, x, "groupnorm.x"));
    report(grad_check_tensor(loss, gn.gamma, "groupnorm.gamma"));
  }
  {
    DenoiserNet<double> net;
    net.init(2, 8, 8, rng.split(4));
    // Zero-initialized output stage would zero most gradients; perturb it.
    Rng pr = rng.split(5);
    for (auto& v : net.out_conv.w.data) v = pr.uniform(-0.1, 0.1);
    Tensor<double> z({2, 4, 6}), cond({2, 4, 6});
    Rng zr = rng.split(6);
    for (auto& v : z.data) v = zr.uniform(-1, 1);
    for (auto& v : cond.data) v = zr.uniform(-1, 1);
    const double t = 0.37;
    auto loss = [&]() {
      const Tensor<double> v = net.forward(z, cond, t);
      double acc = 0;
      for (double e : v.data) acc += e * e;
      return 0.5 * acc;
    };
    std::vector<NamedParam<double>> params;
    net.collect(params);
    zero_grads(params);
    DenoiserCache<double> cache;
    const Tensor<double> v = net.forward(z, cond, t, &cache);
    Tensor<double> gv = v;
    net.backward(cache, gv);
    report(grad_check_tensor(loss, net.in_conv.w, "denoiser.in.w"));
    report(grad_check_tensor(loss, net.mid.temb.w, "denoiser.mid.temb.w"));
    report(grad_check_tensor(loss, net.down.gn.gamma, "denoiser.down.gn.gamma"));
  }
  if (failures) {
    throw NumericError(std::to_string(failures) + " gradient checks failed");
  }
  std::cout << "all gradient checks passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forward scene generation: dataset synthesis, training, "
               "generation, evaluation"};
  app.require_subcommand(1);
  argv = app.ensure_utf8(argv);

  CommonOpts o;
  std::string data, vae_path, adapter_path, flow_path;
  int episode = 0, frame_t = 0, nseeds = 20;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_common(synth, o);

  CLI::App* train = app.add_subcommand("train", "Train one stage");
  train->require_subcommand(1);
  CLI::App* train_vae_cmd = train->add_subcommand("vae", "Stage-0 autoencoder");
  add_common(train_vae_cmd, o);
  train_vae_cmd->add_option("--data", data, "Dataset directory")->required();
  CLI::App* train_adapter_cmd = train->add_subcommand("adapter", "Stage-1 scene head");
  add_common(train_adapter_cmd, o);
  train_adapter_cmd->add_option("--data", data, "Dataset directory")->required();
  train_adapter_cmd->add_option("--vae", vae_path, "Autoencoder checkpoint")->required();
  CLI::App* train_flow_cmd = train->add_subcommand("flow", "Stage-2 velocity field");
  add_common(train_flow_cmd, o);
  train_flow_cmd->add_option("--data", data, "Dataset directory")->required();
  train_flow_cmd->add_option("--vae", vae_path, "Autoencoder checkpoint")->required();
  train_flow_cmd->add_option("--adapter", adapter_path, "Scene head checkpoint")->required();

  auto add_model_opts = [&](CLI::App* cmd) {
    add_common(cmd, o);
    cmd->add_option("--data", data, "Dataset directory")->required();
    cmd->add_option("--vae", vae_path, "Autoencoder checkpoint")->required();
    cmd->add_option("--adapter", adapter_path, "Scene head checkpoint")->required();
    cmd->add_option("--flow", flow_path, "Velocity field checkpoint")->required();
  };

  CLI::App* generate = app.add_subcommand("generate", "Generate one future chunk");
  add_model_opts(generate);
  generate->add_option("--episode", episode, "Episode index");
  CLI::App* roll = app.add_subcommand("rollout", "Generate the full future autoregressively");
  add_model_opts(roll);
  roll->add_option("--episode", episode, "Episode index");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Run an evaluation protocol");
  evaluate->require_subcommand(1);
  CLI::App* nvs = evaluate->add_subcommand("nvs", "Lateral novel-view synthesis quality");
  add_model_opts(nvs);
  CLI::App* temporal = evaluate->add_subcommand("temporal", "Fixed-horizon generation quality");
  add_model_opts(temporal);
  CLI::App* ablate = evaluate->add_subcommand("ablate-sf", "Forcing-mode ablation");
  add_model_opts(ablate);
  ablate->add_option("--seeds", nseeds, "Paired seeds per mode");

  CLI::App* rendercmd = app.add_subcommand("render", "Render a dataset episode's world scene");
  add_common(rendercmd, o);
  rendercmd->add_option("--data", data, "Dataset directory")->required();
  rendercmd->add_option("--episode", episode, "Episode index");
  rendercmd->add_option("--t", frame_t, "Frame index");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient audit");
  add_common(gradcheck, o);

  CLI11_PARSE(app, argc, argv);

  auto fail = [](const char* type, const std::string& msg, long long offset) {
    nlohmann::json j = {{"error", {{"type", type}, {"message", msg}}}};
    if (offset >= 0) j["error"]["offset"] = offset;
    std::cout << canonical_dump(j) << "\n";
    std::cerr << "error: " << msg << "\n";
  };

  try {
    if (synth->parsed()) return run_synth(o);
    if (train_vae_cmd->parsed()) return run_train_vae(o, data);
    if (train_adapter_cmd->parsed()) return run_train_adapter(o, data, vae_path);
    if (train_flow_cmd->parsed()) return run_train_flow(o, data, vae_path, adapter_path);
    if (generate->parsed())
      return run_generate(o, data, vae_path, adapter_path, flow_path, episode, false);
    if (roll->parsed())
      return run_generate(o, data, vae_path, adapter_path, flow_path, episode, true);
    if (nvs->parsed()) return run_eval_nvs(o, data, vae_path, adapter_path, flow_path);
    if (temporal->parsed()) return run_eval_temporal(o, data, vae_path, adapter_path, flow_path);
    if (ablate->parsed())
      return run_eval_ablate(o, data, vae_path, adapter_path, flow_path, nseeds);
    if (rendercmd->parsed()) return run_render(o, data, episode, frame_t);
    if (gradcheck->parsed()) return run_gradcheck(o);
  } catch (const IoError& e) {
    fail("io", e.what(), e.offset());
    return 2;
  } catch (const ConfigError& e) {
    fail("config", e.what(), -1);
    return 2;
  } catch (const NumericError& e) {
    fail("numeric", e.what(), -1);
    return 3;
  }
  return 0;
}
