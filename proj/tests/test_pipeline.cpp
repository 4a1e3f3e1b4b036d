#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "phigen/manifest.hpp"
#include "phigen/pipeline.hpp"
#include "phigen/protocols.hpp"

using namespace phigen;

namespace {

std::string temp_dir() {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("phigen_pl_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir.string();
}

// Shared fixture: a small dataset plus an untrained model stack. The velocity
// field is zero by construction, which makes generated latents equal to the
// integration noise — ideal for pairing and determinism checks.
struct Fixture {
  RunConfig cfg;
  std::string dir;
  Dataset ds;
  Models m;
};

const Fixture& fx() {
  static Fixture f = [] {
    Fixture x;
    x.cfg.set("dataset.count", 2LL);
    x.cfg.set("dataset.eval_count", 1LL);
    x.cfg.set("dataset.width", 48LL);
    x.cfg.set("dataset.height", 32LL);
    x.cfg.set("vae.base_channels", 16LL);
    x.cfg.set("adapter.channels", 16LL);
    x.cfg.set("flow.base_channels", 16LL);
    x.dir = temp_dir();
    write_dataset(x.dir, x.cfg, 55);
    x.ds = load_dataset(x.dir, 6);
    x.m.vae.init(8, 16, Rng(1));
    x.m.adapter.init(16, 16, 6, 32, Rng(2));
    x.m.flow.init(8, 16, 32, Rng(3));
    x.m.stats.mean.assign(8, 0.0f);
    x.m.stats.stdev.assign(8, 1.0f);
    return x;
  }();
  return f;
}

bool same_frames(const std::vector<std::vector<Tensor<float>>>& a,
                 const std::vector<std::vector<Tensor<float>>>& b) {
  if (a.size() != b.size()) return false;
  for (size_t v = 0; v < a.size(); ++v) {
    if (a[v].size() != b[v].size()) return false;
    for (size_t k = 0; k < a[v].size(); ++k)
      if (a[v][k].data != b[v][k].data) return false;
  }
  return true;
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("model stack restores bitwise from its three checkpoints") {
  const Fixture& f = fx();
  Models m = {};  // fresh copy to checkpoint
  m.vae.init(8, 16, Rng(21));
  m.adapter.init(16, 16, 6, 32, Rng(22));
  m.flow.init(8, 16, 32, Rng(23));
  Rng rng(24);
  for (auto& v : m.flow.out_conv.w.data) v = float(rng.uniform(-0.1, 0.1));
  m.stats.mean.assign(8, 0.25f);
  m.stats.stdev.assign(8, 2.0f);

  const std::string dir = temp_dir();
  write_checkpoint(dir + "/vae.ckpt", vae_checkpoint(m.vae));
  write_checkpoint(dir + "/adapter.ckpt", adapter_checkpoint(m.adapter));
  write_checkpoint(dir + "/flow.ckpt", flow_checkpoint(m.flow, m.stats));

  Models r = load_models(f.cfg, dir + "/vae.ckpt", dir + "/adapter.ckpt", dir + "/flow.ckpt");
  CHECK(r.stats.mean == m.stats.mean);
  CHECK(r.stats.stdev == m.stats.stdev);
  std::vector<NamedParam<float>> pa, pb;
  m.vae.collect(pa);
  m.adapter.collect(pa);
  m.flow.collect(pa);
  r.vae.collect(pb);
  r.adapter.collect(pb);
  r.flow.collect(pb);
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].t->data == pb[i].t->data);

  CHECK_THROWS_AS(load_models(f.cfg, dir + "/nope.ckpt", dir + "/adapter.ckpt", dir + "/flow.ckpt"),
                  IoError);
}

TEST_CASE("history reconstruction lifts every observed pixel once") {
  const Fixture& f = fx();
  const GaussianScene s = reconstruct_history(f.m, f.ds, 0, 1, f.cfg);
  const int V = int(f.ds.rig.views.size());
  CHECK(V == 3);
  CHECK(int(s.gaussians.size()) == 48 * 32 * V);
  CHECK(s.time_index == 1);
  CHECK_THROWS_AS(reconstruct_history(f.m, f.ds, 0, 0, f.cfg), ConfigError);
}

TEST_CASE("future generation emits one chunk of frames, renders, and scenes") {
  const Fixture& f = fx();
  const GaussianScene hist = reconstruct_history(f.m, f.ds, 0, 1, f.cfg);
  SfParams sf;
  sf.mode = SfMode::locpot;
  Rng rng(42);
  const FutureResult r = generate_future(f.m, f.ds, 0, hist, 2, sf, f.cfg, rng, {0, 1});
  CHECK(r.frame_ids == std::vector<int>{2, 3, 4, 5});
  const int V = int(f.ds.rig.views.size());
  CHECK(int(r.frames.size()) == V);
  CHECK(int(r.ren_frames.size()) == V);
  for (int v = 0; v < V; ++v) {
    CHECK(r.frames[size_t(v)].size() == 4);
    CHECK(r.frames[size_t(v)][0].shape == std::vector<int>{3, 32, 48});
    CHECK(r.ren_frames[size_t(v)].size() == 4);
  }
  CHECK(r.scenes.size() == 4);
  for (int k = 0; k < 4; ++k) {
    CHECK(r.scenes[size_t(k)].time_index == 2 + k);
    CHECK(int(r.scenes[size_t(k)].gaussians.size()) == 48 * 32 * V);
  }

  Rng rng2(42);
  const FutureResult r2 = generate_future(f.m, f.ds, 0, hist, 2, sf, f.cfg, rng2, {0, 1});
  CHECK(same_frames(r.frames, r2.frames));

  Rng rng3(43);
  const FutureResult r3 = generate_future(f.m, f.ds, 0, hist, 2, sf, f.cfg, rng3, {0, 1});
  CHECK(!same_frames(r.frames, r3.frames));
}

TEST_CASE("integration noise is paired across forcing modes") {
  const Fixture& f = fx();
  const GaussianScene hist = reconstruct_history(f.m, f.ds, 0, 1, f.cfg);
  // With a zero velocity field the sampled latent equals the integration
  // noise, so if the reliability draws shared the noise stream the modes
  // would decode different frames.
  std::vector<std::vector<std::vector<Tensor<float>>>> all;
  for (SfMode mode : {SfMode::off, SfMode::random, SfMode::entropy, SfMode::locpot}) {
    SfParams sf;
    sf.mode = mode;
    Rng rng(7);
    all.push_back(generate_future(f.m, f.ds, 0, hist, 2, sf, f.cfg, rng, {0, 1}).frames);
  }
  for (size_t i = 1; i < all.size(); ++i) CHECK(same_frames(all[0], all[i]));
}

TEST_CASE("rollout walks the whole episode in chunks") {
  const Fixture& f = fx();
  SfParams sf;
  const RolloutResult r = rollout(f.m, f.ds, 0, sf, f.cfg, 11);
  std::vector<int> want_ids;
  for (int t = 2; t < 18; ++t) want_ids.push_back(t);
  CHECK(r.frame_ids == want_ids);
  CHECK(r.scenes.size() == 16);
  REQUIRE(r.chunks.size() == 4);
  CHECK(r.chunks[0].start == 2);
  CHECK(r.chunks[1].start == 6);
  CHECK(r.chunks[2].start == 10);
  CHECK(r.chunks[3].start == 14);
  CHECK(r.boundary_psnr.size() == 4);
  for (const auto& c : r.chunks) {
    CHECK(std::isfinite(c.psnr));
    CHECK(std::isfinite(c.d_rmse));
    CHECK(c.psnr > 0.0);
    CHECK(c.d_rmse >= 0.0);
  }
  for (double b : r.boundary_psnr) CHECK(std::isfinite(b));
  for (size_t v = 0; v < r.frames.size(); ++v) CHECK(r.frames[v].size() == 16);

  const RolloutResult r2 = rollout(f.m, f.ds, 0, sf, f.cfg, 11);
  CHECK(same_frames(r.frames, r2.frames));
  for (size_t i = 0; i < r.chunks.size(); ++i) {
    CHECK(r.chunks[i].psnr == r2.chunks[i].psnr);
    CHECK(r.chunks[i].d_rmse == r2.chunks[i].d_rmse);
  }
}

TEST_CASE("lateral-shift evaluation scores six shifts per held-out episode") {
  const Fixture& f = fx();
  const NvsShiftResult r = eval_nvs_shift(f.m, f.ds, f.cfg);
  REQUIRE(r.rows.size() == 6);  // one eval episode, +-1/2/4 m
  for (const auto& row : r.rows) {
    CHECK(row.episode == 2);
    CHECK(std::isfinite(row.psnr));
    CHECK(row.psnr > 0.0);
  }
  REQUIRE(r.mean_by_magnitude.size() == 3);
  for (double mag : {1.0, 2.0, 4.0}) {
    double acc = 0;
    int n = 0;
    for (const auto& row : r.rows)
      if (std::abs(std::abs(row.shift) - mag) < 1e-12) {
        acc += row.psnr;
        ++n;
      }
    CHECK(n == 2);
    CHECK(r.mean_by_magnitude.at(mag) == doctest::Approx(acc / 2.0));
  }
}

TEST_CASE("fixed-horizon evaluation reports both lookaheads per episode") {
  const Fixture& f = fx();
  SfParams sf;
  const CrossTemporalResult r = eval_cross_temporal(f.m, f.ds, sf, f.cfg, 13);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].episode == 2);
  CHECK(std::isfinite(r.rows[0].psnr_t5));
  CHECK(std::isfinite(r.rows[0].psnr_t10));
  CHECK(r.mean_t5 == doctest::Approx(r.rows[0].psnr_t5));
  CHECK(r.mean_t10 == doctest::Approx(r.rows[0].psnr_t10));
}

TEST_CASE("forcing ablation pairs every mode over shared seeds") {
  const Fixture& f = fx();
  const AblateResult r = ablate_sf(f.m, f.ds, f.cfg, 1, 3);
  REQUIRE(r.rows.size() == 16);  // 4 modes x 1 seed x 4 chunks
  const std::vector<std::string> modes = {"off", "random", "entropy", "locpot"};
  for (int mi = 0; mi < 4; ++mi)
    for (int c = 0; c < 4; ++c) {
      const AblateRow& row = r.rows[size_t(mi * 4 + c)];
      CHECK(row.mode == modes[size_t(mi)]);
      CHECK(row.seed == 3);
      CHECK(row.episode == 2);
      CHECK(row.chunk_start == 2 + 4 * c);
    }
  // Zero velocity field: modes decode identical frames, so the paired seeds
  // tie exactly and no strict win is possible.
  for (const auto& mode : modes) {
    CHECK(r.mean_psnr.at(mode) == r.mean_psnr.at("off"));
    CHECK(r.mean_d_rmse.at(mode) == r.mean_d_rmse.at("off"));
  }
  CHECK(r.win_rate_locpot_vs_off == 0.0);

  const std::string csv = ablate_csv(r);
  const std::vector<std::string> lines = split_lines(csv);
  REQUIRE(lines.size() == 17);
  CHECK(lines[0] == "mode,seed,episode,chunk_start,psnr,d_rmse");
  CHECK(lines[1].rfind("off,3,2,2,", 0) == 0);

  const nlohmann::json j = nlohmann::json::parse(ablate_json(r));
  CHECK(j.at("rows").size() == 16);
  CHECK(j.at("summary").contains("win_rate_locpot_vs_off"));
  CHECK(j.at("rows")[0].at("mode") == "off");
  CHECK(double(j.at("summary").at("win_rate_locpot_vs_off")) == 0.0);
}
