#include "phigen/dataset.hpp"

#include <cstdio>
#include <filesystem>

#include "phigen/error.hpp"
#include "phigen/manifest.hpp"
#include "phigen/scene_io.hpp"

namespace phigen {
namespace {

nlohmann::json pose_to_json(const CameraPose& p) {
  nlohmann::json j;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) j["R"].push_back(p.R(r, c));
  for (int r = 0; r < 3; ++r) j["T"].push_back(p.T[r]);
  return j;
}

CameraPose pose_from_json(const nlohmann::json& j) {
  CameraPose p;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.R(r, c) = j.at("R").at(r * 3 + c).get<float>();
  for (int r = 0; r < 3; ++r) p.T[r] = j.at("T").at(r).get<float>();
  return p;
}

std::string ep_dir_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "ep%03d", index);
  return buf;
}

}  // namespace

std::string frame_name(const char* kind, int t, int view, const char* ext) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s_t%02d_v%d.%s", kind, t, view, ext);
  return buf;
}

SynthParams synth_params_from(const RunConfig& cfg) {
  SynthParams p;
  p.width = int(cfg.get_int("dataset.width"));
  p.height = int(cfg.get_int("dataset.height"));
  p.frames = int(cfg.get_int("dataset.frames"));
  p.classes = int(cfg.get_int("dataset.classes"));
  p.max_vehicles = int(cfg.get_int("dataset.max_vehicles"));
  p.max_buildings = int(cfg.get_int("dataset.max_buildings"));
  p.speed_min = cfg.get_double("dataset.speed_min");
  p.speed_max = cfg.get_double("dataset.speed_max");
  return p;
}

std::vector<std::string> write_dataset(const std::string& dir, const RunConfig& cfg,
                                       uint64_t seed) {
  const SynthParams params = synth_params_from(cfg);
  const int train_count = int(cfg.get_int("dataset.count"));
  const int eval_count = int(cfg.get_int("dataset.eval_count"));
  const CameraRig rig = make_rig(params.width, params.height);
  validate(rig);

  RenderConfig rcfg;
  rcfg.background = background_color();
  rcfg.threads = int(cfg.get_int("render.threads"));

  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["width"] = params.width;
  index["height"] = params.height;
  index["frames"] = params.frames;
  index["classes"] = params.classes;
  index["train_count"] = train_count;
  index["eval_count"] = eval_count;
  index["seed"] = seed;
  index["rig"] = nlohmann::json::array();
  for (const auto& v : rig.views) {
    nlohmann::json jv;
    jv["view_id"] = v.view_id;
    jv["azimuth"] = v.azimuth;
    jv["fx"] = v.intrinsics.fx;
    jv["fy"] = v.intrinsics.fy;
    jv["cx"] = v.intrinsics.cx;
    jv["cy"] = v.intrinsics.cy;
    jv["pose"] = pose_to_json(v.pose);
    index["rig"].push_back(jv);
  }

  std::vector<std::string> written;
  index["episodes"] = nlohmann::json::array();
  for (int i = 0; i < train_count + eval_count; ++i) {
    const EpisodeSpec ep = make_episode(seed, i, params);
    validate(ep.scene);
    const std::string rel = ep_dir_name(i);
    const std::string ep_path = dir + "/" + rel;
    std::filesystem::create_directories(ep_path);

    nlohmann::json je;
    je["dir"] = rel;
    je["seed"] = ep.seed;
    je["speed"] = ep.speed;
    je["time_ids"] = ep.trajectory.time_ids;
    je["poses"] = nlohmann::json::array();
    for (const auto& p : ep.trajectory.poses) je["poses"].push_back(pose_to_json(p));

    nlohmann::json files;
    auto record = [&](const std::string& name) {
      files[name] = hash_hex(fnv1a64_file(ep_path + "/" + name));
      written.push_back(rel + "/" + name);
    };

    write_scene(ep_path + "/scene.pgsc", ep.scene);
    record("scene.pgsc");

    const auto outputs = render_trajectory(ep.scene, rig, ep.trajectory, rcfg);
    const int n_views = int(rig.views.size());
    for (int t = 0; t < params.frames; ++t)
      for (int v = 0; v < n_views; ++v) {
        const RenderOutput& out = outputs[size_t(t) * n_views + v];
        ImageF rgb = make_image(out.width, out.height, 3);
        rgb.data = out.rgb;
        const std::string rgb_name = frame_name("rgb", t, v, "ppm");
        write_ppm(ep_path + "/" + rgb_name, rgb);
        record(rgb_name);

        const std::string depth_name = frame_name("depth", t, v, "pfm");
        write_pfm(ep_path + "/" + depth_name, out.depth, out.width, out.height);
        record(depth_name);

        std::vector<uint8_t> sem(out.depth.size());
        std::vector<uint8_t> alpha(out.depth.size());
        for (size_t px = 0; px < sem.size(); ++px) {
          alpha[px] = quantize8(out.alpha[px]);
          if (out.alpha[px] < 0.5f) {
            sem[px] = uint8_t(seg::kSky);
          } else {
            int best = 0;
            float bv = out.sem[px * out.num_classes];
            for (int c = 1; c < out.num_classes; ++c)
              if (out.sem[px * out.num_classes + c] > bv) {
                bv = out.sem[px * out.num_classes + c];
                best = c;
              }
            sem[px] = uint8_t(best);
          }
        }
        const std::string sem_name = frame_name("sem", t, v, "pgm");
        write_pgm(ep_path + "/" + sem_name, sem, out.width, out.height);
        record(sem_name);
        const std::string alpha_name = frame_name("alpha", t, v, "pgm");
        write_pgm(ep_path + "/" + alpha_name, alpha, out.width, out.height);
        record(alpha_name);
      }
    je["files"] = files;
    index["episodes"].push_back(je);
  }

  write_json(dir + "/index.json", index);
  written.insert(written.begin(), "index.json");
  return written;
}

Dataset load_dataset(const std::string& dir, int expected_classes) {
  Dataset ds;
  ds.root = dir;
  const nlohmann::json index = read_json(dir + "/index.json");
  try {
    ds.params.width = index.at("width").get<int>();
    ds.params.height = index.at("height").get<int>();
    ds.params.frames = index.at("frames").get<int>();
    ds.params.classes = index.at("classes").get<int>();
    ds.train_count = index.at("train_count").get<int>();
    ds.eval_count = index.at("eval_count").get<int>();
    for (const auto& jv : index.at("rig")) {
      RigView v;
      v.view_id = jv.at("view_id").get<int>();
      v.azimuth = jv.at("azimuth").get<float>();
      v.intrinsics.fx = jv.at("fx").get<float>();
      v.intrinsics.fy = jv.at("fy").get<float>();
      v.intrinsics.cx = jv.at("cx").get<float>();
      v.intrinsics.cy = jv.at("cy").get<float>();
      v.intrinsics.width = ds.params.width;
      v.intrinsics.height = ds.params.height;
      v.pose = pose_from_json(jv.at("pose"));
      ds.rig.views.push_back(v);
    }
    for (const auto& je : index.at("episodes")) {
      Episode ep;
      ep.dir = je.at("dir").get<std::string>();
      ep.seed = je.at("seed").get<uint64_t>();
      ep.speed = je.at("speed").get<double>();
      ep.trajectory.time_ids = je.at("time_ids").get<std::vector<int>>();
      for (const auto& jp : je.at("poses")) ep.trajectory.poses.push_back(pose_from_json(jp));
      for (const auto& [name, hash] : je.at("files").items()) {
        const std::string path = dir + "/" + ep.dir + "/" + name;
        if (!std::filesystem::exists(path))
          throw IoError("dataset episode " + ep.dir + ": missing file " + name);
        if (hash_hex(fnv1a64_file(path)) != hash.get<std::string>())
          throw IoError("dataset episode " + ep.dir + ": content hash mismatch for " + name);
      }
      ep.scene = read_scene(dir + "/" + ep.dir + "/scene.pgsc");
      if (!ep.scene.gaussians.empty() &&
          int(ep.scene.gaussians.front().sem_logits.size()) != expected_classes)
        throw ConfigError("dataset episode " + ep.dir + ": semantic channel count " +
                          std::to_string(ep.scene.gaussians.front().sem_logits.size()) +
                          " does not match configured " + std::to_string(expected_classes));
      ds.episodes.push_back(std::move(ep));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("dataset index " + dir + "/index.json: " + ex.what());
  }
  if (int(ds.episodes.size()) != ds.train_count + ds.eval_count)
    throw IoError("dataset index " + dir + ": episode count mismatch");
  validate(ds.rig);
  return ds;
}

FrameGt load_frame(const Dataset& ds, int episode, int t, int view) {
  const std::string base = ds.root + "/" + ds.episodes.at(size_t(episode)).dir + "/";
  FrameGt gt;
  gt.rgb = read_ppm(base + frame_name("rgb", t, view, "ppm"));
  int w = 0, h = 0;
  gt.depth = read_pfm(base + frame_name("depth", t, view, "pfm"), w, h);
  gt.sem = read_pgm(base + frame_name("sem", t, view, "pgm"), w, h);
  gt.alpha = read_pgm(base + frame_name("alpha", t, view, "pgm"), w, h);
  return gt;
}

std::vector<uint8_t> valid_depth_mask(const FrameGt& gt, double near, double far) {
  std::vector<uint8_t> mask(gt.depth.size());
  for (size_t i = 0; i < mask.size(); ++i)
    mask[i] = (gt.alpha[i] > 127 && gt.depth[i] > float(near) && gt.depth[i] < float(far)) ? 1 : 0;
  return mask;
}

Tensor<float> rgb_tensor(const ImageF& img, int out_w, int out_h) {
  const int w = out_w > 0 ? out_w : img.width;
  const int h = out_h > 0 ? out_h : img.height;
  const std::vector<float>* src = &img.data;
  std::vector<float> resized;
  if (w != img.width || h != img.height) {
    resized = area_resample(img.data, img.width, img.height, img.channels, w, h);
    src = &resized;
  }
  Tensor<float> out({img.channels, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(c, y, x) = (*src)[(size_t(y) * w + x) * img.channels + c];
  return out;
}

}  // namespace phigen
