#include "grfp/flowdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "grfp/tensor_io.hpp"

namespace fs = std::filesystem;

namespace grfp {

namespace {

std::array<float, 3> class_color(int class_id) {
  // Distinct, moderately separated base colors; background is class 0.
  static const std::array<std::array<float, 3>, 8> palette = {{{0.45f, 0.45f, 0.45f},
                                                               {0.85f, 0.30f, 0.25f},
                                                               {0.25f, 0.70f, 0.30f},
                                                               {0.25f, 0.35f, 0.85f},
                                                               {0.85f, 0.75f, 0.25f},
                                                               {0.70f, 0.30f, 0.75f},
                                                               {0.25f, 0.75f, 0.75f},
                                                               {0.90f, 0.55f, 0.25f}}};
  return palette[class_id % palette.size()];
}

// Smooth background texture: a coarse random grid upsampled bilinearly.
Tensor<float> make_background(int h, int w, std::uint64_t texture_seed) {
  const int gh = 9, gw = 9;
  std::mt19937_64 rng(texture_seed * 0x9E3779B97F4A7C15ull + 1);
  std::uniform_real_distribution<float> u(-0.10f, 0.10f);
  std::vector<std::array<float, 3>> grid(gh * gw);
  const auto base = class_color(0);
  for (auto& g : grid)
    for (int c = 0; c < 3; ++c) g[c] = base[c] + u(rng);
  Tensor<float> bg({h, w, 3});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const float gy = static_cast<float>(i) / (h - 1) * (gh - 1);
      const float gx = static_cast<float>(j) / (w - 1) * (gw - 1);
      const int y0 = std::min(gh - 2, static_cast<int>(gy)), x0 = std::min(gw - 2, static_cast<int>(gx));
      const float fy = gy - y0, fx = gx - x0;
      for (int c = 0; c < 3; ++c) {
        const float v = (1 - fy) * ((1 - fx) * grid[y0 * gw + x0][c] + fx * grid[y0 * gw + x0 + 1][c]) +
                        fy * ((1 - fx) * grid[(y0 + 1) * gw + x0][c] + fx * grid[(y0 + 1) * gw + x0 + 1][c]);
        bg.at(i, j, c) = v;
      }
    }
  return bg;
}

// Coverage of pixel (i, j) by the object at `frame`, 4x4 supersampled.
float coverage(const SceneObject& obj, int i, int j, int frame) {
  int hit = 0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      if (object_contains(obj, i + (a + 0.5f) / 4 - 0.5f, j + (b + 0.5f) / 4 - 0.5f, frame)) ++hit;
  return hit / 16.0f;
}

void validate_spec(const SceneSpec& spec) {
  require(spec.height > 0 && spec.width > 0 && spec.n_frames >= 1, "generate_clip: invalid canvas or frame count");
  require(spec.n_classes >= 2, "generate_clip: need at least background plus one class");
  std::set<int> zs;
  const float vmax = 0.25f * std::min(spec.height, spec.width);
  for (const auto& o : spec.objects) {
    require(o.class_id >= 1 && o.class_id < spec.n_classes,
            "generate_clip: object class " + std::to_string(o.class_id) + " out of range");
    require(std::abs(o.vx) <= vmax && std::abs(o.vy) <= vmax, "generate_clip: object velocity exceeds displacement bound");
    require(zs.insert(o.z).second, "generate_clip: duplicate z-order " + std::to_string(o.z));
  }
}

// Flow field from frame `target` to frame `target + dir` (dir = -1 for the
// warping flows, +1 for the reverse direction), plus its occlusion mask.
void analytic_flow(const SceneSpec& spec, int target, int dir, Tensor<float>& flow, Tensor<float>& occl) {
  const int h = spec.height, w = spec.width;
  flow = Tensor<float>({h, w, 2});
  occl = Tensor<float>({h, w});
  const int source = target + dir;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const int o = top_object_at(spec, static_cast<float>(i), static_cast<float>(j), target);
      float fx = 0, fy = 0;
      if (o >= 0) {
        fx = dir * spec.objects[o].vx;
        fy = dir * spec.objects[o].vy;
      }
      const float sy = i + fy, sx = j + fx;
      const bool inside = sy >= 0 && sy <= h - 1 && sx >= 0 && sx <= w - 1;
      const bool same_surface = inside && top_object_at(spec, sy, sx, source) == o;
      if (same_surface) {
        flow.at(i, j, 0) = fx;
        flow.at(i, j, 1) = fy;
      } else {
        occl.at(i, j) = 1.0f;  // no valid correspondence; background flow
      }
    }
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open for write: " + path);
  out << content;
}

std::map<std::string, std::string> read_kv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

bool object_contains(const SceneObject& obj, float y, float x, int frame) {
  const float cx = obj.x0 + obj.vx * frame;
  const float cy = obj.y0 + obj.vy * frame;
  if (obj.shape == SceneObject::Shape::Disk) {
    const float dx = x - cx, dy = y - cy;
    return dx * dx + dy * dy <= obj.size * obj.size;
  }
  return std::abs(x - cx) <= obj.size && std::abs(y - cy) <= obj.size;
}

int top_object_at(const SceneSpec& spec, float y, float x, int frame) {
  int best = -1, best_z = 0;
  for (std::size_t k = 0; k < spec.objects.size(); ++k) {
    if (!object_contains(spec.objects[k], y, x, frame)) continue;
    if (best < 0 || spec.objects[k].z > best_z) {
      best = static_cast<int>(k);
      best_z = spec.objects[k].z;
    }
  }
  return best;
}

SceneSpec random_scene(const SceneTemplate& tmpl, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SceneSpec spec;
  spec.height = tmpl.height;
  spec.width = tmpl.width;
  spec.n_classes = tmpl.n_classes;
  spec.n_frames = tmpl.n_frames;
  spec.post_frames = tmpl.post_frames;
  spec.image_noise_sigma = tmpl.image_noise_sigma;
  spec.illum_jitter = tmpl.illum_jitter;
  spec.texture_seed = rng();
  std::uniform_int_distribution<int> count(tmpl.min_objects, tmpl.max_objects);
  std::uniform_real_distribution<float> size(tmpl.min_size, tmpl.max_size);
  std::uniform_real_distribution<float> speed(-tmpl.max_speed, tmpl.max_speed);
  std::uniform_real_distribution<float> posx(0.15f * tmpl.width, 0.85f * tmpl.width);
  std::uniform_real_distribution<float> posy(0.15f * tmpl.height, 0.85f * tmpl.height);
  std::uniform_int_distribution<int> cls(1, tmpl.n_classes - 1);
  std::uniform_int_distribution<int> shape(0, 1);
  const int n = count(rng);
  // Keep centers near the canvas middle at the labeled frame so objects stay
  // visible along the whole clip.
  for (int k = 0; k < n; ++k) {
    SceneObject o;
    o.shape = shape(rng) ? SceneObject::Shape::Disk : SceneObject::Shape::Rect;
    o.class_id = cls(rng);
    o.size = size(rng);
    o.vx = speed(rng);
    o.vy = speed(rng);
    const float mid = 0.5f * (spec.total_frames() - 1);
    o.x0 = posx(rng) - o.vx * mid;
    o.y0 = posy(rng) - o.vy * mid;
    o.z = k;
    spec.objects.push_back(o);
  }
  return spec;
}

VideoSample generate_clip(const SceneSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  const int h = spec.height, w = spec.width, n = spec.total_frames();
  VideoSample out;
  out.n_classes = spec.n_classes;
  out.label_index = spec.label_index();
  const Tensor<float> bg = make_background(h, w, spec.texture_seed);

  std::vector<const SceneObject*> by_z;
  for (const auto& o : spec.objects) by_z.push_back(&o);
  std::sort(by_z.begin(), by_z.end(), [](const SceneObject* a, const SceneObject* b) { return a->z < b->z; });

  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 1.0f);
  std::uniform_real_distribution<float> illum(-spec.illum_jitter, spec.illum_jitter);

  for (int t = 0; t < n; ++t) {
    Tensor<float> frame = bg;
    for (const SceneObject* o : by_z) {
      const auto col = class_color(o->class_id);
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const float a = coverage(*o, i, j, t);
          if (a <= 0) continue;
          for (int c = 0; c < 3; ++c) frame.at(i, j, c) = (1 - a) * frame.at(i, j, c) + a * col[c];
        }
    }
    const float gain = 1.0f + illum(rng);
    for (float& v : frame.data) {
      v = gain * v + spec.image_noise_sigma * noise(rng);
      v = std::min(1.0f, std::max(0.0f, v));
    }
    out.frames.push_back(std::move(frame));
  }

  for (int k = 0; k + 1 < n; ++k) {
    Tensor<float> f, o, rf, ro;
    analytic_flow(spec, k + 1, -1, f, o);
    analytic_flow(spec, k, +1, rf, ro);
    out.flows.push_back(std::move(f));
    out.occl.push_back(std::move(o));
    out.rflows.push_back(std::move(rf));
    out.roccl.push_back(std::move(ro));
  }

  out.labels = LabelMap(h, w, 0);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const int o = top_object_at(spec, static_cast<float>(i), static_cast<float>(j), out.label_index);
      out.labels.at(i, j) = o >= 0 ? spec.objects[o].class_id : 0;
    }
  return out;
}

void save_flow_file(const Tensor<float>& flow, const std::string& path) {
  require(flow.rank() == 3 && flow.shape[2] == 2, "save_flow_file: flow must be H x W x 2, got " + shape_to_string(flow.shape));
  save_tensor(flow, path);
}

Tensor<float> load_flow_file(const std::string& path) {
  Tensor<float> t = load_tensor(path);
  if (t.rank() != 3 || t.shape[2] != 2)
    throw FormatError(path + ": expected rank 3 flow with 2 channels, got " + shape_to_string(t.shape));
  return t;
}

void add_flow_noise(Tensor<float>& flow, float sigma, std::mt19937_64& rng) {
  if (sigma <= 0) return;
  std::normal_distribution<float> noise(0.0f, sigma);
  for (float& v : flow.data) v += noise(rng);
}

std::vector<const Dataset::Clip*> Dataset::split(const std::string& name) const {
  std::vector<const Clip*> out;
  for (const auto& c : clips)
    if (c.split == name) out.push_back(&c);
  return out;
}

void make_dataset(const std::string& root, int n_train, int n_val, int n_test, const SceneTemplate& tmpl,
                  std::uint64_t master_seed, bool overwrite) {
  require(n_train >= 1 && n_val >= 1 && n_test >= 1, "make_dataset: all split sizes must be >= 1");
  const fs::path rootp(root);
  if (fs::exists(rootp) && !fs::is_empty(rootp)) {
    if (!overwrite) throw ContractViolation("make_dataset: target directory not empty: " + root + " (pass overwrite)");
    fs::remove_all(rootp);
  }
  fs::create_directories(rootp / "clips");

  std::mt19937_64 seeder(master_seed);
  std::ostringstream manifest;
  const int total = n_train + n_val + n_test;
  for (int idx = 0; idx < total; ++idx) {
    const std::uint64_t clip_seed = seeder();
    const std::string split = idx < n_train ? "train" : (idx < n_train + n_val ? "val" : "test");
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "clip_%04d", idx);
    const std::string id(idbuf);

    const SceneSpec spec = random_scene(tmpl, clip_seed);
    const VideoSample clip = generate_clip(spec, clip_seed ^ 0xA5A5A5A5ull);

    const fs::path tmp = rootp / ("tmp_" + id);
    fs::create_directories(tmp);
    for (std::size_t k = 0; k < clip.frames.size(); ++k)
      save_tensor(clip.frames[k], (tmp / ("frame_" + std::to_string(k) + ".GRFPTNSR")).string());
    for (std::size_t k = 0; k < clip.flows.size(); ++k) {
      save_flow_file(clip.flows[k], (tmp / ("flow_" + std::to_string(k) + ".GRFPTNSR")).string());
      save_tensor(clip.occl[k], (tmp / ("occl_" + std::to_string(k) + ".GRFPTNSR")).string());
      save_flow_file(clip.rflows[k], (tmp / ("rflow_" + std::to_string(k) + ".GRFPTNSR")).string());
      save_tensor(clip.roccl[k], (tmp / ("roccl_" + std::to_string(k) + ".GRFPTNSR")).string());
    }
    Tensor<float> lab({clip.labels.h, clip.labels.w});
    for (std::size_t i = 0; i < lab.data.size(); ++i) lab.data[i] = static_cast<float>(clip.labels.ids[i]);
    save_tensor(lab, (tmp / "label.GRFPTNSR").string());
    std::ostringstream meta;
    meta << "n_frames=" << clip.frames.size() << "\nlabel_index=" << clip.label_index
         << "\nn_classes=" << clip.n_classes << "\n";
    write_text((tmp / "meta.txt").string(), meta.str());
    fs::rename(tmp, rootp / "clips" / id);

    manifest << id << '\t' << clip_seed << '\t' << split << '\n';
  }
  write_text((rootp / "manifest.txt").string(), manifest.str());
  write_text((rootp / "flow_format.txt").string(), "flow channel 0 = f^x (columns, rightward), channel 1 = f^y (rows, downward)\n");
  std::ostringstream ds;
  ds << "n_classes=" << tmpl.n_classes << "\nheight=" << tmpl.height << "\nwidth=" << tmpl.width
     << "\nn_frames=" << tmpl.n_frames << "\npost_frames=" << tmpl.post_frames << "\nmaster_seed=" << master_seed << "\n";
  write_text((rootp / "dataset.txt").string(), ds.str());
}

Dataset load_dataset(const std::string& root) {
  Dataset ds;
  ds.root = root;
  const auto kv = read_kv((fs::path(root) / "dataset.txt").string());
  ds.n_classes = std::stoi(kv.at("n_classes"));
  std::ifstream in((fs::path(root) / "manifest.txt").string());
  if (!in) throw FormatError("cannot open manifest: " + root);
  std::string id, split;
  std::uint64_t seed;
  while (in >> id >> seed >> split)
    ds.clips.push_back({id, seed, split, (fs::path(root) / "clips" / id).string()});
  return ds;
}

VideoSample load_clip(const Dataset::Clip& clip) {
  const auto kv = read_kv((fs::path(clip.dir) / "meta.txt").string());
  const int n = std::stoi(kv.at("n_frames"));
  VideoSample out;
  out.label_index = std::stoi(kv.at("label_index"));
  out.n_classes = std::stoi(kv.at("n_classes"));
  for (int k = 0; k < n; ++k)
    out.frames.push_back(load_tensor((fs::path(clip.dir) / ("frame_" + std::to_string(k) + ".GRFPTNSR")).string()));
  for (int k = 0; k + 1 < n; ++k) {
    out.flows.push_back(load_flow_file((fs::path(clip.dir) / ("flow_" + std::to_string(k) + ".GRFPTNSR")).string()));
    out.occl.push_back(load_tensor((fs::path(clip.dir) / ("occl_" + std::to_string(k) + ".GRFPTNSR")).string()));
    out.rflows.push_back(load_flow_file((fs::path(clip.dir) / ("rflow_" + std::to_string(k) + ".GRFPTNSR")).string()));
    out.roccl.push_back(load_tensor((fs::path(clip.dir) / ("roccl_" + std::to_string(k) + ".GRFPTNSR")).string()));
  }
  const Tensor<float> lab = load_tensor((fs::path(clip.dir) / "label.GRFPTNSR").string());
  out.labels = LabelMap(lab.shape[0], lab.shape[1]);
  for (std::size_t i = 0; i < lab.data.size(); ++i) out.labels.ids[i] = static_cast<int>(lab.data[i]);
  return out;
}

}  // namespace grfp
