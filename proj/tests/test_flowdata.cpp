#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "grfp/flowdata.hpp"
#include "grfp/tensor_io.hpp"
#include "grfp/warp.hpp"

namespace fs = std::filesystem;
using namespace grfp;

namespace {

// Deterministic exact-geometry scene: no pixel noise, no brightness jitter.
SceneSpec clean_spec() {
  SceneSpec spec;
  spec.height = 48;
  spec.width = 48;
  spec.n_classes = 4;
  spec.n_frames = 4;
  spec.image_noise_sigma = 0.0f;
  spec.illum_jitter = 0.0f;
  spec.texture_seed = 3;
  return spec;
}

SceneObject rect(int cls, float size, float x0, float y0, float vx, float vy, int z) {
  SceneObject o;
  o.shape = SceneObject::Shape::Rect;
  o.class_id = cls;
  o.size = size;
  o.x0 = x0;
  o.y0 = y0;
  o.vx = vx;
  o.vy = vy;
  o.z = z;
  return o;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) { fs::remove_all(path); }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("a static scene has zero flow, no occlusion, identical frames") {
  auto spec = clean_spec();
  spec.objects.push_back(rect(1, 5, 20, 20, 0, 0, 0));
  const auto clip = generate_clip(spec, 1);
  REQUIRE(clip.frames.size() == 4);
  REQUIRE(clip.flows.size() == 3);
  for (const auto& f : clip.flows)
    for (float v : f.data) CHECK(v == 0.0f);
  for (const auto& o : clip.occl)
    for (float v : o.data) CHECK(v == 0.0f);
  for (std::size_t k = 1; k < clip.frames.size(); ++k) CHECK(clip.frames[k].data == clip.frames[0].data);
  CHECK(clip.label_index == 3);
}

TEST_CASE("flow on a rightward mover points back to the source frame") {
  auto spec = clean_spec();
  spec.objects.push_back(rect(2, 4, 20, 20, 2, 0, 0));  // covers x in [16,24] at t=0
  const auto clip = generate_clip(spec, 1);

  // flows[0] maps frame 1 back to frame 0. At frame 1 the rect covers
  // x in [18, 26]; its pixels carry (f^x, f^y) = (-2, 0).
  CHECK(clip.flows[0].at(20, 22, 0) == -2.0f);
  CHECK(clip.flows[0].at(20, 22, 1) == 0.0f);
  CHECK(clip.occl[0].at(20, 22) == 0.0f);

  // Far background: zero flow, not occluded.
  CHECK(clip.flows[0].at(5, 40, 0) == 0.0f);
  CHECK(clip.occl[0].at(5, 40) == 0.0f);

  // Disocclusion band: background pixels at frame 1 that the rect covered at
  // frame 0 (x in [16, 18)) have no correspondence.
  CHECK(clip.occl[0].at(20, 17) == 1.0f);
  CHECK(clip.flows[0].at(20, 17, 0) == 0.0f);  // carries background flow

  // Reverse flow maps frame 0 forward to frame 1: object pixels carry +v.
  CHECK(clip.rflows[0].at(20, 20, 0) == 2.0f);
  // Pixels the object will cover at frame 1 (x in (24, 26]) lose their
  // background correspondence.
  CHECK(clip.roccl[0].at(20, 26) == 1.0f);
}

TEST_CASE("occlusion matches a brute-force correspondence check") {
  auto spec = clean_spec();
  spec.objects.push_back(rect(1, 6, 18, 24, 2, -1, 0));
  spec.objects.push_back(rect(3, 5, 30, 20, -1.5f, 0.5f, 1));
  const auto clip = generate_clip(spec, 7);

  for (int k = 0; k < 2; ++k) {
    const int target = k + 1;
    for (int i = 0; i < spec.height; ++i)
      for (int j = 0; j < spec.width; ++j) {
        const int o = top_object_at(spec, static_cast<float>(i), static_cast<float>(j), target);
        const float fx = o >= 0 ? -spec.objects[o].vx : 0.0f;
        const float fy = o >= 0 ? -spec.objects[o].vy : 0.0f;
        const float sy = i + fy, sx = j + fx;
        const bool inside = sy >= 0 && sy <= spec.height - 1 && sx >= 0 && sx <= spec.width - 1;
        const bool visible = inside && top_object_at(spec, sy, sx, target - 1) == o;
        CHECK(clip.occl[k].at(i, j) == (visible ? 0.0f : 1.0f));
        if (visible) {
          CHECK(clip.flows[k].at(i, j, 0) == fx);
          CHECK(clip.flows[k].at(i, j, 1) == fy);
        }
      }
  }
}

TEST_CASE("warping a frame with its flow reproduces the next frame off occlusions") {
  auto spec = clean_spec();
  spec.objects.push_back(rect(1, 6, 16, 22, 2, 1, 0));  // integer velocity: exact pixel transport
  spec.objects.push_back(rect(2, 4, 32, 14, -1, 0, 1));
  const auto clip = generate_clip(spec, 3);

  for (std::size_t k = 0; k + 1 < clip.frames.size(); ++k) {
    const auto warped = warp_bilinear(clip.frames[k], clip.flows[k]);
    double err = 0;
    long n = 0;
    for (int i = 0; i < spec.height; ++i)
      for (int j = 0; j < spec.width; ++j) {
        if (clip.occl[k].at(i, j) > 0.5f) continue;
        for (int c = 0; c < 3; ++c) err += std::abs(warped.at(i, j, c) - clip.frames[k + 1].at(i, j, c));
        ++n;
      }
    CHECK(err / (3.0 * n) <= 0.02);
  }
}

TEST_CASE("labels at the labeled frame match the scene geometry") {
  auto spec = clean_spec();
  spec.objects.push_back(rect(3, 7, 24, 24, 1, 0, 0));
  const auto clip = generate_clip(spec, 5);
  long agree = 0, total = 0;
  for (int i = 0; i < spec.height; ++i)
    for (int j = 0; j < spec.width; ++j) {
      const int o = top_object_at(spec, static_cast<float>(i), static_cast<float>(j), clip.label_index);
      const int expect = o >= 0 ? spec.objects[o].class_id : 0;
      agree += clip.labels.at(i, j) == expect;
      ++total;
    }
  CHECK(agree == total);
}

TEST_CASE("generator validates velocities, z-orders and classes") {
  auto spec = clean_spec();
  spec.objects.push_back(rect(1, 5, 20, 20, 20.0f, 0, 0));  // above the displacement bound
  CHECK_THROWS_AS(generate_clip(spec, 1), ContractViolation);

  spec.objects[0].vx = 1.0f;
  spec.objects.push_back(rect(2, 5, 30, 30, 0, 0, 0));  // duplicate z
  CHECK_THROWS_AS(generate_clip(spec, 1), ContractViolation);

  spec.objects.pop_back();
  spec.objects[0].class_id = 9;  // out of range for n_classes = 4
  CHECK_THROWS_AS(generate_clip(spec, 1), ContractViolation);
}

TEST_CASE("flow files round-trip and reject wrong shapes") {
  TempDir tmp("grfp_flowfile_test");
  fs::create_directories(tmp.path);
  std::mt19937_64 rng(61);
  Tensor<float> f({6, 5, 2});
  std::uniform_real_distribution<float> u(-3, 3);
  for (float& v : f.data) v = u(rng);

  const auto path = (tmp.path / "f.GRFPTNSR").string();
  save_flow_file(f, path);
  const auto back = load_flow_file(path);
  CHECK(back.shape == f.shape);
  CHECK(back.data == f.data);

  CHECK_THROWS_AS(save_flow_file(Tensor<float>({6, 5, 3}), path), ContractViolation);

  save_tensor(Tensor<float>({6, 5}), path);  // rank 2 is not a flow
  CHECK_THROWS_AS(load_flow_file(path), FormatError);
}

TEST_CASE("tensor container rejects corruption with useful errors") {
  TempDir tmp("grfp_container_test");
  fs::create_directories(tmp.path);
  const auto path = (tmp.path / "t.GRFPTNSR").string();
  Tensor<float> t({3, 4});
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<float>(i);
  save_tensor(t, path);

  // Round trip, including the f64 container converting to f32.
  CHECK(load_tensor(path).data == t.data);
  save_tensor(t.cast<double>(), path);
  CHECK(load_tensor(path).data == t.data);

  auto bytes = read_bytes(path);
  {
    auto bad = bytes;
    bad[0] = 'X';
    std::ofstream(path, std::ios::binary).write(bad.data(), static_cast<std::streamsize>(bad.size()));
    CHECK_THROWS_AS(load_tensor(path), FormatError);
  }
  {
    auto bad = bytes;
    bad.resize(bytes.size() - 7);  // truncated payload
    std::ofstream(path, std::ios::binary).write(bad.data(), static_cast<std::streamsize>(bad.size()));
    CHECK_THROWS_AS(load_tensor(path), FormatError);
  }
}

TEST_CASE("flow displacement noise perturbs every component") {
  Tensor<float> f({8, 8, 2});
  std::mt19937_64 rng(62);
  add_flow_noise(f, 0.5f, rng);
  double mean = 0;
  for (float v : f.data) mean += v;
  mean /= f.data.size();
  CHECK(std::abs(mean) < 0.25);
  int nonzero = 0;
  for (float v : f.data) nonzero += v != 0.0f;
  CHECK(nonzero == static_cast<int>(f.data.size()));

  Tensor<float> g({4, 4, 2}, 1.0f);
  add_flow_noise(g, 0.0f, rng);  // sigma 0 is a no-op
  for (float v : g.data) CHECK(v == 1.0f);
}

TEST_CASE("dataset generation is deterministic and refuses to clobber") {
  TempDir a("grfp_ds_a"), b("grfp_ds_b");
  SceneTemplate tmpl;
  tmpl.height = tmpl.width = 24;
  tmpl.n_frames = 3;
  tmpl.min_objects = 1;
  tmpl.max_objects = 2;

  make_dataset(a.path.string(), 2, 1, 1, tmpl, 77);
  make_dataset(b.path.string(), 2, 1, 1, tmpl, 77);

  const auto ds = load_dataset(a.path.string());
  CHECK(ds.n_classes == 5);
  CHECK(ds.clips.size() == 4);
  CHECK(ds.split("train").size() == 2);
  CHECK(ds.split("val").size() == 1);
  CHECK(ds.split("test").size() == 1);

  for (const auto& clip : ds.clips) {
    const auto fa = read_bytes(fs::path(clip.dir) / "frame_0.GRFPTNSR");
    const auto fb = read_bytes(b.path / "clips" / clip.id / "frame_0.GRFPTNSR");
    CHECK(fa == fb);
  }

  CHECK_THROWS_AS(make_dataset(a.path.string(), 2, 1, 1, tmpl, 78), ContractViolation);
  make_dataset(a.path.string(), 1, 1, 1, tmpl, 78, /*overwrite=*/true);
  CHECK(load_dataset(a.path.string()).clips.size() == 3);
}

TEST_CASE("clips round-trip through the dataset directory") {
  TempDir root("grfp_ds_roundtrip");
  SceneTemplate tmpl;
  tmpl.height = tmpl.width = 20;
  tmpl.n_frames = 3;
  tmpl.post_frames = 2;
  tmpl.min_objects = 1;
  tmpl.max_objects = 2;
  make_dataset(root.path.string(), 1, 1, 1, tmpl, 5);

  const auto ds = load_dataset(root.path.string());
  const auto clip = load_clip(*ds.split("train")[0]);
  CHECK(clip.frames.size() == 5);  // 3 up to the label plus 2 past it
  CHECK(clip.label_index == 2);
  CHECK(clip.flows.size() == 4);
  CHECK(clip.rflows.size() == 4);
  CHECK(clip.n_classes == 5);
  CHECK(clip.labels.h == 20);

  // Regenerating from the manifest seed reproduces the stored clip.
  const auto spec = random_scene(tmpl, ds.split("train")[0]->seed);
  const auto regen = generate_clip(spec, ds.split("train")[0]->seed ^ 0xA5A5A5A5ull);
  CHECK(regen.frames[0].data == clip.frames[0].data);
  CHECK(regen.labels.ids == clip.labels.ids);
}
