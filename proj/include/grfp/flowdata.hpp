#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "grfp/tensor.hpp"

namespace grfp {

// One moving scene element. Positions and sizes are in pixels with x along
// columns and y along rows; (x0, y0) is the center at frame 0.
struct SceneObject {
  enum class Shape { Rect, Disk };
  Shape shape = Shape::Rect;
  int class_id = 1;  // 1..C-1; class 0 is background
  float size = 8;    // disk radius or rect half-extent
  float x0 = 0, y0 = 0;
  float vx = 0, vy = 0;  // pixels per frame
  int z = 0;             // unique; higher is in front
};

struct SceneSpec {
  int height = 64, width = 64;
  int n_classes = 5;
  int n_frames = 5;      // frames up to and including the labeled frame
  int post_frames = 0;   // extra frames past the labeled frame (backward chains)
  std::uint64_t texture_seed = 0;
  float image_noise_sigma = 0.25f;  // per-frame additive pixel noise
  float illum_jitter = 0.08f;       // per-frame global brightness jitter
  std::vector<SceneObject> objects;

  int total_frames() const { return n_frames + post_frames; }
  int label_index() const { return n_frames - 1; }
};

// Randomized scene parameters for dataset generation.
struct SceneTemplate {
  int height = 64, width = 64;
  int n_classes = 5;
  int n_frames = 5;
  int post_frames = 0;
  float image_noise_sigma = 0.25f;
  float illum_jitter = 0.08f;
  int min_objects = 3, max_objects = 5;
  float min_size = 5, max_size = 13;
  float max_speed = 2.0f;
};

// A generated clip. flows[k] maps frame k+1 back to frame k (the warping
// convention); rflows[k] maps frame k forward to frame k+1 and serves the
// backward-in-time chains. occl[k] / roccl[k] flag target pixels with no
// valid correspondence in the paired frame; flagged pixels carry background
// flow.
struct VideoSample {
  std::vector<Tensor<float>> frames;  // H x W x 3
  std::vector<Tensor<float>> flows;   // H x W x 2, (f^x, f^y)
  std::vector<Tensor<float>> rflows;
  std::vector<Tensor<float>> occl;  // H x W, 0/1
  std::vector<Tensor<float>> roccl;
  LabelMap labels;
  int label_index = 0;
  int n_classes = 0;
};

// Continuous-coordinate scene queries used by the renderer and by tests.
bool object_contains(const SceneObject& obj, float y, float x, int frame);
// Index into spec.objects of the front-most object containing (y, x), or -1.
int top_object_at(const SceneSpec& spec, float y, float x, int frame);

SceneSpec random_scene(const SceneTemplate& tmpl, std::uint64_t seed);

// Renders the clip, rasterizes labels at the labeled frame, and derives both
// flow directions analytically from the object velocities. `seed` drives the
// per-frame noise only; geometry is fixed by the spec.
VideoSample generate_clip(const SceneSpec& spec, std::uint64_t seed);

// Flow container helpers (GRFPTNSR, rank 3, C=2, channel 0 = f^x).
void save_flow_file(const Tensor<float>& flow, const std::string& path);
Tensor<float> load_flow_file(const std::string& path);

// In-place additive Gaussian displacement noise, to simulate imperfect flow.
void add_flow_noise(Tensor<float>& flow, float sigma, std::mt19937_64& rng);

struct Dataset {
  struct Clip {
    std::string id;
    std::uint64_t seed = 0;
    std::string split;
    std::string dir;
  };
  std::string root;
  int n_classes = 0;
  std::vector<Clip> clips;

  std::vector<const Clip*> split(const std::string& name) const;
};

// Writes clips/<id>/{frame,flow,occl,rflow,roccl}_<k>.GRFPTNSR plus
// label.GRFPTNSR, meta.txt per clip, and a root manifest.txt. Deterministic
// per master_seed; refuses an existing non-empty target unless `overwrite`.
void make_dataset(const std::string& root, int n_train, int n_val, int n_test, const SceneTemplate& tmpl,
                  std::uint64_t master_seed, bool overwrite = false);

Dataset load_dataset(const std::string& root);
VideoSample load_clip(const Dataset::Clip& clip);

}  // namespace grfp
