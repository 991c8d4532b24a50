#include <doctest.h>

#include <random>

#include "grfp/backbone.hpp"

using namespace grfp;

TEST_CASE("default architecture: 6 layers, 3x3, dilations 1,1,2,4,8,1") {
  const auto p = BackboneParams<float>::make_default(5, 3);
  REQUIRE(p.layers.size() == 6);
  const std::vector<int> dils = {1, 1, 2, 4, 8, 1};
  const std::vector<int> chans = {3, 32, 32, 32, 32, 32, 5};
  for (std::size_t l = 0; l < 6; ++l) {
    CHECK(p.layers[l].dilation == dils[l]);
    CHECK(p.layers[l].w.shape == std::vector<int>{3, 3, chans[l], chans[l + 1]});
    CHECK(p.layers[l].b.shape == std::vector<int>{static_cast<int>(chans[l + 1])});
    for (float b : p.layers[l].b.data) CHECK(b == 0.0f);
  }
  CHECK(p.out_channels() == 5);
}

TEST_CASE("same seed gives the same parameters and forward pass") {
  const auto a = BackboneParams<float>::make_default(4, 99);
  const auto b = BackboneParams<float>::make_default(4, 99);
  const auto c = BackboneParams<float>::make_default(4, 100);
  REQUIRE(a.layers.size() == b.layers.size());
  for (std::size_t l = 0; l < a.layers.size(); ++l) CHECK(a.layers[l].w.data == b.layers[l].w.data);
  CHECK(a.layers[0].w.data != c.layers[0].w.data);

  std::mt19937_64 rng(41);
  Tensor<float> img({20, 20, 3});
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : img.data) v = u(rng);
  const auto y1 = backbone_forward(img, a);
  const auto y2 = backbone_forward(img, a);
  CHECK(y1.shape == std::vector<int>{20, 20, 4});
  CHECK(y1.data == y2.data);
}

TEST_CASE("zero input with zero biases gives zero scores and uniform beliefs") {
  const auto p = BackboneParams<float>::make_default(5, 7);
  const Tensor<float> img({12, 12, 3});
  const auto scores = backbone_forward(img, p);
  for (float v : scores.data) CHECK(v == 0.0f);
  const auto belief = unary_belief(img, p);
  for (float v : belief.data) CHECK(v == doctest::Approx(0.2f));
}

TEST_CASE("receptive field radius is the sum of the dilations") {
  // Six 3x3 layers with dilations 1,1,2,4,8,1 see 17 pixels in each direction.
  const auto p = BackboneParams<float>::make_default(3, 21);
  std::mt19937_64 rng(42);
  Tensor<float> img({40, 40, 3});
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : img.data) v = u(rng);
  const auto base = backbone_forward(img, p);

  auto center_changed = [&](int di, int dj) {
    Tensor<float> probe = img;
    for (int c = 0; c < 3; ++c) probe.at(20 + di, 20 + dj, c) += 0.5f;
    const auto out = backbone_forward(probe, p);
    for (int c = 0; c < 3; ++c)
      if (out.at(20, 20, c) != base.at(20, 20, c)) return true;
    return false;
  };

  CHECK(center_changed(0, 0));
  CHECK(center_changed(17, 0));
  CHECK(center_changed(0, -17));
  CHECK_FALSE(center_changed(18, 0));
  CHECK_FALSE(center_changed(0, 18));
  CHECK_FALSE(center_changed(-18, 0));
  CHECK(center_changed(17, 17));  // the field is a box, so the corner is inside
  CHECK_FALSE(center_changed(18, 18));
}

TEST_CASE("beliefs are channel-normalized probabilities") {
  const auto p = BackboneParams<float>::make_default(4, 55);
  std::mt19937_64 rng(43);
  Tensor<float> img({16, 16, 3});
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : img.data) v = u(rng);
  const auto belief = unary_belief(img, p);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      float s = 0;
      for (int c = 0; c < 4; ++c) {
        CHECK(belief.at(i, j, c) > 0.0f);
        s += belief.at(i, j, c);
      }
      CHECK(s == doctest::Approx(1.0f));
    }
}
