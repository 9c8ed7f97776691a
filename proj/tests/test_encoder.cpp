#include <doctest.h>

#include "test_util.hpp"
#include "vfi/encoder.hpp"
#include "vfi/errors.hpp"

using namespace vfi;
using namespace vfi::test;

TEST_CASE("init_encoder is reproducible and seed dependent") {
  auto a = init_encoder(3);
  auto b = init_encoder(3);
  auto c = init_encoder(4);
  CHECK(state_hash(*a) == state_hash(*b));
  CHECK(state_hash(*a) != state_hash(*c));
  auto pa = a->parameters(), pb = b->parameters();
  for (size_t i = 0; i < pa.size(); ++i) CHECK(torch::equal(pa[i], pb[i]));
}

TEST_CASE("encoder level shapes follow the channel plan") {
  auto enc = init_encoder(0, {32, 64, 96});
  auto pyr = enc->forward(uniform({2, 3, 64, 64}, -0.5, 0.5, 1));
  REQUIRE(pyr.size() == 3);
  const int64_t sizes[] = {64, 32, 16};
  const int64_t chans[] = {32, 64, 96};
  for (int l = 0; l < 3; ++l) {
    CHECK(pyr[l].size(0) == 2);
    CHECK(pyr[l].size(1) == chans[l]);
    CHECK(pyr[l].size(2) == sizes[l]);
    CHECK(pyr[l].size(3) == sizes[l]);
  }
  auto wide = init_encoder(0, {8, 8, 8, 8})->forward(torch::zeros({1, 3, 24, 40}));
  CHECK(wide[3].size(2) == 3);
  CHECK(wide[3].size(3) == 5);
}

TEST_CASE("encoder is pure") {
  auto enc = init_encoder(5, {8, 16});
  auto x = uniform({1, 3, 16, 16}, -0.5, 0.5, 2);
  auto p = enc->forward(x);
  auto q = enc->forward(x.clone());
  for (size_t l = 0; l < p.size(); ++l) CHECK(torch::equal(p[l], q[l]));
}

TEST_CASE("zero-bias encoder maps a zero image to zeros") {
  auto enc = init_encoder(6);
  for (auto& p : enc->named_parameters()) {
    if (p.key().find("bias") != std::string::npos) CHECK(p.value().abs().max().item<float>() == 0);
  }
  for (auto& level : enc->forward(torch::zeros({1, 3, 32, 32}))) {
    CHECK(level.abs().max().item<float>() == 0.0f);
  }
}

TEST_CASE("encoder input validation") {
  CHECK_THROWS_AS(init_encoder(0, {}), ValidationError);
  CHECK_THROWS_AS(init_encoder(0, {8, 0}), ValidationError);
  auto enc = init_encoder(0);
  CHECK_THROWS_AS(enc->forward(torch::zeros({1, 3, 30, 32})), DimensionError);
  CHECK_THROWS_AS(enc->forward(torch::zeros({1, 1, 32, 32})), DimensionError);
}

TEST_CASE("encoder parameter gradients match finite differences") {
  auto enc = init_encoder(7, {4, 6});
  enc->to(torch::kFloat64);
  auto x = uniform({1, 3, 16, 16}, -0.5, 0.5, 3, f64());
  auto f = [&] {
    auto p = enc->forward(x);
    return readout(p[0], 11) + readout(p[1], 12);
  };
  for (auto& p : enc->parameters()) {
    CHECK(check_gradient(f, p, 12).rel_error < 1e-3);
  }
}
