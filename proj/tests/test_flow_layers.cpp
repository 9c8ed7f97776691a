#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "vfi/errors.hpp"
#include "vfi/flow_layers.hpp"
#include "vfi/nn_util.hpp"

using namespace vfi;
using namespace vfi::test;
namespace FL = vfi::flow;

TEST_CASE("squeeze") {
  auto h = uniform({2, 3, 4, 4}, -1, 1, 1);
  auto s = FL::squeeze(h);
  CHECK(s.sizes() == torch::IntArrayRef({2, 12, 2, 2}));
  CHECK(torch::equal(FL::unsqueeze(s), h));
  // a permutation: same multiset of values, so the volume is preserved
  CHECK(torch::equal(std::get<0>(s.flatten().sort()), std::get<0>(h.flatten().sort())));
  CHECK_THROWS_AS(FL::squeeze(torch::zeros({1, 3, 5, 4})), DimensionError);
}

TEST_CASE("split") {
  auto h = uniform({1, 8, 2, 2}, -1, 1, 2);
  auto [kept, z] = FL::split(h);
  CHECK(kept.sizes() == torch::IntArrayRef({1, 4, 2, 2}));
  CHECK(z.sizes() == torch::IntArrayRef({1, 4, 2, 2}));
  CHECK(torch::equal(FL::unsplit(kept, z), h));
  CHECK_THROWS_AS(FL::split(torch::zeros({1, 5, 2, 2})), DimensionError);
}

TEST_CASE("actnorm") {
  SUBCASE("identity parameters") {
    FL::ActNorm an(4);
    an->mark_initialized();
    auto h = uniform({2, 4, 8, 8}, -1, 1, 3);
    auto [y, ld] = an->forward(h);
    CHECK(torch::equal(y, h));
    CHECK(ld.abs().max().item<float>() == 0.0f);
  }
  SUBCASE("data-dependent initialisation normalises the batch") {
    FL::ActNorm an(5);
    an->to(torch::kFloat64);
    an->train();
    auto h = normal({4, 5, 8, 8}, 3.0, 4, f64()) + 1.7;
    auto [y, ld] = an->forward(h);
    CHECK(an->initialized());
    auto per = y.transpose(0, 1).reshape({5, -1});
    CHECK(per.mean(1).abs().max().item<double>() < 1e-4);
    CHECK((per.var(1, false) - 1).abs().max().item<double>() < 1e-3);
    // second call keeps the parameters
    auto s = an->scale.clone();
    an->forward(h * 5);
    CHECK(torch::equal(an->scale, s));
  }
  SUBCASE("no initialisation in eval mode") {
    FL::ActNorm an(3);
    an->eval();
    an->forward(uniform({1, 3, 4, 4}, 2, 3, 5));
    CHECK_FALSE(an->initialized());
  }
  SUBCASE("log-determinant formula") {
    FL::ActNorm an(4);
    an->mark_initialized();
    {
      torch::NoGradGuard ng;
      an->scale.fill_(2.0);
    }
    auto [y, ld] = an->forward(torch::zeros({1, 4, 8, 8}));
    CHECK(ld.item<float>() == doctest::Approx(64 * 4 * std::log(2.0)).epsilon(1e-6));
  }
  SUBCASE("inverse and zero scale") {
    FL::ActNorm an(3);
    an->mark_initialized();
    {
      torch::NoGradGuard ng;
      an->scale.copy_(torch::tensor({0.5f, -2.0f, 3.0f}));
      an->bias.copy_(torch::tensor({0.1f, -0.3f, 2.0f}));
    }
    auto h = uniform({2, 3, 4, 4}, -1, 1, 6);
    CHECK(max_abs(an->inverse(an->forward(h).first), h) < 1e-6);
    {
      torch::NoGradGuard ng;
      an->scale[1] = 0.0f;
    }
    CHECK_THROWS_AS(an->forward(h), NumericalError);
  }
}

TEST_CASE("invertible 1x1 convolution") {
  auto gen = make_generator(7);
  FL::InvConv1x1 conv(4, gen);
  auto h = uniform({1, 4, 8, 8}, -1, 1, 8);
  SUBCASE("orthogonal init has zero log-determinant") {
    CHECK(std::abs(conv->forward(h).second.item<float>()) < 1e-6 * 64);
    CHECK(std::abs(torch::linalg_det(conv->weight.to(torch::kFloat64)).abs().log().item<double>()) <
          1e-6);
  }
  SUBCASE("identity matrix") {
    {
      torch::NoGradGuard ng;
      conv->weight.copy_(torch::eye(4));
    }
    auto [y, ld] = conv->forward(h);
    CHECK(torch::equal(y, h));
    CHECK(ld.item<float>() == 0.0f);
  }
  SUBCASE("round trip with a general matrix") {
    {
      torch::NoGradGuard ng;
      conv->weight.copy_(torch::eye(4) + normal({4, 4}, 0.4, 9));
    }
    auto [y, ld] = conv->forward(h);
    CHECK(max_abs(conv->inverse(y), h) < 1e-5);
    const double expect = 64 * std::log(std::abs(
                                   torch::linalg_det(conv->weight.to(torch::kFloat64)).item<double>()));
    CHECK(ld.item<float>() == doctest::Approx(expect).epsilon(1e-5));
  }
  SUBCASE("singular matrix is rejected") {
    {
      torch::NoGradGuard ng;
      conv->weight.copy_(torch::ones({4, 4}));
    }
    CHECK_THROWS_AS(conv->forward(h), NumericalError);
    CHECK_THROWS_AS(conv->inverse(h), NumericalError);
  }
}

TEST_CASE("affine coupling") {
  SUBCASE("zero subnetworks with lambda = eta = 1 scale by e") {
    FL::AffineCoupling cp(6, 4, 16);
    CHECK(cp->out->weight.abs().max().item<float>() == 0.0f);
    CHECK(cp->out->bias.abs().max().item<float>() == 0.0f);
    CHECK(cp->lambda.item<float>() == 1.0f);
    CHECK(cp->eta.item<float>() == 1.0f);
    auto h = uniform({2, 6, 5, 5}, -1, 1, 2);
    auto cond = uniform({2, 4, 5, 5}, -1, 1, 3);
    auto [y, ld] = cp->forward(h, cond);
    using torch::indexing::Slice;
    CHECK(torch::equal(y.index({Slice(), Slice(0, 3)}), h.index({Slice(), Slice(0, 3)})));
    CHECK(torch::equal(y.index({Slice(), Slice(3, 6)}),
                       std::exp(1.0f) * h.index({Slice(), Slice(3, 6)})));
    CHECK(ld[0].item<float>() == 75.0f);
    CHECK(ld[1].item<float>() == 75.0f);
  }
  SUBCASE("scale stays within (e^(eta-|lambda|), e^(eta+|lambda|))") {
    FL::AffineCoupling cp(4, 2, 8);
    for (int k = 0; k < 50; ++k) {
      init_fan_in(*cp, 100 + k);
      {
        torch::NoGradGuard ng;
        cp->out->weight.copy_(normal(cp->out->weight.sizes().vec(), 3.0, 200 + k));
        cp->lambda.fill_(-5.0 + 0.2 * k);
        cp->eta.fill_(5.0 - 0.2 * k);
      }
      auto h = uniform({1, 4, 6, 6}, -3, 3, 300 + k);
      auto co = cp->coefficients(h.narrow(1, 0, 2), uniform({1, 2, 6, 6}, -3, 3, 400 + k));
      auto log_scale = cp->lambda * co.tanh_scale + cp->eta;
      const double lam = std::abs(cp->lambda.item<double>()), eta = cp->eta.item<double>();
      CHECK(log_scale.min().item<double>() >= eta - lam - 1e-5);
      CHECK(log_scale.max().item<double>() <= eta + lam + 1e-5);
    }
  }
  SUBCASE("round trip with random parameters") {
    FL::AffineCoupling cp(8, 3, 16);
    init_fan_in(*cp, 5);
    {
      torch::NoGradGuard ng;
      cp->out->weight.copy_(normal(cp->out->weight.sizes().vec(), 0.5, 6));
      cp->lambda.fill_(0.8);
      cp->eta.fill_(-0.3);
    }
    auto h = uniform({2, 8, 8, 8}, -1, 1, 7);
    auto cond = uniform({2, 3, 8, 8}, -1, 1, 8);
    auto [y, ld] = cp->forward(h, cond);
    CHECK(max_abs(cp->inverse(y, cond), h) < 1e-5);
    auto co = cp->coefficients(h.narrow(1, 0, 4), cond);
    auto expect = (0.8 * co.tanh_scale.sum({1, 2, 3}) - 0.3 * 4 * 64);
    CHECK(max_abs(ld, expect) < 1e-3);
  }
  SUBCASE("needs at least two channels") {
    CHECK_THROWS_AS(FL::AffineCoupling(1, 2, 8), DimensionError);
  }
}

TEST_CASE("flow step quadrature: exp(-nll) integrates to one") {
  // Two scalar dimensions: one pixel with two channels, no condition.
  auto gen = make_generator(11);
  FL::FlowStep step(2, 0, 8, gen);
  init_fan_in(*step->coupling, 12);
  step->to(torch::kFloat64);
  {
    torch::NoGradGuard ng;
    step->norm->scale.copy_(torch::tensor({1.3, 0.8}, f64()));
    step->norm->bias.copy_(torch::tensor({0.4, -0.7}, f64()));
    step->norm->mark_initialized();
    step->mix->weight.copy_(torch::tensor({{1.0, 0.6}, {-0.3, 0.9}}, f64()));
    step->coupling->out->weight.copy_(normal(step->coupling->out->weight.sizes().vec(), 0.8, 13, f64()));
    step->coupling->out->bias.copy_(torch::tensor({0.2, 0.5}, f64()));
    step->coupling->lambda.fill_(0.5);
    step->coupling->eta.fill_(0.1);
  }
  step->eval();
  torch::NoGradGuard ng;
  const int n = 1200;
  const double lo = -12, hi = 12, dx = (hi - lo) / n;
  auto axis = torch::arange(n, f64()) * dx + lo + dx / 2;
  auto grid = torch::stack(torch::meshgrid({axis, axis}, "ij"), 0).reshape({2, -1});
  auto x = grid.t().reshape({-1, 2, 1, 1}).contiguous();
  double mass = 0;
  for (int64_t start = 0; start < x.size(0); start += 200000) {
    auto chunk = x.narrow(0, start, std::min<int64_t>(200000, x.size(0) - start));
    auto [z, ld] = step->forward(chunk, torch::Tensor());
    auto nll = (0.5 * z.square() + 0.5 * std::log(2 * M_PI)).sum({1, 2, 3}) - ld;
    mass += torch::exp(-nll).sum().item<double>() * dx * dx;
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-2));
}
