#include <doctest.h>

#include <cmath>
#include <random>

#include "softmesh/losses.hpp"

using namespace softmesh;

namespace {

Tensor mask_from(int h, int w, std::initializer_list<std::pair<int, int>> on) {
  std::vector<Real> v(std::size_t(h * w), 0);
  for (auto [y, x] : on) v[std::size_t(y * w + x)] = 1;
  return Tensor::from({1, h, w, 1}, v);
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, Real lo = 0,
                     Real hi = 1) {
  std::uniform_real_distribution<Real> u(lo, hi);
  std::vector<Real> v(std::size_t(numel_of(shape)));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), v);
}

Tensor binary_mask(Shape shape, std::mt19937_64& rng) {
  std::bernoulli_distribution b(0.4);
  std::vector<Real> v(std::size_t(numel_of(shape)));
  for (auto& x : v) x = b(rng) ? 1 : 0;
  return Tensor::from(std::move(shape), v);
}

Attributes random_attributes(std::mt19937_64& rng, std::int64_t n) {
  return {random_tensor({n, 4}, rng, -1, 1), random_tensor({n, 9}, rng, -1, 1),
          random_tensor({n, 42, 3}, rng, -1, 1),
          random_tensor({n, 4, 4, 2}, rng, -1, 1)};
}

void check_equal(const Tensor& a, const Tensor& b, Real tol = 0) {
  REQUIRE(a.shape() == b.shape());
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    if (tol == 0) {
      CHECK(a.data()[i] == b.data()[i]);
    } else {
      CHECK(std::abs(a.data()[i] - b.data()[i]) <= tol);
    }
  }
}

}  // namespace

TEST_CASE("image L1") {
  std::mt19937_64 rng(1);
  const Tensor img = random_tensor({2, 5, 6, 3}, rng);
  const Tensor m = binary_mask({2, 5, 6, 1}, rng);
  SUBCASE("identical foregrounds") {
    CHECK(image_l1(img, m, img, m).item() == 0);
  }
  SUBCASE("full foreground against black") {
    const Tensor ones = Tensor::full({2, 5, 6, 3}, 1);
    const Tensor full = Tensor::full({2, 5, 6, 1}, 1);
    const Tensor rendered_mask = random_tensor({2, 5, 6, 1}, rng);
    CHECK(image_l1(ones, full, Tensor::zeros({2, 5, 6, 3}), rendered_mask).item() ==
          doctest::Approx(5 * 6 * 3));
  }
  SUBCASE("background pixels do not matter") {
    const Tensor rendered = random_tensor({2, 5, 6, 3}, rng);
    const Tensor rendered_mask = binary_mask({2, 5, 6, 1}, rng);
    const Real base = image_l1(img, m, rendered, rendered_mask).item();
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Real> a(img.data().begin(), img.data().end());
      std::vector<Real> b(rendered.data().begin(), rendered.data().end());
      std::uniform_real_distribution<Real> u(0, 1);
      for (std::size_t p = 0; p < m.data().size(); ++p) {
        for (std::size_t c = 0; c < 3; ++c) {
          if (m.data()[p] == 0) a[3 * p + c] = u(rng);
          if (rendered_mask.data()[p] == 0) b[3 * p + c] = u(rng);
        }
      }
      const Real v = image_l1(Tensor::from(img.shape(), a), m,
                              Tensor::from(img.shape(), b), rendered_mask)
                         .item();
      REQUIRE(v == base);
    }
  }
  SUBCASE("resolution mismatch") {
    CHECK_THROWS_AS(image_l1(img, m, Tensor::zeros({2, 5, 5, 3}), m), ShapeError);
  }
}

TEST_CASE("silhouette IoU loss") {
  SUBCASE("hand case 2/3") {
    const Tensor a = mask_from(4, 4, {{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    const Tensor b = mask_from(4, 4, {{0, 0}, {0, 1}, {2, 0}, {2, 1}});
    CHECK(std::abs(silhouette_iou_loss(a, b).item() - Real(2) / 3) < 1e-6);
  }
  SUBCASE("identical binary masks") {
    const Tensor a = mask_from(4, 4, {{1, 1}, {2, 3}});
    CHECK(silhouette_iou_loss(a, a).item() == doctest::Approx(0).epsilon(1e-6));
  }
  SUBCASE("disjoint masks") {
    const Tensor a = mask_from(4, 4, {{0, 0}});
    const Tensor b = mask_from(4, 4, {{3, 3}});
    CHECK(silhouette_iou_loss(a, b).item() == doctest::Approx(1));
  }
  SUBCASE("both empty is zero") {
    const Tensor z = Tensor::zeros({1, 4, 4, 1});
    CHECK(silhouette_iou_loss(z, z).item() == 0);
  }
  SUBCASE("range over random soft masks") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
      const Real v = silhouette_iou_loss(binary_mask({3, 6, 6, 1}, rng),
                                         random_tensor({3, 6, 6, 1}, rng))
                         .item();
      CHECK(v >= 0);
      CHECK(v <= 1);
    }
  }
}

TEST_CASE("2D loss") {
  std::mt19937_64 rng(4);
  const Tensor img = random_tensor({2, 4, 4, 3}, rng);
  const Tensor m = binary_mask({2, 4, 4, 1}, rng);
  const Tensor ri = random_tensor({2, 4, 4, 3}, rng);
  const Tensor rm = random_tensor({2, 4, 4, 1}, rng);
  LossWeights w;
  CHECK(loss_2d(img, m, img, m, w).item() == doctest::Approx(0).epsilon(1e-6));
  w.img = 0;
  CHECK(loss_2d(img, m, ri, rm, w).item() ==
        w.sil * silhouette_iou_loss(m, rm).item());
  w = {};
  CHECK(loss_2d(img, m, ri, rm, w).item() >= 0);
}

TEST_CASE("interpolation") {
  std::mt19937_64 rng(5);
  const Attributes i1 = random_attributes(rng, 2), i2 = random_attributes(rng, 2);
  const Attributes j1 = random_attributes(rng, 2), j2 = random_attributes(rng, 2);
  auto components = [](const Attributes& a) {
    return std::array<Tensor, 4>{a.camera, a.light, a.shape_delta, a.texture_flow};
  };
  SUBCASE("alpha zero endpoint") {
    const Real zeros[] = {0, 0};
    const auto r = interpolate(i1, i2, j1, j2, zeros, zeros);
    for (int c = 0; c < 4; ++c) {
      check_equal(components(r)[c],
                  Real(0.5) * (components(i1)[c] + components(i2)[c]));
    }
  }
  SUBCASE("alpha one endpoint") {
    const Real ones[] = {1, 1};
    const auto r = interpolate(i1, i2, j1, j2, ones, ones);
    for (int c = 0; c < 4; ++c) {
      check_equal(components(r)[c],
                  Real(0.5) * (components(j1)[c] + components(j2)[c]));
    }
  }
  SUBCASE("fixed point") {
    const Real a1[] = {0.3, 0.9}, a2[] = {0.7, 0.1};
    const auto r = interpolate(i1, i1, i1, i1, a1, a2);
    for (int c = 0; c < 4; ++c) {
      check_equal(components(r)[c], components(i1)[c], 1e-6);
    }
  }
  SUBCASE("affine in each argument") {
    const Real a1[] = {0.25, 0.6}, a2[] = {0.5, 0.35};
    const Attributes k = random_attributes(rng, 2);
    auto combo = [&](const Attributes& x, const Attributes& y, Real t) {
      return Attributes{(1 - t) * x.camera + t * y.camera,
                        (1 - t) * x.light + t * y.light,
                        (1 - t) * x.shape_delta + t * y.shape_delta,
                        (1 - t) * x.texture_flow + t * y.texture_flow};
    };
    const Real t = 0.3;
    const auto lhs = interpolate(combo(i1, k, t), i2, j1, j2, a1, a2);
    const auto r0 = interpolate(i1, i2, j1, j2, a1, a2);
    const auto r1 = interpolate(k, i2, j1, j2, a1, a2);
    for (int c = 0; c < 4; ++c) {
      check_equal(components(lhs)[c],
                  (1 - t) * components(r0)[c] + t * components(r1)[c], 1e-5);
    }
  }
  SUBCASE("scalar overload agrees") {
    const auto s = interpolate(attributes_at(i1, 0), attributes_at(i2, 0),
                               attributes_at(j1, 0), attributes_at(j2, 0),
                               Real(0.4), Real(0.8));
    const Real a1[] = {0.4, 0}, a2[] = {0.8, 0};
    const auto b = attributes_at(interpolate(i1, i2, j1, j2, a1, a2), 0);
    check_equal(s.shape_delta, b.shape_delta, 1e-6);
    check_equal(s.camera, b.camera, 1e-6);
  }
  SUBCASE("mismatched configurations are rejected") {
    Attributes bad = j1;
    bad.shape_delta = Tensor::zeros({2, 12, 3});
    const Real a[] = {0, 0};
    CHECK_THROWS_AS(interpolate(i1, i2, bad, j2, a, a), ShapeError);
  }
}

TEST_CASE("attribute L1 used by the 3D cycle") {
  std::mt19937_64 rng(6);
  const Attributes a = random_attributes(rng, 2), b = random_attributes(rng, 2);
  CHECK(attribute_l1(a, a).item() == 0);
  CHECK(attribute_l1(a, b).item() == attribute_l1(b, a).item());
  // Per-dimension normalisation: each component contributes its mean.
  Attributes c = a;
  c.camera = a.camera + Tensor::full(a.camera.shape(), 1);
  CHECK(attribute_l1(a, c).item() == doctest::Approx(1));
}

TEST_CASE("landmark consistency") {
  const int v = 42;
  SUBCASE("uniform logits give ln 42 per landmark") {
    const std::vector<bool> all(v, true);
    const Real value = landmark_consistency(Tensor::zeros({v, v}), all).item();
    CHECK(value == doctest::Approx(42 * std::log(42.0)).epsilon(1e-5));
    CHECK(value / 42 == doctest::Approx(3.738).epsilon(1e-3));
  }
  SUBCASE("saturated correct logits") {
    std::vector<Real> l(std::size_t(v * v), 0);
    for (int k = 0; k < v; ++k) l[std::size_t(k * v + k)] = 1e6;
    const std::vector<bool> all(v, true);
    CHECK(landmark_consistency(Tensor::from({v, v}, l), all).item() ==
          doctest::Approx(0).epsilon(1e-6));
  }
  SUBCASE("fully occluded") {
    std::mt19937_64 rng(8);
    const std::vector<bool> none(v, false);
    CHECK(landmark_consistency(random_tensor({v, v}, rng, -3, 3), none).item() == 0);
  }
  SUBCASE("monotone in the correct logit") {
    std::mt19937_64 rng(9);
    const Tensor base = random_tensor({v, v}, rng, -2, 2);
    std::vector<bool> vis(v, true);
    vis[3] = false;
    Real previous = landmark_consistency(base, vis).item();
    std::vector<Real> l(base.data().begin(), base.data().end());
    for (int step = 0; step < 5; ++step) {
      l[std::size_t(7 * v + 7)] += Real(0.5);
      const Real value = landmark_consistency(Tensor::from({v, v}, l), vis).item();
      CHECK(value < previous);
      previous = value;
    }
  }
}

TEST_CASE("total loss") {
  auto bundle = [](Real img, Real sil, Real l3d, Real lc) {
    return ModelLosses{Tensor::scalar(img), Tensor::scalar(sil),
                       Tensor::scalar(l3d), Tensor::scalar(lc)};
  };
  const LossWeights w;
  const auto m1 = bundle(3, 0.4, 0.2, 50), m2 = bundle(5, 0.1, 0.7, 20);
  CHECK(total_loss(m1, m2, w).item() == doctest::Approx(total_loss(m2, m1, w).item()));
  CHECK(total_loss(bundle(0, 0, 0, 0), bundle(0, 0, 0, 0), w).item() == 0);
  LossWeights w2d = w;
  w2d.l3d = w2d.lc = 0;
  const Real expected = w2d.l2d * 0.5 *
                        ((w.img * 3 + w.sil * 0.4) + (w.img * 5 + w.sil * 0.1));
  CHECK(total_loss(m1, m2, w2d).item() == doctest::Approx(expected));
}

TEST_CASE("loss weights validation") {
  LossWeights w;
  CHECK_NOTHROW(w.validate());
  w.l3d = -1;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  w.l3d = std::nan("");
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}
