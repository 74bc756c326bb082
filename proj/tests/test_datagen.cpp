#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "adaprox/datagen.hpp"

using namespace adaprox;

TEST_CASE("factorization scene has the advertised shapes") {
  const NmfScene scene = make_nmf_scene(42);
  REQUIRE(scene.s_true.rows() == 3);
  REQUIRE(scene.s_true.cols() == 50);
  REQUIRE(scene.a_true.rows() == 100);
  REQUIRE(scene.a_true.cols() == 3);
  REQUIRE(scene.y.rows() == 100);
  REQUIRE(scene.y.cols() == 50);
  REQUIRE(scene.seed == 42);
  REQUIRE(scene.noise_sigma == 0.02);
}

TEST_CASE("scene components are non-negative and mixing weights are in [0,1)") {
  const NmfScene scene = make_nmf_scene(7);
  REQUIRE(scene.s_true.minCoeff() >= 0.0);
  REQUIRE(scene.a_true.minCoeff() >= 0.0);
  REQUIRE(scene.a_true.maxCoeff() < 1.0);
}

TEST_CASE("zero noise reproduces the product exactly") {
  NmfSceneParams params;
  params.noise_sigma = 0.0;
  const NmfScene scene = make_nmf_scene(3, params);
  REQUIRE(scene.y == Matrix(scene.a_true * scene.s_true));
}

TEST_CASE("scene generation is deterministic in the seed") {
  const NmfScene a = make_nmf_scene(11);
  const NmfScene b = make_nmf_scene(11);
  REQUIRE(a.y == b.y);
  REQUIRE(a.s_true == b.s_true);
  REQUIRE(a.a_true == b.a_true);
  const NmfScene c = make_nmf_scene(12);
  REQUIRE(a.y != c.y);
}

TEST_CASE("noise level matches the requested sigma") {
  NmfSceneParams params;
  params.observations = 200;
  params.samples = 200;
  const NmfScene noisy = make_nmf_scene(5, params);
  params.noise_sigma = 0.0;
  const NmfScene clean = make_nmf_scene(5, params);
  const Matrix resid = noisy.y - clean.y;
  const double std_dev = std::sqrt(resid.squaredNorm() / double(resid.size()));
  REQUIRE(std_dev == Catch::Approx(0.02).epsilon(0.05));
}

TEST_CASE("scene parameters are validated") {
  NmfSceneParams params;
  params.components = 0;
  REQUIRE_THROWS_AS(make_nmf_scene(1, params), std::invalid_argument);
  params = {};
  params.noise_sigma = -0.1;
  REQUIRE_THROWS_AS(make_nmf_scene(1, params), std::invalid_argument);
}

TEST_CASE("gaussian maps are normalized and centered") {
  const Vector g = gaussian_map(9, 9, 4.0, 4.0, 1.5);
  REQUIRE(g.size() == 81);
  REQUIRE(g.sum() == Catch::Approx(1.0).epsilon(1e-12));
  REQUIRE(g.minCoeff() >= 0.0);
  // the center pixel (x=4, y=4) holds the peak
  Index arg_max = 0;
  g.maxCoeff(&arg_max);
  REQUIRE(arg_max == 4 * 9 + 4);
}

TEST_CASE("gaussian map rejects degenerate input") {
  REQUIRE_THROWS_AS(gaussian_map(0, 5, 1.0, 1.0, 1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(gaussian_map(5, 5, 1.0, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("imaging scene has consistent shapes and positive noise levels") {
  const AstroScene scene = make_astro_scene(9);
  REQUIRE(scene.height == 30);
  REQUIRE(scene.width == 30);
  REQUIRE(scene.s_true.rows() == 7);
  REQUIRE(scene.s_true.cols() == 900);
  REQUIRE(scene.a_true.rows() == 5);
  REQUIRE(scene.a_true.cols() == 7);
  REQUIRE(scene.y.rows() == 5);
  REQUIRE(scene.y.cols() == 900);
  REQUIRE(scene.band_sigma.size() == 5);
  REQUIRE(scene.band_sigma.minCoeff() > 0.0);
  REQUIRE(scene.sources.size() == 7);
}

TEST_CASE("source maps are unit-sum and non-negative") {
  const AstroScene scene = make_astro_scene(13);
  for (Index k = 0; k < scene.s_true.rows(); ++k) {
    REQUIRE(scene.s_true.row(k).sum() == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(scene.s_true.row(k).minCoeff() >= 0.0);
  }
}

TEST_CASE("source flux scales with the square of its width") {
  const AstroScene scene = make_astro_scene(17);
  for (const AstroSource& src : scene.sources) {
    REQUIRE(src.flux ==
            Catch::Approx(100.0 * src.sigma * src.sigma).epsilon(1e-12));
    REQUIRE(src.sigma >= 1.0);
    REQUIRE(src.sigma <= 10.0);
    REQUIRE(src.sed.sum() == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(src.sed.minCoeff() > 0.0);
  }
}

TEST_CASE("amplitudes split each source flux by its spectrum") {
  const AstroScene scene = make_astro_scene(19);
  for (Index k = 0; k < scene.a_true.cols(); ++k) {
    const AstroSource& src = scene.sources[std::size_t(k)];
    REQUIRE(scene.a_true.col(k).sum() ==
            Catch::Approx(src.flux).epsilon(1e-10));
    for (Index l = 0; l < scene.a_true.rows(); ++l) {
      REQUIRE(scene.a_true(l, k) ==
              Catch::Approx(src.flux * src.sed(l)).epsilon(1e-12));
    }
  }
}

TEST_CASE("band noise levels are log-spaced over a factor of two") {
  const AstroScene scene = make_astro_scene(23);
  const Vector& sig = scene.band_sigma;
  REQUIRE(sig(4) / sig(0) == Catch::Approx(2.0).epsilon(1e-12));
  // equal ratios between adjacent bands
  for (Index l = 1; l + 1 < sig.size(); ++l) {
    REQUIRE(sig(l + 1) / sig(l) ==
            Catch::Approx(sig(1) / sig(0)).epsilon(1e-12));
  }
}

TEST_CASE("imaging scene is deterministic in the seed") {
  const AstroScene a = make_astro_scene(29);
  const AstroScene b = make_astro_scene(29);
  REQUIRE(a.y == b.y);
  REQUIRE(a.s_true == b.s_true);
  REQUIRE(a.a_true == b.a_true);
  REQUIRE(a.band_sigma == b.band_sigma);
}

TEST_CASE("starting factors are uniform, deterministic, and distinct by seed") {
  const NmfInit i1 = init_nmf(42, 100, 3, 50);
  REQUIRE(i1.a0.rows() == 100);
  REQUIRE(i1.a0.cols() == 3);
  REQUIRE(i1.s0.rows() == 3);
  REQUIRE(i1.s0.cols() == 50);
  REQUIRE(i1.a0.minCoeff() >= 0.0);
  REQUIRE(i1.a0.maxCoeff() < 1.0);
  REQUIRE(i1.s0.minCoeff() >= 0.0);
  REQUIRE(i1.s0.maxCoeff() < 1.0);

  const NmfInit i2 = init_nmf(42, 100, 3, 50);
  REQUIRE(i1.a0 == i2.a0);
  REQUIRE(i1.s0 == i2.s0);
  const NmfInit i3 = init_nmf(43, 100, 3, 50);
  REQUIRE(i1.a0 != i3.a0);
}

TEST_CASE("imaging warm start perturbs the catalog within its stated bounds") {
  const AstroScene scene = make_astro_scene(31);
  const AstroInit init = init_astro(scene, 31);
  REQUIRE(init.a0.rows() == 5);
  REQUIRE(init.a0.cols() == 7);
  REQUIRE(init.s0.rows() == 7);
  REQUIRE(init.s0.cols() == 900);
  REQUIRE(init.assumed.size() == 7);
  REQUIRE(init.a0.minCoeff() >= 0.0);

  for (std::size_t k = 0; k < init.assumed.size(); ++k) {
    const AstroSource& truth = scene.sources[k];
    const AstroSource& guess = init.assumed[k];
    REQUIRE(std::abs(guess.cx - truth.cx) <= truth.sigma / 4.0 + 1e-12);
    REQUIRE(std::abs(guess.cy - truth.cy) <= truth.sigma / 4.0 + 1e-12);
    REQUIRE(guess.sigma >= 0.5 * truth.sigma - 1e-12);
    REQUIRE(guess.sigma <= 1.5 * truth.sigma + 1e-12);
  }

  // starting maps carry the same unit-sum normalization as the truth
  for (Index k = 0; k < init.s0.rows(); ++k) {
    REQUIRE(init.s0.row(k).sum() == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(init.s0.row(k).minCoeff() >= 0.0);
  }

  // determinism
  const AstroInit again = init_astro(scene, 31);
  REQUIRE(init.a0 == again.a0);
  REQUIRE(init.s0 == again.s0);
}

TEST_CASE("warm-start amplitudes convert the observed peak to a flux") {
  const AstroScene scene = make_astro_scene(37);
  const AstroInit init = init_astro(scene, 37);
  for (Index k = 0; k < init.a0.cols(); ++k) {
    const AstroSource& guess = init.assumed[std::size_t(k)];
    const Index px = Index(std::llround(guess.cx));
    const Index py = Index(std::llround(guess.cy));
    const Index pixel = py * scene.width + px;
    const double factor = 2.0 * std::numbers::pi * guess.sigma * guess.sigma;
    for (Index l = 0; l < init.a0.rows(); ++l) {
      REQUIRE(init.a0(l, k) ==
              std::max(0.0, scene.y(l, pixel)) * factor);
    }
  }
}

TEST_CASE("warm start validates the scene") {
  AstroScene empty;
  REQUIRE_THROWS_AS(init_astro(empty, 1), std::invalid_argument);
}
