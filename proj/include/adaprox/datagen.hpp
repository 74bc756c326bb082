#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "adaprox/rng.hpp"
#include "adaprox/types.hpp"

// Synthetic scenes for the two benchmark families. Every draw goes through a
// named RandomStream in a fixed loop order, so a (seed, params) pair pins the
// scene down exactly on any platform. Images are flattened row-major:
// pixel (x, y) of a height×width frame lands at column y·width + x.

namespace adaprox {

struct NmfSceneParams {
  Index components = 3;     // K
  Index samples = 50;       // N
  Index observations = 100; // C
  double noise_sigma = 0.02;
};

struct NmfScene {
  Matrix s_true;  // K×N, clipped sinusoids
  Matrix a_true;  // C×K, uniform [0,1) weights
  Matrix y;       // C×N, A·S plus iid Gaussian noise
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

// Component k is a non-negative clipped sinusoid
//   s_k(n) = max(0, a_k + b_k·sin(2π f_k n/N + φ_k))
// with offsets in [0.4, 0.8), amplitudes in [0.2, 0.6), and frequency drawn
// from the band [0.5+k, 1.5+k) so no two components can share a frequency.
inline NmfScene make_nmf_scene(std::uint64_t seed,
                               const NmfSceneParams& params = {}) {
  if (params.components < 1 || params.samples < 1 || params.observations < 1) {
    throw std::invalid_argument("make_nmf_scene: dimensions must be >= 1");
  }
  if (params.noise_sigma < 0.0) {
    throw std::invalid_argument("make_nmf_scene: noise_sigma must be >= 0");
  }
  RandomStream comp_rng(seed, "nmf.components");
  RandomStream mix_rng(seed, "nmf.mixing");
  RandomStream noise_rng(seed, "nmf.noise");

  NmfScene scene;
  scene.seed = seed;
  scene.noise_sigma = params.noise_sigma;

  const Index k_n = params.components;
  const Index n_n = params.samples;
  const Index c_n = params.observations;
  const double two_pi = 2.0 * std::numbers::pi;

  scene.s_true.resize(k_n, n_n);
  for (Index k = 0; k < k_n; ++k) {
    const double offset = comp_rng.uniform(0.4, 0.8);
    const double amplitude = comp_rng.uniform(0.2, 0.6);
    const double freq = comp_rng.uniform(0.5 + double(k), 1.5 + double(k));
    const double phase = comp_rng.uniform(0.0, two_pi);
    for (Index n = 0; n < n_n; ++n) {
      const double arg = two_pi * freq * double(n) / double(n_n) + phase;
      scene.s_true(k, n) =
          std::max(0.0, offset + amplitude * std::sin(arg));
    }
  }

  scene.a_true.resize(c_n, k_n);
  for (Index c = 0; c < c_n; ++c) {
    for (Index k = 0; k < k_n; ++k) scene.a_true(c, k) = mix_rng.uniform();
  }

  scene.y = scene.a_true * scene.s_true;
  if (params.noise_sigma > 0.0) {
    for (Index c = 0; c < c_n; ++c) {
      for (Index n = 0; n < n_n; ++n) {
        scene.y(c, n) += noise_rng.normal(0.0, params.noise_sigma);
      }
    }
  }
  return scene;
}

struct AstroSource {
  double cx = 0.0;     // center, pixel coordinates (x along width)
  double cy = 0.0;
  double sigma = 1.0;  // Gaussian width in pixels
  double flux = 0.0;   // total flux summed over bands
  Vector sed;          // per-band fractions, sums to 1
};

struct AstroSceneParams {
  Index bands = 5;    // C
  Index height = 30;
  Index width = 30;
  Index sources = 7;  // K
  double sigma_min = 1.0;
  double sigma_max = 10.0;
  double flux_per_sigma_sq = 100.0;  // flux_k = this · sigma_k²
  double peak_snr = 20.0;            // brightest pixel over mid-band noise
};

struct AstroScene {
  Index height = 0;
  Index width = 0;
  Matrix s_true;      // K×N unit-sum source maps, N = height·width
  Matrix a_true;      // C×K amplitudes, a(l,k) = flux_k · sed_k(l)
  Matrix y;           // C×N noisy bands
  Vector band_sigma;  // per-band noise level
  std::vector<AstroSource> sources;
  std::uint64_t seed = 0;
};

// Discretely normalized Gaussian blob: exp(−r²/2σ²) over the pixel grid,
// scaled to sum to exactly 1.
inline Vector gaussian_map(Index height, Index width, double cx, double cy,
                           double sigma) {
  if (height < 1 || width < 1 || !(sigma > 0.0)) {
    throw std::invalid_argument("gaussian_map: bad frame or width");
  }
  Vector g(height * width);
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const double dx = double(x) - cx;
      const double dy = double(y) - cy;
      g(y * width + x) = std::exp(-(dx * dx + dy * dy) * inv_two_sigma_sq);
    }
  }
  g /= g.sum();
  return g;
}

// Bright extended sources dominate over faint compact ones (flux ∝ σ²), and
// the per-band noise levels are log-spaced over a factor of 2 around the
// level set by peak_snr, so the bands are heteroscedastic but comparable.
// Per-source draw order: cx, cy, sigma, then one SED weight per band.
inline AstroScene make_astro_scene(std::uint64_t seed,
                                   const AstroSceneParams& params = {}) {
  if (params.bands < 1 || params.height < 1 || params.width < 1 ||
      params.sources < 1) {
    throw std::invalid_argument("make_astro_scene: dimensions must be >= 1");
  }
  if (!(params.sigma_min > 0.0) || params.sigma_max < params.sigma_min) {
    throw std::invalid_argument("make_astro_scene: bad sigma range");
  }
  if (!(params.peak_snr > 0.0)) {
    throw std::invalid_argument("make_astro_scene: peak_snr must be > 0");
  }
  RandomStream src_rng(seed, "astro.sources");
  RandomStream noise_rng(seed, "astro.noise");

  AstroScene scene;
  scene.seed = seed;
  scene.height = params.height;
  scene.width = params.width;

  const Index c_n = params.bands;
  const Index k_n = params.sources;
  const Index n_n = params.height * params.width;

  scene.s_true.resize(k_n, n_n);
  scene.a_true.resize(c_n, k_n);
  scene.sources.reserve(std::size_t(k_n));
  for (Index k = 0; k < k_n; ++k) {
    AstroSource src;
    src.cx = src_rng.uniform(0.0, double(params.width - 1));
    src.cy = src_rng.uniform(0.0, double(params.height - 1));
    src.sigma = src_rng.log_uniform(params.sigma_min, params.sigma_max);
    src.flux = params.flux_per_sigma_sq * src.sigma * src.sigma;
    src.sed.resize(c_n);
    for (Index l = 0; l < c_n; ++l) src.sed(l) = src_rng.uniform(0.2, 1.0);
    src.sed /= src.sed.sum();

    scene.s_true.row(k) =
        gaussian_map(params.height, params.width, src.cx, src.cy, src.sigma)
            .transpose();
    for (Index l = 0; l < c_n; ++l) {
      scene.a_true(l, k) = src.flux * src.sed(l);
    }
    scene.sources.push_back(std::move(src));
  }

  const Matrix noiseless = scene.a_true * scene.s_true;
  const double base_sigma = noiseless.maxCoeff() / params.peak_snr;
  scene.band_sigma.resize(c_n);
  for (Index l = 0; l < c_n; ++l) {
    const double t = c_n > 1 ? double(l) / double(c_n - 1) - 0.5 : 0.0;
    scene.band_sigma(l) = base_sigma * std::exp2(t);
  }

  scene.y = noiseless;
  for (Index l = 0; l < c_n; ++l) {
    for (Index n = 0; n < n_n; ++n) {
      scene.y(l, n) += noise_rng.normal(0.0, scene.band_sigma(l));
    }
  }
  return scene;
}

struct NmfInit {
  Matrix a0;
  Matrix s0;
};

// Uniform [0,1) starting factors; A is filled first, both row by row.
inline NmfInit init_nmf(std::uint64_t seed, Index observations,
                        Index components, Index samples) {
  RandomStream rng(seed, "init.nmf");
  NmfInit init;
  init.a0.resize(observations, components);
  for (Index c = 0; c < observations; ++c) {
    for (Index k = 0; k < components; ++k) init.a0(c, k) = rng.uniform();
  }
  init.s0.resize(components, samples);
  for (Index k = 0; k < components; ++k) {
    for (Index n = 0; n < samples; ++n) init.s0(k, n) = rng.uniform();
  }
  return init;
}

struct AstroInit {
  Matrix a0;  // C×K amplitude guesses from the noisy frames
  Matrix s0;  // K×N unit-sum maps at the assumed centers/sizes
  std::vector<AstroSource> assumed;
};

// Warm start from imperfect catalog knowledge: each center is shifted by up
// to a quarter of the true width per axis, each width is off by up to ±50%.
// Amplitudes come from the noisy frames: the pixel nearest the assumed
// center, clamped non-negative, converted from peak to total flux under the
// assumed profile (× 2πσ'², since a unit-flux width-σ' Gaussian peaks at
// 1/2πσ'²). Per-source draw order: dx, dy, width factor.
inline AstroInit init_astro(const AstroScene& scene, std::uint64_t seed) {
  if (scene.sources.empty() || scene.y.size() == 0) {
    throw std::invalid_argument("init_astro: scene has no sources or data");
  }
  RandomStream rng(seed, "init.astro");
  const Index c_n = scene.y.rows();
  const Index k_n = Index(scene.sources.size());
  const Index n_n = scene.height * scene.width;
  if (scene.y.cols() != n_n) {
    throw std::invalid_argument("init_astro: frame shape mismatch");
  }

  AstroInit init;
  init.a0.resize(c_n, k_n);
  init.s0.resize(k_n, n_n);
  init.assumed.reserve(std::size_t(k_n));
  for (Index k = 0; k < k_n; ++k) {
    const AstroSource& truth = scene.sources[std::size_t(k)];
    AstroSource guess;
    const double shift = truth.sigma / 4.0;
    guess.cx = std::clamp(truth.cx + rng.uniform(-shift, shift), 0.0,
                          double(scene.width - 1));
    guess.cy = std::clamp(truth.cy + rng.uniform(-shift, shift), 0.0,
                          double(scene.height - 1));
    guess.sigma = truth.sigma * (1.0 + rng.uniform(-0.5, 0.5));

    init.s0.row(k) =
        gaussian_map(scene.height, scene.width, guess.cx, guess.cy,
                     guess.sigma)
            .transpose();

    const Index px = Index(std::llround(guess.cx));
    const Index py = Index(std::llround(guess.cy));
    const Index pixel = py * scene.width + px;
    const double peak_to_flux =
        2.0 * std::numbers::pi * guess.sigma * guess.sigma;
    for (Index l = 0; l < c_n; ++l) {
      init.a0(l, k) = std::max(0.0, scene.y(l, pixel)) * peak_to_flux;
    }

    guess.flux = init.a0.col(k).sum();
    guess.sed = guess.flux > 0.0
                    ? Vector(init.a0.col(k) / guess.flux)
                    : Vector(Vector::Constant(c_n, 1.0 / double(c_n)));
    init.assumed.push_back(std::move(guess));
  }
  return init;
}

}  // namespace adaprox
