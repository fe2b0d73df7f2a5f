#include "pcedtr/rng.hpp"

#include <cmath>

#include "pcedtr/errors.hpp"
#include "pcedtr/kernels.hpp"

namespace pcedtr {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream) {
  std::uint64_t s = seed ^ (0xD1B54A32D192ED03ULL * (stream + 1));
  std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(s)),
                    static_cast<std::uint32_t>(splitmix64(s) >> 32),
                    static_cast<std::uint32_t>(splitmix64(s)),
                    static_cast<std::uint32_t>(splitmix64(s) >> 32)};
  eng_.seed(seq);
}

double RngStream::uniform() {
  double u;
  do {
    u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  } while (u <= 0.0);
  return u;
}

double RngStream::uniform(double a, double b) { return a + (b - a) * uniform(); }

double RngStream::normal() { return kern::ndtri1(uniform()); }

double RngStream::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw NumericError("gamma: shape and rate must be positive");
  if (shape < 1.0) {
    // Marsaglia-Tsang boost for shape < 1
    const double u = uniform();
    return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v / rate;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

double RngStream::inverse_gamma(double shape, double scale) {
  return scale / gamma(shape, 1.0);
}

double RngStream::beta(double a, double b) {
  const double x = gamma(a, 1.0);
  const double y = gamma(b, 1.0);
  double r = x / (x + y);
  if (r <= 0.0) r = 1e-300;
  if (r >= 1.0) r = 1.0 - 1e-14;
  return r;
}

int RngStream::categorical(std::span<const double> w) {
  double total = 0.0;
  for (double wi : w) total += wi;
  if (!(total > 0.0))
    throw NumericError("categorical: weights sum to zero");
  double u = uniform() * total;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    u -= w[i];
    if (u <= 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(w.size()) - 1;
}

}  // namespace pcedtr
