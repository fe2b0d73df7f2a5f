#pragma once

#include <cstdint>
#include <span>

#include <random>

namespace pcedtr {

// Seeded-stream RNG: identical (seed, stream) pairs reproduce identical draw
// sequences regardless of how many streams run concurrently. Streams are
// single-owner; never share one across threads.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  double uniform();                     // open (0,1)
  double uniform(double a, double b);   // open (a,b)
  double normal();                      // standard normal via Phi^-1(u)
  double normal(double mu, double sd) { return mu + sd * normal(); }
  double gamma(double shape, double rate);
  double inverse_gamma(double shape, double scale);
  double beta(double a, double b);
  // index drawn proportional to non-negative, not necessarily normalized w
  int categorical(std::span<const double> w);

 private:
  std::mt19937_64 eng_;
  std::uint64_t seed_, stream_;
};

}  // namespace pcedtr
