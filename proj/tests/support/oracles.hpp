#pragma once

// Brute-force reference implementations. Deliberately naive and independent of core/.

#include <cstdint>
#include <random>
#include <vector>

#include "segtriage/bundle.hpp"

namespace oracle {

struct Dice {
  std::vector<double> per_class;
  double mean = 0.0;
  double accuracy = 0.0;
};

// Set-based Dice over flat class rasters.
Dice dice(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& label, std::size_t classes);

// probs is C x N (class-major), label N; literal triple loop over pixels, classes, one-hot.
double weighted_ce(const std::vector<double>& probs, std::size_t classes, const std::vector<std::uint8_t>& label,
                   const std::vector<double>& weights);

// Mean over passes for a T x C x N stack; returns C x N.
std::vector<double> mean_probability(const segtriage::ProbabilityStack& stack);

// Argmax per pixel over a C x N map, scanning every class.
std::vector<std::uint8_t> argmax(const std::vector<double>& probs, std::size_t classes);

double entropy(const std::vector<double>& p);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Solves (X'X) b = X'y by Gauss-Jordan elimination in long double. X is n x (k+1)
// with a leading column of ones built from the n x k predictors.
std::vector<double> normal_equations(const std::vector<double>& predictors, std::size_t k,
                                     const std::vector<double>& y);

// Curve value when the first k entries of `order` are replaced by 1.
double forwarded_performance(const std::vector<double>& quality, const std::vector<std::size_t>& order,
                             std::size_t k);

}  // namespace oracle

namespace fixture {

// Valid bundle with random dims (T 1..4, C 2..6, H,W 1..12) and optional label/source/meta.
segtriage::Bundle random_bundle(std::mt19937_64& rng);

// Random softmax stack, normalized in double then stored as float.
segtriage::ProbabilityStack random_stack(std::mt19937_64& rng, std::size_t t, std::size_t c, std::size_t h,
                                         std::size_t w);

segtriage::ClassSpec spec_of(std::size_t classes);

}  // namespace fixture
