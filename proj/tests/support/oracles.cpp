#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

namespace oracle {

Dice dice(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& label, std::size_t classes) {
  Dice out;
  for (std::size_t c = 0; c < classes; ++c) {
    std::set<std::size_t> p, g, both;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == c) p.insert(i);
      if (label[i] == c) g.insert(i);
    }
    std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::inserter(both, both.begin()));
    const double d = (p.empty() && g.empty()) ? 1.0 : 2.0 * double(both.size()) / double(p.size() + g.size());
    out.per_class.push_back(d);
  }
  out.mean = std::accumulate(out.per_class.begin(), out.per_class.end(), 0.0) / double(classes);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == label[i];
  out.accuracy = double(hit) / double(pred.size());
  return out;
}

double weighted_ce(const std::vector<double>& probs, std::size_t classes, const std::vector<std::uint8_t>& label,
                   const std::vector<double>& weights) {
  const std::size_t n = label.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      const double g = label[i] == c ? 1.0 : 0.0;
      const double p = std::clamp(probs[c * n + i], 1e-12, 1.0);
      sum += weights[c] * g * std::log(p);
    }
  }
  return -sum / double(n);
}

std::vector<double> mean_probability(const segtriage::ProbabilityStack& stack) {
  const std::size_t n = stack.pixels();
  std::vector<double> out(stack.classes() * n, 0.0);
  for (std::size_t c = 0; c < stack.classes(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t t = 0; t < stack.passes(); ++t) s += stack.at(t, c, i);
      out[c * n + i] = s / double(stack.passes());
    }
  }
  return out;
}

std::vector<std::uint8_t> argmax(const std::vector<double>& probs, std::size_t classes) {
  const std::size_t n = probs.size() / classes;
  std::vector<std::uint8_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (probs[c * n + i] > probs[best * n + i]) best = c;
    }
    out[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

std::vector<double> normal_equations(const std::vector<double>& predictors, std::size_t k,
                                     const std::vector<double>& y) {
  const std::size_t n = y.size();
  const std::size_t p = k + 1;
  auto x = [&](std::size_t i, std::size_t j) -> long double {
    return j == 0 ? 1.0L : static_cast<long double>(predictors[i * k + (j - 1)]);
  };
  // Augmented [X'X | X'y].
  std::vector<std::vector<long double>> a(p, std::vector<long double>(p + 1, 0.0L));
  for (std::size_t r = 0; r < p; ++r) {
    for (std::size_t c = 0; c < p; ++c) {
      for (std::size_t i = 0; i < n; ++i) a[r][c] += x(i, r) * x(i, c);
    }
    for (std::size_t i = 0; i < n; ++i) a[r][p] += x(i, r) * static_cast<long double>(y[i]);
  }
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < p; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    }
    if (a[piv][col] == 0.0L) throw std::runtime_error("oracle: singular normal equations");
    std::swap(a[col], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == col) continue;
      const long double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= p; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<double> b(p);
  for (std::size_t r = 0; r < p; ++r) b[r] = static_cast<double>(a[r][p] / a[r][r]);
  return b;
}

double forwarded_performance(const std::vector<double>& quality, const std::vector<std::size_t>& order,
                             std::size_t k) {
  std::vector<double> q = quality;
  for (std::size_t j = 0; j < k; ++j) q[order[j]] = 1.0;
  return std::accumulate(q.begin(), q.end(), 0.0) / double(q.size());
}

}  // namespace oracle

namespace fixture {

segtriage::ClassSpec spec_of(std::size_t classes) {
  segtriage::ClassSpec spec;
  for (std::size_t c = 0; c < classes; ++c) spec.class_names.push_back(c == 0 ? "background" : "c" + std::to_string(c));
  return spec;
}

segtriage::ProbabilityStack random_stack(std::mt19937_64& rng, std::size_t t, std::size_t c, std::size_t h,
                                         std::size_t w) {
  segtriage::ProbabilityStack stack(t, c, h, w);
  std::exponential_distribution<double> draw(1.0);
  std::vector<double> v(c);
  for (std::size_t pass = 0; pass < t; ++pass) {
    for (std::size_t i = 0; i < h * w; ++i) {
      double s = 0.0;
      for (auto& x : v) s += (x = draw(rng));
      for (std::size_t k = 0; k < c; ++k) stack.at(pass, k, i) = static_cast<float>(v[k] / s);
    }
  }
  return stack;
}

segtriage::Bundle random_bundle(std::mt19937_64& rng) {
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  const std::size_t t = pick(1, 4), c = pick(2, 6), h = pick(1, 12), w = pick(1, 12);
  segtriage::Bundle b;
  b.image_id = "img-" + std::to_string(rng() % 100000);
  b.class_spec = spec_of(c);
  b.class_spec.background_index = pick(0, c - 1);
  b.probabilities = random_stack(rng, t, c, h, w);
  if (rng() & 1) {
    segtriage::LabelMap label(h, w);
    for (auto& v : label.values) v = static_cast<std::uint8_t>(pick(0, c - 1));
    b.label = label;
  }
  if (rng() & 1) {
    segtriage::RgbImage img{h, w, std::vector<std::uint8_t>(h * w * 3)};
    for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng());
    b.source_image = img;
  }
  if (rng() & 1) b.meta["origin"] = "fixture";
  return b;
}

}  // namespace fixture
