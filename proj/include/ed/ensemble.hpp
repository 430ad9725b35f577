#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ed/error.hpp"

namespace ed {

// All ensemble arithmetic is carried out in double precision, whatever the
// precision of the backend's logits.
using LogitVector = std::vector<double>;
using ProbVector = std::vector<double>;

/// Tokens that survive the plausibility constraint.
struct TokenMask {
  std::vector<bool> allowed;

  std::size_t size() const { return allowed.size(); }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(allowed.begin(), allowed.end(), true));
  }
  bool contains(std::size_t token) const { return token < allowed.size() && allowed[token]; }

  static TokenMask full(std::size_t vocab) { return {std::vector<bool>(vocab, true)}; }
};

namespace detail {

inline void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw InputError(std::string(what) + " contains a non-finite value");
  }
}

inline void require_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
}

}  // namespace detail

inline ProbVector softmax(std::span<const double> logits) {
  if (logits.empty()) throw InputError("cannot take softmax of an empty vector");
  const double top = *std::max_element(logits.begin(), logits.end());
  ProbVector p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

/// softmax[(1 - alpha) * orig + alpha * sum_k subs[k] * f[k]]
inline ProbVector ensemble_logits(std::span<const double> orig,
                                  std::span<const LogitVector> subs,
                                  std::span<const double> f, double alpha) {
  detail::require_alpha(alpha);
  if (subs.size() != f.size()) {
    throw InputError("got " + std::to_string(subs.size()) + " sub-image logit vectors but " +
                     std::to_string(f.size()) + " weights");
  }
  detail::require_finite(orig, "original logits");
  detail::require_finite(f, "weights");
  for (const auto& s : subs) {
    if (s.size() != orig.size()) throw InputError("sub-image logits differ in vocabulary size");
    detail::require_finite(s, "sub-image logits");
  }

  LogitVector mixed(orig.size());
  for (std::size_t v = 0; v < orig.size(); ++v) {
    double acc = 0.0;
    for (std::size_t k = 0; k < subs.size(); ++k) acc += subs[k][v] * f[k];
    mixed[v] = (1.0 - alpha) * orig[v] + alpha * acc;
  }
  return softmax(mixed);
}

/// softmax[(1 - alpha) * orig + alpha * best_sub]
inline ProbVector fast_ed(std::span<const double> orig, std::span<const double> best_sub,
                          double alpha) {
  detail::require_alpha(alpha);
  if (orig.size() != best_sub.size()) {
    throw InputError("sub-image logits differ in vocabulary size");
  }
  detail::require_finite(orig, "original logits");
  detail::require_finite(best_sub, "sub-image logits");

  LogitVector mixed(orig.size());
  for (std::size_t v = 0; v < orig.size(); ++v) {
    mixed[v] = (1.0 - alpha) * orig[v] + alpha * best_sub[v];
  }
  return softmax(mixed);
}

/// Keeps token y iff sum_k p_k(y) >= beta * max_w sum_k p_k(w) * f_k.
///
/// The left-hand side is unweighted unless `weighted_lhs` is set, in which
/// case f_k multiplies both sides.
inline TokenMask ed_plausibility_mask(std::span<const ProbVector> sub_probs,
                                      std::span<const double> f, double beta,
                                      bool weighted_lhs = false) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw ConfigError("beta must lie in [0, 1], got " + std::to_string(beta));
  }
  if (sub_probs.empty() || sub_probs.size() != f.size()) {
    throw InputError("plausibility mask needs one weight per sub-image distribution");
  }
  const std::size_t vocab = sub_probs.front().size();
  for (const auto& p : sub_probs) {
    if (p.size() != vocab) throw InputError("sub-image distributions differ in vocabulary size");
  }

  std::vector<double> lhs(vocab, 0.0);
  double rhs_max = 0.0;
  for (std::size_t y = 0; y < vocab; ++y) {
    double plain = 0.0;
    double weighted = 0.0;
    for (std::size_t k = 0; k < sub_probs.size(); ++k) {
      plain += sub_probs[k][y];
      weighted += sub_probs[k][y] * f[k];
    }
    lhs[y] = weighted_lhs ? weighted : plain;
    rhs_max = std::max(rhs_max, weighted);
  }

  const double threshold = beta * rhs_max;
  TokenMask mask{std::vector<bool>(vocab, false)};
  for (std::size_t y = 0; y < vocab; ++y) mask.allowed[y] = lhs[y] >= threshold;
  return mask;
}

/// Zeroes tokens outside the mask and, if asked, rescales the rest to sum to 1.
/// Should every surviving token carry zero mass, the mass is spread uniformly
/// over the mask.
inline ProbVector apply_mask(std::span<const double> p, const TokenMask& mask, bool renormalize = true) {
  if (mask.size() != p.size()) throw InputError("mask and distribution differ in size");
  const std::size_t kept_count = mask.count();
  if (kept_count == 0) throw InternalError("plausibility mask is empty");

  ProbVector out(p.begin(), p.end());
  double kept = 0.0;
  for (std::size_t y = 0; y < out.size(); ++y) {
    if (!mask.allowed[y]) out[y] = 0.0;
    kept += out[y];
  }
  if (!renormalize) return out;
  if (kept <= 0.0) {
    for (std::size_t y = 0; y < out.size(); ++y) {
      out[y] = mask.allowed[y] ? 1.0 / static_cast<double>(kept_count) : 0.0;
    }
    return out;
  }
  for (double& v : out) v /= kept;
  return out;
}

struct EnsembleStep {
  ProbVector probs;
  TokenMask mask;
};

/// One full ensemble step: blend, constrain against the per-sub-image
/// distributions, zero and (optionally) renormalize.
inline EnsembleStep ed_step(std::span<const double> orig, std::span<const LogitVector> subs,
                            std::span<const double> f, double alpha, double beta,
                            bool weighted_lhs = false, bool renormalize = true) {
  ProbVector blended = ensemble_logits(orig, subs, f, alpha);
  std::vector<ProbVector> sub_probs;
  sub_probs.reserve(subs.size());
  for (const auto& s : subs) sub_probs.push_back(softmax(s));
  TokenMask mask = ed_plausibility_mask(sub_probs, f, beta, weighted_lhs);
  ProbVector probs = apply_mask(blended, mask, renormalize);
  return {std::move(probs), std::move(mask)};
}

}  // namespace ed
