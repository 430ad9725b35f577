#pragma once

// Deliberately plain reference implementations used as test oracles. They
// share no code with the library beyond data types and the stateless
// synthetic model, and favour directness over speed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include "ed/attention.hpp"
#include "ed/image.hpp"
#include "ed/synthetic_backend.hpp"

namespace oracle {

// p_i = 1 / sum_j exp(x_j - x_i)
inline std::vector<double> softmax(const std::vector<double>& x) {
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) denom += std::exp(x[j] - x[i]);
    p[i] = 1.0 / denom;
  }
  return p;
}

struct EdResult {
  std::vector<double> probs;
  std::vector<bool> allowed;
};

inline EdResult ed_step(const std::vector<double>& orig, const std::vector<std::vector<double>>& subs,
                        const std::vector<double>& f, double alpha, double beta, bool weighted_lhs) {
  const std::size_t vocab = orig.size();
  std::vector<double> z(vocab);
  for (std::size_t v = 0; v < vocab; ++v) {
    double ens = 0.0;
    for (std::size_t k = 0; k < subs.size(); ++k) ens += f[k] * subs[k][v];
    z[v] = (1.0 - alpha) * orig[v] + alpha * ens;
  }
  std::vector<double> p = softmax(z);

  std::vector<std::vector<double>> sp;
  for (const auto& s : subs) sp.push_back(softmax(s));
  double best = 0.0;
  for (std::size_t w = 0; w < vocab; ++w) {
    double r = 0.0;
    for (std::size_t k = 0; k < sp.size(); ++k) r += sp[k][w] * f[k];
    if (r > best) best = r;
  }
  EdResult out;
  out.allowed.assign(vocab, false);
  double kept = 0.0;
  for (std::size_t y = 0; y < vocab; ++y) {
    double l = 0.0;
    for (std::size_t k = 0; k < sp.size(); ++k) l += weighted_lhs ? sp[k][y] * f[k] : sp[k][y];
    out.allowed[y] = !(l < beta * best);
    if (out.allowed[y]) kept += p[y];
  }
  out.probs.assign(vocab, 0.0);
  for (std::size_t y = 0; y < vocab; ++y) {
    if (out.allowed[y]) out.probs[y] = p[y] / kept;
  }
  return out;
}

// Sort every index by descending mean, ties to the smaller index, and keep a
// prefix.
inline std::vector<int> ranked(const std::vector<double>& means, int keep) {
  std::vector<std::pair<double, int>> order;
  for (int i = 0; i < static_cast<int>(means.size()); ++i) order.emplace_back(-means[i], i);
  std::sort(order.begin(), order.end());
  std::vector<int> out;
  for (int i = 0; i < keep; ++i) out.push_back(order[i].second);
  return out;
}

template <typename T>
std::vector<double> refine(const ed::AttentionStack<T>& a, int K, int H) {
  const std::size_t P = a.patch_count();
  std::vector<double> layer_mean(a.layer_count, 0.0);
  for (int l = 0; l < a.layer_count; ++l) {
    double s = 0.0;
    for (int h = 0; h < a.head_count; ++h)
      for (std::size_t p = 0; p < P; ++p) s += a.at(l, h, p);
    layer_mean[l] = s / static_cast<double>(a.head_count * P);
  }
  const auto layers = ranked(layer_mean, K);

  std::vector<std::vector<double>> head_maps(a.head_count, std::vector<double>(P, 0.0));
  for (int h = 0; h < a.head_count; ++h)
    for (std::size_t p = 0; p < P; ++p) {
      double s = 0.0;
      for (int l : layers) s += a.at(l, h, p);
      head_maps[h][p] = s / K;
    }

  std::vector<double> head_mean(a.head_count, 0.0);
  for (int h = 0; h < a.head_count; ++h) {
    double s = 0.0;
    for (double v : head_maps[h]) s += v;
    head_mean[h] = s / static_cast<double>(P);
  }
  const auto heads = ranked(head_mean, H);

  std::vector<double> out(P, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    double s = 0.0;
    for (int h : heads) s += head_maps[h][p];
    out[p] = s / H;
  }
  return out;
}

// Tile k covers [x, x + c) x [y, y + c); a patch belongs to a tile when its
// center does.
inline std::vector<double> region_scores(const std::vector<double>& map, int d, int width, int height,
                                         const std::vector<std::pair<int, int>>& offsets, int c) {
  std::vector<double> s(offsets.size(), 0.0);
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        const double cx = (j + 0.5) * width / d;
        const double cy = (i + 0.5) * height / d;
        const auto [x, y] = offsets[k];
        if (cx >= x && cx < x + c && cy >= y && cy < y + c) s[k] += map[i * d + j];
      }
    }
  }
  return s;
}

inline std::vector<double> weights(const std::vector<double>& s, double tau) {
  std::vector<double> z(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) z[i] = s[i] / tau;
  return softmax(z);
}

struct Confusion {
  long tp = 0, fp = 0, tn = 0, fn = 0;
};

// gold/pred: 1 = yes, 0 = no, -1 = unparseable prediction.
inline Confusion confusion(const std::vector<int>& gold, const std::vector<int>& pred) {
  Confusion c;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool g = gold[i] == 1;
    if (pred[i] == 1 && g) ++c.tp;
    if (pred[i] == 1 && !g) ++c.fp;
    if (pred[i] == 0 && !g) ++c.tn;
    if (pred[i] == 0 && g) ++c.fn;
    if (pred[i] == -1 && g) ++c.fn;
    if (pred[i] == -1 && !g) ++c.fp;
  }
  return c;
}

// End-to-end greedy decoding that recomputes every model output from the full
// token history instead of keeping streams. Tiles and region membership are
// supplied by the caller, so only the decoding arithmetic is checked here.
struct GreedyInputs {
  ed::RawImage original;
  std::vector<ed::RawImage> tiles;
  std::vector<std::pair<int, int>> offsets;
  int tile_size = 336;
  std::vector<int> prompt;
  double alpha = 0.5, beta = 0.5, tau = 1e-2;
  int K = 3, H = 3;
  int max_tokens = 8;
  bool fast = false;
};

inline std::vector<int> greedy_decode(const GreedyInputs& in, const ed::SyntheticOptions& opt = {}) {
  const int eos = 0;
  std::vector<int> history = in.prompt;
  std::vector<int> out;
  auto widen = [](const std::vector<float>& v) { return std::vector<double>(v.begin(), v.end()); };
  for (int t = 0; t < in.max_tokens; ++t) {
    const auto o = ed::synth_forward(in.original, history, opt, true);
    const auto refined = refine(*o.attention, in.K, in.H);
    const auto s = region_scores(refined, opt.grid_side, in.original.width, in.original.height,
                                 in.offsets, in.tile_size);
    const auto f = weights(s, in.tau);
    std::vector<std::vector<double>> subs;
    for (const auto& tile : in.tiles) subs.push_back(widen(ed::synth_forward(tile, history, opt, false).logits));

    std::vector<double> p;
    if (in.fast) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < s.size(); ++k)
        if (s[k] > s[best]) best = k;
      std::vector<double> z(o.logits.size());
      for (std::size_t v = 0; v < z.size(); ++v) z[v] = (1 - in.alpha) * o.logits[v] + in.alpha * subs[best][v];
      p = softmax(z);
    } else {
      p = ed_step(widen(o.logits), subs, f, in.alpha, in.beta, false).probs;
    }
    int tok = 0;
    for (int v = 1; v < static_cast<int>(p.size()); ++v)
      if (p[v] > p[tok]) tok = v;
    out.push_back(tok);
    if (tok == eos) break;
    history.push_back(tok);
  }
  return out;
}

}  // namespace oracle
