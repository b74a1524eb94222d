#pragma once

// Synthetic datasets shared by the training tests and the acceptance suite,
// plus a test-side multinomial logistic probe used as an independent oracle
// for representation checks.

#include <cmath>
#include <string>
#include <vector>

#include "graphsense/corpus.hpp"
#include "graphsense/model.hpp"
#include "graphsense/rng.hpp"

namespace fixtures {

using namespace graphsense;

// Binary task separable through one indicator token: label-1 sentences carry
// "sigpos", label-0 sentences carry "signeg", padded with filler words from a
// vocabulary of 50.
inline std::vector<Sample> separable_dataset(std::size_t n, std::uint64_t seed,
                                             const std::string& id_prefix) {
  Rng rng = Rng(seed).substream("separable");
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    int label = static_cast<int>(i % 2);
    std::vector<std::string> words;
    words.push_back(label == 1 ? "sigpos" : "signeg");
    for (int k = 0; k < 5; ++k) {
      words.push_back("w" + std::to_string(rng.next_below(48)));
    }
    rng.shuffle(words);
    std::string text;
    for (const std::string& w : words) {
      if (!text.empty()) text += ' ';
      text += w;
    }
    out.push_back({id_prefix + std::to_string(i), text, label, Dialect::msa, Source::synthetic,
                   std::nullopt});
  }
  return out;
}

// A dataset where the label is the XOR of a text bit (visible only through
// the precomputed embedding) and a graph bit (visible only through sentence
// structure). Stratum sizes are fixed so either bit alone explains exactly
// 410/512 = 0.8007... of the labels; the optimal single-modality train
// accuracy is therefore capped at 0.801 by construction.
struct XorDataset {
  std::vector<Sample> samples;
  std::unordered_map<std::string, std::vector<double>> embeddings;          // encode the text bit
  std::unordered_map<std::string, std::vector<double>> constant_embeddings; // ablation table
  std::vector<int> text_bits, graph_bits;
};

inline XorDataset xor_dataset(std::size_t n, std::uint64_t seed) {
  // Counts for (t, g): tt = 4%, tf = 16%, ft = 16%, ff = rest.
  std::size_t tt = n * 4 / 100, tf = n * 16 / 100, ft = n * 16 / 100;
  std::vector<std::pair<int, int>> bits;
  bits.reserve(n);
  for (std::size_t i = 0; i < tt; ++i) bits.emplace_back(1, 1);
  for (std::size_t i = 0; i < tf; ++i) bits.emplace_back(1, 0);
  for (std::size_t i = 0; i < ft; ++i) bits.emplace_back(0, 1);
  while (bits.size() < n) bits.emplace_back(0, 0);
  Rng rng = Rng(seed).substream("xor");
  rng.shuffle(bits);

  XorDataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    auto [t, g] = bits[i];
    Sample s;
    s.id = "xor" + std::to_string(i);
    // Graph bit 1: a dense hub of all-digit words (4 nodes); bit 0: a 6-node
    // chain of letter words. Both the node features and the edge structure
    // carry the bit; neither is visible to the precomputed text embedding.
    s.text = g == 1 ? "90 91 90 92 90 93" : "aa bb cc dd ee ff";
    s.label = t ^ g;
    s.dialect = Dialect::msa;
    s.source = Source::synthetic;
    ds.samples.push_back(std::move(s));
    ds.embeddings["xor" + std::to_string(i)] = {t == 1 ? 1.0 : -1.0, 0.0, 0.0, 0.0};
    ds.constant_embeddings["xor" + std::to_string(i)] = {1.0, 0.0, 0.0, 0.0};
    ds.text_bits.push_back(t);
    ds.graph_bits.push_back(g);
  }
  return ds;
}

// The constant-graph sentence used by the text-only ablation.
inline std::string xor_constant_sentence() { return "c1 c2 c3"; }

// Five dialects, each marked by a dedicated token; the task label is carried
// by a dialect-independent signal token. Marker tokens share identical node
// features (same length, one digit each) so dialect identity can only enter
// through the text encoder's word identities.
inline std::vector<Sample> dialect_marker_dataset(std::size_t per_dialect, std::uint64_t seed) {
  Rng rng = Rng(seed).substream("dialect-markers");
  std::vector<Sample> out;
  std::size_t k = 0;
  for (Dialect d : kAllDialects) {
    for (std::size_t i = 0; i < per_dialect; ++i) {
      int label = static_cast<int>(i % 2);
      std::vector<std::string> words;
      words.push_back("m" + std::to_string(static_cast<int>(d)));
      words.push_back(label == 1 ? "sa" : "sb");
      for (int f = 0; f < 3; ++f) words.push_back("w" + std::to_string(rng.next_below(12)));
      rng.shuffle(words);
      std::string text;
      for (const std::string& w : words) {
        if (!text.empty()) text += ' ';
        text += w;
      }
      out.push_back({"dm" + std::to_string(k++), text, label, d, Source::synthetic, std::nullopt});
    }
  }
  rng.shuffle(out);
  return out;
}

// Multinomial logistic regression trained by plain full-batch gradient
// descent; an independent probe for how much class information a frozen
// representation retains. Returns training accuracy.
inline double linear_probe_accuracy(const std::vector<std::vector<double>>& features,
                                    const std::vector<int>& labels, int n_classes,
                                    int steps = 400, double lr = 0.5) {
  std::size_t n = features.size();
  std::size_t dim = features.front().size();

  // Standardize features so one learning rate fits all scales.
  std::vector<double> mean(dim, 0.0), sd(dim, 0.0);
  for (const auto& f : features) {
    for (std::size_t j = 0; j < dim; ++j) mean[j] += f[j];
  }
  for (std::size_t j = 0; j < dim; ++j) mean[j] /= static_cast<double>(n);
  for (const auto& f : features) {
    for (std::size_t j = 0; j < dim; ++j) sd[j] += (f[j] - mean[j]) * (f[j] - mean[j]);
  }
  for (std::size_t j = 0; j < dim; ++j) sd[j] = std::sqrt(sd[j] / static_cast<double>(n)) + 1e-8;

  std::vector<std::vector<double>> x(n, std::vector<double>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) x[i][j] = (features[i][j] - mean[j]) / sd[j];
  }

  std::vector<double> w(dim * n_classes, 0.0), b(n_classes, 0.0);
  std::vector<double> logits(n_classes), probs(n_classes);
  std::vector<double> gw(dim * n_classes), gb(n_classes);
  for (int step = 0; step < steps; ++step) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -1e300;
      for (int c = 0; c < n_classes; ++c) {
        logits[c] = b[c];
        for (std::size_t j = 0; j < dim; ++j) logits[c] += x[i][j] * w[j * n_classes + c];
        mx = std::max(mx, logits[c]);
      }
      double sum = 0.0;
      for (int c = 0; c < n_classes; ++c) {
        probs[c] = std::exp(logits[c] - mx);
        sum += probs[c];
      }
      for (int c = 0; c < n_classes; ++c) {
        double g = probs[c] / sum - (labels[i] == c ? 1.0 : 0.0);
        gb[c] += g;
        for (std::size_t j = 0; j < dim; ++j) gw[j * n_classes + c] += g * x[i][j];
      }
    }
    for (std::size_t j = 0; j < dim * static_cast<std::size_t>(n_classes); ++j) {
      w[j] -= lr * gw[j] / static_cast<double>(n);
    }
    for (int c = 0; c < n_classes; ++c) b[c] -= lr * gb[c] / static_cast<double>(n);
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    double best_v = -1e300;
    for (int c = 0; c < n_classes; ++c) {
      double v = b[c];
      for (std::size_t j = 0; j < dim; ++j) v += x[i][j] * w[j * n_classes + c];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    correct += best == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace fixtures
