#pragma once

// Per-sentence word graphs: tokenization, windowed co-occurrence edges over
// unique words, crafted morphological node features, and the degree-normalized
// adjacency used by the graph encoder.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "graphsense/corpus.hpp"
#include "graphsense/unicode.hpp"

namespace graphsense {

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TokenSequence = std::vector<std::string>;

struct GraphConfig {
  int window = 3;
  int feature_version = 1;
};

inline constexpr std::size_t kNodeFeatureDim = 8;

// G = (V, E, X): unique words in first-occurrence order, undirected edges
// stored as (u, v) index pairs with u < v, and a |V| x feature_dim matrix.
struct WordGraph {
  std::vector<std::string> nodes;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::vector<double> features;  // row-major, |nodes| x feature_dim
  std::size_t feature_dim = kNodeFeatureDim;

  std::size_t size() const { return nodes.size(); }
  bool empty() const { return nodes.empty(); }
  std::span<const double> feature_row(std::size_t i) const {
    return {features.data() + i * feature_dim, feature_dim};
  }
};

// normalize_text, split on whitespace, strip leading/trailing punctuation per
// token, drop empties.
inline TokenSequence tokenize(std::string_view text) {
  std::string norm = normalize_text(text);
  TokenSequence tokens;
  std::vector<char32_t> cps = utf8_decode(norm);
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && is_space_cp(cps[i])) ++i;
    std::size_t j = i;
    while (j < cps.size() && !is_space_cp(cps[j])) ++j;
    if (j > i) {
      std::size_t b = i, e = j;
      while (b < e && is_punct_cp(cps[b])) ++b;
      while (e > b && is_punct_cp(cps[e - 1])) --e;
      if (e > b) {
        tokens.push_back(utf8_encode(std::vector<char32_t>(cps.begin() + b, cps.begin() + e)));
      }
    }
    i = j;
  }
  return tokens;
}

// Word-level morphological statistics, length 8:
//   [0] codepoint length
//   [1] Arabic-block letter count
//   [2] definite-article prefix (starts with "ال")
//   [3] taa marbuta count
//   [4] alef-form count (plain, hamza above/below, madda)
//   [5] yaa / alef maqsura count
//   [6] decimal digit count
//   [7] all-digit flag
inline std::array<double, kNodeFeatureDim> node_features(std::string_view word) {
  if (word.empty()) throw GraphError("node_features: empty word");
  std::vector<char32_t> cps = utf8_decode(word);
  std::array<double, kNodeFeatureDim> f{};
  f[0] = static_cast<double>(cps.size());
  bool all_digits = true;
  for (char32_t cp : cps) {
    if (is_arabic_letter_cp(cp)) f[1] += 1.0;
    if (cp == U'ة') f[3] += 1.0;
    if (cp == U'ا' || cp == U'أ' || cp == U'إ' || cp == U'آ') f[4] += 1.0;
    if (cp == U'ي' || cp == U'ى') f[5] += 1.0;
    if (is_decimal_digit_cp(cp)) {
      f[6] += 1.0;
    } else {
      all_digits = false;
    }
  }
  if (cps.size() >= 2 && cps[0] == U'ا' && cps[1] == U'ل') f[2] = 1.0;
  f[7] = all_digits ? 1.0 : 0.0;
  return f;
}

// Nodes are unique words; an undirected edge joins two distinct words iff some
// pair of their occurrence positions i, j satisfies |i - j| <= window - 1.
inline WordGraph build_cooccurrence_graph(const TokenSequence& tokens,
                                          const GraphConfig& cfg = {}) {
  if (cfg.window < 2) {
    throw GraphError("window must be >= 2, got " + std::to_string(cfg.window));
  }
  if (tokens.empty()) throw GraphError("empty graph");

  WordGraph g;
  std::unordered_map<std::string, std::uint32_t> index;
  std::vector<std::uint32_t> node_of_pos(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].empty()) throw GraphError("empty token at position " + std::to_string(i));
    auto [it, inserted] = index.emplace(tokens[i], static_cast<std::uint32_t>(g.nodes.size()));
    if (inserted) g.nodes.push_back(tokens[i]);
    node_of_pos[i] = it->second;
  }

  std::set<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::size_t w = static_cast<std::size_t>(cfg.window);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::size_t hi = std::min(tokens.size(), i + w);
    for (std::size_t j = i + 1; j < hi; ++j) {
      std::uint32_t u = node_of_pos[i], v = node_of_pos[j];
      if (u == v) continue;
      edges.emplace(std::min(u, v), std::max(u, v));
    }
  }
  g.edges.assign(edges.begin(), edges.end());

  g.feature_dim = kNodeFeatureDim;
  g.features.reserve(g.nodes.size() * kNodeFeatureDim);
  for (const std::string& word : g.nodes) {
    auto f = node_features(word);
    g.features.insert(g.features.end(), f.begin(), f.end());
  }
  return g;
}

// A_hat = D~^{-1/2} (A + I) D~^{-1/2}, dense row-major |V| x |V|.
inline std::vector<double> normalized_adjacency(const WordGraph& g) {
  std::size_t n = g.size();
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] = 1.0;
  for (auto [u, v] : g.edges) {
    if (u >= n || v >= n) throw GraphError("edge references invalid node index");
    a[u * n + v] = 1.0;
    a[v * n + u] = 1.0;
  }
  std::vector<double> inv_sqrt_deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += a[i * n + j];
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      a[i * n + j] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
    }
  }
  return a;
}

inline nlohmann::ordered_json graph_to_json(const WordGraph& g) {
  nlohmann::ordered_json j;
  j["nodes"] = g.nodes;
  auto edges = nlohmann::ordered_json::array();
  for (auto [u, v] : g.edges) edges.push_back({u, v});
  j["edges"] = std::move(edges);
  j["feature_dim"] = g.feature_dim;
  j["features"] = g.features;
  return j;
}

}  // namespace graphsense
