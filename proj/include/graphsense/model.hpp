#pragma once

// The trainable fusion classifier: a pluggable text encoder (toy transformer
// or precomputed per-sample vectors), a GCN graph encoder, linear projections
// into a shared fusion space mixed by multi-head self-attention, a feedforward
// task head, and an optional gradient-reversal dialect head.

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "graphsense/autodiff.hpp"
#include "graphsense/corpus.hpp"
#include "graphsense/graph.hpp"
#include "graphsense/rng.hpp"
#include "graphsense/util.hpp"

namespace graphsense {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Parameters.
// ---------------------------------------------------------------------------

// Named trainable tensors in registration order. Each parameter's initial
// values are drawn from an RNG substream derived from its own name, so adding
// or removing parameters never shifts the draws of the others.
template <typename S>
class ParameterStore {
 public:
  enum class Init { xavier_uniform, zeros, ones };

  Tensor<S>& create(const std::string& name, Shape shape, Init init, const Rng& init_root) {
    if (index_.count(name)) throw ModelError("duplicate parameter name: '" + name + "'");
    std::size_t numel = 1;
    for (std::size_t d : shape) numel *= d;
    std::vector<S> values(numel, S(0));
    if (init == Init::ones) {
      values.assign(numel, S(1));
    } else if (init == Init::xavier_uniform) {
      if (shape.size() != 2) throw ModelError("xavier init expects a rank-2 shape for '" + name + "'");
      double a = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      Rng rng = init_root.substream(name);
      for (S& v : values) v = static_cast<S>(rng.next_uniform(-a, a));
    }
    Tensor<S> t = Tensor<S>::from(std::move(shape), std::move(values));
    t.set_requires_grad(true);
    index_.emplace(name, params_.size());
    params_.emplace_back(name, std::move(t));
    return params_.back().second;
  }

  Tensor<S>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ModelError("unknown parameter: '" + name + "'");
    return params_[it->second].second;
  }
  const Tensor<S>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ModelError("unknown parameter: '" + name + "'");
    return params_[it->second].second;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t count() const { return params_.size(); }
  std::size_t total_scalars() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grads() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  void fill(S v) {
    for (auto& [name, t] : params_) {
      for (S& x : t.value()) x = v;
    }
  }

  // Flat snapshot of all values in registration order.
  std::vector<S> snapshot() const {
    std::vector<S> out;
    out.reserve(total_scalars());
    for (const auto& [name, t] : params_) out.insert(out.end(), t.value().begin(), t.value().end());
    return out;
  }
  void restore(const std::vector<S>& snapshot) {
    if (snapshot.size() != total_scalars()) {
      throw ModelError("snapshot size mismatch: " + std::to_string(snapshot.size()) + " vs " +
                       std::to_string(total_scalars()));
    }
    std::size_t off = 0;
    for (auto& [name, t] : params_) {
      auto v = t.value();
      std::copy(snapshot.begin() + off, snapshot.begin() + off + v.size(), v.begin());
      off += v.size();
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor<S>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Configuration and vocabulary.
// ---------------------------------------------------------------------------

enum class TextEncoderMode { toy_transformer, precomputed };

inline std::string_view text_encoder_mode_name(TextEncoderMode m) {
  return m == TextEncoderMode::toy_transformer ? "toy" : "precomputed";
}
inline TextEncoderMode text_encoder_mode_from_name(std::string_view s) {
  if (s == "toy") return TextEncoderMode::toy_transformer;
  if (s == "precomputed") return TextEncoderMode::precomputed;
  throw ModelError("unknown text encoder mode: '" + std::string(s) + "'");
}

struct ModelConfig {
  TextEncoderMode text_mode = TextEncoderMode::toy_transformer;
  std::size_t text_hidden = 64;   // h_t
  std::size_t text_blocks = 2;
  std::size_t text_heads = 4;
  std::size_t max_tokens = 64;    // sequence cap, CLS included
  std::size_t graph_hidden = 64;  // h_g
  std::size_t gcn_layers = 2;
  std::size_t feature_dim = kNodeFeatureDim;
  std::size_t fusion_dim = 64;    // d
  std::size_t fusion_heads = 4;
  std::size_t classifier_hidden = 64;  // d_h
  bool dialect_head = false;
  double lambda_adv = 1.0;

  void validate() const {
    if (text_hidden == 0 || graph_hidden == 0 || fusion_dim == 0 || classifier_hidden == 0) {
      throw ModelError("model dimensions must be positive");
    }
    if (text_mode == TextEncoderMode::toy_transformer) {
      if (text_heads == 0 || text_hidden % text_heads != 0) {
        throw ModelError("text_hidden must be divisible by text_heads");
      }
      if (max_tokens < 2) throw ModelError("max_tokens must be at least 2");
      if (text_blocks == 0) throw ModelError("text_blocks must be at least 1");
    }
    if (fusion_heads == 0 || fusion_dim % fusion_heads != 0) {
      throw ModelError("fusion_dim must be divisible by fusion_heads");
    }
    if (gcn_layers == 0) throw ModelError("gcn_layers must be at least 1");
    if (lambda_adv < 0) throw ModelError("lambda_adv must be >= 0");
  }
};

inline nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["text_encoder"] = std::string(text_encoder_mode_name(c.text_mode));
  j["text_hidden"] = c.text_hidden;
  j["text_blocks"] = c.text_blocks;
  j["text_heads"] = c.text_heads;
  j["max_tokens"] = c.max_tokens;
  j["graph_hidden"] = c.graph_hidden;
  j["gcn_layers"] = c.gcn_layers;
  j["feature_dim"] = c.feature_dim;
  j["fusion_dim"] = c.fusion_dim;
  j["fusion_heads"] = c.fusion_heads;
  j["classifier_hidden"] = c.classifier_hidden;
  j["dialect_head"] = c.dialect_head;
  j["lambda_adv"] = c.lambda_adv;
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.text_mode = text_encoder_mode_from_name(j.at("text_encoder").get<std::string>());
  c.text_hidden = j.at("text_hidden").get<std::size_t>();
  c.text_blocks = j.at("text_blocks").get<std::size_t>();
  c.text_heads = j.at("text_heads").get<std::size_t>();
  c.max_tokens = j.at("max_tokens").get<std::size_t>();
  c.graph_hidden = j.at("graph_hidden").get<std::size_t>();
  c.gcn_layers = j.at("gcn_layers").get<std::size_t>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.fusion_dim = j.at("fusion_dim").get<std::size_t>();
  c.fusion_heads = j.at("fusion_heads").get<std::size_t>();
  c.classifier_hidden = j.at("classifier_hidden").get<std::size_t>();
  c.dialect_head = j.at("dialect_head").get<bool>();
  c.lambda_adv = j.at("lambda_adv").get<double>();
  return c;
}

// Word-to-id map built from a training corpus. Id 0 is the synthetic CLS
// token prepended to every sequence; id 1 is the reserved UNK id.
struct Vocabulary {
  static constexpr std::size_t kClsId = 0;
  static constexpr std::size_t kUnkId = 1;
  static constexpr std::size_t kReserved = 2;

  std::vector<std::string> words;  // id of words[i] is i + kReserved
  std::unordered_map<std::string, std::size_t> index;

  static Vocabulary build(std::span<const Sample> samples) {
    Vocabulary v;
    for (const Sample& s : samples) {
      for (const std::string& w : tokenize(s.text)) {
        if (v.index.emplace(w, v.words.size() + kReserved).second) v.words.push_back(w);
      }
    }
    return v;
  }

  std::size_t id_of(const std::string& word) const {
    auto it = index.find(word);
    return it == index.end() ? kUnkId : it->second;
  }
  std::size_t size() const { return words.size() + kReserved; }
  bool empty() const { return words.empty(); }

  nlohmann::json to_json() const { return nlohmann::json(words); }
  static Vocabulary from_json(const nlohmann::json& j) {
    Vocabulary v;
    v.words = j.get<std::vector<std::string>>();
    for (std::size_t i = 0; i < v.words.size(); ++i) v.index.emplace(v.words[i], i + kReserved);
    return v;
  }
};

// Per-sample text vectors loaded from a JSON-lines file of
// {"id": ..., "vector": [...]}; stands in for a full pretrained encoder.
class PrecomputedEmbeddings {
 public:
  static PrecomputedEmbeddings load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embedding file: " + path.string());
    PrecomputedEmbeddings table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ModelError(path.string() + ": line " + std::to_string(line_no) +
                         ": malformed embedding record: " + e.what());
      }
      std::string id = j.at("id").get<std::string>();
      std::vector<double> vec = j.at("vector").get<std::vector<double>>();
      if (vec.empty()) {
        throw ModelError(path.string() + ": line " + std::to_string(line_no) + ": empty vector");
      }
      if (table.dim_ == 0) table.dim_ = vec.size();
      if (vec.size() != table.dim_) {
        throw ModelError(path.string() + ": line " + std::to_string(line_no) +
                         ": vector length " + std::to_string(vec.size()) +
                         " differs from earlier length " + std::to_string(table.dim_));
      }
      table.vectors_.emplace(std::move(id), std::move(vec));
    }
    return table;
  }

  static PrecomputedEmbeddings from_map(std::unordered_map<std::string, std::vector<double>> m) {
    PrecomputedEmbeddings table;
    for (const auto& [id, v] : m) {
      if (table.dim_ == 0) table.dim_ = v.size();
      if (v.size() != table.dim_) throw ModelError("inconsistent embedding lengths");
    }
    table.vectors_ = std::move(m);
    return table;
  }

  std::size_t dim() const { return dim_; }
  bool empty() const { return vectors_.empty(); }

  const std::vector<double>& at(const std::string& id) const {
    auto it = vectors_.find(id);
    if (it == vectors_.end()) {
      throw ModelError("precomputed embedding missing for id '" + id + "'");
    }
    return it->second;
  }

 private:
  std::unordered_map<std::string, std::vector<double>> vectors_;
  std::size_t dim_ = 0;
};

// ---------------------------------------------------------------------------
// Building blocks.
// ---------------------------------------------------------------------------

template <typename S>
struct AttentionParamRefs {
  Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t heads = 1;
};

// Standard multi-head self-attention over an [L x d] sequence, with output
// projection. Attention weights are row-softmaxed scaled dot products.
template <typename S>
Tensor<S> multi_head_self_attention(Tape<S>& tape, const AttentionParamRefs<S>& p,
                                    const Tensor<S>& x) {
  std::size_t d = x.shape().at(1);
  std::size_t dk = d / p.heads;
  Tensor<S> q = tape.add(tape.matmul(x, p.wq), p.bq);
  Tensor<S> k = tape.add(tape.matmul(x, p.wk), p.bk);
  Tensor<S> v = tape.add(tape.matmul(x, p.wv), p.bv);
  std::vector<Tensor<S>> heads;
  heads.reserve(p.heads);
  S inv_sqrt_dk = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dk)));
  for (std::size_t h = 0; h < p.heads; ++h) {
    Tensor<S> qh = tape.slice_cols(q, h * dk, dk);
    Tensor<S> kh = tape.slice_cols(k, h * dk, dk);
    Tensor<S> vh = tape.slice_cols(v, h * dk, dk);
    Tensor<S> scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt_dk);
    Tensor<S> weights = tape.softmax_rows(scores);
    heads.push_back(tape.matmul(weights, vh));
  }
  Tensor<S> merged = p.heads == 1 ? heads[0] : tape.concat_cols(heads);
  return tape.add(tape.matmul(merged, p.wo), p.bo);
}

// ---------------------------------------------------------------------------
// FusionModel.
// ---------------------------------------------------------------------------

template <typename S>
class FusionModel {
 public:
  // Toy-transformer mode requires a vocabulary built from the training corpus;
  // precomputed mode ignores it (embeddings are attached separately).
  FusionModel(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed)
      : cfg_(std::move(cfg)), vocab_(std::move(vocab)), seed_(seed) {
    cfg_.validate();
    if (cfg_.text_mode == TextEncoderMode::toy_transformer && vocab_.size() <= Vocabulary::kReserved) {
      throw ModelError("toy transformer mode needs a non-empty vocabulary");
    }
    build_params();
  }

  FusionModel(ModelConfig cfg, std::uint64_t seed)
      : FusionModel(std::move(cfg), Vocabulary{}, seed) {}

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  std::uint64_t seed() const { return seed_; }
  ParameterStore<S>& params() { return params_; }
  const ParameterStore<S>& params() const { return params_; }

  void set_lambda(double lambda) {
    if (lambda < 0) throw ModelError("lambda must be >= 0");
    cfg_.lambda_adv = lambda;
  }

  void attach_embeddings(std::shared_ptr<const PrecomputedEmbeddings> table) {
    if (table && table->dim() != cfg_.text_hidden && !table->empty()) {
      throw ModelError("embedding dimension " + std::to_string(table->dim()) +
                       " does not match text_hidden " + std::to_string(cfg_.text_hidden));
    }
    embeddings_ = std::move(table);
  }

  // z_t, [1 x h_t].
  Tensor<S> encode_text(Tape<S>& tape, const Sample& sample) {
    if (cfg_.text_mode == TextEncoderMode::precomputed) {
      if (!embeddings_) throw ModelError("no precomputed embeddings attached");
      const std::vector<double>& v = embeddings_->at(sample.id);
      std::vector<S> row(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) row[i] = static_cast<S>(v[i]);
      return Tensor<S>::from({1, cfg_.text_hidden}, std::move(row));
    }
    TokenSequence tokens = tokenize(sample.text);
    if (tokens.empty()) throw ModelError("no tokens in sample '" + sample.id + "'");
    std::vector<std::size_t> ids;
    ids.reserve(std::min(tokens.size() + 1, cfg_.max_tokens));
    ids.push_back(Vocabulary::kClsId);
    for (const std::string& w : tokens) {
      if (ids.size() >= cfg_.max_tokens) break;
      ids.push_back(vocab_.id_of(w));
    }
    std::vector<std::size_t> positions(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = i;

    Tensor<S> x = tape.add(tape.gather_rows(params_.at("text.embed"), ids),
                           tape.gather_rows(params_.at("text.pos"), positions));
    for (std::size_t b = 0; b < cfg_.text_blocks; ++b) {
      std::string pfx = "text.block" + std::to_string(b) + ".";
      AttentionParamRefs<S> attn{params_.at(pfx + "attn.wq"), params_.at(pfx + "attn.bq"),
                                 params_.at(pfx + "attn.wk"), params_.at(pfx + "attn.bk"),
                                 params_.at(pfx + "attn.wv"), params_.at(pfx + "attn.bv"),
                                 params_.at(pfx + "attn.wo"), params_.at(pfx + "attn.bo"),
                                 cfg_.text_heads};
      Tensor<S> attended = multi_head_self_attention(tape, attn, x);
      x = tape.layer_norm_rows(tape.add(x, attended), params_.at(pfx + "ln1.g"),
                               params_.at(pfx + "ln1.b"));
      Tensor<S> ff = tape.add(
          tape.matmul(tape.relu(tape.add(tape.matmul(x, params_.at(pfx + "ff.w1")),
                                         params_.at(pfx + "ff.b1"))),
                      params_.at(pfx + "ff.w2")),
          params_.at(pfx + "ff.b2"));
      x = tape.layer_norm_rows(tape.add(x, ff), params_.at(pfx + "ln2.g"),
                               params_.at(pfx + "ln2.b"));
    }
    // CLS readout: the position-0 state of the final layer.
    return tape.gather_rows(x, {0});
  }

  // z_g, [1 x h_g]: K rounds of relu(A_hat H W), then mean pooling over nodes.
  Tensor<S> encode_graph(Tape<S>& tape, const WordGraph& g) {
    if (g.empty()) throw ModelError("encode_graph: empty graph");
    if (g.feature_dim != cfg_.feature_dim) {
      throw ModelError("graph feature dim " + std::to_string(g.feature_dim) +
                       " does not match model feature_dim " + std::to_string(cfg_.feature_dim));
    }
    std::size_t n = g.size();
    std::vector<double> ahat = normalized_adjacency(g);
    std::vector<S> ahat_s(ahat.size());
    for (std::size_t i = 0; i < ahat.size(); ++i) ahat_s[i] = static_cast<S>(ahat[i]);
    Tensor<S> a = Tensor<S>::from({n, n}, std::move(ahat_s));
    std::vector<S> feat(g.features.size());
    for (std::size_t i = 0; i < feat.size(); ++i) feat[i] = static_cast<S>(g.features[i]);
    Tensor<S> h = Tensor<S>::from({n, cfg_.feature_dim}, std::move(feat));
    for (std::size_t l = 0; l < cfg_.gcn_layers; ++l) {
      h = tape.relu(tape.matmul(tape.matmul(a, h), params_.at("gcn.w" + std::to_string(l))));
    }
    return tape.mean_pool_rows(h).reshape({1, cfg_.graph_hidden});
  }

  // z_f, [1 x 2d]: project both vectors into the fusion space, self-attend
  // over the two-token sequence [graph; text], flatten in that fixed order.
  Tensor<S> fuse(Tape<S>& tape, const Tensor<S>& z_t, const Tensor<S>& z_g) {
    if (z_t.shape() != Shape{1, cfg_.text_hidden}) {
      throw ModelError("fuse: z_t shape " + shape_str(z_t.shape()) + " does not match text_hidden");
    }
    if (z_g.shape() != Shape{1, cfg_.graph_hidden}) {
      throw ModelError("fuse: z_g shape " + shape_str(z_g.shape()) +
                       " does not match graph_hidden");
    }
    Tensor<S> tok_g = tape.add(tape.matmul(z_g, params_.at("fusion.proj_g.w")),
                               params_.at("fusion.proj_g.b"));
    Tensor<S> tok_t = tape.add(tape.matmul(z_t, params_.at("fusion.proj_t.w")),
                               params_.at("fusion.proj_t.b"));
    Tensor<S> seq = tape.concat_rows(tok_g, tok_t);
    AttentionParamRefs<S> attn{params_.at("fusion.attn.wq"), params_.at("fusion.attn.bq"),
                               params_.at("fusion.attn.wk"), params_.at("fusion.attn.bk"),
                               params_.at("fusion.attn.wv"), params_.at("fusion.attn.bv"),
                               params_.at("fusion.attn.wo"), params_.at("fusion.attn.bo"),
                               cfg_.fusion_heads};
    Tensor<S> mixed = multi_head_self_attention(tape, attn, seq);
    return mixed.reshape({1, 2 * cfg_.fusion_dim});
  }

  Tensor<S> fuse_features(Tape<S>& tape, const Sample& sample, const WordGraph& g) {
    return fuse(tape, encode_text(tape, sample), encode_graph(tape, g));
  }

  Tensor<S> apply_task_head(Tape<S>& tape, const Tensor<S>& z_f) {
    return feedforward(tape, z_f, "task.");
  }

  // with_reversal=false runs the same head without the gradient-reversal
  // layer (identical forward values either way).
  Tensor<S> apply_dialect_head(Tape<S>& tape, const Tensor<S>& z_f, bool with_reversal = true) {
    if (!cfg_.dialect_head) throw ModelError("dialect head is not configured");
    Tensor<S> in = with_reversal ? tape.grad_reverse(z_f, cfg_.lambda_adv) : z_f;
    return feedforward(tape, in, "dialect.");
  }

  // Task logits, [1 x 2].
  Tensor<S> forward_task(Tape<S>& tape, const Sample& sample, const WordGraph& g) {
    return apply_task_head(tape, fuse_features(tape, sample, g));
  }

  // Dialect logits, [1 x 5].
  Tensor<S> forward_dialect(Tape<S>& tape, const Sample& sample, const WordGraph& g) {
    return apply_dialect_head(tape, fuse_features(tape, sample, g));
  }

 private:
  Tensor<S> feedforward(Tape<S>& tape, const Tensor<S>& x, const std::string& pfx) {
    Tensor<S> h = tape.relu(tape.add(tape.matmul(x, params_.at(pfx + "w1")), params_.at(pfx + "b1")));
    return tape.add(tape.matmul(h, params_.at(pfx + "w2")), params_.at(pfx + "b2"));
  }

  void create_attention(const std::string& pfx, std::size_t d, const Rng& rng) {
    using Init = typename ParameterStore<S>::Init;
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      params_.create(pfx + "attn." + w, {d, d}, Init::xavier_uniform, rng);
    }
    for (const char* b : {"bq", "bk", "bv", "bo"}) {
      params_.create(pfx + "attn." + b, {d}, Init::zeros, rng);
    }
  }

  void build_params() {
    using Init = typename ParameterStore<S>::Init;
    Rng rng = Rng(seed_).substream("init");
    if (cfg_.text_mode == TextEncoderMode::toy_transformer) {
      std::size_t h = cfg_.text_hidden;
      params_.create("text.embed", {vocab_.size(), h}, Init::xavier_uniform, rng);
      params_.create("text.pos", {cfg_.max_tokens, h}, Init::xavier_uniform, rng);
      for (std::size_t b = 0; b < cfg_.text_blocks; ++b) {
        std::string pfx = "text.block" + std::to_string(b) + ".";
        create_attention(pfx, h, rng);
        params_.create(pfx + "ln1.g", {h}, Init::ones, rng);
        params_.create(pfx + "ln1.b", {h}, Init::zeros, rng);
        params_.create(pfx + "ff.w1", {h, 4 * h}, Init::xavier_uniform, rng);
        params_.create(pfx + "ff.b1", {4 * h}, Init::zeros, rng);
        params_.create(pfx + "ff.w2", {4 * h, h}, Init::xavier_uniform, rng);
        params_.create(pfx + "ff.b2", {h}, Init::zeros, rng);
        params_.create(pfx + "ln2.g", {h}, Init::ones, rng);
        params_.create(pfx + "ln2.b", {h}, Init::zeros, rng);
      }
    }
    for (std::size_t l = 0; l < cfg_.gcn_layers; ++l) {
      std::size_t in = l == 0 ? cfg_.feature_dim : cfg_.graph_hidden;
      params_.create("gcn.w" + std::to_string(l), {in, cfg_.graph_hidden}, Init::xavier_uniform,
                     rng);
    }
    params_.create("fusion.proj_g.w", {cfg_.graph_hidden, cfg_.fusion_dim}, Init::xavier_uniform,
                   rng);
    params_.create("fusion.proj_g.b", {cfg_.fusion_dim}, Init::zeros, rng);
    params_.create("fusion.proj_t.w", {cfg_.text_hidden, cfg_.fusion_dim}, Init::xavier_uniform,
                   rng);
    params_.create("fusion.proj_t.b", {cfg_.fusion_dim}, Init::zeros, rng);
    create_attention("fusion.", cfg_.fusion_dim, rng);
    params_.create("task.w1", {2 * cfg_.fusion_dim, cfg_.classifier_hidden}, Init::xavier_uniform,
                   rng);
    params_.create("task.b1", {cfg_.classifier_hidden}, Init::zeros, rng);
    params_.create("task.w2", {cfg_.classifier_hidden, 2}, Init::xavier_uniform, rng);
    params_.create("task.b2", {2}, Init::zeros, rng);
    if (cfg_.dialect_head) {
      params_.create("dialect.w1", {2 * cfg_.fusion_dim, cfg_.classifier_hidden},
                     Init::xavier_uniform, rng);
      params_.create("dialect.b1", {cfg_.classifier_hidden}, Init::zeros, rng);
      params_.create("dialect.w2", {cfg_.classifier_hidden, kAllDialects.size()},
                     Init::xavier_uniform, rng);
      params_.create("dialect.b2", {kAllDialects.size()}, Init::zeros, rng);
    }
  }

  ModelConfig cfg_;
  Vocabulary vocab_;
  std::uint64_t seed_ = 0;
  ParameterStore<S> params_;
  std::shared_ptr<const PrecomputedEmbeddings> embeddings_;
};

// ---------------------------------------------------------------------------
// Checkpoints: one JSON header line, then the raw little-endian float32
// payload, parameters in header order.
// ---------------------------------------------------------------------------

inline constexpr const char* kCheckpointFormat = "graphsense.checkpoint";
inline constexpr int kCheckpointVersion = 1;

template <typename S>
void save_checkpoint(const FusionModel<S>& model, const std::filesystem::path& path,
                     const nlohmann::json& config_echo = {}) {
  nlohmann::ordered_json header;
  header["format"] = kCheckpointFormat;
  header["version"] = kCheckpointVersion;
  header["precision"] = std::string(precision_name(precision_of<S>()));
  header["model"] = model_config_to_json(model.config());
  header["vocab"] = model.config().text_mode == TextEncoderMode::toy_transformer
                        ? model.vocab().to_json()
                        : nlohmann::json(nullptr);
  auto params = nlohmann::ordered_json::array();
  for (const auto& [name, t] : model.params()) {
    nlohmann::ordered_json p;
    p["name"] = name;
    p["shape"] = t.shape();
    params.push_back(std::move(p));
  }
  header["params"] = std::move(params);
  header["config"] = config_echo.is_null() ? nlohmann::json::object() : config_echo;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out << header.dump() << '\n';
  static_assert(std::endian::native == std::endian::little,
                "checkpoint writer assumes a little-endian host");
  for (const auto& [name, t] : model.params()) {
    for (S v : t.value()) {
      float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
  }
  if (!out) throw IoError("checkpoint write failed: " + path.string());
}

struct CheckpointHeader {
  ModelConfig model;
  Vocabulary vocab;
  nlohmann::json config_echo;
  std::vector<std::pair<std::string, Shape>> params;
};

inline CheckpointHeader read_checkpoint_header(std::istream& in, const std::string& origin) {
  std::string line;
  if (!std::getline(in, line)) throw ModelError(origin + ": missing checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(origin + ": malformed checkpoint header: " + e.what());
  }
  if (header.value("format", "") != kCheckpointFormat) {
    throw ModelError(origin + ": not a checkpoint file");
  }
  CheckpointHeader h;
  h.model = model_config_from_json(header.at("model"));
  if (!header.at("vocab").is_null()) h.vocab = Vocabulary::from_json(header.at("vocab"));
  h.config_echo = header.value("config", nlohmann::json::object());
  for (const auto& p : header.at("params")) {
    h.params.emplace_back(p.at("name").get<std::string>(), p.at("shape").get<Shape>());
  }
  return h;
}

template <typename S>
FusionModel<S> load_checkpoint(const std::filesystem::path& path,
                               nlohmann::json* config_echo_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  CheckpointHeader h = read_checkpoint_header(in, path.string());
  if (config_echo_out) *config_echo_out = h.config_echo;

  FusionModel<S> model(h.model, std::move(h.vocab), /*seed=*/0);
  for (const auto& [name, shape] : h.params) {
    if (!model.params().contains(name)) {
      throw ModelError(path.string() + ": checkpoint parameter '" + name +
                       "' does not exist in the configured model");
    }
    Tensor<S>& t = model.params().at(name);
    if (t.shape() != shape) {
      throw ModelError(path.string() + ": shape mismatch for '" + name + "': checkpoint " +
                       shape_str(shape) + " vs model " + shape_str(t.shape()));
    }
    auto dst = t.value();
    std::vector<float> buf(dst.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw ModelError(path.string() + ": truncated payload at parameter '" + name + "'");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<S>(buf[i]);
  }
  std::size_t header_count = h.params.size();
  if (header_count != model.params().count()) {
    throw ModelError(path.string() + ": checkpoint lists " + std::to_string(header_count) +
                     " parameters, model has " + std::to_string(model.params().count()));
  }
  return model;
}

}  // namespace graphsense
