#pragma once

// Training loop with AdamW and cross-entropy, the joint adversarial objective
// through the gradient-reversal dialect head, checkpointing, and evaluation
// with per-dialect accuracy breakdowns.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "graphsense/autodiff.hpp"
#include "graphsense/corpus.hpp"
#include "graphsense/graph.hpp"
#include "graphsense/model.hpp"
#include "graphsense/rng.hpp"
#include "graphsense/util.hpp"

namespace graphsense {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  int epochs = 3;
  int batch_size = 16;
  bool adversarial = false;
  double lambda_adv = 1.0;
  double adv_loss_weight = 1.0;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  GraphConfig graph{};

  void validate() const {
    if (learning_rate <= 0) throw TrainError("learning_rate must be positive");
    if (weight_decay < 0) throw TrainError("weight_decay must be >= 0");
    if (epochs < 1) throw TrainError("epochs must be >= 1");
    if (batch_size < 1) throw TrainError("batch_size must be >= 1");
    if (lambda_adv < 0) throw TrainError("lambda_adv must be >= 0");
    if (adv_loss_weight < 0) throw TrainError("adv_loss_weight must be >= 0");
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1) {
      throw TrainError("betas must lie in (0, 1)");
    }
    if (epsilon <= 0) throw TrainError("epsilon must be positive");
  }
};

// AdamW with decoupled weight decay:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
// Gradients are left untouched; the caller zeroes them.
template <typename S>
class AdamWOptimizer {
 public:
  explicit AdamWOptimizer(const TrainConfig& cfg)
      : lr_(cfg.learning_rate),
        wd_(cfg.weight_decay),
        beta1_(cfg.beta1),
        beta2_(cfg.beta2),
        eps_(cfg.epsilon) {}

  void step(ParameterStore<S>& params) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
    const S one_m_b1 = static_cast<S>(1.0 - beta1_), one_m_b2 = static_cast<S>(1.0 - beta2_);
    const S lr = static_cast<S>(lr_), wd = static_cast<S>(wd_), eps = static_cast<S>(eps_);
    const S inv_bc1 = static_cast<S>(1.0 / bc1), inv_bc2 = static_cast<S>(1.0 / bc2);
    for (auto& [name, p] : params) {
      if (!p.grad_allocated()) {
        throw TrainError("adamw_step: missing gradient for parameter '" + name + "'");
      }
      auto& [m, v] = moments_[name];
      if (m.empty()) {
        m.assign(p.numel(), S(0));
        v.assign(p.numel(), S(0));
      }
      auto g = p.grad();
      auto w = p.value();
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = b1 * m[i] + one_m_b1 * g[i];
        v[i] = b2 * v[i] + one_m_b2 * g[i] * g[i];
        S m_hat = m[i] * inv_bc1;
        S v_hat = v[i] * inv_bc2;
        w[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + wd * w[i]);
      }
    }
  }

  std::uint64_t step_count() const { return t_; }

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::unordered_map<std::string, std::pair<std::vector<S>, std::vector<S>>> moments_;
};

// ---------------------------------------------------------------------------
// Evaluation.
// ---------------------------------------------------------------------------

struct Confusion {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
  double accuracy() const {
    return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total());
  }
};

struct EvalReport {
  double overall_accuracy = 0.0;
  std::size_t n_samples = 0;
  Confusion overall;
  std::map<Dialect, Confusion> per_dialect;

  double dialect_accuracy(Dialect d) const { return per_dialect.at(d).accuracy(); }
};

template <typename S>
int predict_label(FusionModel<S>& model, const Sample& sample, const WordGraph& g) {
  Tape<S> tape;
  Tensor<S> logits = model.forward_task(tape, sample, g);
  return logits.value()[1] > logits.value()[0] ? 1 : 0;
}

template <typename S>
EvalReport evaluate(FusionModel<S>& model, std::span<const Sample> samples,
                    const GraphConfig& graph_cfg = {}) {
  if (samples.empty()) throw TrainError("evaluate: empty sample set");
  EvalReport report;
  report.n_samples = samples.size();
  for (const Sample& s : samples) {
    WordGraph g = build_cooccurrence_graph(tokenize(s.text), graph_cfg);
    int pred = predict_label(model, s, g);
    Confusion& c = report.per_dialect[s.dialect];
    if (s.label == 1 && pred == 1) ++c.tp;
    if (s.label == 0 && pred == 0) ++c.tn;
    if (s.label == 0 && pred == 1) ++c.fp;
    if (s.label == 1 && pred == 0) ++c.fn;
  }
  for (const auto& [d, c] : report.per_dialect) {
    report.overall.tp += c.tp;
    report.overall.tn += c.tn;
    report.overall.fp += c.fp;
    report.overall.fn += c.fn;
  }
  report.overall_accuracy = report.overall.accuracy();
  return report;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r,
                                             const nlohmann::json& config_echo = {}) {
  nlohmann::ordered_json j;
  j["overall_accuracy"] = r.overall_accuracy;
  j["n_samples"] = r.n_samples;
  j["confusion"] = {{"tp", r.overall.tp}, {"tn", r.overall.tn}, {"fp", r.overall.fp},
                    {"fn", r.overall.fn}};
  nlohmann::ordered_json pd = nlohmann::ordered_json::object();
  for (const auto& [d, c] : r.per_dialect) {
    pd[std::string(dialect_code(d))] = {{"accuracy", c.accuracy()}, {"n", c.total()},
                                        {"tp", c.tp},              {"tn", c.tn},
                                        {"fp", c.fp},              {"fn", c.fn}};
  }
  j["per_dialect"] = std::move(pd);
  j["config"] = config_echo.is_null() ? nlohmann::json::object() : config_echo;
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.overall_accuracy = j.at("overall_accuracy").get<double>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  const auto& c = j.at("confusion");
  r.overall = Confusion{c.at("tp").get<std::size_t>(), c.at("tn").get<std::size_t>(),
                        c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>()};
  for (const auto& [code, pc] : j.at("per_dialect").items()) {
    r.per_dialect[dialect_from_code(code)] =
        Confusion{pc.at("tp").get<std::size_t>(), pc.at("tn").get<std::size_t>(),
                  pc.at("fp").get<std::size_t>(), pc.at("fn").get<std::size_t>()};
  }
  return r;
}

enum class ReportFormat { json, csv };

// CSV columns: dialect,accuracy,n,tp,tn,fp,fn with a trailing "overall" row;
// accuracies printed with 4 decimals.
inline void export_report(const EvalReport& r, const std::filesystem::path& path,
                          ReportFormat format, const nlohmann::json& config_echo = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open report file for writing: " + path.string());
  if (format == ReportFormat::json) {
    out << report_to_json(r, config_echo).dump(2) << '\n';
  } else {
    if (!config_echo.is_null() && !config_echo.empty()) {
      out << "# config: " << config_echo.dump() << '\n';
    }
    out << "dialect,accuracy,n,tp,tn,fp,fn\n";
    char buf[32];
    auto row = [&](std::string_view name, const Confusion& c) {
      std::snprintf(buf, sizeof buf, "%.4f", c.accuracy());
      out << name << ',' << buf << ',' << c.total() << ',' << c.tp << ',' << c.tn << ',' << c.fp
          << ',' << c.fn << '\n';
    };
    for (const auto& [d, c] : r.per_dialect) row(dialect_code(d), c);
    row("overall", r.overall);
  }
  if (!out) throw IoError("report write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct EpochStats {
  int epoch = 0;
  double task_loss = 0.0;
  double task_accuracy = 0.0;
  std::optional<double> dialect_loss;
  std::optional<double> validation_accuracy;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_validation_accuracy = 0.0;
  std::uint64_t optimizer_steps = 0;
  std::vector<std::string> warnings;
};

// Output sinks; any unset path is skipped.
struct TrainIo {
  std::optional<std::filesystem::path> final_checkpoint;
  std::optional<std::filesystem::path> best_checkpoint;
  std::optional<std::filesystem::path> history_csv;
  nlohmann::json config_echo;
};

// The deterministic visiting order for one epoch.
inline std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng(seed).substream("shuffle").substream(static_cast<std::uint64_t>(epoch)).shuffle(order);
  return order;
}

inline void write_history_csv(const std::vector<EpochStats>& history,
                              const std::filesystem::path& path,
                              const nlohmann::json& config_echo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open history file for writing: " + path.string());
  if (!config_echo.is_null() && !config_echo.empty()) {
    out << "# config: " << config_echo.dump() << '\n';
  }
  bool adversarial = !history.empty() && history.front().dialect_loss.has_value();
  out << "epoch,task_loss,task_acc" << (adversarial ? ",dialect_loss" : "") << '\n';
  char buf[64];
  for (const EpochStats& e : history) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g", e.epoch, e.task_loss, e.task_accuracy);
    out << buf;
    if (adversarial) {
      std::snprintf(buf, sizeof buf, ",%.9g", e.dialect_loss.value_or(0.0));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("history write failed: " + path.string());
}

template <typename S>
TrainResult train(FusionModel<S>& model, const DatasetSplit& split, const TrainConfig& cfg,
                  const TrainIo& io = {}) {
  cfg.validate();
  if (split.train.empty()) throw TrainError("empty training split");

  TrainResult result;
  if (cfg.adversarial) {
    if (!model.config().dialect_head) {
      throw TrainError("adversarial training requires a model with a dialect head");
    }
    model.set_lambda(cfg.lambda_adv);
    std::size_t n_dialects = 0;
    std::array<bool, kAllDialects.size()> seen{};
    for (const Sample& s : split.train) {
      if (!seen[static_cast<std::size_t>(s.dialect)]) {
        seen[static_cast<std::size_t>(s.dialect)] = true;
        ++n_dialects;
      }
    }
    if (n_dialects < 2) {
      result.warnings.push_back(
          "adversarial training on a single-dialect corpus: the dialect loss is degenerate");
    }
  }

  // Graphs are built once up front.
  std::vector<WordGraph> graphs;
  graphs.reserve(split.train.size());
  for (const Sample& s : split.train) {
    try {
      graphs.push_back(build_cooccurrence_graph(tokenize(s.text), cfg.graph));
    } catch (const GraphError& e) {
      throw TrainError("sample '" + s.id + "': " + e.what());
    }
  }

  AdamWOptimizer<S> opt(cfg);
  const std::size_t n = split.train.size();
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<S> best_values;
  const S adv_weight = static_cast<S>(cfg.adv_loss_weight);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = epoch_order(cfg.seed, epoch, n);
    double loss_sum = 0.0, dialect_loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      std::size_t end = std::min(n, start + batch);
      S inv_batch = S(1) / static_cast<S>(end - start);
      model.params().zero_grads();
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = split.train[order[k]];
        const WordGraph& g = graphs[order[k]];
        Tape<S> tape;
        Tensor<S> z_f = model.fuse_features(tape, s, g);
        Tensor<S> logits = model.apply_task_head(tape, z_f);
        Tensor<S> loss = tape.cross_entropy_with_logits(logits, {s.label});
        loss_sum += static_cast<double>(loss.item());
        int pred = logits.value()[1] > logits.value()[0] ? 1 : 0;
        if (pred == s.label) ++correct;
        if (cfg.adversarial) {
          Tensor<S> dialect_logits = model.apply_dialect_head(tape, z_f);
          Tensor<S> dialect_loss = tape.cross_entropy_with_logits(
              dialect_logits, {static_cast<int>(s.dialect)});
          dialect_loss_sum += static_cast<double>(dialect_loss.item());
          loss = tape.add(loss, tape.scale(dialect_loss, adv_weight));
        }
        tape.backward(tape.scale(loss, inv_batch));
      }
      opt.step(model.params());
    }

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.task_loss = loss_sum / static_cast<double>(n);
    stats.task_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    if (cfg.adversarial) stats.dialect_loss = dialect_loss_sum / static_cast<double>(n);

    if (!split.validation.empty()) {
      EvalReport val = evaluate(model, split.validation, cfg.graph);
      stats.validation_accuracy = val.overall_accuracy;
      if (result.history.empty() || val.overall_accuracy > result.best_validation_accuracy) {
        result.best_validation_accuracy = val.overall_accuracy;
        result.best_epoch = stats.epoch;
        best_values = model.params().snapshot();
      }
    }
    result.history.push_back(stats);
  }
  result.optimizer_steps = opt.step_count();

  if (split.validation.empty()) {
    result.best_epoch = cfg.epochs;
    best_values = model.params().snapshot();
  }

  if (io.history_csv) write_history_csv(result.history, *io.history_csv, io.config_echo);
  if (io.final_checkpoint) save_checkpoint(model, *io.final_checkpoint, io.config_echo);
  if (io.best_checkpoint) {
    std::vector<S> final_values = model.params().snapshot();
    model.params().restore(best_values);
    save_checkpoint(model, *io.best_checkpoint, io.config_echo);
    model.params().restore(final_values);
  }
  return result;
}

// The joint objective: total = task_CE + adv_loss_weight * dialect_CE, with
// grad_reverse(lambda) between the fused representation and the dialect head.
template <typename S>
TrainResult train_adversarial(FusionModel<S>& model, const DatasetSplit& split, TrainConfig cfg,
                              const TrainIo& io = {}) {
  cfg.adversarial = true;
  return train(model, split, cfg, io);
}

}  // namespace graphsense
