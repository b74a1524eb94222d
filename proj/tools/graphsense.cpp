// graphsense: command-line pipeline for Arabic commonsense validation with
// graph-text fusion. Subcommands: prepare, expand, spotcheck, build-graphs,
// train, eval, gradcheck, report.
//
// Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "graphsense/graphsense.hpp"

namespace fs = std::filesystem;
using namespace graphsense;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

// Effective run configuration: defaults, overridden by --config file values,
// overridden by explicit flags. The echo of this struct is embedded in every
// output artifact.
struct RunConfig {
  std::uint64_t seed = 0;
  int window = 3;

  // model
  std::string text_encoder = "toy";
  std::string embeddings_path;
  std::size_t text_hidden = 64;
  std::size_t text_blocks = 2;
  std::size_t text_heads = 4;
  std::size_t max_tokens = 64;
  std::size_t graph_hidden = 64;
  std::size_t gcn_layers = 2;
  std::size_t fusion_dim = 64;
  std::size_t fusion_heads = 4;
  std::size_t classifier_hidden = 64;

  // training
  double lr = 2e-5;
  double weight_decay = 0.01;
  int epochs = 3;
  int batch_size = 16;
  bool adversarial = false;
  double lambda_adv = 1.0;
  double adv_loss_weight = 1.0;

  // endpoint
  std::string endpoint_url;
  std::string endpoint_model;
  std::string api_key_env = "CHAT_API_KEY";
  int max_retries = 3;
  double backoff = 0.5;
  double timeout = 30.0;
  double temperature = 0.0;
  std::string dialects = "egy,glf,lev,mor";
  int concurrency = 1;
  std::string dialect_names = "arabic";

  int spotcheck_n = 50;
};

nlohmann::ordered_json config_echo(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["window"] = c.window;
  j["model"] = {{"text_encoder", c.text_encoder},
                {"embeddings", c.embeddings_path},
                {"text_hidden", c.text_hidden},
                {"text_blocks", c.text_blocks},
                {"text_heads", c.text_heads},
                {"max_tokens", c.max_tokens},
                {"graph_hidden", c.graph_hidden},
                {"gcn_layers", c.gcn_layers},
                {"fusion_dim", c.fusion_dim},
                {"fusion_heads", c.fusion_heads},
                {"classifier_hidden", c.classifier_hidden}};
  j["train"] = {{"lr", c.lr},
                {"weight_decay", c.weight_decay},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"adversarial", c.adversarial},
                {"lambda", c.lambda_adv},
                {"adv_loss_weight", c.adv_loss_weight}};
  j["endpoint"] = {{"base_url", c.endpoint_url},
                   {"model", c.endpoint_model},
                   {"api_key_env", c.api_key_env},
                   {"max_retries", c.max_retries},
                   {"backoff", c.backoff},
                   {"timeout", c.timeout},
                   {"temperature", c.temperature},
                   {"dialects", c.dialects},
                   {"concurrency", c.concurrency}};
  j["spotcheck_n"] = c.spotcheck_n;
  return j;
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void load_config_file(const fs::path& path, RunConfig& c) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  maybe(j, "seed", c.seed);
  maybe(j, "window", c.window);
  maybe(j, "text_encoder", c.text_encoder);
  maybe(j, "embeddings", c.embeddings_path);
  maybe(j, "text_hidden", c.text_hidden);
  maybe(j, "text_blocks", c.text_blocks);
  maybe(j, "text_heads", c.text_heads);
  maybe(j, "max_tokens", c.max_tokens);
  maybe(j, "graph_hidden", c.graph_hidden);
  maybe(j, "gcn_layers", c.gcn_layers);
  maybe(j, "fusion_dim", c.fusion_dim);
  maybe(j, "fusion_heads", c.fusion_heads);
  maybe(j, "classifier_hidden", c.classifier_hidden);
  maybe(j, "lr", c.lr);
  maybe(j, "weight_decay", c.weight_decay);
  maybe(j, "epochs", c.epochs);
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "adversarial", c.adversarial);
  maybe(j, "lambda", c.lambda_adv);
  maybe(j, "adv_loss_weight", c.adv_loss_weight);
  maybe(j, "spotcheck_n", c.spotcheck_n);
  maybe(j, "dialect_names", c.dialect_names);
  if (j.contains("endpoint")) {
    const auto& e = j.at("endpoint");
    maybe(e, "base_url", c.endpoint_url);
    maybe(e, "model", c.endpoint_model);
    maybe(e, "api_key_env", c.api_key_env);
    maybe(e, "max_retries", c.max_retries);
    maybe(e, "backoff", c.backoff);
    maybe(e, "timeout", c.timeout);
    maybe(e, "temperature", c.temperature);
    maybe(e, "dialects", c.dialects);
    maybe(e, "concurrency", c.concurrency);
  }
}

void write_sidecar(const fs::path& artifact, const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["config"] = config_echo(cfg);
  write_text_file(fs::path(artifact.string() + ".run.json"), j.dump(2) + "\n");
}

ModelConfig model_config_from(const RunConfig& c, bool dialect_head) {
  ModelConfig m;
  m.text_mode = text_encoder_mode_from_name(c.text_encoder);
  m.text_hidden = c.text_hidden;
  m.text_blocks = c.text_blocks;
  m.text_heads = c.text_heads;
  m.max_tokens = c.max_tokens;
  m.graph_hidden = c.graph_hidden;
  m.gcn_layers = c.gcn_layers;
  m.fusion_dim = c.fusion_dim;
  m.fusion_heads = c.fusion_heads;
  m.classifier_hidden = c.classifier_hidden;
  m.dialect_head = dialect_head;
  m.lambda_adv = c.lambda_adv;
  return m;
}

TrainConfig train_config_from(const RunConfig& c) {
  TrainConfig t;
  t.learning_rate = c.lr;
  t.weight_decay = c.weight_decay;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.adversarial = c.adversarial;
  t.lambda_adv = c.lambda_adv;
  t.adv_loss_weight = c.adv_loss_weight;
  t.seed = c.seed;
  t.graph.window = c.window;
  return t;
}

std::vector<Dialect> parse_dialect_list(const std::string& csv) {
  std::vector<Dialect> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(dialect_from_code(trim_ascii(item)));
  }
  if (out.empty()) throw ConfigError("empty dialect list");
  return out;
}

std::shared_ptr<const PrecomputedEmbeddings> load_embeddings_if_needed(const RunConfig& cfg) {
  if (cfg.text_encoder != "precomputed") return nullptr;
  if (cfg.embeddings_path.empty()) {
    throw ConfigError("--embeddings is required with --text-encoder precomputed");
  }
  return std::make_shared<PrecomputedEmbeddings>(
      PrecomputedEmbeddings::load(cfg.embeddings_path));
}

// ---------------------------------------------------------------------------
// Subcommand bodies.
// ---------------------------------------------------------------------------

int cmd_prepare(const RunConfig& cfg, const std::string& pairs_path, const std::string& out_path) {
  std::vector<PairInstance> pairs = read_pairs(pairs_path);
  if (pairs.empty()) throw CorpusError(pairs_path + ": no pairs found");
  std::vector<Sample> samples = decouple_pairs(pairs);
  normalize_samples(samples);
  DedupResult deduped = dedup(samples);
  write_samples(deduped.samples, fs::path(out_path));
  write_sidecar(out_path, cfg);

  std::cout << "pairs: " << pairs.size() << "\n"
            << "decoupled: " << samples.size() << "\n"
            << "after dedup: " << deduped.samples.size() << "\n";
  if (!deduped.label_conflicts.empty()) {
    std::cout << "label conflicts (kept first): " << deduped.label_conflicts.size() << "\n";
    for (const DedupWarning& w : deduped.label_conflicts) {
      std::cerr << "warning: label conflict on duplicate text: kept " << w.kept_id << " (label "
                << w.kept_label << "), dropped " << w.dropped_id << " (label " << w.dropped_label
                << ")\n";
    }
  }
  std::cout << format_tally(tally(deduped.samples));
  return kExitOk;
}

int cmd_expand(const RunConfig& cfg, const std::string& in_path, const std::string& out_path,
               const std::string& records_path, const std::string& template_path) {
  if (cfg.endpoint_url.empty()) throw ConfigError("--endpoint is required for expand");
  std::vector<Sample> samples = read_samples(fs::path(in_path));

  EndpointConfig endpoint;
  endpoint.base_url = cfg.endpoint_url;
  endpoint.model_name = cfg.endpoint_model;
  endpoint.api_key_env_var = cfg.api_key_env;
  endpoint.max_retries = cfg.max_retries;
  endpoint.backoff_base_seconds = cfg.backoff;
  endpoint.timeout_seconds = cfg.timeout;
  endpoint.temperature = cfg.temperature;
  HttpChatClient client(endpoint);

  ExpandOptions options;
  options.dialects = parse_dialect_list(cfg.dialects);
  options.concurrency = cfg.concurrency;
  if (!template_path.empty()) {
    options.prompt.text = trim_ascii(read_text_file(template_path));
    if (cfg.dialect_names == "arabic") {
      for (Dialect d : kAllDialects) {
        options.prompt.dialect_names[d] = std::string(dialect_display_name_arabic(d));
      }
    }
  }

  ExpansionResult result = expand_dataset(samples, client, options);
  write_samples(result.samples, fs::path(out_path));
  write_sidecar(out_path, cfg);
  if (!records_path.empty()) write_translation_records(result.records, records_path);

  std::size_t failed = result.records.size() - result.ok_count();
  std::cout << "inputs: " << samples.size() << "\n"
            << "requests: " << result.records.size() << "\n"
            << "ok: " << result.ok_count() << "\n"
            << "failed: " << failed << "\n";
  if (result.ok_count() == 0 && !result.records.empty()) {
    std::cerr << "error: every translation request failed\n";
    return kExitRuntime;
  }
  return failed == 0 ? kExitOk : kExitRuntime;
}

int cmd_spotcheck(const RunConfig& cfg, const std::string& in_path, const std::string& out_csv) {
  std::vector<Sample> samples = read_samples(fs::path(in_path));
  std::vector<ReviewRow> rows = spot_check_sample(samples, cfg.spotcheck_n, cfg.seed);
  write_review_csv(rows, out_csv, config_echo(cfg));
  std::cout << "review rows: " << rows.size() << "\n";
  return kExitOk;
}

int cmd_build_graphs(const RunConfig& cfg, const std::string& in_path,
                     const std::string& out_path) {
  std::vector<Sample> samples = read_samples(fs::path(in_path));
  GraphConfig gc;
  gc.window = cfg.window;
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw IoError("cannot open graph dump for writing: " + out_path);
  for (const Sample& s : samples) {
    WordGraph g = build_cooccurrence_graph(tokenize(s.text), gc);
    nlohmann::ordered_json j;
    j["id"] = s.id;
    nlohmann::ordered_json gj = graph_to_json(g);
    for (auto& [k, v] : gj.items()) j[k] = v;
    out << j.dump() << '\n';
  }
  write_sidecar(out_path, cfg);
  std::cout << "graphs: " << samples.size() << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const std::string& train_path, const std::string& val_path,
              const std::string& out_dir) {
  DatasetSplit split;
  split.train = read_samples(fs::path(train_path));
  if (!val_path.empty()) split.validation = read_samples(fs::path(val_path));
  split.seed = cfg.seed;

  ModelConfig mc = model_config_from(cfg, cfg.adversarial);
  Vocabulary vocab;
  if (mc.text_mode == TextEncoderMode::toy_transformer) vocab = Vocabulary::build(split.train);
  FusionModel<float> model(mc, std::move(vocab), cfg.seed);
  if (auto table = load_embeddings_if_needed(cfg)) model.attach_embeddings(table);

  fs::create_directories(out_dir);
  TrainIo io;
  io.final_checkpoint = fs::path(out_dir) / "final.ckpt";
  io.best_checkpoint = fs::path(out_dir) / "best.ckpt";
  io.history_csv = fs::path(out_dir) / "history.csv";
  io.config_echo = config_echo(cfg);

  TrainResult result = train(model, split, train_config_from(cfg), io);
  for (const std::string& w : result.warnings) std::cerr << "warning: " << w << "\n";
  for (const EpochStats& e : result.history) {
    std::cout << "epoch " << e.epoch << ": loss " << e.task_loss << ", acc " << e.task_accuracy;
    if (e.dialect_loss) std::cout << ", dialect_loss " << *e.dialect_loss;
    if (e.validation_accuracy) std::cout << ", val_acc " << *e.validation_accuracy;
    std::cout << "\n";
  }
  if (!split.validation.empty()) {
    std::cout << "best epoch: " << result.best_epoch << " (val_acc "
              << result.best_validation_accuracy << ")\n";
  }
  std::cout << "wrote " << (fs::path(out_dir) / "final.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_eval(RunConfig cfg, bool window_explicit, const std::string& checkpoint_path,
             const std::string& data_path, const std::string& out_prefix) {
  nlohmann::json ckpt_echo;
  FusionModel<float> model = load_checkpoint<float>(checkpoint_path, &ckpt_echo);
  if (auto table = load_embeddings_if_needed(cfg)) model.attach_embeddings(table);
  if (model.config().text_mode == TextEncoderMode::precomputed &&
      cfg.text_encoder != "precomputed") {
    throw ConfigError("checkpoint uses precomputed embeddings; pass --text-encoder precomputed "
                      "and --embeddings");
  }

  // Reuse the training window unless one was given explicitly.
  if (!window_explicit && ckpt_echo.contains("window")) {
    cfg.window = ckpt_echo.at("window").get<int>();
  }

  // Echo the dimensions of the model actually evaluated.
  const ModelConfig& mc = model.config();
  cfg.text_encoder = std::string(text_encoder_mode_name(mc.text_mode));
  cfg.text_hidden = mc.text_hidden;
  cfg.text_blocks = mc.text_blocks;
  cfg.text_heads = mc.text_heads;
  cfg.max_tokens = mc.max_tokens;
  cfg.graph_hidden = mc.graph_hidden;
  cfg.gcn_layers = mc.gcn_layers;
  cfg.fusion_dim = mc.fusion_dim;
  cfg.fusion_heads = mc.fusion_heads;
  cfg.classifier_hidden = mc.classifier_hidden;
  std::vector<Sample> samples = read_samples(fs::path(data_path));
  GraphConfig gc;
  gc.window = cfg.window;
  EvalReport report = evaluate(model, samples, gc);

  nlohmann::ordered_json echo = config_echo(cfg);
  export_report(report, out_prefix + ".json", ReportFormat::json, echo);
  export_report(report, out_prefix + ".csv", ReportFormat::csv, echo);

  std::cout << "samples: " << report.n_samples << "\n";
  std::cout << "overall accuracy: " << report.overall_accuracy << "\n";
  for (const auto& [d, c] : report.per_dialect) {
    std::cout << dialect_code(d) << " accuracy: " << c.accuracy() << " (n=" << c.total() << ")\n";
  }
  return kExitOk;
}

int cmd_gradcheck() {
  std::vector<OpCheck> checks = run_gradcheck_suite(20, 1e-4);
  bool all_passed = true;
  for (const OpCheck& c : checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  max_rel_err=" << c.max_rel_err
              << "  tol=" << c.tol << "\n";
    all_passed = all_passed && c.passed;
  }
  std::cout << (all_passed ? "gradcheck: all operations verified\n"
                           : "gradcheck: FAILURES detected\n");
  return all_passed ? kExitOk : kExitRuntime;
}

int cmd_report(const std::string& in_path, const std::string& csv_out,
               const std::string& json_out) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(in_path));
  } catch (const nlohmann::json::exception& e) {
    throw CorpusError(in_path + ": malformed report: " + e.what());
  }
  EvalReport report = report_from_json(j);
  nlohmann::json echo = j.value("config", nlohmann::json::object());

  std::cout << "overall accuracy: " << report.overall_accuracy << " (n=" << report.n_samples
            << ")\n";
  for (const auto& [d, c] : report.per_dialect) {
    std::cout << "  " << dialect_code(d) << ": " << c.accuracy() << " (n=" << c.total() << ")\n";
  }
  if (!csv_out.empty()) export_report(report, csv_out, ReportFormat::csv, echo);
  if (!json_out.empty()) export_report(report, json_out, ReportFormat::json, echo);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Arabic commonsense validation with graph-text fusion"};
  app.require_subcommand(1);

  RunConfig cfg;

  // The config file is applied before flag parsing so flags win.
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    try {
      if (arg == "--config" && i + 1 < argc) {
        load_config_file(argv[i + 1], cfg);
      } else if (arg.rfind("--config=", 0) == 0) {
        load_config_file(arg.substr(9), cfg);
      }
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitUsage;
    }
  }

  std::string config_path;  // consumed above; registered so CLI11 accepts it
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file (flags override it)");
    sub->add_option("--seed", cfg.seed, "master random seed");
    sub->add_option("--window", cfg.window, "co-occurrence window size");
  };
  auto add_model_options = [&](CLI::App* sub) {
    sub->add_option("--text-encoder", cfg.text_encoder, "text encoder: toy or precomputed")
        ->check(CLI::IsMember({"toy", "precomputed"}));
    sub->add_option("--embeddings", cfg.embeddings_path, "precomputed embeddings jsonl");
    sub->add_option("--text-hidden", cfg.text_hidden);
    sub->add_option("--text-blocks", cfg.text_blocks);
    sub->add_option("--text-heads", cfg.text_heads);
    sub->add_option("--max-tokens", cfg.max_tokens);
    sub->add_option("--graph-hidden", cfg.graph_hidden);
    sub->add_option("--gcn-layers", cfg.gcn_layers);
    sub->add_option("--fusion-dim", cfg.fusion_dim);
    sub->add_option("--fusion-heads", cfg.fusion_heads);
    sub->add_option("--classifier-hidden", cfg.classifier_hidden);
  };

  // prepare
  std::string pairs_path, out_path;
  CLI::App* prepare = app.add_subcommand("prepare", "decouple pairs, normalize, dedup, write");
  prepare->add_option("--pairs", pairs_path, "pair jsonl file")->required();
  prepare->add_option("--out", out_path, "output sample jsonl")->required();
  add_common(prepare);

  // expand
  std::string expand_in, expand_out, records_path, template_path;
  CLI::App* expand = app.add_subcommand("expand", "translate MSA samples into dialects");
  expand->add_option("--in", expand_in, "MSA sample jsonl")->required();
  expand->add_option("--out", expand_out, "output dialectal sample jsonl")->required();
  expand->add_option("--records", records_path, "translation record jsonl");
  expand->add_option("--endpoint", cfg.endpoint_url, "chat-completion endpoint url");
  expand->add_option("--model", cfg.endpoint_model, "model name sent to the endpoint");
  expand->add_option("--api-key-env", cfg.api_key_env, "environment variable with the api key");
  expand->add_option("--max-retries", cfg.max_retries);
  expand->add_option("--backoff", cfg.backoff, "backoff base in seconds");
  expand->add_option("--timeout", cfg.timeout, "request timeout in seconds");
  expand->add_option("--temperature", cfg.temperature);
  expand->add_option("--dialects", cfg.dialects, "comma-separated dialect codes");
  expand->add_option("--concurrency", cfg.concurrency, "max in-flight requests");
  expand->add_option("--prompt-template", template_path, "file with a custom prompt template");
  expand->add_option("--dialect-names", cfg.dialect_names, "names in custom templates")
      ->check(CLI::IsMember({"arabic", "english"}));
  add_common(expand);

  // spotcheck
  std::string spot_in, spot_out;
  CLI::App* spotcheck = app.add_subcommand("spotcheck", "export a review sheet per dialect");
  spotcheck->add_option("--in", spot_in, "sample jsonl (dialectal + MSA parents)")->required();
  spotcheck->add_option("--out", spot_out, "review csv")->required();
  spotcheck->add_option("--n", cfg.spotcheck_n, "rows per dialect");
  add_common(spotcheck);

  // build-graphs
  std::string graphs_in, graphs_out;
  CLI::App* build_graphs = app.add_subcommand("build-graphs", "dump per-sample word graphs");
  build_graphs->add_option("--in", graphs_in)->required();
  build_graphs->add_option("--out", graphs_out)->required();
  add_common(build_graphs);

  // train
  std::string train_path, val_path, out_dir;
  CLI::App* train_cmd = app.add_subcommand("train", "train the fusion classifier");
  train_cmd->add_option("--train", train_path, "training sample jsonl")->required();
  train_cmd->add_option("--val", val_path, "validation sample jsonl");
  train_cmd->add_option("--out-dir", out_dir, "directory for checkpoints and history")
      ->required();
  train_cmd->add_option("--lr", cfg.lr);
  train_cmd->add_option("--weight-decay", cfg.weight_decay);
  train_cmd->add_option("--epochs", cfg.epochs);
  train_cmd->add_option("--batch-size", cfg.batch_size);
  train_cmd->add_flag("--adversarial", cfg.adversarial, "joint adversarial dialect objective");
  train_cmd->add_option("--lambda", cfg.lambda_adv, "gradient reversal strength");
  train_cmd->add_option("--adv-loss-weight", cfg.adv_loss_weight);
  add_model_options(train_cmd);
  add_common(train_cmd);

  // eval
  std::string ckpt_path, eval_data, out_prefix;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ckpt_path)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--out-prefix", out_prefix, "writes <prefix>.json and <prefix>.csv")
      ->required();
  eval_cmd->add_option("--text-encoder", cfg.text_encoder)
      ->check(CLI::IsMember({"toy", "precomputed"}));
  eval_cmd->add_option("--embeddings", cfg.embeddings_path);
  add_common(eval_cmd);

  // gradcheck
  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference verification of all operators");

  // report
  std::string report_in, report_csv, report_json;
  CLI::App* report_cmd = app.add_subcommand("report", "print or convert an evaluation report");
  report_cmd->add_option("--in", report_in, "report json")->required();
  report_cmd->add_option("--csv", report_csv, "re-export as csv");
  report_cmd->add_option("--json", report_json, "re-export as json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(cfg, pairs_path, out_path);
    if (expand->parsed()) return cmd_expand(cfg, expand_in, expand_out, records_path, template_path);
    if (spotcheck->parsed()) return cmd_spotcheck(cfg, spot_in, spot_out);
    if (build_graphs->parsed()) return cmd_build_graphs(cfg, graphs_in, graphs_out);
    if (train_cmd->parsed()) return cmd_train(cfg, train_path, val_path, out_dir);
    if (eval_cmd->parsed()) {
      bool window_explicit = eval_cmd->count("--window") > 0;
      return cmd_eval(cfg, window_explicit, ckpt_path, eval_data, out_prefix);
    }
    if (gradcheck_cmd->parsed()) return cmd_gradcheck();
    if (report_cmd->parsed()) return cmd_report(report_in, report_csv, report_json);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CorpusError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const GraphError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const ModelError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const TrainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const AutodiffError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
