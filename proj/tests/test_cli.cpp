// End-to-end tests driving the built CLI binary.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "fixtures.hpp"
#include "graphsense/corpus.hpp"
#include "graphsense/train.hpp"

namespace fs = std::filesystem;
using namespace graphsense;
using nlohmann::json;

namespace {

const char* cli_path() { return GRAPHSENSE_CLI_PATH; }

struct RunOutput {
  int exit_code = -1;
  std::string stdout_text;
};

RunOutput run_cli(const std::string& args, const fs::path& dir) {
  fs::path out_file = dir / "cli_stdout.txt";
  std::string cmd = std::string(cli_path()) + " " + args + " > " + out_file.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  RunOutput out;
  out.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  out.stdout_text = ss.str();
  return out;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("graphsense_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter().fetch_add(1)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static std::atomic<int>& counter() {
    static std::atomic<int> c{0};
    return c;
  }
};

void write_pair_file(const fs::path& path, std::size_t n) {
  std::vector<PairInstance> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    PairInstance p;
    p.id = "p" + std::to_string(i);
    p.sent_a = (i % 2 == 0 ? std::string("sigpos") : std::string("signeg")) + " alpha " +
               std::to_string(i);
    p.sent_b = (i % 2 == 0 ? std::string("signeg") : std::string("sigpos")) + " beta " +
               std::to_string(i);
    p.correct = i % 2 == 0 ? PairChoice::a : PairChoice::b;
    p.source = Source::synthetic;
    pairs.push_back(std::move(p));
  }
  write_pairs(pairs, path);
}

std::string small_model_flags() {
  return "--text-hidden 16 --text-blocks 1 --text-heads 2 --max-tokens 12 --graph-hidden 16 "
         "--gcn-layers 2 --fusion-dim 16 --fusion-heads 2 --classifier-hidden 16";
}

}  // namespace

TEST_CASE("prepare decouples, dedups and writes deterministically") {
  TempDir dir;
  write_pair_file(dir.path / "pairs.jsonl", 50);

  RunOutput r1 = run_cli("prepare --pairs " + (dir.path / "pairs.jsonl").string() + " --out " +
                             (dir.path / "a.jsonl").string(),
                         dir.path);
  REQUIRE(r1.exit_code == 0);
  CHECK(r1.stdout_text.find("after dedup: 100") != std::string::npos);

  std::vector<Sample> samples = read_samples(dir.path / "a.jsonl");
  CHECK(samples.size() == 100);

  // Rerun on the same input produces byte-identical output.
  RunOutput r2 = run_cli("prepare --pairs " + (dir.path / "pairs.jsonl").string() + " --out " +
                             (dir.path / "b.jsonl").string(),
                         dir.path);
  REQUIRE(r2.exit_code == 0);
  CHECK(read_text_file(dir.path / "a.jsonl") == read_text_file(dir.path / "b.jsonl"));

  // The sidecar carries the effective config echo.
  json sidecar = json::parse(read_text_file(dir.path / "a.jsonl.run.json"));
  CHECK(sidecar["config"]["window"] == 3);
}

TEST_CASE("prepare fails cleanly on bad input") {
  TempDir dir;
  write_text_file(dir.path / "empty.jsonl", "");
  RunOutput r = run_cli("prepare --pairs " + (dir.path / "empty.jsonl").string() + " --out " +
                            (dir.path / "out.jsonl").string(),
                        dir.path);
  CHECK(r.exit_code == 2);

  write_text_file(dir.path / "bad.jsonl", "{broken\n");
  RunOutput r2 = run_cli("prepare --pairs " + (dir.path / "bad.jsonl").string() + " --out " +
                             (dir.path / "out.jsonl").string(),
                         dir.path);
  CHECK(r2.exit_code == 2);
  CHECK(r2.stdout_text.find("line 1") != std::string::npos);

  RunOutput r3 = run_cli("prepare --pairs missing.jsonl", dir.path);
  CHECK(r3.exit_code == 1);  // missing required --out
}

TEST_CASE("config file values are overridden by flags and echoed") {
  TempDir dir;
  write_pair_file(dir.path / "pairs.jsonl", 10);
  write_text_file(dir.path / "cfg.json", R"({"seed": 99, "window": 4})");

  RunOutput r = run_cli("prepare --pairs " + (dir.path / "pairs.jsonl").string() + " --out " +
                            (dir.path / "out.jsonl").string() + " --config " +
                            (dir.path / "cfg.json").string() + " --window 5",
                        dir.path);
  REQUIRE(r.exit_code == 0);
  json sidecar = json::parse(read_text_file(dir.path / "out.jsonl.run.json"));
  CHECK(sidecar["config"]["seed"] == 99);    // from file
  CHECK(sidecar["config"]["window"] == 5);   // flag wins
}

TEST_CASE("spotcheck writes a deterministic review sheet") {
  TempDir dir;
  std::vector<Sample> samples;
  for (int i = 0; i < 60; ++i) {
    std::string id = "p" + std::to_string(i);
    samples.push_back({id, "msa " + std::to_string(i), 1, Dialect::msa, Source::synthetic,
                       std::nullopt});
    samples.push_back({id + "@egy", "egy " + std::to_string(i), 1, Dialect::egyptian,
                       Source::synthetic, id});
    samples.push_back({id + "@glf", "glf " + std::to_string(i), 1, Dialect::gulf,
                       Source::synthetic, id});
  }
  write_samples(samples, dir.path / "samples.jsonl");

  std::string base = "spotcheck --in " + (dir.path / "samples.jsonl").string() + " --seed 4";
  RunOutput r1 = run_cli(base + " --out " + (dir.path / "r1.csv").string(), dir.path);
  REQUIRE(r1.exit_code == 0);
  RunOutput r2 = run_cli(base + " --out " + (dir.path / "r2.csv").string(), dir.path);
  REQUIRE(r2.exit_code == 0);
  CHECK(read_text_file(dir.path / "r1.csv") == read_text_file(dir.path / "r2.csv"));

  // 50 rows per dialect present (header + config line + 100 rows).
  std::istringstream in(read_text_file(dir.path / "r1.csv"));
  std::string line;
  std::size_t egy = 0, glf = 0;
  while (std::getline(in, line)) {
    if (line.rfind("#", 0) == 0) continue;
    if (line.find(",egy,") != std::string::npos) ++egy;
    if (line.find(",glf,") != std::string::npos) ++glf;
  }
  CHECK(egy == 50);
  CHECK(glf == 50);
}

TEST_CASE("build-graphs dumps one json object per sample") {
  TempDir dir;
  std::vector<Sample> samples = fixtures::separable_dataset(12, 3, "g");
  write_samples(samples, dir.path / "samples.jsonl");
  RunOutput r = run_cli("build-graphs --in " + (dir.path / "samples.jsonl").string() + " --out " +
                            (dir.path / "graphs.jsonl").string() + " --window 2",
                        dir.path);
  REQUIRE(r.exit_code == 0);
  std::istringstream in(read_text_file(dir.path / "graphs.jsonl"));
  std::string line;
  std::size_t count = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    CHECK(j.contains("id"));
    CHECK(j.contains("nodes"));
    CHECK(j.contains("edges"));
    CHECK(j.contains("features"));
    ++count;
  }
  CHECK(count == 12);
}

TEST_CASE("train then eval reaches high accuracy on the separable fixture") {
  TempDir dir;
  auto train_set = fixtures::separable_dataset(128, 5, "tr");
  auto test_set = fixtures::separable_dataset(64, 6, "te");
  write_samples(train_set, dir.path / "train.jsonl");
  write_samples(test_set, dir.path / "test.jsonl");

  RunOutput tr = run_cli("train --train " + (dir.path / "train.jsonl").string() + " --out-dir " +
                             (dir.path / "run").string() + " --lr 0.001 --epochs 20 " +
                             small_model_flags() + " --seed 3",
                         dir.path);
  REQUIRE(tr.exit_code == 0);
  REQUIRE(fs::exists(dir.path / "run" / "final.ckpt"));
  REQUIRE(fs::exists(dir.path / "run" / "history.csv"));

  RunOutput ev = run_cli("eval --checkpoint " + (dir.path / "run" / "final.ckpt").string() +
                             " --data " + (dir.path / "test.jsonl").string() + " --out-prefix " +
                             (dir.path / "report").string(),
                         dir.path);
  REQUIRE(ev.exit_code == 0);
  json report = json::parse(read_text_file(dir.path / "report.json"));
  CHECK(report["overall_accuracy"].get<double>() >= 0.95);

  // The report echoes the dims of the evaluated model, not CLI defaults.
  CHECK(report["config"]["model"]["text_hidden"] == 16);
  CHECK(report["config"]["train"]["lr"] == 2e-05);  // eval run's own training knobs stay default

  // History csv embeds the training config echo.
  std::string history = read_text_file(dir.path / "run" / "history.csv");
  CHECK(history.rfind("# config:", 0) == 0);
  json hist_echo = json::parse(history.substr(10, history.find('\n') - 10));
  CHECK(hist_echo["train"]["lr"] == 0.001);
  CHECK(hist_echo["model"]["text_hidden"] == 16);

  // report subcommand round-trips the json.
  RunOutput rep = run_cli("report --in " + (dir.path / "report.json").string() + " --json " +
                              (dir.path / "report2.json").string(),
                          dir.path);
  REQUIRE(rep.exit_code == 0);
  json again = json::parse(read_text_file(dir.path / "report2.json"));
  CHECK(again["overall_accuracy"] == report["overall_accuracy"]);
  CHECK(again["per_dialect"] == report["per_dialect"]);
}

TEST_CASE("eval with a missing checkpoint fails with a runtime error") {
  TempDir dir;
  std::vector<Sample> samples = fixtures::separable_dataset(4, 2, "x");
  write_samples(samples, dir.path / "d.jsonl");
  RunOutput r = run_cli("eval --checkpoint " + (dir.path / "nope.ckpt").string() + " --data " +
                            (dir.path / "d.jsonl").string() + " --out-prefix " +
                            (dir.path / "rep").string(),
                        dir.path);
  CHECK(r.exit_code == 3);
}

TEST_CASE("gradcheck subcommand verifies every operator") {
  TempDir dir;
  RunOutput r = run_cli("gradcheck", dir.path);
  REQUIRE(r.exit_code == 0);
  CHECK(r.stdout_text.find("FAIL") == std::string::npos);
  CHECK(r.stdout_text.find("matmul") != std::string::npos);
  CHECK(r.stdout_text.find("fused_forward") != std::string::npos);
  CHECK(r.stdout_text.find("grad_reverse") != std::string::npos);
}

namespace {

// Scripted chat endpoint for the expand subcommand test.
class CliMockEndpoint {
 public:
  CliMockEndpoint() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request&, httplib::Response& res) {
      std::size_t n = hits_.fetch_add(1);
      if (n % 7 == 6) {
        res.status = 500;  // a deterministic slice of hard failures
        res.set_content("{}", "application/json");
        return;
      }
      json j;
      j["choices"] = {{{"message", {{"role", "assistant"},
                                    {"content", "ترجمة " + std::to_string(n)}}}}};
      res.set_content(j.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this]() { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~CliMockEndpoint() {
    server_.stop();
    thread_.join();
  }
  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> hits_{0};
};

}  // namespace

TEST_CASE("expand drives a chat endpoint and multiplies the corpus") {
  TempDir dir;
  CliMockEndpoint mock;
  setenv("GRAPHSENSE_CLI_TEST_KEY", "sk-cli", 1);

  std::vector<Sample> msa;
  for (int i = 0; i < 10; ++i) {
    msa.push_back({"m" + std::to_string(i), "جملة فصحى " + std::to_string(i), i % 2, Dialect::msa,
                   Source::comve_ar, std::nullopt});
  }
  write_samples(msa, dir.path / "msa.jsonl");

  RunOutput r = run_cli("expand --in " + (dir.path / "msa.jsonl").string() + " --out " +
                            (dir.path / "dialects.jsonl").string() + " --records " +
                            (dir.path / "records.jsonl").string() + " --endpoint " + mock.url() +
                            " --model test --api-key-env GRAPHSENSE_CLI_TEST_KEY " +
                            "--max-retries 0 --backoff 0.01",
                        dir.path);
  // Some scripted requests fail, so the run reports a nonzero exit but still
  // writes every record.
  CHECK(r.exit_code == 3);
  CHECK(r.stdout_text.find("requests: 40") != std::string::npos);

  std::vector<Sample> dialectal = read_samples(dir.path / "dialects.jsonl");
  std::size_t records = 0, ok = 0;
  std::istringstream in(read_text_file(dir.path / "records.jsonl"));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++records;
    ok += json::parse(line)["status"] == "ok" ? 1 : 0;
  }
  CHECK(records == 40);  // 10 samples x 4 dialects
  CHECK(ok == dialectal.size());
  CHECK(ok < 40);
  CHECK(ok > 0);

  for (const Sample& s : dialectal) {
    CHECK(s.dialect != Dialect::msa);
    REQUIRE(s.parent_id.has_value());
  }
}

TEST_CASE("expand with an all-failing endpoint exits nonzero with zero ok") {
  TempDir dir;
  // Point at a closed port: every request fails at the network level.
  std::vector<Sample> msa = {{"m0", "نص", 1, Dialect::msa, Source::comve_ar, std::nullopt}};
  write_samples(msa, dir.path / "msa.jsonl");
  setenv("GRAPHSENSE_CLI_TEST_KEY", "sk", 1);
  RunOutput r = run_cli("expand --in " + (dir.path / "msa.jsonl").string() + " --out " +
                            (dir.path / "out.jsonl").string() +
                            " --endpoint http://127.0.0.1:9/v1/chat/completions --model t " +
                            "--api-key-env GRAPHSENSE_CLI_TEST_KEY --max-retries 0 --backoff 0.01 "
                            "--timeout 2",
                        dir.path);
  CHECK(r.exit_code == 3);
  CHECK(r.stdout_text.find("ok: 0") != std::string::npos);
}

TEST_CASE("train accepts precomputed embeddings") {
  TempDir dir;
  auto ds = fixtures::xor_dataset(64, 3);
  write_samples(ds.samples, dir.path / "train.jsonl");
  {
    std::ofstream emb(dir.path / "emb.jsonl");
    for (const auto& [id, vec] : ds.embeddings) {
      json j;
      j["id"] = id;
      j["vector"] = vec;
      emb << j.dump() << "\n";
    }
  }
  RunOutput r = run_cli("train --train " + (dir.path / "train.jsonl").string() + " --out-dir " +
                            (dir.path / "run").string() +
                            " --text-encoder precomputed --embeddings " +
                            (dir.path / "emb.jsonl").string() +
                            " --text-hidden 4 --graph-hidden 8 --gcn-layers 2 --fusion-dim 8 "
                            "--fusion-heads 2 --classifier-hidden 8 --lr 0.003 --epochs 2",
                        dir.path);
  REQUIRE(r.exit_code == 0);

  // Evaluating that checkpoint without embeddings is a usage error.
  RunOutput bad = run_cli("eval --checkpoint " + (dir.path / "run" / "final.ckpt").string() +
                              " --data " + (dir.path / "train.jsonl").string() + " --out-prefix " +
                              (dir.path / "rep").string(),
                          dir.path);
  CHECK(bad.exit_code == 1);

  RunOutput good = run_cli("eval --checkpoint " + (dir.path / "run" / "final.ckpt").string() +
                               " --data " + (dir.path / "train.jsonl").string() +
                               " --text-encoder precomputed --embeddings " +
                               (dir.path / "emb.jsonl").string() + " --out-prefix " +
                               (dir.path / "rep").string(),
                           dir.path);
  CHECK(good.exit_code == 0);
}
