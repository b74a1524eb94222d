#pragma once

// Dialect expansion: renders the translation prompt, drives a configurable
// chat-completion endpoint with retry/backoff, turns MSA samples into
// dialectal variants, and exports spot-check review sheets.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "graphsense/corpus.hpp"
#include "graphsense/rng.hpp"
#include "graphsense/util.hpp"

namespace graphsense {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ChatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Arabic display names used by the built-in prompt.
inline std::string_view dialect_display_name_arabic(Dialect d) {
  switch (d) {
    case Dialect::egyptian: return "المصرية";
    case Dialect::gulf: return "الخليجية";
    case Dialect::levantine: return "الشامية";
    case Dialect::moroccan: return "المغربية";
    case Dialect::msa: return "الفصحى";
  }
  return "";
}

// Template with exactly one "{dialect}" and one "{sentence}" placeholder plus
// the display names substituted for {dialect}. A bare constructed template
// renders English dialect names; default_prompt_template() renders Arabic.
struct PromptTemplate {
  std::string text;
  std::map<Dialect, std::string> dialect_names = {
      {Dialect::egyptian, "Egyptian"},
      {Dialect::gulf, "Gulf"},
      {Dialect::levantine, "Levantine"},
      {Dialect::moroccan, "Moroccan"},
      {Dialect::msa, "MSA"},
  };
};

// Instructs an Arabic-dialect expert to translate the sentence into the target
// dialect without changing its meaning.
inline PromptTemplate default_prompt_template() {
  PromptTemplate tpl;
  tpl.text =
      "أنت خبير في اللهجات العربية. "
      "ترجم الجملة التالية إلى اللهجة {dialect} بدون تغيير المعنى:{sentence}";
  for (Dialect d : kAllDialects) {
    tpl.dialect_names[d] = std::string(dialect_display_name_arabic(d));
  }
  return tpl;
}

// Single-pass substitution on the template's own placeholder offsets: a
// "{dialect}" or "{sentence}" literal inside the sentence is preserved.
inline std::string render_prompt(const PromptTemplate& tpl, Dialect dialect,
                                 const std::string& sentence) {
  if (dialect == Dialect::msa) throw ConfigError("render_prompt: dialect must not be MSA");
  if (sentence.empty()) throw ConfigError("render_prompt: empty sentence");
  auto count = [&](std::string_view needle) {
    std::size_t c = 0;
    for (std::size_t pos = tpl.text.find(needle); pos != std::string::npos;
         pos = tpl.text.find(needle, pos + 1)) {
      ++c;
    }
    return c;
  };
  if (count("{dialect}") != 1 || count("{sentence}") != 1) {
    throw ConfigError(
        "prompt template must contain {dialect} and {sentence} exactly once each");
  }
  std::size_t pd = tpl.text.find("{dialect}");
  std::size_t ps = tpl.text.find("{sentence}");
  const std::string& name = tpl.dialect_names.at(dialect);
  std::string out;
  out.reserve(tpl.text.size() + name.size() + sentence.size());
  if (pd < ps) {
    out += tpl.text.substr(0, pd);
    out += name;
    out += tpl.text.substr(pd + 9, ps - (pd + 9));
    out += sentence;
    out += tpl.text.substr(ps + 10);
  } else {
    out += tpl.text.substr(0, ps);
    out += sentence;
    out += tpl.text.substr(ps + 10, pd - (ps + 10));
    out += name;
    out += tpl.text.substr(pd + 9);
  }
  return out;
}

struct EndpointConfig {
  std::string base_url;  // full POST target, e.g. http://host:port/v1/chat/completions
  std::string model_name;
  std::string api_key_env_var = "CHAT_API_KEY";
  int max_retries = 3;
  double backoff_base_seconds = 0.5;
  double timeout_seconds = 30.0;
  double temperature = 0.0;

  void validate() const {
    if (base_url.empty()) throw ConfigError("endpoint base_url is empty");
    if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (timeout_seconds <= 0) throw ConfigError("timeout must be positive");
  }
};

// Abstract completion client. complete() returns the assistant message
// content and throws ChatError on failure; implementations must tolerate
// concurrent calls.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

struct TranslationRecord {
  std::string parent_id;
  Dialect dialect = Dialect::egyptian;
  std::string prompt_sent;
  std::string raw_response;
  std::string extracted_text;
  bool ok = false;
  std::string error;
};

struct ExpansionResult {
  std::vector<Sample> samples;
  std::vector<TranslationRecord> records;

  std::size_t ok_count() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.ok ? 1 : 0;
    return n;
  }
};

struct ExpandOptions {
  std::vector<Dialect> dialects{kNonMsaDialects.begin(), kNonMsaDialects.end()};
  PromptTemplate prompt = default_prompt_template();
  int concurrency = 1;
};

// One record per (input x dialect); failures are captured, never dropped.
// Ok records become samples with the parent's label and lineage.
inline ExpansionResult expand_dataset(std::span<const Sample> msa_samples,
                                      ChatClient& client, const ExpandOptions& options = {}) {
  for (const Sample& s : msa_samples) {
    if (s.dialect != Dialect::msa) {
      throw CorpusError("expand_dataset: sample '" + s.id + "' is not MSA");
    }
  }
  for (Dialect d : options.dialects) {
    if (d == Dialect::msa) throw ConfigError("expand_dataset: target dialects must not include MSA");
  }

  struct Job {
    std::size_t sample_index;
    Dialect dialect;
  };
  std::vector<Job> jobs;
  jobs.reserve(msa_samples.size() * options.dialects.size());
  for (std::size_t i = 0; i < msa_samples.size(); ++i) {
    for (Dialect d : options.dialects) jobs.push_back(Job{i, d});
  }

  std::vector<TranslationRecord> records(jobs.size());
  auto run_job = [&](std::size_t j) {
    const Job& job = jobs[j];
    const Sample& parent = msa_samples[job.sample_index];
    TranslationRecord& rec = records[j];
    rec.parent_id = parent.id;
    rec.dialect = job.dialect;
    try {
      rec.prompt_sent = render_prompt(options.prompt, job.dialect, parent.text);
      rec.raw_response = client.complete(rec.prompt_sent);
      rec.extracted_text = trim_ascii(rec.raw_response);
      if (rec.extracted_text.empty()) {
        rec.error = "empty completion";
      } else {
        rec.ok = true;
      }
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
  };

  int workers = std::max(1, options.concurrency);
  if (workers == 1 || jobs.size() < 2) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (std::size_t j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1)) {
          run_job(j);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }

  ExpansionResult result;
  result.records = std::move(records);
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const TranslationRecord& rec = result.records[j];
    if (!rec.ok) continue;
    const Sample& parent = msa_samples[jobs[j].sample_index];
    Sample out;
    out.id = parent.id + "@" + std::string(dialect_code(rec.dialect));
    out.text = rec.extracted_text;
    out.label = parent.label;
    out.dialect = rec.dialect;
    out.source = parent.source;
    out.parent_id = parent.id;
    result.samples.push_back(std::move(out));
  }
  return result;
}

inline void write_translation_records(std::span<const TranslationRecord> records,
                                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open record file for writing: " + path.string());
  for (const TranslationRecord& r : records) {
    nlohmann::ordered_json j;
    j["parent_id"] = r.parent_id;
    j["dialect"] = std::string(dialect_code(r.dialect));
    j["status"] = r.ok ? "ok" : "failed";
    j["prompt_sent"] = r.prompt_sent;
    j["raw_response"] = r.raw_response;
    j["extracted_text"] = r.extracted_text;
    j["error"] = r.error;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("record write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Spot-check review sheets.
// ---------------------------------------------------------------------------

struct ReviewRow {
  std::string parent_id;
  Dialect dialect = Dialect::egyptian;
  std::string msa_text;
  std::string dialect_text;
  std::string verdict;  // left empty for the reviewer
};

// For each non-MSA dialect present, samples min(n, available) rows without
// replacement, deterministically from the seed, pairing each dialectal text
// with its MSA parent text.
inline std::vector<ReviewRow> spot_check_sample(std::span<const Sample> samples, int n,
                                                std::uint64_t seed) {
  if (n < 1) throw ConfigError("spot_check_sample: n must be >= 1");
  std::unordered_map<std::string, const Sample*> msa_by_id;
  for (const Sample& s : samples) {
    if (s.dialect == Dialect::msa) msa_by_id.emplace(s.id, &s);
  }
  std::vector<ReviewRow> rows;
  Rng root = Rng(seed).substream("spotcheck");
  for (Dialect d : kNonMsaDialects) {
    std::vector<const Sample*> pool;
    for (const Sample& s : samples) {
      if (s.dialect == d) pool.push_back(&s);
    }
    if (pool.empty()) continue;
    Rng rng = root.substream(dialect_code(d));
    std::vector<std::size_t> chosen =
        rng.sample_indices(pool.size(), static_cast<std::size_t>(n));
    for (std::size_t idx : chosen) {
      const Sample& s = *pool[idx];
      ReviewRow row;
      row.parent_id = s.parent_id.value_or("");
      row.dialect = d;
      if (s.parent_id) {
        auto it = msa_by_id.find(*s.parent_id);
        if (it != msa_by_id.end()) row.msa_text = it->second->text;
      }
      row.dialect_text = s.text;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline void write_review_csv(std::span<const ReviewRow> rows, const std::filesystem::path& path,
                             const nlohmann::json& config_echo = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open review sheet for writing: " + path.string());
  if (!config_echo.is_null() && !config_echo.empty()) {
    out << "# config: " << config_echo.dump() << '\n';
  }
  out << "parent_id,dialect,msa_text,dialect_text,verdict\n";
  for (const ReviewRow& r : rows) {
    out << csv_field(r.parent_id) << ',' << dialect_code(r.dialect) << ','
        << csv_field(r.msa_text) << ',' << csv_field(r.dialect_text) << ','
        << csv_field(r.verdict) << '\n';
  }
  if (!out) throw IoError("review sheet write failed: " + path.string());
}

}  // namespace graphsense
