#pragma once

// Labeled-sample corpus handling: the single-sentence binary format, pair
// decoupling, text normalization, exact dedup, stratified splitting, count
// tallies and the JSON-lines file formats.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "graphsense/rng.hpp"
#include "graphsense/unicode.hpp"
#include "graphsense/util.hpp"

namespace graphsense {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Dialect { msa, egyptian, gulf, levantine, moroccan };

inline constexpr std::array<Dialect, 5> kAllDialects = {
    Dialect::msa, Dialect::egyptian, Dialect::gulf, Dialect::levantine, Dialect::moroccan};

inline constexpr std::array<Dialect, 4> kNonMsaDialects = {
    Dialect::egyptian, Dialect::gulf, Dialect::levantine, Dialect::moroccan};

inline std::string_view dialect_code(Dialect d) {
  switch (d) {
    case Dialect::msa: return "msa";
    case Dialect::egyptian: return "egy";
    case Dialect::gulf: return "glf";
    case Dialect::levantine: return "lev";
    case Dialect::moroccan: return "mor";
  }
  return "msa";
}

inline std::string_view dialect_name(Dialect d) {
  switch (d) {
    case Dialect::msa: return "MSA";
    case Dialect::egyptian: return "Egyptian";
    case Dialect::gulf: return "Gulf";
    case Dialect::levantine: return "Levantine";
    case Dialect::moroccan: return "Moroccan";
  }
  return "MSA";
}

inline Dialect dialect_from_code(std::string_view code) {
  for (Dialect d : kAllDialects) {
    if (dialect_code(d) == code) return d;
  }
  throw CorpusError("unknown dialect code: '" + std::string(code) + "'");
}

enum class Source { comve_ar, arabicsense, synthetic };

inline std::string_view source_code(Source s) {
  switch (s) {
    case Source::comve_ar: return "comve_ar";
    case Source::arabicsense: return "arabicsense";
    case Source::synthetic: return "synthetic";
  }
  return "synthetic";
}

inline Source source_from_code(std::string_view code) {
  if (code == "comve_ar") return Source::comve_ar;
  if (code == "arabicsense") return Source::arabicsense;
  if (code == "synthetic") return Source::synthetic;
  throw CorpusError("unknown source code: '" + std::string(code) + "'");
}

// One labeled sentence; label 1 = reasonable, 0 = non-reasonable. Dialectal
// samples carry the id of their MSA ancestor in parent_id.
struct Sample {
  std::string id;
  std::string text;
  int label = 0;
  Dialect dialect = Dialect::msa;
  Source source = Source::synthetic;
  std::optional<std::string> parent_id;

  bool operator==(const Sample&) const = default;
};

enum class PairChoice { a, b };

// A two-choice source record before decoupling: exactly one of the two
// sentences is commonsensical.
struct PairInstance {
  std::string id;
  std::string sent_a;
  std::string sent_b;
  PairChoice correct = PairChoice::a;
  Source source = Source::synthetic;
};

// NFC, whitespace-run collapse, trim, tatweel removal. Diacritics are kept.
inline std::string normalize_text(std::string_view text) {
  std::vector<char32_t> cps = utf8_decode(text);
  std::vector<char32_t> no_tatweel;
  no_tatweel.reserve(cps.size());
  for (char32_t cp : cps) {
    if (cp != kTatweel) no_tatweel.push_back(cp);
  }
  // Tatweel removal happens before composition so that marks separated by a
  // tatweel still compose; NFC itself never produces one.
  std::string composed = to_nfc(utf8_encode(no_tatweel));
  cps = utf8_decode(composed);

  std::vector<char32_t> out;
  out.reserve(cps.size());
  bool pending_space = false;
  for (char32_t cp : cps) {
    if (is_space_cp(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(U' ');
      pending_space = false;
    }
    out.push_back(cp);
  }
  return utf8_encode(out);
}

// Turns each two-choice pair into two labeled samples: the correct sentence
// gets label 1, the other label 0. Child ids are "<pair_id>#a" / "<pair_id>#b".
inline std::vector<Sample> decouple_pairs(std::span<const PairInstance> pairs) {
  std::unordered_set<std::string> seen;
  seen.reserve(pairs.size());
  std::vector<Sample> out;
  out.reserve(pairs.size() * 2);
  for (const PairInstance& p : pairs) {
    if (p.sent_a.empty() || p.sent_b.empty()) {
      throw CorpusError("pair '" + p.id + "': empty sentence");
    }
    if (!seen.insert(p.id).second) {
      throw CorpusError("duplicate pair id: '" + p.id + "'");
    }
    int label_a = p.correct == PairChoice::a ? 1 : 0;
    out.push_back(Sample{p.id + "#a", p.sent_a, label_a, Dialect::msa, p.source, std::nullopt});
    out.push_back(Sample{p.id + "#b", p.sent_b, 1 - label_a, Dialect::msa, p.source, std::nullopt});
  }
  return out;
}

inline void normalize_samples(std::vector<Sample>& samples) {
  for (Sample& s : samples) {
    s.text = normalize_text(s.text);
    if (s.text.empty()) {
      throw CorpusError("sample '" + s.id + "': text is empty after normalization");
    }
  }
}

struct DedupWarning {
  std::string text_key;
  std::string kept_id;
  int kept_label = 0;
  std::string dropped_id;
  int dropped_label = 0;
};

struct DedupResult {
  std::vector<Sample> samples;
  std::vector<DedupWarning> label_conflicts;
};

// Keeps the first occurrence per normalized-text key, in input order. Keys
// whose duplicates disagree in label produce a warning record.
inline DedupResult dedup(std::span<const Sample> samples) {
  DedupResult result;
  result.samples.reserve(samples.size());
  std::unordered_map<std::string, std::size_t> first_by_key;
  first_by_key.reserve(samples.size());
  for (const Sample& s : samples) {
    std::string key = normalize_text(s.text);
    auto [it, inserted] = first_by_key.emplace(std::move(key), result.samples.size());
    if (inserted) {
      result.samples.push_back(s);
      continue;
    }
    const Sample& kept = result.samples[it->second];
    if (kept.label != s.label) {
      result.label_conflicts.push_back(
          DedupWarning{it->first, kept.id, kept.label, s.id, s.label});
    }
  }
  return result;
}

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> validation;
  std::vector<Sample> test;
  std::uint64_t seed = 0;
};

namespace detail {

// Largest-remainder apportionment of n into three parts proportional to r.
inline std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& r) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = static_cast<double>(n) * r[i];
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-12));
    frac[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < n; ++k) {
    ++counts[order[k % 3]];
    ++assigned;
  }
  return counts;
}

}  // namespace detail

// Deterministic split stratified by (label, dialect). Every split that has a
// nonzero ratio must end up containing every dialect present in the input.
inline DatasetSplit split(std::span<const Sample> samples, SplitRatios ratios, std::uint64_t seed) {
  double sum = ratios.train + ratios.validation + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw CorpusError("split ratios must sum to 1, got " + std::to_string(sum));
  }
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0) {
    throw CorpusError("split ratios must be non-negative");
  }

  std::map<std::pair<int, Dialect>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    strata[{samples[i].label, samples[i].dialect}].push_back(i);
  }

  DatasetSplit out;
  out.seed = seed;
  Rng split_rng = Rng(seed).substream("split");
  const std::array<double, 3> r = {ratios.train, ratios.validation, ratios.test};
  for (auto& [key, indices] : strata) {
    std::string stratum =
        std::string(dialect_code(key.second)) + "/label" + std::to_string(key.first);
    split_rng.substream(stratum).shuffle(indices);
    auto counts = detail::apportion(indices.size(), r);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < counts[0]; ++k) out.train.push_back(samples[indices[pos++]]);
    for (std::size_t k = 0; k < counts[1]; ++k) out.validation.push_back(samples[indices[pos++]]);
    for (std::size_t k = 0; k < counts[2]; ++k) out.test.push_back(samples[indices[pos++]]);
  }

  // Dialect coverage check: a stratum too small to reach every split makes the
  // stratification impossible.
  std::unordered_set<Dialect> present;
  for (const Sample& s : samples) present.insert(s.dialect);
  auto check_coverage = [&](const std::vector<Sample>& part, double ratio, std::string_view name) {
    if (ratio <= 0.0) return;
    std::unordered_set<Dialect> got;
    for (const Sample& s : part) got.insert(s.dialect);
    for (Dialect d : present) {
      if (!got.count(d)) {
        throw CorpusError("impossible stratification: dialect '" +
                          std::string(dialect_code(d)) + "' has too few samples to appear in the " +
                          std::string(name) + " split");
      }
    }
  };
  check_coverage(out.train, ratios.train, "train");
  check_coverage(out.validation, ratios.validation, "validation");
  check_coverage(out.test, ratios.test, "test");
  return out;
}

struct TallyKey {
  Source source;
  Dialect dialect;
  int label;
  auto operator<=>(const TallyKey&) const = default;
};

using Tally = std::map<TallyKey, std::size_t>;

inline Tally tally(std::span<const Sample> samples) {
  Tally t;
  for (const Sample& s : samples) ++t[TallyKey{s.source, s.dialect, s.label}];
  return t;
}

inline std::size_t tally_total(const Tally& t) {
  std::size_t n = 0;
  for (const auto& [k, v] : t) n += v;
  return n;
}

inline std::string format_tally(const Tally& t) {
  std::ostringstream os;
  os << "source       dialect  label  count\n";
  for (const auto& [k, v] : t) {
    os << source_code(k.source);
    for (std::size_t i = source_code(k.source).size(); i < 13; ++i) os << ' ';
    os << dialect_code(k.dialect) << "      " << k.label << "      " << v << "\n";
  }
  os << "total: " << tally_total(t) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// JSON-lines formats.
// Sample line: {"id","text","label","dialect","source","parent_id"}
// Pair line:   {"id","sent_a","sent_b","correct","source"}
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json parse_line(const std::string& line, std::string_view what,
                                 std::size_t line_no) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw CorpusError("line " + std::to_string(line_no) + ": malformed " + std::string(what) +
                      " record: " + e.what());
  }
}

template <typename T>
T require_field(const nlohmann::json& j, const char* key, std::size_t line_no) {
  if (!j.contains(key)) {
    throw CorpusError("line " + std::to_string(line_no) + ": missing \"" + key + "\" field");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw CorpusError("line " + std::to_string(line_no) + ": field \"" + key +
                      "\" has the wrong type");
  }
}

}  // namespace detail

inline nlohmann::ordered_json sample_to_json(const Sample& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["text"] = s.text;
  j["label"] = s.label;
  j["dialect"] = std::string(dialect_code(s.dialect));
  j["source"] = std::string(source_code(s.source));
  j["parent_id"] = s.parent_id ? nlohmann::ordered_json(*s.parent_id) : nlohmann::ordered_json(nullptr);
  return j;
}

inline Sample sample_from_json(const nlohmann::json& j, std::size_t line_no) {
  Sample s;
  s.id = detail::require_field<std::string>(j, "id", line_no);
  s.text = detail::require_field<std::string>(j, "text", line_no);
  s.label = detail::require_field<int>(j, "label", line_no);
  if (s.label != 0 && s.label != 1) {
    throw CorpusError("line " + std::to_string(line_no) + ": label must be 0 or 1, got " +
                      std::to_string(s.label));
  }
  try {
    s.dialect = dialect_from_code(detail::require_field<std::string>(j, "dialect", line_no));
    s.source = source_from_code(detail::require_field<std::string>(j, "source", line_no));
  } catch (const CorpusError& e) {
    throw CorpusError("line " + std::to_string(line_no) + ": " + e.what());
  }
  if (j.contains("parent_id") && !j.at("parent_id").is_null()) {
    s.parent_id = detail::require_field<std::string>(j, "parent_id", line_no);
  }
  if (s.text.empty()) {
    throw CorpusError("line " + std::to_string(line_no) + ": empty text in sample '" + s.id + "'");
  }
  if (s.dialect != Dialect::msa && !s.parent_id) {
    throw CorpusError("line " + std::to_string(line_no) + ": dialectal sample '" + s.id +
                      "' is missing its parent_id");
  }
  return s;
}

inline std::vector<Sample> read_samples(std::istream& in) {
  std::vector<Sample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(sample_from_json(detail::parse_line(line, "sample", line_no), line_no));
  }
  return out;
}

inline std::vector<Sample> read_samples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open sample file: " + path.string());
  try {
    return read_samples(in);
  } catch (const CorpusError& e) {
    throw CorpusError(path.string() + ": " + e.what());
  }
}

inline void write_samples(std::span<const Sample> samples, std::ostream& out) {
  for (const Sample& s : samples) out << sample_to_json(s).dump() << '\n';
}

inline void write_samples(std::span<const Sample> samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open sample file for writing: " + path.string());
  write_samples(samples, out);
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<PairInstance> read_pairs(std::istream& in) {
  std::vector<PairInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    nlohmann::json j = detail::parse_line(line, "pair", line_no);
    PairInstance p;
    p.id = detail::require_field<std::string>(j, "id", line_no);
    p.sent_a = detail::require_field<std::string>(j, "sent_a", line_no);
    p.sent_b = detail::require_field<std::string>(j, "sent_b", line_no);
    std::string correct = detail::require_field<std::string>(j, "correct", line_no);
    if (correct == "a") {
      p.correct = PairChoice::a;
    } else if (correct == "b") {
      p.correct = PairChoice::b;
    } else {
      throw CorpusError("line " + std::to_string(line_no) + ": correct must be \"a\" or \"b\"");
    }
    try {
      p.source = source_from_code(detail::require_field<std::string>(j, "source", line_no));
    } catch (const CorpusError& e) {
      throw CorpusError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (p.sent_a.empty() || p.sent_b.empty()) {
      throw CorpusError("line " + std::to_string(line_no) + ": empty sentence in pair '" + p.id +
                        "'");
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<PairInstance> read_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open pair file: " + path.string());
  try {
    return read_pairs(in);
  } catch (const CorpusError& e) {
    throw CorpusError(path.string() + ": " + e.what());
  }
}

inline void write_pairs(std::span<const PairInstance> pairs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open pair file for writing: " + path.string());
  for (const PairInstance& p : pairs) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["sent_a"] = p.sent_a;
    j["sent_b"] = p.sent_b;
    j["correct"] = p.correct == PairChoice::a ? "a" : "b";
    j["source"] = std::string(source_code(p.source));
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace graphsense
