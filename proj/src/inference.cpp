#include "rnkn/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rnkn/trainer.hpp"
#include "rnkn/tree.hpp"

namespace rnkn {

std::vector<std::pair<ClassId, double>> rank_probabilities(const Vec& probs) {
  std::vector<std::pair<ClassId, double>> ranking(static_cast<std::size_t>(probs.size()));
  for (Eigen::Index i = 0; i < probs.size(); ++i)
    ranking[static_cast<std::size_t>(i)] = {static_cast<ClassId>(i), probs(i)};
  std::sort(ranking.begin(), ranking.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return ranking;
}

DiagnosisResult diagnose(const EmrRecord& record, const Checkpoint& ckpt, EvidenceMode mode) {
  DiagnosisResult result;
  result.record_id = record.id;

  const auto filtered = filter_evidence(record, mode, ckpt.vocabulary);
  result.unknown_dropped = filtered.dropped;
  const auto active = instantiate_knowledge(filtered.ids, ckpt.knowledge);
  // Targets are irrelevant to the forward pass, so an empty co-occurrence
  // table keeps diagnosis self-contained in the checkpoint.
  const CooccurrenceTable empty;
  const auto tree = build_tree(filtered.ids, active, empty, ckpt.vocabulary.record_frequencies(),
                               ckpt.vocabulary.class_count());
  if (!tree) {
    result.undiagnosable = true;
    return result;
  }
  const auto trace = forward(*tree, ckpt.params);
  result.ranking = rank_probabilities(trace.probs[static_cast<std::size_t>(tree->root)]);
  return result;
}

std::set<ClassId> gold_classes(const EmrRecord& record, const Vocabulary& vocab) {
  std::set<ClassId> gold;
  for (const auto& label : record.diagnoses) {
    if (auto cls = vocab.find_class(label)) gold.insert(*cls);
  }
  return gold;
}

namespace {

bool correct_within(const DiagnosisResult& result, const std::set<ClassId>& gold, int k,
                    bool require_all) {
  if (result.undiagnosable || gold.empty()) return false;
  const auto depth = std::min<std::size_t>(static_cast<std::size_t>(k), result.ranking.size());
  std::size_t found = 0;
  for (std::size_t i = 0; i < depth; ++i) {
    if (gold.contains(result.ranking[i].first)) {
      if (!require_all) return true;
      ++found;
    }
  }
  return require_all && found == gold.size();
}

}  // namespace

double precision_at_k(std::span<const DiagnosisResult> results,
                      std::span<const std::set<ClassId>> gold, int k, bool require_all) {
  if (k < 1) throw EvalError("precision depth must be at least 1");
  if (results.empty()) throw EvalError("precision over an empty result set");
  if (results.size() != gold.size()) throw EvalError("results and gold sets differ in length");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (correct_within(results[i], gold[i], k, require_all)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(results.size());
}

double dcg_at(std::span<const std::pair<ClassId, double>> ranking,
              const std::set<ClassId>& gold, int depth) {
  double score = 0.0;
  const auto limit = std::min<std::size_t>(static_cast<std::size_t>(depth), ranking.size());
  for (std::size_t i = 0; i < limit; ++i) {
    if (!gold.contains(ranking[i].first)) continue;
    score += i == 0 ? 1.0 : 1.0 / std::log2(static_cast<double>(i + 1));
  }
  return score;
}

double dcg(const DiagnosisResult& result, const std::set<ClassId>& gold, int depth) {
  if (depth < 1) throw EvalError("dcg depth must be at least 1");
  if (result.undiagnosable) return 0.0;
  return dcg_at(result.ranking, gold, depth);
}

double EvalReport::precision_at(int k) const {
  for (const auto& [depth, value] : precision) {
    if (depth == k) return value;
  }
  return 0.0;
}

std::vector<DiagnosisResult> diagnose_all(std::span<const EmrRecord> records,
                                          const Checkpoint& ckpt, EvidenceMode mode) {
  std::vector<DiagnosisResult> results;
  results.reserve(records.size());
  for (const auto& record : records) results.push_back(diagnose(record, ckpt, mode));
  return results;
}

EvalReport evaluate(std::span<const EmrRecord> test, const Checkpoint& ckpt, EvidenceMode mode,
                    std::span<const int> k_values) {
  if (test.empty()) throw EvalError("test set is empty");

  EvalReport report;
  std::vector<DiagnosisResult> usable;
  std::vector<std::set<ClassId>> usable_gold;
  for (const auto& record : test) {
    auto result = diagnose(record, ckpt, mode);
    const auto gold = gold_classes(record, ckpt.vocabulary);
    const double score = dcg(result, gold, 10);
    report.dcg_series.emplace_back(record.id, score);
    if (result.undiagnosable) {
      ++report.skipped;
      continue;
    }
    ++report.evaluated;
    usable.push_back(std::move(result));
    usable_gold.push_back(gold);
  }

  if (report.evaluated > 0) {
    for (int k : k_values)
      report.precision.emplace_back(k, precision_at_k(usable, usable_gold, k));
    double sum = 0.0;
    for (std::size_t i = 0; i < usable.size(); ++i) sum += dcg(usable[i], usable_gold[i], 10);
    report.mean_dcg = sum / static_cast<double>(report.evaluated);
  } else {
    for (int k : k_values) report.precision.emplace_back(k, 0.0);
  }
  return report;
}

void write_rankings_csv(std::span<const DiagnosisResult> results, const Vocabulary& vocab,
                        int top_k, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EvalError("cannot write rankings file: " + path.string());
  out << "record_id,rank,class_id,disease_name,probability\n";
  char line[64];
  for (const auto& result : results) {
    const auto depth = std::min<std::size_t>(static_cast<std::size_t>(top_k),
                                             result.ranking.size());
    for (std::size_t i = 0; i < depth; ++i) {
      const auto [cls, prob] = result.ranking[i];
      const EntityId entity = vocab.class_entities[static_cast<std::size_t>(cls)];
      std::snprintf(line, sizeof(line), "%zu,%d,", i + 1, cls);
      out << result.record_id << ',' << line
          << vocab.entities[static_cast<std::size_t>(entity)].name << ',';
      std::snprintf(line, sizeof(line), "%.17g\n", prob);
      out << line;
    }
  }
}

void write_dcg_series_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EvalError("cannot write DCG series file: " + path.string());
  out << "record_id,dcg\n";
  char value[40];
  for (const auto& [id, score] : report.dcg_series) {
    std::snprintf(value, sizeof(value), "%.17g", score);
    out << id << ',' << value << '\n';
  }
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EvalError("cannot write report file: " + path.string());
  out << "metric,value\n";
  out << "evaluated," << report.evaluated << '\n';
  out << "skipped," << report.skipped << '\n';
  char value[40];
  for (const auto& [k, p] : report.precision) {
    std::snprintf(value, sizeof(value), "%.17g", p);
    out << "p_at_" << k << ',' << value << '\n';
  }
  std::snprintf(value, sizeof(value), "%.17g", report.mean_dcg);
  out << "dcg," << value << '\n';
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  out << "evaluated " << report.evaluated << " record(s), skipped " << report.skipped
      << " undiagnosable\n";
  for (const auto& [k, p] : report.precision) out << "  P@" << k << "  = " << p << '\n';
  out << "  DCG@10 = " << report.mean_dcg << '\n';
  return out.str();
}

}  // namespace rnkn
