#pragma once

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rnkn/corpus.hpp"
#include "rnkn/network.hpp"

namespace rnkn {

struct Checkpoint;

// Ranking over all disease classes for one record, from the root softmax.
struct DiagnosisResult {
  std::string record_id;
  std::vector<std::pair<ClassId, double>> ranking;  // probability desc, ties by class id
  bool undiagnosable = false;  // no usable evidence; ranking left empty
  int unknown_dropped = 0;     // evidence entities outside the vocabulary
};

std::vector<std::pair<ClassId, double>> rank_probabilities(const Vec& probs);

DiagnosisResult diagnose(const EmrRecord& record, const Checkpoint& ckpt, EvidenceMode mode);

// Gold class ids of a record's diagnosis labels (unknown labels dropped).
std::set<ClassId> gold_classes(const EmrRecord& record, const Vocabulary& vocab);

// Fraction of cases whose gold disease appears within the top k. A case with
// several gold diseases counts on any hit unless require_all is set.
// Undiagnosable results count as incorrect.
double precision_at_k(std::span<const DiagnosisResult> results,
                      std::span<const std::set<ClassId>> gold, int k, bool require_all = false);

double dcg_at(std::span<const std::pair<ClassId, double>> ranking,
              const std::set<ClassId>& gold, int depth);

// rel_1 + sum_{i=2}^depth rel_i / log2(i); zero for undiagnosable results.
double dcg(const DiagnosisResult& result, const std::set<ClassId>& gold, int depth = 10);

struct EvalReport {
  int evaluated = 0;
  int skipped = 0;  // undiagnosable records
  std::vector<std::pair<int, double>> precision;  // (k, mean P@k) over evaluated records
  double mean_dcg = 0.0;                          // over evaluated records
  std::vector<std::pair<std::string, double>> dcg_series;  // every record; skipped score 0

  double precision_at(int k) const;
};

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

EvalReport evaluate(std::span<const EmrRecord> test, const Checkpoint& ckpt, EvidenceMode mode,
                    std::span<const int> k_values);

std::vector<DiagnosisResult> diagnose_all(std::span<const EmrRecord> records,
                                          const Checkpoint& ckpt, EvidenceMode mode);

// record_id,rank,class_id,disease_name,probability — top_k rows per record.
void write_rankings_csv(std::span<const DiagnosisResult> results, const Vocabulary& vocab,
                        int top_k, const std::filesystem::path& path);

void write_dcg_series_csv(const EvalReport& report, const std::filesystem::path& path);

void write_report_csv(const EvalReport& report, const std::filesystem::path& path);

std::string format_report(const EvalReport& report);

}  // namespace rnkn
