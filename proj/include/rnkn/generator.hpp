#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rnkn/corpus.hpp"

namespace rnkn {

// Synthetic corpus with planted category structure: each disease owns a
// characteristic symptom set; records draw one or two diseases from a single
// category and annotate the symptom-disease knowledge.
struct GenConfig {
  int categories = 5;
  int diseases_per_category = 8;
  int symptoms_per_disease = 6;
  int records = 600;
  double evidence_noise = 0.15;  // chance of an unrelated symptom per emitted one
  double modifier_noise = 0.15;  // chance an evidence entity loses its present modifier
  std::uint64_t seed = 1;
};

struct DiseaseProfile {
  std::string name;
  int category = 0;
  std::vector<std::string> symptoms;
};

struct GenManifest {
  std::vector<DiseaseProfile> diseases;
};

struct SyntheticCorpus {
  std::vector<EmrRecord> records;
  GenManifest manifest;
};

class GenError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

SyntheticCorpus generate_corpus(const GenConfig& cfg);

void write_manifest_jsonl(const GenManifest& manifest, const std::filesystem::path& path);

}  // namespace rnkn
