#include "rnkn/generator.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

namespace rnkn {

namespace {

constexpr double kCoDrawChance = 0.5;

std::string disease_name(int category, int index) {
  return "D" + std::to_string(category) + "_" + std::to_string(index);
}

std::string symptom_name(int category, int index, int k) {
  return "S" + std::to_string(category) + "_" + std::to_string(index) + "_" + std::to_string(k);
}

void validate(const GenConfig& cfg) {
  if (cfg.categories < 1 || cfg.diseases_per_category < 1 || cfg.symptoms_per_disease < 1 ||
      cfg.records < 1)
    throw GenError("generator counts must all be at least 1");
  if (!(cfg.evidence_noise >= 0 && cfg.evidence_noise < 1))
    throw GenError("evidence noise rate must lie in [0, 1)");
  if (!(cfg.modifier_noise >= 0 && cfg.modifier_noise < 1))
    throw GenError("modifier noise rate must lie in [0, 1)");
}

}  // namespace

SyntheticCorpus generate_corpus(const GenConfig& cfg) {
  validate(cfg);

  SyntheticCorpus corpus;
  const int n_diseases = cfg.categories * cfg.diseases_per_category;
  corpus.manifest.diseases.reserve(static_cast<std::size_t>(n_diseases));
  for (int c = 0; c < cfg.categories; ++c) {
    for (int i = 0; i < cfg.diseases_per_category; ++i) {
      DiseaseProfile profile;
      profile.name = disease_name(c, i);
      profile.category = c;
      for (int k = 0; k < cfg.symptoms_per_disease; ++k)
        profile.symptoms.push_back(symptom_name(c, i, k));
      corpus.manifest.diseases.push_back(std::move(profile));
    }
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> category_dist(0, cfg.categories - 1);
  std::uniform_int_distribution<int> within_dist(0, cfg.diseases_per_category - 1);
  std::uniform_int_distribution<int> any_disease_dist(0, n_diseases - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> modifier_dist(1, 6);  // any non-present modifier

  corpus.records.reserve(static_cast<std::size_t>(cfg.records));
  for (int r = 0; r < cfg.records; ++r) {
    EmrRecord record;
    {
      char id[16];
      std::snprintf(id, sizeof(id), "r%04d", r + 1);
      record.id = id;
    }

    const int category = category_dist(rng);
    std::vector<int> drawn;  // manifest indices
    drawn.push_back(category * cfg.diseases_per_category + within_dist(rng));
    if (cfg.diseases_per_category > 1 && coin(rng) < kCoDrawChance) {
      int second = category * cfg.diseases_per_category + within_dist(rng);
      while (second == drawn[0])
        second = category * cfg.diseases_per_category + within_dist(rng);
      drawn.push_back(second);
    }

    // Characteristic symptoms followed by the disease entity itself, with an
    // SID relation from each symptom; co-drawn diseases link via DCS.
    std::vector<std::size_t> disease_positions;
    for (int index : drawn) {
      const auto& profile = corpus.manifest.diseases[static_cast<std::size_t>(index)];
      std::vector<std::size_t> symptom_positions;
      for (const auto& symptom : profile.symptoms) {
        symptom_positions.push_back(record.evidence.size());
        record.evidence.push_back(EntityRef{symptom, EntityKind::Symptom, Modifier::Present});
      }
      const std::size_t disease_pos = record.evidence.size();
      record.evidence.push_back(EntityRef{profile.name, EntityKind::Disease, Modifier::Present});
      disease_positions.push_back(disease_pos);
      for (std::size_t pos : symptom_positions)
        record.relations.push_back(
            Relation{pos, RelationType::SymptomIndicatesDisease, disease_pos});
      record.diagnoses.push_back(profile.name);
    }
    if (drawn.size() == 2)
      record.relations.push_back(Relation{disease_positions[0],
                                          RelationType::DiseaseCausesSymptom,
                                          disease_positions[1]});

    // Unrelated symptoms without knowledge annotations.
    if (cfg.evidence_noise > 0 && n_diseases > static_cast<int>(drawn.size())) {
      std::set<std::string> taken;
      for (const auto& ref : record.evidence) taken.insert(ref.name);
      const int slots = static_cast<int>(drawn.size()) * cfg.symptoms_per_disease;
      for (int s = 0; s < slots; ++s) {
        if (coin(rng) >= cfg.evidence_noise) continue;
        int other = any_disease_dist(rng);
        while (std::find(drawn.begin(), drawn.end(), other) != drawn.end())
          other = any_disease_dist(rng);
        std::uniform_int_distribution<int> pick(0, cfg.symptoms_per_disease - 1);
        const auto& name =
            corpus.manifest.diseases[static_cast<std::size_t>(other)].symptoms
                [static_cast<std::size_t>(pick(rng))];
        if (!taken.insert(name).second) continue;
        record.evidence.push_back(EntityRef{name, EntityKind::Symptom, Modifier::Present});
      }
    }

    if (cfg.modifier_noise > 0) {
      for (auto& ref : record.evidence) {
        if (coin(rng) < cfg.modifier_noise)
          ref.modifier = static_cast<Modifier>(modifier_dist(rng));
      }
    }

    corpus.records.push_back(std::move(record));
  }
  return corpus;
}

void write_manifest_jsonl(const GenManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw GenError("cannot write manifest file: " + path.string());
  for (const auto& profile : manifest.diseases) {
    nlohmann::json doc;
    doc["disease"] = profile.name;
    doc["category"] = profile.category;
    doc["symptoms"] = profile.symptoms;
    out << doc.dump() << '\n';
  }
}

}  // namespace rnkn
