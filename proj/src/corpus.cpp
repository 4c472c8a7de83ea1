#include "rnkn/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace rnkn {

namespace {

using nlohmann::json;

constexpr std::string_view kKindTokens[] = {"symptom", "disease"};

constexpr std::string_view kModifierTokens[] = {
    "present", "absent", "not_patient", "conditional",
    "possible", "historical", "occasional",
};

constexpr std::string_view kRelationTokens[] = {
    "SID", "DCS", "TrID", "TrWD", "TrCD", "TrAD",
    "TrID", "TrWD", "TrCD", "TrAD", "TeCD", "TeAS",
};

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
  throw CorpusError(source + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

bool is_diagnostic(RelationType type) {
  return type == RelationType::SymptomIndicatesDisease ||
         type == RelationType::DiseaseCausesSymptom;
}

std::string_view to_token(EntityKind kind) {
  return kKindTokens[static_cast<std::size_t>(kind)];
}

std::string_view to_token(Modifier modifier) {
  return kModifierTokens[static_cast<std::size_t>(modifier)];
}

std::string_view to_token(RelationType type) {
  return kRelationTokens[static_cast<std::size_t>(type)];
}

std::optional<EntityKind> parse_entity_kind(std::string_view token) {
  if (token == "symptom") return EntityKind::Symptom;
  if (token == "disease") return EntityKind::Disease;
  return std::nullopt;
}

std::optional<Modifier> parse_modifier(std::string_view token) {
  for (std::size_t i = 0; i < std::size(kModifierTokens); ++i) {
    if (token == kModifierTokens[i]) return static_cast<Modifier>(i);
  }
  return std::nullopt;
}

std::optional<RelationType> parse_relation(std::string_view token, EntityKind tail_kind) {
  if (token == "SID") return RelationType::SymptomIndicatesDisease;
  if (token == "DCS") return RelationType::DiseaseCausesSymptom;
  if (token == "TeCD") return RelationType::TestConfirmsDisease;
  if (token == "TeAS") return RelationType::TestAdoptedForSymptom;
  const bool disease_tail = tail_kind == EntityKind::Disease;
  if (token == "TrID")
    return disease_tail ? RelationType::TreatmentImprovesDisease
                        : RelationType::TreatmentImprovesSymptom;
  if (token == "TrWD")
    return disease_tail ? RelationType::TreatmentWorsensDisease
                        : RelationType::TreatmentWorsensSymptom;
  if (token == "TrCD")
    return disease_tail ? RelationType::TreatmentCausesDisease
                        : RelationType::TreatmentCausesSymptom;
  if (token == "TrAD")
    return disease_tail ? RelationType::TreatmentActsOnDisease
                        : RelationType::TreatmentActsOnSymptom;
  return std::nullopt;
}

std::optional<EntityId> Vocabulary::find(std::string_view name, EntityKind kind) const {
  const auto& index = index_[static_cast<std::size_t>(kind)];
  auto it = index.find(std::string(name));
  if (it == index.end()) return std::nullopt;
  return it->second;
}

std::optional<ClassId> Vocabulary::class_of(EntityId entity) const {
  auto it = entity_class_.find(entity);
  if (it == entity_class_.end()) return std::nullopt;
  return it->second;
}

std::optional<ClassId> Vocabulary::find_class(std::string_view disease_name) const {
  auto entity = find(disease_name, EntityKind::Disease);
  if (!entity) return std::nullopt;
  return class_of(*entity);
}

EntityId Vocabulary::add(std::string_view name, EntityKind kind) {
  auto& index = index_[static_cast<std::size_t>(kind)];
  auto it = index.find(std::string(name));
  if (it != index.end()) return it->second;
  const EntityId id = static_cast<EntityId>(entities.size());
  entities.push_back(Entry{std::string(name), kind, 0});
  index.emplace(std::string(name), id);
  if (kind == EntityKind::Disease) {
    const ClassId class_id = static_cast<ClassId>(class_entities.size());
    class_entities.push_back(id);
    entity_class_.emplace(id, class_id);
  }
  return id;
}

std::vector<std::int64_t> Vocabulary::record_frequencies() const {
  std::vector<std::int64_t> out(entities.size());
  for (std::size_t i = 0; i < entities.size(); ++i) out[i] = entities[i].record_frequency;
  return out;
}

void Coverage::merge(const Coverage& other) {
  entities.insert(other.entities.begin(), other.entities.end());
  triples.insert(other.triples.begin(), other.triples.end());
}

std::vector<EmrRecord> parse_corpus(std::istream& in, const std::string& source_name) {
  std::vector<EmrRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::exception& e) {
      fail(source_name, line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) fail(source_name, line_no, "record is not a JSON object");

    EmrRecord record;
    try {
      record.id = doc.at("id").get<std::string>();
      for (const auto& item : doc.at("evidence")) {
        EntityRef ref;
        ref.name = item.at("name").get<std::string>();
        if (ref.name.empty()) fail(source_name, line_no, "empty entity name");
        const auto kind_token = item.at("kind").get<std::string>();
        auto kind = parse_entity_kind(kind_token);
        if (!kind) fail(source_name, line_no, "unknown kind '" + kind_token + "'");
        ref.kind = *kind;
        const auto mod_token = item.at("modifier").get<std::string>();
        auto modifier = parse_modifier(mod_token);
        if (!modifier) fail(source_name, line_no, "unknown modifier '" + mod_token + "'");
        ref.modifier = *modifier;
        record.evidence.push_back(std::move(ref));
      }
      if (doc.contains("relations")) {
        for (const auto& item : doc.at("relations")) {
          if (!item.is_array() || item.size() != 3)
            fail(source_name, line_no, "relation is not a [head, type, tail] triple");
          const auto head = item.at(0).get<std::int64_t>();
          const auto tail = item.at(2).get<std::int64_t>();
          const auto n = static_cast<std::int64_t>(record.evidence.size());
          if (head < 0 || head >= n)
            fail(source_name, line_no,
                 "relation head index " + std::to_string(head) + " out of range");
          if (tail < 0 || tail >= n)
            fail(source_name, line_no,
                 "relation tail index " + std::to_string(tail) + " out of range");
          const auto token = item.at(1).get<std::string>();
          auto type = parse_relation(token, record.evidence[tail].kind);
          if (!type) fail(source_name, line_no, "unknown relation '" + token + "'");
          record.relations.push_back(
              Relation{static_cast<std::size_t>(head), *type, static_cast<std::size_t>(tail)});
        }
      }
      if (doc.contains("diagnoses")) {
        for (const auto& item : doc.at("diagnoses")) {
          record.diagnoses.push_back(item.get<std::string>());
        }
      }
    } catch (const json::exception& e) {
      fail(source_name, line_no, std::string("invalid record: ") + e.what());
    }

    // A diagnosis must name a disease: reject labels that the record itself
    // annotates as symptom-only.
    for (const auto& label : record.diagnoses) {
      bool as_symptom = false;
      bool as_disease = false;
      for (const auto& ref : record.evidence) {
        if (ref.name != label) continue;
        (ref.kind == EntityKind::Disease ? as_disease : as_symptom) = true;
      }
      if (as_symptom && !as_disease)
        fail(source_name, line_no, "diagnosis '" + label + "' names a symptom entity");
    }

    records.push_back(std::move(record));
  }
  return records;
}

std::vector<EmrRecord> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file: " + path.string());
  return parse_corpus(in, path.string());
}

std::string record_to_json(const EmrRecord& record) {
  json doc;
  doc["id"] = record.id;
  doc["evidence"] = json::array();
  for (const auto& ref : record.evidence) {
    doc["evidence"].push_back({{"name", ref.name},
                               {"kind", std::string(to_token(ref.kind))},
                               {"modifier", std::string(to_token(ref.modifier))}});
  }
  doc["relations"] = json::array();
  for (const auto& rel : record.relations) {
    doc["relations"].push_back({rel.head, std::string(to_token(rel.type)), rel.tail});
  }
  doc["diagnoses"] = record.diagnoses;
  return doc.dump();
}

void write_corpus_jsonl(std::span<const EmrRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write corpus file: " + path.string());
  for (const auto& record : records) out << record_to_json(record) << '\n';
}

std::pair<std::vector<EmrRecord>, std::vector<EmrRecord>> split_corpus(
    std::span<const EmrRecord> records, double test_fraction, std::uint64_t seed) {
  if (records.size() < 2) throw CorpusError("split requires at least 2 records");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw CorpusError("test fraction must lie in (0, 1)");

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(records.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, records.size() - 1);

  std::vector<EmrRecord> test;
  std::vector<EmrRecord> train;
  test.reserve(n_test);
  train.reserve(records.size() - n_test);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_test ? test : train).push_back(records[order[i]]);
  }
  return {std::move(train), std::move(test)};
}

Vocabulary build_vocabulary(std::span<const EmrRecord> train) {
  if (train.empty()) throw CorpusError("cannot build a vocabulary from an empty train set");
  Vocabulary vocab;
  for (const auto& record : train) {
    std::set<EntityId> seen_in_record;
    for (const auto& ref : record.evidence) {
      const EntityId id = vocab.add(ref.name, ref.kind);
      if (seen_in_record.insert(id).second) ++vocab.entities[id].record_frequency;
    }
    for (const auto& label : record.diagnoses) {
      if (vocab.find(label, EntityKind::Disease)) continue;
      if (vocab.find(label, EntityKind::Symptom))
        throw CorpusError("record " + record.id + ": diagnosis '" + label +
                          "' is only known as a symptom entity");
      vocab.add(label, EntityKind::Disease);
    }
  }
  return vocab;
}

std::vector<KnowledgeTriple> extract_knowledge(std::span<const EmrRecord> train,
                                               const Vocabulary& vocab) {
  std::map<TripleKey, std::int64_t> counts;
  for (const auto& record : train) {
    std::set<TripleKey> in_record;
    for (const auto& rel : record.relations) {
      if (!is_diagnostic(rel.type)) continue;
      const auto& head_ref = record.evidence[rel.head];
      const auto& tail_ref = record.evidence[rel.tail];
      auto head = vocab.find(head_ref.name, head_ref.kind);
      auto tail = vocab.find(tail_ref.name, tail_ref.kind);
      if (!head || !tail) continue;
      in_record.insert(TripleKey{*head, rel.type, *tail});
    }
    for (const auto& key : in_record) ++counts[key];
  }

  std::vector<KnowledgeTriple> knowledge;
  knowledge.reserve(counts.size());
  for (const auto& [key, freq] : counts) {
    knowledge.push_back(KnowledgeTriple{key.head, key.relation, key.tail, freq});
  }
  std::sort(knowledge.begin(), knowledge.end(),
            [](const KnowledgeTriple& a, const KnowledgeTriple& b) {
              if (a.frequency != b.frequency) return a.frequency > b.frequency;
              return key_of(a) < key_of(b);
            });
  return knowledge;
}

void write_knowledge_tsv(std::span<const KnowledgeTriple> knowledge, const Vocabulary& vocab,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write knowledge file: " + path.string());
  for (const auto& triple : knowledge) {
    out << vocab.entities[triple.head].name << '\t' << to_token(triple.relation) << '\t'
        << vocab.entities[triple.tail].name << '\t' << triple.frequency << '\n';
  }
}

FilteredEvidence filter_evidence(const EmrRecord& record, EvidenceMode mode,
                                 const Vocabulary& vocab) {
  FilteredEvidence out;
  std::set<EntityId> seen;
  for (const auto& ref : record.evidence) {
    if (mode == EvidenceMode::PresentOnly && ref.modifier != Modifier::Present) continue;
    auto id = vocab.find(ref.name, ref.kind);
    if (!id) {
      ++out.dropped;
      continue;
    }
    if (seen.insert(*id).second) out.ids.push_back(*id);
  }
  return out;
}

CooccurrenceTable build_cooccurrence(std::span<const EmrRecord> train,
                                     std::span<const KnowledgeTriple> knowledge,
                                     const Vocabulary& vocab) {
  std::set<TripleKey> admissible;
  for (const auto& triple : knowledge) admissible.insert(key_of(triple));

  CooccurrenceTable table;
  table.num_classes = vocab.class_count();
  for (const auto& record : train) {
    std::set<ClassId> gold;
    for (const auto& label : record.diagnoses) {
      if (auto cls = vocab.find_class(label)) gold.insert(*cls);
    }
    if (gold.empty()) continue;

    std::set<EntityId> entities;
    for (const auto& ref : record.evidence) {
      if (auto id = vocab.find(ref.name, ref.kind)) entities.insert(*id);
    }
    std::set<TripleKey> triples;
    for (const auto& rel : record.relations) {
      if (!is_diagnostic(rel.type)) continue;
      const auto& head_ref = record.evidence[rel.head];
      const auto& tail_ref = record.evidence[rel.tail];
      auto head = vocab.find(head_ref.name, head_ref.kind);
      auto tail = vocab.find(tail_ref.name, tail_ref.kind);
      if (!head || !tail) continue;
      TripleKey key{*head, rel.type, *tail};
      if (admissible.contains(key)) triples.insert(key);
    }

    for (ClassId cls : gold) {
      for (EntityId entity : entities) ++table.entity_counts[entity][cls];
      for (const auto& key : triples) ++table.triple_counts[key][cls];
    }
  }
  return table;
}

std::vector<double> target_distribution(const Coverage& items, const CooccurrenceTable& table,
                                        int num_classes) {
  if (num_classes < 1) throw CorpusError("target distribution needs at least one class");
  std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
  std::int64_t total = 0;
  auto accumulate = [&](const std::map<ClassId, std::int64_t>& row) {
    for (const auto& [cls, count] : row) {
      counts[static_cast<std::size_t>(cls)] += count;
      total += count;
    }
  };
  for (EntityId entity : items.entities) {
    if (auto it = table.entity_counts.find(entity); it != table.entity_counts.end())
      accumulate(it->second);
  }
  for (const auto& key : items.triples) {
    if (auto it = table.triple_counts.find(key); it != table.triple_counts.end())
      accumulate(it->second);
  }

  std::vector<double> target(static_cast<std::size_t>(num_classes));
  if (total == 0) {
    // Items unseen with any diagnosis: fall back to the uniform distribution.
    std::fill(target.begin(), target.end(), 1.0 / num_classes);
  } else {
    for (std::size_t c = 0; c < target.size(); ++c)
      target[c] = static_cast<double>(counts[c]) / static_cast<double>(total);
  }
  return target;
}

}  // namespace rnkn
