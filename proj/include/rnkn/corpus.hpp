#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rnkn {

enum class EntityKind : std::uint8_t { Symptom, Disease };

// The seven assertion modifiers an evidence entity can carry.
enum class Modifier : std::uint8_t {
  Present,
  Absent,
  NotPatient,
  Conditional,
  Possible,
  Historical,
  Occasional,
};

// Twelve relation classes. The four treatment relations exist in a disease
// and a symptom flavor that share one wire token; the tail entity kind
// disambiguates at parse time. Only SymptomIndicatesDisease (SID) and
// DiseaseCausesSymptom (DCS) feed diagnostic knowledge.
enum class RelationType : std::uint8_t {
  SymptomIndicatesDisease,
  DiseaseCausesSymptom,
  TreatmentImprovesDisease,
  TreatmentWorsensDisease,
  TreatmentCausesDisease,
  TreatmentActsOnDisease,
  TreatmentImprovesSymptom,
  TreatmentWorsensSymptom,
  TreatmentCausesSymptom,
  TreatmentActsOnSymptom,
  TestConfirmsDisease,
  TestAdoptedForSymptom,
};

bool is_diagnostic(RelationType type);

std::string_view to_token(EntityKind kind);
std::string_view to_token(Modifier modifier);
std::string_view to_token(RelationType type);

std::optional<EntityKind> parse_entity_kind(std::string_view token);
std::optional<Modifier> parse_modifier(std::string_view token);
// Treatment tokens resolve against the tail entity kind.
std::optional<RelationType> parse_relation(std::string_view token, EntityKind tail_kind);

struct EntityRef {
  std::string name;
  EntityKind kind{};
  Modifier modifier{};

  bool operator==(const EntityRef&) const = default;
};

struct Relation {
  std::size_t head = 0;
  RelationType type{};
  std::size_t tail = 0;

  bool operator==(const Relation&) const = default;
};

// One annotated patient record: evidence entities with modifiers, the
// relations between them, and the gold diagnosis labels.
struct EmrRecord {
  std::string id;
  std::vector<EntityRef> evidence;
  std::vector<Relation> relations;
  std::vector<std::string> diagnoses;

  bool operator==(const EmrRecord&) const = default;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EntityId = std::int32_t;
using ClassId = std::int32_t;

// Entity registry built from the training split. Entity ids follow
// first-appearance order over the record stream; every disease entity also
// receives a class id. record_frequency counts the training records whose
// evidence contains the entity (diagnosis-only diseases stay at zero).
struct Vocabulary {
  struct Entry {
    std::string name;
    EntityKind kind{};
    std::int64_t record_frequency = 0;
  };

  std::vector<Entry> entities;
  std::vector<EntityId> class_entities;  // class id -> entity id

  int entity_count() const { return static_cast<int>(entities.size()); }
  int class_count() const { return static_cast<int>(class_entities.size()); }

  std::optional<EntityId> find(std::string_view name, EntityKind kind) const;
  std::optional<ClassId> class_of(EntityId entity) const;
  std::optional<ClassId> find_class(std::string_view disease_name) const;

  EntityId add(std::string_view name, EntityKind kind);

  std::vector<std::int64_t> record_frequencies() const;

 private:
  std::unordered_map<std::string, EntityId> index_[2];
  std::unordered_map<EntityId, ClassId> entity_class_;
};

// (head, relation, tail) with the number of training records containing it.
struct KnowledgeTriple {
  EntityId head = -1;
  RelationType relation{};
  EntityId tail = -1;
  std::int64_t frequency = 0;

  bool operator==(const KnowledgeTriple&) const = default;
};

struct TripleKey {
  EntityId head = -1;
  RelationType relation{};
  EntityId tail = -1;

  auto operator<=>(const TripleKey&) const = default;
};

inline TripleKey key_of(const KnowledgeTriple& triple) {
  return TripleKey{triple.head, triple.relation, triple.tail};
}

// Per-class co-occurrence counts for entities and knowledge triples,
// incremented once per training record containing both the item and the
// diagnosed disease.
struct CooccurrenceTable {
  int num_classes = 0;
  std::map<EntityId, std::map<ClassId, std::int64_t>> entity_counts;
  std::map<TripleKey, std::map<ClassId, std::int64_t>> triple_counts;
};

// The items beneath a tree node: entity ids and knowledge triple keys.
struct Coverage {
  std::set<EntityId> entities;
  std::set<TripleKey> triples;

  void merge(const Coverage& other);
};

enum class EvidenceMode : std::uint8_t { All, PresentOnly };

struct FilteredEvidence {
  std::vector<EntityId> ids;  // deduplicated, first-appearance order
  int dropped = 0;            // evidence entities absent from the vocabulary
};

std::vector<EmrRecord> load_corpus(const std::filesystem::path& path);
std::vector<EmrRecord> parse_corpus(std::istream& in, const std::string& source_name);

std::string record_to_json(const EmrRecord& record);
void write_corpus_jsonl(std::span<const EmrRecord> records, const std::filesystem::path& path);

std::pair<std::vector<EmrRecord>, std::vector<EmrRecord>> split_corpus(
    std::span<const EmrRecord> records, double test_fraction, std::uint64_t seed);

Vocabulary build_vocabulary(std::span<const EmrRecord> train);

std::vector<KnowledgeTriple> extract_knowledge(std::span<const EmrRecord> train,
                                               const Vocabulary& vocab);

void write_knowledge_tsv(std::span<const KnowledgeTriple> knowledge, const Vocabulary& vocab,
                         const std::filesystem::path& path);

FilteredEvidence filter_evidence(const EmrRecord& record, EvidenceMode mode,
                                 const Vocabulary& vocab);

CooccurrenceTable build_cooccurrence(std::span<const EmrRecord> train,
                                     std::span<const KnowledgeTriple> knowledge,
                                     const Vocabulary& vocab);

// Normalized per-class counts summed over the coverage items; uniform when
// the items have no counts at all.
std::vector<double> target_distribution(const Coverage& items, const CooccurrenceTable& table,
                                        int num_classes);

}  // namespace rnkn
