#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rnkn/generator.hpp"
#include "rnkn/inference.hpp"
#include "rnkn/projection.hpp"
#include "rnkn/trainer.hpp"

namespace py = pybind11;
using namespace rnkn;

PYBIND11_MODULE(rnkn, m) {
  m.doc() = "Recursive neural knowledge network: trains knowledge-tree embeddings from "
            "annotated medical records and ranks diagnosable diseases.";

  py::enum_<EntityKind>(m, "EntityKind")
      .value("Symptom", EntityKind::Symptom)
      .value("Disease", EntityKind::Disease);

  py::enum_<Modifier>(m, "Modifier")
      .value("Present", Modifier::Present)
      .value("Absent", Modifier::Absent)
      .value("NotPatient", Modifier::NotPatient)
      .value("Conditional", Modifier::Conditional)
      .value("Possible", Modifier::Possible)
      .value("Historical", Modifier::Historical)
      .value("Occasional", Modifier::Occasional);

  py::enum_<RelationType>(m, "RelationType")
      .value("SymptomIndicatesDisease", RelationType::SymptomIndicatesDisease)
      .value("DiseaseCausesSymptom", RelationType::DiseaseCausesSymptom)
      .value("TreatmentImprovesDisease", RelationType::TreatmentImprovesDisease)
      .value("TreatmentWorsensDisease", RelationType::TreatmentWorsensDisease)
      .value("TreatmentCausesDisease", RelationType::TreatmentCausesDisease)
      .value("TreatmentActsOnDisease", RelationType::TreatmentActsOnDisease)
      .value("TreatmentImprovesSymptom", RelationType::TreatmentImprovesSymptom)
      .value("TreatmentWorsensSymptom", RelationType::TreatmentWorsensSymptom)
      .value("TreatmentCausesSymptom", RelationType::TreatmentCausesSymptom)
      .value("TreatmentActsOnSymptom", RelationType::TreatmentActsOnSymptom)
      .value("TestConfirmsDisease", RelationType::TestConfirmsDisease)
      .value("TestAdoptedForSymptom", RelationType::TestAdoptedForSymptom);

  py::enum_<EvidenceMode>(m, "EvidenceMode")
      .value("All", EvidenceMode::All)
      .value("PresentOnly", EvidenceMode::PresentOnly);

  py::class_<EntityRef>(m, "EntityRef")
      .def(py::init([](std::string name, EntityKind kind, Modifier modifier) {
             return EntityRef{std::move(name), kind, modifier};
           }),
           py::arg("name"), py::arg("kind"), py::arg("modifier") = Modifier::Present)
      .def_readwrite("name", &EntityRef::name)
      .def_readwrite("kind", &EntityRef::kind)
      .def_readwrite("modifier", &EntityRef::modifier)
      .def("__repr__", [](const EntityRef& ref) {
        return "EntityRef(" + ref.name + ", " + std::string(to_token(ref.kind)) + ", " +
               std::string(to_token(ref.modifier)) + ")";
      });

  py::class_<Relation>(m, "Relation")
      .def(py::init([](std::size_t head, RelationType type, std::size_t tail) {
             return Relation{head, type, tail};
           }),
           py::arg("head"), py::arg("type"), py::arg("tail"))
      .def_readwrite("head", &Relation::head)
      .def_readwrite("type", &Relation::type)
      .def_readwrite("tail", &Relation::tail);

  py::class_<EmrRecord>(m, "EmrRecord")
      .def(py::init<>())
      .def_readwrite("id", &EmrRecord::id)
      .def_readwrite("evidence", &EmrRecord::evidence)
      .def_readwrite("relations", &EmrRecord::relations)
      .def_readwrite("diagnoses", &EmrRecord::diagnoses)
      .def("__repr__", [](const EmrRecord& r) {
        return "EmrRecord(" + r.id + ", " + std::to_string(r.evidence.size()) + " evidence)";
      });

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_property_readonly("entity_count", &Vocabulary::entity_count)
      .def_property_readonly("class_count", &Vocabulary::class_count)
      .def("find_class",
           [](const Vocabulary& vocab, const std::string& name) { return vocab.find_class(name); },
           py::arg("disease_name"))
      .def("entity_name",
           [](const Vocabulary& vocab, EntityId id) {
             return vocab.entities.at(static_cast<std::size_t>(id)).name;
           },
           py::arg("entity_id"))
      .def("class_disease_name",
           [](const Vocabulary& vocab, ClassId cls) {
             const EntityId entity = vocab.class_entities.at(static_cast<std::size_t>(cls));
             return vocab.entities.at(static_cast<std::size_t>(entity)).name;
           },
           py::arg("class_id"));

  py::class_<KnowledgeTriple>(m, "KnowledgeTriple")
      .def_readonly("head", &KnowledgeTriple::head)
      .def_readonly("relation", &KnowledgeTriple::relation)
      .def_readonly("tail", &KnowledgeTriple::tail)
      .def_readonly("frequency", &KnowledgeTriple::frequency);

  py::class_<GenConfig>(m, "GenConfig")
      .def(py::init<>())
      .def_readwrite("categories", &GenConfig::categories)
      .def_readwrite("diseases_per_category", &GenConfig::diseases_per_category)
      .def_readwrite("symptoms_per_disease", &GenConfig::symptoms_per_disease)
      .def_readwrite("records", &GenConfig::records)
      .def_readwrite("evidence_noise", &GenConfig::evidence_noise)
      .def_readwrite("modifier_noise", &GenConfig::modifier_noise)
      .def_readwrite("seed", &GenConfig::seed);

  py::class_<DiseaseProfile>(m, "DiseaseProfile")
      .def_readonly("name", &DiseaseProfile::name)
      .def_readonly("category", &DiseaseProfile::category)
      .def_readonly("symptoms", &DiseaseProfile::symptoms);

  py::class_<GenManifest>(m, "GenManifest").def_readonly("diseases", &GenManifest::diseases);

  py::class_<SyntheticCorpus>(m, "SyntheticCorpus")
      .def_readonly("records", &SyntheticCorpus::records)
      .def_readonly("manifest", &SyntheticCorpus::manifest);

  py::class_<NetConfig>(m, "NetConfig")
      .def(py::init<>())
      .def_readwrite("dim", &NetConfig::dim)
      .def_readwrite("lambda_", &NetConfig::lambda)
      .def_readwrite("init_radius", &NetConfig::init_radius)
      .def_readwrite("seed", &NetConfig::seed)
      .def_readwrite("use_bias", &NetConfig::use_bias)
      .def_readwrite("regularize_embeddings", &NetConfig::regularize_embeddings);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("net", &TrainConfig::net)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("step_vector", &TrainConfig::step_vector)
      .def_readwrite("step_weight", &TrainConfig::step_weight)
      .def_readwrite("step_softmax", &TrainConfig::step_softmax)
      .def_readwrite("mode", &TrainConfig::mode)
      .def_readwrite("eval_every", &TrainConfig::eval_every)
      .def_readwrite("loss_threshold", &TrainConfig::loss_threshold)
      .def_readwrite("shuffle", &TrainConfig::shuffle)
      .def_readwrite("batch_updates", &TrainConfig::batch_updates);

  py::class_<EpochStats>(m, "EpochStats")
      .def_readonly("epoch", &EpochStats::epoch)
      .def_readonly("mean_loss", &EpochStats::mean_loss)
      .def_readonly("precision_at_10", &EpochStats::precision_at_10)
      .def_readonly("dcg", &EpochStats::dcg)
      .def("__repr__", [](const EpochStats& s) {
        return "EpochStats(epoch=" + std::to_string(s.epoch) +
               ", loss=" + std::to_string(s.mean_loss) + ")";
      });

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("version", &Checkpoint::version)
      .def_readonly("vocabulary", &Checkpoint::vocabulary)
      .def_readonly("knowledge", &Checkpoint::knowledge)
      .def_readonly("config", &Checkpoint::config)
      .def_readonly("stats", &Checkpoint::stats)
      .def_property_readonly("dim", [](const Checkpoint& c) { return c.params.dim(); })
      .def("embedding",
           [](const Checkpoint& c, EntityId entity) -> Vec {
             if (entity < 0 || entity >= c.params.vocab_size())
               throw py::index_error("entity id out of range");
             return c.params.embeddings.row(entity).transpose();
           },
           py::arg("entity_id"))
      .def("save",
           [](const Checkpoint& c, const std::filesystem::path& path) {
             save_checkpoint(c, path);
           },
           py::arg("path"));

  py::class_<DiagnosisResult>(m, "DiagnosisResult")
      .def_readonly("record_id", &DiagnosisResult::record_id)
      .def_readonly("ranking", &DiagnosisResult::ranking)
      .def_readonly("undiagnosable", &DiagnosisResult::undiagnosable)
      .def_readonly("unknown_dropped", &DiagnosisResult::unknown_dropped);

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("evaluated", &EvalReport::evaluated)
      .def_readonly("skipped", &EvalReport::skipped)
      .def_readonly("mean_dcg", &EvalReport::mean_dcg)
      .def_readonly("dcg_series", &EvalReport::dcg_series)
      .def("precision_at", &EvalReport::precision_at, py::arg("k"));

  py::class_<GradCheckReport>(m, "GradCheckReport")
      .def_readonly("max_rel_error", &GradCheckReport::max_rel_error)
      .def_readonly("trees_checked", &GradCheckReport::trees_checked);

  m.def("generate_corpus", &generate_corpus, py::arg("config"));
  m.def(
      "write_corpus_jsonl",
      [](const std::vector<EmrRecord>& records, const std::filesystem::path& path) {
        write_corpus_jsonl(records, path);
      },
      py::arg("records"), py::arg("path"));
  m.def("write_manifest_jsonl", &write_manifest_jsonl, py::arg("manifest"), py::arg("path"));
  m.def("load_corpus", &load_corpus, py::arg("path"));
  m.def(
      "split_corpus",
      [](const std::vector<EmrRecord>& records, double test_fraction, std::uint64_t seed) {
        return split_corpus(records, test_fraction, seed);
      },
      py::arg("records"), py::arg("test_fraction"), py::arg("seed"));

  m.def(
      "train",
      [](const std::vector<EmrRecord>& records, const TrainConfig& cfg) {
        py::gil_scoped_release release;
        return train(records, cfg);
      },
      py::arg("records"), py::arg("config"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def(
      "select_model",
      [](const std::vector<EpochStats>& history) { return select_model(history); },
      py::arg("history"));

  m.def("diagnose", &diagnose, py::arg("record"), py::arg("checkpoint"),
        py::arg("mode") = EvidenceMode::All);
  m.def(
      "evaluate",
      [](const std::vector<EmrRecord>& test, const Checkpoint& ckpt, EvidenceMode mode,
         const std::vector<int>& ks) {
        py::gil_scoped_release release;
        return evaluate(test, ckpt, mode, ks);
      },
      py::arg("records"), py::arg("checkpoint"), py::arg("mode") = EvidenceMode::All,
      py::arg("k_values") = std::vector<int>{5, 10});

  m.def("export_embeddings", &export_embeddings, py::arg("checkpoint"), py::arg("path"),
        py::arg("kind") = std::nullopt);
  m.def("project_2d", &project_2d, py::arg("data"),
        "Mean-centered rows projected onto the top two principal directions.");

  m.def(
      "gradient_check",
      [](int dim, int classes, int trials, int max_leaves, double lambda, double eps,
         std::uint64_t seed, bool use_bias) {
        GradCheckConfig cfg;
        cfg.dim = dim;
        cfg.classes = classes;
        cfg.trials = trials;
        cfg.max_leaves = max_leaves;
        cfg.lambda = lambda;
        cfg.eps = eps;
        cfg.seed = seed;
        cfg.use_bias = use_bias;
        py::gil_scoped_release release;
        return gradient_check(cfg);
      },
      py::arg("dim") = 4, py::arg("classes") = 3, py::arg("trials") = 100,
      py::arg("max_leaves") = 7, py::arg("lambda_") = 0.0, py::arg("eps") = 1e-5,
      py::arg("seed") = 20240601, py::arg("use_bias") = false);

  py::register_exception<CorpusError>(m, "CorpusError");
  py::register_exception<TrainError>(m, "TrainError");
  py::register_exception<CheckpointError>(m, "CheckpointError");
  py::register_exception<GenError>(m, "GenError");
  py::register_exception<EvalError>(m, "EvalError");
}
