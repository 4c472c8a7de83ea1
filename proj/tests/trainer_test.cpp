#include <doctest.h>

#include <cmath>
#include <fstream>

#include "rnkn/generator.hpp"
#include "rnkn/trainer.hpp"
#include "test_support.hpp"

using namespace rnkn;

namespace {

std::vector<EmrRecord> small_synthetic(std::uint64_t seed = 3, int records = 80) {
  GenConfig cfg;
  cfg.categories = 2;
  cfg.diseases_per_category = 3;
  cfg.symptoms_per_disease = 4;
  cfg.records = records;
  cfg.evidence_noise = 0.1;
  cfg.modifier_noise = 0.1;
  cfg.seed = seed;
  return generate_corpus(cfg).records;
}

TrainConfig small_config(int epochs = 5, std::uint64_t seed = 7) {
  TrainConfig cfg;
  cfg.net.dim = 8;
  cfg.net.seed = seed;
  cfg.epochs = epochs;
  return cfg;
}

std::string file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

GradientSet zero_grads(const ModelParams& params) {
  GradientSet grads;
  grads.d_combine = Mat::Zero(params.combine.rows(), params.combine.cols());
  grads.d_classify = Mat::Zero(params.classify.rows(), params.classify.cols());
  grads.d_bias = Vec::Zero(params.bias.size());
  return grads;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("train validates its configuration") {
  const auto records = small_synthetic();
  TrainConfig cfg = small_config();
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(records, cfg), TrainError);
  cfg = small_config();
  cfg.step_weight = 0.0;
  CHECK_THROWS_AS(train(records, cfg), TrainError);
  CHECK_THROWS_AS(train({}, small_config()), TrainError);
}

TEST_CASE("training loss trends down on the synthetic corpus") {
  const auto records = small_synthetic(5, 100);
  TrainConfig cfg = small_config(30, 11);
  const auto ckpt = train(records, cfg);

  REQUIRE(!ckpt.stats.empty());
  CHECK(ckpt.stats.front().epoch == 1);
  CHECK(ckpt.stats.back().epoch == 30);
  CHECK(ckpt.stats.back().mean_loss < ckpt.stats.front().mean_loss);
}

TEST_CASE("identical seeds give bit-identical checkpoints") {
  const auto records = small_synthetic();
  const TrainConfig cfg = small_config(3);
  const auto a = train(records, cfg);
  const auto b = train(records, cfg);
  CHECK(a.params == b.params);
  CHECK(a.stats == b.stats);

  const auto path_a = rnkn::test::temp_path("ckpt_a");
  const auto path_b = rnkn::test::temp_path("ckpt_b");
  save_checkpoint(a, path_a);
  save_checkpoint(b, path_b);
  CHECK(file_bytes(path_a) == file_bytes(path_b));
  std::filesystem::remove(path_a);
  std::filesystem::remove(path_b);
}

TEST_CASE("embedding rows stay unit norm through every epoch") {
  const auto records = small_synthetic();
  TrainConfig cfg = small_config(4);
  int epochs_seen = 0;
  train(records, cfg, [&](int, double, const ModelParams& params) {
    ++epochs_seen;
    for (Eigen::Index r = 0; r < params.embeddings.rows(); ++r)
      CHECK(std::abs(params.embeddings.row(r).norm() - 1.0) < 1e-9);
  });
  CHECK(epochs_seen == 4);
}

TEST_CASE("epoch stats stay within their bounds") {
  // Multi-gold records (co-drawn diseases) must not push the DCG stat past 1.
  const auto records = small_synthetic(23, 60);
  const auto ckpt = train(records, small_config(6));
  for (const auto& s : ckpt.stats) {
    CHECK(s.mean_loss >= 0.0);
    CHECK(s.precision_at_10 >= 0.0);
    CHECK(s.precision_at_10 <= 1.0);
    CHECK(s.dcg >= 0.0);
    CHECK(s.dcg <= 1.0);
  }
}

TEST_CASE("loss threshold stops training early") {
  const auto records = small_synthetic();
  TrainConfig cfg = small_config(50);
  cfg.loss_threshold = 1e6;  // absurdly lax: stops after epoch 1
  const auto ckpt = train(records, cfg);
  CHECK(ckpt.stats.back().epoch == 1);
}

TEST_CASE("eval stride controls the stats history") {
  const auto records = small_synthetic();
  TrainConfig cfg = small_config(7);
  cfg.eval_every = 3;
  const auto ckpt = train(records, cfg);
  std::vector<int> epochs;
  for (const auto& s : ckpt.stats) epochs.push_back(s.epoch);
  CHECK(epochs == std::vector<int>{1, 3, 6, 7});
}

TEST_CASE("batch updates run and converge on the trend check") {
  const auto records = small_synthetic(9, 60);
  TrainConfig cfg = small_config(20, 13);
  cfg.batch_updates = true;
  const auto ckpt = train(records, cfg);
  CHECK(ckpt.stats.back().mean_loss < ckpt.stats.front().mean_loss);
}

TEST_CASE("fixed-order mode is still deterministic") {
  const auto records = small_synthetic();
  TrainConfig cfg = small_config(3);
  cfg.shuffle = false;
  const auto a = train(records, cfg);
  const auto b = train(records, cfg);
  CHECK(a.params == b.params);
}

TEST_CASE("apply_update with zero gradients only renormalizes") {
  const auto params0 = init_params(4, 3, small_config().net);
  ModelParams params = params0;
  apply_update(params, zero_grads(params), small_config());
  CHECK(params == params0);  // rows were already unit norm
}

TEST_CASE("touched rows are renormalized to unit length") {
  ModelParams params = init_params(4, 3, small_config().net);
  auto grads = zero_grads(params);
  grads.d_embedding[2] = Vec::Constant(8, 0.5);
  apply_update(params, grads, small_config());
  CHECK(std::abs(params.embeddings.row(2).norm() - 1.0) < 1e-9);
}

TEST_CASE("doubling a step size doubles the parameter delta") {
  const auto params0 = init_params(4, 3, small_config().net);
  auto grads = zero_grads(params0);
  grads.d_combine.setConstant(0.25);

  TrainConfig cfg = small_config();
  ModelParams once = params0;
  apply_update(once, grads, cfg);
  const Mat delta1 = once.combine - params0.combine;

  cfg.step_weight *= 2;
  ModelParams twice = params0;
  apply_update(twice, grads, cfg);
  const Mat delta2 = twice.combine - params0.combine;

  CHECK((delta2 - 2 * delta1).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("non-finite gradients abort with a diagnostic") {
  ModelParams params = init_params(4, 3, small_config().net);
  auto grads = zero_grads(params);
  grads.d_combine(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(apply_update(params, grads, small_config()),
                       doctest::Contains("non-finite"), TrainError);
}

TEST_CASE("select_model picks by the synthesized indicator") {
  SUBCASE("single entry") {
    const EpochStats only{12, 1.0, 0.5, 0.5};
    CHECK(select_model(std::vector<EpochStats>{only}) == 12);
  }
  SUBCASE("strictly improving history picks the last epoch") {
    std::vector<EpochStats> history;
    for (int e = 1; e <= 5; ++e)
      history.push_back(EpochStats{e, 5.0 - e, 0.1 * e, 0.1 * e});
    CHECK(select_model(history) == 5);
  }
  SUBCASE("interior peak wins over a fluctuating tail") {
    // Metrics peak at epoch 670 and fall away afterwards.
    std::vector<EpochStats> history{
        {100, 4.0, 0.50, 0.40}, {300, 2.5, 0.70, 0.60}, {670, 1.9, 0.93, 0.88},
        {700, 1.8, 0.80, 0.70}, {800, 1.7, 0.78, 0.69},
    };
    CHECK(select_model(history) == 670);
  }
  SUBCASE("exact ties go to the latest epoch") {
    std::vector<EpochStats> history{{1, 1.0, 0.5, 0.5}, {2, 1.0, 0.5, 0.5}};
    CHECK(select_model(history) == 2);
  }
}

TEST_CASE("checkpoints round-trip losslessly") {
  const auto records = small_synthetic();
  const auto ckpt = train(records, small_config(2));
  const auto path = rnkn::test::temp_path("ckpt");
  save_checkpoint(ckpt, path);
  const auto loaded = load_checkpoint(path);

  CHECK(loaded.params == ckpt.params);
  CHECK(loaded.stats == ckpt.stats);
  CHECK(loaded.knowledge == ckpt.knowledge);
  CHECK(loaded.config.net.dim == ckpt.config.net.dim);
  CHECK(loaded.config.net.seed == ckpt.config.net.seed);
  CHECK(loaded.config.step_vector == ckpt.config.step_vector);
  CHECK(loaded.config.mode == ckpt.config.mode);
  REQUIRE(loaded.vocabulary.entity_count() == ckpt.vocabulary.entity_count());
  for (int i = 0; i < ckpt.vocabulary.entity_count(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    CHECK(loaded.vocabulary.entities[idx].name == ckpt.vocabulary.entities[idx].name);
    CHECK(loaded.vocabulary.entities[idx].kind == ckpt.vocabulary.entities[idx].kind);
    CHECK(loaded.vocabulary.entities[idx].record_frequency ==
          ckpt.vocabulary.entities[idx].record_frequency);
  }
  CHECK(loaded.vocabulary.class_entities == ckpt.vocabulary.class_entities);
  std::filesystem::remove(path);
}

TEST_CASE("truncated checkpoints are rejected") {
  const auto records = small_synthetic();
  const auto ckpt = train(records, small_config(1));
  const auto path = rnkn::test::temp_path("ckpt_trunc");
  save_checkpoint(ckpt, path);

  const auto bytes = file_bytes(path);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  std::filesystem::remove(path);
}

TEST_CASE("version and magic mismatches are explicit errors") {
  const auto records = small_synthetic();
  const auto ckpt = train(records, small_config(1));
  const auto path = rnkn::test::temp_path("ckpt_ver");
  save_checkpoint(ckpt, path);
  auto bytes = file_bytes(path);

  SUBCASE("future version") {
    bytes[4] = 2;  // version field follows the magic
    // Recompute the trailing FNV-1a checksum so only the version differs.
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i + 8 < bytes.size(); ++i) {
      hash ^= static_cast<unsigned char>(bytes[i]);
      hash *= 0x100000001b3ull;
    }
    for (int i = 0; i < 8; ++i)
      bytes[bytes.size() - 8 + static_cast<std::size_t>(i)] =
          static_cast<char>((hash >> (8 * i)) & 0xff);
    std::ofstream(path, std::ios::binary | std::ios::trunc)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"), CheckpointError);
  }
  SUBCASE("corrupted payload byte") {
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x5a);
    std::ofstream(path, std::ios::binary | std::ios::trunc)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("corrupt"), CheckpointError);
  }
  SUBCASE("not a checkpoint at all") {
    std::ofstream(path, std::ios::binary | std::ios::trunc) << "definitely not binary";
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  }
  std::filesystem::remove(path);
}

TEST_CASE("stats CSV has the documented header and rows") {
  std::vector<EpochStats> stats{{1, 2.5, 0.25, 0.125}};
  const auto path = rnkn::test::temp_path("stats");
  write_stats_csv(stats, path);
  std::ifstream in(path);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "epoch,loss,p_at_10,dcg");
  REQUIRE(std::getline(in, line));
  CHECK(line == "1,2.5,0.25,0.125");
  std::filesystem::remove(path);
}

}  // TEST_SUITE
