#include <bit>
#include <cstring>
#include <fstream>

#include "rnkn/trainer.hpp"

namespace rnkn {

namespace {

constexpr char kMagic[4] = {'R', 'N', 'K', 'N'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char byte : data) {
    hash ^= byte;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

struct Writer {
  std::string buf;

  void u8(std::uint8_t v) { buf.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf.append(s);
  }
  void mat(const Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
};

struct Reader {
  std::string_view data;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > data.size()) throw CheckpointError("truncated checkpoint file");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data[pos++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(data.substr(pos, n));
    pos += n;
    return s;
  }
  void mat(Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
  }
};

void write_config(Writer& w, const TrainConfig& cfg) {
  w.u32(static_cast<std::uint32_t>(cfg.net.dim));
  w.f64(cfg.net.lambda);
  w.f64(cfg.net.init_radius);
  w.u64(cfg.net.seed);
  w.u8(cfg.net.use_bias ? 1 : 0);
  w.u8(cfg.net.regularize_embeddings ? 1 : 0);
  w.u8(cfg.net.leaf_softmax_grad_only ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(cfg.epochs));
  w.f64(cfg.step_vector);
  w.f64(cfg.step_weight);
  w.f64(cfg.step_softmax);
  w.u8(static_cast<std::uint8_t>(cfg.mode));
  w.u32(static_cast<std::uint32_t>(cfg.eval_every));
  w.f64(cfg.loss_threshold);
  w.u8(cfg.shuffle ? 1 : 0);
  w.u8(cfg.batch_updates ? 1 : 0);
}

TrainConfig read_config(Reader& r) {
  TrainConfig cfg;
  cfg.net.dim = static_cast<int>(r.u32());
  cfg.net.lambda = r.f64();
  cfg.net.init_radius = r.f64();
  cfg.net.seed = r.u64();
  cfg.net.use_bias = r.u8() != 0;
  cfg.net.regularize_embeddings = r.u8() != 0;
  cfg.net.leaf_softmax_grad_only = r.u8() != 0;
  cfg.epochs = static_cast<int>(r.u32());
  cfg.step_vector = r.f64();
  cfg.step_weight = r.f64();
  cfg.step_softmax = r.f64();
  cfg.mode = static_cast<EvidenceMode>(r.u8());
  cfg.eval_every = static_cast<int>(r.u32());
  cfg.loss_threshold = r.f64();
  cfg.shuffle = r.u8() != 0;
  cfg.batch_updates = r.u8() != 0;
  return cfg;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.buf.append(kMagic, sizeof(kMagic));
  w.u32(kVersion);

  const auto& vocab = ckpt.vocabulary;
  w.u64(vocab.entities.size());
  for (const auto& entry : vocab.entities) {
    w.str(entry.name);
    w.u8(static_cast<std::uint8_t>(entry.kind));
    w.u64(static_cast<std::uint64_t>(entry.record_frequency));
  }
  w.u64(vocab.class_entities.size());
  for (EntityId entity : vocab.class_entities) w.u32(static_cast<std::uint32_t>(entity));

  w.u64(ckpt.knowledge.size());
  for (const auto& triple : ckpt.knowledge) {
    w.u32(static_cast<std::uint32_t>(triple.head));
    w.u8(static_cast<std::uint8_t>(triple.relation));
    w.u32(static_cast<std::uint32_t>(triple.tail));
    w.u64(static_cast<std::uint64_t>(triple.frequency));
  }

  write_config(w, ckpt.config);

  const auto& params = ckpt.params;
  w.u32(static_cast<std::uint32_t>(params.vocab_size()));
  w.u32(static_cast<std::uint32_t>(params.dim()));
  w.mat(params.embeddings);
  w.mat(params.combine);
  w.u32(static_cast<std::uint32_t>(params.class_count()));
  w.mat(params.classify);
  for (Eigen::Index i = 0; i < params.bias.size(); ++i) w.f64(params.bias(i));

  w.u64(ckpt.stats.size());
  for (const auto& s : ckpt.stats) {
    w.u32(static_cast<std::uint32_t>(s.epoch));
    w.f64(s.mean_loss);
    w.f64(s.precision_at_10);
    w.f64(s.dcg);
  }

  const std::uint64_t checksum = fnv1a(w.buf);
  w.u64(checksum);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path.string());
  out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw CheckpointError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (blob.size() < sizeof(kMagic) + 4 + 8) throw CheckpointError("truncated checkpoint file");
  if (std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a checkpoint file (bad magic)");

  const std::string_view payload(blob.data(), blob.size() - 8);
  Reader tail{std::string_view(blob.data() + blob.size() - 8, 8), 0};
  if (fnv1a(payload) != tail.u64())
    throw CheckpointError("checksum mismatch (corrupt checkpoint)");

  Reader r{payload, sizeof(kMagic)};
  const auto version = r.u32();
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.version = version;

  const auto entity_count = r.u64();
  std::vector<std::int64_t> frequencies;
  frequencies.reserve(entity_count);
  for (std::uint64_t i = 0; i < entity_count; ++i) {
    const std::string name = r.str();
    const auto kind = static_cast<EntityKind>(r.u8());
    frequencies.push_back(static_cast<std::int64_t>(r.u64()));
    ckpt.vocabulary.add(name, kind);
  }
  for (std::uint64_t i = 0; i < entity_count; ++i)
    ckpt.vocabulary.entities[i].record_frequency = frequencies[i];
  const auto class_count = r.u64();
  if (class_count != ckpt.vocabulary.class_entities.size())
    throw CheckpointError("inconsistent class table");
  for (std::uint64_t i = 0; i < class_count; ++i) {
    if (static_cast<EntityId>(r.u32()) != ckpt.vocabulary.class_entities[i])
      throw CheckpointError("inconsistent class table");
  }

  const auto knowledge_count = r.u64();
  ckpt.knowledge.reserve(knowledge_count);
  for (std::uint64_t i = 0; i < knowledge_count; ++i) {
    KnowledgeTriple triple;
    triple.head = static_cast<EntityId>(r.u32());
    triple.relation = static_cast<RelationType>(r.u8());
    triple.tail = static_cast<EntityId>(r.u32());
    triple.frequency = static_cast<std::int64_t>(r.u64());
    ckpt.knowledge.push_back(triple);
  }

  ckpt.config = read_config(r);

  const auto vocab_size = r.u32();
  const auto dim = r.u32();
  ckpt.params.embeddings = Mat(vocab_size, dim);
  r.mat(ckpt.params.embeddings);
  ckpt.params.combine = Mat(dim, 2 * dim);
  r.mat(ckpt.params.combine);
  const auto classes = r.u32();
  ckpt.params.classify = Mat(classes, dim);
  r.mat(ckpt.params.classify);
  ckpt.params.bias = Vec(dim);
  for (std::uint32_t i = 0; i < dim; ++i) ckpt.params.bias(i) = r.f64();

  const auto stats_count = r.u64();
  ckpt.stats.reserve(stats_count);
  for (std::uint64_t i = 0; i < stats_count; ++i) {
    EpochStats s;
    s.epoch = static_cast<int>(r.u32());
    s.mean_loss = r.f64();
    s.precision_at_10 = r.f64();
    s.dcg = r.f64();
    ckpt.stats.push_back(s);
  }
  return ckpt;
}

}  // namespace rnkn
