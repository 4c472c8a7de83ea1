#pragma once

#include <filesystem>
#include <optional>

#include "rnkn/trainer.hpp"

namespace rnkn {

// One TSV row per entity: name, kind, then the d embedding values, printed
// exactly. An optional kind filter restricts the export (disease-only is the
// usual choice for cluster inspection).
void export_embeddings(const Checkpoint& ckpt, const std::filesystem::path& path,
                       std::optional<EntityKind> filter = std::nullopt);

// Rows of an exported embedding table.
struct EmbeddingTable {
  std::vector<std::string> names;
  std::vector<EntityKind> kinds;
  Mat values;  // n x d
};

EmbeddingTable read_embeddings_tsv(const std::filesystem::path& path);

// Projects mean-centered rows onto the top two principal directions found by
// power iteration with deflation (tolerance 1e-9, deterministic start).
// Zero-variance input maps every point to the origin.
Mat project_2d(const Mat& data);

void write_projection_csv(const EmbeddingTable& table, const Mat& coords,
                          const std::filesystem::path& path);

}  // namespace rnkn
