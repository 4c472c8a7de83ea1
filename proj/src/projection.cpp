#include "rnkn/projection.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace rnkn {

namespace {

constexpr double kTolerance = 1e-9;
constexpr int kMaxIterations = 50000;

// Leading eigenvector of a symmetric PSD matrix, or zero when the matrix is
// numerically null. The start vector depends only on the dimension.
Vec power_iterate(const Mat& m, double& eigenvalue) {
  const auto d = m.rows();
  std::mt19937_64 rng(0x706f776572ull + static_cast<std::uint64_t>(d));
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vec v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = dist(rng);
  v.normalize();

  for (int iter = 0; iter < kMaxIterations; ++iter) {
    Vec w = m * v;
    const double norm = w.norm();
    if (norm < 1e-300) {
      eigenvalue = 0.0;
      return Vec::Zero(d);
    }
    w /= norm;
    const bool settled = (w - v).norm() < kTolerance || (w + v).norm() < kTolerance;
    v = w;
    if (settled) break;
  }

  // Fix the sign: largest-magnitude component positive.
  Eigen::Index peak = 0;
  v.cwiseAbs().maxCoeff(&peak);
  if (v(peak) < 0) v = -v;
  eigenvalue = v.dot(m * v);
  return v;
}

}  // namespace

void export_embeddings(const Checkpoint& ckpt, const std::filesystem::path& path,
                       std::optional<EntityKind> filter) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write embeddings file: " + path.string());
  char value[40];
  for (std::size_t i = 0; i < ckpt.vocabulary.entities.size(); ++i) {
    const auto& entry = ckpt.vocabulary.entities[i];
    if (filter && entry.kind != *filter) continue;
    out << entry.name << '\t' << to_token(entry.kind);
    for (Eigen::Index c = 0; c < ckpt.params.embeddings.cols(); ++c) {
      std::snprintf(value, sizeof(value), "%.17g",
                    ckpt.params.embeddings(static_cast<Eigen::Index>(i), c));
      out << '\t' << value;
    }
    out << '\n';
  }
}

EmbeddingTable read_embeddings_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open embeddings file: " + path.string());
  EmbeddingTable table;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name;
    std::string kind_token;
    if (!std::getline(fields, name, '\t') || !std::getline(fields, kind_token, '\t'))
      throw CheckpointError("embeddings file line " + std::to_string(line_no) +
                            ": expected name, kind, values");
    const auto kind = parse_entity_kind(kind_token);
    if (!kind)
      throw CheckpointError("embeddings file line " + std::to_string(line_no) +
                            ": unknown kind '" + kind_token + "'");
    std::vector<double> values;
    std::string field;
    while (std::getline(fields, field, '\t')) values.push_back(std::stod(field));
    if (values.empty() || (!rows.empty() && values.size() != rows.front().size()))
      throw CheckpointError("embeddings file line " + std::to_string(line_no) +
                            ": inconsistent value count");
    table.names.push_back(std::move(name));
    table.kinds.push_back(*kind);
    rows.push_back(std::move(values));
  }
  table.values = Mat(static_cast<Eigen::Index>(rows.size()),
                     rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return table;
}

Mat project_2d(const Mat& data) {
  if (data.rows() < 2) throw std::invalid_argument("projection needs at least 2 points");
  if (data.cols() < 2) throw std::invalid_argument("projection needs at least 2 dimensions");

  const Mat centered = data.rowwise() - data.colwise().mean();
  Mat cov = centered.transpose() * centered / static_cast<double>(data.rows() - 1);

  Mat axes(data.cols(), 2);
  for (int k = 0; k < 2; ++k) {
    double eigenvalue = 0.0;
    const Vec v = power_iterate(cov, eigenvalue);
    axes.col(k) = v;
    cov -= eigenvalue * v * v.transpose();
  }
  return centered * axes;
}

void write_projection_csv(const EmbeddingTable& table, const Mat& coords,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write projection file: " + path.string());
  out << "name,kind,x,y\n";
  char values[96];
  for (Eigen::Index r = 0; r < coords.rows(); ++r) {
    std::snprintf(values, sizeof(values), "%.17g,%.17g", coords(r, 0), coords(r, 1));
    out << table.names[static_cast<std::size_t>(r)] << ','
        << to_token(table.kinds[static_cast<std::size_t>(r)]) << ',' << values << '\n';
  }
}

}  // namespace rnkn
