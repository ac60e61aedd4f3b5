#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "comet/corpus.hpp"

namespace comet {

// Pretrained word vectors in the usual text layout: `token v1 v2 ... vd`
// per line, dimension inferred from the first line.
struct EmbeddingTable {
  std::string name;
  int dim = 0;
  std::unordered_map<std::string, std::vector<double>> vocab;
};

struct EmbeddingLoadResult {
  EmbeddingTable table;
  LoadReport report;
};

// Lines whose vector arity disagrees with the first line are skipped with a
// warning; a non-numeric component or an empty file aborts the load.
EmbeddingLoadResult load_embedding_table(const std::string& path, std::string name = {});
void save_embedding_table(const EmbeddingTable& table, const std::string& path);

// word_dim -> doc_dim mapping configuration. When the dimensions are equal
// the projection is the identity; otherwise a fixed Gaussian matrix drawn
// once from projection_seed (entries scaled by 1/sqrt(word_dim)).
struct DocVectorConfig {
  int word_dim = 0;
  int doc_dim = 0;
  std::uint64_t projection_seed = 0;
};

struct DocumentVector {
  std::vector<double> values;  // doc_dim components
  double oov_fraction = 0.0;   // in [0,1]; 1.0 for empty or all-OOV input
};

// Materialized projection for one DocVectorConfig; reusable across calls so
// the matrix is generated exactly once per configuration.
class DocProjector {
 public:
  explicit DocProjector(const DocVectorConfig& cfg);

  const DocVectorConfig& config() const { return cfg_; }
  bool is_identity() const { return matrix_.empty(); }
  // Row-major doc_dim x word_dim; empty when identity.
  const std::vector<double>& matrix() const { return matrix_; }

  std::vector<double> apply(std::span<const double> pooled) const;

 private:
  DocVectorConfig cfg_;
  std::vector<double> matrix_;
};

// Mean of in-vocabulary token vectors followed by the fixed projection.
// Empty or all-OOV token lists yield the zero vector with oov_fraction 1.
DocumentVector embed_document(std::span<const std::string> tokens, const EmbeddingTable& table,
                              const DocProjector& projector);
DocumentVector embed_document(std::span<const std::string> tokens, const EmbeddingTable& table,
                              const DocVectorConfig& cfg);

}  // namespace comet
