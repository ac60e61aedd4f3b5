#include "comet/embed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "comet/common.hpp"
#include "comet/rng.hpp"

namespace comet {

EmbeddingLoadResult load_embedding_table(const std::string& path, std::string name) {
  EmbeddingLoadResult result;
  result.table.name = name.empty() ? path : std::move(name);

  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file: " + path);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = trim_view(line);
    if (trimmed.empty()) continue;
    ++result.report.rows_seen;

    std::istringstream fields{std::string(trimmed)};
    std::string token;
    fields >> token;
    std::vector<double> values;
    if (result.table.dim > 0) values.reserve(static_cast<std::size_t>(result.table.dim));
    std::string component;
    while (fields >> component) {
      const auto v = parse_double(component);
      if (!v || !std::isfinite(*v))
        throw Error(path + ": line " + std::to_string(line_no) + ": non-numeric component '" +
                    component + "'");
      values.push_back(*v);
    }
    if (values.empty())
      throw Error(path + ": line " + std::to_string(line_no) + ": no vector components");

    if (result.table.dim == 0) {
      result.table.dim = static_cast<int>(values.size());
    } else if (static_cast<int>(values.size()) != result.table.dim) {
      result.report.malformed.emplace_back(
          line_no, "expected " + std::to_string(result.table.dim) + " components, got " +
                       std::to_string(values.size()));
      result.report.warnings.push_back(path + ": line " + std::to_string(line_no) +
                                       ": dimension mismatch, line skipped");
      continue;
    }
    result.table.vocab[token] = std::move(values);
    ++result.report.rows_loaded;
  }

  if (result.table.vocab.empty()) throw Error(path + ": empty embedding table");
  return result;
}

void save_embedding_table(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open embedding file for writing: " + path);
  // sorted for reproducible bytes
  std::vector<const std::string*> tokens;
  tokens.reserve(table.vocab.size());
  for (const auto& [token, _] : table.vocab) tokens.push_back(&token);
  std::sort(tokens.begin(), tokens.end(),
            [](const std::string* a, const std::string* b) { return *a < *b; });
  for (const std::string* token : tokens) {
    out << *token;
    for (double v : table.vocab.at(*token)) out << ' ' << format_double(v);
    out << '\n';
  }
  if (!out) throw IoError("short write: " + path);
}

DocProjector::DocProjector(const DocVectorConfig& cfg) : cfg_(cfg) {
  if (cfg_.word_dim <= 0 || cfg_.doc_dim <= 0)
    throw ConfigError("document vector dimensions must be positive");
  if (cfg_.word_dim == cfg_.doc_dim) return;  // identity
  matrix_.resize(static_cast<std::size_t>(cfg_.doc_dim) * static_cast<std::size_t>(cfg_.word_dim));
  Rng rng(cfg_.projection_seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.word_dim));
  for (double& entry : matrix_) entry = rng.next_gaussian() * scale;
}

std::vector<double> DocProjector::apply(std::span<const double> pooled) const {
  if (static_cast<int>(pooled.size()) != cfg_.word_dim)
    throw Error("projector expects " + std::to_string(cfg_.word_dim) + " components, got " +
                std::to_string(pooled.size()));
  if (is_identity()) return {pooled.begin(), pooled.end()};
  std::vector<double> out(static_cast<std::size_t>(cfg_.doc_dim), 0.0);
  const std::size_t w = static_cast<std::size_t>(cfg_.word_dim);
  for (std::size_t r = 0; r < out.size(); ++r) {
    const double* row = matrix_.data() + r * w;
    double acc = 0.0;
    for (std::size_t c = 0; c < w; ++c) acc += row[c] * pooled[c];
    out[r] = acc;
  }
  return out;
}

DocumentVector embed_document(std::span<const std::string> tokens, const EmbeddingTable& table,
                              const DocProjector& projector) {
  if (projector.config().word_dim != table.dim)
    throw Error("embedding table '" + table.name + "' has dim " + std::to_string(table.dim) +
                ", config expects " + std::to_string(projector.config().word_dim));

  DocumentVector doc;
  std::vector<double> pooled(static_cast<std::size_t>(table.dim), 0.0);
  std::size_t in_vocab = 0;
  for (const auto& token : tokens) {
    const auto it = table.vocab.find(token);
    if (it == table.vocab.end()) continue;
    ++in_vocab;
    for (std::size_t i = 0; i < pooled.size(); ++i) pooled[i] += it->second[i];
  }

  if (in_vocab == 0) {
    // empty or fully out-of-vocabulary input
    doc.values.assign(static_cast<std::size_t>(projector.config().doc_dim), 0.0);
    doc.oov_fraction = 1.0;
    return doc;
  }

  for (double& v : pooled) v /= static_cast<double>(in_vocab);
  doc.values = projector.apply(pooled);
  doc.oov_fraction =
      1.0 - static_cast<double>(in_vocab) / static_cast<double>(tokens.size());
  return doc;
}

DocumentVector embed_document(std::span<const std::string> tokens, const EmbeddingTable& table,
                              const DocVectorConfig& cfg) {
  return embed_document(tokens, table, DocProjector(cfg));
}

}  // namespace comet
