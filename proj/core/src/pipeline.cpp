#include "comet/pipeline.hpp"

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

#include <json.hpp>

#include "comet/common.hpp"
#include "comet/csv.hpp"
#include "comet/measure.hpp"
#include "comet/metrics.hpp"

namespace comet {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- minimal TOML-style config parsing ------------------------------------

namespace {

struct ConfigValue {
  enum class Kind { string, number, boolean, array };
  Kind kind = Kind::string;
  std::string str;
  double num = 0.0;
  bool boolean = false;
  std::vector<std::string> array;
  std::size_t line = 0;
};

// Strips a trailing comment that starts outside quotes.
std::string_view strip_comment(std::string_view line) {
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_quotes = !in_quotes;
    if (line[i] == '#' && !in_quotes) return line.substr(0, i);
  }
  return line;
}

std::map<std::string, ConfigValue> parse_config_text(const std::string& text,
                                                     const std::string& path) {
  std::map<std::string, ConfigValue> values;
  std::string prefix;
  std::size_t line_no = 0;
  std::istringstream in(text);
  std::string raw;

  auto fail = [&](const std::string& msg) -> void {
    throw ConfigError(path + ": line " + std::to_string(line_no) + ": " + msg);
  };

  auto parse_scalar = [&](std::string_view token, ConfigValue& out) {
    token = trim_view(token);
    if (token.size() >= 2 && token.front() == '"' && token.back() == '"') {
      out.kind = ConfigValue::Kind::string;
      out.str = std::string(token.substr(1, token.size() - 2));
      return;
    }
    if (token == "true" || token == "false") {
      out.kind = ConfigValue::Kind::boolean;
      out.boolean = token == "true";
      return;
    }
    if (const auto num = parse_double(token)) {
      out.kind = ConfigValue::Kind::number;
      out.num = *num;
      out.str = std::string(token);
      return;
    }
    fail("cannot parse value '" + std::string(token) + "' (strings need quotes)");
  };

  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim_view(strip_comment(raw));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      const auto section = trim_view(line.substr(1, line.size() - 2));
      if (section.empty()) fail("empty section name");
      prefix = std::string(section) + ".";
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail("expected key = value");
    const auto key_part = trim_view(line.substr(0, eq));
    if (key_part.empty()) fail("empty key");
    const std::string key = prefix + std::string(key_part);
    const auto value_part = trim_view(line.substr(eq + 1));
    if (value_part.empty()) fail("empty value for '" + key + "'");

    ConfigValue value;
    value.line = line_no;
    if (value_part.front() == '[') {
      if (value_part.back() != ']') fail("unterminated array");
      value.kind = ConfigValue::Kind::array;
      std::string_view body = value_part.substr(1, value_part.size() - 2);
      while (true) {
        const auto comma = body.find(',');
        const auto item = trim_view(comma == std::string_view::npos ? body : body.substr(0, comma));
        if (!item.empty()) {
          ConfigValue element;
          parse_scalar(item, element);
          value.array.push_back(element.kind == ConfigValue::Kind::string ? element.str
                                                                          : std::string(item));
        }
        if (comma == std::string_view::npos) break;
        body = body.substr(comma + 1);
      }
    } else {
      parse_scalar(value_part, value);
    }

    if (!values.emplace(key, std::move(value)).second) fail("duplicate key '" + key + "'");
  }
  return values;
}

// Typed access over the parsed key/value map; unread keys are reported as
// configuration errors so typos never pass silently.
class ConfigReader {
 public:
  ConfigReader(std::map<std::string, ConfigValue> values, std::string path)
      : values_(std::move(values)), path_(std::move(path)) {}

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, std::string fallback) {
    const ConfigValue* v = take(key);
    if (!v) return fallback;
    if (v->kind != ConfigValue::Kind::string) fail(key, "expected a quoted string");
    return v->str;
  }

  double get_double(const std::string& key, double fallback) {
    const ConfigValue* v = take(key);
    if (!v) return fallback;
    if (v->kind != ConfigValue::Kind::number) fail(key, "expected a number");
    return v->num;
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) {
    const ConfigValue* v = take(key);
    if (!v) return fallback;
    if (v->kind != ConfigValue::Kind::number) fail(key, "expected an integer");
    const auto i = parse_int(v->str);
    if (!i) fail(key, "expected an integer");
    return *i;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    const auto v = get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) fail(key, "expected a non-negative integer");
    return static_cast<std::uint64_t>(v);
  }

  std::vector<std::string> get_string_array(const std::string& key,
                                            std::vector<std::string> fallback) {
    const ConfigValue* v = take(key);
    if (!v) return fallback;
    if (v->kind != ConfigValue::Kind::array) fail(key, "expected an array of strings");
    return v->array;
  }

  void finish() const {
    std::vector<std::string> unknown;
    for (const auto& [key, value] : values_)
      if (!consumed_.count(key)) unknown.push_back(key);
    if (!unknown.empty()) {
      std::string msg = path_ + ": unknown configuration key(s):";
      for (const auto& k : unknown) msg += " " + k;
      throw ConfigError(msg);
    }
  }

 private:
  const ConfigValue* take(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    consumed_.insert(key);
    return &it->second;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ConfigError(path_ + ": key '" + key + "': " + msg);
  }

  std::map<std::string, ConfigValue> values_;
  std::set<std::string> consumed_;
  std::string path_;
};

void apply_train_keys(ConfigReader& reader, const std::string& prefix, TrainConfig& cfg) {
  cfg.learning_rate = reader.get_double(prefix + "learning_rate", cfg.learning_rate);
  cfg.batch_size = static_cast<int>(reader.get_int(prefix + "batch_size", cfg.batch_size));
  cfg.epochs = static_cast<int>(reader.get_int(prefix + "epochs", cfg.epochs));
  cfg.dropout_rate = reader.get_double(prefix + "dropout", cfg.dropout_rate);
  cfg.rmsprop_rho = reader.get_double(prefix + "rmsprop_rho", cfg.rmsprop_rho);
  cfg.rmsprop_epsilon = reader.get_double(prefix + "rmsprop_epsilon", cfg.rmsprop_epsilon);
  cfg.seed = reader.get_u64(prefix + "seed", cfg.seed);
}

bool train_section_present(const ConfigReader& reader, const std::string& prefix) {
  for (const char* key : {"learning_rate", "batch_size", "epochs", "dropout", "rmsprop_rho",
                          "rmsprop_epsilon", "seed"})
    if (reader.has(prefix + key)) return true;
  return false;
}

}  // namespace

TrainConfig PipelineConfig::train_config_for(Category c) const {
  if (const auto& o = train_overrides[static_cast<int>(c)]) return *o;
  return train_defaults;
}

TrainConfig PipelineConfig::finetune_config_for(Category c) const {
  TrainConfig cfg = train_config_for(c);
  if (finetune_overrides) {
    // the finetune section is itself a full TrainConfig snapshot
    cfg = *finetune_overrides;
  }
  return cfg;
}

AgeGroups PipelineConfig::age_groups() const {
  if (age_group_labels.empty()) return AgeGroups::standard();
  return AgeGroups(age_group_labels);
}

PipelineConfig load_pipeline_config(const std::string& path) {
  ConfigReader reader(parse_config_text(read_text_file(path), path), path);
  PipelineConfig cfg;

  cfg.labeled_base = reader.get_string("paths.labeled_base", "");
  cfg.labeled_domain = reader.get_string("paths.labeled_domain", "");
  cfg.unlabeled = reader.get_string("paths.unlabeled", "");
  cfg.videos = reader.get_string("paths.videos", "");
  cfg.gensim_embeddings = reader.get_string("paths.gensim_embeddings", "");
  cfg.glove_embeddings = reader.get_string("paths.glove_embeddings", "");
  cfg.model_dir = reader.get_string("paths.model_dir", cfg.model_dir);
  cfg.report_dir = reader.get_string("paths.report_dir", cfg.report_dir);
  cfg.word_list = reader.get_string("paths.word_list", "");
  {
    const std::string format = reader.get_string("paths.format", "csv");
    const auto f = file_format_from_name(format);
    if (!f) throw ConfigError(path + ": paths.format must be 'csv' or 'jsonl'");
    cfg.format = *f;
  }

  cfg.split_fraction = reader.get_double("split.fraction", cfg.split_fraction);
  cfg.split_seed = reader.get_u64("split.seed", cfg.split_seed);

  cfg.gensim_doc_dim = static_cast<int>(reader.get_int("embedding.gensim_doc_dim", cfg.gensim_doc_dim));
  cfg.glove_doc_dim = static_cast<int>(reader.get_int("embedding.glove_doc_dim", cfg.glove_doc_dim));
  cfg.projection_seed = reader.get_u64("embedding.projection_seed", cfg.projection_seed);

  apply_train_keys(reader, "train.", cfg.train_defaults);
  cfg.negative_downsample =
      reader.get_double("train.negative_downsample", cfg.negative_downsample);
  for (Category c : kAllCategories) {
    const std::string prefix = "train." + std::string(category_name(c)) + ".";
    if (train_section_present(reader, prefix)) {
      TrainConfig per = cfg.train_defaults;
      apply_train_keys(reader, prefix, per);
      cfg.train_overrides[static_cast<int>(c)] = per;
    }
  }
  if (train_section_present(reader, "finetune.")) {
    TrainConfig ft = cfg.train_defaults;
    apply_train_keys(reader, "finetune.", ft);
    cfg.finetune_overrides = ft;
  }

  for (Category c : kAllCategories) {
    const std::string key = "bindings." + std::string(category_name(c));
    std::string binding =
        reader.get_string(key, cfg.bindings[static_cast<int>(c)]);
    if (binding != "gensim" && binding != "glove")
      throw ConfigError(path + ": " + key + " must be 'gensim' or 'glove'");
    cfg.bindings[static_cast<int>(c)] = std::move(binding);
  }

  cfg.threshold_policy = reader.get_string("thresholds.policy", cfg.threshold_policy);
  if (cfg.threshold_policy != "max_min_rate" && cfg.threshold_policy != "youden" &&
      cfg.threshold_policy != "fixed")
    throw ConfigError(path + ": thresholds.policy must be max_min_rate, youden or fixed");
  cfg.grid_step = reader.get_double("thresholds.grid_step", cfg.grid_step);
  cfg.unlabeled_sample_rows = static_cast<std::size_t>(
      reader.get_int("thresholds.unlabeled_sample_rows",
                     static_cast<std::int64_t>(cfg.unlabeled_sample_rows)));
  for (Category c : kAllCategories) {
    const std::string key = "thresholds." + std::string(category_name(c));
    cfg.fixed_thresholds[static_cast<int>(c)] =
        reader.get_double(key, cfg.fixed_thresholds[static_cast<int>(c)]);
  }

  cfg.age_group_labels = reader.get_string_array("age_groups.labels", {});

  cfg.channel_top_k = static_cast<std::size_t>(
      reader.get_int("measure.channel_top_k", static_cast<std::int64_t>(cfg.channel_top_k)));
  cfg.top_words_k = static_cast<std::size_t>(
      reader.get_int("measure.top_words_k", static_cast<std::int64_t>(cfg.top_words_k)));

  cfg.threads = static_cast<int>(reader.get_int("run.threads", cfg.threads));

  reader.finish();

  cfg.train_defaults.validate();
  if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0))
    throw ConfigError(path + ": split.fraction must lie in (0,1)");
  if (cfg.gensim_doc_dim <= 0 || cfg.glove_doc_dim <= 0)
    throw ConfigError(path + ": document vector dimensions must be positive");
  if (!(cfg.grid_step > 0.0 && cfg.grid_step <= 1.0))
    throw ConfigError(path + ": thresholds.grid_step must lie in (0,1]");
  if (cfg.threads < 1) throw ConfigError(path + ": run.threads must be at least 1");
  (void)cfg.age_groups();  // validates custom labels
  return cfg;
}

PipelineConfig apply_overrides(PipelineConfig cfg, const RunOverrides& overrides) {
  if (overrides.seed) {
    cfg.split_seed = *overrides.seed;
    cfg.train_defaults.seed = *overrides.seed;
    for (auto& per : cfg.train_overrides)
      if (per) per->seed = *overrides.seed;
    if (cfg.finetune_overrides) cfg.finetune_overrides->seed = *overrides.seed;
  }
  if (overrides.threads) cfg.threads = *overrides.threads;
  if (overrides.format) cfg.format = *overrides.format;
  return cfg;
}

// ---- stage plumbing --------------------------------------------------------

namespace {

void log_line(const std::string& msg) { std::cout << "[comet] " << msg << "\n"; }

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty())
    throw ConfigError("no " + what + " configured (set it under [paths] in the config)");
  if (!fs::exists(path)) throw IoError("missing " + what + ": " + path);
}

std::string log_input(const std::string& path, const std::string& what) {
  const std::string checksum = hex64(fnv1a64_file(path));
  log_line("input " + what + "=" + path + " checksum=" + checksum);
  return checksum;
}

// Guards an output directory against concurrent comet runs.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".comet.lock") {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST)
        throw Error("another comet run holds the lock: " + path_.string() +
                    " (remove it if no other run is active)");
      throw IoError("cannot create lock file: " + path_.string());
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    (void)!::write(fd_, pid.data(), pid.size());
  }

  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }

 private:
  fs::path path_;
  int fd_ = -1;
};

std::string model_stage_path(const PipelineConfig& cfg, Category c, bool base) {
  return (fs::path(cfg.model_dir) /
          (std::string(category_name(c)) + (base ? ".base.model" : ".model")))
      .string();
}

// The working model: finetuned when present, otherwise the base model.
std::string resolve_model_path(const PipelineConfig& cfg, Category c) {
  const std::string finetuned = model_stage_path(cfg, c, /*base=*/false);
  if (fs::exists(finetuned)) return finetuned;
  const std::string base = model_stage_path(cfg, c, /*base=*/true);
  if (fs::exists(base)) return base;
  throw Error("model not found for category '" + std::string(category_name(c)) +
              "' (expected " + finetuned + " or " + base + "; run `comet train` first)");
}

std::vector<Category> selected_categories(std::optional<Category> only) {
  if (only) return {*only};
  return {kAllCategories.begin(), kAllCategories.end()};
}

EnglishLexicon load_lexicon(const PipelineConfig& cfg) {
  if (cfg.word_list.empty()) return EnglishLexicon::builtin();
  require_file(cfg.word_list, "word list");
  return EnglishLexicon::from_file(cfg.word_list);
}

struct EmbeddingContext {
  EmbeddingTable gensim_table;
  EmbeddingTable glove_table;
  std::optional<DocProjector> gensim_projector;
  std::optional<DocProjector> glove_projector;

  const EmbeddingTable& table_for(const PipelineConfig& cfg, Category c) const {
    return cfg.bindings[static_cast<int>(c)] == "glove" ? glove_table : gensim_table;
  }
  const DocProjector& projector_for(const PipelineConfig& cfg, Category c) const {
    return cfg.bindings[static_cast<int>(c)] == "glove" ? *glove_projector : *gensim_projector;
  }
  int doc_dim_for(const PipelineConfig& cfg, Category c) const {
    return projector_for(cfg, c).config().doc_dim;
  }
};

EmbeddingContext load_embeddings(const PipelineConfig& cfg) {
  require_file(cfg.gensim_embeddings, "gensim embedding table");
  require_file(cfg.glove_embeddings, "glove embedding table");
  log_input(cfg.gensim_embeddings, "gensim_embeddings");
  log_input(cfg.glove_embeddings, "glove_embeddings");

  EmbeddingContext ctx;
  auto gensim = load_embedding_table(cfg.gensim_embeddings, "gensim");
  auto glove = load_embedding_table(cfg.glove_embeddings, "glove");
  for (const auto& w : gensim.report.warnings) log_line("warning: " + w);
  for (const auto& w : glove.report.warnings) log_line("warning: " + w);
  ctx.gensim_table = std::move(gensim.table);
  ctx.glove_table = std::move(glove.table);
  ctx.gensim_projector.emplace(DocVectorConfig{ctx.gensim_table.dim, cfg.gensim_doc_dim,
                                               cfg.projection_seed});
  ctx.glove_projector.emplace(DocVectorConfig{ctx.glove_table.dim, cfg.glove_doc_dim,
                                              Rng::derive(cfg.projection_seed, 1)});
  log_line("embedding gensim: " + std::to_string(ctx.gensim_table.vocab.size()) + " tokens, " +
           std::to_string(ctx.gensim_table.dim) + " -> " + std::to_string(cfg.gensim_doc_dim));
  log_line("embedding glove: " + std::to_string(ctx.glove_table.vocab.size()) + " tokens, " +
           std::to_string(ctx.glove_table.dim) + " -> " + std::to_string(cfg.glove_doc_dim));
  return ctx;
}

// Tokenized and embedded view of a labeled dataset. Comments dropped by the
// language/cleaning gate are excluded from training and evaluation.
struct PreparedCorpus {
  std::vector<LabelVector> labels;
  std::vector<std::vector<double>> gensim_docs;
  std::vector<std::vector<double>> glove_docs;
  std::size_t dropped_non_english = 0;
  std::size_t dropped_empty = 0;
};

PreparedCorpus prepare_corpus(const LabeledDataset& dataset, const EnglishLexicon& lexicon,
                              const PipelineConfig& cfg, const EmbeddingContext& ctx,
                              std::span<const Category> categories) {
  bool need_gensim = false, need_glove = false;
  for (Category c : categories)
    (cfg.bindings[static_cast<int>(c)] == "glove" ? need_glove : need_gensim) = true;

  PreparedCorpus prepared;
  for (const auto& rec : dataset.records) {
    const TokenizedDoc doc = preprocess_comment(rec.comment.id, rec.comment.text, lexicon);
    if (doc.dropped_reason) {
      if (*doc.dropped_reason == DropReason::non_english)
        ++prepared.dropped_non_english;
      else
        ++prepared.dropped_empty;
      continue;
    }
    prepared.labels.push_back(rec.labels);
    if (need_gensim)
      prepared.gensim_docs.push_back(
          embed_document(doc.tokens, ctx.gensim_table, *ctx.gensim_projector).values);
    if (need_glove)
      prepared.glove_docs.push_back(
          embed_document(doc.tokens, ctx.glove_table, *ctx.glove_projector).values);
  }
  return prepared;
}

const std::vector<std::vector<double>>& docs_for(const PreparedCorpus& prepared,
                                                 const PipelineConfig& cfg, Category c) {
  return cfg.bindings[static_cast<int>(c)] == "glove" ? prepared.glove_docs
                                                      : prepared.gensim_docs;
}

std::vector<TrainExample> build_examples(const PreparedCorpus& prepared,
                                         const PipelineConfig& cfg, Category c,
                                         std::uint64_t downsample_seed) {
  const auto& docs = docs_for(prepared, cfg, c);
  std::vector<TrainExample> examples;
  examples.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i)
    examples.push_back({docs[i], prepared.labels[i][c]});

  if (cfg.negative_downsample > 0.0) {
    std::size_t positives = 0;
    for (const auto& ex : examples) positives += ex.positive ? 1 : 0;
    const auto keep_negatives = static_cast<std::size_t>(
        std::llround(cfg.negative_downsample * static_cast<double>(positives)));
    std::vector<std::size_t> negative_idx;
    for (std::size_t i = 0; i < examples.size(); ++i)
      if (!examples[i].positive) negative_idx.push_back(i);
    if (negative_idx.size() > keep_negatives) {
      Rng rng(downsample_seed);
      rng.shuffle(negative_idx);
      negative_idx.resize(keep_negatives);
      std::set<std::size_t> keep(negative_idx.begin(), negative_idx.end());
      std::vector<TrainExample> filtered;
      filtered.reserve(positives + keep_negatives);
      for (std::size_t i = 0; i < examples.size(); ++i)
        if (examples[i].positive || keep.count(i)) filtered.push_back(std::move(examples[i]));
      examples = std::move(filtered);
    }
  }
  return examples;
}

void report_split_counts(const char* tag, const LabeledDataset& part) {
  const LabelCounts counts = count_labels(part);
  std::string msg = std::string(tag) + ": " + std::to_string(counts.total) + " records (safe " +
                    std::to_string(counts.safe);
  for (Category c : kAllCategories)
    msg += ", " + std::string(category_name(c)) + " " +
           std::to_string(counts.positives[static_cast<int>(c)]);
  log_line(msg + ")");
}

void print_load_report(const std::string& path, const LoadReport& report) {
  log_line(path + ": " + std::to_string(report.rows_loaded) + " rows loaded, " +
           std::to_string(report.malformed.size()) + " malformed, " +
           std::to_string(report.duplicate_ids) + " duplicate ids, " +
           std::to_string(report.hierarchy_violations) + " hierarchy warnings");
  for (const auto& w : report.warnings) log_line("warning: " + w);
}

std::size_t csv_row_count(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return 0;
  csv::Reader reader(in);
  csv::Record rec;
  std::string error;
  std::size_t rows = 0;
  while (reader.next(rec, error) != csv::Reader::Status::eof) ++rows;
  return rows == 0 ? 0 : rows - 1;  // minus header
}

void write_json(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

json manifest_entry(const std::string& path, bool with_rows) {
  json entry;
  entry["file"] = fs::path(path).filename().string();
  entry["bytes"] = static_cast<std::int64_t>(fs::file_size(path));
  entry["checksum"] = hex64(fnv1a64_file(path));
  if (with_rows) entry["rows"] = static_cast<std::int64_t>(csv_row_count(path));
  return entry;
}

std::uint64_t category_salt(Category c) { return 1000 + static_cast<std::uint64_t>(c); }

}  // namespace

// ---- stages ---------------------------------------------------------------

void run_preprocess(const PipelineConfig& cfg) {
  const EnglishLexicon lexicon = load_lexicon(cfg);

  struct Source {
    const char* tag;
    const std::string* path;
  };
  const Source sources[] = {{"labeled_base", &cfg.labeled_base},
                            {"labeled_domain", &cfg.labeled_domain},
                            {"unlabeled", &cfg.unlabeled}};

  bool any = false;
  for (const auto& src : sources)
    if (!src.path->empty()) any = true;
  if (!any) throw ConfigError("preprocess: no corpora configured under [paths]");

  DirLock lock{fs::path(cfg.report_dir)};
  json report;

  for (const auto& src : sources) {
    if (src.path->empty()) continue;
    require_file(*src.path, std::string(src.tag) + " corpus");
    const std::string checksum = log_input(*src.path, src.tag);

    const std::string out_path =
        (fs::path(cfg.report_dir) / ("tokens_" + std::string(src.tag) + ".csv")).string();
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + out_path);
    out << "comment_id,video_id,tokens,dropped_reason\n";

    std::size_t kept = 0, non_english = 0, empty_after_clean = 0;
    CommentReader comments(*src.path, cfg.format);
    while (auto comment = comments.next()) {
      const TokenizedDoc doc = preprocess_comment(comment->id, comment->text, lexicon);
      std::string joined;
      for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
        if (i) joined.push_back(' ');
        joined += doc.tokens[i];
      }
      std::vector<std::string> fields{
          doc.comment_id, comment->video_id, joined,
          doc.dropped_reason ? std::string(drop_reason_name(*doc.dropped_reason)) : ""};
      out << csv::join_row(fields);
      if (doc.dropped_reason) {
        (*doc.dropped_reason == DropReason::non_english ? non_english : empty_after_clean) += 1;
      } else {
        ++kept;
      }
    }

    const LoadReport& load = comments.report();
    json entry;
    entry["input"] = *src.path;
    entry["input_checksum"] = checksum;
    entry["rows_seen"] = load.rows_seen;
    entry["rows_loaded"] = load.rows_loaded;
    entry["malformed"] = load.malformed.size();
    entry["kept"] = kept;
    entry["dropped_non_english"] = non_english;
    entry["dropped_empty_after_clean"] = empty_after_clean;
    entry["tokens_file"] = fs::path(out_path).filename().string();
    report[src.tag] = entry;

    log_line(std::string(src.tag) + ": kept " + std::to_string(kept) + ", dropped " +
             std::to_string(non_english) + " non-English and " +
             std::to_string(empty_after_clean) + " empty after cleaning");
    for (const auto& w : load.warnings) log_line("warning: " + w);
  }

  write_json((fs::path(cfg.report_dir) / "preprocess_report.json").string(), report);
}

void run_train(const PipelineConfig& cfg, std::optional<Category> only) {
  require_file(cfg.labeled_base, "labeled base corpus");
  const EmbeddingContext ctx = load_embeddings(cfg);
  const EnglishLexicon lexicon = load_lexicon(cfg);
  DirLock lock{fs::path(cfg.model_dir)};

  log_input(cfg.labeled_base, "labeled_base");
  const auto loaded = load_labeled_comments(cfg.labeled_base, cfg.format, "labeled_base");
  print_load_report(cfg.labeled_base, loaded.report);

  const auto categories = selected_categories(only);
  const PreparedCorpus prepared = prepare_corpus(loaded.dataset, lexicon, cfg, ctx, categories);
  log_line("training corpus: " + std::to_string(prepared.labels.size()) + " usable records (" +
           std::to_string(prepared.dropped_non_english) + " non-English, " +
           std::to_string(prepared.dropped_empty) + " empty dropped)");

  for (Category c : categories) {
    const TrainConfig train_cfg = cfg.train_config_for(c);
    const auto examples =
        build_examples(prepared, cfg, c, Rng::derive(train_cfg.seed, category_salt(c) + 500));

    MlpModel model = make_default_mlp(ctx.doc_dim_for(cfg, c),
                                      Rng::derive(train_cfg.seed, category_salt(c)),
                                      std::string(category_name(c)),
                                      cfg.bindings[static_cast<int>(c)]);
    log_line("train " + std::string(category_name(c)) + ": " + std::to_string(examples.size()) +
             " examples, seed=" + std::to_string(train_cfg.seed) +
             ", epochs=" + std::to_string(train_cfg.epochs));
    const TrainReport report = train(model, examples, train_cfg);

    const std::string path = model_stage_path(cfg, c, /*base=*/true);
    save_model(model, path);
    log_line("wrote " + path + " (loss " + format_fixed6(report.epoch_mean_loss.front()) +
             " -> " + format_fixed6(report.epoch_mean_loss.back()) + ")");

    json train_json;
    train_json["category"] = category_name(c);
    train_json["seed"] = report.seed;
    train_json["epochs"] = report.epoch_mean_loss.size();
    train_json["epoch_mean_loss"] = report.epoch_mean_loss;
    train_json["total_steps"] = report.total_steps;
    train_json["final_checksum"] = hex64(report.final_checksum);
    write_json((fs::path(cfg.model_dir) / ("train_" + std::string(category_name(c)) + ".json"))
                   .string(),
               train_json);
  }
}

namespace {

// Loads the domain corpus and returns the requested half of the
// deterministic split (first = finetune half, second = evaluation half).
LabeledDataset load_domain_half(const PipelineConfig& cfg, bool first_half) {
  require_file(cfg.labeled_domain, "labeled domain corpus");
  log_input(cfg.labeled_domain, "labeled_domain");
  const auto loaded = load_labeled_comments(cfg.labeled_domain, cfg.format, "labeled_domain");
  print_load_report(cfg.labeled_domain, loaded.report);
  auto [a, b] = split_dataset(loaded.dataset, cfg.split_fraction, cfg.split_seed);
  report_split_counts("split A (finetune)", a);
  report_split_counts("split B (evaluation)", b);
  return first_half ? std::move(a) : std::move(b);
}

}  // namespace

void run_finetune(const PipelineConfig& cfg, std::optional<Category> only) {
  const EmbeddingContext ctx = load_embeddings(cfg);
  const EnglishLexicon lexicon = load_lexicon(cfg);
  DirLock lock{fs::path(cfg.model_dir)};

  const LabeledDataset half = load_domain_half(cfg, /*first_half=*/true);
  const auto categories = selected_categories(only);
  const PreparedCorpus prepared = prepare_corpus(half, lexicon, cfg, ctx, categories);

  for (Category c : categories) {
    const std::string base_path = model_stage_path(cfg, c, /*base=*/true);
    if (!fs::exists(base_path))
      throw Error("model not found for category '" + std::string(category_name(c)) +
                  "' (expected " + base_path + "; run `comet train` first)");
    MlpModel model = load_model(base_path);

    const TrainConfig ft_cfg = cfg.finetune_config_for(c);
    const auto examples =
        build_examples(prepared, cfg, c, Rng::derive(ft_cfg.seed, category_salt(c) + 700));
    log_line("finetune " + std::string(category_name(c)) + ": " +
             std::to_string(examples.size()) + " examples, seed=" + std::to_string(ft_cfg.seed));
    const TrainReport report = fine_tune(model, examples, ft_cfg);

    const std::string path = model_stage_path(cfg, c, /*base=*/false);
    save_model(model, path);
    log_line("wrote " + path);

    json ft_json;
    ft_json["category"] = category_name(c);
    ft_json["seed"] = report.seed;
    ft_json["epoch_mean_loss"] = report.epoch_mean_loss;
    ft_json["final_checksum"] = hex64(report.final_checksum);
    write_json((fs::path(cfg.model_dir) / ("finetune_" + std::string(category_name(c)) + ".json"))
                   .string(),
               ft_json);
  }
}

namespace {

// Scores for the first `rows` unlabeled comments under one category binding;
// used for the detected-fraction column of the threshold sweep.
std::vector<double> sample_unlabeled_scores(const PipelineConfig& cfg,
                                            const EnglishLexicon& lexicon,
                                            const EmbeddingContext& ctx, const MlpModel& model,
                                            Category c, std::size_t rows) {
  std::vector<double> scores;
  if (rows == 0 || cfg.unlabeled.empty() || !fs::exists(cfg.unlabeled)) return scores;
  CommentReader comments(cfg.unlabeled, cfg.format);
  while (scores.size() < rows) {
    auto comment = comments.next();
    if (!comment) break;
    const TokenizedDoc doc = preprocess_comment(comment->id, comment->text, lexicon);
    const DocumentVector vec =
        embed_document(doc.tokens, ctx.table_for(cfg, c), ctx.projector_for(cfg, c));
    scores.push_back(forward(model, vec.values));
  }
  return scores;
}

}  // namespace

void run_calibrate(const PipelineConfig& cfg, std::optional<Category> only) {
  const EmbeddingContext ctx = load_embeddings(cfg);
  const EnglishLexicon lexicon = load_lexicon(cfg);
  DirLock model_lock{fs::path(cfg.model_dir)};
  DirLock report_lock{fs::path(cfg.report_dir)};

  const LabeledDataset half = load_domain_half(cfg, /*first_half=*/false);
  const auto categories = selected_categories(only);
  const PreparedCorpus prepared = prepare_corpus(half, lexicon, cfg, ctx, categories);

  json calibration;
  for (Category c : categories) {
    const std::string path = resolve_model_path(cfg, c);
    MlpModel model = load_model(path);

    const auto& docs = docs_for(prepared, cfg, c);
    std::vector<bool> labels;
    labels.reserve(prepared.labels.size());
    for (const auto& lv : prepared.labels) labels.push_back(lv[c]);
    const std::vector<double> scores = score_all(model, docs);

    const std::vector<double> unlabeled_scores =
        sample_unlabeled_scores(cfg, lexicon, ctx, model, c, cfg.unlabeled_sample_rows);

    std::vector<bool> label_bools(labels.begin(), labels.end());
    const ThresholdCurve curve =
        sweep_thresholds(scores, label_bools, cfg.grid_step, unlabeled_scores, c);

    const ThresholdPolicy policy = *threshold_policy_from_name(
        cfg.threshold_policy, cfg.fixed_thresholds[static_cast<int>(c)]);
    const double threshold = select_threshold(curve, policy);

    model.threshold = threshold;
    const std::string out_path = model_stage_path(cfg, c, /*base=*/false);
    save_model(model, out_path);

    // curve points for inspection / plotting
    const std::string curve_path =
        (fs::path(cfg.report_dir) / ("threshold_curve_" + std::string(category_name(c)) + ".csv"))
            .string();
    std::ofstream out(curve_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + curve_path);
    out << "threshold,tpr,tnr,detected_fraction\n";
    for (const auto& p : curve.points) {
      out << format_fixed6(p.threshold) << ',' << format_fixed6(p.tpr) << ','
          << format_fixed6(p.tnr) << ','
          << (p.detected_fraction ? format_fixed6(*p.detected_fraction) : "") << '\n';
    }

    double tpr_at = 0.0, tnr_at = 0.0;
    for (const auto& p : curve.points)
      if (p.threshold <= threshold) {
        tpr_at = p.tpr;
        tnr_at = p.tnr;
      }
    json entry;
    entry["threshold"] = threshold;
    entry["policy"] = cfg.threshold_policy;
    entry["tpr"] = tpr_at;
    entry["tnr"] = tnr_at;
    entry["model_file"] = fs::path(out_path).filename().string();
    calibration[std::string(category_name(c))] = entry;

    log_line("calibrate " + std::string(category_name(c)) + ": threshold=" +
             format_fixed6(threshold) + " tpr=" + format_fixed6(tpr_at) +
             " tnr=" + format_fixed6(tnr_at));
  }
  write_json((fs::path(cfg.report_dir) / "calibration.json").string(), calibration);
}

void run_evaluate(const PipelineConfig& cfg, std::optional<Category> only) {
  const EmbeddingContext ctx = load_embeddings(cfg);
  const EnglishLexicon lexicon = load_lexicon(cfg);
  DirLock lock{fs::path(cfg.report_dir)};

  const LabeledDataset half = load_domain_half(cfg, /*first_half=*/false);
  const auto categories = selected_categories(only);
  const PreparedCorpus prepared = prepare_corpus(half, lexicon, cfg, ctx, categories);

  const std::string path = (fs::path(cfg.report_dir) / "metrics_report.csv").string();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);
  out << "category,threshold,tp,fp,tn,fn,precision,recall,tnr,f1\n";

  for (Category c : categories) {
    MlpModel model = load_model(resolve_model_path(cfg, c));
    const double threshold =
        model.threshold.value_or(cfg.fixed_thresholds[static_cast<int>(c)]);

    const auto& docs = docs_for(prepared, cfg, c);
    const std::vector<double> scores = score_all(model, docs);
    std::vector<bool> flags, labels;
    flags.reserve(scores.size());
    labels.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      flags.push_back(scores[i] >= threshold);
      labels.push_back(prepared.labels[i][c]);
    }

    const Confusion confusion = confusion_counts(flags, labels);
    const BinaryMetrics metrics = binary_metrics(confusion);
    out << category_name(c) << ',' << format_fixed6(threshold) << ',' << confusion.tp << ','
        << confusion.fp << ',' << confusion.tn << ',' << confusion.fn << ','
        << format_fixed6(metrics.precision) << ',' << format_fixed6(metrics.recall_tpr) << ','
        << format_fixed6(metrics.tnr) << ',' << format_fixed6(metrics.f1) << '\n';

    log_line("evaluate " + std::string(category_name(c)) + ": recall=" +
             format_fixed6(metrics.recall_tpr) + " precision=" + format_fixed6(metrics.precision) +
             " tnr=" + format_fixed6(metrics.tnr) + " f1=" + format_fixed6(metrics.f1));
  }
  log_line("wrote " + path);
}

void run_classify(const PipelineConfig& cfg) {
  require_file(cfg.unlabeled, "unlabeled corpus");
  const EmbeddingContext ctx = load_embeddings(cfg);
  const EnglishLexicon lexicon = load_lexicon(cfg);
  DirLock lock{fs::path(cfg.report_dir)};
  log_input(cfg.unlabeled, "unlabeled");

  EnsembleSpec spec;
  for (Category c : kAllCategories) {
    MlpModel model = load_model(resolve_model_path(cfg, c));
    CategoryBinding binding{std::move(model), &ctx.table_for(cfg, c), ctx.projector_for(cfg, c),
                            0.5};
    binding.threshold =
        binding.model.threshold.value_or(cfg.fixed_thresholds[static_cast<int>(c)]);
    log_line("classify " + std::string(category_name(c)) + ": threshold=" +
             format_fixed6(binding.threshold) +
             (binding.model.threshold ? "" : " (default, not calibrated)"));
    spec.bind(c, std::move(binding));
  }

  const std::string path = (fs::path(cfg.report_dir) / "predictions.csv").string();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);

  CommentReader comments(cfg.unlabeled, cfg.format);
  const ClassifySummary summary = classify_corpus(spec, comments, lexicon, out, cfg.threads);
  out.close();
  for (const auto& w : comments.report().warnings) log_line("warning: " + w);

  json summary_json;
  summary_json["total"] = summary.total;
  summary_json["inappropriate"] = summary.inappropriate;
  for (Category c : kAllCategories) {
    json entry;
    entry["count"] = summary.flagged[static_cast<int>(c)];
    entry["fraction"] = summary.flagged_fraction(c);
    entry["mean_oov"] = summary.mean_oov[static_cast<int>(c)];
    summary_json["categories"][std::string(category_name(c))] = entry;
  }
  write_json((fs::path(cfg.report_dir) / "classify_summary.json").string(), summary_json);

  log_line("classified " + std::to_string(summary.total) + " comments, " +
           std::to_string(summary.inappropriate) + " inappropriate");
  for (Category c : kAllCategories)
    log_line("  " + std::string(category_name(c)) + ": " +
             std::to_string(summary.flagged[static_cast<int>(c)]) + " (" +
             format_fixed6(summary.flagged_fraction(c)) + ")");
  log_line("wrote " + path);
}

namespace {

TokenMap load_token_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("missing tokens file: " + path + " (run `comet preprocess` first)");
  csv::Reader reader(in);
  csv::Record rec;
  std::string error;
  if (reader.next(rec, error) != csv::Reader::Status::record)
    throw Error(path + ": missing header");
  TokenMap map;
  for (;;) {
    const auto status = reader.next(rec, error);
    if (status == csv::Reader::Status::eof) break;
    if (status == csv::Reader::Status::malformed)
      throw Error(path + ": line " + std::to_string(rec.line) + ": " + error);
    if (rec.fields.size() != 4)
      throw Error(path + ": line " + std::to_string(rec.line) + ": expected 4 fields");
    if (!rec.fields[2].empty()) map[rec.fields[0]] = tokenize(rec.fields[2]);
  }
  return map;
}

}  // namespace

void run_measure(const PipelineConfig& cfg) {
  require_file(cfg.videos, "video metadata");
  require_file(cfg.unlabeled, "unlabeled corpus");
  const std::string predictions_path = (fs::path(cfg.report_dir) / "predictions.csv").string();
  if (!fs::exists(predictions_path))
    throw Error("missing " + predictions_path + " (run `comet classify` first)");
  const std::string tokens_path =
      (fs::path(cfg.report_dir) / "tokens_unlabeled.csv").string();
  if (!fs::exists(tokens_path))
    throw Error("missing " + tokens_path + " (run `comet preprocess` first)");

  DirLock lock{fs::path(cfg.report_dir)};
  const AgeGroups groups = cfg.age_groups();
  const EnglishLexicon lexicon = load_lexicon(cfg);

  json inputs;
  inputs.push_back({{"file", cfg.videos}, {"checksum", log_input(cfg.videos, "videos")}});
  inputs.push_back(
      {{"file", cfg.unlabeled}, {"checksum", log_input(cfg.unlabeled, "unlabeled")}});
  inputs.push_back({{"file", predictions_path},
                    {"checksum", log_input(predictions_path, "predictions")}});
  inputs.push_back({{"file", tokens_path}, {"checksum", log_input(tokens_path, "tokens")}});

  const auto videos_loaded = load_video_metadata(cfg.videos, cfg.format, groups);
  print_load_report(cfg.videos, videos_loaded.report);
  const VideoTable& videos = videos_loaded.videos;

  const std::vector<PredictionRecord> predictions = read_predictions(predictions_path);
  log_line("predictions: " + std::to_string(predictions.size()) + " rows");

  // one pass over the raw comments: interaction counts + timestamps
  CommentInteractionMap interactions;
  std::vector<std::string> comment_timestamps;
  {
    CommentReader comments(cfg.unlabeled, cfg.format);
    while (auto comment = comments.next()) {
      interactions[comment->id] = {comment->like_count, comment->reply_count};
      comment_timestamps.push_back(comment->published_at.value_or(""));
    }
  }

  const auto exposure_age = exposure_by_age_group(predictions, videos);
  if (exposure_age.unresolved_video_ids > 0)
    log_line("warning: " + std::to_string(exposure_age.unresolved_video_ids) +
             " predictions reference unknown video ids (excluded)");
  const auto exposure_channel = exposure_by_channel(predictions, videos, cfg.channel_top_k);
  const auto interaction = interaction_stats(predictions, interactions, videos);
  const auto temporal_videos = temporal_distribution_videos(videos);
  const auto temporal_comments = temporal_distribution(comment_timestamps);
  if (temporal_comments.missing_timestamps > 0)
    log_line("note: " + std::to_string(temporal_comments.missing_timestamps) +
             " comments lack timestamps (excluded from temporal report)");

  const TokenMap tokens = load_token_map(tokens_path);

  const fs::path dir(cfg.report_dir);
  json outputs;
  const auto emit = [&](const std::string& path) {
    outputs.push_back(manifest_entry(path, /*with_rows=*/true));
    log_line("wrote " + path);
  };

  const std::string age_path = (dir / "exposure_by_age.csv").string();
  write_exposure_by_age_csv(age_path, exposure_age, groups);
  emit(age_path);

  const std::string channel_path = (dir / "exposure_by_channel.csv").string();
  write_exposure_by_channel_csv(channel_path, exposure_channel);
  emit(channel_path);

  const std::string interaction_path = (dir / "interaction_stats.csv").string();
  write_interaction_stats_csv(interaction_path, interaction);
  emit(interaction_path);

  for (Category c : kAllCategories) {
    const auto words = top_words(predictions, tokens, c, cfg.top_words_k, lexicon);
    const std::string words_path =
        (dir / ("top_words_" + std::string(category_name(c)) + ".csv")).string();
    write_top_words_csv(words_path, words);
    emit(words_path);
  }

  const std::string temporal_path = (dir / "temporal.csv").string();
  write_temporal_csv(temporal_path, temporal_videos, temporal_comments);
  emit(temporal_path);

  json manifest;
  manifest["inputs"] = inputs;
  manifest["outputs"] = outputs;
  write_json((dir / "report.json").string(), manifest);
  log_line("wrote " + (dir / "report.json").string());
}

void run_report(const PipelineConfig& cfg) {
  DirLock lock{fs::path(cfg.report_dir)};
  const fs::path report_dir(cfg.report_dir);
  const fs::path model_dir(cfg.model_dir);

  json manifest;
  json models = json::array();
  for (Category c : kAllCategories) {
    for (bool base : {true, false}) {
      const std::string path = model_stage_path(cfg, c, base);
      if (!fs::exists(path)) continue;
      json entry = manifest_entry(path, /*with_rows=*/false);
      const MlpModel model = load_model(path);
      entry["category"] = category_name(c);
      entry["stage"] = base ? "base" : "finetuned";
      if (model.threshold) entry["threshold"] = *model.threshold;
      models.push_back(entry);
    }
  }
  manifest["models"] = models;

  json reports = json::array();
  std::vector<std::string> report_files;
  if (fs::exists(report_dir))
    for (const auto& entry : fs::directory_iterator(report_dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string name = entry.path().filename().string();
      if (name == ".comet.lock") continue;
      report_files.push_back(entry.path().string());
    }
  std::sort(report_files.begin(), report_files.end());
  for (const auto& path : report_files) {
    if (fs::path(path).filename() == "report.json") continue;
    const bool is_csv = fs::path(path).extension() == ".csv";
    reports.push_back(manifest_entry(path, is_csv));
  }
  manifest["reports"] = reports;

  write_json((report_dir / "report.json").string(), manifest);

  // human-readable digest
  std::ostringstream summary;
  summary << "comet pipeline summary\n";
  summary << "======================\n\n";
  summary << "Models (" << model_dir.string() << "):\n";
  for (const auto& m : models) {
    summary << "  " << m["category"].get<std::string>() << " [" << m["stage"].get<std::string>()
            << "]";
    if (m.contains("threshold")) summary << " threshold=" << format_fixed6(m["threshold"]);
    summary << "\n";
  }
  if (models.empty()) summary << "  (none trained yet)\n";
  summary << "\nReport artifacts (" << report_dir.string() << "):\n";
  for (const auto& r : reports) {
    summary << "  " << r["file"].get<std::string>();
    if (r.contains("rows")) summary << " (" << r["rows"].get<std::int64_t>() << " rows)";
    summary << "\n";
  }
  if (reports.empty()) summary << "  (no reports yet)\n";

  const std::string metrics_path = (report_dir / "metrics_report.csv").string();
  if (fs::exists(metrics_path)) {
    summary << "\nEvaluation metrics:\n";
    summary << read_text_file(metrics_path);
  }
  const std::string classify_path = (report_dir / "classify_summary.json").string();
  if (fs::exists(classify_path)) {
    const json classify = json::parse(read_text_file(classify_path));
    summary << "\nClassified comments: " << classify["total"].get<std::int64_t>() << " ("
            << classify["inappropriate"].get<std::int64_t>() << " inappropriate)\n";
  }

  write_text_file((report_dir / "summary.txt").string(), summary.str());
  log_line("wrote " + (report_dir / "report.json").string() + " and " +
           (report_dir / "summary.txt").string());
}

}  // namespace comet
