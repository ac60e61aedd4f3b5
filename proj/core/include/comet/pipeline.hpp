#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "comet/categories.hpp"
#include "comet/corpus.hpp"
#include "comet/ensemble.hpp"
#include "comet/nn.hpp"

namespace comet {

// Pipeline configuration, read from a flat TOML-style file. Every stage
// validates the paths it needs before doing any work; stage outputs are
// plain files so stages can be rerun and inspected independently.
struct PipelineConfig {
  // [paths]
  std::string labeled_base;    // base training corpus (e.g. a wiki-comments export)
  std::string labeled_domain;  // annotated in-domain comments for finetune/calibrate/evaluate
  std::string unlabeled;       // bulk corpus for classify/measure
  std::string videos;          // video metadata table
  std::string gensim_embeddings;
  std::string glove_embeddings;
  std::string model_dir = "models";
  std::string report_dir = "reports";
  std::string word_list;  // optional override of the builtin English list
  FileFormat format = FileFormat::csv;

  // [split]
  double split_fraction = 0.5;
  std::uint64_t split_seed = 7;

  // [embedding]
  int gensim_doc_dim = 50;
  int glove_doc_dim = 100;
  std::uint64_t projection_seed = 2024;

  // [train] with optional [train.<category>] overrides
  TrainConfig train_defaults{.seed = 42};
  std::array<std::optional<TrainConfig>, kCategoryCount> train_overrides;
  // [finetune] overrides applied on top of the per-category train config
  std::optional<TrainConfig> finetune_overrides;
  // keep at most this many negatives per positive when > 0
  double negative_downsample = 0.0;

  // [bindings]: embedding table per category ("gensim" | "glove")
  std::array<std::string, kCategoryCount> bindings = {"gensim", "gensim", "gensim", "glove",
                                                      "gensim"};

  // [thresholds]
  std::string threshold_policy = "max_min_rate";
  std::array<double, kCategoryCount> fixed_thresholds = {0.520, 0.270, 0.210, 0.220, 0.140};
  double grid_step = 0.01;
  std::size_t unlabeled_sample_rows = 0;  // score this many comments in the sweep when > 0

  // [age_groups]
  std::vector<std::string> age_group_labels;  // empty -> standard bins

  // [measure]
  std::size_t channel_top_k = 10;
  std::size_t top_words_k = 50;

  // [run]
  int threads = 1;

  TrainConfig train_config_for(Category c) const;
  TrainConfig finetune_config_for(Category c) const;
  AgeGroups age_groups() const;
};

PipelineConfig load_pipeline_config(const std::string& path);

// Command-line overrides on top of the config file. `seed` replaces both
// the split seed and every training seed.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<Category> category;  // restrict model stages to one category
  std::optional<FileFormat> format;
};

PipelineConfig apply_overrides(PipelineConfig cfg, const RunOverrides& overrides);

// Stage entry points. Each throws comet::Error on failure; the CLI maps
// that to a nonzero exit status.
void run_preprocess(const PipelineConfig& cfg);
void run_train(const PipelineConfig& cfg, std::optional<Category> only = {});
void run_finetune(const PipelineConfig& cfg, std::optional<Category> only = {});
void run_calibrate(const PipelineConfig& cfg, std::optional<Category> only = {});
void run_evaluate(const PipelineConfig& cfg, std::optional<Category> only = {});
void run_classify(const PipelineConfig& cfg);
void run_measure(const PipelineConfig& cfg);
void run_report(const PipelineConfig& cfg);

}  // namespace comet
