#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qc4qa/adapt.hpp"
#include "qc4qa/data.hpp"
#include "qc4qa/qc.hpp"

namespace qc4qa {

enum class QcMode { Trec, KMeans };

struct DataSection {
  // Coarse-class proportions of SQuAD (source) and CNN (target) questions.
  // The CNN proportions sum to 0.999 as published; HUM absorbs the residue.
  SyntheticSpec source{.vocab_size = 600,
                       .n_samples = 5000,
                       .class_mixture = {0.005, 0.125, 0.314, 0.199, 0.116, 0.241},
                       .cloze_fraction = 0.0,
                       .vocab_drift = 0.0,
                       .context_len = 24};
  SyntheticSpec target{.vocab_size = 600,
                       .n_samples = 5000,
                       .class_mixture = {0.0, 0.053, 0.392, 0.437, 0.053, 0.065},
                       .cloze_fraction = 1.0,
                       .vocab_drift = 0.3,
                       .context_len = 24};
  int dev_samples = 1000;
  int qc_train_questions = 5452;
  int qc_test_questions = 500;
  double qc_cloze_fraction = 0.5;
};

struct ModelSection {
  int dim = 32;
  int hidden = 32;
  // Stand-in for a pretrained encoder's lexical knowledge: tokens of the same
  // generator kind start near a shared random prototype. prior_noise is the
  // per-token deviation; a negative value keeps the plain random init.
  double prior_noise = 0.25;
};

struct QcSection {
  QcMode mode = QcMode::Trec;
  int k = kDefaultClusters;
  int sample_cap = kDefaultClusterSampleCap;
  int max_iters = 100;
  double tol = 1e-6;
  QcMlpConfig mlp;
};

struct ExportSection {
  std::string corpus = "target_dev";
  std::string checkpoint = "pretrained";
};

// Every setting of a pipeline run. Parsing is strict: unknown keys and
// out-of-range values fail before any stage runs.
struct RunConfig {
  std::uint64_t seed = 42;
  std::filesystem::path workdir = "work";
  std::string run_name = "adapt";
  DataSection data;
  ModelSection model;
  PretrainConfig pretrain;
  QcSection qc;
  AdaptConfig adapt;
  ExportSection export_features;

  void validate() const;

  std::filesystem::path data_dir() const { return workdir / "data"; }
  std::filesystem::path checkpoint_dir() const { return workdir / "checkpoints"; }
  std::filesystem::path report_dir() const { return workdir / "reports"; }
};

// Applies `key.path=value` overrides to a JSON document; the value is parsed
// as JSON when possible and taken as a string otherwise.
void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& overrides);

RunConfig config_from_json(const nlohmann::json& doc);
nlohmann::ordered_json config_to_json(const RunConfig& config);

// Reads the file (if given), applies overrides, parses strictly and validates.
RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::vector<std::string>& overrides = {});

}  // namespace qc4qa
