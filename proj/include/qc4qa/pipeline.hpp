#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "qc4qa/adapt.hpp"
#include "qc4qa/config.hpp"
#include "qc4qa/eval.hpp"

// Pipeline stages behind the command-line subcommands. Each stage reads its
// inputs from, and writes its outputs to, the run's working directory:
//
//   <workdir>/data/         vocab.txt, source.jsonl, target_train.jsonl,
//                           target_dev.jsonl, target_train_labels.jsonl,
//                           qc_train.jsonl, qc_test.jsonl, classified/*.jsonl
//   <workdir>/checkpoints/  pretrained.ckpt, qc_mlp.json, kmeans.json, <run>.ckpt
//   <workdir>/reports/      pretrain.json, qc.json, classify.json, <run>.jsonl,
//                           eval_<run>.json, features.csv
namespace qc4qa {

// Re-initializes the embedding so tokens sharing answer_token_kind() sit at
// prototype + noise·N(0,1); prototypes are N(0, 0.5²) per coordinate.
void apply_kind_prior(SpanModel& model, const Vocabulary& vocab, double noise, Rng& rng);

struct GenDataSummary {
  std::map<QuestionClass, double> source_histogram;
  std::map<QuestionClass, double> target_histogram;
};
GenDataSummary cmd_gen_data(const RunConfig& config, std::ostream& log);

struct PretrainSummary {
  EvalResult source_dev;
  double final_loss = 0.0;
};
PretrainSummary cmd_pretrain(const RunConfig& config, std::ostream& log);

struct TrainQcSummary {
  double test_accuracy = 0.0;
  double seconds = 0.0;
  int best_epoch = 0;
};
TrainQcSummary cmd_train_qc(const RunConfig& config, std::ostream& log);

struct ClassifySummary {
  // Agreement between predicted and generator classes (Trec mode only).
  std::map<std::string, double> accuracy;
};
ClassifySummary cmd_classify(const RunConfig& config, QcMode mode, std::ostream& log);

struct AdaptSummary {
  EvalResult zero_shot;
  ExperimentReport report;
};
AdaptSummary cmd_adapt(const RunConfig& config, std::ostream& log);

struct EvalSummary {
  std::vector<std::pair<std::string, EvalResult>> rows;
};
EvalSummary cmd_eval(const RunConfig& config, std::ostream& log);

void cmd_export_features(const RunConfig& config, std::ostream& log);

}  // namespace qc4qa
