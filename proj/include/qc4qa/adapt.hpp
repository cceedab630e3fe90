#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qc4qa/data.hpp"
#include "qc4qa/discrepancy.hpp"
#include "qc4qa/eval.hpp"
#include "qc4qa/model.hpp"
#include "qc4qa/rng.hpp"

namespace qc4qa {

// ---------------------------------------------------------------------------
// Source pretraining.

struct PretrainConfig {
  int epochs = 2;
  int batch_size = 12;
  AdamWConfig optimizer{.lr = 3e-3, .warmup_fraction = 0.0};
  double dev_fraction = 0.1;
  std::optional<int> max_answer_len;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PretrainResult {
  SpanModel model;
  OptimizerState optimizer;
  EvalResult dev;                   // held-out source split
  std::vector<double> batch_losses;  // NLL per optimizer step
  std::size_t train_size = 0;
  std::size_t dev_size = 0;
};

PretrainResult pretrain(SpanModel model, const Corpus& source, const PretrainConfig& config);

// ---------------------------------------------------------------------------
// Decoding and pseudo labels.

struct DecodedSpan {
  Span span;
  double confidence = 0.0;  // p_start(s) * p_end(e)
};

// argmax over s <= e (and e - s < max_len when set) of p_start(s) * p_end(e);
// ties go to the smallest s, then the smallest e.
DecodedSpan decode_span(const Vector& start_probs, const Vector& end_probs,
                        std::optional<int> max_len = std::nullopt);

struct PseudoLabel {
  std::string id;
  Span span;
  double confidence = 0.0;
};

struct PseudoLabelSet {
  std::vector<PseudoLabel> labels;  // retained, ordered by sample id
  int epoch = 0;
  std::size_t retained = 0;
  std::size_t filtered = 0;
};

PseudoLabelSet pseudo_label(const SpanModel& model, const Corpus& target, double lambda_con,
                            std::optional<int> max_answer_len = std::nullopt, int epoch = 0);

// ---------------------------------------------------------------------------
// Batch sampling.

enum class Sampling { DistributionAware, Random };

struct BatchDraw {
  std::vector<std::size_t> target;  // indices into the pseudo-labeled pool
  std::vector<std::size_t> source;  // indices into the source corpus
};

// Draws the target half uniformly from the pool (without replacement when the
// pool is large enough). DistributionAware pairs every target draw with a
// source sample of the same class; Random draws the source half uniformly.
class BatchSampler {
 public:
  BatchSampler(const Corpus& source, const std::vector<QASample>& pool, Sampling mode);

  BatchDraw draw(int batch_target, Rng& rng) const;

 private:
  const Corpus& source_;
  const std::vector<QASample>& pool_;
  Sampling mode_;
  std::map<QuestionClass, std::vector<std::size_t>> source_by_class_;
};

BatchDraw sample_batch(const Corpus& source, const std::vector<QASample>& pool, Sampling mode,
                       int batch_target, Rng& rng);

// True when both halves carry the same multiset of question classes.
bool class_multisets_equal(const Corpus& source, const std::vector<QASample>& pool, const BatchDraw& draw);

// ---------------------------------------------------------------------------
// Self-supervised adaptation.

struct AdaptConfig {
  double lambda = 1e-3;
  double lambda_con = 0.4;
  int batch_target = 12;
  int epochs = 4;
  int eval_every = 2000;
  Sampling sampling = Sampling::DistributionAware;
  int annotations_budget = 0;
  std::uint64_t seed = 0;
  AdamWConfig optimizer{.lr = 3e-3, .warmup_fraction = 0.1};
  KernelConfig kernel;
  std::optional<int> max_answer_len;
  bool use_caqa = true;
  bool use_qc4qa = true;
  // Skips the discrepancy terms entirely (plain self-training).
  bool nll_only = false;

  void validate() const;
};

struct ValidationRecord {
  int epoch = 0;
  std::int64_t iteration = 0;
  double em = 0.0;
  double f1 = 0.0;
  double nll = 0.0;         // means over the batches since the previous record
  double caqa_loss = 0.0;
  double qc4qa_loss = 0.0;
  std::size_t retained = 0;
  std::size_t filtered = 0;
  double gamma = 0.0;
};

struct ExperimentReport {
  std::vector<ValidationRecord> records;
  std::vector<double> batch_losses;  // total objective per batch
  std::size_t batches = 0;
  std::size_t class_matched_batches = 0;
  double best_em = 0.0;
  double best_f1 = -1.0;
  std::size_t best_record = 0;
};

std::string report_to_jsonl(const ExperimentReport& report);
void write_report(const ExperimentReport& report, const std::filesystem::path& path);

struct AdaptResult {
  SpanModel best_model;
  SpanModel final_model;
  ExperimentReport report;
};

// `target_labels`, when given, supplies gold spans for the annotation budget
// (matched to target_train by sample id).
AdaptResult adapt(SpanModel model, const Corpus& source, const Corpus& target_train,
                  const Corpus& target_dev, const AdaptConfig& config,
                  const Corpus* target_labels = nullptr);

}  // namespace qc4qa
