#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qc4qa/data.hpp"
#include "qc4qa/model.hpp"

namespace qc4qa {

struct SampleScore {
  int em = 0;
  double f1 = 0.0;
};

// Exact span match and token-multiset F1 between the two spans' tokens.
SampleScore score_sample(const Span& predicted, const Span& gold, std::span<const int> context);

struct ClassScore {
  double em = 0.0;
  double f1 = 0.0;
  std::size_t n = 0;
};

struct EvalResult {
  double em = 0.0;
  double f1 = 0.0;
  std::size_t n = 0;
  std::map<QuestionClass, ClassScore> per_class;
};

// Scores precomputed predictions (one per sample, in corpus order).
EvalResult evaluate_predictions(const Corpus& corpus, std::span<const Span> predictions);

std::vector<Span> predict_spans(const SpanModel& model, const Corpus& corpus,
                                std::optional<int> max_answer_len = std::nullopt);

EvalResult evaluate(const SpanModel& model, const Corpus& corpus,
                    std::optional<int> max_answer_len = std::nullopt);

// Two-column "EM / F1" table, values in percent.
std::string render_table(const std::vector<std::pair<std::string, EvalResult>>& rows);

}  // namespace qc4qa
