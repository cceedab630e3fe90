#include "qc4qa/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_map>

#include "qc4qa/adapt.hpp"
#include "qc4qa/error.hpp"

namespace qc4qa {

SampleScore score_sample(const Span& predicted, const Span& gold, std::span<const int> context) {
  if (!predicted.valid_for(context.size()) || !gold.valid_for(context.size())) {
    throw ValidationError("score_sample: span outside the context");
  }
  SampleScore s;
  s.em = predicted == gold ? 1 : 0;
  std::unordered_map<int, int> gold_counts;
  for (int i = gold.start; i <= gold.end; ++i) ++gold_counts[context[static_cast<std::size_t>(i)]];
  int common = 0;
  for (int i = predicted.start; i <= predicted.end; ++i) {
    auto it = gold_counts.find(context[static_cast<std::size_t>(i)]);
    if (it != gold_counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return s;
  const double precision = static_cast<double>(common) / predicted.length();
  const double recall = static_cast<double>(common) / gold.length();
  s.f1 = 2.0 * precision * recall / (precision + recall);
  return s;
}

EvalResult evaluate_predictions(const Corpus& corpus, std::span<const Span> predictions) {
  if (predictions.size() != corpus.size()) throw ShapeError("evaluate: one prediction per sample is required");
  EvalResult r;
  double em_sum = 0.0, f1_sum = 0.0;
  std::map<QuestionClass, std::pair<double, double>> sums;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& s = corpus.samples[i];
    if (!s.answer) throw ValidationError("evaluate: sample '" + s.id + "' has no gold answer");
    const SampleScore sc = score_sample(predictions[i], *s.answer, s.context);
    em_sum += sc.em;
    f1_sum += sc.f1;
    if (s.qclass) {
      auto& acc = sums[*s.qclass];
      acc.first += sc.em;
      acc.second += sc.f1;
      ++r.per_class[*s.qclass].n;
    }
  }
  r.n = corpus.size();
  if (r.n > 0) {
    r.em = em_sum / static_cast<double>(r.n);
    r.f1 = f1_sum / static_cast<double>(r.n);
  }
  for (auto& [cls, cs] : r.per_class) {
    cs.em = sums[cls].first / static_cast<double>(cs.n);
    cs.f1 = sums[cls].second / static_cast<double>(cs.n);
  }
  return r;
}

std::vector<Span> predict_spans(const SpanModel& model, const Corpus& corpus, std::optional<int> max_answer_len) {
  std::vector<Span> preds;
  preds.reserve(corpus.size());
  for (const auto& s : corpus.samples) {
    const ForwardResult f = forward(model, s);
    preds.push_back(decode_span(f.start_probs, f.end_probs, max_answer_len).span);
  }
  return preds;
}

EvalResult evaluate(const SpanModel& model, const Corpus& corpus, std::optional<int> max_answer_len) {
  const auto preds = predict_spans(model, corpus, max_answer_len);
  return evaluate_predictions(corpus, preds);
}

std::string render_table(const std::vector<std::pair<std::string, EvalResult>>& rows) {
  std::size_t width = 5;
  for (const auto& [name, r] : rows) width = std::max(width, name.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %s\n", static_cast<int>(width), "Model", "EM / F1");
  out += buf;
  out += std::string(width + 16, '-') + "\n";
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %.2f/%.2f\n", static_cast<int>(width), name.c_str(), 100.0 * r.em,
                  100.0 * r.f1);
    out += buf;
  }
  return out;
}

}  // namespace qc4qa
