#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "qc4qa/error.hpp"
#include "qc4qa/qc.hpp"

namespace qc4qa {
namespace {

Vector softmax(const Vector& z) {
  Vector e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

void check_feature_dim(const QcMlp& model, const Vector& feature) {
  if (feature.size() != model.feature_dim()) {
    throw ShapeError("question feature has dimension " + std::to_string(feature.size()) +
                     ", classifier expects " + std::to_string(model.feature_dim()));
  }
}

}  // namespace

QcMlp QcMlp::zeros(int vocab_size, int embed_dim, int hidden) {
  if (vocab_size <= 0 || embed_dim <= 0 || hidden <= 0) throw ShapeError("classifier dimensions must be positive");
  return {Matrix::Zero(vocab_size, embed_dim), Matrix::Zero(hidden, embed_dim), Vector::Zero(hidden),
          Matrix::Zero(kNumCoarseClasses, hidden), Vector::Zero(kNumCoarseClasses)};
}

QcMlp QcMlp::random(int vocab_size, int embed_dim, int hidden, Rng& rng) {
  QcMlp m = zeros(vocab_size, embed_dim, hidden);
  auto fill = [&rng](auto& t, double scale) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = scale * rng.normal();
  };
  fill(m.embedding, 0.5);
  fill(m.w1, 1.0 / std::sqrt(static_cast<double>(embed_dim)));
  fill(m.w2, 1.0 / std::sqrt(static_cast<double>(hidden)));
  return m;
}

Vector QcMlp::question_feature(std::span<const int> tokens) const {
  Vector f = Vector::Zero(feature_dim());
  for (int t : tokens) {
    if (t < 0 || t >= vocab_size()) throw ValidationError("question token outside the classifier vocabulary");
    f += embedding.row(t).transpose();
  }
  if (!tokens.empty()) f /= static_cast<double>(tokens.size());
  return f;
}

Vector QcMlp::logits(const Vector& feature) const {
  check_feature_dim(*this, feature);
  const Vector h = (w1 * feature + b1).array().tanh();
  return w2 * h + b2;
}

Vector QcMlp::probabilities(const Vector& feature) const { return softmax(logits(feature)); }

std::array<std::span<double>, 5> QcMlp::tensors() {
  auto s = [](auto& t) { return std::span<double>(t.data(), static_cast<std::size_t>(t.size())); };
  return {s(embedding), s(w1), s(b1), s(w2), s(b2)};
}

std::array<std::span<const double>, 5> QcMlp::tensors() const {
  auto s = [](const auto& t) { return std::span<const double>(t.data(), static_cast<std::size_t>(t.size())); };
  return {s(embedding), s(w1), s(b1), s(w2), s(b2)};
}

CoarseClass argmax_class(const Vector& logits) {
  if (logits.size() != kNumCoarseClasses) throw ShapeError("expected 6 class logits");
  int best = 0;
  for (int i = 1; i < kNumCoarseClasses; ++i) {
    if (logits(i) > logits(best)) best = i;
  }
  return static_cast<CoarseClass>(best);
}

QuestionClass classify_feature(const QcMlp& model, const Vector& feature) {
  return QuestionClass::coarse(argmax_class(model.logits(feature)));
}

QuestionClass classify(const QcMlp& model, std::span<const int> question_tokens) {
  return classify_feature(model, model.question_feature(question_tokens));
}

double qc_accuracy(const QcMlp& model, std::span<const LabeledQuestion> questions) {
  if (questions.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& q : questions) {
    if (classify(model, q.tokens).coarse_class() == q.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(questions.size());
}

QcGradient qc_backward(const QcMlp& model, std::span<const LabeledQuestion> batch) {
  if (batch.empty()) throw ValidationError("qc_backward: empty batch");
  QcGradient out{QcMlp::zeros(model.vocab_size(), model.feature_dim(), static_cast<int>(model.w1.rows())), 0.0};
  auto& g = out.grads;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& q : batch) {
    const Vector f = model.question_feature(q.tokens);
    const Vector h = (model.w1 * f + model.b1).array().tanh();
    const Vector p = softmax(model.w2 * h + model.b2);
    const int y = static_cast<int>(q.label);
    out.loss -= inv_n * std::log(std::max(p(y), 1e-300));

    Vector dz = inv_n * p;
    dz(y) -= inv_n;
    g.w2.noalias() += dz * h.transpose();
    g.b2 += dz;
    const Vector da = (model.w2.transpose() * dz).array() * (1.0 - h.array().square());
    g.w1.noalias() += da * f.transpose();
    g.b1 += da;
    if (!q.tokens.empty()) {
      const Eigen::RowVectorXd df = (model.w1.transpose() * da).transpose() / static_cast<double>(q.tokens.size());
      for (int t : q.tokens) g.embedding.row(t) += df;
    }
  }
  return out;
}

QcTrainResult train_qc_mlp(std::span<const LabeledQuestion> questions, int vocab_size,
                           const QcMlpConfig& config) {
  if (questions.empty()) throw ValidationError("train_qc_mlp: no training questions");
  if (config.epochs <= 0 || config.batch_size <= 0 || !(config.lr > 0.0)) {
    throw ValidationError("train_qc_mlp: epochs, batch_size and lr must be positive");
  }
  std::array<bool, kNumCoarseClasses> present{};
  for (const auto& q : questions) present[static_cast<std::size_t>(q.label)] = true;
  std::string missing;
  for (int c = 0; c < kNumCoarseClasses; ++c) {
    if (!present[static_cast<std::size_t>(c)]) {
      if (!missing.empty()) missing += ", ";
      missing += kCoarseClassNames[static_cast<std::size_t>(c)];
    }
  }
  if (!missing.empty()) throw ValidationError("train_qc_mlp: no training examples for classes " + missing);

  Rng rng(config.seed);
  std::vector<std::size_t> order(questions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const auto n_val = static_cast<std::size_t>(std::floor(config.val_fraction * static_cast<double>(questions.size())));
  std::vector<LabeledQuestion> val, train;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? val : train).push_back(questions[order[i]]);
  }
  if (train.empty()) throw ValidationError("train_qc_mlp: validation split leaves no training data");
  const auto& held_out = val.empty() ? train : val;

  QcTrainResult result{QcMlp::random(vocab_size, config.embed_dim, config.hidden, rng), {}, 0};
  QcMlp model = result.model;
  QcMlp sq = QcMlp::zeros(vocab_size, config.embed_dim, config.hidden);
  double best_acc = -1.0;
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(train);
    for (std::size_t start = 0; start < train.size(); start += bs) {
      const auto len = std::min(bs, train.size() - start);
      const QcGradient g = qc_backward(model, std::span(train).subspan(start, len));
      auto p = model.tensors();
      auto gt = g.grads.tensors();
      auto s = sq.tensors();
      // RMSprop
      for (std::size_t t = 0; t < p.size(); ++t) {
        for (std::size_t i = 0; i < p[t].size(); ++i) {
          const double gi = gt[t][i];
          s[t][i] = config.rms_decay * s[t][i] + (1.0 - config.rms_decay) * gi * gi;
          p[t][i] -= config.lr * gi / (std::sqrt(s[t][i]) + config.epsilon);
        }
      }
    }
    const double acc = qc_accuracy(model, held_out);
    result.val_accuracy.push_back(acc);
    if (acc > best_acc) {
      best_acc = acc;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

std::vector<LabeledQuestion> labeled_questions(const Corpus& corpus) {
  std::vector<LabeledQuestion> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus.samples) {
    if (!s.qclass || s.qclass->is_cluster()) {
      throw ValidationError("sample '" + s.id + "' has no coarse question class");
    }
    out.push_back({s.question, s.qclass->coarse_class()});
  }
  return out;
}

void save_qc_mlp(const QcMlp& model, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["vocab_size"] = model.vocab_size();
  j["embed_dim"] = model.feature_dim();
  j["hidden"] = model.w1.rows();
  const char* names[] = {"embedding", "w1", "b1", "w2", "b2"};
  auto tensors = model.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    j[names[i]] = std::vector<double>(tensors[i].begin(), tensors[i].end());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump() << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

QcMlp load_qc_mlp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  try {
    const auto j = nlohmann::json::parse(in);
    QcMlp m = QcMlp::zeros(j.at("vocab_size").get<int>(), j.at("embed_dim").get<int>(), j.at("hidden").get<int>());
    const char* names[] = {"embedding", "w1", "b1", "w2", "b2"};
    auto tensors = m.tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto values = j.at(names[i]).get<std::vector<double>>();
      if (values.size() != tensors[i].size()) throw ShapeError(std::string("classifier tensor '") + names[i] + "' has the wrong size");
      std::copy(values.begin(), values.end(), tensors[i].begin());
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("'" + path.string() + "': " + e.what());
  }
}

}  // namespace qc4qa
