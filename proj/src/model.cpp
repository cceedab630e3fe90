#include "qc4qa/model.hpp"

#include <cmath>

#include "qc4qa/error.hpp"

namespace qc4qa {
namespace {

template <typename Params, typename View>
std::array<View, kNumTensors> make_views(Params& p) {
  auto view = [](std::string_view name, auto& t) {
    return View{name, {t.data(), static_cast<std::size_t>(t.size())}, static_cast<int>(t.rows()),
                static_cast<int>(t.cols())};
  };
  return {view("embedding", p.embedding), view("enc_w1", p.enc_w1), view("enc_b1", p.enc_b1),
          view("enc_w2", p.enc_w2),       view("enc_b2", p.enc_b2), view("start_head", p.start_head),
          view("end_head", p.end_head)};
}

// Intermediate activations of one forward pass.
struct Activations {
  Vector question_mean;
  Matrix inputs;   // U: context embeddings + question mean
  Matrix hidden1;  // tanh(U W1^T + b1)
  Matrix hidden2;  // tanh(H1 W2^T + b2), the per-token representation
  Vector start_logits;
  Vector end_logits;
};

Activations run_encoder(const SpanModel& model, const QASample& sample) {
  const auto& p = model.params();
  const int vocab = model.shape().vocab_size;
  const int d = model.shape().dim;
  if (sample.context.empty()) throw ValidationError("sample '" + sample.id + "' has an empty context");
  auto check_token = [&](int t) {
    if (t < 0 || t >= vocab) {
      throw ValidationError("sample '" + sample.id + "': token id " + std::to_string(t) +
                            " outside the model vocabulary");
    }
  };

  Activations a;
  a.question_mean = Vector::Zero(d);
  for (int t : sample.question) {
    check_token(t);
    a.question_mean += p.embedding.row(t).transpose();
  }
  if (!sample.question.empty()) a.question_mean /= static_cast<double>(sample.question.size());

  const auto n = static_cast<Eigen::Index>(sample.context.size());
  a.inputs.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int t = sample.context[static_cast<std::size_t>(i)];
    check_token(t);
    a.inputs.row(i) = p.embedding.row(t) + a.question_mean.transpose();
  }
  a.hidden1 = ((a.inputs * p.enc_w1.transpose()).rowwise() + p.enc_b1.transpose()).array().tanh();
  a.hidden2 = ((a.hidden1 * p.enc_w2.transpose()).rowwise() + p.enc_b2.transpose()).array().tanh();
  a.start_logits = a.hidden2 * p.start_head;
  a.end_logits = a.hidden2 * p.end_head;
  return a;
}

Vector log_softmax(const Vector& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return logits.array() - lse;
}

Vector softmax(const Vector& logits) {
  Vector e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

Vector span_mean(const Matrix& rows, const Span& span) {
  return rows.middleRows(span.start, span.length()).colwise().mean().transpose();
}

void check_span(const QASample& sample, const Span& span) {
  if (!span.valid_for(sample.context.size())) {
    throw ValidationError("sample '" + sample.id + "': span out of context bounds");
  }
}

double weight_total(std::span<const TrainExample> batch) {
  double total = 0.0;
  for (const auto& ex : batch) total += ex.weight;
  if (!(total > 0.0)) throw ValidationError("batch weights must sum to a positive value");
  return total;
}

void check_aux(std::span<const TrainExample> batch, std::optional<std::span<const Vector>> aux,
               int dim) {
  if (!aux) return;
  if (aux->size() != batch.size()) {
    throw ShapeError("aux_grads has " + std::to_string(aux->size()) + " entries for a batch of " +
                     std::to_string(batch.size()));
  }
  for (const auto& g : *aux) {
    if (g.size() != dim) throw ShapeError("aux_grads entry has the wrong dimension");
  }
}

double clamped_nll(const Vector& log_start, const Vector& log_end, const Span& span) {
  return -std::max(log_start(span.start), kLogProbFloor) - std::max(log_end(span.end), kLogProbFloor);
}

}  // namespace

SpanParams SpanParams::zeros(const ModelShape& s) {
  SpanParams p;
  p.embedding = Matrix::Zero(s.vocab_size, s.dim);
  p.enc_w1 = Matrix::Zero(s.hidden, s.dim);
  p.enc_b1 = Vector::Zero(s.hidden);
  p.enc_w2 = Matrix::Zero(s.dim, s.hidden);
  p.enc_b2 = Vector::Zero(s.dim);
  p.start_head = Vector::Zero(s.dim);
  p.end_head = Vector::Zero(s.dim);
  return p;
}

ModelShape SpanParams::shape() const {
  return {static_cast<int>(embedding.rows()), static_cast<int>(embedding.cols()),
          static_cast<int>(enc_w1.rows())};
}

std::array<TensorView, kNumTensors> SpanParams::tensors() {
  return make_views<SpanParams, TensorView>(*this);
}

std::array<ConstTensorView, kNumTensors> SpanParams::tensors() const {
  return make_views<const SpanParams, ConstTensorView>(*this);
}

void SpanParams::set_zero() {
  for (auto& t : tensors()) std::fill(t.values.begin(), t.values.end(), 0.0);
}

SpanParams& SpanParams::operator+=(const SpanParams& o) {
  embedding += o.embedding;
  enc_w1 += o.enc_w1;
  enc_b1 += o.enc_b1;
  enc_w2 += o.enc_w2;
  enc_b2 += o.enc_b2;
  start_head += o.start_head;
  end_head += o.end_head;
  return *this;
}

SpanParams& SpanParams::operator*=(double s) {
  for (auto& t : tensors()) {
    for (double& x : t.values) x *= s;
  }
  return *this;
}

SpanModel::SpanModel(const ModelShape& shape) : shape_(shape), params_(SpanParams::zeros(shape)) {
  if (shape.vocab_size <= 0 || shape.dim <= 0 || shape.hidden <= 0) {
    throw ShapeError("model dimensions must be positive");
  }
}

SpanModel::SpanModel(const ModelShape& shape, Rng& rng) : SpanModel(shape) {
  auto fill = [&rng](auto& t, double scale) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = scale * rng.normal();
  };
  fill(params_.embedding, 0.5);
  fill(params_.enc_w1, 1.0 / std::sqrt(static_cast<double>(shape.dim)));
  fill(params_.enc_w2, 1.0 / std::sqrt(static_cast<double>(shape.hidden)));
  fill(params_.start_head, 0.1);
  fill(params_.end_head, 0.1);
}

ForwardResult forward(const SpanModel& model, const QASample& sample, std::optional<Span> feature_span) {
  Activations a = run_encoder(model, sample);
  ForwardResult r;
  r.start_probs = softmax(a.start_logits);
  r.end_probs = softmax(a.end_logits);
  r.features.pooled = a.hidden2.colwise().mean().transpose();
  if (feature_span) {
    check_span(sample, *feature_span);
    const Span& sp = *feature_span;
    r.features.answer = span_mean(a.hidden2, sp);
    const auto n = a.hidden2.rows();
    const auto rest = n - sp.length();
    if (rest > 0) {
      Vector sum = Vector::Zero(a.hidden2.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        if (i < sp.start || i > sp.end) sum += a.hidden2.row(i).transpose();
      }
      r.features.other = sum / static_cast<double>(rest);
    }
  }
  r.features.per_token = std::move(a.hidden2);
  return r;
}

double nll_loss(const Vector& start_probs, const Vector& end_probs, const Span& answer) {
  if (!answer.valid_for(static_cast<std::size_t>(start_probs.size())) ||
      start_probs.size() != end_probs.size()) {
    throw ValidationError("nll_loss: answer span out of bounds");
  }
  auto term = [](double p) { return -std::max(std::log(p), kLogProbFloor); };
  return term(start_probs(answer.start)) + term(end_probs(answer.end));
}

BackwardResult backward(const SpanModel& model, std::span<const TrainExample> batch,
                        std::optional<std::span<const Vector>> aux_grads) {
  if (batch.empty()) throw ValidationError("backward: empty batch");
  const auto& p = model.params();
  const int d = model.shape().dim;
  check_aux(batch, aux_grads, d);
  const double total_w = weight_total(batch);

  BackwardResult out;
  out.grads = SpanParams::zeros(model.shape());
  auto& g = out.grads;
  out.answer_features.reserve(batch.size());

  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& ex = batch[k];
    const QASample& sample = *ex.sample;
    check_span(sample, ex.span);
    Activations a = run_encoder(model, sample);
    const auto n = a.hidden2.rows();
    const double c = ex.weight / total_w;

    const Vector log_start = log_softmax(a.start_logits);
    const Vector log_end = log_softmax(a.end_logits);
    out.nll += c * clamped_nll(log_start, log_end, ex.span);
    out.answer_features.push_back(span_mean(a.hidden2, ex.span));

    // Softmax cross-entropy; a clamped term has zero gradient.
    Vector d_start = Vector::Zero(n);
    Vector d_end = Vector::Zero(n);
    if (log_start(ex.span.start) > kLogProbFloor) {
      d_start = c * log_start.array().exp();
      d_start(ex.span.start) -= c;
    }
    if (log_end(ex.span.end) > kLogProbFloor) {
      d_end = c * log_end.array().exp();
      d_end(ex.span.end) -= c;
    }

    Matrix d_h2 = d_start * p.start_head.transpose() + d_end * p.end_head.transpose();
    if (aux_grads) {
      const Vector per_row = (*aux_grads)[k] / static_cast<double>(ex.span.length());
      d_h2.middleRows(ex.span.start, ex.span.length()).rowwise() += per_row.transpose();
    }
    g.start_head.noalias() += a.hidden2.transpose() * d_start;
    g.end_head.noalias() += a.hidden2.transpose() * d_end;

    const Matrix d_a2 = d_h2.array() * (1.0 - a.hidden2.array().square());
    g.enc_w2.noalias() += d_a2.transpose() * a.hidden1;
    g.enc_b2 += d_a2.colwise().sum().transpose();

    const Matrix d_h1 = d_a2 * p.enc_w2;
    const Matrix d_a1 = d_h1.array() * (1.0 - a.hidden1.array().square());
    g.enc_w1.noalias() += d_a1.transpose() * a.inputs;
    g.enc_b1 += d_a1.colwise().sum().transpose();

    const Matrix d_u = d_a1 * p.enc_w1;
    for (Eigen::Index i = 0; i < n; ++i) {
      g.embedding.row(sample.context[static_cast<std::size_t>(i)]) += d_u.row(i);
    }
    if (!sample.question.empty()) {
      const Eigen::RowVectorXd d_q = d_u.colwise().sum() / static_cast<double>(sample.question.size());
      for (int t : sample.question) g.embedding.row(t) += d_q;
    }
  }
  return out;
}

double objective_value(const SpanModel& model, std::span<const TrainExample> batch,
                       std::optional<std::span<const Vector>> aux_grads) {
  if (batch.empty()) throw ValidationError("objective_value: empty batch");
  check_aux(batch, aux_grads, model.shape().dim);
  const double total_w = weight_total(batch);
  double value = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& ex = batch[k];
    check_span(*ex.sample, ex.span);
    Activations a = run_encoder(model, *ex.sample);
    value += ex.weight / total_w *
             clamped_nll(log_softmax(a.start_logits), log_softmax(a.end_logits), ex.span);
    if (aux_grads) value += (*aux_grads)[k].dot(span_mean(a.hidden2, ex.span));
  }
  return value;
}

std::vector<Vector> answer_features(const SpanModel& model, std::span<const TrainExample> batch) {
  std::vector<Vector> out;
  out.reserve(batch.size());
  for (const auto& ex : batch) {
    check_span(*ex.sample, ex.span);
    out.push_back(span_mean(run_encoder(model, *ex.sample).hidden2, ex.span));
  }
  return out;
}

}  // namespace qc4qa
