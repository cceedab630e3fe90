#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "qc4qa/data.hpp"
#include "qc4qa/model.hpp"

namespace qc4qa {

// ---------------------------------------------------------------------------
// Supervised coarse-class question classifier.

struct QcMlpConfig {
  int embed_dim = 32;
  int hidden = 64;
  int epochs = 4;
  double lr = 0.01;
  int batch_size = 64;
  double rms_decay = 0.99;
  double epsilon = 1e-8;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct LabeledQuestion {
  std::vector<int> tokens;
  CoarseClass label;
};

// Input feature is the mean of trainable question-token embeddings, followed
// by one tanh hidden layer and a 6-way softmax.
struct QcMlp {
  Matrix embedding;  // vocab_size x embed_dim
  Matrix w1;         // hidden x embed_dim
  Vector b1;
  Matrix w2;         // 6 x hidden
  Vector b2;

  static QcMlp zeros(int vocab_size, int embed_dim, int hidden);
  static QcMlp random(int vocab_size, int embed_dim, int hidden, Rng& rng);

  int vocab_size() const { return static_cast<int>(embedding.rows()); }
  int feature_dim() const { return static_cast<int>(embedding.cols()); }

  Vector question_feature(std::span<const int> tokens) const;
  Vector logits(const Vector& feature) const;
  Vector probabilities(const Vector& feature) const;

  // Flat views over w1..b2 and the embedding, in a fixed order.
  std::array<std::span<double>, 5> tensors();
  std::array<std::span<const double>, 5> tensors() const;
};

struct QcTrainResult {
  QcMlp model;
  std::vector<double> val_accuracy;  // one entry per epoch
  int best_epoch = 0;                // 1-based
};

QcTrainResult train_qc_mlp(std::span<const LabeledQuestion> questions, int vocab_size,
                           const QcMlpConfig& config);

// Argmax with ties resolved toward the lowest class index.
CoarseClass argmax_class(const Vector& logits);
QuestionClass classify_feature(const QcMlp& model, const Vector& feature);
QuestionClass classify(const QcMlp& model, std::span<const int> question_tokens);
double qc_accuracy(const QcMlp& model, std::span<const LabeledQuestion> questions);

struct QcGradient {
  QcMlp grads;
  double loss = 0.0;  // mean cross-entropy
};
QcGradient qc_backward(const QcMlp& model, std::span<const LabeledQuestion> batch);

std::vector<LabeledQuestion> labeled_questions(const Corpus& corpus);

void save_qc_mlp(const QcMlp& model, const std::filesystem::path& path);
QcMlp load_qc_mlp(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Unsupervised clustering.

struct KMeansModel {
  Matrix centroids;  // k x d
  int k = 0;
  std::vector<double> inertia_trace;  // within-cluster sum of squares per assignment pass
  std::uint64_t seed = 0;
};

inline constexpr int kDefaultClusters = 5;
inline constexpr int kDefaultClusterSampleCap = 10000;

// k-means++ seeding followed by Lloyd iterations until the largest centroid
// move is below `tol` or `max_iters` is reached. An empty cluster is re-seeded
// at the point farthest from its assigned centroid.
KMeansModel kmeans_fit(const Matrix& features, int k, std::uint64_t seed, int max_iters = 100,
                       double tol = 1e-6);

// Nearest centroid by Euclidean distance; ties go to the lowest index.
int kmeans_assign(const KMeansModel& model, const Vector& feature);

void save_kmeans(const KMeansModel& model, const std::filesystem::path& path);
KMeansModel load_kmeans(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// PCA export.

struct Pca2d {
  Matrix projections;  // n x 2
  Matrix components;   // 2 x d, unit rows
  Vector mean;
  std::array<double, 2> variances{};
};

Pca2d pca_2d(const Matrix& features);
void export_pca_2d(const Matrix& features, std::span<const int> labels,
                   const std::filesystem::path& path);

}  // namespace qc4qa
