#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qc4qa/data.hpp"
#include "qc4qa/rng.hpp"

namespace qc4qa {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct ModelShape {
  int vocab_size = 0;
  int dim = 32;
  int hidden = 32;

  bool operator==(const ModelShape&) const = default;
};

// A view of one parameter tensor as a flat row-major array.
struct TensorView {
  std::string_view name;
  std::span<double> values;
  int rows;
  int cols;
};

struct ConstTensorView {
  std::string_view name;
  std::span<const double> values;
  int rows;
  int cols;
};

inline constexpr int kNumTensors = 7;

// Parameters of the span model; also used as the gradient container.
struct SpanParams {
  Matrix embedding;  // vocab_size x dim
  Matrix enc_w1;     // hidden x dim
  Vector enc_b1;     // hidden
  Matrix enc_w2;     // dim x hidden
  Vector enc_b2;     // dim
  Vector start_head;  // dim
  Vector end_head;    // dim

  static SpanParams zeros(const ModelShape& shape);
  ModelShape shape() const;

  std::array<TensorView, kNumTensors> tensors();
  std::array<ConstTensorView, kNumTensors> tensors() const;

  void set_zero();
  SpanParams& operator+=(const SpanParams& other);
  SpanParams& operator*=(double s);
};

// Token embedding + question-pooled additive conditioning + two tanh layers
// per context token, followed by independent start and end heads.
class SpanModel {
 public:
  static constexpr std::uint32_t kCheckpointVersion = 1;

  SpanModel() = default;
  explicit SpanModel(const ModelShape& shape);  // all-zero parameters
  SpanModel(const ModelShape& shape, Rng& rng);  // random initialization

  const ModelShape& shape() const { return shape_; }
  SpanParams& params() { return params_; }
  const SpanParams& params() const { return params_; }

 private:
  ModelShape shape_;
  SpanParams params_;
};

struct Features {
  Matrix per_token;  // context_len x dim
  Vector pooled;     // row-mean of per_token
  std::optional<Vector> answer;  // x_a: mean over the span's rows
  std::optional<Vector> other;   // x_o: mean over the remaining rows
};

struct ForwardResult {
  Vector start_probs;
  Vector end_probs;
  Features features;
};

// Clamps log probabilities from below so the loss stays finite.
inline constexpr double kLogProbFloor = -30.0;

ForwardResult forward(const SpanModel& model, const QASample& sample,
                      std::optional<Span> feature_span = std::nullopt);

double nll_loss(const Vector& start_probs, const Vector& end_probs, const Span& answer);

struct TrainExample {
  const QASample* sample;
  Span span;
  double weight = 1.0;
};

struct BackwardResult {
  SpanParams grads;
  double nll = 0.0;  // weighted mean NLL
  std::vector<Vector> answer_features;  // x_a per example
};

// Gradient of  sum_k w_k NLL_k / sum_k w_k  +  sum_k <aux_k, x_a,k>  with
// respect to every parameter. `aux_grads` injects dL/dx_a computed elsewhere.
BackwardResult backward(const SpanModel& model, std::span<const TrainExample> batch,
                        std::optional<std::span<const Vector>> aux_grads = std::nullopt);

// Loss that backward() differentiates; used by finite-difference checks.
double objective_value(const SpanModel& model, std::span<const TrainExample> batch,
                       std::optional<std::span<const Vector>> aux_grads = std::nullopt);

// Answer feature x_a for every example without computing gradients.
std::vector<Vector> answer_features(const SpanModel& model, std::span<const TrainExample> batch);

// ---------------------------------------------------------------------------
// Optimization.

struct AdamWConfig {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  double warmup_fraction = 0.1;
  std::int64_t total_steps = 1;
};

// Linear warmup from 0 over warmup_fraction * total_steps, then linear decay to 0.
double scheduled_lr(const AdamWConfig& config, std::int64_t step);

// One AdamW update on a flat parameter array; `step` is the 0-based schedule
// position of this update.
void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                  std::span<double> v, const AdamWConfig& config, std::int64_t step);

struct OptimizerState {
  std::int64_t step = 0;
  SpanParams m;
  SpanParams v;

  static OptimizerState for_shape(const ModelShape& shape);
};

// Throws NumericError naming the first tensor holding a non-finite gradient.
void check_finite(const SpanParams& grads);

void adamw_step(SpanModel& model, const SpanParams& grads, OptimizerState& state,
                const AdamWConfig& config);
void sgd_step(SpanModel& model, const SpanParams& grads, double lr);

// ---------------------------------------------------------------------------
// Checkpoints.

struct Checkpoint {
  SpanModel model;
  std::optional<OptimizerState> optimizer;
  std::string rng_state;
};

void save_checkpoint(const std::filesystem::path& path, const SpanModel& model,
                     const OptimizerState* optimizer = nullptr, const std::string& rng_state = {});
// With `expected` set, a checkpoint of any other shape is rejected with ShapeError.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<ModelShape> expected = std::nullopt);

}  // namespace qc4qa
