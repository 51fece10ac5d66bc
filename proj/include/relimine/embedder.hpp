#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "relimine/encode.hpp"

namespace relimine {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EmbeddingVector = Eigen::VectorXd;

inline constexpr std::size_t kTypeHeadDim = kActionTypeCount;  // 15 logits
inline constexpr std::size_t kAttrHeadDim = feature::kAttrCount;  // 19 outputs

struct LossWeights {
  double type = 1.0;
  double page = 1.0;
  double continuous = 1.0;
  double categorical = 1.0;
};

enum class ValidationMode { singleFold, leaveOneParticipantOut };

struct ModelConfig {
  int inputDim = static_cast<int>(kFeatureDim);
  int latentDim = 64;
  int encoderLayers = 3;  // the decoder mirrors this depth
  int attentionHeads = 4;
  int feedForwardDim = 128;
  int maxSeqLen = 512;
  double learningRate = 1e-4;
  int batchSize = 32;
  std::uint64_t seed = 0;
  int earlyStopPatience = 10;
  int maxEpochs = 200;
  double minImprovement = 1e-4;
  double validationFraction = 0.1;
  ValidationMode validation = ValidationMode::singleFold;
  LossWeights lossWeights;
  int jobs = 1;

  void validate() const;
  // Fields that determine the parameter layout.
  bool same_architecture(const ModelConfig& other) const;
};

// Named tensor inside the flat parameter vector (row-major rows x cols).
struct TensorInfo {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

// All model parameters in one flat buffer: input projection, encoder
// positional table, encoder blocks, encoder final norm, decoder positional
// table, decoder blocks, decoder final norm, and the three output heads.
// Eigen picks its vectorized paths from the buffer's alignment, and those
// paths round differently. Parameter and gradient storage therefore always
// starts on an aligned boundary so results do not depend on the heap.
using AlignedDoubles = std::vector<double, Eigen::aligned_allocator<double>>;

class ModelWeights {
 public:
  explicit ModelWeights(const ModelConfig& cfg);

  const ModelConfig& config() const { return config_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  const TensorInfo& tensor(const std::string& name) const;
  std::size_t parameter_count() const { return params_.size(); }

  std::span<double> data() { return params_; }
  std::span<const double> data() const { return params_; }

  bool all_finite() const;
  bool operator==(const ModelWeights& other) const;

  void save(const std::string& path) const;
  // Throws when the file's architecture differs from `expected`.
  static ModelWeights load(const std::string& path, const ModelConfig& expected);
  static ModelWeights load(const std::string& path);

 private:
  ModelConfig config_;
  std::vector<TensorInfo> tensors_;
  AlignedDoubles params_;
};

std::size_t expected_parameter_count(const ModelConfig& cfg);

// Deterministic for a fixed seed. Matrices draw from N(0, 0.05^2), norms start
// at unit gain, biases at zero and positional tables at sinusoids.
ModelWeights init_model(const ModelConfig& cfg);

// Right-padded batch. mask(b, t) is 1 for real positions; the real positions
// of each row must form a prefix.
struct PaddedBatch {
  std::vector<RowMatrix> values;  // each T x 37, T shared across the batch
  Eigen::MatrixXi mask;           // B x T

  std::size_t size() const { return values.size(); }
  std::size_t length(std::size_t b) const;
  static PaddedBatch from_sequences(std::span<const std::vector<FeatureVector>> seqs,
                                    std::size_t padTo = 0);
};

struct Reconstruction {
  RowMatrix typeLogits;  // L x 15
  Eigen::VectorXd pageLogits;  // L
  RowMatrix attributes;  // L x 19 (13 regressions + two 3-way logit triples)
};

struct ForwardResult {
  RowMatrix embeddings;  // B x latentDim
  std::vector<Reconstruction> reconstructions;  // unpadded, one per sample
};

ForwardResult forward(const ModelWeights& w, const PaddedBatch& batch);
EmbeddingVector embed(const ModelWeights& w, std::span<const FeatureVector> segment);
RowMatrix embed_all(const ModelWeights& w, std::span<const std::vector<FeatureVector>> segments,
                    int jobs = 1);

// Encoder attention probabilities, [layer][head] of (L+1) x (L+1).
std::vector<std::vector<RowMatrix>> encoder_attention(const ModelWeights& w,
                                                      std::span<const FeatureVector> seq);

struct LossComponents {
  double type = 0.0;
  double page = 0.0;
  double continuous = 0.0;
  double categorical = 0.0;
  double total = 0.0;
};

// Token-averaged losses over the real positions of the batch. The
// categorical term averages over the direction triples that are active in
// the target (scroll / mousewheel positions only).
LossComponents loss(std::span<const Reconstruction> recs, const PaddedBatch& targets,
                    const LossWeights& weights);

// Loss and its gradient with respect to every parameter (same layout as
// ModelWeights::data()). `grad` is overwritten.
LossComponents loss_and_gradient(const ModelWeights& w, const PaddedBatch& batch,
                                 const LossWeights& weights, std::span<double> grad);

// Fraction of real positions whose decoded action-type argmax matches.
double type_accuracy(const ModelWeights& w, std::span<const std::vector<FeatureVector>> seqs);

struct TrainingSequence {
  std::string participantId;
  std::vector<FeatureVector> vectors;
};

struct EpochRecord {
  int epoch = 0;
  LossComponents train;
  LossComponents validation;
  double bestValidation = 0.0;
};

struct TrainResult {
  ModelWeights weights;
  std::vector<EpochRecord> history;
  int bestEpoch = 0;
  bool earlyStopped = false;
  std::vector<double> foldBestLosses;  // leave-one-participant-out only
  std::optional<ModelWeights> finalWeights;  // after the last epoch run; `weights` is the best checkpoint
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(std::span<const TrainingSequence> dataset, const ModelConfig& cfg,
                  const EpochCallback& onEpoch = {});

std::string format_history(std::span<const EpochRecord> history);

}  // namespace relimine
