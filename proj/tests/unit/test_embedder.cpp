#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "relimine/embedder.hpp"
#include "relimine/rng.hpp"

using namespace relimine;

namespace {

ModelConfig micro_config() {
  ModelConfig c;
  c.latentDim = 8;
  c.encoderLayers = 1;
  c.attentionHeads = 2;
  c.feedForwardDim = 16;
  c.maxSeqLen = 8;
  c.seed = 3;
  return c;
}

// Random but well-formed feature vectors: one-hot type, page flag, some
// attribute values and an occasional direction triple.
std::vector<FeatureVector> random_sequence(Rng& rng, std::size_t len) {
  std::vector<FeatureVector> seq(len);
  for (std::size_t i = 0; i < len; ++i) {
    FeatureVector v{};
    v[rng.below(kActionTypeCount)] = 1.0;
    v[feature::kTime] = static_cast<double>(i) / static_cast<double>(len);
    v[rng.chance(0.5) ? feature::kPageTask : feature::kPageLlm] = 1.0;
    for (auto off : feature::kContinuousOffsets)
      if (rng.chance(0.3)) v[feature::kAttrBegin + off] = rng.uniform(0.0, 5.0);
    if (rng.chance(0.4)) v[feature::kScrollDir + rng.below(3)] = 1.0;
    if (rng.chance(0.4)) v[feature::kMousewheelDir + rng.below(3)] = 1.0;
    seq[i] = v;
  }
  return seq;
}

double max_abs_diff(const RowMatrix& a, const RowMatrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("default parameter count matches the analytic formula") {
  ModelConfig c;
  const std::size_t d = 64, ff = 128, in = 37, L = 3, maxLen = 512;
  const std::size_t block = 2 * d + 4 * (d * d + d) + 2 * d + (d * ff + ff) + (ff * d + d);
  const std::size_t expected = (in * d + d) + (maxLen + 1) * d + L * block + 2 * d + maxLen * d +
                               L * block + 2 * d + (d * 15 + 15) + (d + 1) + (d * 19 + 19);
  CHECK(block == 33472);
  CHECK(expected == 271395);
  CHECK(expected_parameter_count(c) == expected);
  CHECK(init_model(c).parameter_count() == expected);
}

TEST_CASE("config validation") {
  ModelConfig c;
  c.attentionHeads = 5;
  CHECK_THROWS(c.validate());
  c = ModelConfig{};
  c.learningRate = 0;
  CHECK_THROWS(c.validate());
  c = ModelConfig{};
  c.validationFraction = 1.0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("initialization is deterministic per seed") {
  auto c = micro_config();
  CHECK(init_model(c) == init_model(c));
  auto c2 = c;
  c2.seed = 4;
  CHECK_FALSE(init_model(c) == init_model(c2));
}

TEST_CASE("analytic gradient matches central finite differences") {
  auto c = micro_config();
  ModelWeights w = init_model(c);
  Rng rng(11);
  std::vector<std::vector<FeatureVector>> seqs = {random_sequence(rng, 5), random_sequence(rng, 3),
                                                  random_sequence(rng, 7)};
  const auto batch = PaddedBatch::from_sequences(seqs);
  const LossWeights lw{1.0, 0.7, 1.3, 0.9};
  std::vector<double> grad(w.parameter_count());
  loss_and_gradient(w, batch, lw, grad);

  const double h = 1e-4;
  std::size_t ok = 0;
  auto params = w.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = params[i];
    params[i] = orig + h;
    const double up = loss(forward(w, batch).reconstructions, batch, lw).total;
    params[i] = orig - h;
    const double down = loss(forward(w, batch).reconstructions, batch, lw).total;
    params[i] = orig;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::fabs(numeric), std::fabs(grad[i]), 1e-6});
    if (std::fabs(numeric - grad[i]) / denom <= 1e-3 || std::fabs(numeric - grad[i]) < 1e-8) ++ok;
  }
  const double fraction = static_cast<double>(ok) / static_cast<double>(params.size());
  CHECK(fraction >= 0.99);
}

TEST_CASE("padding does not change embeddings or reconstructions") {
  auto c = micro_config();
  c.maxSeqLen = 16;
  const auto w = init_model(c);
  Rng rng(5);
  std::vector<std::vector<FeatureVector>> one = {random_sequence(rng, 4)};
  const auto tight = forward(w, PaddedBatch::from_sequences(one));
  const auto padded = forward(w, PaddedBatch::from_sequences(one, 12));
  CHECK(max_abs_diff(tight.embeddings, padded.embeddings) == 0.0);
  CHECK(max_abs_diff(tight.reconstructions[0].typeLogits, padded.reconstructions[0].typeLogits) == 0.0);

  // garbage in padded slots is ignored
  auto batch = PaddedBatch::from_sequences(one, 12);
  batch.values[0].bottomRows(8).setConstant(123.0);
  CHECK(max_abs_diff(forward(w, batch).embeddings, tight.embeddings) == 0.0);
}

TEST_CASE("embedding is independent of batch composition") {
  auto c = micro_config();
  const auto w = init_model(c);
  Rng rng(6);
  auto a = random_sequence(rng, 6);
  auto b = random_sequence(rng, 2);
  std::vector<std::vector<FeatureVector>> both = {b, a};
  const auto together = forward(w, PaddedBatch::from_sequences(both));
  CHECK((together.embeddings.row(1).transpose() - embed(w, a)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mask must be a prefix and batches cannot hold empty samples") {
  auto c = micro_config();
  const auto w = init_model(c);
  Rng rng(7);
  std::vector<std::vector<FeatureVector>> one = {random_sequence(rng, 3)};
  auto batch = PaddedBatch::from_sequences(one, 5);
  batch.mask(0, 4) = 1;
  CHECK_THROWS(forward(w, batch));
  batch.mask.setZero();
  CHECK_THROWS(forward(w, batch));
  CHECK_THROWS(embed(w, std::vector<FeatureVector>{}));
}

TEST_CASE("sequences longer than maxSeqLen are rejected") {
  auto c = micro_config();
  const auto w = init_model(c);
  Rng rng(8);
  CHECK_THROWS(embed(w, random_sequence(rng, 9)));
}

TEST_CASE("categorical loss averages over active triples only") {
  auto c = micro_config();
  const auto w = init_model(c);
  FeatureVector v{};
  v[0] = 1.0;
  v[feature::kPageTask] = 1.0;
  std::vector<std::vector<FeatureVector>> seqs = {{v, v}};
  auto batch = PaddedBatch::from_sequences(seqs);
  auto res = forward(w, batch);
  auto lc = loss(res.reconstructions, batch, LossWeights{});
  CHECK(lc.categorical == 0.0);

  // one active scroll triple: CE of that single triple
  seqs[0][1][feature::kScrollDir + 1] = 1.0;
  batch = PaddedBatch::from_sequences(seqs);
  res = forward(w, batch);
  lc = loss(res.reconstructions, batch, LossWeights{});
  const auto& a = res.reconstructions[0].attributes;
  const auto off = static_cast<Eigen::Index>(feature::kScrollDirOffset);
  const double l0 = a(1, off), l1 = a(1, off + 1), l2 = a(1, off + 2);
  const double ce = std::log(std::exp(l0) + std::exp(l1) + std::exp(l2)) - l1;
  CHECK(lc.categorical == doctest::Approx(ce).epsilon(1e-12));

  // type term: mean CE over the two positions
  const auto& t = res.reconstructions[0].typeLogits;
  double typeCe = 0.0;
  for (int r = 0; r < 2; ++r) typeCe += std::log(t.row(r).array().exp().sum()) - t(r, 0);
  CHECK(lc.type == doctest::Approx(typeCe / 2).epsilon(1e-12));
}

TEST_CASE("save and load round-trip") {
  auto c = micro_config();
  const auto w = init_model(c);
  const auto path = (std::filesystem::temp_directory_path() / "relimine_weights_test.bin").string();
  w.save(path);
  const auto back = ModelWeights::load(path, c);
  CHECK(back == w);
  auto other = c;
  other.latentDim = 16;
  CHECK_THROWS(ModelWeights::load(path, other));
  std::remove(path.c_str());
}

TEST_CASE("training is deterministic and independent of the worker count") {
  auto c = micro_config();
  c.maxEpochs = 3;
  c.batchSize = 4;
  c.learningRate = 1e-3;
  Rng rng(9);
  std::vector<TrainingSequence> data;
  for (int p = 0; p < 4; ++p)
    for (int k = 0; k < 3; ++k)
      data.push_back({"p" + std::to_string(p), random_sequence(rng, 2 + rng.below(5))});
  const auto a = train(data, c);
  const auto b = train(data, c);
  c.jobs = 3;
  const auto d = train(data, c);
  CHECK(a.weights == b.weights);
  CHECK(a.weights == d.weights);
  CHECK(a.history.size() == 3);
}

TEST_CASE("training lowers the loss on a tiny dataset") {
  auto c = micro_config();
  c.maxEpochs = 60;
  c.batchSize = 4;
  c.learningRate = 3e-3;
  c.earlyStopPatience = 60;
  Rng rng(10);
  std::vector<TrainingSequence> data;
  for (int p = 0; p < 5; ++p)
    for (int k = 0; k < 4; ++k) data.push_back({"p" + std::to_string(p), random_sequence(rng, 4)});
  const auto r = train(data, c);
  CHECK(r.history.back().train.total < r.history.front().train.total);
}
