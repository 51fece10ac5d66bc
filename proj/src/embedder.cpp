#include "relimine/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "relimine/parallel.hpp"
#include "relimine/rng.hpp"

namespace relimine {

namespace {

using CMat = Eigen::Map<const RowMatrix>;
using MMat = Eigen::Map<RowMatrix>;
using CRow = Eigen::Map<const Eigen::RowVectorXd>;
using MRow = Eigen::Map<Eigen::RowVectorXd>;

constexpr double kNormEps = 1e-5;
// Small-normal init: with Adam at lr 1e-4 each weight moves roughly lr per
// step, so a small starting scale lets relative change happen within a few
// thousand steps.
constexpr double kInitStd = 0.05;

struct BlockSlots {
  std::size_t norm1Gain, norm1Bias;
  std::size_t queryW, queryB, keyW, keyB, valueW, valueB, outW, outB;
  std::size_t norm2Gain, norm2Bias;
  std::size_t ff1W, ff1B, ff2W, ff2B;
};

struct Layout {
  std::vector<TensorInfo> tensors;
  std::size_t total = 0;
  std::size_t inputW = 0, inputB = 0, encoderPos = 0, encoderGain = 0, encoderBias = 0;
  std::size_t decoderPos = 0, decoderGain = 0, decoderBias = 0;
  std::size_t typeW = 0, typeB = 0, pageW = 0, pageB = 0, attrW = 0, attrB = 0;
  std::vector<BlockSlots> encoder, decoder;
};

Layout make_layout(const ModelConfig& cfg) {
  Layout L;
  const std::size_t d = static_cast<std::size_t>(cfg.latentDim);
  const std::size_t ff = static_cast<std::size_t>(cfg.feedForwardDim);
  const std::size_t maxLen = static_cast<std::size_t>(cfg.maxSeqLen);
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    L.tensors.push_back(TensorInfo{std::move(name), L.total, rows, cols});
    L.total += rows * cols;
    return L.tensors.back().offset;
  };
  auto block = [&](const std::string& prefix) {
    BlockSlots s{};
    s.norm1Gain = add(prefix + ".norm1.gain", 1, d);
    s.norm1Bias = add(prefix + ".norm1.bias", 1, d);
    s.queryW = add(prefix + ".attn.query.weight", d, d);
    s.queryB = add(prefix + ".attn.query.bias", 1, d);
    s.keyW = add(prefix + ".attn.key.weight", d, d);
    s.keyB = add(prefix + ".attn.key.bias", 1, d);
    s.valueW = add(prefix + ".attn.value.weight", d, d);
    s.valueB = add(prefix + ".attn.value.bias", 1, d);
    s.outW = add(prefix + ".attn.out.weight", d, d);
    s.outB = add(prefix + ".attn.out.bias", 1, d);
    s.norm2Gain = add(prefix + ".norm2.gain", 1, d);
    s.norm2Bias = add(prefix + ".norm2.bias", 1, d);
    s.ff1W = add(prefix + ".ff1.weight", d, ff);
    s.ff1B = add(prefix + ".ff1.bias", 1, ff);
    s.ff2W = add(prefix + ".ff2.weight", ff, d);
    s.ff2B = add(prefix + ".ff2.bias", 1, d);
    return s;
  };
  L.inputW = add("input.weight", static_cast<std::size_t>(cfg.inputDim), d);
  L.inputB = add("input.bias", 1, d);
  L.encoderPos = add("encoder.position", maxLen + 1, d);
  for (int i = 0; i < cfg.encoderLayers; ++i) L.encoder.push_back(block("encoder." + std::to_string(i)));
  L.encoderGain = add("encoder.norm.gain", 1, d);
  L.encoderBias = add("encoder.norm.bias", 1, d);
  L.decoderPos = add("decoder.position", maxLen, d);
  for (int i = 0; i < cfg.encoderLayers; ++i) L.decoder.push_back(block("decoder." + std::to_string(i)));
  L.decoderGain = add("decoder.norm.gain", 1, d);
  L.decoderBias = add("decoder.norm.bias", 1, d);
  L.typeW = add("head.type.weight", d, kTypeHeadDim);
  L.typeB = add("head.type.bias", 1, kTypeHeadDim);
  L.pageW = add("head.page.weight", d, 1);
  L.pageB = add("head.page.bias", 1, 1);
  L.attrW = add("head.attr.weight", d, kAttrHeadDim);
  L.attrB = add("head.attr.bias", 1, kAttrHeadDim);
  return L;
}

// ---------------------------------------------------------------------------
// Forward/backward kernels on one unpadded sequence.

struct Dims {
  Eigen::Index d, heads, headDim, ff;
};

Dims dims_of(const ModelConfig& cfg) {
  return Dims{cfg.latentDim, cfg.attentionHeads, cfg.latentDim / cfg.attentionHeads,
              cfg.feedForwardDim};
}

struct Params {
  const double* base;
  CMat mat(std::size_t off, Eigen::Index r, Eigen::Index c) const { return CMat(base + off, r, c); }
  CRow row(std::size_t off, Eigen::Index n) const { return CRow(base + off, n); }
};

struct Grads {
  double* base;
  MMat mat(std::size_t off, Eigen::Index r, Eigen::Index c) const { return MMat(base + off, r, c); }
  MRow row(std::size_t off, Eigen::Index n) const { return MRow(base + off, n); }
};

struct NormCache {
  RowMatrix xhat;
  Eigen::VectorXd rstd;
};

void layer_norm(const RowMatrix& x, CRow gain, CRow bias, RowMatrix& y, NormCache& c) {
  const Eigen::Index n = x.cols();
  c.xhat.resize(x.rows(), n);
  c.rstd.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    auto centered = (x.row(r).array() - mean).eval();
    const double var = centered.square().mean();
    const double rstd = 1.0 / std::sqrt(var + kNormEps);
    c.rstd(r) = rstd;
    c.xhat.row(r) = centered * rstd;
  }
  y = (c.xhat.array().rowwise() * gain.array()).rowwise() + bias.array();
}

// Returns dx; accumulates gain/bias gradients.
RowMatrix layer_norm_backward(const RowMatrix& dy, const NormCache& c, CRow gain, MRow dGain,
                              MRow dBias) {
  dGain += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  dBias += dy.colwise().sum();
  RowMatrix dxhat = dy.array().rowwise() * gain.array();
  RowMatrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double m1 = dxhat.row(r).mean();
    const double m2 = (dxhat.row(r).array() * c.xhat.row(r).array()).mean();
    dx.row(r) = c.rstd(r) * (dxhat.row(r).array() - m1 - c.xhat.row(r).array() * m2);
  }
  return dx;
}

struct BlockCache {
  NormCache norm1, norm2;
  RowMatrix a, q, k, v, ctx, x1, b, u, r;
  std::vector<RowMatrix> probs;
};

void softmax_rows(RowMatrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
}

RowMatrix block_forward(const Params& p, const BlockSlots& s, const Dims& dm, const RowMatrix& x,
                        BlockCache& c) {
  const auto d = dm.d;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dm.headDim));
  layer_norm(x, p.row(s.norm1Gain, d), p.row(s.norm1Bias, d), c.a, c.norm1);
  c.q.noalias() = c.a * p.mat(s.queryW, d, d);
  c.q.rowwise() += p.row(s.queryB, d);
  c.k.noalias() = c.a * p.mat(s.keyW, d, d);
  c.k.rowwise() += p.row(s.keyB, d);
  c.v.noalias() = c.a * p.mat(s.valueW, d, d);
  c.v.rowwise() += p.row(s.valueB, d);
  c.ctx.resize(x.rows(), d);
  c.probs.resize(static_cast<std::size_t>(dm.heads));
  for (Eigen::Index h = 0; h < dm.heads; ++h) {
    auto& P = c.probs[static_cast<std::size_t>(h)];
    P.noalias() = c.q.middleCols(h * dm.headDim, dm.headDim) *
                  c.k.middleCols(h * dm.headDim, dm.headDim).transpose();
    P *= scale;
    softmax_rows(P);
    c.ctx.middleCols(h * dm.headDim, dm.headDim).noalias() =
        P * c.v.middleCols(h * dm.headDim, dm.headDim);
  }
  c.x1 = x;
  c.x1.noalias() += c.ctx * p.mat(s.outW, d, d);
  c.x1.rowwise() += p.row(s.outB, d);
  layer_norm(c.x1, p.row(s.norm2Gain, d), p.row(s.norm2Bias, d), c.b, c.norm2);
  c.u.noalias() = c.b * p.mat(s.ff1W, d, dm.ff);
  c.u.rowwise() += p.row(s.ff1B, dm.ff);
  c.r = c.u.cwiseMax(0.0);
  RowMatrix out = c.x1;
  out.noalias() += c.r * p.mat(s.ff2W, dm.ff, d);
  out.rowwise() += p.row(s.ff2B, d);
  return out;
}

// dOut -> dX, accumulating parameter gradients.
RowMatrix block_backward(const Params& p, const Grads& g, const BlockSlots& s, const Dims& dm,
                         const BlockCache& c, const RowMatrix& dOut) {
  const auto d = dm.d;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dm.headDim));

  // feed-forward
  g.mat(s.ff2W, dm.ff, d).noalias() += c.r.transpose() * dOut;
  g.row(s.ff2B, d) += dOut.colwise().sum();
  RowMatrix du = dOut * p.mat(s.ff2W, dm.ff, d).transpose();
  du.array() *= (c.u.array() > 0.0).cast<double>();
  g.mat(s.ff1W, d, dm.ff).noalias() += c.b.transpose() * du;
  g.row(s.ff1B, dm.ff) += du.colwise().sum();
  RowMatrix db = du * p.mat(s.ff1W, d, dm.ff).transpose();
  RowMatrix dx1 = dOut + layer_norm_backward(db, c.norm2, p.row(s.norm2Gain, d),
                                             g.row(s.norm2Gain, d), g.row(s.norm2Bias, d));

  // attention
  g.mat(s.outW, d, d).noalias() += c.ctx.transpose() * dx1;
  g.row(s.outB, d) += dx1.colwise().sum();
  RowMatrix dctx = dx1 * p.mat(s.outW, d, d).transpose();
  RowMatrix dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
  for (Eigen::Index h = 0; h < dm.heads; ++h) {
    const auto& P = c.probs[static_cast<std::size_t>(h)];
    const auto cols = [&](const RowMatrix& m) { return m.middleCols(h * dm.headDim, dm.headDim); };
    RowMatrix dP = cols(dctx) * cols(c.v).transpose();
    dv.middleCols(h * dm.headDim, dm.headDim).noalias() = P.transpose() * cols(dctx);
    const Eigen::VectorXd rowDot = (dP.array() * P.array()).rowwise().sum();
    RowMatrix dS = P.array() * (dP.array().colwise() - rowDot.array());
    dS *= scale;
    dq.middleCols(h * dm.headDim, dm.headDim).noalias() = dS * cols(c.k);
    dk.middleCols(h * dm.headDim, dm.headDim).noalias() = dS.transpose() * cols(c.q);
  }
  g.mat(s.queryW, d, d).noalias() += c.a.transpose() * dq;
  g.row(s.queryB, d) += dq.colwise().sum();
  g.mat(s.keyW, d, d).noalias() += c.a.transpose() * dk;
  g.row(s.keyB, d) += dk.colwise().sum();
  g.mat(s.valueW, d, d).noalias() += c.a.transpose() * dv;
  g.row(s.valueB, d) += dv.colwise().sum();
  RowMatrix da = dq * p.mat(s.queryW, d, d).transpose();
  da.noalias() += dk * p.mat(s.keyW, d, d).transpose();
  da.noalias() += dv * p.mat(s.valueW, d, d).transpose();
  return dx1 + layer_norm_backward(da, c.norm1, p.row(s.norm1Gain, d), g.row(s.norm1Gain, d),
                                   g.row(s.norm1Bias, d));
}

struct SequenceCache {
  RowMatrix input;  // (L+1) x inputDim, row 0 is the [CLS] token
  std::vector<BlockCache> encoder, decoder;
  RowMatrix encoderOut;
  NormCache encoderNorm;
  RowMatrix encoderNormed;
  RowMatrix decoderOut;
  NormCache decoderNorm;
  RowMatrix decoderNormed;
};

struct SequenceOutput {
  Eigen::RowVectorXd embedding;
  Reconstruction rec;
};

SequenceOutput sequence_forward(const Layout& L, const ModelConfig& cfg, const Params& p,
                                const RowMatrix& seq, SequenceCache& c, bool decode = true) {
  const Dims dm = dims_of(cfg);
  const Eigen::Index len = seq.rows();
  if (len == 0) throw std::invalid_argument("embedder: empty sequence");
  if (len > cfg.maxSeqLen)
    throw std::invalid_argument("embedder: sequence longer than maxSeqLen");
  const Eigen::Index in = cfg.inputDim;

  c.input.resize(len + 1, in);
  c.input.row(0).setOnes();
  c.input.bottomRows(len) = seq;
  RowMatrix h = c.input * p.mat(L.inputW, in, dm.d);
  h.rowwise() += p.row(L.inputB, dm.d);
  h += p.mat(L.encoderPos, cfg.maxSeqLen + 1, dm.d).topRows(len + 1);
  c.encoder.resize(L.encoder.size());
  for (std::size_t i = 0; i < L.encoder.size(); ++i) h = block_forward(p, L.encoder[i], dm, h, c.encoder[i]);
  c.encoderOut = std::move(h);
  layer_norm(c.encoderOut, p.row(L.encoderGain, dm.d), p.row(L.encoderBias, dm.d), c.encoderNormed,
             c.encoderNorm);

  SequenceOutput out;
  out.embedding = c.encoderNormed.row(0);
  if (!decode) return out;

  RowMatrix z = p.mat(L.decoderPos, cfg.maxSeqLen, dm.d).topRows(len);
  z.rowwise() += out.embedding;
  c.decoder.resize(L.decoder.size());
  for (std::size_t i = 0; i < L.decoder.size(); ++i) z = block_forward(p, L.decoder[i], dm, z, c.decoder[i]);
  c.decoderOut = std::move(z);
  layer_norm(c.decoderOut, p.row(L.decoderGain, dm.d), p.row(L.decoderBias, dm.d), c.decoderNormed,
             c.decoderNorm);

  out.rec.typeLogits.noalias() = c.decoderNormed * p.mat(L.typeW, dm.d, kTypeHeadDim);
  out.rec.typeLogits.rowwise() += p.row(L.typeB, kTypeHeadDim);
  out.rec.pageLogits = (c.decoderNormed * p.mat(L.pageW, dm.d, 1)).col(0).array() + p.base[L.pageB];
  out.rec.attributes.noalias() = c.decoderNormed * p.mat(L.attrW, dm.d, kAttrHeadDim);
  out.rec.attributes.rowwise() += p.row(L.attrB, kAttrHeadDim);
  return out;
}

struct HeadGrads {
  RowMatrix type;  // L x 15
  Eigen::VectorXd page;
  RowMatrix attr;  // L x 19
};

void sequence_backward(const Layout& L, const ModelConfig& cfg, const Params& p, const Grads& g,
                       const SequenceCache& c, const HeadGrads& hg) {
  const Dims dm = dims_of(cfg);
  const Eigen::Index len = c.decoderNormed.rows();

  g.mat(L.typeW, dm.d, kTypeHeadDim).noalias() += c.decoderNormed.transpose() * hg.type;
  g.row(L.typeB, kTypeHeadDim) += hg.type.colwise().sum();
  g.mat(L.pageW, dm.d, 1).noalias() += c.decoderNormed.transpose() * hg.page;
  g.base[L.pageB] += hg.page.sum();
  g.mat(L.attrW, dm.d, kAttrHeadDim).noalias() += c.decoderNormed.transpose() * hg.attr;
  g.row(L.attrB, kAttrHeadDim) += hg.attr.colwise().sum();

  RowMatrix dn = hg.type * p.mat(L.typeW, dm.d, kTypeHeadDim).transpose();
  dn.noalias() += hg.page * p.mat(L.pageW, dm.d, 1).transpose();
  dn.noalias() += hg.attr * p.mat(L.attrW, dm.d, kAttrHeadDim).transpose();
  RowMatrix dz = layer_norm_backward(dn, c.decoderNorm, p.row(L.decoderGain, dm.d),
                                     g.row(L.decoderGain, dm.d), g.row(L.decoderBias, dm.d));
  for (std::size_t i = L.decoder.size(); i-- > 0;)
    dz = block_backward(p, g, L.decoder[i], dm, c.decoder[i], dz);
  g.mat(L.decoderPos, cfg.maxSeqLen, dm.d).topRows(len) += dz;

  RowMatrix dEnc = RowMatrix::Zero(len + 1, dm.d);
  dEnc.row(0) = dz.colwise().sum();
  RowMatrix dh = layer_norm_backward(dEnc, c.encoderNorm, p.row(L.encoderGain, dm.d),
                                     g.row(L.encoderGain, dm.d), g.row(L.encoderBias, dm.d));
  for (std::size_t i = L.encoder.size(); i-- > 0;)
    dh = block_backward(p, g, L.encoder[i], dm, c.encoder[i], dh);
  g.mat(L.encoderPos, cfg.maxSeqLen + 1, dm.d).topRows(len + 1) += dh;
  g.mat(L.inputW, cfg.inputDim, dm.d).noalias() += c.input.transpose() * dh;
  g.row(L.inputB, dm.d) += dh.colwise().sum();
}

// ---------------------------------------------------------------------------
// Loss pieces

int type_target(const RowMatrix& seq, Eigen::Index r) {
  Eigen::Index idx = 0;
  seq.row(r).segment(feature::kTypeBegin, kActionTypeCount).maxCoeff(&idx);
  return static_cast<int>(idx);
}

// -1 when the triple is inactive in the target.
int triple_target(const RowMatrix& seq, Eigen::Index r, std::size_t begin) {
  const auto t = seq.row(r).segment(static_cast<Eigen::Index>(begin), 3);
  if (t.sum() < 0.5) return -1;
  Eigen::Index idx = 0;
  t.maxCoeff(&idx);
  return static_cast<int>(idx);
}

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  const double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

struct LossSums {
  double type = 0, page = 0, continuous = 0, categorical = 0;
};

struct Normalizers {
  double positions = 0;   // real positions in the batch
  double catTriples = 0;  // active direction triples in the batch
};

Normalizers normalizers_of(const std::vector<RowMatrix>& seqs) {
  Normalizers n;
  for (const auto& s : seqs) {
    n.positions += static_cast<double>(s.rows());
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      if (triple_target(s, r, feature::kScrollDir) >= 0) n.catTriples += 1;
      if (triple_target(s, r, feature::kMousewheelDir) >= 0) n.catTriples += 1;
    }
  }
  return n;
}

// Sums of per-position losses; optionally the gradient of the weighted,
// normalized total with respect to the head outputs.
LossSums sequence_loss(const Reconstruction& rec, const RowMatrix& target, const LossWeights& w,
                       const Normalizers& n, HeadGrads* hg) {
  LossSums s;
  const Eigen::Index len = target.rows();
  if (hg) {
    hg->type.setZero(len, kTypeHeadDim);
    hg->page.setZero(len);
    hg->attr.setZero(len, kAttrHeadDim);
  }
  const double contCount = static_cast<double>(kNumAttrCount);
  for (Eigen::Index r = 0; r < len; ++r) {
    // action type
    const int t = type_target(target, r);
    const double lse = log_sum_exp(rec.typeLogits.row(r));
    s.type += lse - rec.typeLogits(r, t);
    if (hg) {
      hg->type.row(r) = (rec.typeLogits.row(r).array() - lse).exp();
      hg->type(r, t) -= 1.0;
      hg->type.row(r) *= w.type / n.positions;
    }
    // page: label 1 for the LLM page
    const double y = target(r, static_cast<Eigen::Index>(feature::kPageLlm));
    const double z = rec.pageLogits(r);
    s.page += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
    if (hg) hg->page(r) = (1.0 / (1.0 + std::exp(-z)) - y) * w.page / n.positions;
    // continuous attributes
    for (std::size_t k = 0; k < kNumAttrCount; ++k) {
      const auto off = static_cast<Eigen::Index>(feature::kContinuousOffsets[k]);
      const double diff = rec.attributes(r, off) - target(r, static_cast<Eigen::Index>(feature::kAttrBegin) + off);
      s.continuous += diff * diff / contCount;
      if (hg) hg->attr(r, off) = 2.0 * diff / contCount * w.continuous / n.positions;
    }
    // direction triples
    for (std::size_t begin : {feature::kScrollDir, feature::kMousewheelDir}) {
      const int dt = triple_target(target, r, begin);
      if (dt < 0) continue;
      const auto off = static_cast<Eigen::Index>(begin - feature::kAttrBegin);
      const auto logits = rec.attributes.row(r).segment(off, 3);
      const double l = log_sum_exp(logits);
      s.categorical += l - logits(dt);
      if (hg) {
        auto gseg = hg->attr.row(r).segment(off, 3);
        gseg = (logits.array() - l).exp();
        gseg(dt) -= 1.0;
        gseg *= w.categorical / n.catTriples;
      }
    }
  }
  return s;
}

LossComponents finish(const LossSums& s, const Normalizers& n, const LossWeights& w) {
  LossComponents c;
  if (n.positions > 0) {
    c.type = s.type / n.positions;
    c.page = s.page / n.positions;
    c.continuous = s.continuous / n.positions;
  }
  if (n.catTriples > 0) c.categorical = s.categorical / n.catTriples;
  c.total = w.type * c.type + w.page * c.page + w.continuous * c.continuous +
            w.categorical * c.categorical;
  return c;
}

RowMatrix to_matrix(std::span<const FeatureVector> seq) {
  RowMatrix m(static_cast<Eigen::Index>(seq.size()), static_cast<Eigen::Index>(kFeatureDim));
  for (std::size_t i = 0; i < seq.size(); ++i)
    for (std::size_t j = 0; j < kFeatureDim; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = seq[i][j];
  return m;
}

std::vector<RowMatrix> unpad(const PaddedBatch& batch) {
  std::vector<RowMatrix> out;
  out.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto len = static_cast<Eigen::Index>(batch.length(b));
    if (len == 0) throw std::invalid_argument("embedder: all-padding sample in batch");
    out.push_back(batch.values[b].topRows(len));
  }
  return out;
}

// Loss + gradient over unpadded sequences. Per-sample gradients are summed in
// sample order so the result does not depend on the worker count.
LossComponents batch_loss_and_gradient(const Layout& L, const ModelConfig& cfg, const Params& p,
                                       const std::vector<RowMatrix>& seqs, const LossWeights& w,
                                       std::span<double> grad, int jobs) {
  const Normalizers n = normalizers_of(seqs);
  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<LossSums> sums(seqs.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(jobs, seqs.size()));
  std::vector<AlignedDoubles> perSample(workers == 1 ? 1 : seqs.size(), AlignedDoubles(L.total));
  auto run = [&](std::size_t i, AlignedDoubles& buffer) {
    std::fill(buffer.begin(), buffer.end(), 0.0);
    SequenceCache cache;
    const auto out = sequence_forward(L, cfg, p, seqs[i], cache);
    HeadGrads hg;
    sums[i] = sequence_loss(out.rec, seqs[i], w, n, &hg);
    sequence_backward(L, cfg, p, Grads{buffer.data()}, cache, hg);
  };
  if (workers == 1) {
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      run(i, perSample[0]);
      for (std::size_t k = 0; k < L.total; ++k) grad[k] += perSample[0][k];
    }
  } else {
    parallel_for(seqs.size(), workers, [&](std::size_t i) { run(i, perSample[i]); });
    for (std::size_t i = 0; i < seqs.size(); ++i)
      for (std::size_t k = 0; k < L.total; ++k) grad[k] += perSample[i][k];
  }
  LossSums total;
  for (const auto& s : sums) {
    total.type += s.type;
    total.page += s.page;
    total.continuous += s.continuous;
    total.categorical += s.categorical;
  }
  return finish(total, n, w);
}

LossComponents evaluate_loss(const Layout& L, const ModelConfig& cfg, const Params& p,
                             const std::vector<RowMatrix>& seqs, const LossWeights& w, int jobs) {
  const Normalizers n = normalizers_of(seqs);
  std::vector<LossSums> sums(seqs.size());
  parallel_for(seqs.size(), static_cast<std::size_t>(std::max(jobs, 1)), [&](std::size_t i) {
    SequenceCache cache;
    const auto out = sequence_forward(L, cfg, p, seqs[i], cache);
    sums[i] = sequence_loss(out.rec, seqs[i], w, n, nullptr);
  });
  LossSums total;
  for (const auto& s : sums) {
    total.type += s.type;
    total.page += s.page;
    total.continuous += s.continuous;
    total.categorical += s.categorical;
  }
  return finish(total, n, w);
}

const Layout& layout_for(const ModelConfig& cfg);

}  // namespace

// ---------------------------------------------------------------------------
// Config / weights

void ModelConfig::validate() const {
  if (inputDim != static_cast<int>(kFeatureDim)) throw std::invalid_argument("model: inputDim must be 37");
  if (latentDim <= 0 || encoderLayers <= 0 || attentionHeads <= 0 || feedForwardDim <= 0 ||
      maxSeqLen <= 0)
    throw std::invalid_argument("model: all dimensions must be positive");
  if (latentDim % attentionHeads != 0)
    throw std::invalid_argument("model: latentDim must be divisible by attentionHeads");
  if (!(learningRate > 0.0) || batchSize <= 0 || earlyStopPatience <= 0 || maxEpochs <= 0)
    throw std::invalid_argument("model: learning rate, batch size, patience, epochs must be positive");
  if (!(validationFraction > 0.0 && validationFraction < 1.0))
    throw std::invalid_argument("model: validationFraction must lie in (0, 1)");
}

bool ModelConfig::same_architecture(const ModelConfig& o) const {
  return inputDim == o.inputDim && latentDim == o.latentDim && encoderLayers == o.encoderLayers &&
         attentionHeads == o.attentionHeads && feedForwardDim == o.feedForwardDim &&
         maxSeqLen == o.maxSeqLen;
}

namespace {
const Layout& layout_for(const ModelConfig& cfg) {
  // Layouts are immutable; cache by architecture.
  static std::mutex mu;
  static std::map<std::tuple<int, int, int, int, int>, Layout> cache;
  const auto key = std::make_tuple(cfg.latentDim, cfg.encoderLayers, cfg.attentionHeads,
                                   cfg.feedForwardDim, cfg.maxSeqLen);
  std::lock_guard lock(mu);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, make_layout(cfg)).first;
  return it->second;
}
}  // namespace

std::size_t expected_parameter_count(const ModelConfig& cfg) {
  cfg.validate();
  return layout_for(cfg).total;
}

ModelWeights::ModelWeights(const ModelConfig& cfg) : config_(cfg) {
  cfg.validate();
  const Layout& L = layout_for(cfg);
  tensors_ = L.tensors;
  params_.assign(L.total, 0.0);
}

const TensorInfo& ModelWeights::tensor(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  throw std::out_of_range("no tensor named " + name);
}

bool ModelWeights::all_finite() const {
  return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

bool ModelWeights::operator==(const ModelWeights& o) const {
  return config_.same_architecture(o.config_) && params_ == o.params_;
}

namespace {
constexpr char kWeightMagic[8] = {'R', 'L', 'M', 'W', 'G', 'T', '0', '1'};
constexpr std::uint32_t kWeightVersion = 1;

nlohmann::json architecture_json(const ModelConfig& c) {
  return nlohmann::json{{"inputDim", c.inputDim},           {"latentDim", c.latentDim},
                        {"encoderLayers", c.encoderLayers}, {"attentionHeads", c.attentionHeads},
                        {"feedForwardDim", c.feedForwardDim}, {"maxSeqLen", c.maxSeqLen}};
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("weight file truncated");
  return v;
}
}  // namespace

void ModelWeights::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write weights: " + path);
  out.write(kWeightMagic, sizeof(kWeightMagic));
  write_pod(out, kWeightVersion);
  const std::string header = architecture_json(config_).dump();
  write_pod(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_pod(out, static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& t : tensors_) {
    write_pod(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_pod(out, static_cast<std::uint32_t>(t.rows));
    write_pod(out, static_cast<std::uint32_t>(t.cols));
    out.write(reinterpret_cast<const char*>(params_.data() + t.offset),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

ModelWeights ModelWeights::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open weights: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kWeightMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a weight file: " + path);
  if (read_pod<std::uint32_t>(in) != kWeightVersion) throw std::runtime_error("unsupported weight file version");
  std::string header(read_pod<std::uint32_t>(in), '\0');
  in.read(header.data(), static_cast<std::streamsize>(header.size()));
  const auto j = nlohmann::json::parse(header);
  ModelConfig cfg;
  cfg.inputDim = j.at("inputDim").get<int>();
  cfg.latentDim = j.at("latentDim").get<int>();
  cfg.encoderLayers = j.at("encoderLayers").get<int>();
  cfg.attentionHeads = j.at("attentionHeads").get<int>();
  cfg.feedForwardDim = j.at("feedForwardDim").get<int>();
  cfg.maxSeqLen = j.at("maxSeqLen").get<int>();
  ModelWeights w(cfg);
  const auto count = read_pod<std::uint32_t>(in);
  if (count != w.tensors_.size()) throw std::runtime_error("weight file tensor count mismatch");
  for (const auto& t : w.tensors_) {
    std::string name(read_pod<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto rows = read_pod<std::uint32_t>(in);
    const auto cols = read_pod<std::uint32_t>(in);
    if (name != t.name || rows != t.rows || cols != t.cols)
      throw std::runtime_error("weight file tensor mismatch at " + t.name);
    in.read(reinterpret_cast<char*>(w.params_.data() + t.offset),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw std::runtime_error("weight file truncated");
  }
  return w;
}

ModelWeights ModelWeights::load(const std::string& path, const ModelConfig& expected) {
  ModelWeights w = load(path);
  if (!w.config_.same_architecture(expected))
    throw std::runtime_error("weight file architecture does not match the configured model");
  ModelConfig merged = expected;
  w.config_ = merged;
  return w;
}

ModelWeights init_model(const ModelConfig& cfg) {
  ModelWeights w(cfg);
  const Layout& L = layout_for(cfg);
  Rng rng(derive_seed(cfg.seed, 0x1417));
  auto data = w.data();
  for (const auto& t : L.tensors) {
    double* base = data.data() + t.offset;
    const bool isGain = t.name.ends_with(".gain");
    const bool isPosition = t.name.ends_with(".position");
    const bool isBias = t.name.ends_with(".bias");
    if (isGain) {
      std::fill(base, base + t.size(), 1.0);
    } else if (isBias) {
      std::fill(base, base + t.size(), 0.0);
    } else if (isPosition) {
      for (std::size_t pos = 0; pos < t.rows; ++pos) {
        for (std::size_t i = 0; i < t.cols; ++i) {
          const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(t.cols));
          const double angle = static_cast<double>(pos) * freq;
          base[pos * t.cols + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
      }
    } else {
      for (std::size_t i = 0; i < t.size(); ++i) base[i] = kInitStd * rng.normal();
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// Batches

std::size_t PaddedBatch::length(std::size_t b) const {
  std::size_t len = 0;
  bool padding = false;
  for (Eigen::Index t = 0; t < mask.cols(); ++t) {
    if (mask(static_cast<Eigen::Index>(b), t) != 0) {
      if (padding) throw std::invalid_argument("batch mask must mark a prefix of real positions");
      ++len;
    } else {
      padding = true;
    }
  }
  return len;
}

PaddedBatch PaddedBatch::from_sequences(std::span<const std::vector<FeatureVector>> seqs,
                                        std::size_t padTo) {
  std::size_t maxLen = padTo;
  for (const auto& s : seqs) maxLen = std::max(maxLen, s.size());
  PaddedBatch b;
  b.mask = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(seqs.size()), static_cast<Eigen::Index>(maxLen));
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    RowMatrix m = RowMatrix::Zero(static_cast<Eigen::Index>(maxLen), static_cast<Eigen::Index>(kFeatureDim));
    m.topRows(static_cast<Eigen::Index>(seqs[i].size())) = to_matrix(seqs[i]);
    b.values.push_back(std::move(m));
    b.mask.row(static_cast<Eigen::Index>(i)).head(static_cast<Eigen::Index>(seqs[i].size())).setOnes();
  }
  return b;
}

ForwardResult forward(const ModelWeights& w, const PaddedBatch& batch) {
  const auto& cfg = w.config();
  const Layout& L = layout_for(cfg);
  const auto seqs = unpad(batch);
  ForwardResult r;
  r.embeddings.resize(static_cast<Eigen::Index>(seqs.size()), cfg.latentDim);
  r.reconstructions.resize(seqs.size());
  const Params p{w.data().data()};
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    SequenceCache cache;
    auto out = sequence_forward(L, cfg, p, seqs[i], cache);
    r.embeddings.row(static_cast<Eigen::Index>(i)) = out.embedding;
    r.reconstructions[i] = std::move(out.rec);
  }
  return r;
}

EmbeddingVector embed(const ModelWeights& w, std::span<const FeatureVector> segment) {
  if (segment.empty()) throw std::invalid_argument("embed: segment has no real positions");
  const auto& cfg = w.config();
  SequenceCache cache;
  auto out = sequence_forward(layout_for(cfg), cfg, Params{w.data().data()}, to_matrix(segment),
                              cache, /*decode=*/false);
  return out.embedding.transpose();
}

RowMatrix embed_all(const ModelWeights& w, std::span<const std::vector<FeatureVector>> segments,
                    int jobs) {
  RowMatrix out(static_cast<Eigen::Index>(segments.size()), w.config().latentDim);
  parallel_for(segments.size(), static_cast<std::size_t>(std::max(jobs, 1)), [&](std::size_t i) {
    out.row(static_cast<Eigen::Index>(i)) = embed(w, segments[i]).transpose();
  });
  return out;
}

std::vector<std::vector<RowMatrix>> encoder_attention(const ModelWeights& w,
                                                      std::span<const FeatureVector> seq) {
  const auto& cfg = w.config();
  SequenceCache cache;
  sequence_forward(layout_for(cfg), cfg, Params{w.data().data()}, to_matrix(seq), cache, false);
  std::vector<std::vector<RowMatrix>> out;
  for (const auto& b : cache.encoder) out.push_back(b.probs);
  return out;
}

LossComponents loss(std::span<const Reconstruction> recs, const PaddedBatch& targets,
                    const LossWeights& weights) {
  const auto seqs = unpad(targets);
  if (recs.size() != seqs.size()) throw std::invalid_argument("loss: batch size mismatch");
  const Normalizers n = normalizers_of(seqs);
  LossSums total;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (recs[i].typeLogits.rows() != seqs[i].rows())
      throw std::invalid_argument("loss: reconstruction length mismatch");
    const auto s = sequence_loss(recs[i], seqs[i], weights, n, nullptr);
    total.type += s.type;
    total.page += s.page;
    total.continuous += s.continuous;
    total.categorical += s.categorical;
  }
  return finish(total, n, weights);
}

LossComponents loss_and_gradient(const ModelWeights& w, const PaddedBatch& batch,
                                 const LossWeights& weights, std::span<double> grad) {
  if (grad.size() != w.parameter_count()) throw std::invalid_argument("gradient buffer size mismatch");
  const auto& cfg = w.config();
  return batch_loss_and_gradient(layout_for(cfg), cfg, Params{w.data().data()}, unpad(batch),
                                 weights, grad, cfg.jobs);
}

double type_accuracy(const ModelWeights& w, std::span<const std::vector<FeatureVector>> seqs) {
  const auto& cfg = w.config();
  const Layout& L = layout_for(cfg);
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto& s : seqs) {
    const RowMatrix m = to_matrix(s);
    SequenceCache cache;
    const auto out = sequence_forward(L, cfg, Params{w.data().data()}, m, cache);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      Eigen::Index pred = 0;
      out.rec.typeLogits.row(r).maxCoeff(&pred);
      if (pred == type_target(m, r)) ++correct;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  long step = 0;

  Adam(double learningRate, std::size_t n) : lr(learningRate), m(n, 0.0), v(n, 0.0) {}

  void update(std::span<double> params, std::span<const double> grad) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

struct FoldOutcome {
  ModelWeights weights;
  std::vector<EpochRecord> history;
  int bestEpoch = 0;
  bool earlyStopped = false;
  double bestLoss = 0.0;
  std::optional<ModelWeights> last;
};

FoldOutcome train_fold(const std::vector<RowMatrix>& trainSeqs, const std::vector<RowMatrix>& valSeqs,
                       const ModelConfig& cfg, int fixedEpochs, const EpochCallback& onEpoch) {
  const Layout& L = layout_for(cfg);
  ModelWeights w = init_model(cfg);
  ModelWeights best = w;
  Adam adam(cfg.learningRate, w.parameter_count());
  AlignedDoubles grad(w.parameter_count());
  Rng rng(derive_seed(cfg.seed, 0x7A1));

  FoldOutcome out{best, {}, 0, false, std::numeric_limits<double>::infinity(), {}};
  std::vector<std::size_t> order(trainSeqs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  int wait = 0;
  const int epochs = fixedEpochs > 0 ? fixedEpochs : cfg.maxEpochs;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    rng.shuffle(order);
    LossSums epochSums;
    double epochWeight = 0.0;
    LossComponents trainAvg;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batchSize)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batchSize));
      std::vector<RowMatrix> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(trainSeqs[order[i]]);
      const auto lc = batch_loss_and_gradient(L, cfg, Params{w.data().data()}, batch,
                                              cfg.lossWeights, grad, cfg.jobs);
      adam.update(w.data(), grad);
      const double weight = static_cast<double>(end - start);
      epochSums.type += lc.type * weight;
      epochSums.page += lc.page * weight;
      epochSums.continuous += lc.continuous * weight;
      epochSums.categorical += lc.categorical * weight;
      epochWeight += weight;
    }
    if (!w.all_finite()) throw std::runtime_error("training diverged: non-finite parameters");
    trainAvg.type = epochSums.type / epochWeight;
    trainAvg.page = epochSums.page / epochWeight;
    trainAvg.continuous = epochSums.continuous / epochWeight;
    trainAvg.categorical = epochSums.categorical / epochWeight;
    const auto& lw = cfg.lossWeights;
    trainAvg.total = lw.type * trainAvg.type + lw.page * trainAvg.page +
                     lw.continuous * trainAvg.continuous + lw.categorical * trainAvg.categorical;

    const auto val = evaluate_loss(L, cfg, Params{w.data().data()},
                                   valSeqs.empty() ? trainSeqs : valSeqs, cfg.lossWeights, cfg.jobs);
    if (val.total < out.bestLoss - cfg.minImprovement) {
      out.bestLoss = val.total;
      out.bestEpoch = epoch;
      best = w;
      wait = 0;
    } else {
      ++wait;
    }
    EpochRecord rec{epoch, trainAvg, val, out.bestLoss};
    out.history.push_back(rec);
    if (onEpoch) onEpoch(rec);
    if (fixedEpochs <= 0 && wait >= cfg.earlyStopPatience) {
      out.earlyStopped = true;
      break;
    }
  }
  out.weights = fixedEpochs > 0 ? w : best;
  out.last = std::move(w);
  return out;
}

}  // namespace

TrainResult train(std::span<const TrainingSequence> dataset, const ModelConfig& cfg,
                  const EpochCallback& onEpoch) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

  std::vector<std::string> participants;
  {
    std::set<std::string> seen;
    for (const auto& s : dataset)
      if (seen.insert(s.participantId).second) participants.push_back(s.participantId);
    std::sort(participants.begin(), participants.end());
  }
  auto split = [&](const std::set<std::string>& held) {
    std::pair<std::vector<RowMatrix>, std::vector<RowMatrix>> tv;
    for (const auto& s : dataset) {
      if (s.vectors.empty()) continue;
      auto m = to_matrix(s.vectors);
      if (m.rows() > cfg.maxSeqLen) m = RowMatrix(m.bottomRows(cfg.maxSeqLen));
      (held.contains(s.participantId) ? tv.second : tv.first).push_back(std::move(m));
    }
    return tv;
  };

  if (cfg.validation == ValidationMode::leaveOneParticipantOut && participants.size() >= 2) {
    TrainResult result{init_model(cfg), {}, 0, false, {}, {}};
    std::vector<int> bestEpochs;
    for (const auto& p : participants) {
      const auto [tr, va] = split({p});
      auto fold = train_fold(tr, va, cfg, 0, {});
      result.foldBestLosses.push_back(fold.bestLoss);
      bestEpochs.push_back(std::max(fold.bestEpoch, 1));
    }
    std::sort(bestEpochs.begin(), bestEpochs.end());
    const int epochs = bestEpochs[bestEpochs.size() / 2];
    const auto [all, none] = split({});
    auto final = train_fold(all, none, cfg, epochs, onEpoch);
    result.weights = std::move(final.weights);
    result.history = std::move(final.history);
    result.bestEpoch = epochs;
    result.finalWeights = std::move(final.last);
    return result;
  }

  // Single held-out participant fold.
  std::set<std::string> held;
  if (participants.size() >= 2) {
    std::vector<std::string> shuffled = participants;
    Rng rng(derive_seed(cfg.seed, 0x5EED));
    rng.shuffle(shuffled);
    const auto count = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(cfg.validationFraction * static_cast<double>(shuffled.size()))),
        1, shuffled.size() - 1);
    held.insert(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(count));
  }
  const auto [tr, va] = split(held);
  if (tr.empty()) throw std::invalid_argument("train: no training sequences after the split");
  auto fold = train_fold(tr, va, cfg, 0, onEpoch);
  return TrainResult{std::move(fold.weights), std::move(fold.history), fold.bestEpoch,
                     fold.earlyStopped, {}, std::move(fold.last)};
}

std::string format_history(std::span<const EpochRecord> history) {
  std::ostringstream out;
  out << "epoch\ttrain_total\ttrain_type\ttrain_page\ttrain_cont\ttrain_cat\tval_total\tval_type\t"
         "val_page\tval_cont\tval_cat\tbest_val\n";
  out << std::setprecision(9);
  for (const auto& r : history) {
    out << r.epoch << '\t' << r.train.total << '\t' << r.train.type << '\t' << r.train.page << '\t'
        << r.train.continuous << '\t' << r.train.categorical << '\t' << r.validation.total << '\t'
        << r.validation.type << '\t' << r.validation.page << '\t' << r.validation.continuous << '\t'
        << r.validation.categorical << '\t' << r.bestValidation << '\n';
  }
  return out.str();
}

}  // namespace relimine
