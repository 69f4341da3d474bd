#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "cohere/common.hpp"
#include "cohere/corpus.hpp"
#include "cohere/encoder.hpp"
#include "cohere/losses.hpp"
#include "cohere/sampling.hpp"

namespace cohere {

enum class TrainMode { Siamese, Quadruplet, Sfa };

inline std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Siamese: return "siamese";
    case TrainMode::Quadruplet: return "quadruplet";
    case TrainMode::Sfa: return "sfa";
  }
  return "quadruplet";
}

inline TrainMode parse_train_mode(std::string_view s) {
  if (s == "siamese") return TrainMode::Siamese;
  if (s == "quadruplet") return TrainMode::Quadruplet;
  if (s == "sfa") return TrainMode::Sfa;
  throw ValidationError("unknown training mode: " + std::string(s));
}

struct LrSchedule {
  double lr0 = 1e-3;
  double gamma = 0.5;
  int step = 0;  // epochs per decay; <= 0 means no decay
};

inline double lr_at(const LrSchedule& schedule, int epoch) {
  if (schedule.lr0 <= 0.0) throw ValidationError("learning rate must be positive");
  if (schedule.gamma <= 0.0 || schedule.gamma > 1.0) {
    throw ValidationError("lr decay factor must lie in (0, 1]");
  }
  if (epoch < 0) throw ValidationError("epoch must be >= 0");
  if (schedule.step <= 0) return schedule.lr0;
  return schedule.lr0 * std::pow(schedule.gamma, epoch / schedule.step);
}

struct TrainConfig {
  TrainMode mode = TrainMode::Quadruplet;
  double lambda = 5e-4;  // weight decay
  double lr0 = 1e-3;
  double gamma = 0.5;
  int lr_step = 0;  // <= 0: epochs / 3
  int batch_pairs = 60;
  int batch_quads = 20;
  int epochs = 30;
  int tuples_per_epoch = 10000;
  int w = 1;   // neighbor window
  int n = 20;  // non-neighbor offset (quadruplet)
  double delta = 1.0;
  double alpha = 0.5;
  double positive_fraction = 0.5;
  long long mu_gap_min = -1;  // MU negative gap; < 0 picks 2n
  std::uint64_t seed = 0;
};

inline void validate_train_config(const TrainConfig& cfg) {
  if (cfg.lambda < 0.0) throw ValidationError("weight decay must be >= 0");
  if (cfg.lr0 <= 0.0) throw ValidationError("learning rate must be positive");
  if (cfg.batch_pairs < 1 || cfg.batch_quads < 1) throw ValidationError("batch size must be >= 1");
  if (cfg.epochs < 0) throw ValidationError("epochs must be >= 0");
  if (cfg.tuples_per_epoch < 1) throw ValidationError("tuples per epoch must be >= 1");
  if (cfg.w < 1) throw ValidationError("neighbor window w must be >= 1");
  if (cfg.mode == TrainMode::Quadruplet && cfg.n <= cfg.w) {
    throw ValidationError("non-neighbor offset n must exceed window w");
  }
  if (cfg.delta <= 0.0) throw ValidationError("pair margin must be positive");
  if (cfg.alpha <= 0.0) throw ValidationError("global margin must be positive");
  if (cfg.positive_fraction <= 0.0 || cfg.positive_fraction >= 1.0) {
    throw ValidationError("positive fraction must lie in (0, 1)");
  }
}

struct TrainReport {
  TrainMode mode = TrainMode::Quadruplet;
  std::uint64_t seed = 0;
  std::vector<double> epoch_mean_loss;
  EncoderParams final_params;
};

/// In-place SGD update p <- p - lr * (g + lambda * p); biases skip the decay
/// term. Rejects non-finite gradients.
inline void sgd_step(EncoderParams& params, const GradientSet& grads, double lr, double lambda) {
  if (grads.size() != params.layers.size()) {
    throw ValidationError("gradient set does not match parameter layout");
  }
  if (lambda < 0.0) throw ValidationError("weight decay must be >= 0");
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& block = params.layers[i];
    if (block.empty()) continue;
    const auto& g = grads[i];
    if (g.weight.rows() != block.weight.rows() || g.weight.cols() != block.weight.cols() ||
        g.bias.size() != block.bias.size()) {
      throw ValidationError("gradient shape mismatch at layer " + std::to_string(i));
    }
    if (!g.weight.allFinite() || !g.bias.allFinite()) {
      throw ComputeError("non-finite gradient at layer " + std::to_string(i));
    }
    block.weight -= lr * (g.weight + lambda * block.weight);
    block.bias -= lr * g.bias;
  }
}

namespace detail {

inline const Frame& ref_frame(const FrameCorpus& corpus, FrameRef ref) {
  return corpus.video(ref.video).frames[ref.frame];
}

inline long long resolve_mu_gap(const TrainConfig& cfg) {
  return cfg.mu_gap_min >= 0 ? cfg.mu_gap_min : 2LL * cfg.n;
}

}  // namespace detail

/// Minimizes the regularized coherence objective with plain mini-batch SGD.
/// The run is fully determined by (config, seed); labels are never consulted.
inline TrainReport train_unsupervised(const FrameCorpus& corpus, const EncoderSpec& spec,
                                      const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (!(spec.input == corpus.frame_shape())) {
    throw ValidationError("encoder input " + to_string(spec.input) +
                          " does not match corpus frames " + to_string(corpus.frame_shape()));
  }

  TrainReport report;
  report.mode = cfg.mode;
  report.seed = cfg.seed;
  report.final_params = init_params(spec, cfg.seed);
  if (cfg.epochs == 0) return report;

  EncoderParams& params = report.final_params;
  Rng sample_rng(substream(cfg.seed, 1));
  const LossConfig loss_cfg{cfg.delta, cfg.alpha};
  LrSchedule schedule{cfg.lr0, cfg.gamma,
                      cfg.lr_step > 0 ? cfg.lr_step : std::max(1, cfg.epochs / 3)};
  const long long mu_gap = detail::resolve_mu_gap(cfg);
  const bool pair_mode = cfg.mode != TrainMode::Quadruplet;
  const int batch = pair_mode ? cfg.batch_pairs : cfg.batch_quads;
  const int members = pair_mode ? 2 : 4;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(schedule, epoch);
    std::vector<PairSample> pairs;
    std::vector<QuadSample> quads;
    switch (cfg.mode) {
      case TrainMode::Siamese:
        pairs = sample_pairs(corpus, cfg.w, static_cast<std::size_t>(cfg.tuples_per_epoch),
                             cfg.positive_fraction, sample_rng, mu_gap);
        break;
      case TrainMode::Sfa:
        pairs = sample_pairs_sfa(corpus, cfg.w, static_cast<std::size_t>(cfg.tuples_per_epoch),
                                 cfg.positive_fraction, sample_rng);
        break;
      case TrainMode::Quadruplet:
        quads = sample_quads(corpus, cfg.w, cfg.n, static_cast<std::size_t>(cfg.tuples_per_epoch),
                             sample_rng, mu_gap);
        break;
    }
    const std::size_t total = pair_mode ? pairs.size() : quads.size();

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < total; start += static_cast<std::size_t>(batch)) {
      const std::size_t count = std::min(static_cast<std::size_t>(batch), total - start);

      std::vector<ActivationTrace> traces(count * static_cast<std::size_t>(members));
      parallel_for(count * static_cast<std::size_t>(members), [&](std::size_t slot) {
        const std::size_t tuple = start + slot / static_cast<std::size_t>(members);
        const std::size_t member = slot % static_cast<std::size_t>(members);
        FrameRef ref;
        if (pair_mode) {
          ref = member == 0 ? pairs[tuple].anchor : pairs[tuple].other;
        } else {
          const auto& q = quads[tuple];
          ref = member == 0   ? q.anchor
                : member == 1 ? q.neighbor
                : member == 2 ? q.nonneighbor
                              : q.negative;
        }
        forward_traced(params, detail::ref_frame(corpus, ref), Tap::Final, traces[slot]);
      });

      GradientSet accum = zero_gradients(params);
      for (std::size_t t = 0; t < count; ++t) {
        const std::size_t base = t * static_cast<std::size_t>(members);
        if (pair_mode) {
          const auto& p = pairs[start + t];
          const auto r = loss_siamese(traces[base].embedding, traces[base + 1].embedding,
                                      p.positive, loss_cfg);
          epoch_loss += r.loss;
          backward_into(params, traces[base], r.grad_anchor, accum);
          backward_into(params, traces[base + 1], r.grad_other, accum);
        } else {
          const auto r = loss_quadruplet(traces[base].embedding, traces[base + 1].embedding,
                                         traces[base + 2].embedding, traces[base + 3].embedding,
                                         loss_cfg);
          epoch_loss += r.loss;
          backward_into(params, traces[base], r.grad_anchor, accum);
          backward_into(params, traces[base + 1], r.grad_neighbor, accum);
          backward_into(params, traces[base + 2], r.grad_nonneighbor, accum);
          backward_into(params, traces[base + 3], r.grad_negative, accum);
        }
      }
      const double scale = 1.0 / static_cast<double>(count);
      for (auto& g : accum) {
        if (g.weight.size() > 0) g.weight *= scale;
        if (g.bias.size() > 0) g.bias *= scale;
      }
      sgd_step(params, accum, lr, cfg.lambda);
    }

    const double mean_loss = epoch_loss / static_cast<double>(total);
    if (!std::isfinite(mean_loss) || mean_loss > 1e6) {
      throw ComputeError("training diverged at epoch " + std::to_string(epoch) +
                         " (mean loss " + std::to_string(mean_loss) + ")");
    }
    report.epoch_mean_loss.push_back(mean_loss);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Supervised head fine-tuning on top of a (possibly pretrained) encoder.
// ---------------------------------------------------------------------------

struct LabeledSet {
  std::vector<Frame> frames;
  std::vector<int> labels;
  int num_classes = 0;
};

inline void validate_labeled_set(const LabeledSet& set, const std::string& what) {
  if (set.frames.size() != set.labels.size()) {
    throw ValidationError(what + ": frame/label count mismatch");
  }
  if (set.num_classes < 2) throw ValidationError(what + ": needs >= 2 classes");
  for (const int y : set.labels) {
    if (y < 0 || y >= set.num_classes) {
      throw ValidationError(what + ": label " + std::to_string(y) + " out of range");
    }
  }
}

struct HeadParams {
  Eigen::MatrixXd weight;  // C x D
  Eigen::VectorXd bias;    // C
};

struct FinetuneConfig {
  bool freeze_encoder = true;
  int epochs = 50;
  double lr = 0.05;
  double lambda = 0.0;
  int batch = 10;
  Tap tap = Tap::Penultimate;
  std::uint64_t seed = 0;
};

struct FinetuneResult {
  HeadParams head;
  EncoderParams encoder;  // updated when the encoder is unfrozen
  double train_accuracy = 0.0;
  std::optional<double> heldout_accuracy;
};

namespace detail {

inline int argmax(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  v.maxCoeff(&best);
  return static_cast<int>(best);
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::VectorXd shifted = logits.array() - logits.maxCoeff();
  Eigen::VectorXd p = shifted.array().exp();
  return p / p.sum();
}

}  // namespace detail

inline double head_accuracy(const EncoderParams& encoder, const HeadParams& head,
                            const LabeledSet& set, Tap tap) {
  if (set.frames.empty()) return 0.0;
  const auto embeddings = batch_forward(encoder, set.frames, tap);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < set.frames.size(); ++i) {
    const Eigen::VectorXd logits = head.weight * embeddings[i] + head.bias;
    if (detail::argmax(logits) == set.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(set.frames.size());
}

/// Trains a softmax classifier head (zero-initialized) with cross-entropy.
/// With freeze_encoder the encoder is read-only; otherwise gradients flow
/// through it at the configured tap.
inline FinetuneResult finetune_head(const EncoderParams& encoder, const LabeledSet& train,
                                    const LabeledSet& heldout, const FinetuneConfig& cfg) {
  validate_labeled_set(train, "training set");
  if (train.frames.empty()) throw ValidationError("training set is empty");
  if (!heldout.frames.empty()) {
    validate_labeled_set(heldout, "held-out set");
    if (heldout.num_classes != train.num_classes) {
      throw ValidationError("held-out set class count differs from training set");
    }
  }
  if (cfg.epochs < 0) throw ValidationError("epochs must be >= 0");
  if (cfg.lr <= 0.0) throw ValidationError("learning rate must be positive");
  if (cfg.batch < 1) throw ValidationError("batch size must be >= 1");
  std::vector<bool> seen(static_cast<std::size_t>(train.num_classes), false);
  for (const int y : train.labels) seen[static_cast<std::size_t>(y)] = true;
  for (int c = 0; c < train.num_classes; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) {
      throw ValidationError("class " + std::to_string(c) + " absent from training set");
    }
  }

  FinetuneResult result;
  result.encoder = encoder;
  const int dim = embedding_dim(encoder.spec, cfg.tap);
  result.head.weight = Eigen::MatrixXd::Zero(train.num_classes, dim);
  result.head.bias = Eigen::VectorXd::Zero(train.num_classes);

  Rng rng(substream(cfg.seed, 2));
  std::vector<std::size_t> order(train.frames.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t count =
          std::min(static_cast<std::size_t>(cfg.batch), order.size() - start);

      std::vector<ActivationTrace> traces(count);
      parallel_for(count, [&](std::size_t i) {
        forward_traced(result.encoder, train.frames[order[start + i]], cfg.tap, traces[i]);
      });

      Eigen::MatrixXd dW = Eigen::MatrixXd::Zero(result.head.weight.rows(), dim);
      Eigen::VectorXd db = Eigen::VectorXd::Zero(result.head.bias.size());
      GradientSet enc_grads = cfg.freeze_encoder ? GradientSet{} : zero_gradients(result.encoder);
      for (std::size_t i = 0; i < count; ++i) {
        const int y = train.labels[order[start + i]];
        const Eigen::VectorXd probs =
            detail::softmax(result.head.weight * traces[i].embedding + result.head.bias);
        Eigen::VectorXd dz = probs;
        dz[y] -= 1.0;
        dW.noalias() += dz * traces[i].embedding.transpose();
        db += dz;
        if (!cfg.freeze_encoder) {
          backward_into(result.encoder, traces[i], result.head.weight.transpose() * dz,
                        enc_grads);
        }
      }
      const double scale = 1.0 / static_cast<double>(count);
      if (!dW.allFinite() || !db.allFinite()) throw ComputeError("non-finite head gradient");
      result.head.weight -= cfg.lr * (scale * dW + cfg.lambda * result.head.weight);
      result.head.bias -= cfg.lr * scale * db;
      if (!cfg.freeze_encoder) {
        for (auto& g : enc_grads) {
          if (g.weight.size() > 0) g.weight *= scale;
          if (g.bias.size() > 0) g.bias *= scale;
        }
        sgd_step(result.encoder, enc_grads, cfg.lr, cfg.lambda);
      }
    }
  }

  result.train_accuracy = head_accuracy(result.encoder, result.head, train, cfg.tap);
  if (!heldout.frames.empty()) {
    result.heldout_accuracy = head_accuracy(result.encoder, result.head, heldout, cfg.tap);
  }
  return result;
}

}  // namespace cohere
