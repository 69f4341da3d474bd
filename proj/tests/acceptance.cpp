// Acceptance gate: one self-checking experiment per shipping criterion.
// Prints one PASS/FAIL line per criterion; exits nonzero if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <cohere/cohere.hpp>

using namespace cohere;

namespace {

// ---------------------------------------------------------------------------
// pinned tolerances and experiment constants
// ---------------------------------------------------------------------------

constexpr double kGradRelTol = 1e-4;        // analytic vs central differences
constexpr int kGradInstances = 56;          // >= 50 kink-free instances
constexpr double kGradKinkMargin = 1.5e-3;  // distance from ReLU/pool kinks
constexpr double kGradBranchMargin = 3e-3;  // distance from hinge/margin branch points
constexpr double kGradStep = 1e-4;          // central difference half-step
constexpr double kGradTimeBudget = 60.0;    // seconds

constexpr double kLossTol = 1e-9;
constexpr double kCeHandTol = 1e-6;
constexpr double kCeRandomWindow = 0.1;     // bits around log2(C)
constexpr double kUncertaintyTol = 0.01;
constexpr double kOrderingMargin = 0.05;    // bits, quadruplet vs each baseline
constexpr double kExperimentBudget = 600.0; // seconds for criteria 5 and 6
constexpr double kRowNormTol = 1e-10;

// Ordering experiment: 5 classes, 4 train + 2 test videos each.
struct OrderingSetup {
  int classes = 5;
  int train_videos_per_class = 4;
  int test_videos_per_class = 2;
  int frames_per_video = 30;
  FrameShape shape{1, 16, 16};
  std::uint64_t corpus_seed = 1302;
  double noise = 0.05;
  double speed = 0.6;

  std::string arch =
      "in:1x16x16,conv:6x3,relu,pool:2,conv:12x3,relu,pool:2,dense:48,relu,dense:24,tap:final";
  Tap eval_tap = Tap::Final;
  std::uint64_t train_seed = 11;

  int epochs = 12;
  std::size_t tuples_per_epoch = 2000;
  double lr0 = 0.01;
  int n = 20;

  int repeats = 10;
  std::uint64_t eval_seed = 7;
};

struct Result {
  bool pass = false;
  std::string details;
};

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream ss;
  ss.precision(precision);
  ss << std::fixed << v;
  return ss.str();
}

// ---------------------------------------------------------------------------
// criterion 1: gradient agreement through both losses and every layer kind
// ---------------------------------------------------------------------------

Frame random_frame(const FrameShape& shape, Rng& rng) {
  Frame f;
  f.pixels.resize(shape.size());
  for (auto& p : f.pixels) p = static_cast<float>(rng.uniform(0.05, 0.95));
  return f;
}

bool trace_clear_of_kinks(const EncoderSpec& spec, const ActivationTrace& trace, double margin) {
  for (int i = 0; i <= trace.tap_end; ++i) {
    const auto& desc = spec.layers[static_cast<std::size_t>(i)];
    const auto& slot = trace.layers[static_cast<std::size_t>(i)];
    if (desc.kind == LayerKind::ReLU) {
      for (Eigen::Index j = 0; j < slot.input.size(); ++j) {
        if (std::abs(slot.input[j]) < margin) return false;
      }
    } else if (desc.kind == LayerKind::MaxPool) {
      const int p = desc.window;
      const auto& s = slot.in_shape;
      const int ho = s.height / p, wo = s.width / p;
      for (int c = 0; c < s.channels; ++c) {
        for (int yo = 0; yo < ho; ++yo) {
          for (int xo = 0; xo < wo; ++xo) {
            const int win = slot.pool_argmax[static_cast<std::size_t>((c * ho + yo) * wo + xo)];
            for (int dy = 0; dy < p; ++dy) {
              for (int dx = 0; dx < p; ++dx) {
                const int idx = (c * s.height + yo * p + dy) * s.width + xo * p + dx;
                if (idx != win && slot.input[win] - slot.input[idx] < margin) return false;
              }
            }
          }
        }
      }
    }
  }
  return true;
}

struct LossInstance {
  EncoderParams params;
  std::vector<Frame> frames;   // 2 for pairs, 4 for quadruplets
  bool quadruplet = false;
  bool positive = false;       // pair polarity
  LossConfig loss;
};

double instance_loss(const LossInstance& inst) {
  std::vector<Eigen::VectorXd> e;
  for (const auto& f : inst.frames) e.push_back(forward(inst.params, f, Tap::Final));
  if (inst.quadruplet) {
    return loss_quadruplet(e[0], e[1], e[2], e[3], inst.loss).loss;
  }
  return loss_siamese(e[0], e[1], inst.positive, inst.loss).loss;
}

/// Builds an instance whose loss surface is locally linear in the parameters:
/// all ReLU/pool decisions and the hinge/margin branches sit clear of kinks.
bool build_clear_instance(const EncoderSpec& spec, std::uint64_t seed, bool quadruplet,
                          bool positive, LossInstance& out) {
  for (std::uint64_t attempt = 0; attempt < 300; ++attempt) {
    const std::uint64_t s = substream(seed, attempt);
    Rng rng(s);
    LossInstance inst;
    inst.params = init_params(spec, s);
    inst.quadruplet = quadruplet;
    inst.positive = positive;
    const int members = quadruplet ? 4 : 2;
    std::vector<Eigen::VectorXd> e;
    bool clear = true;
    for (int m = 0; m < members && clear; ++m) {
      inst.frames.push_back(random_frame(spec.input, rng));
      ActivationTrace trace;
      e.push_back(forward_traced(inst.params, inst.frames.back(), Tap::Final, trace));
      clear = trace_clear_of_kinks(spec, trace, kGradKinkMargin);
    }
    if (!clear) continue;

    if (quadruplet) {
      const auto r = loss_quadruplet(e[0], e[1], e[2], e[3], inst.loss);
      const double hinge = r.d_nonneighbor - r.d_negative + inst.loss.alpha;
      if (r.d_neighbor < kGradBranchMargin || r.d_nonneighbor < kGradBranchMargin ||
          r.d_negative < kGradBranchMargin || std::abs(hinge) < kGradBranchMargin) {
        continue;
      }
    } else {
      const double d = euclid(e[0], e[1]);
      if (d < kGradBranchMargin ||
          (!positive && std::abs(inst.loss.delta - d) < kGradBranchMargin)) {
        continue;
      }
    }
    out = std::move(inst);
    return true;
  }
  return false;
}

GradientSet analytic_gradients(const LossInstance& inst) {
  std::vector<ActivationTrace> traces(inst.frames.size());
  std::vector<Eigen::VectorXd> e;
  for (std::size_t m = 0; m < inst.frames.size(); ++m) {
    e.push_back(forward_traced(inst.params, inst.frames[m], Tap::Final, traces[m]));
  }
  GradientSet grads = zero_gradients(inst.params);
  if (inst.quadruplet) {
    const auto r = loss_quadruplet(e[0], e[1], e[2], e[3], inst.loss);
    backward_into(inst.params, traces[0], r.grad_anchor, grads);
    backward_into(inst.params, traces[1], r.grad_neighbor, grads);
    backward_into(inst.params, traces[2], r.grad_nonneighbor, grads);
    backward_into(inst.params, traces[3], r.grad_negative, grads);
  } else {
    const auto r = loss_siamese(e[0], e[1], inst.positive, inst.loss);
    backward_into(inst.params, traces[0], r.grad_anchor, grads);
    backward_into(inst.params, traces[1], r.grad_other, grads);
  }
  return grads;
}

Result criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  // Between them these two stacks exercise conv, relu, pool, and dense.
  const std::vector<std::string> archs = {
      "in:1x6x6,conv:2x3,relu,pool:2,dense:6,tap:final",
      "in:1x6x6,conv:3x3,relu,conv:2x3,relu,pool:3,dense:8,relu,dense:4,tap:final",
  };

  int instances = 0;
  double worst = 0.0;
  for (int i = 0; i < kGradInstances; ++i) {
    const EncoderSpec spec = parse_encoder_spec(archs[static_cast<std::size_t>(i) % archs.size()]);
    const bool quadruplet = (i % 2) == 0;
    const bool positive = (i % 4) == 1;
    LossInstance inst;
    if (!build_clear_instance(spec, 9000 + static_cast<std::uint64_t>(i) * 131, quadruplet,
                              positive, inst)) {
      return {false, "could not build a kink-free instance " + std::to_string(i)};
    }
    const GradientSet analytic = analytic_gradients(inst);
    for (std::size_t layer = 0; layer < inst.params.layers.size(); ++layer) {
      auto& block = inst.params.layers[layer];
      const auto check = [&](double& value, double analytic_g) {
        const double saved = value;
        value = saved + kGradStep;
        const double up = instance_loss(inst);
        value = saved - kGradStep;
        const double down = instance_loss(inst);
        value = saved;
        const double fd = (up - down) / (2.0 * kGradStep);
        const double rel =
            std::abs(analytic_g - fd) / std::max({std::abs(analytic_g), std::abs(fd), 1e-5});
        worst = std::max(worst, rel);
      };
      for (Eigen::Index r = 0; r < block.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < block.weight.cols(); ++c) {
          check(block.weight(r, c), analytic[layer].weight(r, c));
        }
      }
      for (Eigen::Index b = 0; b < block.bias.size(); ++b) {
        check(block.bias[b], analytic[layer].bias[b]);
      }
    }
    ++instances;
  }
  const double elapsed = seconds_since(t0);
  const bool pass = instances >= 50 && worst < kGradRelTol && elapsed < kGradTimeBudget;
  return {pass, std::to_string(instances) + " instances, worst rel err " + fmt(worst, 8) +
                    " (tol " + fmt(kGradRelTol, 8) + "), " + fmt(elapsed, 1) + "s"};
}

// ---------------------------------------------------------------------------
// criterion 2: loss value oracles
// ---------------------------------------------------------------------------

Eigen::VectorXd vec2(double x, double y) {
  Eigen::VectorXd v(2);
  v << x, y;
  return v;
}

Result criterion_loss_oracles() {
  const LossConfig cfg;  // delta 1, alpha 0.5
  double worst = 0.0;
  const auto track = [&worst](double got, double want) {
    worst = std::max(worst, std::abs(got - want));
  };

  // Quadruplet, inactive hinge: only the neighbor term survives.
  track(loss_quadruplet(vec2(0, 0), vec2(0.1, 0), vec2(0.2, 0), vec2(1.2, 0), cfg).loss, 0.1);
  // Quadruplet, active hinge: 0.2 + (0.8 - 0.5 + 0.5).
  track(loss_quadruplet(vec2(0, 0), vec2(0.2, 0), vec2(0.8, 0), vec2(0.5, 0), cfg).loss, 1.0);
  // Quadruplet, all four frames identical: loss collapses to the margin.
  track(loss_quadruplet(vec2(0.3, 0.3), vec2(0.3, 0.3), vec2(0.3, 0.3), vec2(0.3, 0.3), cfg).loss,
        cfg.alpha);

  // Contrastive pair values around the unit margin.
  track(loss_siamese(vec2(0, 0), vec2(0.6, 0), true, cfg).loss, 0.6);
  track(loss_siamese(vec2(0, 0), vec2(0.6, 0), false, cfg).loss, 0.4);
  track(loss_siamese(vec2(0, 0), vec2(1.5, 0), false, cfg).loss, 0.0);
  track(loss_siamese(vec2(0.2, 0.7), vec2(0.2, 0.7), false, cfg).loss, 1.0);
  LossConfig wide;
  wide.delta = 2.0;
  track(loss_siamese(vec2(0, 0), vec2(0.6, 0), false, wide).loss, 1.4);

  return {worst < kLossTol, "worst abs err " + fmt(worst, 12) + " (tol 1e-9)"};
}

// ---------------------------------------------------------------------------
// criterion 3: conditional entropy oracle suite
// ---------------------------------------------------------------------------

Result criterion_ce_suite() {
  std::vector<std::string> failures;

  const std::vector<int> handc{0, 0, 0, 1, 1, 1};
  const double hand = conditional_entropy(handc, {{0, 0, 0, 0, 1, 1}, 2});
  if (std::abs(hand - 0.5408520829727552) > kCeHandTol) {
    failures.push_back("hand case " + fmt(hand, 8));
  }

  if (conditional_entropy({0, 0, 1, 1}, {{0, 0, 1, 1}, 2}) != 0.0) {
    failures.push_back("pure clusters not zero");
  }

  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 5;
    std::vector<int> classes(120);
    for (auto& c : classes) c = static_cast<int>(rng.index(4));
    ClusterAssignment a;
    a.k = k;
    a.labels.resize(classes.size());
    for (auto& l : a.labels) l = static_cast<int>(rng.index(k));
    std::vector<int> perm(k);
    for (int i = 0; i < k; ++i) perm[static_cast<std::size_t>(i)] = i;
    rng.shuffle(perm);
    ClusterAssignment b = a;
    for (auto& l : b.labels) l = perm[static_cast<std::size_t>(l)];
    if (conditional_entropy(classes, a) != conditional_entropy(classes, b)) {
      failures.push_back("permutation changed bits at trial " + std::to_string(trial));
      break;
    }
  }

  for (int trial = 0; trial < 100; ++trial) {
    Rng r(substream(600, static_cast<std::uint64_t>(trial)));
    std::vector<int> classes(150);
    for (auto& c : classes) c = static_cast<int>(r.index(5));
    ClusterAssignment coarse;
    coarse.k = 3;
    coarse.labels.resize(classes.size());
    for (auto& l : coarse.labels) l = static_cast<int>(r.index(3));
    ClusterAssignment fine = coarse;
    fine.k = 4;
    const int victim = static_cast<int>(r.index(3));
    for (auto& l : fine.labels) {
      if (l == victim && r.uniform() < 0.5) l = 3;
    }
    if (conditional_entropy(classes, fine) > conditional_entropy(classes, coarse) + 1e-12) {
      failures.push_back("refinement raised entropy at trial " + std::to_string(trial));
      break;
    }
  }

  for (const int c : {5, 10}) {
    std::vector<int> classes;
    for (int cls = 0; cls < c; ++cls) classes.insert(classes.end(), 200, cls);
    Rng r(static_cast<std::uint64_t>(70 + c));
    ClusterAssignment a;
    a.k = c;
    a.labels.resize(classes.size());
    for (auto& l : a.labels) l = static_cast<int>(r.index(static_cast<std::size_t>(c)));
    const double ce = conditional_entropy(classes, a);
    if (std::abs(ce - std::log2(c)) > kCeRandomWindow) {
      failures.push_back("random assignment C=" + std::to_string(c) + " ce " + fmt(ce, 4));
    }
  }

  if (failures.empty()) return {true, "hand case, purity, permutation, refinement, random all hold"};
  std::string joined;
  for (const auto& f : failures) joined += (joined.empty() ? "" : "; ") + f;
  return {false, joined};
}

// ---------------------------------------------------------------------------
// criterion 4: uncertainty-reduction arithmetic
// ---------------------------------------------------------------------------

Result criterion_uncertainty() {
  const double a = uncertainty_reduction(6.31);
  const double b = uncertainty_reduction(3.39);
  const bool pass = std::abs(a - 79.34) <= kUncertaintyTol && std::abs(b - 10.48) <= kUncertaintyTol;
  return {pass, "2^6.31 = " + fmt(a, 4) + ", 2^3.39 = " + fmt(b, 4) + " (tol 0.01)"};
}

// ---------------------------------------------------------------------------
// criteria 5 and 6: ordering experiments on the synthetic corpus
// ---------------------------------------------------------------------------

struct SplitCorpora {
  FrameCorpus train;
  FrameCorpus test;
  FrameCorpus full;
};

SplitCorpora build_ordering_corpora(const OrderingSetup& setup) {
  SynthConfig cfg;
  cfg.classes = setup.classes;
  cfg.videos_per_class = setup.train_videos_per_class + setup.test_videos_per_class;
  cfg.frames_per_video = setup.frames_per_video;
  cfg.shape = setup.shape;
  cfg.seed = setup.corpus_seed;
  cfg.noise = setup.noise;
  cfg.speed = setup.speed;
  FrameCorpus full = generate_synthetic(cfg);

  std::vector<Video> train_videos, test_videos;
  std::vector<int> test_labels;
  for (int c = 0; c < setup.classes; ++c) {
    for (int v = 0; v < cfg.videos_per_class; ++v) {
      const std::size_t idx = static_cast<std::size_t>(c * cfg.videos_per_class + v);
      if (v < setup.train_videos_per_class) {
        train_videos.push_back(full.video(idx));
      } else {
        test_videos.push_back(full.video(idx));
        test_labels.push_back(c);
      }
    }
  }
  LabelTable test_table =
      LabelTable::per_video(test_labels, full.eval_labels().class_names(), test_videos);
  FrameCorpus train(setup.shape, std::move(train_videos));  // deliberately unlabeled
  FrameCorpus test(setup.shape, std::move(test_videos), std::move(test_table));
  return {std::move(train), std::move(test), std::move(full)};
}

struct OrderingOutcome {
  double random_km = 0, quad_km = 0, sfa_km = 0;
  double random_sp = 0, quad_sp = 0, sfa_sp = 0;
  TrainReport quad_report;
};

OrderingOutcome run_ordering_experiment(const OrderingSetup& setup, const SplitCorpora& corpora) {
  const EncoderSpec spec = parse_encoder_spec(setup.arch);

  TrainConfig quad_cfg;
  quad_cfg.mode = TrainMode::Quadruplet;
  quad_cfg.epochs = setup.epochs;
  quad_cfg.tuples_per_epoch = setup.tuples_per_epoch;
  quad_cfg.batch_quads = 20;
  quad_cfg.n = setup.n;
  quad_cfg.lr0 = setup.lr0;
  quad_cfg.seed = setup.train_seed;

  TrainConfig sfa_cfg = quad_cfg;
  sfa_cfg.mode = TrainMode::Sfa;
  sfa_cfg.batch_pairs = 40;

  const EncoderParams random_params = init_params(spec, setup.train_seed);
  const TrainReport quad = train_unsupervised(corpora.train, spec, quad_cfg);
  const TrainReport sfa = train_unsupervised(corpora.train, spec, sfa_cfg);

  DiscoveryConfig dcfg;
  dcfg.k = setup.classes;
  dcfg.repeats = setup.repeats;
  dcfg.tap = setup.eval_tap;
  dcfg.granularity = Granularity::Frames;
  dcfg.seed = setup.eval_seed;

  OrderingOutcome out;
  out.quad_report = quad;
  dcfg.algorithm = ClusterAlgo::KMeans;
  out.random_km = evaluate_discovery(random_params, corpora.test, dcfg).ce_mean;
  out.quad_km = evaluate_discovery(quad.final_params, corpora.test, dcfg).ce_mean;
  out.sfa_km = evaluate_discovery(sfa.final_params, corpora.test, dcfg).ce_mean;
  dcfg.algorithm = ClusterAlgo::Spectral;
  out.random_sp = evaluate_discovery(random_params, corpora.test, dcfg).ce_mean;
  out.quad_sp = evaluate_discovery(quad.final_params, corpora.test, dcfg).ce_mean;
  out.sfa_sp = evaluate_discovery(sfa.final_params, corpora.test, dcfg).ce_mean;
  return out;
}

Result criterion_ordering(const OrderingOutcome& o, double elapsed) {
  const bool km_ok = o.quad_km <= o.random_km - kOrderingMargin &&
                     o.quad_km <= o.sfa_km - kOrderingMargin;
  const bool sp_ok = o.quad_sp <= o.random_sp - kOrderingMargin &&
                     o.quad_sp <= o.sfa_sp - kOrderingMargin;
  const bool pass = km_ok && sp_ok && elapsed < kExperimentBudget;
  return {pass, "kmeans CE quad/sfa/random " + fmt(o.quad_km, 3) + "/" + fmt(o.sfa_km, 3) + "/" +
                    fmt(o.random_km, 3) + ", spectral " + fmt(o.quad_sp, 3) + "/" +
                    fmt(o.sfa_sp, 3) + "/" + fmt(o.random_sp, 3) + " (margin 0.05), " +
                    fmt(elapsed, 1) + "s"};
}

Result criterion_transfer(const OrderingSetup& setup, const SplitCorpora& corpora,
                          const EncoderParams& pretrained) {
  const auto t0 = std::chrono::steady_clock::now();
  const EncoderSpec spec = parse_encoder_spec(setup.arch);

  // Both arms fine-tune the whole network from their respective inits.
  FinetuneConfig fcfg;
  fcfg.freeze_encoder = false;
  fcfg.epochs = 120;
  fcfg.lr = 0.02;
  fcfg.batch = 5;
  fcfg.tap = Tap::Penultimate;

  std::vector<double> uplifts;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const cli::TransferSplit split = cli::transfer_split(corpora.full, 5, seed);
    fcfg.seed = seed;
    const FinetuneResult random_arm =
        finetune_head(init_params(spec, substream(seed, 21)), split.train, split.heldout, fcfg);
    const FinetuneResult pre_arm = finetune_head(pretrained, split.train, split.heldout, fcfg);
    uplifts.push_back(pre_arm.heldout_accuracy.value() - random_arm.heldout_accuracy.value());
  }
  std::sort(uplifts.begin(), uplifts.end());
  const double median = uplifts[uplifts.size() / 2];
  const double elapsed = seconds_since(t0);

  std::string list;
  for (const double u : uplifts) list += (list.empty() ? "" : ", ") + fmt(u, 3);
  const bool pass = median >= 0.0 && elapsed < kExperimentBudget;
  return {pass, "median uplift " + fmt(median, 3) + " over paired seeds {" + list + "}, " +
                    fmt(elapsed, 1) + "s"};
}

// ---------------------------------------------------------------------------
// criterion 7: byte-identical reruns
// ---------------------------------------------------------------------------

Result criterion_determinism() {
  SynthConfig scfg;
  scfg.classes = 2;
  scfg.videos_per_class = 2;
  scfg.frames_per_video = 24;
  scfg.shape = FrameShape{1, 12, 12};
  scfg.seed = 5;
  const FrameCorpus corpus_a = generate_synthetic(scfg);
  const FrameCorpus corpus_b = generate_synthetic(scfg);

  const EncoderSpec spec =
      parse_encoder_spec("in:1x12x12,conv:3x3,relu,pool:2,dense:16,relu,dense:8,tap:final");
  TrainConfig tcfg;
  tcfg.mode = TrainMode::Quadruplet;
  tcfg.epochs = 1;
  tcfg.tuples_per_epoch = 120;
  tcfg.batch_quads = 20;
  tcfg.n = 6;
  tcfg.seed = 3;

  const TrainReport run1 = train_unsupervised(corpus_a, spec, tcfg);
  const TrainReport run2 = train_unsupervised(corpus_b, spec, tcfg);
  const std::string ckpt1 = checkpoint_bytes(run1.final_params);
  const std::string ckpt2 = checkpoint_bytes(run2.final_params);
  if (ckpt1 != ckpt2) return {false, "checkpoints differ between reruns"};
  if (run1.epoch_mean_loss != run2.epoch_mean_loss) return {false, "loss traces differ"};

  const std::string dump1 = embedding_dump_bytes(
      embed_corpus(run1.final_params, Tap::Penultimate, corpus_a, Granularity::Frames, false));
  const std::string dump2 = embedding_dump_bytes(
      embed_corpus(run2.final_params, Tap::Penultimate, corpus_b, Granularity::Frames, false));
  if (dump1 != dump2) return {false, "embedding dumps differ between reruns"};

  DiscoveryConfig dcfg;
  dcfg.k = 2;
  dcfg.repeats = 4;
  dcfg.seed = 9;
  const std::string report1 = discovery_report_json(
      evaluate_discovery(run1.final_params, corpus_a, dcfg)).dump();
  const std::string report2 = discovery_report_json(
      evaluate_discovery(run2.final_params, corpus_b, dcfg)).dump();
  if (report1 != report2) return {false, "discovery reports differ between reruns"};

  return {true, "checkpoint, embedding dump, and report all byte-identical across reruns"};
}

// ---------------------------------------------------------------------------
// criterion 8: clustering invariants
// ---------------------------------------------------------------------------

Eigen::MatrixXd blob_points(int blobs, int per_blob, std::uint64_t seed,
                            std::vector<int>* labels) {
  Rng rng(seed);
  Eigen::MatrixXd points(blobs * per_blob, 2);
  for (int b = 0; b < blobs; ++b) {
    for (int i = 0; i < per_blob; ++i) {
      const int row = b * per_blob + i;
      points(row, 0) = 10.0 * b + rng.uniform(-0.1, 0.1);
      points(row, 1) = -6.0 * b + rng.uniform(-0.1, 0.1);
      if (labels) labels->push_back(b);
    }
  }
  return points;
}

Result criterion_clustering_invariants() {
  Rng rng(77);
  for (int inst = 0; inst < 20; ++inst) {
    Eigen::MatrixXd points(70, 4);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      for (Eigen::Index j = 0; j < points.cols(); ++j) points(i, j) = rng.uniform(-1.0, 1.0);
    }
    const KMeansResult r = kmeans(points, 6, 60, static_cast<std::uint64_t>(inst));
    for (std::size_t i = 1; i < r.objective.size(); ++i) {
      if (r.objective[i] > r.objective[i - 1] + 1e-9) {
        return {false, "objective increased on instance " + std::to_string(inst)};
      }
    }
  }

  std::vector<int> labels;
  const Eigen::MatrixXd blobs = blob_points(3, 25, 19, &labels);
  const Eigen::MatrixXd rows = spectral_embed(blobs, 3, median_pairwise_distance(blobs));
  double worst_norm = 0.0;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    worst_norm = std::max(worst_norm, std::abs(rows.row(i).norm() - 1.0));
  }
  if (worst_norm > kRowNormTol) {
    return {false, "spectral row norm off by " + fmt(worst_norm, 12)};
  }

  const auto km = kmeans(blobs, 3, 100, 3).assignment;
  const auto sp = spectral_cluster(blobs, 3, {}, 3).assignment;
  const bool exact = conditional_entropy(labels, km) == 0.0 &&
                     conditional_entropy(km.labels, {labels, 3}) == 0.0 &&
                     conditional_entropy(labels, sp) == 0.0 &&
                     conditional_entropy(sp.labels, {labels, 3}) == 0.0;
  if (!exact) return {false, "separable blobs not recovered exactly"};

  return {true, "20 monotone k-means runs, row norms within 1e-10, blobs recovered exactly"};
}

}  // namespace

int main() {
  struct Line {
    int id;
    std::string name;
    Result result;
    double seconds;
  };
  std::vector<Line> lines;
  const auto run = [&lines](int id, const std::string& name, const auto& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Result r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    lines.push_back({id, name, r, seconds_since(t0)});
  };

  run(1, "gradient agreement", criterion_gradients);
  run(2, "loss value oracles", criterion_loss_oracles);
  run(3, "conditional entropy suite", criterion_ce_suite);
  run(4, "uncertainty reduction arithmetic", criterion_uncertainty);

  // Criteria 5 and 6 share one corpus and one trained encoder.
  const OrderingSetup setup;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const SplitCorpora corpora = build_ordering_corpora(setup);
    const OrderingOutcome outcome = run_ordering_experiment(setup, corpora);
    const double ordering_elapsed = seconds_since(t0);
    lines.push_back({5, "discovery ordering (quadruplet vs random vs sfa)",
                     criterion_ordering(outcome, ordering_elapsed), ordering_elapsed});
    const auto t1 = std::chrono::steady_clock::now();
    lines.push_back({6, "transfer ordering (pretrained vs random init)",
                     criterion_transfer(setup, corpora, outcome.quad_report.final_params),
                     seconds_since(t1)});
  } catch (const std::exception& e) {
    lines.push_back({5, "discovery ordering (quadruplet vs random vs sfa)",
                     {false, std::string("exception: ") + e.what()}, 0.0});
    lines.push_back({6, "transfer ordering (pretrained vs random init)",
                     {false, "skipped: ordering experiment failed"}, 0.0});
  }

  run(7, "byte-identical reruns", criterion_determinism);
  run(8, "clustering invariants", criterion_clustering_invariants);

  std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) { return a.id < b.id; });
  int failures = 0;
  for (const auto& line : lines) {
    if (!line.result.pass) ++failures;
    std::printf("[%s] criterion %d: %s: %s [%.1fs]\n", line.result.pass ? "PASS" : "FAIL",
                line.id, line.name.c_str(), line.result.details.c_str(), line.seconds);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(lines.size()) - failures,
              lines.size());
  return failures == 0 ? 0 : 1;
}
