#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cohere/common.hpp"
#include "cohere/corpus.hpp"
#include "cohere/encoder.hpp"

namespace cohere {

struct ClusterAssignment {
  std::vector<int> labels;  // cluster index per item, in [0, k)
  int k = 0;
};

struct ContingencyTable {
  Eigen::MatrixXd counts;  // class x cluster
  Eigen::VectorXd cluster_totals;
  double total = 0.0;
};

inline ContingencyTable contingency(const std::vector<int>& classes,
                                    const ClusterAssignment& assignment) {
  if (classes.size() != assignment.labels.size()) {
    throw ValidationError("class/cluster label count mismatch");
  }
  if (classes.empty()) throw ValidationError("cannot score an empty assignment");
  int num_classes = 0;
  for (const int c : classes) {
    if (c < 0) throw ValidationError("negative class label");
    num_classes = std::max(num_classes, c + 1);
  }
  ContingencyTable table;
  table.counts = Eigen::MatrixXd::Zero(num_classes, assignment.k);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const int y = assignment.labels[i];
    if (y < 0 || y >= assignment.k) {
      throw ValidationError("cluster label " + std::to_string(y) + " outside [0, " +
                            std::to_string(assignment.k) + ")");
    }
    table.counts(classes[i], y) += 1.0;
  }
  table.cluster_totals = table.counts.colwise().sum();
  table.total = static_cast<double>(classes.size());
  return table;
}

/// H(class | cluster) in bits. Per-cluster contributions are sorted before
/// the final sum so relabeling clusters cannot change the result bit-wise.
inline double conditional_entropy(const std::vector<int>& classes,
                                  const ClusterAssignment& assignment) {
  const ContingencyTable table = contingency(classes, assignment);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(assignment.k));
  for (int y = 0; y < assignment.k; ++y) {
    const double n_y = table.cluster_totals[y];
    if (n_y == 0.0) continue;
    double h = 0.0;
    for (Eigen::Index x = 0; x < table.counts.rows(); ++x) {
      const double n_xy = table.counts(x, y);
      if (n_xy == 0.0) continue;
      const double p = n_xy / n_y;
      h -= p * std::log2(p);
    }
    terms.push_back((n_y / table.total) * h);
  }
  std::sort(terms.begin(), terms.end());
  double ce = 0.0;
  for (const double t : terms) ce += t;
  return ce;
}

/// 2^ce: the equivalent number of equally likely classes left after seeing
/// the cluster label.
inline double uncertainty_reduction(double ce) {
  if (ce < 0.0) throw ValidationError("conditional entropy must be >= 0");
  return std::exp2(ce);
}

// ---------------------------------------------------------------------------
// K-means (distance-weighted seeding, Lloyd refinement).
// ---------------------------------------------------------------------------

struct KMeansResult {
  ClusterAssignment assignment;
  Eigen::MatrixXd centroids;       // k x d
  std::vector<double> objective;   // within-cluster SSQ after each assignment pass
  int iterations = 0;
};

namespace detail {

inline Eigen::VectorXd sq_dist_to(const Eigen::MatrixXd& points, const Eigen::RowVectorXd& c) {
  return (points.rowwise() - c).rowwise().squaredNorm();
}

inline Eigen::MatrixXd seed_centroids(const Eigen::MatrixXd& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd centroids(k, points.cols());
  centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n))));
  Eigen::VectorXd best = sq_dist_to(points, centroids.row(0));
  for (int c = 1; c < k; ++c) {
    const double total = best.sum();
    Eigen::Index pick;
    if (total <= 0.0) {
      pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
    } else {
      double target = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= best[i];
        if (target <= 0.0) {
          pick = i;
          break;
        }
      }
    }
    centroids.row(c) = points.row(pick);
    best = best.cwiseMin(sq_dist_to(points, centroids.row(c)));
  }
  return centroids;
}

}  // namespace detail

inline KMeansResult kmeans(const Eigen::MatrixXd& points, int k, int max_iters,
                           std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw ValidationError("k must be >= 1");
  if (n < k) {
    throw ValidationError("k (" + std::to_string(k) + ") exceeds item count (" +
                          std::to_string(n) + ")");
  }
  if (max_iters < 1) throw ValidationError("max_iters must be >= 1");
  if (!points.allFinite()) throw ValidationError("non-finite embedding coordinates");

  Rng rng(seed);
  KMeansResult result;
  result.centroids = detail::seed_centroids(points, k, rng);
  result.assignment.k = k;
  result.assignment.labels.assign(static_cast<std::size_t>(n), 0);

  std::vector<int> previous(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iters; ++iter) {
    double objective = 0.0;
    Eigen::MatrixXd dists(n, k);
    for (int c = 0; c < k; ++c) {
      dists.col(c) = detail::sq_dist_to(points, result.centroids.row(c));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      dists.row(i).minCoeff(&best);
      result.assignment.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
      objective += dists(i, best);
    }
    result.objective.push_back(objective);
    result.iterations = iter + 1;
    if (result.assignment.labels == previous) break;
    previous = result.assignment.labels;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = result.assignment.labels[static_cast<std::size_t>(i)];
      sums.row(c) += points.row(i);
      counts[c] += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0.0) {
        result.centroids.row(c) = sums.row(c) / counts[c];
      } else {
        // Re-seed an emptied centroid at the point currently worst served.
        Eigen::Index worst = 0;
        double worst_d = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const int a = result.assignment.labels[static_cast<std::size_t>(i)];
          const double d = (points.row(i) - result.centroids.row(a)).squaredNorm();
          if (d > worst_d) {
            worst_d = d;
            worst = i;
          }
        }
        result.centroids.row(c) = points.row(worst);
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Spectral clustering (Gaussian affinity, symmetric normalization, top-K
// eigenvectors, row renormalization, K-means on the spectral rows).
// ---------------------------------------------------------------------------

struct SpectralOptions {
  double sigma = 0.0;  // <= 0 picks the median pairwise distance
  int max_iters = 100;
};

inline double median_pairwise_distance(const Eigen::MatrixXd& points) {
  const Eigen::Index n = points.rows();
  if (n < 2) throw ValidationError("need >= 2 items for pairwise distances");
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n) * (static_cast<std::size_t>(n) - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dists.push_back((points.row(i) - points.row(j)).norm());
    }
  }
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  return dists[mid];
}

inline Eigen::MatrixXd build_affinity(const Eigen::MatrixXd& points, double sigma) {
  if (sigma <= 0.0) throw ValidationError("affinity sigma must be positive");
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd a(n, n);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d2 = (points.row(i) - points.row(j)).squaredNorm();
      const double v = std::exp(-d2 * inv);
      a(i, j) = v;
      a(j, i) = v;
    }
  }
  return a;
}

inline Eigen::MatrixXd normalize_affinity(const Eigen::MatrixXd& affinity) {
  const Eigen::Index n = affinity.rows();
  Eigen::VectorXd degree = affinity.rowwise().sum();
  Eigen::VectorXd inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (degree[i] <= 0.0) {
      throw ComputeError("item " + std::to_string(i) +
                         " has zero affinity to every other item");
    }
    inv_sqrt[i] = 1.0 / std::sqrt(degree[i]);
  }
  return inv_sqrt.asDiagonal() * affinity * inv_sqrt.asDiagonal();
}

/// Rows of the top-K eigenvector matrix, renormalized to unit length.
inline Eigen::MatrixXd spectral_embed(const Eigen::MatrixXd& points, int k, double sigma) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw ValidationError("k must be >= 1");
  if (n < k) {
    throw ValidationError("k (" + std::to_string(k) + ") exceeds item count (" +
                          std::to_string(n) + ")");
  }
  const Eigen::MatrixXd normalized = normalize_affinity(build_affinity(points, sigma));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(normalized);
  if (solver.info() != Eigen::Success) throw ComputeError("eigendecomposition failed");
  // Eigenvalues ascend; the top-K eigenvectors are the last K columns.
  Eigen::MatrixXd u = solver.eigenvectors().rightCols(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = u.row(i).norm();
    if (norm <= 0.0) throw ComputeError("zero spectral row for item " + std::to_string(i));
    u.row(i) /= norm;
  }
  return u;
}

struct SpectralResult {
  ClusterAssignment assignment;
  double sigma = 0.0;
};

inline SpectralResult spectral_cluster(const Eigen::MatrixXd& points, int k,
                                       const SpectralOptions& options, std::uint64_t seed) {
  SpectralResult result;
  result.sigma = options.sigma > 0.0 ? options.sigma : median_pairwise_distance(points);
  if (result.sigma <= 0.0) {
    throw ComputeError("degenerate embedding: median pairwise distance is zero");
  }
  const Eigen::MatrixXd rows = spectral_embed(points, k, result.sigma);
  result.assignment = kmeans(rows, k, options.max_iters, seed).assignment;
  return result;
}

// ---------------------------------------------------------------------------
// End-to-end discovery evaluation.
// ---------------------------------------------------------------------------

enum class ClusterAlgo { KMeans, Spectral };

inline std::string to_string(ClusterAlgo algo) {
  return algo == ClusterAlgo::KMeans ? "kmeans" : "spectral";
}

inline ClusterAlgo parse_cluster_algo(std::string_view s) {
  if (s == "kmeans") return ClusterAlgo::KMeans;
  if (s == "spectral") return ClusterAlgo::Spectral;
  throw ValidationError("unknown clustering algorithm: " + std::string(s));
}

enum class Granularity { Frames, Videos };

inline std::string to_string(Granularity g) {
  return g == Granularity::Frames ? "frames" : "videos";
}

inline Granularity parse_granularity(std::string_view s) {
  if (s == "frames") return Granularity::Frames;
  if (s == "videos") return Granularity::Videos;
  throw ValidationError("unknown granularity: " + std::string(s));
}

struct EmbeddedSet {
  Eigen::MatrixXd points;   // item x dim
  std::vector<int> labels;  // -1 when unlabeled
};

/// Embeds the corpus at the tap. Frames granularity yields one row per frame;
/// videos granularity averages each video's frame embeddings.
inline EmbeddedSet embed_corpus(const EncoderParams& params, Tap tap, const FrameCorpus& corpus,
                                Granularity granularity = Granularity::Frames,
                                bool with_labels = true) {
  std::vector<const Frame*> frames;
  frames.reserve(corpus.total_frames());
  for (const auto& video : corpus.videos()) {
    for (const auto& frame : video.frames) frames.push_back(&frame);
  }
  const auto embeddings = batch_forward(params, frames, tap);
  const Eigen::Index dim = embeddings.empty() ? 0 : embeddings.front().size();

  EmbeddedSet set;
  if (granularity == Granularity::Frames) {
    set.points.resize(static_cast<Eigen::Index>(embeddings.size()), dim);
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
      set.points.row(static_cast<Eigen::Index>(i)) = embeddings[i].transpose();
    }
    set.labels.assign(embeddings.size(), -1);
    if (with_labels && corpus.has_labels()) {
      const auto& table = corpus.eval_labels();
      std::size_t row = 0;
      for (std::size_t v = 0; v < corpus.video_count(); ++v) {
        for (std::size_t t = 0; t < corpus.video(v).frames.size(); ++t) {
          set.labels[row++] = table.frame_label(v, t);
        }
      }
    }
  } else {
    set.points.resize(static_cast<Eigen::Index>(corpus.video_count()), dim);
    set.labels.assign(corpus.video_count(), -1);
    std::size_t offset = 0;
    for (std::size_t v = 0; v < corpus.video_count(); ++v) {
      const std::size_t len = corpus.video(v).frames.size();
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
      for (std::size_t t = 0; t < len; ++t) mean += embeddings[offset + t];
      set.points.row(static_cast<Eigen::Index>(v)) = (mean / static_cast<double>(len)).transpose();
      offset += len;
    }
    if (with_labels && corpus.has_labels()) {
      const auto& table = corpus.eval_labels();
      for (std::size_t v = 0; v < corpus.video_count(); ++v) {
        set.labels[static_cast<std::size_t>(v)] = table.video_label(v);
      }
    }
  }
  return set;
}

struct DiscoveryConfig {
  ClusterAlgo algorithm = ClusterAlgo::KMeans;
  int k = 0;  // 0 picks the labeled class count
  int repeats = 10;
  Tap tap = Tap::Penultimate;
  Granularity granularity = Granularity::Frames;
  std::size_t subsample = 0;  // 0 clusters every item
  double sigma = 0.0;         // spectral kernel width; <= 0 picks the median
  int max_iters = 100;
  std::uint64_t seed = 0;
};

struct DiscoveryReport {
  std::string algorithm;
  int k = 0;
  int repeats = 0;
  std::string tap;
  std::string granularity;
  double ce_mean = 0.0;
  double ce_std = 0.0;
  std::vector<double> ce_runs;
};

/// Clusters labeled items `repeats` times with derived seeds (seed + run
/// index) and summarizes conditional entropy as mean and sample std.
inline DiscoveryReport evaluate_embedded(const EmbeddedSet& full, const DiscoveryConfig& cfg) {
  if (cfg.repeats < 1) throw ValidationError("repeats must be >= 1");
  EmbeddedSet set = full;
  for (const int label : set.labels) {
    if (label < 0) throw ValidationError("discovery evaluation needs a labeled test corpus");
  }
  if (set.labels.empty()) throw ValidationError("no items to cluster");

  if (cfg.subsample > 0 && cfg.subsample < set.labels.size()) {
    std::vector<std::size_t> order(set.labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(substream(cfg.seed, 3));
    rng.shuffle(order);
    order.resize(cfg.subsample);
    std::sort(order.begin(), order.end());
    EmbeddedSet sub;
    sub.points.resize(static_cast<Eigen::Index>(order.size()), set.points.cols());
    sub.labels.resize(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      sub.points.row(static_cast<Eigen::Index>(i)) =
          set.points.row(static_cast<Eigen::Index>(order[i]));
      sub.labels[i] = set.labels[order[i]];
    }
    set = std::move(sub);
  }

  int num_classes = 0;
  for (const int label : set.labels) num_classes = std::max(num_classes, label + 1);
  const int k = cfg.k > 0 ? cfg.k : num_classes;

  DiscoveryReport report;
  report.algorithm = to_string(cfg.algorithm);
  report.k = k;
  report.repeats = cfg.repeats;
  report.tap = to_string(cfg.tap);
  report.granularity = to_string(cfg.granularity);

  Eigen::MatrixXd spectral_rows;
  if (cfg.algorithm == ClusterAlgo::Spectral) {
    const double sigma = cfg.sigma > 0.0 ? cfg.sigma : median_pairwise_distance(set.points);
    if (sigma <= 0.0) {
      throw ComputeError("degenerate embedding: median pairwise distance is zero");
    }
    spectral_rows = spectral_embed(set.points, k, sigma);
  }
  const Eigen::MatrixXd& cluster_input =
      cfg.algorithm == ClusterAlgo::Spectral ? spectral_rows : set.points;

  for (int run = 0; run < cfg.repeats; ++run) {
    const std::uint64_t run_seed = cfg.seed + static_cast<std::uint64_t>(run);
    const auto result = kmeans(cluster_input, k, cfg.max_iters, run_seed);
    report.ce_runs.push_back(conditional_entropy(set.labels, result.assignment));
  }

  double sum = 0.0;
  for (const double ce : report.ce_runs) sum += ce;
  report.ce_mean = sum / static_cast<double>(report.ce_runs.size());
  if (report.ce_runs.size() > 1) {
    double ssq = 0.0;
    for (const double ce : report.ce_runs) ssq += (ce - report.ce_mean) * (ce - report.ce_mean);
    report.ce_std = std::sqrt(ssq / static_cast<double>(report.ce_runs.size() - 1));
  }
  return report;
}

inline DiscoveryReport evaluate_discovery(const EncoderParams& params, const FrameCorpus& test,
                                          const DiscoveryConfig& cfg) {
  if (!test.has_labels()) throw ValidationError("discovery evaluation needs a labeled test corpus");
  return evaluate_embedded(embed_corpus(params, cfg.tap, test, cfg.granularity), cfg);
}

inline nlohmann::json discovery_report_json(const DiscoveryReport& report) {
  return nlohmann::json{{"algorithm", report.algorithm},
                        {"k", report.k},
                        {"repeats", report.repeats},
                        {"tap", report.tap},
                        {"granularity", report.granularity},
                        {"ce_mean", report.ce_mean},
                        {"ce_std", report.ce_std},
                        {"ce_runs", report.ce_runs},
                        {"effective_classes", uncertainty_reduction(report.ce_mean)}};
}

// ---------------------------------------------------------------------------
// Embedding dump format CEMB1: magic, u32 count, u32 dim, row-major f32
// coordinates, then one i32 label per item (-1 when unlabeled).
// ---------------------------------------------------------------------------

inline std::string embedding_dump_bytes(const EmbeddedSet& set) {
  std::string out = "CEMB1";
  put_u32(out, static_cast<std::uint32_t>(set.points.rows()));
  put_u32(out, static_cast<std::uint32_t>(set.points.cols()));
  for (Eigen::Index i = 0; i < set.points.rows(); ++i) {
    for (Eigen::Index j = 0; j < set.points.cols(); ++j) {
      put_f32(out, static_cast<float>(set.points(i, j)));
    }
  }
  for (Eigen::Index i = 0; i < set.points.rows(); ++i) {
    put_i32(out, set.labels[static_cast<std::size_t>(i)]);
  }
  return out;
}

inline EmbeddedSet embedded_set_from_bytes(std::string_view data, const std::string& origin) {
  if (data.size() < 5 || data.substr(0, 5) != "CEMB1") {
    throw ValidationError("not a CEMB1 embedding dump: " + origin);
  }
  ByteReader r(data.substr(5));
  const std::uint32_t count = r.u32();
  const std::uint32_t dim = r.u32();
  EmbeddedSet set;
  set.points.resize(count, dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint32_t j = 0; j < dim; ++j) set.points(i, j) = static_cast<double>(r.f32());
  }
  set.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) set.labels[i] = r.i32();
  if (!r.done()) throw ValidationError("trailing bytes in embedding dump: " + origin);
  return set;
}

inline void save_embedding_dump(const EmbeddedSet& set, const std::filesystem::path& path) {
  detail::write_file(path, embedding_dump_bytes(set));
}

inline EmbeddedSet load_embedding_dump(const std::filesystem::path& path) {
  return embedded_set_from_bytes(detail::read_file(path), path.string());
}

}  // namespace cohere
