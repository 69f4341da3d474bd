#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cohere/common.hpp"
#include "cohere/corpus.hpp"

namespace cohere {

struct FrameRef {
  std::uint32_t video = 0;
  std::uint32_t frame = 0;
  bool operator==(const FrameRef&) const = default;
};

/// A contrastive pair. positive=true means both members come from the same
/// video at temporal offset within the window; false means a cross-video
/// (or, in MU mode, far-apart) pair.
struct PairSample {
  FrameRef anchor;
  FrameRef other;
  bool positive = false;
};

/// (anchor, neighbor, non-neighbor, negative). neighbor is at offset 1..w,
/// non-neighbor at exactly +n, negative from a different video (or at a
/// temporal gap in MU mode).
struct QuadSample {
  FrameRef anchor;
  FrameRef neighbor;
  FrameRef nonneighbor;
  FrameRef negative;
};

/// Non-neighbor offset used when an MU gap is left unspecified; the MU gap
/// default is twice this.
inline constexpr int kDefaultNonNeighborOffset = 20;

namespace detail {

inline std::size_t video_length(const FrameCorpus& corpus, std::size_t v) {
  return corpus.video(v).frames.size();
}

/// Uniform frame index at distance >= gap from `anchor` within [0, len).
/// Returns false when no such index exists.
inline bool draw_gapped_index(std::size_t len, std::size_t anchor, std::size_t gap, Rng& rng,
                              std::size_t& out) {
  const std::size_t left = anchor >= gap ? anchor - gap + 1 : 0;           // count in [0, anchor-gap]
  const std::size_t right = anchor + gap < len ? len - (anchor + gap) : 0; // count in [anchor+gap, len)
  const std::size_t total = gap == 0 ? len : left + right;
  if (total == 0) return false;
  std::size_t pick = rng.index(total);
  if (gap == 0) {
    out = pick;
    return true;
  }
  out = pick < left ? pick : anchor + gap + (pick - left);
  return true;
}

inline long resolve_gap(const FrameCorpus& corpus, int /*w*/, long requested,
                        long configured_offset) {
  if (!corpus.is_mu()) return 0;
  if (requested >= 0) return requested;
  return 2 * configured_offset;
}

}  // namespace detail

/// Draws `count` pairs: round(count * positive_fraction) positives at offsets
/// 1..w within one video, the rest negatives across two distinct videos
/// (index gap >= mu_gap_min when the corpus is MU). The returned order is a
/// seed-determined shuffle. mu_gap_min < 0 selects the stock gap of
/// 2 * kDefaultNonNeighborOffset; it is ignored on non-MU corpora.
inline std::vector<PairSample> sample_pairs(const FrameCorpus& corpus, int w, std::size_t count,
                                            double positive_fraction, Rng& rng,
                                            long mu_gap_min = -1) {
  if (w < 1) throw ValidationError("window w must be >= 1");
  if (!(positive_fraction > 0.0 && positive_fraction < 1.0)) {
    throw ValidationError("positive_fraction must lie in (0,1)");
  }
  const std::size_t num_videos = corpus.video_count();
  if (num_videos < 2 && !corpus.is_mu()) {
    throw ValidationError(
        "corpus has a single video and is not MU; cross-video negatives impossible");
  }
  const long gap = detail::resolve_gap(corpus, w, mu_gap_min, kDefaultNonNeighborOffset);

  const std::size_t positives =
      static_cast<std::size_t>(std::llround(positive_fraction * static_cast<double>(count)));
  std::vector<PairSample> out;
  out.reserve(count);

  for (std::size_t i = 0; i < positives; ++i) {
    PairSample s;
    s.positive = true;
    while (true) {
      const std::size_t v = rng.index(num_videos);
      const std::size_t len = detail::video_length(corpus, v);
      const std::size_t offset = 1 + rng.index(static_cast<std::size_t>(w));
      if (offset + 1 > len) continue;  // video too short for this offset
      const std::size_t t = rng.index(len - offset);
      s.anchor = {static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(t)};
      s.other = {static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(t + offset)};
      break;
    }
    out.push_back(s);
  }

  for (std::size_t i = positives; i < count; ++i) {
    PairSample s;
    s.positive = false;
    if (corpus.is_mu()) {
      const std::size_t len = detail::video_length(corpus, 0);
      if (static_cast<std::size_t>(gap) > len - 1) {
        throw ValidationError("MU gap leaves no admissible negatives");
      }
      while (true) {
        const std::size_t t = rng.index(len);
        std::size_t other = 0;
        if (!detail::draw_gapped_index(len, t, static_cast<std::size_t>(gap), rng, other)) {
          continue;  // this anchor has no far-enough partner; redraw
        }
        s.anchor = {0, static_cast<std::uint32_t>(t)};
        s.other = {0, static_cast<std::uint32_t>(other)};
        break;
      }
    } else {
      const std::size_t vi = rng.index(num_videos);
      std::size_t vj = rng.index(num_videos - 1);
      if (vj >= vi) ++vj;
      s.anchor = {static_cast<std::uint32_t>(vi),
                  static_cast<std::uint32_t>(rng.index(detail::video_length(corpus, vi)))};
      s.other = {static_cast<std::uint32_t>(vj),
                 static_cast<std::uint32_t>(rng.index(detail::video_length(corpus, vj)))};
    }
    out.push_back(s);
  }

  rng.shuffle(out);
  return out;
}

/// SFA-baseline pairs: identical contract to sample_pairs except negatives are
/// non-neighbors (offset > w) of the anchor's own video, so the only pipeline
/// difference versus the Siamese loss is where negatives come from.
inline std::vector<PairSample> sample_pairs_sfa(const FrameCorpus& corpus, int w,
                                                std::size_t count, double positive_fraction,
                                                Rng& rng) {
  if (w < 1) throw ValidationError("window w must be >= 1");
  if (!(positive_fraction > 0.0 && positive_fraction < 1.0)) {
    throw ValidationError("positive_fraction must lie in (0,1)");
  }
  const std::size_t num_videos = corpus.video_count();
  bool any_long_enough = false;
  for (std::size_t v = 0; v < num_videos; ++v) {
    if (detail::video_length(corpus, v) > static_cast<std::size_t>(w) + 1) {
      any_long_enough = true;
      break;
    }
  }
  if (!any_long_enough) {
    throw ValidationError("no video long enough for non-neighbor negatives (need length > w+1)");
  }

  const std::size_t positives =
      static_cast<std::size_t>(std::llround(positive_fraction * static_cast<double>(count)));
  std::vector<PairSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    PairSample s;
    s.positive = i < positives;
    while (true) {
      const std::size_t v = rng.index(num_videos);
      const std::size_t len = detail::video_length(corpus, v);
      if (s.positive) {
        const std::size_t offset = 1 + rng.index(static_cast<std::size_t>(w));
        if (offset + 1 > len) continue;
        const std::size_t t = rng.index(len - offset);
        s.anchor = {static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(t)};
        s.other = {static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(t + offset)};
      } else {
        const std::size_t t = rng.index(len);
        std::size_t other = 0;
        if (!detail::draw_gapped_index(len, t, static_cast<std::size_t>(w) + 1, rng, other)) {
          continue;
        }
        s.anchor = {static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(t)};
        s.other = {static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(other)};
      }
      break;
    }
    out.push_back(s);
  }
  rng.shuffle(out);
  return out;
}

/// Draws `count` quadruplets. Anchors are admissible only where t+n is in
/// range; the neighbor offset is uniform in 1..w; negatives come from a
/// different video, or at index gap >= mu_gap_min in MU mode.
inline std::vector<QuadSample> sample_quads(const FrameCorpus& corpus, int w, int n,
                                            std::size_t count, Rng& rng, long mu_gap_min = -1) {
  if (w < 1) throw ValidationError("window w must be >= 1");
  if (n <= w) throw ValidationError("non-neighbor offset n must exceed window w");
  const std::size_t num_videos = corpus.video_count();
  if (num_videos < 2 && !corpus.is_mu()) {
    throw ValidationError(
        "corpus has a single video and is not MU; cross-video negatives impossible");
  }

  std::vector<std::size_t> usable;  // videos with at least one admissible anchor
  for (std::size_t v = 0; v < num_videos; ++v) {
    if (detail::video_length(corpus, v) >= static_cast<std::size_t>(n) + 1) usable.push_back(v);
  }
  if (usable.empty()) {
    throw ValidationError("no admissible anchor positions: every video shorter than n+1");
  }
  const long gap = detail::resolve_gap(corpus, w, mu_gap_min, n);

  if (corpus.is_mu() &&
      static_cast<std::size_t>(gap) > detail::video_length(corpus, 0) - 1) {
    throw ValidationError("MU gap leaves no admissible negatives");
  }

  std::vector<QuadSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    QuadSample q;
    while (true) {
      const std::size_t v = usable[rng.index(usable.size())];
      const std::size_t len = detail::video_length(corpus, v);
      const std::size_t t = rng.index(len - static_cast<std::size_t>(n));
      const std::size_t offset = 1 + rng.index(static_cast<std::size_t>(w));
      if (corpus.is_mu()) {
        std::size_t neg = 0;
        if (!detail::draw_gapped_index(len, t, static_cast<std::size_t>(gap), rng, neg)) {
          continue;  // this anchor has no far-enough partner; redraw
        }
        q.negative = {0, static_cast<std::uint32_t>(neg)};
      } else {
        std::size_t vj = rng.index(num_videos - 1);
        if (vj >= v) ++vj;
        q.negative = {static_cast<std::uint32_t>(vj),
                      static_cast<std::uint32_t>(rng.index(detail::video_length(corpus, vj)))};
      }
      q.anchor = {static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(t)};
      q.neighbor = {static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(t + offset)};
      q.nonneighbor = {static_cast<std::uint32_t>(v),
                       static_cast<std::uint32_t>(t + static_cast<std::size_t>(n))};
      break;
    }
    out.push_back(q);
  }
  return out;
}

}  // namespace cohere
