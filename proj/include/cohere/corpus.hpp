#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cohere/common.hpp"

namespace cohere {

struct FrameShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  bool operator==(const FrameShape&) const = default;
};

inline std::string to_string(const FrameShape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

/// One frame's pixel data, channel-major, values in [0,1]. The owning corpus
/// carries the shape; a lone Frame is only checked by total size.
struct Frame {
  std::vector<float> pixels;
};

struct Video {
  std::string id;
  std::vector<Frame> frames;
};

// ---------------------------------------------------------------------------
// Ground-truth labels. Held apart from the video data proper: samplers and
// the trainer have no business here, and FrameCorpus counts every access so
// label blindness is auditable at runtime.
// ---------------------------------------------------------------------------
class LabelTable {
 public:
  LabelTable() = default;
  LabelTable(std::vector<std::vector<int>> frame_labels, std::vector<std::string> class_names)
      : frame_labels_(std::move(frame_labels)), names_(std::move(class_names)) {}

  static LabelTable per_video(const std::vector<int>& video_labels,
                              std::vector<std::string> class_names,
                              const std::vector<Video>& videos) {
    std::vector<std::vector<int>> expanded(videos.size());
    for (std::size_t v = 0; v < videos.size(); ++v) {
      expanded[v].assign(videos[v].frames.size(), video_labels[v]);
    }
    return LabelTable(std::move(expanded), std::move(class_names));
  }

  bool empty() const { return frame_labels_.empty(); }
  std::size_t num_classes() const { return names_.size(); }
  const std::vector<std::string>& class_names() const { return names_; }

  int frame_label(std::size_t video, std::size_t frame) const {
    return frame_labels_.at(video).at(frame);
  }

  /// The single label shared by every frame of a video; throws if mixed.
  int video_label(std::size_t video) const {
    const auto& labels = frame_labels_.at(video);
    const int first = labels.empty() ? -1 : labels.front();
    for (int l : labels) {
      if (l != first) {
        throw ValidationError("video " + std::to_string(video) +
                              " has mixed per-frame labels; no single video label");
      }
    }
    return first;
  }

  /// Labels of all frames, videos concatenated in corpus order.
  std::vector<int> flat() const {
    std::vector<int> out;
    for (const auto& v : frame_labels_) out.insert(out.end(), v.begin(), v.end());
    return out;
  }

  const std::vector<std::vector<int>>& per_frame() const { return frame_labels_; }

 private:
  std::vector<std::vector<int>> frame_labels_;  // -1 = unlabeled
  std::vector<std::string> names_;
};

/// Per-frame source bookkeeping for corpora produced by concat_mu.
struct MuInfo {
  std::vector<std::uint32_t> source;  // source video index per frame of the long video
  bool active() const { return !source.empty(); }
};

// ---------------------------------------------------------------------------
// FrameCorpus: an ordered collection of videos with one shared frame shape.
// Immutable after construction; safe for concurrent reads.
// ---------------------------------------------------------------------------
class FrameCorpus {
 public:
  FrameCorpus(FrameShape shape, std::vector<Video> videos, LabelTable labels = {},
              MuInfo mu = {})
      : shape_(shape), videos_(std::move(videos)), labels_(std::move(labels)),
        mu_(std::move(mu)) {
    validate();
  }

  FrameShape frame_shape() const { return shape_; }
  std::size_t video_count() const { return videos_.size(); }
  const Video& video(std::size_t i) const { return videos_.at(i); }
  const std::vector<Video>& videos() const { return videos_; }

  std::size_t total_frames() const {
    std::size_t n = 0;
    for (const auto& v : videos_) n += v.frames.size();
    return n;
  }

  bool is_mu() const { return mu_.active(); }
  const MuInfo& mu_info() const { return mu_; }

  bool has_labels() const { return !labels_.empty(); }

  /// Ground-truth access for evaluation and fine-tuning only. Counted so
  /// training paths can be audited for label blindness.
  const LabelTable& eval_labels() const {
    ++label_reads_;
    return labels_;
  }

  std::uint64_t label_read_count() const { return label_reads_; }

 private:
  void validate() const {
    if (videos_.empty()) throw ValidationError("empty corpus");
    if (shape_.channels < 1 || shape_.height < 1 || shape_.width < 1) {
      throw ValidationError("invalid frame shape " + to_string(shape_));
    }
    const std::size_t expected = shape_.size();
    for (const auto& v : videos_) {
      if (v.frames.size() < 2) {
        throw ValidationError("video with < 2 frames: " + v.id);
      }
      for (const auto& f : v.frames) {
        if (f.pixels.size() != expected) {
          throw ValidationError("inconsistent frame shape in video " + v.id);
        }
        for (float p : f.pixels) {
          if (!(p >= 0.0f && p <= 1.0f)) {
            throw ValidationError("frame values outside [0,1] in video " + v.id);
          }
        }
      }
    }
    if (!labels_.empty() && labels_.per_frame().size() != videos_.size()) {
      throw ValidationError("label table does not match video count");
    }
    if (!labels_.empty()) {
      for (std::size_t v = 0; v < videos_.size(); ++v) {
        if (labels_.per_frame()[v].size() != videos_[v].frames.size()) {
          throw ValidationError("label table does not match frame count of video " +
                                videos_[v].id);
        }
      }
    }
    if (mu_.active()) {
      if (videos_.size() != 1 || mu_.source.size() != videos_[0].frames.size()) {
        throw ValidationError("inconsistent MU bookkeeping");
      }
    }
  }

  FrameShape shape_;
  std::vector<Video> videos_;
  LabelTable labels_;
  MuInfo mu_;
  mutable std::uint64_t label_reads_ = 0;
};

// ---------------------------------------------------------------------------
// Frame file formats.
//
//   CFR1: 16-byte header (magic "CFR1", u32 channels, u32 height, u32 width,
//         little-endian) followed by channels*height*width f32 LE pixels.
//   PGM/PPM: binary P5 / P6, 8-bit, values divided by 255 on load.
// ---------------------------------------------------------------------------

enum class FrameFormat { Cfr, Pnm };

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("missing frame file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ComputeError("cannot open for writing: " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw ComputeError("write failed: " + path.string());
}

inline int pnm_token(std::istringstream& in) {
  // Skips whitespace and '#' comments between header fields.
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  if (!in) throw ValidationError("malformed PNM header");
  return value;
}

}  // namespace detail

inline std::string encode_frame_cfr(const Frame& frame, const FrameShape& shape) {
  std::string out;
  out.reserve(16 + frame.pixels.size() * 4);
  out += "CFR1";
  put_u32(out, static_cast<std::uint32_t>(shape.channels));
  put_u32(out, static_cast<std::uint32_t>(shape.height));
  put_u32(out, static_cast<std::uint32_t>(shape.width));
  for (float p : frame.pixels) put_f32(out, p);
  return out;
}

inline std::string encode_frame_pnm(const Frame& frame, const FrameShape& shape) {
  if (shape.channels != 1 && shape.channels != 3) {
    throw ValidationError("PGM/PPM supports 1 or 3 channels, got " +
                          std::to_string(shape.channels));
  }
  std::string out = shape.channels == 1 ? "P5" : "P6";
  out += "\n" + std::to_string(shape.width) + " " + std::to_string(shape.height) + "\n255\n";
  const std::size_t plane = static_cast<std::size_t>(shape.height) * shape.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < shape.channels; ++c) {  // interleave channel-major planes
      const float v = frame.pixels[c * plane + i];
      const int q = std::clamp(static_cast<int>(std::lround(v * 255.0f)), 0, 255);
      out.push_back(static_cast<char>(q));
    }
  }
  return out;
}

/// Decodes a frame file by content sniffing (CFR1 magic or PNM signature).
inline std::pair<Frame, FrameShape> decode_frame(std::string_view data,
                                                 const std::string& origin) {
  if (data.size() >= 4 && data.substr(0, 4) == "CFR1") {
    ByteReader r(data.substr(4));
    FrameShape shape;
    shape.channels = static_cast<int>(r.u32());
    shape.height = static_cast<int>(r.u32());
    shape.width = static_cast<int>(r.u32());
    if (shape.channels < 1 || shape.height < 1 || shape.width < 1) {
      throw ValidationError("bad CFR1 header in " + origin);
    }
    Frame frame;
    frame.pixels.reserve(shape.size());
    for (std::size_t i = 0; i < shape.size(); ++i) frame.pixels.push_back(r.f32());
    if (!r.done()) throw ValidationError("trailing bytes in " + origin);
    return {std::move(frame), shape};
  }
  if (data.size() >= 2 && data[0] == 'P' && (data[1] == '5' || data[1] == '6')) {
    const int channels = data[1] == '5' ? 1 : 3;
    std::istringstream in{std::string(data)};
    in.get();
    in.get();
    FrameShape shape;
    shape.width = detail::pnm_token(in);
    shape.height = detail::pnm_token(in);
    const int maxval = detail::pnm_token(in);
    shape.channels = channels;
    if (maxval != 255) throw ValidationError("unsupported PNM maxval in " + origin);
    in.get();  // single whitespace byte before raster
    const std::size_t offset = static_cast<std::size_t>(in.tellg());
    const std::size_t plane = static_cast<std::size_t>(shape.height) * shape.width;
    if (data.size() - offset < plane * channels) {
      throw ValidationError("truncated PNM raster in " + origin);
    }
    Frame frame;
    frame.pixels.resize(shape.size());
    for (std::size_t i = 0; i < plane; ++i) {
      for (int c = 0; c < channels; ++c) {
        const auto byte = static_cast<unsigned char>(data[offset + i * channels + c]);
        frame.pixels[c * plane + i] = static_cast<float>(byte) / 255.0f;
      }
    }
    return {std::move(frame), shape};
  }
  throw ValidationError("unrecognized frame format: " + origin);
}

// ---------------------------------------------------------------------------
// Manifest IO. A manifest is a JSON file listing videos; frame paths are
// relative to the manifest's directory.
// ---------------------------------------------------------------------------

inline FrameCorpus load_corpus(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ValidationError("missing manifest: " + manifest_path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!doc.contains("videos") || !doc["videos"].is_array() || doc["videos"].empty()) {
    throw ValidationError("manifest lists no videos: " + manifest_path.string());
  }
  const auto base = manifest_path.parent_path();

  std::vector<Video> videos;
  std::vector<int> video_labels;
  std::vector<std::string> class_names;
  bool any_label = false;
  std::optional<FrameShape> shape;
  if (doc.contains("frame_shape")) {
    const auto& s = doc["frame_shape"];
    if (!s.is_array() || s.size() != 3) {
      throw ValidationError("manifest frame_shape must be [channels, height, width]");
    }
    shape = FrameShape{s[0].get<int>(), s[1].get<int>(), s[2].get<int>()};
  }

  for (const auto& entry : doc["videos"]) {
    Video video;
    video.id = entry.value("id", "");
    if (video.id.empty()) throw ValidationError("manifest video without id");
    if (!entry.contains("frames") || !entry["frames"].is_array()) {
      throw ValidationError("video " + video.id + " lists no frames");
    }
    for (const auto& rel : entry["frames"]) {
      const auto path = base / rel.get<std::string>();
      auto [frame, frame_shape] = decode_frame(detail::read_file(path), path.string());
      if (!shape) shape = frame_shape;
      if (*shape != frame_shape) {
        throw ValidationError("inconsistent frame shape: " + path.string() + " is " +
                              to_string(frame_shape) + ", corpus is " + to_string(*shape));
      }
      video.frames.push_back(std::move(frame));
    }
    if (video.frames.size() < 2) {
      throw ValidationError("video with < 2 frames: " + video.id);
    }
    int label_id = -1;
    if (entry.contains("label") && !entry["label"].is_null()) {
      const auto name = entry["label"].get<std::string>();
      auto it = std::find(class_names.begin(), class_names.end(), name);
      label_id = static_cast<int>(it - class_names.begin());
      if (it == class_names.end()) class_names.push_back(name);
      any_label = true;
    }
    video_labels.push_back(label_id);
    videos.push_back(std::move(video));
  }

  LabelTable labels;
  if (any_label) {
    labels = LabelTable::per_video(video_labels, std::move(class_names), videos);
  }
  return FrameCorpus(*shape, std::move(videos), std::move(labels));
}

/// Writes frame files plus manifest.json under `dir`. Returns the written
/// paths (manifest last). MU corpora are in-memory transforms and cannot be
/// saved; persist the source corpus instead.
inline std::vector<std::filesystem::path> save_corpus(const FrameCorpus& corpus,
                                                      const std::filesystem::path& dir,
                                                      FrameFormat format = FrameFormat::Cfr) {
  if (corpus.is_mu()) {
    throw ValidationError("MU corpora are not saved; persist the source corpus");
  }
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "frames", ec);
  if (ec) throw ComputeError("cannot create output directory: " + dir.string());

  const auto& labels = corpus.eval_labels();
  const char* ext = format == FrameFormat::Cfr ? ".cfr"
                    : corpus.frame_shape().channels == 3 ? ".ppm"
                                                         : ".pgm";
  std::vector<fs::path> written;
  nlohmann::json manifest;
  manifest["frame_shape"] = {corpus.frame_shape().channels, corpus.frame_shape().height,
                             corpus.frame_shape().width};
  manifest["videos"] = nlohmann::json::array();
  for (std::size_t v = 0; v < corpus.video_count(); ++v) {
    const auto& video = corpus.video(v);
    const fs::path video_dir = dir / "frames" / video.id;
    fs::create_directories(video_dir, ec);
    if (ec) throw ComputeError("cannot create output directory: " + video_dir.string());
    nlohmann::json entry;
    entry["id"] = video.id;
    if (!labels.empty() && labels.video_label(v) >= 0) {
      entry["label"] = labels.class_names().at(labels.video_label(v));
    }
    entry["frames"] = nlohmann::json::array();
    for (std::size_t t = 0; t < video.frames.size(); ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "%05zu%s", t, ext);
      const fs::path path = video_dir / name;
      const std::string data = format == FrameFormat::Cfr
                                   ? encode_frame_cfr(video.frames[t], corpus.frame_shape())
                                   : encode_frame_pnm(video.frames[t], corpus.frame_shape());
      detail::write_file(path, data);
      written.push_back(path);
      entry["frames"].push_back(fs::relative(path, dir).generic_string());
    }
    manifest["videos"].push_back(std::move(entry));
  }
  const fs::path manifest_path = dir / "manifest.json";
  detail::write_file(manifest_path, manifest.dump(2) + "\n");
  written.push_back(manifest_path);
  return written;
}

// ---------------------------------------------------------------------------
// Synthetic corpus generation. Each class owns a disjoint parameter set
// (object shape, motion direction, object level, background grating), so the
// ground truth is unambiguous. Consecutive frames differ by a small
// deterministic motion step plus bounded pixel noise.
// ---------------------------------------------------------------------------

struct SynthConfig {
  int classes = 5;
  int videos_per_class = 4;
  int frames_per_video = 30;
  FrameShape shape{1, 16, 16};
  std::uint64_t seed = 0;
  double noise = 0.02;   // uniform pixel noise amplitude
  double speed = 0.6;    // object drift, pixels per frame
};

namespace detail {

struct ClassGen {
  int shape_kind;      // 0 square, 1 disc, 2 ring, 3 cross
  double angle;        // motion direction
  double level;        // object intensity
  double tex_freq;     // background grating frequency (cycles per width)
  double tex_angle;    // grating orientation
  double tex_amp;
};

inline ClassGen class_generator(int c, int num_classes) {
  ClassGen g;
  g.shape_kind = c % 4;
  g.angle = 2.0 * M_PI * (c + 0.25) / num_classes;
  g.level = num_classes > 1 ? 0.72 + 0.28 * c / (num_classes - 1.0) : 1.0;
  g.tex_freq = 1.5 + c;
  g.tex_angle = M_PI * c / num_classes;
  g.tex_amp = 0.10;
  return g;
}

inline double torus_delta(double a, double b, double extent) {
  double d = a - b;
  d -= extent * std::round(d / extent);
  return d;
}

inline bool object_mask(const ClassGen& g, double dy, double dx, double radius) {
  const double r2 = dx * dx + dy * dy;
  switch (g.shape_kind) {
    case 0: return std::max(std::abs(dx), std::abs(dy)) <= radius;
    case 1: return r2 <= radius * radius;
    case 2: return r2 <= radius * radius && r2 >= 0.25 * radius * radius;
    default: {
      const double arm = std::max(0.8, radius / 3.0);
      const bool in_box = std::max(std::abs(dx), std::abs(dy)) <= radius;
      return in_box && (std::abs(dx) <= arm || std::abs(dy) <= arm);
    }
  }
}

}  // namespace detail

inline FrameCorpus generate_synthetic(const SynthConfig& cfg) {
  if (cfg.classes < 2) throw ValidationError("synthetic corpus needs >= 2 classes");
  if (cfg.videos_per_class < 1) throw ValidationError("videos_per_class must be >= 1");
  if (cfg.frames_per_video < 2) throw ValidationError("frames_per_video must be >= 2");
  if (cfg.shape.channels < 1 || cfg.shape.height < 4 || cfg.shape.width < 4) {
    throw ValidationError("synthetic frame shape too small: " + to_string(cfg.shape));
  }

  Rng rng(cfg.seed);
  const int H = cfg.shape.height;
  const int W = cfg.shape.width;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const double radius = std::max(2.0, std::min(H, W) / 5.0);

  std::vector<Video> videos;
  std::vector<int> video_labels;
  std::vector<std::string> class_names;
  for (int c = 0; c < cfg.classes; ++c) {
    class_names.push_back("class" + std::to_string(c));
    const auto gen = detail::class_generator(c, cfg.classes);
    const double ux = std::cos(gen.tex_angle), uy = std::sin(gen.tex_angle);
    for (int k = 0; k < cfg.videos_per_class; ++k) {
      Video video;
      video.id = "c" + std::to_string(c) + "_v" + std::to_string(k);
      double cy = rng.uniform(0.0, H);
      double cx = rng.uniform(0.0, W);
      for (int t = 0; t < cfg.frames_per_video; ++t) {
        Frame frame;
        frame.pixels.resize(cfg.shape.size());
        for (int y = 0; y < H; ++y) {
          for (int x = 0; x < W; ++x) {
            const double u = (x * ux + y * uy) / W;
            const double tex = 0.45 + gen.tex_amp * std::sin(2.0 * M_PI * gen.tex_freq * u);
            const double dy = detail::torus_delta(y, cy, H);
            const double dx = detail::torus_delta(x, cx, W);
            double v = detail::object_mask(gen, dy, dx, radius) ? gen.level : tex;
            v += rng.uniform(-cfg.noise, cfg.noise);
            const float q = static_cast<float>(std::clamp(v, 0.0, 1.0));
            for (int ch = 0; ch < cfg.shape.channels; ++ch) {
              frame.pixels[ch * plane + y * W + x] = q;
            }
          }
        }
        video.frames.push_back(std::move(frame));
        cy += cfg.speed * std::sin(gen.angle);
        cx += cfg.speed * std::cos(gen.angle);
      }
      videos.push_back(std::move(video));
      video_labels.push_back(c);
    }
  }
  LabelTable labels = LabelTable::per_video(video_labels, std::move(class_names), videos);
  return FrameCorpus(cfg.shape, std::move(videos), std::move(labels));
}

// ---------------------------------------------------------------------------
// "More Unsupervised" transform: concatenate all videos, in a seed-determined
// random order, into one long video. Per-frame labels and the frame-to-source
// table are retained for evaluation; samplers use only index gaps.
// ---------------------------------------------------------------------------

inline FrameCorpus concat_mu(const FrameCorpus& corpus, std::uint64_t seed) {
  if (corpus.video_count() < 2) {
    throw ValidationError("concat_mu requires >= 2 videos");
  }
  std::vector<std::uint32_t> order(corpus.video_count());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
  Rng rng(seed);
  rng.shuffle(order);

  const bool labeled = corpus.has_labels();
  const LabelTable& source_labels = corpus.eval_labels();

  Video merged;
  merged.id = "mu";
  MuInfo mu;
  std::vector<int> frame_labels;
  for (std::uint32_t v : order) {
    const auto& video = corpus.video(v);
    for (std::size_t t = 0; t < video.frames.size(); ++t) {
      merged.frames.push_back(video.frames[t]);
      mu.source.push_back(v);
      if (labeled) frame_labels.push_back(source_labels.frame_label(v, t));
    }
  }

  LabelTable labels;
  if (labeled) {
    labels = LabelTable({std::move(frame_labels)},
                        std::vector<std::string>(source_labels.class_names()));
  }
  std::vector<Video> videos;
  videos.push_back(std::move(merged));
  return FrameCorpus(corpus.frame_shape(), std::move(videos), std::move(labels), std::move(mu));
}

}  // namespace cohere
