#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cohere/common.hpp"
#include "cohere/corpus.hpp"

namespace cohere {

using Embedding = Eigen::VectorXd;

enum class Tap { Penultimate, Final };

inline std::string to_string(Tap tap) {
  return tap == Tap::Final ? "final" : "penultimate";
}

inline Tap parse_tap(std::string_view s) {
  if (s == "final") return Tap::Final;
  if (s == "penultimate" || s == "pen") return Tap::Penultimate;
  throw ValidationError("unknown tap: " + std::string(s));
}

enum class LayerKind { Conv, ReLU, MaxPool, Dense };

struct LayerDesc {
  LayerKind kind = LayerKind::ReLU;
  int channels = 0;  // conv output channels
  int kernel = 0;    // conv kernel size (odd, 'same' padding)
  int window = 0;    // pool window and stride
  int units = 0;     // dense output size
};

/// Architecture description: layer chain plus input shape. The canonical
/// string form round-trips through parse_encoder_spec/format_encoder_spec and
/// is what checkpoints embed.
struct EncoderSpec {
  FrameShape input;
  std::vector<LayerDesc> layers;
  Tap default_tap = Tap::Penultimate;
};

inline std::string format_encoder_spec(const EncoderSpec& spec) {
  std::string out = "in:" + to_string(spec.input);
  for (const auto& layer : spec.layers) {
    out += ",";
    switch (layer.kind) {
      case LayerKind::Conv:
        out += "conv:" + std::to_string(layer.channels) + "x" + std::to_string(layer.kernel);
        break;
      case LayerKind::ReLU: out += "relu"; break;
      case LayerKind::MaxPool: out += "pool:" + std::to_string(layer.window); break;
      case LayerKind::Dense: out += "dense:" + std::to_string(layer.units); break;
    }
  }
  out += ",tap:" + to_string(spec.default_tap);
  return out;
}

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t end = s.find(sep, start);
    if (end == std::string_view::npos) {
      parts.emplace_back(s.substr(start));
      break;
    }
    parts.emplace_back(s.substr(start, end - start));
    start = end + 1;
  }
  return parts;
}

inline int parse_int(std::string_view s, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(std::string(s), &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("bad " + what + ": '" + std::string(s) + "'");
  }
}

}  // namespace detail

inline FrameShape parse_frame_shape(std::string_view s) {
  const auto dims = detail::split(s, 'x');
  if (dims.size() != 3) throw ValidationError("shape must be CxHxW, got '" + std::string(s) + "'");
  return FrameShape{detail::parse_int(dims[0], "channels"), detail::parse_int(dims[1], "height"),
                    detail::parse_int(dims[2], "width")};
}

inline EncoderSpec parse_encoder_spec(std::string_view text) {
  EncoderSpec spec;
  bool have_input = false;
  for (const auto& token : detail::split(text, ',')) {
    if (token.empty()) continue;
    const std::size_t colon = token.find(':');
    const std::string head = token.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : token.substr(colon + 1);
    if (head == "in") {
      spec.input = parse_frame_shape(arg);
      have_input = true;
    } else if (head == "conv") {
      const auto dims = detail::split(arg, 'x');
      if (dims.size() != 2) throw ValidationError("conv wants channels x kernel, got '" + arg + "'");
      LayerDesc l;
      l.kind = LayerKind::Conv;
      l.channels = detail::parse_int(dims[0], "conv channels");
      l.kernel = detail::parse_int(dims[1], "conv kernel");
      spec.layers.push_back(l);
    } else if (head == "relu") {
      spec.layers.push_back({LayerKind::ReLU});
    } else if (head == "pool") {
      LayerDesc l;
      l.kind = LayerKind::MaxPool;
      l.window = detail::parse_int(arg, "pool window");
      spec.layers.push_back(l);
    } else if (head == "dense") {
      LayerDesc l;
      l.kind = LayerKind::Dense;
      l.units = detail::parse_int(arg, "dense units");
      spec.layers.push_back(l);
    } else if (head == "tap") {
      spec.default_tap = parse_tap(arg);
    } else {
      throw ValidationError("unknown layer token '" + token + "'");
    }
  }
  if (!have_input) throw ValidationError("encoder spec lacks in:CxHxW");
  return spec;
}

/// Stock architecture: two conv/pool stages feeding two dense layers. The
/// final dense emits the training embedding; the penultimate tap reads the
/// activations right before it.
inline EncoderSpec default_encoder_spec(FrameShape input, int embed_dim) {
  EncoderSpec spec;
  spec.input = input;
  spec.layers = {
      {LayerKind::Conv, 8, 3, 0, 0},  {LayerKind::ReLU},
      {LayerKind::MaxPool, 0, 0, 2, 0}, {LayerKind::Conv, 16, 3, 0, 0},
      {LayerKind::ReLU},              {LayerKind::MaxPool, 0, 0, 2, 0},
      {LayerKind::Dense, 0, 0, 0, 256}, {LayerKind::ReLU},
      {LayerKind::Dense, 0, 0, 0, embed_dim},
  };
  return spec;
}

/// Output shape of every layer, in order; throws if the chain is inconsistent.
inline std::vector<FrameShape> chain_shapes(const EncoderSpec& spec) {
  if (spec.layers.empty()) throw ValidationError("encoder spec has no layers");
  std::vector<FrameShape> shapes;
  FrameShape cur = spec.input;
  if (cur.channels < 1 || cur.height < 1 || cur.width < 1) {
    throw ValidationError("bad encoder input shape " + to_string(cur));
  }
  bool flattened = false;
  for (const auto& layer : spec.layers) {
    switch (layer.kind) {
      case LayerKind::Conv: {
        if (flattened) throw ValidationError("conv layer after dense layer");
        if (layer.channels < 1) throw ValidationError("conv needs >= 1 output channel");
        if (layer.kernel < 1 || layer.kernel % 2 == 0) {
          throw ValidationError("conv kernel must be odd and >= 1");
        }
        cur = FrameShape{layer.channels, cur.height, cur.width};
        break;
      }
      case LayerKind::MaxPool: {
        if (flattened) throw ValidationError("pool layer after dense layer");
        if (layer.window < 1) throw ValidationError("pool window must be >= 1");
        const int h = cur.height / layer.window;
        const int w = cur.width / layer.window;
        if (h < 1 || w < 1) {
          throw ValidationError("pool window " + std::to_string(layer.window) +
                                " collapses a " + to_string(cur) + " activation");
        }
        cur = FrameShape{cur.channels, h, w};
        break;
      }
      case LayerKind::ReLU:
        break;
      case LayerKind::Dense: {
        if (layer.units < 1) throw ValidationError("dense needs >= 1 unit");
        cur = FrameShape{layer.units, 1, 1};
        flattened = true;
        break;
      }
    }
    shapes.push_back(cur);
  }
  return shapes;
}

/// Index of the last layer contributing to the embedding at `tap`.
inline int tap_layer_index(const EncoderSpec& spec, Tap tap) {
  chain_shapes(spec);  // validate
  if (tap == Tap::Final) return static_cast<int>(spec.layers.size()) - 1;
  if (spec.layers.size() < 2) {
    throw ValidationError("penultimate tap needs at least two layers");
  }
  return static_cast<int>(spec.layers.size()) - 2;
}

inline int embedding_dim(const EncoderSpec& spec, Tap tap) {
  const auto shapes = chain_shapes(spec);
  return static_cast<int>(shapes[static_cast<std::size_t>(tap_layer_index(spec, tap))].size());
}

// ---------------------------------------------------------------------------
// Parameters. Conv weights are stored row = output channel, column =
// (in_channel * k + ky) * k + kx, matching the im2col layout used by the
// forward pass.
// ---------------------------------------------------------------------------

struct LayerParams {
  Eigen::MatrixXd weight;  // empty for relu / pool
  Eigen::VectorXd bias;

  bool empty() const { return weight.size() == 0 && bias.size() == 0; }
};

struct EncoderParams {
  EncoderSpec spec;
  std::vector<LayerParams> layers;
};

/// Shape-congruent with EncoderParams; one (possibly empty) block per layer.
using GradientSet = std::vector<LayerParams>;

inline GradientSet zero_gradients(const EncoderParams& params) {
  GradientSet grads(params.layers.size());
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    if (params.layers[i].empty()) continue;
    grads[i].weight = Eigen::MatrixXd::Zero(params.layers[i].weight.rows(),
                                            params.layers[i].weight.cols());
    grads[i].bias = Eigen::VectorXd::Zero(params.layers[i].bias.size());
  }
  return grads;
}

inline std::size_t parameter_count(const EncoderParams& params) {
  std::size_t n = 0;
  for (const auto& l : params.layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

/// Fan-in-scaled uniform weights (variance 1/fan_in), zero biases.
inline EncoderParams init_params(const EncoderSpec& spec, std::uint64_t seed) {
  const auto shapes = chain_shapes(spec);
  EncoderParams params;
  params.spec = spec;
  params.layers.resize(spec.layers.size());
  Rng rng(seed);
  FrameShape cur = spec.input;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& desc = spec.layers[i];
    if (desc.kind == LayerKind::Conv || desc.kind == LayerKind::Dense) {
      const int fan_in = desc.kind == LayerKind::Conv
                             ? cur.channels * desc.kernel * desc.kernel
                             : static_cast<int>(cur.size());
      const int fan_out = desc.kind == LayerKind::Conv ? desc.channels : desc.units;
      const double bound = std::sqrt(3.0 / fan_in);
      auto& block = params.layers[i];
      block.weight.resize(fan_out, fan_in);
      for (Eigen::Index r = 0; r < block.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < block.weight.cols(); ++c) {
          block.weight(r, c) = rng.uniform(-bound, bound);
        }
      }
      block.bias = Eigen::VectorXd::Zero(fan_out);
    }
    cur = shapes[i];
  }
  return params;
}

// ---------------------------------------------------------------------------
// Forward / backward. Activations are flat vectors in channel-major (c, y, x)
// order. The trace keeps every intermediate the backward pass needs.
// ---------------------------------------------------------------------------

struct ActivationTrace {
  struct Layer {
    Eigen::VectorXd input;          // activation entering this layer
    FrameShape in_shape;
    Eigen::MatrixXd conv_cols;      // im2col patches (conv only)
    std::vector<int> pool_argmax;   // winning input index per output cell (pool only)
  };
  std::vector<Layer> layers;  // entries 0..tap_end
  int tap_end = -1;
  Tap tap = Tap::Final;
  Embedding embedding;
};

namespace detail {

inline Eigen::MatrixXd im2col(const Eigen::VectorXd& x, const FrameShape& s, int k) {
  const int pad = k / 2;
  Eigen::MatrixXd cols(static_cast<Eigen::Index>(s.channels) * k * k,
                       static_cast<Eigen::Index>(s.height) * s.width);
  for (int y = 0; y < s.height; ++y) {
    for (int xw = 0; xw < s.width; ++xw) {
      const Eigen::Index col = static_cast<Eigen::Index>(y) * s.width + xw;
      for (int c = 0; c < s.channels; ++c) {
        for (int ky = 0; ky < k; ++ky) {
          const int iy = y + ky - pad;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = xw + kx - pad;
            const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
            cols(row, col) =
                (iy >= 0 && iy < s.height && ix >= 0 && ix < s.width)
                    ? x[(static_cast<Eigen::Index>(c) * s.height + iy) * s.width + ix]
                    : 0.0;
          }
        }
      }
    }
  }
  return cols;
}

inline void col2im_add(const Eigen::MatrixXd& dcols, const FrameShape& s, int k,
                       Eigen::VectorXd& dx) {
  const int pad = k / 2;
  for (int y = 0; y < s.height; ++y) {
    for (int xw = 0; xw < s.width; ++xw) {
      const Eigen::Index col = static_cast<Eigen::Index>(y) * s.width + xw;
      for (int c = 0; c < s.channels; ++c) {
        for (int ky = 0; ky < k; ++ky) {
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= s.height) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = xw + kx - pad;
            if (ix < 0 || ix >= s.width) continue;
            const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
            dx[(static_cast<Eigen::Index>(c) * s.height + iy) * s.width + ix] += dcols(row, col);
          }
        }
      }
    }
  }
}

inline Eigen::VectorXd frame_to_vector(const Frame& frame) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(frame.pixels.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = frame.pixels[static_cast<std::size_t>(i)];
  return x;
}

}  // namespace detail

/// Embeds one frame at the given tap, recording the trace for backward.
inline Embedding forward_traced(const EncoderParams& params, const Frame& frame, Tap tap,
                                ActivationTrace& trace) {
  const auto& spec = params.spec;
  const auto shapes = chain_shapes(spec);
  if (frame.pixels.size() != spec.input.size()) {
    throw ValidationError("frame size " + std::to_string(frame.pixels.size()) +
                          " does not match encoder input " + to_string(spec.input));
  }
  if (params.layers.size() != spec.layers.size()) {
    throw ValidationError("encoder params do not match spec layer count");
  }
  const int tap_end = tap_layer_index(spec, tap);

  trace.layers.clear();
  trace.layers.resize(static_cast<std::size_t>(tap_end) + 1);
  trace.tap_end = tap_end;
  trace.tap = tap;

  Eigen::VectorXd act = detail::frame_to_vector(frame);
  FrameShape cur = spec.input;
  for (int i = 0; i <= tap_end; ++i) {
    const auto& desc = spec.layers[static_cast<std::size_t>(i)];
    auto& slot = trace.layers[static_cast<std::size_t>(i)];
    slot.in_shape = cur;
    switch (desc.kind) {
      case LayerKind::Conv: {
        slot.input = std::move(act);
        slot.conv_cols = detail::im2col(slot.input, cur, desc.kernel);
        const auto& block = params.layers[static_cast<std::size_t>(i)];
        Eigen::MatrixXd out = block.weight * slot.conv_cols;
        out.colwise() += block.bias;
        act.resize(out.size());
        const Eigen::Index hw = out.cols();
        for (Eigen::Index ch = 0; ch < out.rows(); ++ch) {
          for (Eigen::Index p = 0; p < hw; ++p) act[ch * hw + p] = out(ch, p);
        }
        break;
      }
      case LayerKind::ReLU: {
        slot.input = act;
        act = act.cwiseMax(0.0);
        break;
      }
      case LayerKind::MaxPool: {
        slot.input = std::move(act);
        const int p = desc.window;
        const int ho = cur.height / p, wo = cur.width / p;
        act.resize(static_cast<Eigen::Index>(cur.channels) * ho * wo);
        slot.pool_argmax.resize(static_cast<std::size_t>(act.size()));
        for (int c = 0; c < cur.channels; ++c) {
          for (int yo = 0; yo < ho; ++yo) {
            for (int xo = 0; xo < wo; ++xo) {
              double best = -std::numeric_limits<double>::infinity();
              int best_idx = -1;
              for (int dy = 0; dy < p; ++dy) {
                for (int dx = 0; dx < p; ++dx) {
                  const int idx =
                      (c * cur.height + yo * p + dy) * cur.width + xo * p + dx;
                  if (slot.input[idx] > best) {
                    best = slot.input[idx];
                    best_idx = idx;
                  }
                }
              }
              const Eigen::Index out_idx =
                  (static_cast<Eigen::Index>(c) * ho + yo) * wo + xo;
              act[out_idx] = best;
              slot.pool_argmax[static_cast<std::size_t>(out_idx)] = best_idx;
            }
          }
        }
        break;
      }
      case LayerKind::Dense: {
        slot.input = std::move(act);
        const auto& block = params.layers[static_cast<std::size_t>(i)];
        act = block.weight * slot.input + block.bias;
        break;
      }
    }
    cur = shapes[static_cast<std::size_t>(i)];
  }
  trace.embedding = act;
  return act;
}

inline Embedding forward(const EncoderParams& params, const Frame& frame,
                         Tap tap = Tap::Final) {
  ActivationTrace trace;
  return forward_traced(params, frame, tap, trace);
}

/// Accumulates d(embedding . grad_at_embedding)/dW into `accum`. Layers past
/// the trace's tap keep their (zero) blocks untouched.
inline void backward_into(const EncoderParams& params, const ActivationTrace& trace,
                          const Eigen::VectorXd& grad_at_embedding, GradientSet& accum) {
  if (trace.tap_end < 0 || trace.layers.size() != static_cast<std::size_t>(trace.tap_end) + 1 ||
      accum.size() != params.layers.size()) {
    throw ValidationError("activation trace does not match encoder params");
  }
  if (grad_at_embedding.size() != trace.embedding.size()) {
    throw ValidationError("gradient dimension does not match traced embedding");
  }
  Eigen::VectorXd grad = grad_at_embedding;
  for (int i = trace.tap_end; i >= 0; --i) {
    const auto& desc = params.spec.layers[static_cast<std::size_t>(i)];
    const auto& slot = trace.layers[static_cast<std::size_t>(i)];
    switch (desc.kind) {
      case LayerKind::Conv: {
        const auto& block = params.layers[static_cast<std::size_t>(i)];
        const Eigen::Index hw =
            static_cast<Eigen::Index>(slot.in_shape.height) * slot.in_shape.width;
        Eigen::MatrixXd g(block.weight.rows(), hw);
        for (Eigen::Index ch = 0; ch < g.rows(); ++ch) {
          for (Eigen::Index p = 0; p < hw; ++p) g(ch, p) = grad[ch * hw + p];
        }
        accum[static_cast<std::size_t>(i)].weight.noalias() += g * slot.conv_cols.transpose();
        accum[static_cast<std::size_t>(i)].bias.noalias() += g.rowwise().sum();
        if (i > 0) {
          const Eigen::MatrixXd dcols = block.weight.transpose() * g;
          Eigen::VectorXd dx = Eigen::VectorXd::Zero(slot.input.size());
          detail::col2im_add(dcols, slot.in_shape, desc.kernel, dx);
          grad = std::move(dx);
        }
        break;
      }
      case LayerKind::ReLU: {
        for (Eigen::Index j = 0; j < grad.size(); ++j) {
          if (slot.input[j] <= 0.0) grad[j] = 0.0;
        }
        break;
      }
      case LayerKind::MaxPool: {
        Eigen::VectorXd dx = Eigen::VectorXd::Zero(slot.input.size());
        for (std::size_t j = 0; j < slot.pool_argmax.size(); ++j) {
          dx[slot.pool_argmax[j]] += grad[static_cast<Eigen::Index>(j)];
        }
        grad = std::move(dx);
        break;
      }
      case LayerKind::Dense: {
        const auto& block = params.layers[static_cast<std::size_t>(i)];
        accum[static_cast<std::size_t>(i)].weight.noalias() += grad * slot.input.transpose();
        accum[static_cast<std::size_t>(i)].bias.noalias() += grad;
        if (i > 0) grad = block.weight.transpose() * grad;
        break;
      }
    }
  }
}

inline GradientSet backward(const EncoderParams& params, const ActivationTrace& trace,
                            const Eigen::VectorXd& grad_at_embedding) {
  GradientSet grads = zero_gradients(params);
  backward_into(params, trace, grad_at_embedding, grads);
  return grads;
}

/// Embeds a batch of frames; elementwise equal to mapping forward, and safe
/// to parallelize since every branch shares the one parameter set.
inline std::vector<Embedding> batch_forward(const EncoderParams& params,
                                            const std::vector<const Frame*>& frames,
                                            Tap tap = Tap::Final) {
  std::vector<Embedding> out(frames.size());
  parallel_for(frames.size(), [&](std::size_t i) { out[i] = forward(params, *frames[i], tap); });
  return out;
}

inline std::vector<Embedding> batch_forward(const EncoderParams& params,
                                            const std::vector<Frame>& frames,
                                            Tap tap = Tap::Final) {
  std::vector<const Frame*> refs(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) refs[i] = &frames[i];
  return batch_forward(params, refs, tap);
}

// ---------------------------------------------------------------------------
// Checkpoint format CENC1: magic "CENC1", u32 spec-string length, the UTF-8
// spec string, every parameter block in spec order (weights row-major, then
// bias) as f32 LE, then a u32 CRC32 of everything after the magic.
// ---------------------------------------------------------------------------

inline std::string checkpoint_bytes(const EncoderParams& params) {
  const std::string spec_text = format_encoder_spec(params.spec);
  std::string payload;
  put_u32(payload, static_cast<std::uint32_t>(spec_text.size()));
  payload += spec_text;
  for (const auto& block : params.layers) {
    for (Eigen::Index r = 0; r < block.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < block.weight.cols(); ++c) {
        put_f32(payload, static_cast<float>(block.weight(r, c)));
      }
    }
    for (Eigen::Index i = 0; i < block.bias.size(); ++i) {
      put_f32(payload, static_cast<float>(block.bias[i]));
    }
  }
  std::string out = "CENC1";
  out += payload;
  put_u32(out, crc32(payload));
  return out;
}

inline EncoderParams params_from_checkpoint_bytes(std::string_view data,
                                                  const std::string& origin) {
  if (data.size() < 9 || data.substr(0, 5) != "CENC1") {
    throw ValidationError("not a CENC1 checkpoint: " + origin);
  }
  const std::string_view payload = data.substr(5, data.size() - 9);
  ByteReader crc_reader(data.substr(5 + payload.size()));
  if (crc_reader.u32() != crc32(payload)) {
    throw ValidationError("checkpoint CRC mismatch: " + origin);
  }
  ByteReader r(payload);
  const std::uint32_t spec_len = r.u32();
  const EncoderSpec spec = parse_encoder_spec(std::string(r.bytes(spec_len)));

  EncoderParams params = init_params(spec, 0);
  for (auto& block : params.layers) {
    for (Eigen::Index row = 0; row < block.weight.rows(); ++row) {
      for (Eigen::Index c = 0; c < block.weight.cols(); ++c) {
        block.weight(row, c) = static_cast<double>(r.f32());
      }
    }
    for (Eigen::Index i = 0; i < block.bias.size(); ++i) {
      block.bias[i] = static_cast<double>(r.f32());
    }
  }
  if (!r.done()) throw ValidationError("trailing bytes in checkpoint: " + origin);
  return params;
}

inline void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path) {
  detail::write_file(path, checkpoint_bytes(params));
}

inline EncoderParams load_checkpoint(const std::filesystem::path& path) {
  return params_from_checkpoint_bytes(detail::read_file(path), path.string());
}

}  // namespace cohere
