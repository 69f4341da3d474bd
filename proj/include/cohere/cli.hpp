#pragma once

#include <algorithm>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cohere/common.hpp"
#include "cohere/corpus.hpp"
#include "cohere/discovery.hpp"
#include "cohere/encoder.hpp"
#include "cohere/sampling.hpp"
#include "cohere/trainer.hpp"

namespace cohere::cli {

namespace detail {

inline std::string iso_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Records what a command did: resolved config, inputs, outputs with
/// checksums, timestamps. Written beside the primary artifacts.
class RunManifest {
 public:
  RunManifest(std::string command, std::uint64_t seed) {
    doc_["command"] = std::move(command);
    doc_["seed"] = seed;
    doc_["started_at"] = iso_timestamp();
    doc_["inputs"] = nlohmann::json::array();
    doc_["outputs"] = nlohmann::json::array();
  }

  void set_config(nlohmann::json config) { doc_["config"] = std::move(config); }

  void add_input(const std::filesystem::path& path) {
    doc_["inputs"].push_back(path.string());
  }

  void add_output(const std::filesystem::path& path) {
    doc_["outputs"].push_back(nlohmann::json{
        {"path", path.string()}, {"crc32", crc32(cohere::detail::read_file(path))}});
  }

  void write(const std::filesystem::path& path) {
    doc_["finished_at"] = iso_timestamp();
    cohere::detail::write_file(path, doc_.dump(2) + "\n");
  }

 private:
  nlohmann::json doc_;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  cohere::detail::write_file(path, doc.dump(2) + "\n");
}

inline nlohmann::json load_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(cohere::detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find(',', start);
    const std::string item =
        end == std::string::npos ? text.substr(start) : text.substr(start, end - start);
    if (!item.empty()) {
      try {
        seeds.push_back(std::stoull(item));
      } catch (const std::exception&) {
        throw ValidationError("bad seed '" + item + "' in --seeds");
      }
    }
    if (end == std::string::npos) break;
    start = end + 1;
  }
  if (seeds.empty()) throw ValidationError("--seeds needs at least one seed");
  return seeds;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// train config plumbing
// ---------------------------------------------------------------------------

inline nlohmann::json train_config_json(const TrainConfig& cfg) {
  return nlohmann::json{{"mode", to_string(cfg.mode)},
                        {"lambda", cfg.lambda},
                        {"lr0", cfg.lr0},
                        {"gamma", cfg.gamma},
                        {"lr_step", cfg.lr_step},
                        {"batch_pairs", cfg.batch_pairs},
                        {"batch_quads", cfg.batch_quads},
                        {"epochs", cfg.epochs},
                        {"tuples_per_epoch", cfg.tuples_per_epoch},
                        {"w", cfg.w},
                        {"n", cfg.n},
                        {"delta", cfg.delta},
                        {"alpha", cfg.alpha},
                        {"positive_fraction", cfg.positive_fraction},
                        {"mu_gap_min", cfg.mu_gap_min},
                        {"seed", cfg.seed}};
}

inline void apply_train_config_json(TrainConfig& cfg, const nlohmann::json& doc,
                                    const std::string& origin) {
  if (!doc.is_object()) throw ValidationError("train config must be a JSON object: " + origin);
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "mode") cfg.mode = parse_train_mode(value.get<std::string>());
      else if (key == "lambda") cfg.lambda = value.get<double>();
      else if (key == "lr0") cfg.lr0 = value.get<double>();
      else if (key == "gamma") cfg.gamma = value.get<double>();
      else if (key == "lr_step") cfg.lr_step = value.get<int>();
      else if (key == "batch_pairs") cfg.batch_pairs = value.get<int>();
      else if (key == "batch_quads") cfg.batch_quads = value.get<int>();
      else if (key == "epochs") cfg.epochs = value.get<int>();
      else if (key == "tuples_per_epoch") cfg.tuples_per_epoch = value.get<int>();
      else if (key == "w") cfg.w = value.get<int>();
      else if (key == "n") cfg.n = value.get<int>();
      else if (key == "delta") cfg.delta = value.get<double>();
      else if (key == "alpha") cfg.alpha = value.get<double>();
      else if (key == "positive_fraction") cfg.positive_fraction = value.get<double>();
      else if (key == "mu_gap_min") cfg.mu_gap_min = value.get<long long>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else throw ValidationError("unknown train config key '" + key + "' in " + origin);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("bad value for '" + key + "' in " + origin + ": " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// transfer split: per class, videos are divided into a training pool and a
// held-out pool, so held-out frames never come from a training video.
// ---------------------------------------------------------------------------

struct TransferSplit {
  LabeledSet train;
  LabeledSet heldout;
};

inline TransferSplit transfer_split(const FrameCorpus& corpus, int labels_per_class,
                                    std::uint64_t seed) {
  if (!corpus.has_labels()) throw ValidationError("fine-tuning needs a labeled corpus");
  if (labels_per_class < 1) throw ValidationError("labels per class must be >= 1");
  const LabelTable& table = corpus.eval_labels();
  const int num_classes = static_cast<int>(table.num_classes());
  if (num_classes < 2) throw ValidationError("fine-tuning needs >= 2 classes");

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t v = 0; v < corpus.video_count(); ++v) {
    const int label = table.video_label(v);
    if (label < 0) throw ValidationError("video " + corpus.video(v).id + " is unlabeled");
    by_class[static_cast<std::size_t>(label)].push_back(v);
  }

  Rng rng(substream(seed, 5));
  TransferSplit split;
  split.train.num_classes = num_classes;
  split.heldout.num_classes = num_classes;
  for (int c = 0; c < num_classes; ++c) {
    auto& videos = by_class[static_cast<std::size_t>(c)];
    if (videos.size() < 2) {
      throw ValidationError("class " + table.class_names()[static_cast<std::size_t>(c)] +
                            " needs >= 2 videos to split train/held-out");
    }
    rng.shuffle(videos);
    const std::size_t train_videos = (videos.size() + 1) / 2;

    std::vector<std::pair<std::size_t, std::size_t>> candidates;
    for (std::size_t i = 0; i < train_videos; ++i) {
      for (std::size_t t = 0; t < corpus.video(videos[i]).frames.size(); ++t) {
        candidates.emplace_back(videos[i], t);
      }
    }
    if (candidates.size() < static_cast<std::size_t>(labels_per_class)) {
      throw ValidationError("class " + table.class_names()[static_cast<std::size_t>(c)] +
                            " has too few frames for " + std::to_string(labels_per_class) +
                            " labels");
    }
    rng.shuffle(candidates);
    for (int i = 0; i < labels_per_class; ++i) {
      const auto [v, t] = candidates[static_cast<std::size_t>(i)];
      split.train.frames.push_back(corpus.video(v).frames[t]);
      split.train.labels.push_back(c);
    }
    for (std::size_t i = train_videos; i < videos.size(); ++i) {
      for (const auto& frame : corpus.video(videos[i]).frames) {
        split.heldout.frames.push_back(frame);
        split.heldout.labels.push_back(c);
      }
    }
  }
  return split;
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

namespace detail {

struct GenOptions {
  int classes = 5;
  int per_class = 4;
  int len = 30;
  std::string shape = "1x16x16";
  std::string format = "cfr";
  double noise = 0.02;
  double speed = 0.6;
  std::uint64_t seed = 0;
  bool allow_short = false;
  std::string out;
};

inline void cmd_gen(const GenOptions& opt) {
  if (opt.len < kDefaultNonNeighborOffset + 1 && !opt.allow_short) {
    throw ValidationError(
        "videos of length " + std::to_string(opt.len) +
        " cannot feed quadruplet training at the default non-neighbor offset n=" +
        std::to_string(kDefaultNonNeighborOffset) + " (needs --len >= " +
        std::to_string(kDefaultNonNeighborOffset + 1) +
        "); raise --len, or pass --allow-short and train with a smaller --n");
  }
  SynthConfig cfg;
  cfg.classes = opt.classes;
  cfg.videos_per_class = opt.per_class;
  cfg.frames_per_video = opt.len;
  cfg.shape = parse_frame_shape(opt.shape);
  cfg.seed = opt.seed;
  cfg.noise = opt.noise;
  cfg.speed = opt.speed;
  FrameFormat format;
  if (opt.format == "cfr") format = FrameFormat::Cfr;
  else if (opt.format == "pnm") format = FrameFormat::Pnm;
  else throw ValidationError("unknown frame format: " + opt.format);

  const FrameCorpus corpus = generate_synthetic(cfg);
  const auto paths = save_corpus(corpus, opt.out, format);

  RunManifest manifest("gen", opt.seed);
  manifest.set_config(nlohmann::json{{"classes", opt.classes},
                                     {"per_class", opt.per_class},
                                     {"len", opt.len},
                                     {"shape", opt.shape},
                                     {"format", opt.format},
                                     {"noise", opt.noise},
                                     {"speed", opt.speed},
                                     {"seed", opt.seed}});
  for (const auto& path : paths) manifest.add_output(path);
  manifest.write(std::filesystem::path(opt.out) / "run_manifest.json");

  std::cout << nlohmann::json{{"videos", corpus.video_count()},
                              {"frames", corpus.total_frames()},
                              {"classes", opt.classes},
                              {"manifest", (std::filesystem::path(opt.out) / "manifest.json").string()}}
                   .dump(2)
            << "\n";
}

struct TrainOptions {
  std::string data;
  std::string out;
  std::string config_path;
  std::string arch;
  std::string mode = "quadruplet";
  int embed_dim = 0;
  bool mu = false;
  TrainConfig cfg;

  CLI::Option* mode_opt = nullptr;
  CLI::Option* lambda_opt = nullptr;
  CLI::Option* lr_opt = nullptr;
  CLI::Option* gamma_opt = nullptr;
  CLI::Option* lr_step_opt = nullptr;
  CLI::Option* batch_pairs_opt = nullptr;
  CLI::Option* batch_quads_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* tuples_opt = nullptr;
  CLI::Option* w_opt = nullptr;
  CLI::Option* n_opt = nullptr;
  CLI::Option* delta_opt = nullptr;
  CLI::Option* alpha_opt = nullptr;
  CLI::Option* positive_opt = nullptr;
  CLI::Option* mu_gap_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

inline TrainConfig resolve_train_config(const TrainOptions& opt) {
  TrainConfig cfg;
  if (!opt.config_path.empty()) {
    apply_train_config_json(cfg, load_json(opt.config_path), opt.config_path);
  }
  const auto passed = [](const CLI::Option* o) { return o != nullptr && o->count() > 0; };
  if (passed(opt.mode_opt)) cfg.mode = parse_train_mode(opt.mode);
  if (passed(opt.lambda_opt)) cfg.lambda = opt.cfg.lambda;
  if (passed(opt.lr_opt)) cfg.lr0 = opt.cfg.lr0;
  if (passed(opt.gamma_opt)) cfg.gamma = opt.cfg.gamma;
  if (passed(opt.lr_step_opt)) cfg.lr_step = opt.cfg.lr_step;
  if (passed(opt.batch_pairs_opt)) cfg.batch_pairs = opt.cfg.batch_pairs;
  if (passed(opt.batch_quads_opt)) cfg.batch_quads = opt.cfg.batch_quads;
  if (passed(opt.epochs_opt)) cfg.epochs = opt.cfg.epochs;
  if (passed(opt.tuples_opt)) cfg.tuples_per_epoch = opt.cfg.tuples_per_epoch;
  if (passed(opt.w_opt)) cfg.w = opt.cfg.w;
  if (passed(opt.n_opt)) cfg.n = opt.cfg.n;
  if (passed(opt.delta_opt)) cfg.delta = opt.cfg.delta;
  if (passed(opt.alpha_opt)) cfg.alpha = opt.cfg.alpha;
  if (passed(opt.positive_opt)) cfg.positive_fraction = opt.cfg.positive_fraction;
  if (passed(opt.mu_gap_opt)) cfg.mu_gap_min = opt.cfg.mu_gap_min;
  if (passed(opt.seed_opt)) cfg.seed = opt.cfg.seed;
  return cfg;
}

inline void cmd_train(const TrainOptions& opt) {
  const TrainConfig cfg = resolve_train_config(opt);

  FrameCorpus corpus = load_corpus(opt.data);
  if (opt.mu) corpus = concat_mu(corpus, substream(cfg.seed, 4));
  const std::uint64_t label_baseline = corpus.label_read_count();

  EncoderSpec spec;
  if (!opt.arch.empty()) {
    spec = parse_encoder_spec(opt.arch);
  } else {
    const int dim =
        opt.embed_dim > 0 ? opt.embed_dim : (cfg.mode == TrainMode::Quadruplet ? 64 : 128);
    spec = default_encoder_spec(corpus.frame_shape(), dim);
  }

  const TrainReport report = train_unsupervised(corpus, spec, cfg);
  if (corpus.label_read_count() != label_baseline) {
    throw ComputeError("label blindness violated: training touched the label table");
  }

  const std::filesystem::path out(opt.out);
  std::filesystem::create_directories(out);
  const auto ckpt_path = out / "checkpoint.cenc";
  const auto report_path = out / "train_report.json";
  save_checkpoint(report.final_params, ckpt_path);
  write_json(report_path, nlohmann::json{{"config", train_config_json(cfg)},
                                         {"arch", format_encoder_spec(spec)},
                                         {"mu", opt.mu},
                                         {"loss", report.epoch_mean_loss}});

  RunManifest manifest("train", cfg.seed);
  nlohmann::json mconfig = train_config_json(cfg);
  mconfig["arch"] = format_encoder_spec(spec);
  mconfig["mu"] = opt.mu;
  manifest.set_config(std::move(mconfig));
  manifest.add_input(opt.data);
  if (!opt.config_path.empty()) manifest.add_input(opt.config_path);
  manifest.add_output(ckpt_path);
  manifest.add_output(report_path);
  manifest.write(out / "run_manifest.json");

  nlohmann::json summary{{"checkpoint", ckpt_path.string()},
                         {"report", report_path.string()},
                         {"epochs", cfg.epochs}};
  if (!report.epoch_mean_loss.empty()) summary["final_loss"] = report.epoch_mean_loss.back();
  std::cout << summary.dump(2) << "\n";
}

struct EmbedOptions {
  std::string ckpt;
  std::string data;
  std::string out;
  std::string tap = "penultimate";
  std::string granularity = "frames";
};

inline void cmd_embed(const EmbedOptions& opt) {
  const EncoderParams params = load_checkpoint(opt.ckpt);
  const FrameCorpus corpus = load_corpus(opt.data);
  const std::uint64_t label_baseline = corpus.label_read_count();
  const EmbeddedSet set = embed_corpus(params, parse_tap(opt.tap), corpus,
                                       parse_granularity(opt.granularity), false);
  if (corpus.label_read_count() != label_baseline) {
    throw ComputeError("label blindness violated: embedding touched the label table");
  }
  save_embedding_dump(set, opt.out);

  RunManifest manifest("embed", 0);
  manifest.set_config(nlohmann::json{{"tap", opt.tap}, {"granularity", opt.granularity}});
  manifest.add_input(opt.ckpt);
  manifest.add_input(opt.data);
  manifest.add_output(opt.out);
  manifest.write(opt.out + ".run.json");

  std::cout << nlohmann::json{{"out", opt.out},
                              {"items", set.points.rows()},
                              {"dim", set.points.cols()}}
                   .dump(2)
            << "\n";
}

struct EvalOptions {
  std::string ckpt;
  std::string data;
  std::string out;
  std::string algo = "kmeans";
  std::string tap = "penultimate";
  std::string granularity = "frames";
  int k = 0;
  int repeats = 10;
  std::size_t subsample = 0;
  double sigma = 0.0;
  int max_iters = 100;
  std::uint64_t seed = 0;
};

inline void cmd_eval(const EvalOptions& opt) {
  const EncoderParams params = load_checkpoint(opt.ckpt);
  const FrameCorpus corpus = load_corpus(opt.data);

  DiscoveryConfig cfg;
  cfg.algorithm = parse_cluster_algo(opt.algo);
  cfg.k = opt.k;
  cfg.repeats = opt.repeats;
  cfg.tap = parse_tap(opt.tap);
  cfg.granularity = parse_granularity(opt.granularity);
  cfg.subsample = opt.subsample;
  cfg.sigma = opt.sigma;
  cfg.max_iters = opt.max_iters;
  cfg.seed = opt.seed;

  const DiscoveryReport report = evaluate_discovery(params, corpus, cfg);
  const nlohmann::json doc = discovery_report_json(report);
  std::cout << doc.dump(2) << "\n";
  if (!opt.out.empty()) {
    write_json(opt.out, doc);
    RunManifest manifest("eval", opt.seed);
    manifest.set_config(nlohmann::json{{"algo", opt.algo},
                                       {"k", report.k},
                                       {"repeats", opt.repeats},
                                       {"tap", opt.tap},
                                       {"granularity", opt.granularity},
                                       {"subsample", opt.subsample},
                                       {"sigma", opt.sigma},
                                       {"max_iters", opt.max_iters},
                                       {"seed", opt.seed}});
    manifest.add_input(opt.ckpt);
    manifest.add_input(opt.data);
    manifest.add_output(opt.out);
    manifest.write(opt.out + ".run.json");
  }
}

struct FinetuneOptions {
  std::string data;
  std::string init = "random";
  std::string compare;
  std::string arch;
  std::string out;
  std::string tap = "penultimate";
  std::string seeds = "0";
  int embed_dim = 64;
  int labels_per_class = 5;
  int epochs = 50;
  double lr = 0.05;
  int batch = 10;
  bool freeze = false;
};

inline EncoderParams finetune_init(const std::string& init, const FinetuneOptions& opt,
                                   const FrameCorpus& corpus, std::uint64_t seed) {
  if (init == "random") {
    EncoderSpec spec = opt.arch.empty()
                           ? default_encoder_spec(corpus.frame_shape(), opt.embed_dim)
                           : parse_encoder_spec(opt.arch);
    return init_params(spec, seed);
  }
  return load_checkpoint(init);
}

inline void cmd_finetune(const FinetuneOptions& opt) {
  const FrameCorpus corpus = load_corpus(opt.data);
  const auto seeds = parse_seed_list(opt.seeds);

  FinetuneConfig fcfg;
  fcfg.freeze_encoder = opt.freeze;
  fcfg.epochs = opt.epochs;
  fcfg.lr = opt.lr;
  fcfg.batch = opt.batch;
  fcfg.tap = parse_tap(opt.tap);

  nlohmann::json runs = nlohmann::json::array();
  std::vector<double> uplifts;
  for (const std::uint64_t seed : seeds) {
    const TransferSplit split = transfer_split(corpus, opt.labels_per_class, seed);
    fcfg.seed = seed;
    if (opt.compare.empty()) {
      const EncoderParams params = finetune_init(opt.init, opt, corpus, seed);
      const FinetuneResult r = finetune_head(params, split.train, split.heldout, fcfg);
      runs.push_back(nlohmann::json{{"seed", seed},
                                    {"init", opt.init},
                                    {"train_accuracy", r.train_accuracy},
                                    {"heldout_accuracy", r.heldout_accuracy.value_or(0.0)}});
    } else {
      const FinetuneResult random_arm = finetune_head(
          finetune_init("random", opt, corpus, seed), split.train, split.heldout, fcfg);
      const FinetuneResult pretrained_arm = finetune_head(
          finetune_init(opt.compare, opt, corpus, seed), split.train, split.heldout, fcfg);
      const double uplift = pretrained_arm.heldout_accuracy.value_or(0.0) -
                            random_arm.heldout_accuracy.value_or(0.0);
      uplifts.push_back(uplift);
      runs.push_back(nlohmann::json{
          {"seed", seed},
          {"random_heldout_accuracy", random_arm.heldout_accuracy.value_or(0.0)},
          {"pretrained_heldout_accuracy", pretrained_arm.heldout_accuracy.value_or(0.0)},
          {"uplift", uplift}});
    }
  }

  nlohmann::json doc{{"mode", opt.compare.empty() ? "single" : "paired"},
                     {"tap", opt.tap},
                     {"freeze_encoder", opt.freeze},
                     {"labels_per_class", opt.labels_per_class},
                     {"epochs", opt.epochs},
                     {"lr", opt.lr},
                     {"batch", opt.batch},
                     {"runs", runs}};
  if (!uplifts.empty()) {
    std::sort(uplifts.begin(), uplifts.end());
    const std::size_t mid = uplifts.size() / 2;
    doc["median_uplift"] = uplifts.size() % 2 == 1
                               ? uplifts[mid]
                               : 0.5 * (uplifts[mid - 1] + uplifts[mid]);
  }
  std::cout << doc.dump(2) << "\n";
  if (!opt.out.empty()) {
    write_json(opt.out, doc);
    RunManifest manifest("finetune", seeds.front());
    manifest.set_config(doc);
    manifest.add_input(opt.data);
    if (opt.init != "random") manifest.add_input(opt.init);
    if (!opt.compare.empty()) manifest.add_input(opt.compare);
    manifest.add_output(opt.out);
    manifest.write(opt.out + ".run.json");
  }
}

}  // namespace detail

/// Parses and executes one command line (program name excluded). Returns the
/// process exit code: 0 success, 2 invalid input, 3 compute failure.
inline int run(std::vector<std::string> args) {
  CLI::App app{"temporal-coherence embedding toolkit"};
  app.name("cohere");
  app.require_subcommand(1);

  detail::GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic labeled video corpus");
  gen_cmd->add_option("--classes", gen.classes, "class count")->capture_default_str();
  gen_cmd->add_option("--per-class", gen.per_class, "videos per class")->capture_default_str();
  gen_cmd->add_option("--len", gen.len, "frames per video")->capture_default_str();
  gen_cmd->add_option("--shape", gen.shape, "frame shape CxHxW")->capture_default_str();
  gen_cmd->add_option("--format", gen.format, "frame file format (cfr|pnm)")->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "pixel noise amplitude")->capture_default_str();
  gen_cmd->add_option("--speed", gen.speed, "object drift per frame")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
  gen_cmd->add_flag("--allow-short", gen.allow_short, "permit videos too short for default training");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->callback([&gen] { detail::cmd_gen(gen); });

  detail::TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "train an encoder on an unlabeled corpus");
  train_cmd->add_option("--data", train.data, "corpus manifest path")->required();
  train_cmd->add_option("--out", train.out, "output directory")->required();
  train_cmd->add_option("--config", train.config_path, "JSON training config");
  train_cmd->add_option("--arch", train.arch, "encoder spec string");
  train_cmd->add_option("--embed-dim", train.embed_dim,
                        "embedding size for the default arch (0: per-mode default)");
  train.mode_opt = train_cmd->add_option("--mode", train.mode, "siamese|quadruplet|sfa")
                       ->capture_default_str();
  train.lambda_opt = train_cmd->add_option("--lambda", train.cfg.lambda, "weight decay")
                         ->capture_default_str();
  train.lr_opt = train_cmd->add_option("--lr", train.cfg.lr0, "initial learning rate")
                     ->capture_default_str();
  train.gamma_opt = train_cmd->add_option("--gamma", train.cfg.gamma, "lr decay factor")
                        ->capture_default_str();
  train.lr_step_opt = train_cmd->add_option("--lr-step", train.cfg.lr_step,
                                            "epochs per lr decay (0: epochs/3)")
                          ->capture_default_str();
  train.batch_pairs_opt = train_cmd->add_option("--batch-pairs", train.cfg.batch_pairs,
                                                "pair batch size")
                              ->capture_default_str();
  train.batch_quads_opt = train_cmd->add_option("--batch-quads", train.cfg.batch_quads,
                                                "quadruplet batch size")
                              ->capture_default_str();
  train.epochs_opt = train_cmd->add_option("--epochs", train.cfg.epochs, "training epochs")
                         ->capture_default_str();
  train.tuples_opt = train_cmd->add_option("--tuples", train.cfg.tuples_per_epoch,
                                           "tuples sampled per epoch")
                         ->capture_default_str();
  train.w_opt = train_cmd->add_option("--w", train.cfg.w, "neighbor window")->capture_default_str();
  train.n_opt = train_cmd->add_option("--n", train.cfg.n, "non-neighbor offset")
                    ->capture_default_str();
  train.delta_opt = train_cmd->add_option("--delta", train.cfg.delta, "pair margin")
                        ->capture_default_str();
  train.alpha_opt = train_cmd->add_option("--alpha", train.cfg.alpha, "global margin")
                        ->capture_default_str();
  train.positive_opt = train_cmd->add_option("--positive-fraction", train.cfg.positive_fraction,
                                             "positive share of each pair batch")
                           ->capture_default_str();
  train.mu_gap_opt = train_cmd->add_option("--mu-gap", train.cfg.mu_gap_min,
                                           "minimum MU negative gap (-1: 2n)")
                         ->capture_default_str();
  train.seed_opt = train_cmd->add_option("--seed", train.cfg.seed, "training seed")
                       ->capture_default_str();
  train_cmd->add_flag("--mu", train.mu, "concatenate all videos into one long video first");
  train_cmd->callback([&train] { detail::cmd_train(train); });

  detail::EmbedOptions embed;
  auto* embed_cmd = app.add_subcommand("embed", "dump embeddings for a corpus");
  embed_cmd->add_option("--ckpt", embed.ckpt, "checkpoint path")->required();
  embed_cmd->add_option("--data", embed.data, "corpus manifest path")->required();
  embed_cmd->add_option("--out", embed.out, "embedding dump path")->required();
  embed_cmd->add_option("--tap", embed.tap, "penultimate|final")->capture_default_str();
  embed_cmd->add_option("--granularity", embed.granularity, "frames|videos")
      ->capture_default_str();
  embed_cmd->callback([&embed] { detail::cmd_embed(embed); });

  detail::EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "cluster embeddings and score discovery");
  eval_cmd->add_option("--ckpt", eval.ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval.data, "labeled corpus manifest path")->required();
  eval_cmd->add_option("--out", eval.out, "report path (also printed)");
  eval_cmd->add_option("--algo", eval.algo, "kmeans|spectral")->capture_default_str();
  eval_cmd->add_option("--k", eval.k, "cluster count (0: class count)")->capture_default_str();
  eval_cmd->add_option("--repeats", eval.repeats, "clustering repeats")->capture_default_str();
  eval_cmd->add_option("--tap", eval.tap, "penultimate|final")->capture_default_str();
  eval_cmd->add_option("--granularity", eval.granularity, "frames|videos")->capture_default_str();
  eval_cmd->add_option("--subsample", eval.subsample, "cluster at most this many items (0: all)")
      ->capture_default_str();
  eval_cmd->add_option("--sigma", eval.sigma, "spectral kernel width (0: median distance)")
      ->capture_default_str();
  eval_cmd->add_option("--max-iters", eval.max_iters, "k-means iteration cap")
      ->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed, "clustering seed")->capture_default_str();
  eval_cmd->callback([&eval] { detail::cmd_eval(eval); });

  detail::FinetuneOptions ft;
  auto* ft_cmd = app.add_subcommand("finetune", "train a classifier head on labeled frames");
  ft_cmd->add_option("--data", ft.data, "labeled corpus manifest path")->required();
  ft_cmd->add_option("--init", ft.init, "'random' or a checkpoint path")->capture_default_str();
  ft_cmd->add_option("--compare", ft.compare,
                     "checkpoint path; runs random vs pretrained arms per seed");
  ft_cmd->add_option("--arch", ft.arch, "encoder spec for random init");
  ft_cmd->add_option("--embed-dim", ft.embed_dim, "default-arch embedding size for random init")
      ->capture_default_str();
  ft_cmd->add_option("--out", ft.out, "report path (also printed)");
  ft_cmd->add_option("--tap", ft.tap, "penultimate|final")->capture_default_str();
  ft_cmd->add_option("--seeds", ft.seeds, "comma-separated split/init seeds")
      ->capture_default_str();
  ft_cmd->add_option("--labels-per-class", ft.labels_per_class, "labeled frames per class")
      ->capture_default_str();
  ft_cmd->add_option("--epochs", ft.epochs, "head training epochs")->capture_default_str();
  ft_cmd->add_option("--lr", ft.lr, "head learning rate")->capture_default_str();
  ft_cmd->add_option("--batch", ft.batch, "head batch size")->capture_default_str();
  ft_cmd->add_flag("--freeze-encoder", ft.freeze, "train only the head");
  ft_cmd->callback([&ft] { detail::cmd_finetune(ft); });

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ComputeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace cohere::cli
