// End-to-end tour: synthesize a tiny labeled video corpus, train an encoder
// on temporal structure alone, then score how well clusters of its embeddings
// line up with the held-back labels.

#include <iostream>

#include <cohere/cohere.hpp>

int main() {
  using namespace cohere;

  SynthConfig scfg;
  scfg.classes = 3;
  scfg.videos_per_class = 3;
  scfg.frames_per_video = 30;
  scfg.shape = FrameShape{1, 12, 12};
  scfg.seed = 1;
  const FrameCorpus corpus = generate_synthetic(scfg);
  std::cout << "corpus: " << corpus.video_count() << " videos, " << corpus.total_frames()
            << " frames of " << to_string(corpus.frame_shape()) << "\n";

  const EncoderSpec spec =
      parse_encoder_spec("in:1x12x12,conv:4x3,relu,pool:2,dense:32,relu,dense:16,tap:final");

  TrainConfig tcfg;
  tcfg.mode = TrainMode::Quadruplet;
  tcfg.epochs = 4;
  tcfg.tuples_per_epoch = 400;
  tcfg.batch_quads = 20;
  tcfg.n = 10;
  tcfg.lr0 = 0.01;
  tcfg.seed = 7;
  const TrainReport report = train_unsupervised(corpus, spec, tcfg);
  std::cout << "trained " << to_string(tcfg.mode) << " for " << tcfg.epochs
            << " epochs, mean loss per epoch:";
  for (const double loss : report.epoch_mean_loss) std::cout << " " << loss;
  std::cout << "\n";

  DiscoveryConfig dcfg;
  dcfg.algorithm = ClusterAlgo::KMeans;
  dcfg.repeats = 5;
  dcfg.tap = Tap::Final;
  dcfg.seed = 2;
  const DiscoveryReport random_side = evaluate_discovery(init_params(spec, 7), corpus, dcfg);
  const DiscoveryReport trained_side = evaluate_discovery(report.final_params, corpus, dcfg);

  std::cout << "conditional entropy, random weights:  " << random_side.ce_mean << " +/- "
            << random_side.ce_std << " bits\n";
  std::cout << "conditional entropy, trained weights: " << trained_side.ce_mean << " +/- "
            << trained_side.ce_std << " bits\n";
  std::cout << "effective residual classes: " << uncertainty_reduction(trained_side.ce_mean)
            << "\n";
  return 0;
}
