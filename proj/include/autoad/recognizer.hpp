#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <memory>
#include <vector>

#include "autoad/nn/layers.hpp"
#include "autoad/nn/optim.hpp"

namespace autoad::recognizer {

struct RecognizerConfig {
  int proj_in = 512;
  int channels = 512;  // also the projection output width
  int num_blocks = 2;
  int heads = 8;
  int ff_dim = 2048;
  double threshold = 0.5;

  void validate() const;
};

struct RecognitionResult {
  std::vector<double> probabilities;       // one per exemplar, in [0,1]
  std::vector<int> active;                 // indices with p >= threshold
};

// Exemplars act as queries over projected clip-frame keys/values; a shared
// linear projection feeds both sides. No positional encoding on frames and
// no attention among queries, so outputs are per-character independent.
class RecognizerModel {
 public:
  RecognizerModel(RecognizerConfig config, uint64_t seed);

  const RecognizerConfig& config() const { return config_; }

  nn::NodePtr forward_logits(nn::Graph& g, const Eigen::MatrixXd& exemplars,
                             const Eigen::MatrixXd& clip_features);

  RecognitionResult recognize(const Eigen::MatrixXd& exemplars,
                              const Eigen::MatrixXd& clip_features);

  std::vector<nn::Parameter*> parameters();

  void save(const std::filesystem::path& file) const;
  static RecognizerModel load(const std::filesystem::path& file);

 private:
  RecognizerConfig config_;
  std::unique_ptr<nn::Linear> proj_;
  std::vector<std::unique_ptr<nn::CrossDecoderBlock>> blocks_;
  std::unique_ptr<nn::LayerNormLayer> final_ln_;
  std::unique_ptr<nn::Linear> head_;
};

// Character j is active iff max over frames of cosine(e_j, frame) >= alpha.
std::vector<int> cosine_baseline(const Eigen::MatrixXd& exemplars,
                                 const Eigen::MatrixXd& clip_features, double alpha);

// Per-character max-cosine scores, the statistic the baseline thresholds.
std::vector<double> cosine_scores(const Eigen::MatrixXd& exemplars,
                                  const Eigen::MatrixXd& clip_features);

struct TrainingSample {
  Eigen::MatrixXd exemplars;      // C x D
  Eigen::MatrixXd clip_features;  // N x D
  std::vector<int> labels;        // size C, 0/1
};

struct TrainOptions {
  int epochs = 10;
  double lr = 1e-4;
  double weight_decay = 0.01;
  long warmup_steps = 20;
};

struct TrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Balanced BCE over per-character labels; inverse-frequency class weights
// computed once over the whole dataset. Deterministic under `seed`.
TrainReport train_recognizer(RecognizerModel& model,
                             const std::vector<TrainingSample>& dataset,
                             const TrainOptions& options, uint64_t seed);

}  // namespace autoad::recognizer
