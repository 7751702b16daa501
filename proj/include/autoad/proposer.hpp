#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <memory>
#include <vector>

#include "autoad/common.hpp"
#include "autoad/feature_store.hpp"
#include "autoad/nn/layers.hpp"
#include "autoad/text.hpp"

namespace autoad::proposer {

enum class GapLabel { ContainsAd, NoAd, Unlabeled };

struct GapSample {
  double start_s = 0.0;
  double end_s = 0.0;
  GapLabel label = GapLabel::Unlabeled;

  double duration() const { return end_s - start_s; }
};

struct ContextWindow {
  double window_start_s = 0.0;
  double window_end_s = 30.0;
  std::vector<TimedText> speech;     // clipped to the window, sorted
  std::vector<GapSample> gaps;       // complement of speech within the window
  Eigen::MatrixXd visual;            // one row per second, <= 30 x D

  double span() const { return window_end_s - window_start_s; }
};

struct TokenSequence {
  std::vector<int> tokens;
  std::vector<size_t> mask_positions;  // aligned 1:1 with window gaps
};

// Maximal speech-free intervals inside [t0, t1], including boundary gaps.
std::vector<GapSample> extract_gaps(const std::vector<TimedText>& speech, double t0,
                                    double t1);

// Timestamp token index = round(relative_time / 0.5), clamped to [0, 60].
int timestamp_token_index(double relative_time_s, double rounding_s = 0.5);

TokenSequence tokenize_window(const ContextWindow& window,
                              const text::ProposerVocab& vocab);

struct ProposerConfig {
  int width = 64;
  int num_blocks = 3;
  int heads = 4;
  int ff_dim = 256;
  int visual_dim = 512;
  int max_positions = 256;
  double band_lo_s = 2.0;   // train/classify band [band_lo, band_hi)
  double band_hi_s = 6.0;
  double threshold = 0.5;

  void validate() const;
};

// Masked-token transformer encoder over timestamped speech text plus
// projected per-second visual rows; a binary head reads each <|mask|>.
class ProposerModel {
 public:
  ProposerModel(ProposerConfig config, const text::ProposerVocab& vocab,
                uint64_t seed);

  const ProposerConfig& config() const { return config_; }

  // One logit per mask position.
  nn::NodePtr forward_logits(nn::Graph& g, const TokenSequence& seq,
                             const Eigen::MatrixXd& visual);

  std::vector<double> mask_probabilities(const TokenSequence& seq,
                                         const Eigen::MatrixXd& visual);

  std::vector<nn::Parameter*> parameters();
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  void save(const std::filesystem::path& file, const text::ProposerVocab& vocab) const;
  static std::pair<ProposerModel, text::ProposerVocab> load(
      const std::filesystem::path& file);

 private:
  ProposerConfig config_;
  int vocab_size_;
  bool trained_ = false;
  nn::Parameter embedding_;  // vocab x width
  std::unique_ptr<nn::Linear> visual_proj_;
  std::vector<std::unique_ptr<nn::EncoderBlock>> blocks_;
  std::unique_ptr<nn::LayerNormLayer> final_ln_;
  std::unique_ptr<nn::Linear> head_;
};

struct GapDecision {
  GapSample gap;
  double probability = 0.0;
  bool contains_ad = false;
  bool from_hard_rule = false;
};

// In-band gaps go through the model; shorter/longer gaps are decided by the
// hard duration rule.
std::vector<GapDecision> classify_gaps(const ContextWindow& window,
                                       ProposerModel& model,
                                       const text::ProposerVocab& vocab);

std::vector<bool> duration_baseline(const std::vector<GapSample>& gaps,
                                    double threshold_s);

struct SweepResult {
  double roc_auc = 0.0;
  double average_precision = 0.0;
};

// Metrics from the 100-point threshold grid equally spaced in [2 s, 6 s].
SweepResult duration_sweep(const std::vector<GapSample>& gaps);

struct TrainOptions {
  int epochs = 3;
  double lr = 1e-3;
  double weight_decay = 0.01;
  long warmup_steps = 10;
};

struct TrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

TrainReport train_proposer(ProposerModel& model, const text::ProposerVocab& vocab,
                           const std::vector<ContextWindow>& windows,
                           const TrainOptions& options, uint64_t seed);

// Windowing over a whole movie.
std::vector<ContextWindow> build_windows(const feature_store::MovieRecord& movie,
                                         double window_span_s = 30.0,
                                         double stride_s = 15.0);

// Sliding-window inference; per-gap probabilities from overlapping windows
// are averaged. Gaps come from the movie-level speech timeline.
std::vector<GapDecision> propose(const feature_store::MovieRecord& movie,
                                 ProposerModel& model,
                                 const text::ProposerVocab& vocab,
                                 double stride_s = 15.0);

// Labels window gaps against the movie's AD events (overlap => contains AD).
void label_gaps_from_ad(std::vector<ContextWindow>& windows,
                        const std::vector<TimedText>& ad_events);

}  // namespace autoad::proposer
