#include "autoad/recognizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "autoad/nn/checkpoint.hpp"

namespace autoad::recognizer {

using nn::Graph;
using nn::Matrix;
using nn::NodePtr;

void RecognizerConfig::validate() const {
  if (channels % heads != 0) {
    throw AutoadError(ErrorCode::InvalidArgument,
                      "recognizer channels must be divisible by heads");
  }
  if (proj_in <= 0 || channels <= 0 || num_blocks <= 0 || ff_dim <= 0) {
    throw AutoadError(ErrorCode::InvalidArgument, "recognizer dims must be positive");
  }
}

namespace {

nlohmann::json config_json(const RecognizerConfig& c) {
  return {{"proj_in", c.proj_in}, {"channels", c.channels},
          {"num_blocks", c.num_blocks}, {"heads", c.heads},
          {"ff_dim", c.ff_dim}, {"threshold", c.threshold}};
}

RecognizerConfig config_from_json(const nlohmann::json& j) {
  RecognizerConfig c;
  c.proj_in = j.at("proj_in").get<int>();
  c.channels = j.at("channels").get<int>();
  c.num_blocks = j.at("num_blocks").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.threshold = j.at("threshold").get<double>();
  return c;
}

}  // namespace

RecognizerModel::RecognizerModel(RecognizerConfig config, uint64_t seed)
    : config_(config) {
  config_.validate();
  nn::Rng rng(seed);
  proj_ = std::make_unique<nn::Linear>("recognizer.proj", config_.proj_in,
                                       config_.channels, rng);
  for (int b = 0; b < config_.num_blocks; ++b) {
    blocks_.push_back(std::make_unique<nn::CrossDecoderBlock>(
        "recognizer.block" + std::to_string(b), config_.channels, config_.heads,
        config_.ff_dim, rng));
  }
  final_ln_ = std::make_unique<nn::LayerNormLayer>("recognizer.final_ln",
                                                   config_.channels);
  // Small head so untrained probabilities sit near 0.5.
  head_ = std::make_unique<nn::Linear>("recognizer.head", config_.channels, 1, rng,
                                       true, 0.001);
}

NodePtr RecognizerModel::forward_logits(Graph& g, const Eigen::MatrixXd& exemplars,
                                        const Eigen::MatrixXd& clip_features) {
  if (exemplars.rows() < 1 || clip_features.rows() < 1) {
    throw AutoadError(ErrorCode::EmptyInput, "need >=1 exemplar and >=1 frame");
  }
  if (exemplars.cols() != config_.proj_in || clip_features.cols() != config_.proj_in) {
    throw AutoadError(ErrorCode::DimMismatch,
                      "recognizer input dim != configured proj_in");
  }
  auto queries = proj_->forward(g, g.constant(exemplars));
  auto keys = proj_->forward(g, g.constant(clip_features));
  auto h = queries;
  for (auto& block : blocks_) {
    h = block->forward(g, h, keys);
  }
  return head_->forward(g, final_ln_->forward(g, h));
}

RecognitionResult RecognizerModel::recognize(const Eigen::MatrixXd& exemplars,
                                             const Eigen::MatrixXd& clip_features) {
  Graph g;
  auto logits = forward_logits(g, exemplars, clip_features);
  RecognitionResult result;
  for (Eigen::Index i = 0; i < logits->value.rows(); ++i) {
    const double z = logits->value(i, 0);
    const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                              : std::exp(z) / (1.0 + std::exp(z));
    result.probabilities.push_back(p);
    if (p >= config_.threshold) result.active.push_back(static_cast<int>(i));
  }
  return result;
}

std::vector<nn::Parameter*> RecognizerModel::parameters() {
  std::vector<nn::Parameter*> params;
  proj_->collect(params);
  for (auto& b : blocks_) b->collect(params);
  final_ln_->collect(params);
  head_->collect(params);
  return params;
}

void RecognizerModel::save(const std::filesystem::path& file) const {
  auto* self = const_cast<RecognizerModel*>(this);
  nn::save_checkpoint(file, self->parameters(), config_json(config_));
}

RecognizerModel RecognizerModel::load(const std::filesystem::path& file) {
  auto config = config_from_json(nn::peek_checkpoint_config(file));
  RecognizerModel model(config, /*seed=*/0);
  nn::load_checkpoint(file, model.parameters());
  return model;
}

std::vector<double> cosine_scores(const Eigen::MatrixXd& exemplars,
                                  const Eigen::MatrixXd& clip_features) {
  if (exemplars.cols() != clip_features.cols()) {
    throw AutoadError(ErrorCode::DimMismatch, "exemplar dim != frame dim");
  }
  std::vector<double> scores;
  scores.reserve(static_cast<size_t>(exemplars.rows()));
  for (Eigen::Index c = 0; c < exemplars.rows(); ++c) {
    const double enorm = exemplars.row(c).norm();
    double best = -1.0;
    for (Eigen::Index f = 0; f < clip_features.rows(); ++f) {
      const double fnorm = clip_features.row(f).norm();
      if (enorm == 0.0 || fnorm == 0.0) continue;
      best = std::max(best, exemplars.row(c).dot(clip_features.row(f)) /
                                (enorm * fnorm));
    }
    scores.push_back(best);
  }
  return scores;
}

std::vector<int> cosine_baseline(const Eigen::MatrixXd& exemplars,
                                 const Eigen::MatrixXd& clip_features, double alpha) {
  if (alpha < -1.0 || alpha > 1.0) {
    throw AutoadError(ErrorCode::InvalidAlpha,
                      "alpha must lie in [-1, 1], got " + std::to_string(alpha));
  }
  auto scores = cosine_scores(exemplars, clip_features);
  std::vector<int> active;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= alpha) active.push_back(static_cast<int>(i));
  }
  return active;
}

namespace {

double dataset_loss(RecognizerModel& model,
                    const std::vector<TrainingSample>& dataset, double w_pos,
                    double w_neg) {
  double total = 0.0;
  double weight = 0.0;
  for (const auto& sample : dataset) {
    Graph g;
    auto logits = model.forward_logits(g, sample.exemplars, sample.clip_features);
    for (Eigen::Index i = 0; i < logits->value.rows(); ++i) {
      const double z = logits->value(i, 0);
      const double y = sample.labels[static_cast<size_t>(i)];
      const double w = y > 0.5 ? w_pos : w_neg;
      total += w * (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))));
      weight += w;
    }
  }
  return total / weight;
}

}  // namespace

TrainReport train_recognizer(RecognizerModel& model,
                             const std::vector<TrainingSample>& dataset,
                             const TrainOptions& options, uint64_t seed) {
  if (dataset.empty()) {
    throw AutoadError(ErrorCode::DegenerateDataset, "empty training set");
  }
  long positives = 0;
  long negatives = 0;
  for (const auto& sample : dataset) {
    if (sample.labels.size() != static_cast<size_t>(sample.exemplars.rows())) {
      throw AutoadError(ErrorCode::DimMismatch, "labels size != exemplar count");
    }
    for (int y : sample.labels) (y ? positives : negatives)++;
  }
  if (positives == 0 || negatives == 0) {
    throw AutoadError(ErrorCode::DegenerateDataset,
                      "training labels are all one class");
  }
  // Inverse-frequency label balancing.
  const double total = static_cast<double>(positives + negatives);
  const double w_pos = total / (2.0 * static_cast<double>(positives));
  const double w_neg = total / (2.0 * static_cast<double>(negatives));

  TrainReport report;
  report.initial_loss = dataset_loss(model, dataset, w_pos, w_neg);
  report.final_loss = report.initial_loss;
  if (options.epochs <= 0) return report;

  nn::AdamWConfig opt_config;
  opt_config.lr = options.lr;
  opt_config.weight_decay = options.weight_decay;
  nn::AdamW optimizer(model.parameters(), opt_config);

  nn::Rng rng(seed);
  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const long total_steps = static_cast<long>(dataset.size()) * options.epochs;
  long step = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (size_t idx : order) {
      const auto& sample = dataset[idx];
      Graph g;
      auto logits = model.forward_logits(g, sample.exemplars, sample.clip_features);
      const Eigen::Index C = logits->value.rows();
      Matrix labels(C, 1), weights(C, 1);
      for (Eigen::Index i = 0; i < C; ++i) {
        const int y = sample.labels[static_cast<size_t>(i)];
        labels(i, 0) = y;
        weights(i, 0) = y ? w_pos : w_neg;
      }
      auto loss = nn::bce_with_logits(g, logits, labels, weights);
      optimizer.zero_grad();
      g.backward(loss);
      optimizer.set_lr(
          nn::cosine_warmup_lr(options.lr, step, total_steps, options.warmup_steps));
      optimizer.step();
      ++step;
    }
  }
  report.final_loss = dataset_loss(model, dataset, w_pos, w_neg);
  return report;
}

}  // namespace autoad::recognizer
