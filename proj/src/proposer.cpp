#include "autoad/proposer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "autoad/nn/checkpoint.hpp"
#include "autoad/nn/optim.hpp"

namespace autoad::proposer {

using nn::Graph;
using nn::Matrix;
using nn::NodePtr;

std::vector<GapSample> extract_gaps(const std::vector<TimedText>& speech, double t0,
                                    double t1) {
  if (!(t0 < t1)) {
    throw AutoadError(ErrorCode::InvalidInterval, "window start must precede end");
  }
  // Clip to the window, then verify sorted and non-overlapping.
  std::vector<std::pair<double, double>> segs;
  for (const auto& s : speech) {
    const double a = std::max(s.start_s, t0);
    const double b = std::min(s.end_s, t1);
    if (a < b) segs.push_back({a, b});
  }
  for (size_t i = 1; i < segs.size(); ++i) {
    if (segs[i].first < segs[i - 1].first) {
      throw AutoadError(ErrorCode::OverlappingSpeech, "speech segments not sorted");
    }
    if (segs[i].first < segs[i - 1].second) {
      throw AutoadError(ErrorCode::OverlappingSpeech, "speech segments overlap");
    }
  }
  std::vector<GapSample> gaps;
  double cursor = t0;
  for (const auto& [a, b] : segs) {
    if (a > cursor) gaps.push_back({cursor, a, GapLabel::Unlabeled});
    cursor = b;
  }
  if (cursor < t1) gaps.push_back({cursor, t1, GapLabel::Unlabeled});
  return gaps;
}

int timestamp_token_index(double relative_time_s, double rounding_s) {
  const long idx = std::lround(relative_time_s / rounding_s);
  return static_cast<int>(std::clamp<long>(idx, 0, 60));
}

TokenSequence tokenize_window(const ContextWindow& window,
                              const text::ProposerVocab& vocab) {
  // Walk speech segments and gaps in temporal order; each speech segment is
  // bracketed by its two timestamp tokens, each gap becomes one <|mask|>.
  struct Item {
    double start;
    bool is_gap;
    size_t index;
  };
  std::vector<Item> items;
  for (size_t i = 0; i < window.speech.size(); ++i) {
    items.push_back({window.speech[i].start_s, false, i});
  }
  for (size_t i = 0; i < window.gaps.size(); ++i) {
    items.push_back({window.gaps[i].start_s, true, i});
  }
  std::stable_sort(items.begin(), items.end(),
                   [](const Item& a, const Item& b) { return a.start < b.start; });

  TokenSequence seq;
  std::vector<size_t> mask_by_gap(window.gaps.size());
  for (const auto& item : items) {
    if (item.is_gap) {
      mask_by_gap[item.index] = seq.tokens.size();
      seq.tokens.push_back(vocab.mask_id());
    } else {
      const auto& s = window.speech[item.index];
      seq.tokens.push_back(
          vocab.timestamp_id(timestamp_token_index(s.start_s - window.window_start_s)));
      for (int id : vocab.encode_text(s.text)) seq.tokens.push_back(id);
      seq.tokens.push_back(
          vocab.timestamp_id(timestamp_token_index(s.end_s - window.window_start_s)));
    }
  }
  seq.mask_positions = std::move(mask_by_gap);
  return seq;
}

void ProposerConfig::validate() const {
  if (width % heads != 0) {
    throw AutoadError(ErrorCode::InvalidArgument, "proposer width % heads != 0");
  }
  if (!(band_lo_s < band_hi_s)) {
    throw AutoadError(ErrorCode::InvalidArgument, "proposer band must be ordered");
  }
}

namespace {

nlohmann::json config_json(const ProposerConfig& c) {
  return {{"width", c.width},       {"num_blocks", c.num_blocks},
          {"heads", c.heads},       {"ff_dim", c.ff_dim},
          {"visual_dim", c.visual_dim}, {"max_positions", c.max_positions},
          {"band_lo_s", c.band_lo_s},   {"band_hi_s", c.band_hi_s},
          {"threshold", c.threshold}};
}

ProposerConfig config_from_json(const nlohmann::json& j) {
  ProposerConfig c;
  c.width = j.at("width").get<int>();
  c.num_blocks = j.at("num_blocks").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.visual_dim = j.at("visual_dim").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  c.band_lo_s = j.at("band_lo_s").get<double>();
  c.band_hi_s = j.at("band_hi_s").get<double>();
  c.threshold = j.at("threshold").get<double>();
  return c;
}

}  // namespace

ProposerModel::ProposerModel(ProposerConfig config, const text::ProposerVocab& vocab,
                             uint64_t seed)
    : config_(config), vocab_size_(vocab.size()) {
  config_.validate();
  nn::Rng rng(seed);
  embedding_ = nn::Parameter("proposer.embedding",
                             nn::gauss_matrix(rng, vocab_size_, config_.width, 0.02));
  visual_proj_ = std::make_unique<nn::Linear>("proposer.visual_proj",
                                              config_.visual_dim, config_.width, rng);
  for (int b = 0; b < config_.num_blocks; ++b) {
    blocks_.push_back(std::make_unique<nn::EncoderBlock>(
        "proposer.block" + std::to_string(b), config_.width, config_.heads,
        config_.ff_dim, rng));
  }
  final_ln_ = std::make_unique<nn::LayerNormLayer>("proposer.final_ln", config_.width);
  head_ = std::make_unique<nn::Linear>("proposer.head", config_.width, 1, rng, true,
                                       0.001);
}

NodePtr ProposerModel::forward_logits(Graph& g, const TokenSequence& seq,
                                      const Eigen::MatrixXd& visual) {
  if (seq.mask_positions.empty()) {
    throw AutoadError(ErrorCode::EmptyInput, "window has no gaps to classify");
  }
  if (visual.cols() != config_.visual_dim && visual.rows() > 0) {
    throw AutoadError(ErrorCode::DimMismatch, "visual dim != configured visual_dim");
  }
  const auto text_len = static_cast<Eigen::Index>(seq.tokens.size());
  const Eigen::Index total = text_len + visual.rows();
  if (total > config_.max_positions) {
    throw AutoadError(ErrorCode::InvalidArgument, "window sequence too long");
  }
  const Matrix positions = nn::sincos_positions(total, config_.width);

  auto text_part = nn::embed_rows(g, embedding_, seq.tokens);
  NodePtr x;
  if (visual.rows() > 0) {
    auto visual_part = visual_proj_->forward(g, g.constant(visual));
    x = concat_rows(g, {text_part, visual_part});
  } else {
    x = text_part;
  }
  x = add_const(g, x, positions);
  for (auto& block : blocks_) x = block->forward(g, x);
  auto h = final_ln_->forward(g, x);
  std::vector<NodePtr> mask_rows;
  for (size_t pos : seq.mask_positions) {
    mask_rows.push_back(slice_rows(g, h, static_cast<Eigen::Index>(pos), 1));
  }
  return head_->forward(g, concat_rows(g, mask_rows));
}

std::vector<double> ProposerModel::mask_probabilities(const TokenSequence& seq,
                                                      const Eigen::MatrixXd& visual) {
  Graph g;
  auto logits = forward_logits(g, seq, visual);
  std::vector<double> probs;
  for (Eigen::Index i = 0; i < logits->value.rows(); ++i) {
    const double z = logits->value(i, 0);
    probs.push_back(z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                             : std::exp(z) / (1.0 + std::exp(z)));
  }
  return probs;
}

std::vector<nn::Parameter*> ProposerModel::parameters() {
  std::vector<nn::Parameter*> params;
  params.push_back(&embedding_);
  visual_proj_->collect(params);
  for (auto& b : blocks_) b->collect(params);
  final_ln_->collect(params);
  head_->collect(params);
  return params;
}

void ProposerModel::save(const std::filesystem::path& file,
                         const text::ProposerVocab& vocab) const {
  auto* self = const_cast<ProposerModel*>(this);
  nlohmann::json config = config_json(config_);
  config["vocab"] = vocab.to_json();
  config["trained"] = trained_;
  nn::save_checkpoint(file, self->parameters(), config);
}

std::pair<ProposerModel, text::ProposerVocab> ProposerModel::load(
    const std::filesystem::path& file) {
  auto header = nn::peek_checkpoint_config(file);
  auto vocab = text::ProposerVocab::from_json(header.at("vocab"));
  ProposerModel model(config_from_json(header), vocab, /*seed=*/0);
  nn::load_checkpoint(file, model.parameters());
  model.trained_ = header.value("trained", false);
  return {std::move(model), std::move(vocab)};
}

std::vector<GapDecision> classify_gaps(const ContextWindow& window,
                                       ProposerModel& model,
                                       const text::ProposerVocab& vocab) {
  if (!model.trained()) {
    throw AutoadError(ErrorCode::UntrainedModel, "proposer has no trained weights");
  }
  const auto& cfg = model.config();
  std::vector<GapDecision> decisions;
  std::vector<double> probs;
  bool have_probs = false;
  auto seq = tokenize_window(window, vocab);
  for (size_t i = 0; i < window.gaps.size(); ++i) {
    const auto& gap = window.gaps[i];
    GapDecision d;
    d.gap = gap;
    if (gap.duration() < cfg.band_lo_s) {
      d.probability = 0.0;
      d.contains_ad = false;
      d.from_hard_rule = true;
    } else if (gap.duration() >= cfg.band_hi_s) {
      d.probability = 1.0;
      d.contains_ad = true;
      d.from_hard_rule = true;
    } else {
      if (!have_probs) {
        probs = model.mask_probabilities(seq, window.visual);
        have_probs = true;
      }
      d.probability = probs[i];
      d.contains_ad = d.probability >= cfg.threshold;
    }
    decisions.push_back(d);
  }
  return decisions;
}

std::vector<bool> duration_baseline(const std::vector<GapSample>& gaps,
                                    double threshold_s) {
  std::vector<bool> out;
  out.reserve(gaps.size());
  for (const auto& g : gaps) out.push_back(g.duration() >= threshold_s);
  return out;
}

SweepResult duration_sweep(const std::vector<GapSample>& gaps) {
  long pos = 0, neg = 0;
  std::vector<const GapSample*> labeled;
  for (const auto& g : gaps) {
    if (g.label == GapLabel::Unlabeled) continue;
    labeled.push_back(&g);
    (g.label == GapLabel::ContainsAd ? pos : neg)++;
  }
  if (labeled.empty()) {
    throw AutoadError(ErrorCode::NoLabeledGaps, "no labeled gaps for the sweep");
  }
  if (pos == 0 || neg == 0) {
    throw AutoadError(ErrorCode::SingleClass, "sweep needs both labels present");
  }

  // 100 thresholds equally spaced between 2 and 6 seconds, descending so
  // recall is non-decreasing along the sweep.
  struct Point {
    double fpr, tpr, recall, precision;
    bool has_precision;
  };
  std::vector<Point> points;
  for (int i = 99; i >= 0; --i) {
    const double threshold = 2.0 + 4.0 * static_cast<double>(i) / 99.0;
    long tp = 0, fp = 0;
    for (const auto* g : labeled) {
      if (g->duration() >= threshold) {
        (g->label == GapLabel::ContainsAd ? tp : fp)++;
      }
    }
    Point p;
    p.tpr = static_cast<double>(tp) / static_cast<double>(pos);
    p.fpr = static_cast<double>(fp) / static_cast<double>(neg);
    p.recall = p.tpr;
    p.has_precision = (tp + fp) > 0;
    p.precision = p.has_precision
                      ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                      : 0.0;
    points.push_back(p);
  }

  SweepResult result;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  for (const auto& p : points) {
    result.roc_auc += 0.5 * (p.tpr + prev_tpr) * (p.fpr - prev_fpr);
    prev_fpr = p.fpr;
    prev_tpr = p.tpr;
  }
  result.roc_auc += 0.5 * (1.0 + prev_tpr) * (1.0 - prev_fpr);

  double prev_recall = 0.0;
  for (const auto& p : points) {
    if (!p.has_precision) continue;
    result.average_precision += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return result;
}

TrainReport train_proposer(ProposerModel& model, const text::ProposerVocab& vocab,
                           const std::vector<ContextWindow>& windows,
                           const TrainOptions& options, uint64_t seed) {
  const auto& cfg = model.config();
  auto in_band = [&](const GapSample& g) {
    return g.duration() >= cfg.band_lo_s && g.duration() < cfg.band_hi_s &&
           g.label != GapLabel::Unlabeled;
  };

  struct Sample {
    TokenSequence seq;
    const ContextWindow* window;
    std::vector<size_t> gap_indices;  // in-band labeled gaps
  };
  std::vector<Sample> samples;
  long pos = 0, neg = 0;
  for (const auto& w : windows) {
    Sample s;
    s.window = &w;
    for (size_t i = 0; i < w.gaps.size(); ++i) {
      if (in_band(w.gaps[i])) {
        s.gap_indices.push_back(i);
        (w.gaps[i].label == GapLabel::ContainsAd ? pos : neg)++;
      }
    }
    if (s.gap_indices.empty()) continue;
    s.seq = tokenize_window(w, vocab);
    samples.push_back(std::move(s));
  }
  if (pos == 0 || neg == 0) {
    throw AutoadError(ErrorCode::DegenerateDataset,
                      "need at least one positive and one negative in-band gap");
  }

  auto dataset_loss = [&]() {
    double total = 0.0;
    long count = 0;
    for (const auto& s : samples) {
      Graph g;
      auto logits = model.forward_logits(g, s.seq, s.window->visual);
      for (size_t j = 0; j < s.gap_indices.size(); ++j) {
        // Logit row index matches the gap's position among all window gaps.
        const double z = logits->value(
            static_cast<Eigen::Index>(s.gap_indices[j]), 0);
        const double y =
            s.window->gaps[s.gap_indices[j]].label == GapLabel::ContainsAd ? 1.0 : 0.0;
        total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        ++count;
      }
    }
    return total / static_cast<double>(count);
  };

  TrainReport report;
  report.initial_loss = dataset_loss();
  report.final_loss = report.initial_loss;
  model.mark_trained();
  if (options.epochs <= 0) return report;

  nn::AdamWConfig opt_config;
  opt_config.lr = options.lr;
  opt_config.weight_decay = options.weight_decay;
  nn::AdamW optimizer(model.parameters(), opt_config);

  nn::Rng rng(seed);
  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  const long total_steps = static_cast<long>(samples.size()) * options.epochs;
  long step = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (size_t idx : order) {
      const auto& s = samples[idx];
      Graph g;
      auto all_logits = model.forward_logits(g, s.seq, s.window->visual);
      std::vector<NodePtr> rows;
      Matrix labels(static_cast<Eigen::Index>(s.gap_indices.size()), 1);
      for (size_t j = 0; j < s.gap_indices.size(); ++j) {
        rows.push_back(slice_rows(g, all_logits,
                                  static_cast<Eigen::Index>(s.gap_indices[j]), 1));
        labels(static_cast<Eigen::Index>(j), 0) =
            s.window->gaps[s.gap_indices[j]].label == GapLabel::ContainsAd ? 1.0 : 0.0;
      }
      auto logits = concat_rows(g, rows);
      Matrix weights = Matrix::Ones(labels.rows(), 1);
      auto loss = nn::bce_with_logits(g, logits, labels, weights);
      optimizer.zero_grad();
      g.backward(loss);
      optimizer.set_lr(
          nn::cosine_warmup_lr(options.lr, step, total_steps, options.warmup_steps));
      optimizer.step();
      ++step;
    }
  }
  report.final_loss = dataset_loss();
  return report;
}

std::vector<ContextWindow> build_windows(const feature_store::MovieRecord& movie,
                                         double window_span_s, double stride_s) {
  const auto& track = movie.track;
  const double movie_end =
      std::max(track.timestamps.back(),
               movie.speech.empty() ? 0.0 : movie.speech.back().end_s);
  std::vector<ContextWindow> windows;
  for (double start = 0.0; start < movie_end; start += stride_s) {
    ContextWindow w;
    w.window_start_s = start;
    w.window_end_s = start + window_span_s;
    for (const auto& s : movie.speech) {
      const double a = std::max(s.start_s, w.window_start_s);
      const double b = std::min(s.end_s, w.window_end_s);
      if (a < b) {
        TimedText clipped = s;
        clipped.start_s = a;
        clipped.end_s = b;
        w.speech.push_back(std::move(clipped));
      }
    }
    w.gaps = extract_gaps(w.speech, w.window_start_s, w.window_end_s);
    // One visual row per second: the frame nearest each second mark.
    const auto seconds = static_cast<Eigen::Index>(window_span_s);
    w.visual.resize(seconds, track.dim());
    for (Eigen::Index sidx = 0; sidx < seconds; ++sidx) {
      const double t = start + static_cast<double>(sidx);
      size_t best = 0;
      double best_dist = std::numeric_limits<double>::infinity();
      for (size_t f = 0; f < track.timestamps.size(); ++f) {
        const double d = std::abs(track.timestamps[f] - t);
        if (d < best_dist) {
          best_dist = d;
          best = f;
        }
      }
      w.visual.row(sidx) = track.features.row(static_cast<Eigen::Index>(best)).cast<double>();
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

void label_gaps_from_ad(std::vector<ContextWindow>& windows,
                        const std::vector<TimedText>& ad_events) {
  for (auto& w : windows) {
    for (auto& gap : w.gaps) {
      bool overlap = false;
      for (const auto& ad : ad_events) {
        if (ad.start_s < gap.end_s && ad.end_s > gap.start_s) {
          overlap = true;
          break;
        }
      }
      gap.label = overlap ? GapLabel::ContainsAd : GapLabel::NoAd;
    }
  }
}

std::vector<GapDecision> propose(const feature_store::MovieRecord& movie,
                                 ProposerModel& model,
                                 const text::ProposerVocab& vocab, double stride_s) {
  if (!model.trained()) {
    throw AutoadError(ErrorCode::UntrainedModel, "proposer has no trained weights");
  }
  const auto& cfg = model.config();
  const double movie_end =
      std::max(movie.track.timestamps.back(),
               movie.speech.empty() ? 0.0 : movie.speech.back().end_s);
  auto global_gaps = extract_gaps(movie.speech, 0.0, movie_end);
  auto windows = build_windows(movie, 30.0, stride_s);

  std::vector<GapDecision> decisions;
  for (const auto& gap : global_gaps) {
    GapDecision d;
    d.gap = gap;
    if (gap.duration() < cfg.band_lo_s) {
      d.probability = 0.0;
      d.contains_ad = false;
      d.from_hard_rule = true;
      decisions.push_back(d);
      continue;
    }
    if (gap.duration() >= cfg.band_hi_s) {
      d.probability = 1.0;
      d.contains_ad = true;
      d.from_hard_rule = true;
      decisions.push_back(d);
      continue;
    }
    double prob_sum = 0.0;
    int prob_count = 0;
    for (const auto& w : windows) {
      if (gap.start_s < w.window_start_s || gap.end_s > w.window_end_s) continue;
      auto seq = tokenize_window(w, vocab);
      auto probs = model.mask_probabilities(seq, w.visual);
      for (size_t i = 0; i < w.gaps.size(); ++i) {
        if (std::abs(w.gaps[i].start_s - gap.start_s) < 1e-9 &&
            std::abs(w.gaps[i].end_s - gap.end_s) < 1e-9) {
          prob_sum += probs[i];
          ++prob_count;
        }
      }
    }
    if (prob_count == 0) {
      // Gap straddles every stride boundary; fall back to a centered window.
      ContextWindow w;
      const double mid = gap.start_s + 0.5 * gap.duration();
      w.window_start_s = std::max(0.0, mid - 15.0);
      w.window_end_s = w.window_start_s + 30.0;
      for (const auto& s : movie.speech) {
        const double a = std::max(s.start_s, w.window_start_s);
        const double b = std::min(s.end_s, w.window_end_s);
        if (a < b) {
          TimedText clipped = s;
          clipped.start_s = a;
          clipped.end_s = b;
          w.speech.push_back(std::move(clipped));
        }
      }
      w.gaps = extract_gaps(w.speech, w.window_start_s, w.window_end_s);
      const auto& track = movie.track;
      w.visual.resize(30, track.dim());
      for (Eigen::Index sidx = 0; sidx < 30; ++sidx) {
        const double t = w.window_start_s + static_cast<double>(sidx);
        size_t best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (size_t f = 0; f < track.timestamps.size(); ++f) {
          const double dd = std::abs(track.timestamps[f] - t);
          if (dd < best_dist) {
            best_dist = dd;
            best = f;
          }
        }
        w.visual.row(sidx) =
            track.features.row(static_cast<Eigen::Index>(best)).cast<double>();
      }
      auto seq = tokenize_window(w, vocab);
      auto probs = model.mask_probabilities(seq, w.visual);
      for (size_t i = 0; i < w.gaps.size(); ++i) {
        if (std::abs(w.gaps[i].start_s - gap.start_s) < 1e-9 &&
            std::abs(w.gaps[i].end_s - gap.end_s) < 1e-9) {
          prob_sum += probs[i];
          ++prob_count;
        }
      }
    }
    d.probability = prob_count > 0 ? prob_sum / prob_count : 0.0;
    d.contains_ad = d.probability >= cfg.threshold;
    decisions.push_back(d);
  }
  return decisions;
}

}  // namespace autoad::proposer
