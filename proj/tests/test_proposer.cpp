#include <doctest.h>

#include <algorithm>

#include "autoad/evaluation.hpp"
#include "autoad/proposer.hpp"
#include "fixtures.hpp"
#include "synthetic.hpp"

using namespace autoad;
using namespace autoad::proposer;

namespace {

text::ProposerVocab make_vocab() {
  return text::ProposerVocab(text::SubwordVocab::basic_latin());
}

}  // namespace

TEST_CASE("extract_gaps computes the interval complement") {
  std::vector<TimedText> speech = {{0.0, 3.0, "a", TextKind::Speech},
                                   {5.0, 10.0, "b", TextKind::Speech}};
  auto gaps = extract_gaps(speech, 0.0, 30.0);
  REQUIRE(gaps.size() == 2);
  CHECK(gaps[0].start_s == 3.0);
  CHECK(gaps[0].end_s == 5.0);
  CHECK(gaps[1].start_s == 10.0);
  CHECK(gaps[1].end_s == 30.0);

  CHECK(extract_gaps({}, 0.0, 30.0).size() == 1);
  CHECK(extract_gaps({}, 0.0, 30.0)[0].duration() == 30.0);

  std::vector<TimedText> full = {{0.0, 30.0, "a", TextKind::Speech}};
  CHECK(extract_gaps(full, 0.0, 30.0).empty());

  std::vector<TimedText> overlapping = {{0.0, 5.0, "a", TextKind::Speech},
                                        {4.0, 9.0, "b", TextKind::Speech}};
  try {
    extract_gaps(overlapping, 0.0, 30.0);
    FAIL("expected OverlappingSpeech");
  } catch (const AutoadError& e) {
    CHECK(e.code() == ErrorCode::OverlappingSpeech);
  }
}

TEST_CASE("timestamp token rounding") {
  CHECK(timestamp_token_index(4.26) == 9);  // 4.26/0.5 = 8.52 -> 9
  CHECK(timestamp_token_index(0.0) == 0);
  CHECK(timestamp_token_index(30.0) == 60);
  CHECK(timestamp_token_index(31.0) == 60);   // clamped
  CHECK(timestamp_token_index(-0.3) == 0);    // clamped
  CHECK(timestamp_token_index(0.25) == 1);    // lround half away from zero
}

TEST_CASE("tokenize_window invariants") {
  auto vocab = make_vocab();
  ContextWindow w;
  w.window_start_s = 60.0;
  w.window_end_s = 90.0;
  w.speech = {{63.0, 65.0, "hi", TextKind::Speech},
              {71.0, 80.0, "yes", TextKind::Speech}};
  w.gaps = extract_gaps(w.speech, 60.0, 90.0);
  REQUIRE(w.gaps.size() == 3);

  auto seq = tokenize_window(w, vocab);
  // One mask per gap.
  REQUIRE(seq.mask_positions.size() == 3);
  long masks = std::count(seq.tokens.begin(), seq.tokens.end(), vocab.mask_id());
  CHECK(masks == 3);
  // Two timestamp tokens per speech segment.
  long stamps = std::count_if(seq.tokens.begin(), seq.tokens.end(), [&](int id) {
    return id >= vocab.timestamp_id(0) && id <= vocab.timestamp_id(60);
  });
  CHECK(stamps == 4);
  // Mask positions point at mask tokens, in temporal order.
  for (size_t pos : seq.mask_positions) {
    CHECK(seq.tokens[pos] == vocab.mask_id());
  }
  CHECK(seq.tokens[seq.mask_positions[0]] == vocab.mask_id());
  CHECK(seq.mask_positions[0] < seq.mask_positions[1]);

  SUBCASE("shifting the whole window by multiples of 0.5 s changes nothing") {
    for (double shift : {0.5, 7.0, -3.5, 120.0}) {
      ContextWindow shifted = w;
      shifted.window_start_s += shift;
      shifted.window_end_s += shift;
      for (auto& s : shifted.speech) {
        s.start_s += shift;
        s.end_s += shift;
      }
      shifted.gaps = extract_gaps(shifted.speech, shifted.window_start_s,
                                  shifted.window_end_s);
      auto shifted_seq = tokenize_window(shifted, vocab);
      CHECK(shifted_seq.tokens == seq.tokens);
      CHECK(shifted_seq.mask_positions == seq.mask_positions);
    }
  }
}

TEST_CASE("hard duration rules bypass the model") {
  auto vocab = make_vocab();
  ProposerModel model(testing::small_proposer_config(8), vocab, 3);
  model.mark_trained();

  ContextWindow w;
  w.window_start_s = 0.0;
  w.window_end_s = 30.0;
  w.speech = {{1.0, 2.0, "a", TextKind::Speech},     // gap [0,1): 1s
              {3.0, 19.0, "b", TextKind::Speech},    // gap [2,3): 1s
              {29.0, 30.0, "c", TextKind::Speech}};  // gap [19,29): 10s
  w.gaps = extract_gaps(w.speech, 0.0, 30.0);
  w.visual = Eigen::MatrixXd::Zero(30, 8);
  REQUIRE(w.gaps.size() == 3);

  auto decisions = classify_gaps(w, model, vocab);
  REQUIRE(decisions.size() == 3);
  CHECK(decisions[0].from_hard_rule);
  CHECK_FALSE(decisions[0].contains_ad);  // 1 s gap
  CHECK(decisions[1].from_hard_rule);
  CHECK_FALSE(decisions[1].contains_ad);
  CHECK(decisions[2].from_hard_rule);
  CHECK(decisions[2].contains_ad);  // 10 s gap
}

TEST_CASE("classify requires a trained model") {
  auto vocab = make_vocab();
  ProposerModel model(testing::small_proposer_config(8), vocab, 3);
  ContextWindow w;
  w.speech = {};
  w.gaps = extract_gaps({}, 0.0, 30.0);
  w.visual = Eigen::MatrixXd::Zero(30, 8);
  try {
    classify_gaps(w, model, vocab);
    FAIL("expected UntrainedModel");
  } catch (const AutoadError& e) {
    CHECK(e.code() == ErrorCode::UntrainedModel);
  }
}

TEST_CASE("duration baseline and sweep") {
  SUBCASE("decision rule and monotonicity") {
    std::vector<GapSample> gaps = {{0, 1.5, GapLabel::NoAd},
                                   {0, 3.0, GapLabel::ContainsAd},
                                   {0, 7.0, GapLabel::ContainsAd}};
    auto at3 = duration_baseline(gaps, 3.0);
    CHECK(at3 == std::vector<bool>{false, true, true});
    auto at5 = duration_baseline(gaps, 5.0);
    for (size_t i = 0; i < gaps.size(); ++i) {
      if (at5[i]) CHECK(at3[i]);  // raising the threshold only removes positives
    }
  }

  SUBCASE("perfect separation gives AUC 1") {
    std::vector<GapSample> gaps;
    for (int i = 0; i < 20; ++i) {
      gaps.push_back({0.0, 2.2 + 0.05 * i, GapLabel::NoAd});
      gaps.push_back({0.0, 4.5 + 0.05 * i, GapLabel::ContainsAd});
    }
    auto result = duration_sweep(gaps);
    CHECK(result.roc_auc == doctest::Approx(1.0));
    CHECK(result.average_precision == doctest::Approx(1.0));
  }

  SUBCASE("labels independent of duration give AUC near one half") {
    nn::Rng rng(17);
    std::vector<GapSample> gaps;
    for (int i = 0; i < 2000; ++i) {
      const double d = 2.0 + 4.0 * rng.uniform();
      gaps.push_back({0.0, d, rng.uniform() < 0.5 ? GapLabel::ContainsAd
                                                  : GapLabel::NoAd});
    }
    auto result = duration_sweep(gaps);
    CHECK(std::abs(result.roc_auc - 0.5) < 0.05);
  }

  SUBCASE("no labels") {
    std::vector<GapSample> gaps = {{0, 3.0, GapLabel::Unlabeled}};
    try {
      duration_sweep(gaps);
      FAIL("expected NoLabeledGaps");
    } catch (const AutoadError& e) {
      CHECK(e.code() == ErrorCode::NoLabeledGaps);
    }
  }
}

TEST_CASE("training learns the visual signal") {
  auto vocab = make_vocab();
  auto windows = testing::make_proposer_windows(60, 8, 555);
  std::vector<ContextWindow> train_set(windows.begin(), windows.begin() + 45);
  std::vector<ContextWindow> held_out(windows.begin() + 45, windows.end());

  ProposerModel model(testing::small_proposer_config(8), vocab, 5);
  TrainOptions options;
  options.epochs = 6;
  options.lr = 2e-3;
  auto report = train_proposer(model, vocab, train_set, options, 6);
  CHECK(report.final_loss < report.initial_loss);

  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& w : held_out) {
    auto decisions = classify_gaps(w, model, vocab);
    for (size_t i = 0; i < decisions.size(); ++i) {
      if (decisions[i].from_hard_rule) continue;
      scores.push_back(decisions[i].probability);
      labels.push_back(w.gaps[i].label == GapLabel::ContainsAd ? 1 : 0);
    }
  }
  auto metrics = eval::roc_auc_ap(scores, labels);
  CHECK(metrics.roc_auc > 0.9);
}

TEST_CASE("zero training epochs leave weights unchanged") {
  auto vocab = make_vocab();
  auto windows = testing::make_proposer_windows(6, 8, 556);
  ProposerModel model(testing::small_proposer_config(8), vocab, 7);
  std::vector<Eigen::MatrixXd> snapshot;
  for (auto* p : model.parameters()) snapshot.push_back(p->value);
  TrainOptions options;
  options.epochs = 0;
  train_proposer(model, vocab, windows, options, 1);
  auto params = model.parameters();
  for (size_t i = 0; i < params.size(); ++i) {
    CHECK(params[i]->value == snapshot[i]);
  }
}

TEST_CASE("single-class in-band labels are rejected") {
  auto vocab = make_vocab();
  auto windows = testing::make_proposer_windows(6, 8, 557);
  for (auto& w : windows) {
    for (auto& g : w.gaps) g.label = proposer::GapLabel::ContainsAd;
  }
  ProposerModel model(testing::small_proposer_config(8), vocab, 8);
  TrainOptions options;
  try {
    train_proposer(model, vocab, windows, options, 1);
    FAIL("expected DegenerateDataset");
  } catch (const AutoadError& e) {
    CHECK(e.code() == ErrorCode::DegenerateDataset);
  }
}

TEST_CASE("sliding-window proposal over a movie") {
  auto vocab = make_vocab();
  auto movie = testing::make_toy_movie();
  // Keep one in-band gap AD-free so the training labels cover both classes.
  movie.ad = {{1.0, 2.5, "A man opens the door", TextKind::AD},
              {5.2, 6.8, "The dog runs down the street", TextKind::AD},
              {8.0, 10.0, "She walks into the rain", TextKind::AD},
              {24.0, 27.0, "He turns away and smiles", TextKind::AD}};
  auto windows = build_windows(movie);
  CHECK(windows.size() >= 2);  // 30 s movie, 15 s stride
  for (const auto& w : windows) {
    CHECK(w.visual.rows() == 30);
    CHECK(w.visual.cols() == 8);
  }
  label_gaps_from_ad(windows, movie.ad);
  for (const auto& w : windows) {
    for (const auto& g : w.gaps) CHECK(g.label != GapLabel::Unlabeled);
  }

  ProposerModel model(testing::small_proposer_config(8), vocab, 9);
  TrainOptions options;
  options.epochs = 2;
  train_proposer(model, vocab, windows, options, 2);

  auto decisions = propose(movie, model, vocab);
  auto again = propose(movie, model, vocab);
  REQUIRE(decisions.size() == again.size());
  for (size_t i = 0; i < decisions.size(); ++i) {
    CHECK(decisions[i].probability == again[i].probability);
    CHECK(decisions[i].gap.start_s == again[i].gap.start_s);
  }
  // Gaps cover exactly the speech complement of the movie span.
  for (size_t i = 1; i < decisions.size(); ++i) {
    CHECK(decisions[i].gap.start_s >= decisions[i - 1].gap.end_s);
  }
}

TEST_CASE("proposer checkpoint round trip") {
  auto vocab = make_vocab();
  auto windows = testing::make_proposer_windows(8, 8, 558);
  ProposerModel model(testing::small_proposer_config(8), vocab, 10);
  TrainOptions options;
  options.epochs = 1;
  train_proposer(model, vocab, windows, options, 3);

  auto dir = testing::fresh_dir("proposer_ckpt");
  model.save(dir / "p.ckpt", vocab);
  auto [loaded, loaded_vocab] = ProposerModel::load(dir / "p.ckpt");
  CHECK(loaded.trained());

  const auto& w = windows[0];
  auto a = classify_gaps(w, model, vocab);
  auto b = classify_gaps(w, loaded, loaded_vocab);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].probability == b[i].probability);
  }
}
