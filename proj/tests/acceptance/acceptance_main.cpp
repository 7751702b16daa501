// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion is self-contained and seeds its own randomness.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoad/character_bank.hpp"
#include "autoad/evaluation.hpp"
#include "autoad/generator.hpp"
#include "autoad/nn/layers.hpp"
#include "autoad/pipeline.hpp"
#include "autoad/proposer.hpp"
#include "autoad/recognizer.hpp"
#include "fixtures.hpp"
#include "synthetic.hpp"

using namespace autoad;

namespace {

Eigen::MatrixXd random_rows(nn::Rng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.gauss();
  }
  return m;
}

generator::LmConfig small_lm(int vocab) {
  generator::LmConfig config;
  config.vocab = vocab;
  config.width = 32;
  config.num_blocks = 2;
  config.heads = 4;
  config.ff_dim = 64;
  config.max_positions = 128;
  return config;
}

generator::ResamplerConfig small_resampler(int proj_in) {
  generator::ResamplerConfig config;
  config.num_latents = 10;
  config.num_blocks = 2;
  config.channels = 32;
  config.heads = 4;
  config.ff_dim = 64;
  config.proj_in = proj_in;
  return config;
}

// 1. With all gates at initialization, conditioning on arbitrary visual input
// must not change a single logit of the frozen LM.
bool gating_identity() {
  auto vocab = text::WordVocab::build(
      {"a man walks into the room .", "she turns away from the door ."});
  generator::GeneratorModel model(small_lm(static_cast<int>(vocab.size())),
                                  small_resampler(12), 101);
  nn::Rng rng(102);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int len = 3 + static_cast<int>(rng.uniform() * 10);
    std::vector<int> ids = {vocab.bos_id()};
    for (int i = 0; i < len; ++i) {
      ids.push_back(4 + static_cast<int>(rng.uniform() *
                                         static_cast<double>(vocab.size() - 4)));
    }
    generator::VisualInput visual;
    visual.rows = random_rows(rng, 2 + trial % 7, 12);
    visual.valid.assign(static_cast<size_t>(visual.rows.rows()), true);

    nn::Graph g1;
    auto latents = model.resampler().forward(g1, visual);
    auto conditioned = model.conditioned_logits(g1, ids, latents);
    nn::Graph g2;
    auto plain = model.conditioned_logits(g2, ids, nullptr);
    if (!(conditioned->value.array() == plain->value.array()).all()) ++mismatches;
  }
  std::printf("  prompts=100 mismatches=%d\n", mismatches);
  return mismatches == 0;
}

// 2. Exemplar calibration against an independent brute-force oracle.
bool calibration_oracle() {
  nn::Rng rng(201);
  int failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index frames = 5 + static_cast<Eigen::Index>(rng.uniform() * 40);
    const Eigen::Index dim = 4 + static_cast<Eigen::Index>(rng.uniform() * 12);
    auto track = testing::make_track("acc", frames, dim, 2000 + static_cast<uint64_t>(trial));
    if (trial % 3 == 0) {
      // Force cosine ties: duplicate an early frame later in the track.
      track.features.row(frames - 1) = track.features.row(1);
    }
    Eigen::VectorXd portrait = testing::random_unit(rng, dim);
    const int k = 1 + static_cast<int>(rng.uniform() * static_cast<double>(frames));

    auto got = charbank::calibrate_exemplar(portrait, track, k);

    // Brute force: stable sort by cosine descending, ties to lower index.
    const Eigen::MatrixXd f = feature_store::track_as_double(track);
    std::vector<std::pair<double, Eigen::Index>> scored;
    for (Eigen::Index i = 0; i < frames; ++i) {
      const double n = f.row(i).norm() * portrait.norm();
      scored.push_back({f.row(i).dot(portrait) / n, i});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first > b.first;
    });
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
    std::vector<Eigen::Index> indices;
    for (int i = 0; i < k; ++i) {
      mean += f.row(scored[static_cast<size_t>(i)].second).transpose();
      indices.push_back(scored[static_cast<size_t>(i)].second);
    }
    mean /= static_cast<double>(k);

    if (got.indices != indices ||
        (got.exemplar - mean).cwiseAbs().maxCoeff() > 1e-6) {
      ++failures;
    }
  }
  std::printf("  instances=1000 failures=%d\n", failures);
  return failures == 0;
}

// 3. Trained recognizer separates a corpus built so max-cosine is blind.
bool recognizer_beats_cosine() {
  auto corpus = testing::make_recognizer_corpus(120, 3, 12, 301);
  const size_t split = 90;
  std::vector<recognizer::TrainingSample> train_set(corpus.samples.begin(),
                                                    corpus.samples.begin() + split);
  std::vector<recognizer::TrainingSample> held_out(corpus.samples.begin() + split,
                                                   corpus.samples.end());

  recognizer::RecognizerConfig config;
  config.proj_in = 12;
  config.channels = 16;
  config.num_blocks = 2;
  config.heads = 4;
  config.ff_dim = 32;
  recognizer::RecognizerModel model(config, 302);
  recognizer::TrainOptions options;
  options.epochs = 10;
  options.lr = 3e-3;
  recognizer::train_recognizer(model, train_set, options, 303);

  std::vector<double> model_scores, cosine_all;
  std::vector<int> labels;
  for (const auto& sample : held_out) {
    auto result = model.recognize(sample.exemplars, sample.clip_features);
    auto cos = recognizer::cosine_scores(sample.exemplars, sample.clip_features);
    for (size_t c = 0; c < sample.labels.size(); ++c) {
      model_scores.push_back(result.probabilities[c]);
      cosine_all.push_back(cos[c]);
      labels.push_back(sample.labels[c]);
    }
  }
  auto model_metrics = eval::roc_auc_ap(model_scores, labels);
  auto cosine_metrics = eval::roc_auc_ap(cosine_all, labels);
  std::printf("  model auc=%.4f ap=%.4f cosine ap=%.4f\n", model_metrics.roc_auc,
              model_metrics.average_precision, cosine_metrics.average_precision);
  return model_metrics.roc_auc > 0.95 &&
         model_metrics.average_precision >
             cosine_metrics.average_precision + 0.05;
}

// 4. Duration sweep tracks a brute-force AUC on duration-dependent labels,
// and the visual model out-ranks the duration-only baseline.
bool duration_behaviour() {
  nn::Rng rng(401);
  std::vector<proposer::GapSample> gaps;
  for (int i = 0; i < 4000; ++i) {
    const double d = 0.5 + 7.5 * rng.uniform();
    double p = 0.17;
    if (d >= 6.0) p = 0.85;
    else if (d > 2.0) p = 0.17 + (0.85 - 0.17) * (d - 2.0) / 4.0;
    gaps.push_back({0.0, d, rng.uniform() < p ? proposer::GapLabel::ContainsAd
                                              : proposer::GapLabel::NoAd});
  }
  auto sweep = proposer::duration_sweep(gaps);

  // Pair-count AUC of the raw duration score, independent of the sweep grid.
  std::vector<double> pos, neg;
  for (const auto& g : gaps) {
    (g.label == proposer::GapLabel::ContainsAd ? pos : neg).push_back(g.duration());
  }
  double wins = 0.0;
  for (double a : pos) {
    for (double b : neg) {
      if (a > b) wins += 1.0;
      else if (a == b) wins += 0.5;
    }
  }
  const double brute_auc = wins / (static_cast<double>(pos.size()) *
                                   static_cast<double>(neg.size()));
  const bool auc_ok = std::abs(sweep.roc_auc - brute_auc) < 0.07;

  // Model vs duration baseline on windows whose label lives in a visual dim.
  auto windows = testing::make_proposer_windows(60, 8, 402);
  std::vector<proposer::ContextWindow> train_set(windows.begin(), windows.begin() + 45);
  std::vector<proposer::ContextWindow> held_out(windows.begin() + 45, windows.end());
  text::ProposerVocab vocab(text::SubwordVocab::basic_latin());
  proposer::ProposerModel model(testing::small_proposer_config(8), vocab, 403);
  proposer::TrainOptions options;
  options.epochs = 6;
  options.lr = 2e-3;
  proposer::train_proposer(model, vocab, train_set, options, 404);

  std::vector<double> model_scores;
  std::vector<int> labels;
  std::vector<proposer::GapSample> held_gaps;
  for (const auto& w : held_out) {
    auto decisions = proposer::classify_gaps(w, model, vocab);
    for (size_t i = 0; i < decisions.size(); ++i) {
      if (decisions[i].from_hard_rule) continue;
      model_scores.push_back(decisions[i].probability);
      labels.push_back(w.gaps[i].label == proposer::GapLabel::ContainsAd ? 1 : 0);
      held_gaps.push_back(w.gaps[i]);
    }
  }
  auto model_metrics = eval::roc_auc_ap(model_scores, labels);
  auto baseline_metrics = proposer::duration_sweep(held_gaps);
  std::printf("  sweep auc=%.4f brute auc=%.4f model ap=%.4f duration ap=%.4f\n",
              sweep.roc_auc, brute_auc, model_metrics.average_precision,
              baseline_metrics.average_precision);
  return auc_ok && model_metrics.average_precision >
                       baseline_metrics.average_precision;
}

// 5. Metric goldens plus structural recall properties on random instances.
bool metric_fidelity() {
  std::ifstream m_in(testing::test_data_dir() / "metric_goldens.json");
  std::ifstream r_in(testing::test_data_dir() / "rkn_goldens.json");
  if (!m_in.good() || !r_in.good()) {
    std::printf("  golden files missing\n");
    return false;
  }
  const auto metric_goldens = nlohmann::json::parse(m_in);
  const auto rkn_goldens = nlohmann::json::parse(r_in);

  int golden_failures = 0;
  for (const auto& item : metric_goldens) {
    const auto candidates = item.at("candidates").get<std::vector<std::string>>();
    const auto references =
        item.at("reference_sets").get<std::vector<std::vector<std::string>>>();
    const auto expected = item.at("rouge_l").get<std::vector<double>>();
    for (size_t i = 0; i < candidates.size(); ++i) {
      if (std::abs(eval::rouge_l(candidates[i], references[i]) - expected[i]) > 1e-4) {
        ++golden_failures;
      }
    }
    auto corpus = eval::build_cider_corpus(references);
    if (std::abs(eval::cider(candidates, references, corpus) -
                 item.at("cider").get<double>()) > 1e-4) {
      ++golden_failures;
    }
  }

  auto sim = eval::SimilarityBackend::exact_match();
  int rkn_failures = 0;
  for (const auto& item : rkn_goldens) {
    eval::SequenceEvalInput input;
    for (const auto& row : item.at("generated")) {
      input.generated.push_back({row[0].get<double>(), row[1].get<double>(),
                                 row[2].get<std::string>(), TextKind::AD});
    }
    for (const auto& row : item.at("reference")) {
      input.reference.push_back({row[0].get<double>(), row[1].get<double>(),
                                 row[2].get<std::string>(), TextKind::AD});
    }
    const double got = eval::recall_at_k_within_n(input, item.at("k").get<int>(),
                                                  item.at("n").get<int>(), sim);
    if (std::abs(got - item.at("expected").get<double>()) > 1e-12) ++rkn_failures;
  }

  // Random instances: recall is 1 at k = N and monotone in k.
  nn::Rng rng(501);
  const std::vector<std::string> pool = {"a man walks",  "a woman runs",
                                         "rain falls",   "the door opens",
                                         "the dog barks", "the street is empty"};
  int property_failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = 3 + static_cast<int>(rng.uniform() * 4);
    eval::SequenceEvalInput input;
    double t = rng.uniform() * 5.0;
    for (int i = 0; i < m; ++i) {
      const auto& ref = pool[static_cast<size_t>(rng.uniform() * pool.size()) % pool.size()];
      const auto& gen = pool[static_cast<size_t>(rng.uniform() * pool.size()) % pool.size()];
      input.reference.push_back({t, t + 1.0, ref, TextKind::AD});
      input.generated.push_back({t, t + 1.0, gen, TextKind::AD});
      t += 2.0 + 3.0 * rng.uniform();
    }
    const int max_n = std::min(4, m);
    if (std::abs(eval::recall_at_k_within_n(input, max_n, max_n, sim) - 1.0) > 1e-12) {
      ++property_failures;
    }
    double prev = 0.0;
    for (int k = 1; k <= max_n; ++k) {
      const double r = eval::recall_at_k_within_n(input, k, max_n, sim);
      if (r < prev - 1e-12) ++property_failures;
      prev = r;
    }
  }
  std::printf("  golden failures=%d rkn failures=%d property failures=%d\n",
              golden_failures, rkn_failures, property_failures);
  return golden_failures == 0 && rkn_failures == 0 && property_failures == 0;
}

// 6. Tokenized windows keep their structure and ignore absolute time.
bool window_invariants() {
  nn::Rng rng(601);
  text::ProposerVocab vocab(text::SubwordVocab::basic_latin());
  int failures = 0;
  for (int trial = 0; trial < 500; ++trial) {
    proposer::ContextWindow w;
    w.window_start_s = 0.0;
    w.window_end_s = 30.0;
    double t = rng.uniform() * 3.0;
    while (t < 28.0) {
      const double len = 0.5 + 3.0 * rng.uniform();
      const double end = std::min(t + len, 30.0);
      if (end > t) w.speech.push_back({t, end, "words here", TextKind::Speech});
      t = end + 0.5 + 4.0 * rng.uniform();
    }
    w.gaps = proposer::extract_gaps(w.speech, 0.0, 30.0);
    auto seq = proposer::tokenize_window(w, vocab);

    const long masks =
        std::count(seq.tokens.begin(), seq.tokens.end(), vocab.mask_id());
    const long stamps =
        std::count_if(seq.tokens.begin(), seq.tokens.end(), [&](int id) {
          return id >= vocab.timestamp_id(0) && id <= vocab.timestamp_id(60);
        });
    if (masks != static_cast<long>(w.gaps.size()) ||
        seq.mask_positions.size() != w.gaps.size() ||
        stamps != 2 * static_cast<long>(w.speech.size())) {
      ++failures;
      continue;
    }

    const double shift = 0.5 * std::floor(rng.uniform() * 240.0);
    proposer::ContextWindow moved = w;
    moved.window_start_s += shift;
    moved.window_end_s += shift;
    for (auto& s : moved.speech) {
      s.start_s += shift;
      s.end_s += shift;
    }
    moved.gaps = proposer::extract_gaps(moved.speech, moved.window_start_s,
                                        moved.window_end_s);
    auto moved_seq = proposer::tokenize_window(moved, vocab);
    if (moved_seq.tokens != seq.tokens ||
        moved_seq.mask_positions != seq.mask_positions) {
      ++failures;
    }
  }
  std::printf("  windows=500 failures=%d\n", failures);
  return failures == 0;
}

// 7. Analytic gradients of the cross-attention gate scalars match central
// finite differences.
bool gate_gradients() {
  nn::Rng rng(701);
  int failures = 0;
  for (int sample = 0; sample < 10; ++sample) {
    nn::GatedXAttnBlock block("gx", 8, 2, 16, rng);
    // Move the gates off zero so both branches carry signal.
    std::vector<nn::Parameter*> params;
    block.collect(params);
    std::vector<nn::Parameter*> gate_params;
    for (auto* p : params) {
      if (p->value.size() == 1) {
        p->value(0, 0) = 0.2 + 0.3 * rng.uniform();
        gate_params.push_back(p);
      }
    }
    const nn::Matrix hidden = random_rows(rng, 4, 8);
    const nn::Matrix latents = random_rows(rng, 3, 8);
    auto loss_value = [&]() {
      nn::Graph g;
      auto out = block.forward(g, g.constant(hidden), g.constant(latents));
      return nn::mean_all(g, nn::gelu(g, out))->value(0, 0);
    };
    for (auto* p : params) p->zero_grad();
    {
      nn::Graph g;
      auto out = block.forward(g, g.constant(hidden), g.constant(latents));
      g.backward(nn::mean_all(g, nn::gelu(g, out)));
    }
    for (auto* p : gate_params) {
      const double saved = p->value(0, 0);
      const double eps = 1e-5;
      p->value(0, 0) = saved + eps;
      const double up = loss_value();
      p->value(0, 0) = saved - eps;
      const double down = loss_value();
      p->value(0, 0) = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad(0, 0);
      const double scale = std::max({1e-8, std::abs(numeric), std::abs(analytic)});
      if (std::abs(numeric - analytic) / scale > 1e-3) ++failures;
    }
  }
  std::printf("  samples=10 gate-gradient failures=%d\n", failures);
  return failures == 0;
}

// 8. Prompting with a character makes the generator name that character more
// often than the no-character ablation.
bool character_prompt_effect() {
  auto vocab = text::WordVocab::build(
      {"anna walks through the door .", "ben runs down the street .",
       "someone moves in the dark .", "possible characters : describe"});
  generator::GeneratorModel model(small_lm(static_cast<int>(vocab.size())),
                                  small_resampler(8), 801);
  nn::Rng rng(802);

  charbank::CharacterEntry anna;
  anna.char_name = "anna";
  anna.actor_name = "Ada Actor";
  anna.exemplar_feature = testing::random_unit(rng, 8);
  charbank::CharacterEntry ben = anna;
  ben.char_name = "ben";
  ben.actor_name = "Bob Actor";
  ben.exemplar_feature = testing::random_unit(rng, 8);

  // A shared clip keeps scene features constant, so the supplied character
  // (prompt text plus exemplar slot) is the only discriminative signal.
  const Eigen::MatrixXd fixed_clip = random_rows(rng, 4, 8);
  std::vector<generator::TrainSample> corpus;
  for (int i = 0; i < 30; ++i) {
    const bool is_anna = i % 2 == 0;
    generator::GenerationRequest request;
    request.tmpl = generator::Template::NamesOnly;
    request.active_chars = {is_anna ? anna : ben};
    generator::TrainSample sample;
    sample.prompt = generator::render_prompt(request);
    sample.target = is_anna ? "anna walks through the door."
                            : "ben runs down the street.";
    sample.visual = generator::build_visual_input(fixed_clip, request.active_chars);
    corpus.push_back(std::move(sample));
  }
  generator::TrainOptions options;
  options.epochs = 400;
  options.lr = 3e-3;
  auto report = generator::train_generator(model, vocab, corpus, options, 803);
  std::printf("  train loss %.4f -> %.4f\n", report.initial_loss, report.final_loss);

  int prompted_hits = 0;
  int ablated_hits = 0;
  const int trials = 20;
  for (int i = 0; i < trials; ++i) {
    const bool is_anna = i % 2 == 0;
    const std::string name = is_anna ? "anna" : "ben";
    generator::GenerationRequest request;
    request.tmpl = generator::Template::NamesOnly;
    request.active_chars = {is_anna ? anna : ben};
    request.decode.beam_size = 1;
    request.decode.greedy = true;
    request.decode.max_tokens = 10;
    auto visual = generator::build_visual_input(fixed_clip, request.active_chars);
    auto prompted = model.generate(request, visual, vocab);
    if (prompted.text.find(name) != std::string::npos) ++prompted_hits;

    generator::GenerationRequest bare = request;
    bare.active_chars.clear();
    auto bare_visual = generator::build_visual_input(fixed_clip, {});
    auto ablated = model.generate(bare, bare_visual, vocab);
    if (ablated.text.find(name) != std::string::npos) ++ablated_hits;
  }
  std::printf("  named fraction: prompted=%.2f ablated=%.2f\n",
              static_cast<double>(prompted_hits) / trials,
              static_cast<double>(ablated_hits) / trials);
  return prompted_hits > ablated_hits;
}

// 9. Re-running the pipeline with the same seed reproduces every artifact
// byte for byte.
bool pipeline_determinism() {
  auto base = testing::fresh_dir("acceptance_pipeline");
  std::filesystem::create_directories(base / "data");
  for (const auto& [movie_id, imdb_id, seed] :
       {std::tuple<std::string, std::string, uint64_t>{"movie_a", "tt0000001", 901},
        std::tuple<std::string, std::string, uint64_t>{"movie_b", "tt0000002", 902}}) {
    auto m = testing::make_toy_movie(movie_id, seed);
    m.imdb_id = imdb_id;
    m.ad = {{1.0, 2.5, "Anna opens the door", TextKind::AD},
            {5.2, 6.8, "The dog runs down the street", TextKind::AD},
            {8.0, 10.0, "She walks into the rain", TextKind::AD},
            {24.0, 27.0, "Ben turns away from Anna", TextKind::AD}};
    feature_store::save_movie(base / "data", m);
  }
  std::vector<std::vector<double>> portraits = {{1, 0, 0, 0, 0, 0, 0, 0},
                                                {0, 1, 0, 0, 0, 0, 0, 0}};
  testing::write_cast_fixture(base / "cast", "tt0000001",
                              {{"Anna", "Ada Actor"}, {"Ben", "Bob Actor"}}, portraits);
  testing::write_cast_fixture(base / "cast", "tt0000002",
                              {{"Anna", "Ada Actor"}, {"Ben", "Bob Actor"}}, portraits);

  pipeline::RunConfig config;
  config.seed = 7;
  config.data_root = base / "data";
  config.cast_root = base / "cast";
  config.out_dir = base / "out";
  config.recognizer_config.proj_in = 8;
  config.recognizer_config.channels = 16;
  config.recognizer_config.num_blocks = 1;
  config.recognizer_config.heads = 2;
  config.recognizer_config.ff_dim = 32;
  config.recognizer_train.epochs = 1;
  config.proposer_config.width = 32;
  config.proposer_config.num_blocks = 1;
  config.proposer_config.heads = 2;
  config.proposer_config.ff_dim = 64;
  config.proposer_config.visual_dim = 8;
  config.proposer_train.epochs = 1;
  config.lm_config.width = 32;
  config.lm_config.num_blocks = 2;
  config.lm_config.heads = 2;
  config.lm_config.ff_dim = 64;
  config.resampler_config.channels = 32;
  config.resampler_config.heads = 2;
  config.resampler_config.ff_dim = 64;
  config.resampler_config.num_blocks = 1;
  config.resampler_config.proj_in = 8;
  config.generator_train.epochs = 1;
  config.beam = 2;
  config.max_tokens = 6;

  auto slurp = [](const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
  };

  auto first = pipeline::run_pipeline(config);
  const std::string proposals_a = slurp(first.proposals_csv);
  const std::string generated_a = slurp(first.generated_csv);
  auto second = pipeline::run_pipeline(config);
  const bool same = slurp(second.proposals_csv) == proposals_a &&
                    slurp(second.generated_csv) == generated_a;
  std::printf("  artifacts byte-identical=%s\n", same ? "yes" : "no");
  return same && !proposals_a.empty() && !generated_a.empty();
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<bool()> run;
  };
  const std::vector<Criterion> criteria = {
      {"gating identity preserves the frozen LM", gating_identity},
      {"exemplar calibration matches brute force", calibration_oracle},
      {"trained recognizer beats the cosine baseline", recognizer_beats_cosine},
      {"duration sweep and visual proposer behave", duration_behaviour},
      {"metrics match the reference goldens", metric_fidelity},
      {"window tokenization invariants hold", window_invariants},
      {"gate gradients match finite differences", gate_gradients},
      {"character prompts steer the generator", character_prompt_effect},
      {"pipeline reruns are byte-identical", pipeline_determinism},
  };

  int failed = 0;
  for (const auto& criterion : criteria) {
    bool ok = false;
    try {
      ok = criterion.run();
    } catch (const std::exception& e) {
      std::printf("  exception: %s\n", e.what());
    }
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", criterion.name);
    if (!ok) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
