#include "autoad/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "autoad/csv.hpp"
#include "autoad/evaluation.hpp"

namespace autoad::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// --- config ----------------------------------------------------------------

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

RunConfig config_from_json(const json& doc) {
  RunConfig c;
  maybe(doc, "seed", c.seed);
  if (doc.contains("data_root")) c.data_root = doc.at("data_root").get<std::string>();
  if (doc.contains("cast_root")) c.cast_root = doc.at("cast_root").get<std::string>();
  if (doc.contains("out_dir")) c.out_dir = doc.at("out_dir").get<std::string>();
  maybe(doc, "charbank_k", c.charbank_k);
  maybe(doc, "max_cast", c.max_cast);

  if (doc.contains("recognizer")) {
    const auto& r = doc.at("recognizer");
    maybe(r, "proj_in", c.recognizer_config.proj_in);
    maybe(r, "channels", c.recognizer_config.channels);
    maybe(r, "num_blocks", c.recognizer_config.num_blocks);
    maybe(r, "heads", c.recognizer_config.heads);
    maybe(r, "ff_dim", c.recognizer_config.ff_dim);
    maybe(r, "threshold", c.recognizer_config.threshold);
    maybe(r, "epochs", c.recognizer_train.epochs);
    maybe(r, "lr", c.recognizer_train.lr);
  }
  if (doc.contains("proposer")) {
    const auto& p = doc.at("proposer");
    maybe(p, "width", c.proposer_config.width);
    maybe(p, "num_blocks", c.proposer_config.num_blocks);
    maybe(p, "heads", c.proposer_config.heads);
    maybe(p, "ff_dim", c.proposer_config.ff_dim);
    maybe(p, "visual_dim", c.proposer_config.visual_dim);
    maybe(p, "max_positions", c.proposer_config.max_positions);
    maybe(p, "band_lo_s", c.proposer_config.band_lo_s);
    maybe(p, "band_hi_s", c.proposer_config.band_hi_s);
    maybe(p, "threshold", c.proposer_config.threshold);
    maybe(p, "epochs", c.proposer_train.epochs);
    maybe(p, "lr", c.proposer_train.lr);
  }
  if (doc.contains("lm")) {
    const auto& l = doc.at("lm");
    maybe(l, "width", c.lm_config.width);
    maybe(l, "num_blocks", c.lm_config.num_blocks);
    maybe(l, "heads", c.lm_config.heads);
    maybe(l, "ff_dim", c.lm_config.ff_dim);
    maybe(l, "max_positions", c.lm_config.max_positions);
  }
  if (doc.contains("resampler")) {
    const auto& r = doc.at("resampler");
    maybe(r, "num_latents", c.resampler_config.num_latents);
    maybe(r, "num_blocks", c.resampler_config.num_blocks);
    maybe(r, "channels", c.resampler_config.channels);
    maybe(r, "heads", c.resampler_config.heads);
    maybe(r, "ff_dim", c.resampler_config.ff_dim);
    maybe(r, "proj_in", c.resampler_config.proj_in);
  }
  if (doc.contains("generator")) {
    const auto& g = doc.at("generator");
    maybe(g, "epochs", c.generator_train.epochs);
    maybe(g, "lr", c.generator_train.lr);
  }
  maybe(doc, "segments", c.segments);
  maybe(doc, "template_id", c.template_id);
  maybe(doc, "beam", c.beam);
  maybe(doc, "max_tokens", c.max_tokens);
  maybe(doc, "recurrent", c.recurrent);
  maybe(doc, "eval_k", c.eval_k);
  maybe(doc, "eval_n", c.eval_n);
  if (c.segments != "gt" && c.segments != "proposals") {
    throw AutoadError(ErrorCode::InvalidArgument, "segments must be gt|proposals");
  }
  if (c.template_id < 1 || c.template_id > 3) {
    throw AutoadError(ErrorCode::InvalidArgument, "template_id must be 1..3");
  }
  return c;
}

json config_to_json(const RunConfig& c) {
  return {
      {"seed", c.seed},
      {"data_root", c.data_root.string()},
      {"cast_root", c.cast_root.string()},
      {"out_dir", c.out_dir.string()},
      {"charbank_k", c.charbank_k},
      {"max_cast", c.max_cast},
      {"recognizer",
       {{"proj_in", c.recognizer_config.proj_in},
        {"channels", c.recognizer_config.channels},
        {"num_blocks", c.recognizer_config.num_blocks},
        {"heads", c.recognizer_config.heads},
        {"ff_dim", c.recognizer_config.ff_dim},
        {"threshold", c.recognizer_config.threshold},
        {"epochs", c.recognizer_train.epochs},
        {"lr", c.recognizer_train.lr}}},
      {"proposer",
       {{"width", c.proposer_config.width},
        {"num_blocks", c.proposer_config.num_blocks},
        {"heads", c.proposer_config.heads},
        {"ff_dim", c.proposer_config.ff_dim},
        {"visual_dim", c.proposer_config.visual_dim},
        {"max_positions", c.proposer_config.max_positions},
        {"band_lo_s", c.proposer_config.band_lo_s},
        {"band_hi_s", c.proposer_config.band_hi_s},
        {"threshold", c.proposer_config.threshold},
        {"epochs", c.proposer_train.epochs},
        {"lr", c.proposer_train.lr}}},
      {"lm",
       {{"width", c.lm_config.width},
        {"num_blocks", c.lm_config.num_blocks},
        {"heads", c.lm_config.heads},
        {"ff_dim", c.lm_config.ff_dim},
        {"max_positions", c.lm_config.max_positions}}},
      {"resampler",
       {{"num_latents", c.resampler_config.num_latents},
        {"num_blocks", c.resampler_config.num_blocks},
        {"channels", c.resampler_config.channels},
        {"heads", c.resampler_config.heads},
        {"ff_dim", c.resampler_config.ff_dim},
        {"proj_in", c.resampler_config.proj_in}}},
      {"generator",
       {{"epochs", c.generator_train.epochs}, {"lr", c.generator_train.lr}}},
      {"segments", c.segments},
      {"template_id", c.template_id},
      {"beam", c.beam},
      {"max_tokens", c.max_tokens},
      {"recurrent", c.recurrent},
      {"eval_k", c.eval_k},
      {"eval_n", c.eval_n},
  };
}

RunConfig load_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw AutoadError(ErrorCode::MissingFile, file.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw AutoadError(ErrorCode::MalformedFixture, file.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

uint64_t config_hash(const RunConfig& config) {
  const std::string canonical = config_to_json(config).dump();
  uint64_t hash = 1469598103934665603ull;
  for (unsigned char ch : canonical) {
    hash ^= ch;
    hash *= 1099511628211ull;
  }
  return hash;
}

std::string hash_string(uint64_t hash) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

// --- corpus ----------------------------------------------------------------

std::vector<MovieBundle> load_corpus(const RunConfig& config) {
  auto ids = feature_store::list_movies(config.data_root);
  std::sort(ids.begin(), ids.end());
  std::vector<MovieBundle> bundles;
  charbank::MovieDatabaseClient client(config.cast_root);
  for (const auto& id : ids) {
    MovieBundle b;
    b.movie = feature_store::load_movie(config.data_root, id);
    b.bank.movie_id = id;
    if (!config.cast_root.empty() &&
        fs::exists(config.cast_root / b.movie.imdb_id / "cast.json")) {
      b.bank = charbank::build_bank(client, b.movie.imdb_id, id, b.movie.track,
                                    config.charbank_k, config.max_cast);
    }
    bundles.push_back(std::move(b));
  }
  return bundles;
}

std::vector<size_t> chars_named_in_text(const charbank::CharacterBank& bank,
                                        const std::string& text) {
  const auto tokens = eval::tokenize(text);
  std::vector<size_t> out;
  for (size_t i = 0; i < bank.entries.size(); ++i) {
    const auto name = eval::tokenize(bank.entries[i].char_name);
    if (name.empty() || name.size() > tokens.size()) continue;
    bool found = false;
    for (size_t s = 0; s + name.size() <= tokens.size() && !found; ++s) {
      found = std::equal(name.begin(), name.end(), tokens.begin() + static_cast<long>(s));
    }
    if (found) out.push_back(i);
  }
  return out;
}

namespace {

Eigen::MatrixXd clip_or_nearest(const feature_store::FrameFeatureTrack& track,
                                double t1, double t2) {
  auto clip = feature_store::slice_features(track, t1, t2);
  if (clip.rows() > 0) return clip;
  const double mid = 0.5 * (t1 + t2);
  size_t best = 0;
  double best_dist = std::abs(track.timestamps[0] - mid);
  for (size_t f = 1; f < track.timestamps.size(); ++f) {
    const double d = std::abs(track.timestamps[f] - mid);
    if (d < best_dist) {
      best_dist = d;
      best = f;
    }
  }
  return track.features.row(static_cast<Eigen::Index>(best)).cast<double>();
}

Eigen::MatrixXd bank_exemplars(const charbank::CharacterBank& bank) {
  if (bank.entries.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(bank.entries.size()),
                    bank.entries[0].exemplar_feature.size());
  for (size_t i = 0; i < bank.entries.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = bank.entries[i].exemplar_feature.transpose();
  }
  return m;
}

}  // namespace

std::vector<recognizer::TrainingSample> build_recognizer_dataset(
    const std::vector<MovieBundle>& bundles) {
  std::vector<recognizer::TrainingSample> dataset;
  for (const auto& b : bundles) {
    if (b.bank.entries.empty()) continue;
    const auto exemplars = bank_exemplars(b.bank);
    for (const auto& ad : b.movie.ad) {
      recognizer::TrainingSample sample;
      sample.exemplars = exemplars;
      sample.clip_features = clip_or_nearest(b.movie.track, ad.start_s, ad.end_s);
      sample.labels.assign(b.bank.entries.size(), 0);
      for (size_t idx : chars_named_in_text(b.bank, ad.text)) sample.labels[idx] = 1;
      dataset.push_back(std::move(sample));
    }
  }
  return dataset;
}

// --- proposer stages -------------------------------------------------------

text::ProposerVocab make_proposer_vocab() {
  return text::ProposerVocab(text::SubwordVocab::basic_latin());
}

proposer::ProposerModel train_proposer_stage(const RunConfig& config,
                                             const std::vector<MovieBundle>& bundles,
                                             const text::ProposerVocab& vocab) {
  std::vector<proposer::ContextWindow> windows;
  for (const auto& b : bundles) {
    auto movie_windows = proposer::build_windows(b.movie);
    proposer::label_gaps_from_ad(movie_windows, b.movie.ad);
    for (auto& w : movie_windows) windows.push_back(std::move(w));
  }
  proposer::ProposerModel model(config.proposer_config, vocab, config.seed);
  proposer::train_proposer(model, vocab, windows, config.proposer_train,
                           config.seed + 1);
  return model;
}

std::vector<MovieProposals> propose_stage(const RunConfig& config,
                                          const std::vector<MovieBundle>& bundles,
                                          proposer::ProposerModel& model,
                                          const text::ProposerVocab& vocab) {
  (void)config;
  std::vector<MovieProposals> out;
  for (const auto& b : bundles) {
    out.push_back({b.movie.movie_id, proposer::propose(b.movie, model, vocab)});
  }
  return out;
}

void write_proposals_csv(const fs::path& file,
                         const std::vector<MovieProposals>& proposals,
                         uint64_t hash) {
  csv::Document doc;
  doc.comments.push_back("# config_hash=" + hash_string(hash));
  doc.rows.push_back(
      {"movie_id", "start_s", "end_s", "probability", "contains_ad", "from_hard_rule"});
  for (const auto& mp : proposals) {
    for (const auto& d : mp.decisions) {
      doc.rows.push_back({mp.movie_id, fmt("%.3f", d.gap.start_s),
                          fmt("%.3f", d.gap.end_s), fmt("%.6f", d.probability),
                          d.contains_ad ? "1" : "0", d.from_hard_rule ? "1" : "0"});
    }
  }
  csv::write_file(file, doc);
}

namespace {

std::optional<uint64_t> parse_hash_comment(const std::vector<std::string>& comments) {
  for (const auto& line : comments) {
    const std::string prefix = "# config_hash=";
    if (line.rfind(prefix, 0) == 0) {
      return std::stoull(line.substr(prefix.size()), nullptr, 16);
    }
  }
  return std::nullopt;
}

void check_hash(const std::vector<std::string>& comments,
                std::optional<uint64_t> expected, const fs::path& file) {
  if (!expected) return;
  auto found = parse_hash_comment(comments);
  if (!found || *found != *expected) {
    throw AutoadError(ErrorCode::ConfigMismatch,
                      file.string() + " was produced under a different config");
  }
}

}  // namespace

std::vector<MovieProposals> read_proposals_csv(const fs::path& file,
                                               std::optional<uint64_t> expected_hash) {
  auto doc = csv::read_file(file);
  check_hash(doc.comments, expected_hash, file);
  std::vector<MovieProposals> out;
  for (size_t r = 1; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    if (row.size() != 6) {
      throw AutoadError(ErrorCode::MalformedFixture, "bad proposals row");
    }
    if (out.empty() || out.back().movie_id != row[0]) {
      out.push_back({row[0], {}});
    }
    proposer::GapDecision d;
    d.gap.start_s = std::stod(row[1]);
    d.gap.end_s = std::stod(row[2]);
    d.probability = std::stod(row[3]);
    d.contains_ad = row[4] == "1";
    d.from_hard_rule = row[5] == "1";
    out.back().decisions.push_back(d);
  }
  return out;
}

// --- generator stages ------------------------------------------------------

text::WordVocab build_word_vocab(const std::vector<MovieBundle>& bundles) {
  std::vector<std::string> texts = {
      "possible characters played by describe , ; : ."};
  for (const auto& b : bundles) {
    for (const auto& ad : b.movie.ad) texts.push_back(ad.text);
    for (const auto& e : b.bank.entries) {
      texts.push_back(e.char_name);
      texts.push_back(e.actor_name);
    }
  }
  return text::WordVocab::build(texts);
}

namespace {

std::vector<charbank::CharacterEntry> pick_chars(const charbank::CharacterBank& bank,
                                                 const std::vector<size_t>& indices) {
  std::vector<charbank::CharacterEntry> chars;
  for (size_t idx : indices) {
    if (chars.size() >= 10) break;
    chars.push_back(bank.entries[idx]);
  }
  return chars;
}

generator::GenerationRequest make_request(const RunConfig& config, double t1, double t2,
                                          std::vector<charbank::CharacterEntry> chars,
                                          std::vector<std::string> context) {
  generator::GenerationRequest req;
  req.clip_start_s = t1;
  req.clip_end_s = t2;
  req.active_chars = std::move(chars);
  req.tmpl = static_cast<generator::Template>(config.template_id);
  req.context_ad = std::move(context);
  req.decode.beam_size = config.beam;
  req.decode.max_tokens = config.max_tokens;
  req.decode.greedy = config.beam <= 1;
  return req;
}

}  // namespace

std::vector<generator::TrainSample> build_generator_corpus(
    const RunConfig& config, const std::vector<MovieBundle>& bundles,
    bool recurrent) {
  std::vector<generator::TrainSample> corpus;
  for (const auto& b : bundles) {
    std::vector<std::string> context;
    for (const auto& ad : b.movie.ad) {
      auto chars = pick_chars(b.bank, chars_named_in_text(b.bank, ad.text));
      auto req = make_request(config, ad.start_s, ad.end_s, chars,
                              recurrent ? context : std::vector<std::string>{});
      generator::TrainSample sample;
      sample.visual = generator::build_visual_input(
          clip_or_nearest(b.movie.track, ad.start_s, ad.end_s), req.active_chars);
      sample.prompt = generator::render_prompt(req);
      sample.target = ad.text;
      corpus.push_back(std::move(sample));
      if (recurrent) context.push_back(ad.text);
    }
  }
  if (corpus.empty()) {
    throw AutoadError(ErrorCode::DegenerateCorpus, "no AD events in the corpus");
  }
  return corpus;
}

generator::GeneratorModel train_generator_stage(
    const RunConfig& config, const std::vector<MovieBundle>& bundles,
    const text::WordVocab& vocab) {
  auto lm_config = config.lm_config;
  lm_config.vocab = vocab.size();
  generator::GeneratorModel model(lm_config, config.resampler_config,
                                  config.seed + 100);
  auto corpus = build_generator_corpus(config, bundles, config.recurrent);
  generator::train_generator(model, vocab, corpus, config.generator_train,
                             config.seed + 101);
  return model;
}

std::vector<GeneratedLine> infer_stage(
    const RunConfig& config, const std::vector<MovieBundle>& bundles,
    generator::GeneratorModel& model, const text::WordVocab& vocab,
    recognizer::RecognizerModel* recog,
    const std::vector<MovieProposals>* proposals) {
  std::vector<GeneratedLine> lines;
  for (const auto& b : bundles) {
    std::vector<std::pair<double, double>> segments;
    std::vector<const std::string*> gt_text;  // parallel, null for proposals
    if (config.segments == "proposals") {
      if (!proposals) {
        throw AutoadError(ErrorCode::InvalidArgument, "proposals not supplied");
      }
      for (const auto& mp : *proposals) {
        if (mp.movie_id != b.movie.movie_id) continue;
        for (const auto& d : mp.decisions) {
          if (d.contains_ad) {
            segments.push_back({d.gap.start_s, d.gap.end_s});
            gt_text.push_back(nullptr);
          }
        }
      }
    } else {
      for (const auto& ad : b.movie.ad) {
        segments.push_back({ad.start_s, ad.end_s});
        gt_text.push_back(&ad.text);
      }
    }

    const auto exemplars = bank_exemplars(b.bank);
    std::vector<std::string> context;
    for (size_t s = 0; s < segments.size(); ++s) {
      const auto [t1, t2] = segments[s];
      const auto clip = clip_or_nearest(b.movie.track, t1, t2);
      std::vector<size_t> char_indices;
      if (recog && exemplars.rows() > 0) {
        auto result = recog->recognize(exemplars, clip);
        for (int idx : result.active) char_indices.push_back(static_cast<size_t>(idx));
      } else if (gt_text[s]) {
        char_indices = chars_named_in_text(b.bank, *gt_text[s]);
      }
      auto req = make_request(config, t1, t2, pick_chars(b.bank, char_indices),
                              config.recurrent ? context
                                               : std::vector<std::string>{});
      auto visual = generator::build_visual_input(clip, req.active_chars);
      auto result = model.generate(req, visual, vocab);
      GeneratedLine line;
      line.movie_id = b.movie.movie_id;
      line.event = {t1, t2, result.text, TextKind::AD};
      lines.push_back(std::move(line));
      if (config.recurrent) context.push_back(result.text);
    }
  }
  return lines;
}

void write_generated_csv(const fs::path& file, const std::vector<GeneratedLine>& lines,
                         uint64_t hash) {
  csv::Document doc;
  doc.comments.push_back("# config_hash=" + hash_string(hash));
  doc.rows.push_back({"movie_id", "start_s", "end_s", "text"});
  for (const auto& line : lines) {
    doc.rows.push_back({line.movie_id, fmt("%.3f", line.event.start_s),
                        fmt("%.3f", line.event.end_s), line.event.text});
  }
  csv::write_file(file, doc);
}

std::vector<GeneratedLine> read_generated_csv(const fs::path& file,
                                              std::optional<uint64_t> expected_hash) {
  auto doc = csv::read_file(file);
  check_hash(doc.comments, expected_hash, file);
  std::vector<GeneratedLine> lines;
  for (size_t r = 1; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    if (row.size() != 4) {
      throw AutoadError(ErrorCode::MalformedFixture, "bad generated row");
    }
    GeneratedLine line;
    line.movie_id = row[0];
    line.event = {std::stod(row[1]), std::stod(row[2]), row[3], TextKind::AD};
    lines.push_back(std::move(line));
  }
  return lines;
}

// --- evaluation ------------------------------------------------------------

json evaluate_stage(const RunConfig& config, const std::vector<GeneratedLine>& lines,
                    const std::vector<MovieBundle>& bundles) {
  auto backend = eval::SimilarityBackend::exact_match();
  double rouge_sum = 0.0;
  long rouge_count = 0;
  std::vector<std::string> candidates;
  std::vector<std::vector<std::string>> references;
  double rkn_sum = 0.0;
  long rkn_movies = 0;

  for (const auto& b : bundles) {
    eval::SequenceEvalInput input;
    for (const auto& line : lines) {
      if (line.movie_id == b.movie.movie_id) input.generated.push_back(line.event);
    }
    input.reference = b.movie.ad;
    if (input.generated.empty() || input.reference.empty()) continue;

    for (size_t i = 0; i < input.generated.size(); ++i) {
      // Slot pairing on GT segments; nearest midpoint otherwise.
      size_t paired = i;
      if (input.generated.size() != input.reference.size()) {
        double best = std::abs(input.reference[0].midpoint() -
                               input.generated[i].midpoint());
        paired = 0;
        for (size_t r = 1; r < input.reference.size(); ++r) {
          const double d = std::abs(input.reference[r].midpoint() -
                                    input.generated[i].midpoint());
          if (d < best) {
            best = d;
            paired = r;
          }
        }
      }
      rouge_sum += eval::rouge_l(input.generated[i].text,
                                 {input.reference[paired].text});
      ++rouge_count;
      candidates.push_back(input.generated[i].text);
      references.push_back({input.reference[paired].text});
    }
    const int n = std::min<int>(config.eval_n,
                                static_cast<int>(input.reference.size()));
    const int k = std::min(config.eval_k, n);
    rkn_sum += eval::recall_at_k_within_n(input, k, n, backend);
    ++rkn_movies;
  }

  json metrics;
  metrics["config_hash"] = hash_string(config_hash(config));
  metrics["segments"] = config.segments;
  metrics["pairing"] = "slot on gt segments, nearest midpoint otherwise";
  metrics["num_generated"] = rouge_count;
  metrics["k"] = config.eval_k;
  metrics["n"] = config.eval_n;
  metrics["rouge_l"] =
      rouge_count > 0 ? 100.0 * rouge_sum / static_cast<double>(rouge_count) : 0.0;
  if (!candidates.empty()) {
    auto corpus = eval::build_cider_corpus(references);
    metrics["cider"] = 100.0 * eval::cider(candidates, references, corpus);
  } else {
    metrics["cider"] = 0.0;
  }
  metrics["recall_at_k_within_n"] =
      rkn_movies > 0 ? rkn_sum / static_cast<double>(rkn_movies) : 0.0;
  return metrics;
}

// --- end to end ------------------------------------------------------------

PipelineReport run_pipeline(const RunConfig& config) {
  fs::create_directories(config.out_dir);
  const uint64_t hash = config_hash(config);
  auto bundles = load_corpus(config);
  if (bundles.empty()) {
    throw AutoadError(ErrorCode::EmptyCorpus, "no movies under data_root");
  }

  auto proposer_vocab = make_proposer_vocab();
  auto proposer_model = train_proposer_stage(config, bundles, proposer_vocab);
  auto proposals = propose_stage(config, bundles, proposer_model, proposer_vocab);

  PipelineReport report;
  report.proposals_csv = config.out_dir / "proposals.csv";
  write_proposals_csv(report.proposals_csv, proposals, hash);
  proposer_model.save(config.out_dir / "proposer.ckpt", proposer_vocab);

  // Recognizer is optional: it needs a bank and both label classes.
  std::unique_ptr<recognizer::RecognizerModel> recog;
  auto recog_dataset = build_recognizer_dataset(bundles);
  if (!recog_dataset.empty()) {
    try {
      auto model = std::make_unique<recognizer::RecognizerModel>(
          config.recognizer_config, config.seed + 50);
      recognizer::train_recognizer(*model, recog_dataset, config.recognizer_train,
                                   config.seed + 51);
      model->save(config.out_dir / "recognizer.ckpt");
      recog = std::move(model);
    } catch (const AutoadError& e) {
      if (e.code() != ErrorCode::DegenerateDataset) throw;
    }
  }

  auto word_vocab = build_word_vocab(bundles);
  auto generator_model = train_generator_stage(config, bundles, word_vocab);
  generator_model.save(config.out_dir / "generator.ckpt", word_vocab);

  auto lines = infer_stage(config, bundles, generator_model, word_vocab, recog.get(),
                           config.segments == "proposals" ? &proposals : nullptr);
  report.generated_csv = config.out_dir / "generated.csv";
  write_generated_csv(report.generated_csv, lines, hash);

  report.metrics = evaluate_stage(config, lines, bundles);
  report.metrics_json = config.out_dir / "metrics.json";
  {
    std::ofstream out(report.metrics_json);
    out << report.metrics.dump(2) << "\n";
  }

  report.gate_log = config.out_dir / "gates.log";
  {
    std::ofstream out(report.gate_log);
    out << "# config_hash=" << hash_string(hash) << "\n";
    auto trace = generator_model.gate_trace();
    for (size_t i = 0; i < trace.size(); ++i) {
      out << "block " << i << " attn " << fmt("%.6f", trace[i].attn_gate_abs)
          << " ff " << fmt("%.6f", trace[i].ff_gate_abs) << "\n";
    }
    out << "mean_abs_gate " << fmt("%.6f", generator_model.mean_abs_gate()) << "\n";
  }
  return report;
}

}  // namespace autoad::pipeline
