#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "autoad/character_bank.hpp"
#include "autoad/csv.hpp"
#include "autoad/evaluation.hpp"
#include "autoad/feature_store.hpp"
#include "autoad/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace autoad;

namespace {

int exit_code_for(const AutoadError& e) {
  switch (e.code()) {
    case ErrorCode::MissingFile:
    case ErrorCode::MalformedFixture:
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidInterval:
    case ErrorCode::InvalidTimeline:
    case ErrorCode::UnknownMovie:
    case ErrorCode::ConfigMismatch:
    case ErrorCode::InvalidKN:
      return 1;
    default:
      return 2;
  }
}

pipeline::RunConfig load(const std::string& config_path) {
  return pipeline::load_config(config_path);
}

std::vector<TimedText> read_events(const fs::path& file) {
  return feature_store::read_timeline_csv(file);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AD pipeline: ingest, character bank, recognition, gap proposal, "
               "generation and evaluation"};
  app.require_subcommand(1);

  std::string config_path, root, movie, out, ckpt, srt, pred, ref, ner, segments;
  std::string metrics = "rouge,cider,rkn";
  double t1 = 0.0, t2 = 0.0;
  int k = 1, n = 4, template_id = 0, beam = 0;
  bool recurrent = false, prompt_style = false;

  auto* ingest = app.add_subcommand("ingest", "Validate and normalize one movie");
  ingest->add_option("--root", root)->required();
  ingest->add_option("--movie", movie)->required();
  ingest->add_option("--srt", srt)->description("import subtitles from an SRT file");

  auto* charbank_cmd = app.add_subcommand("build-charbank", "Build a character bank");
  charbank_cmd->add_option("--config", config_path)->required();
  charbank_cmd->add_option("--movie", movie)->required();
  charbank_cmd->add_option("--out", out)->required();

  auto* train_recog = app.add_subcommand("train-recognizer", "Train the recognizer");
  train_recog->add_option("--config", config_path)->required();
  train_recog->add_option("--out", out)->required();

  auto* recognize = app.add_subcommand("recognize", "Active characters in a clip");
  recognize->add_option("--config", config_path)->required();
  recognize->add_option("--movie", movie)->required();
  recognize->add_option("--ckpt", ckpt)->required();
  recognize->add_option("--t1", t1)->required();
  recognize->add_option("--t2", t2)->required();

  auto* train_prop = app.add_subcommand("train-proposer", "Train the gap classifier");
  train_prop->add_option("--config", config_path)->required();
  train_prop->add_option("--out", out)->required();

  auto* propose = app.add_subcommand("propose", "Propose AD gaps for a movie");
  propose->add_option("--config", config_path)->required();
  propose->add_option("--movie", movie)->required();
  propose->add_option("--ckpt", ckpt)->required();
  propose->add_option("--out", out)->required();

  auto* train_gen = app.add_subcommand("train-generator", "Train the AD generator");
  train_gen->add_option("--config", config_path)->required();
  train_gen->add_option("--out", out)->required();
  train_gen->add_flag("--recurrent", recurrent);
  train_gen->add_flag("--prompt-style", prompt_style);

  auto* infer = app.add_subcommand("infer", "Generate AD text");
  infer->add_option("--config", config_path)->required();
  infer->add_option("--movie", movie)->required();
  infer->add_option("--ckpt", ckpt)->required();
  infer->add_option("--segments", segments)
      ->description("'gt' or a proposals CSV path")
      ->required();
  infer->add_option("--template", template_id);
  infer->add_option("--beam", beam);
  infer->add_option("--out", out)->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions");
  evaluate->add_option("--pred", pred)->required();
  evaluate->add_option("--ref", ref)->required();
  evaluate->add_option("--metrics", metrics);
  evaluate->add_option("--k", k);
  evaluate->add_option("--n", n);

  auto* stats = app.add_subcommand("stats", "Corpus statistics");
  stats->add_option("--ad", ref)->required();
  stats->add_option("--ner", ner)->required();

  auto* run = app.add_subcommand("run", "Full pipeline from a config file");
  run->add_option("--config", config_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      auto record = feature_store::load_movie(root, movie);
      if (!srt.empty()) record.subtitles = feature_store::read_srt(srt);
      feature_store::validate_record(record);
      feature_store::save_movie(root, record);
      std::cout << "ok " << movie << " frames=" << record.track.frame_count()
                << " dim=" << record.track.dim() << "\n";
    } else if (*charbank_cmd) {
      auto config = load(config_path);
      auto record = feature_store::load_movie(config.data_root, movie);
      charbank::MovieDatabaseClient client(config.cast_root);
      auto bank = charbank::build_bank(client, record.imdb_id, movie, record.track,
                                       config.charbank_k, config.max_cast);
      charbank::save_bank(out, bank);
      std::cout << "ok " << bank.entries.size() << " characters\n";
    } else if (*train_recog) {
      auto config = load(config_path);
      auto bundles = pipeline::load_corpus(config);
      auto dataset = pipeline::build_recognizer_dataset(bundles);
      recognizer::RecognizerModel model(config.recognizer_config, config.seed + 50);
      auto report = recognizer::train_recognizer(model, dataset,
                                                 config.recognizer_train,
                                                 config.seed + 51);
      model.save(out);
      std::cout << "loss " << report.initial_loss << " -> " << report.final_loss
                << "\n";
    } else if (*recognize) {
      auto config = load(config_path);
      auto record = feature_store::load_movie(config.data_root, movie);
      charbank::MovieDatabaseClient client(config.cast_root);
      auto bank = charbank::build_bank(client, record.imdb_id, movie, record.track,
                                       config.charbank_k, config.max_cast);
      auto model = recognizer::RecognizerModel::load(ckpt);
      Eigen::MatrixXd exemplars(static_cast<Eigen::Index>(bank.entries.size()),
                                record.track.dim());
      for (size_t i = 0; i < bank.entries.size(); ++i) {
        exemplars.row(static_cast<Eigen::Index>(i)) =
            bank.entries[i].exemplar_feature.transpose();
      }
      auto result =
          model.recognize(exemplars, feature_store::slice_features(record.track, t1, t2));
      json doc = json::array();
      for (size_t i = 0; i < bank.entries.size(); ++i) {
        doc.push_back({{"char", bank.entries[i].char_name},
                       {"probability", result.probabilities[i]}});
      }
      std::cout << doc.dump(2) << "\n";
    } else if (*train_prop) {
      auto config = load(config_path);
      auto bundles = pipeline::load_corpus(config);
      auto vocab = pipeline::make_proposer_vocab();
      auto model = pipeline::train_proposer_stage(config, bundles, vocab);
      model.save(out, vocab);
      std::cout << "ok\n";
    } else if (*propose) {
      auto config = load(config_path);
      auto record = feature_store::load_movie(config.data_root, movie);
      auto [model, vocab] = proposer::ProposerModel::load(ckpt);
      pipeline::MovieProposals proposals{movie,
                                         proposer::propose(record, model, vocab)};
      pipeline::write_proposals_csv(out, {proposals},
                                    pipeline::config_hash(config));
      std::cout << "ok " << proposals.decisions.size() << " gaps\n";
    } else if (*train_gen) {
      auto config = load(config_path);
      config.recurrent = config.recurrent || recurrent;
      auto bundles = pipeline::load_corpus(config);
      auto vocab = pipeline::build_word_vocab(bundles);
      auto lm_config = config.lm_config;
      lm_config.vocab = vocab.size();
      generator::GeneratorModel model(lm_config, config.resampler_config,
                                      config.seed + 100);
      auto corpus =
          pipeline::build_generator_corpus(config, bundles, config.recurrent);
      auto report = generator::train_generator(model, vocab, corpus,
                                               config.generator_train,
                                               config.seed + 101, prompt_style);
      model.save(out, vocab);
      std::cout << "loss " << report.initial_loss << " -> " << report.final_loss
                << "\n";
    } else if (*infer) {
      auto config = load(config_path);
      if (template_id > 0) config.template_id = template_id;
      if (beam > 0) config.beam = beam;
      auto bundles = pipeline::load_corpus(config);
      std::erase_if(bundles, [&](const pipeline::MovieBundle& b) {
        return b.movie.movie_id != movie;
      });
      if (bundles.empty()) throw AutoadError(ErrorCode::UnknownMovie, movie);
      auto [model, vocab] = generator::GeneratorModel::load(ckpt);
      std::vector<pipeline::MovieProposals> proposals;
      if (segments == "gt") {
        config.segments = "gt";
      } else {
        config.segments = "proposals";
        proposals = pipeline::read_proposals_csv(segments,
                                                 pipeline::config_hash(config));
      }
      auto lines = pipeline::infer_stage(config, bundles, model, vocab, nullptr,
                                         segments == "gt" ? nullptr : &proposals);
      pipeline::write_generated_csv(out, lines, pipeline::config_hash(config));
      std::cout << "ok " << lines.size() << " lines\n";
    } else if (*evaluate) {
      auto predictions = pipeline::read_generated_csv(pred, std::nullopt);
      auto reference = read_events(ref);
      eval::SequenceEvalInput input;
      for (const auto& line : predictions) input.generated.push_back(line.event);
      for (const auto& event : reference) {
        if (event.kind == TextKind::AD) input.reference.push_back(event);
      }
      json report;
      report["k"] = k;
      report["n"] = n;
      report["pairing"] = "slot on gt segments, nearest midpoint otherwise";
      if (metrics.find("rouge") != std::string::npos) {
        double sum = 0.0;
        for (size_t i = 0; i < input.generated.size(); ++i) {
          const size_t paired = std::min(i, input.reference.size() - 1);
          sum += eval::rouge_l(input.generated[i].text,
                               {input.reference[paired].text});
        }
        report["rouge_l"] = input.generated.empty()
                                ? 0.0
                                : 100.0 * sum / static_cast<double>(
                                                     input.generated.size());
      }
      if (metrics.find("cider") != std::string::npos) {
        std::vector<std::string> candidates;
        std::vector<std::vector<std::string>> refs;
        for (size_t i = 0; i < input.generated.size(); ++i) {
          const size_t paired = std::min(i, input.reference.size() - 1);
          candidates.push_back(input.generated[i].text);
          refs.push_back({input.reference[paired].text});
        }
        auto corpus = eval::build_cider_corpus(refs);
        report["cider"] = 100.0 * eval::cider(candidates, refs, corpus);
      }
      if (metrics.find("rkn") != std::string::npos) {
        report["recall_at_k_within_n"] = eval::recall_at_k_within_n(
            input, k, n, eval::SimilarityBackend::exact_match());
      }
      std::cout << report.dump(2) << "\n";
    } else if (*stats) {
      auto events = read_events(ref);
      auto tags = csv::read_file(ner);
      eval::CorpusStatsInput input;
      for (const auto& event : events) {
        if (event.kind == TextKind::AD) input.sentences.push_back(event);
      }
      input.has_per_tag.assign(input.sentences.size(), false);
      for (size_t r = 1; r < tags.rows.size(); ++r) {
        const size_t idx = std::stoul(tags.rows[r][0]);
        if (idx < input.has_per_tag.size()) {
          input.has_per_tag[idx] = tags.rows[r][1] == "1";
        }
      }
      input.pronoun_set = eval::kAdPronouns;
      auto report = eval::corpus_stats(input);
      json doc = {{"total", report.total},
                  {"per_fraction", report.per_fraction},
                  {"pronoun_fraction", report.pronoun_fraction},
                  {"union_fraction", report.union_fraction}};
      std::cout << doc.dump(2) << "\n";
    } else if (*run) {
      auto config = load(config_path);
      auto report = pipeline::run_pipeline(config);
      std::cout << report.metrics.dump(2) << "\n";
    }
  } catch (const AutoadError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
