#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoad/character_bank.hpp"
#include "autoad/common.hpp"
#include "autoad/feature_store.hpp"
#include "autoad/generator.hpp"
#include "autoad/proposer.hpp"
#include "autoad/recognizer.hpp"
#include "autoad/text.hpp"

namespace autoad::pipeline {

struct RunConfig {
  uint64_t seed = 7;
  std::filesystem::path data_root;
  std::filesystem::path cast_root;
  std::filesystem::path out_dir;

  int charbank_k = 5;
  int max_cast = 10;

  recognizer::RecognizerConfig recognizer_config;
  recognizer::TrainOptions recognizer_train;

  proposer::ProposerConfig proposer_config;
  proposer::TrainOptions proposer_train;

  generator::LmConfig lm_config;  // vocab filled from the corpus
  generator::ResamplerConfig resampler_config;
  generator::TrainOptions generator_train;

  std::string segments = "gt";  // "gt" or "proposals"
  int template_id = 2;          // 1..3
  int beam = 5;
  int max_tokens = 12;
  bool recurrent = false;

  int eval_k = 1;
  int eval_n = 4;
};

RunConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& file);

// FNV-1a over the canonical JSON serialization.
uint64_t config_hash(const RunConfig& config);
std::string hash_string(uint64_t hash);

struct MovieBundle {
  feature_store::MovieRecord movie;
  charbank::CharacterBank bank;  // empty entries when no cast fixture
};

// All movies under data_root in id order, each with its character bank.
std::vector<MovieBundle> load_corpus(const RunConfig& config);

// Characters whose name appears in the text under metric tokenization.
std::vector<size_t> chars_named_in_text(const charbank::CharacterBank& bank,
                                        const std::string& text);

// Recognizer training data: one sample per AD segment, labels from names
// mentioned in the AD text. Movies with an empty bank contribute nothing.
std::vector<recognizer::TrainingSample> build_recognizer_dataset(
    const std::vector<MovieBundle>& bundles);

text::ProposerVocab make_proposer_vocab();

proposer::ProposerModel train_proposer_stage(const RunConfig& config,
                                             const std::vector<MovieBundle>& bundles,
                                             const text::ProposerVocab& vocab);

struct MovieProposals {
  std::string movie_id;
  std::vector<proposer::GapDecision> decisions;
};

std::vector<MovieProposals> propose_stage(const RunConfig& config,
                                          const std::vector<MovieBundle>& bundles,
                                          proposer::ProposerModel& model,
                                          const text::ProposerVocab& vocab);

void write_proposals_csv(const std::filesystem::path& file,
                         const std::vector<MovieProposals>& proposals,
                         uint64_t hash);
std::vector<MovieProposals> read_proposals_csv(const std::filesystem::path& file,
                                               std::optional<uint64_t> expected_hash);

text::WordVocab build_word_vocab(const std::vector<MovieBundle>& bundles);

std::vector<generator::TrainSample> build_generator_corpus(
    const RunConfig& config, const std::vector<MovieBundle>& bundles,
    bool recurrent);

generator::GeneratorModel train_generator_stage(
    const RunConfig& config, const std::vector<MovieBundle>& bundles,
    const text::WordVocab& vocab);

struct GeneratedLine {
  std::string movie_id;
  TimedText event;  // kind AD
};

// Generate on GT segments or on proposed gaps; active characters come from
// the recognizer when provided, else from names in the reference text.
std::vector<GeneratedLine> infer_stage(
    const RunConfig& config, const std::vector<MovieBundle>& bundles,
    generator::GeneratorModel& model, const text::WordVocab& vocab,
    recognizer::RecognizerModel* recog,
    const std::vector<MovieProposals>* proposals);

void write_generated_csv(const std::filesystem::path& file,
                         const std::vector<GeneratedLine>& lines, uint64_t hash);
std::vector<GeneratedLine> read_generated_csv(const std::filesystem::path& file,
                                              std::optional<uint64_t> expected_hash);

// ROUGE-L, CIDEr and R@k/N of generated lines against each movie's AD.
nlohmann::json evaluate_stage(const RunConfig& config,
                              const std::vector<GeneratedLine>& lines,
                              const std::vector<MovieBundle>& bundles);

struct PipelineReport {
  std::filesystem::path proposals_csv;
  std::filesystem::path generated_csv;
  std::filesystem::path metrics_json;
  std::filesystem::path gate_log;
  nlohmann::json metrics;
};

PipelineReport run_pipeline(const RunConfig& config);

}  // namespace autoad::pipeline
