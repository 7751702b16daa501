#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "autoad/character_bank.hpp"
#include "autoad/common.hpp"
#include "autoad/feature_store.hpp"
#include "autoad/nn/layers.hpp"
#include "autoad/text.hpp"

namespace autoad::generator {

struct LmConfig {
  int vocab = 0;  // set from the word vocabulary
  int width = 768;
  int num_blocks = 12;
  int heads = 12;
  int ff_dim = 3072;
  int max_positions = 256;

  void validate() const;
};

struct ResamplerConfig {
  int num_latents = 10;
  int num_blocks = 2;
  int channels = 768;  // must equal LM width
  int heads = 12;
  int ff_dim = 3072;
  int proj_in = 512;

  void validate() const;
};

enum class Template { NamesOnly = 1, NamesActors = 2, NamesActorsImages = 3 };

struct DecodeOptions {
  int beam_size = 5;
  int max_tokens = 16;
  bool greedy = false;
};

struct GenerationRequest {
  double clip_start_s = 0.0;
  double clip_end_s = 0.0;
  std::vector<charbank::CharacterEntry> active_chars;
  Template tmpl = Template::NamesActorsImages;
  std::vector<std::string> context_ad;  // oldest first
  DecodeOptions decode;
};

struct GateTraceEntry {
  double attn_gate_abs = 0.0;
  double ff_gate_abs = 0.0;
};

struct GenerationResult {
  std::string text;
  std::vector<int> token_ids;
  std::vector<double> beam_scores;
  std::vector<GateTraceEntry> gate_trace;
};

// Exact template strings; context AD first, then characters, then the cue.
// Context is clipped to 32 tokens (whole sentences, newest kept), character
// text to 64 tokens.
std::string render_prompt(const GenerationRequest& request);

// Rows handed to the resampler: clip frames first, then one slot per prompt
// character (zero rows beyond the supplied exemplars, masked out).
struct VisualInput {
  Eigen::MatrixXd rows;       // M x proj_in
  std::vector<bool> valid;    // size M
};

VisualInput build_visual_input(const Eigen::MatrixXd& clip_frames,
                               const std::vector<charbank::CharacterEntry>& chars,
                               int exemplar_slots = 10);

// Tiny causal transformer with frozen weights.
class FrozenLm {
 public:
  FrozenLm(LmConfig config, uint64_t seed);

  const LmConfig& config() const { return config_; }

  nn::NodePtr embed(nn::Graph& g, const std::vector<int>& ids);
  // Hidden states after all blocks and the final norm, no conditioning.
  nn::NodePtr hidden(nn::Graph& g, const nn::NodePtr& x);
  nn::NodePtr block_forward(nn::Graph& g, int block, const nn::NodePtr& x,
                            const nn::Matrix* mask);
  nn::NodePtr final_norm(nn::Graph& g, const nn::NodePtr& x);
  nn::NodePtr unembed(nn::Graph& g, const nn::NodePtr& h);

  void collect(std::vector<nn::Parameter*>& out);
  // FNV-1a over all weight bytes; freeze contract checksum.
  uint64_t checksum() const;

 private:
  LmConfig config_;
  nn::Parameter token_emb_;
  std::vector<std::unique_ptr<nn::EncoderBlock>> blocks_;
  std::unique_ptr<nn::LayerNormLayer> final_ln_;
  std::unique_ptr<nn::Linear> unembed_;
};

class PerceiverResampler {
 public:
  PerceiverResampler(ResamplerConfig config, uint64_t seed);

  const ResamplerConfig& config() const { return config_; }

  // num_latents x channels for any input with >= 1 row.
  nn::NodePtr forward(nn::Graph& g, const VisualInput& input);
  Eigen::MatrixXd resample(const VisualInput& input);

  void collect(std::vector<nn::Parameter*>& out);

 private:
  ResamplerConfig config_;
  std::unique_ptr<nn::Linear> proj_;
  nn::Parameter latents_;
  std::vector<std::unique_ptr<nn::CrossDecoderBlock>> blocks_;
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

struct TrainSample {
  VisualInput visual;
  std::string prompt;  // rendered prompt text
  std::string target;  // AD sentence
};

// Frozen LM + trainable resampler and per-block gated cross-attention;
// architecture (b) adds a visual-prefix mapper and a trained BOS embedding.
class GeneratorModel {
 public:
  GeneratorModel(LmConfig lm_config, ResamplerConfig rs_config, uint64_t seed);

  const LmConfig& lm_config() const { return lm_.config(); }
  FrozenLm& lm() { return lm_; }
  PerceiverResampler& resampler() { return resampler_; }

  // Next-token logits for the whole sequence, cross-attending to latents
  // after every LM block. Null latents reduce to the plain frozen LM.
  nn::NodePtr conditioned_logits(nn::Graph& g, const std::vector<int>& ids,
                                 const nn::NodePtr& latents);
  // Architecture (b): visual prefix + trained BOS + text, unmodified LM.
  nn::NodePtr prompt_style_logits(nn::Graph& g, const std::vector<int>& ids,
                                  const nn::NodePtr& latents);

  GenerationResult generate(const GenerationRequest& request,
                            const VisualInput& visual,
                            const text::WordVocab& vocab);
  GenerationResult generate_prompt_style(const GenerationRequest& request,
                                         const VisualInput& visual,
                                         const text::WordVocab& vocab);

  std::vector<GateTraceEntry> gate_trace() const;
  double mean_abs_gate() const;

  std::vector<nn::Parameter*> parameters();           // everything, for IO
  std::vector<nn::Parameter*> trainable_parameters(); // resampler + gates + mapper

  void save(const std::filesystem::path& file, const text::WordVocab& vocab) const;
  static std::pair<GeneratorModel, text::WordVocab> load(
      const std::filesystem::path& file);

 private:
  nn::NodePtr decode_logits(nn::Graph& g, const std::vector<int>& ids,
                            const nn::NodePtr& latents, bool prompt_style);
  std::vector<int> run_decode(const std::vector<int>& prompt_ids,
                              const VisualInput& visual, const DecodeOptions& decode,
                              const text::WordVocab& vocab, bool prompt_style,
                              std::vector<double>* beam_scores);

  FrozenLm lm_;
  PerceiverResampler resampler_;
  std::vector<std::unique_ptr<nn::GatedXAttnBlock>> gates_;
  std::unique_ptr<nn::Linear> prefix_mapper_;  // channels -> width
  nn::Parameter bos_prefix_;                   // 1 x width, trained separator
};

// Teacher-forced cross-entropy on target tokens; only trainable_parameters
// receive updates. prompt_style selects architecture (b).
TrainReport train_generator(GeneratorModel& model, const text::WordVocab& vocab,
                            const std::vector<TrainSample>& corpus,
                            const TrainOptions& options, uint64_t seed,
                            bool prompt_style = false);

}  // namespace autoad::generator
