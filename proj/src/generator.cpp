#include "autoad/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "autoad/nn/checkpoint.hpp"
#include "autoad/nn/optim.hpp"

namespace autoad::generator {

using nn::Graph;
using nn::Matrix;
using nn::NodePtr;

void LmConfig::validate() const {
  if (vocab <= 0) throw AutoadError(ErrorCode::InvalidArgument, "lm vocab not set");
  if (width % heads != 0) {
    throw AutoadError(ErrorCode::InvalidArgument, "lm width % heads != 0");
  }
}

void ResamplerConfig::validate() const {
  if (channels % heads != 0) {
    throw AutoadError(ErrorCode::InvalidArgument, "resampler channels % heads != 0");
  }
  if (num_latents <= 0) {
    throw AutoadError(ErrorCode::InvalidArgument, "resampler needs >= 1 latent");
  }
}

// --- prompt rendering ------------------------------------------------------

namespace {

size_t token_count(const std::string& s) { return text::word_split(s).size(); }

std::string clip_to_tokens(const std::string& s, size_t budget) {
  auto tokens = text::word_split(s);
  if (tokens.size() <= budget) return s;
  std::string out;
  for (size_t i = 0; i < budget; ++i) {
    if (!out.empty()) out += " ";
    out += tokens[i];
  }
  return out;
}

std::string render_characters(const GenerationRequest& request) {
  std::string out = "possible characters:";
  for (size_t i = 0; i < request.active_chars.size(); ++i) {
    const auto& c = request.active_chars[i];
    switch (request.tmpl) {
      case Template::NamesOnly:
        out += (i == 0 ? " " : ", ") + c.char_name;
        break;
      case Template::NamesActors:
        out += (i == 0 ? " " : "; ") + c.char_name + " played by " + c.actor_name;
        break;
      case Template::NamesActorsImages:
        out += (i == 0 ? " " : "; ") + c.char_name + " played by " + c.actor_name +
               " <image>";
        break;
    }
  }
  if (!request.active_chars.empty()) out += ".";
  return out;
}

}  // namespace

std::string render_prompt(const GenerationRequest& request) {
  constexpr size_t kContextBudget = 32;
  constexpr size_t kCharBudget = 64;

  // Keep whole context sentences, newest last, dropping oldest until the
  // token budget fits.
  std::vector<std::string> kept;
  size_t used = 0;
  for (auto it = request.context_ad.rbegin(); it != request.context_ad.rend(); ++it) {
    const size_t n = token_count(*it);
    if (used + n > kContextBudget) break;
    kept.push_back(*it);
    used += n;
  }
  std::reverse(kept.begin(), kept.end());

  std::string prompt;
  for (const auto& sentence : kept) {
    if (!prompt.empty()) prompt += " ";
    prompt += sentence;
  }
  std::string chars = clip_to_tokens(render_characters(request), kCharBudget);
  if (!prompt.empty()) prompt += " ";
  prompt += chars;
  prompt += " Describe <video>:";
  return prompt;
}

VisualInput build_visual_input(const Eigen::MatrixXd& clip_frames,
                               const std::vector<charbank::CharacterEntry>& chars,
                               int exemplar_slots) {
  if (clip_frames.rows() == 0) {
    throw AutoadError(ErrorCode::EmptyInput, "clip has no frames");
  }
  if (static_cast<int>(chars.size()) > exemplar_slots) {
    throw AutoadError(ErrorCode::InvalidArgument, "more characters than slots");
  }
  VisualInput input;
  const Eigen::Index slots = chars.empty() ? 0 : exemplar_slots;
  input.rows = Eigen::MatrixXd::Zero(clip_frames.rows() + slots, clip_frames.cols());
  input.rows.topRows(clip_frames.rows()) = clip_frames;
  input.valid.assign(static_cast<size_t>(input.rows.rows()), true);
  for (Eigen::Index s = 0; s < slots; ++s) {
    const auto row = clip_frames.rows() + s;
    if (s < static_cast<Eigen::Index>(chars.size())) {
      if (chars[static_cast<size_t>(s)].exemplar_feature.size() != clip_frames.cols()) {
        throw AutoadError(ErrorCode::DimMismatch, "exemplar dim != frame dim");
      }
      input.rows.row(row) = chars[static_cast<size_t>(s)].exemplar_feature.transpose();
    } else {
      input.valid[static_cast<size_t>(row)] = false;
    }
  }
  return input;
}

// --- frozen LM -------------------------------------------------------------

FrozenLm::FrozenLm(LmConfig config, uint64_t seed) : config_(config) {
  config_.validate();
  nn::Rng rng(seed);
  token_emb_ = nn::Parameter("lm.token_emb",
                             nn::gauss_matrix(rng, config_.vocab, config_.width, 0.02),
                             /*trainable=*/false);
  for (int b = 0; b < config_.num_blocks; ++b) {
    blocks_.push_back(std::make_unique<nn::EncoderBlock>(
        "lm.block" + std::to_string(b), config_.width, config_.heads, config_.ff_dim,
        rng, /*trainable=*/false));
  }
  final_ln_ = std::make_unique<nn::LayerNormLayer>("lm.final_ln", config_.width,
                                                   /*trainable=*/false);
  // Unit-scale logits: the final norm bounds hidden rows to O(sqrt(width)),
  // so a 1/sqrt(width) unembed keeps confident predictions reachable.
  unembed_ = std::make_unique<nn::Linear>("lm.unembed", config_.width, config_.vocab,
                                          rng, /*trainable=*/false,
                                          1.0 / std::sqrt(static_cast<double>(config_.width)));
}

NodePtr FrozenLm::embed(Graph& g, const std::vector<int>& ids) {
  return nn::embed_rows(g, token_emb_, ids);
}

NodePtr FrozenLm::block_forward(Graph& g, int block, const NodePtr& x,
                                const Matrix* mask) {
  return blocks_[static_cast<size_t>(block)]->forward(g, x, mask);
}

NodePtr FrozenLm::hidden(Graph& g, const NodePtr& x) {
  const Matrix mask = nn::causal_mask(x->value.rows());
  NodePtr h = x;
  for (auto& block : blocks_) h = block->forward(g, h, &mask);
  return final_ln_->forward(g, h);
}

NodePtr FrozenLm::final_norm(Graph& g, const NodePtr& x) {
  return final_ln_->forward(g, x);
}

NodePtr FrozenLm::unembed(Graph& g, const NodePtr& h) {
  return unembed_->forward(g, h);
}

void FrozenLm::collect(std::vector<nn::Parameter*>& out) {
  out.push_back(&token_emb_);
  for (auto& b : blocks_) b->collect(out);
  final_ln_->collect(out);
  unembed_->collect(out);
}

uint64_t FrozenLm::checksum() const {
  std::vector<nn::Parameter*> params;
  const_cast<FrozenLm*>(this)->collect(params);
  uint64_t hash = 1469598103934665603ull;
  auto mix = [&hash](const void* data, size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < bytes; ++i) {
      hash ^= p[i];
      hash *= 1099511628211ull;
    }
  };
  for (const auto* p : params) {
    mix(p->value.data(), sizeof(double) * static_cast<size_t>(p->value.size()));
  }
  return hash;
}

// --- perceiver resampler ---------------------------------------------------

PerceiverResampler::PerceiverResampler(ResamplerConfig config, uint64_t seed)
    : config_(config) {
  config_.validate();
  nn::Rng rng(seed);
  proj_ = std::make_unique<nn::Linear>("resampler.proj", config_.proj_in,
                                       config_.channels, rng);
  latents_ = nn::Parameter("resampler.latents",
                           nn::gauss_matrix(rng, config_.num_latents,
                                            config_.channels, 0.02));
  for (int b = 0; b < config_.num_blocks; ++b) {
    blocks_.push_back(std::make_unique<nn::CrossDecoderBlock>(
        "resampler.block" + std::to_string(b), config_.channels, config_.heads,
        config_.ff_dim, rng));
  }
}

NodePtr PerceiverResampler::forward(Graph& g, const VisualInput& input) {
  if (input.rows.rows() == 0) {
    throw AutoadError(ErrorCode::EmptyInput, "resampler input is empty");
  }
  if (input.rows.cols() != config_.proj_in) {
    throw AutoadError(ErrorCode::DimMismatch, "resampler input dim != proj_in");
  }
  auto x = proj_->forward(g, g.constant(input.rows));
  auto z = g.param(latents_);
  const Eigen::Index m = input.rows.rows();
  for (auto& block : blocks_) {
    // Keys and values are the projected input followed by the current
    // latents; padded input rows are masked out of the scores.
    auto kv = concat_rows(g, {x, z});
    Matrix mask = Matrix::Zero(config_.num_latents, m + config_.num_latents);
    for (Eigen::Index r = 0; r < m; ++r) {
      if (!input.valid[static_cast<size_t>(r)]) mask.col(r).setConstant(-1e30);
    }
    z = block->forward(g, z, kv, &mask);
  }
  return z;
}

Eigen::MatrixXd PerceiverResampler::resample(const VisualInput& input) {
  Graph g;
  return forward(g, input)->value;
}

void PerceiverResampler::collect(std::vector<nn::Parameter*>& out) {
  proj_->collect(out);
  out.push_back(&latents_);
  for (auto& b : blocks_) b->collect(out);
}

// --- generator model -------------------------------------------------------

GeneratorModel::GeneratorModel(LmConfig lm_config, ResamplerConfig rs_config,
                               uint64_t seed)
    : lm_(lm_config, seed), resampler_(rs_config, seed + 1) {
  if (rs_config.channels != lm_config.width) {
    throw AutoadError(ErrorCode::DimMismatch, "resampler channels != lm width");
  }
  nn::Rng rng(seed + 2);
  for (int b = 0; b < lm_config.num_blocks; ++b) {
    gates_.push_back(std::make_unique<nn::GatedXAttnBlock>(
        "xattn.block" + std::to_string(b), lm_config.width, lm_config.heads,
        lm_config.ff_dim, rng));
  }
  prefix_mapper_ = std::make_unique<nn::Linear>("prompt.mapper", rs_config.channels,
                                                lm_config.width, rng);
  bos_prefix_ = nn::Parameter("prompt.bos",
                              nn::gauss_matrix(rng, 1, lm_config.width, 0.02));
}

NodePtr GeneratorModel::conditioned_logits(Graph& g, const std::vector<int>& ids,
                                           const NodePtr& latents) {
  const auto n = static_cast<Eigen::Index>(ids.size());
  const Matrix mask = nn::causal_mask(n);
  const Matrix positions = nn::sincos_positions(n, lm_.config().width);
  auto h = add_const(g, lm_.embed(g, ids), positions);
  for (int b = 0; b < lm_.config().num_blocks; ++b) {
    h = lm_.block_forward(g, b, h, &mask);
    if (latents) h = gates_[static_cast<size_t>(b)]->forward(g, h, latents);
  }
  return lm_.unembed(g, lm_.final_norm(g, h));
}

NodePtr GeneratorModel::prompt_style_logits(Graph& g, const std::vector<int>& ids,
                                            const NodePtr& latents) {
  auto prefix = prefix_mapper_->forward(g, latents);
  std::vector<NodePtr> rows = {prefix, g.param(bos_prefix_)};
  if (!ids.empty()) rows.push_back(lm_.embed(g, ids));
  auto x = concat_rows(g, rows);
  const Eigen::Index n = x->value.rows();
  x = add_const(g, x, nn::sincos_positions(n, lm_.config().width));
  const Matrix mask = nn::causal_mask(n);
  NodePtr h = x;
  for (int b = 0; b < lm_.config().num_blocks; ++b) {
    h = lm_.block_forward(g, b, h, &mask);
  }
  return lm_.unembed(g, lm_.final_norm(g, h));
}

NodePtr GeneratorModel::decode_logits(Graph& g, const std::vector<int>& ids,
                                      const NodePtr& latents, bool prompt_style) {
  return prompt_style ? prompt_style_logits(g, ids, latents)
                      : conditioned_logits(g, ids, latents);
}

namespace {

struct Beam {
  std::vector<int> ids;  // generated tokens only
  double score = 0.0;
  bool done = false;
};

}  // namespace

std::vector<int> GeneratorModel::run_decode(const std::vector<int>& prompt_ids,
                                            const VisualInput& visual,
                                            const DecodeOptions& decode,
                                            const text::WordVocab& vocab,
                                            bool prompt_style,
                                            std::vector<double>* beam_scores) {
  const int beam_size = decode.greedy ? 1 : std::max(1, decode.beam_size);
  std::vector<Beam> beams(1);
  auto log_softmax_row = [](const Matrix& logits, Eigen::Index row) {
    const Eigen::VectorXd z = logits.row(row).transpose();
    const double m = z.maxCoeff();
    const double lse = m + std::log((z.array() - m).exp().sum());
    return Eigen::VectorXd((z.array() - lse).matrix());
  };

  for (int step = 0; step < decode.max_tokens; ++step) {
    std::vector<Beam> candidates;
    bool any_active = false;
    for (const auto& beam : beams) {
      if (beam.done) {
        candidates.push_back(beam);
        continue;
      }
      any_active = true;
      std::vector<int> ids = prompt_ids;
      ids.insert(ids.end(), beam.ids.begin(), beam.ids.end());
      Graph g;
      NodePtr latents;
      if (visual.rows.rows() > 0) latents = resampler_.forward(g, visual);
      auto logits = decode_logits(g, ids, latents, prompt_style);
      const auto logp = log_softmax_row(logits->value, logits->value.rows() - 1);
      // Top beam_size continuations, ties to the lower token id.
      std::vector<int> order(static_cast<size_t>(logp.size()));
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return logp(a) > logp(b); });
      for (int c = 0; c < beam_size && c < static_cast<int>(order.size()); ++c) {
        Beam next = beam;
        next.ids.push_back(order[static_cast<size_t>(c)]);
        next.score += logp(order[static_cast<size_t>(c)]);
        next.done = order[static_cast<size_t>(c)] == vocab.eos_id();
        candidates.push_back(std::move(next));
      }
    }
    if (!any_active) break;
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Beam& a, const Beam& b) { return a.score > b.score; });
    if (static_cast<int>(candidates.size()) > beam_size) {
      candidates.resize(static_cast<size_t>(beam_size));
    }
    beams = std::move(candidates);
    if (std::all_of(beams.begin(), beams.end(),
                    [](const Beam& b) { return b.done; })) {
      break;
    }
  }
  if (beam_scores) {
    beam_scores->clear();
    for (const auto& b : beams) beam_scores->push_back(b.score);
  }
  return beams.front().ids;
}

GenerationResult GeneratorModel::generate(const GenerationRequest& request,
                                          const VisualInput& visual,
                                          const text::WordVocab& vocab) {
  std::vector<int> prompt_ids = {vocab.bos_id()};
  for (int id : vocab.encode(render_prompt(request))) prompt_ids.push_back(id);
  GenerationResult result;
  result.token_ids = run_decode(prompt_ids, visual, request.decode, vocab,
                                /*prompt_style=*/false, &result.beam_scores);
  result.text = vocab.decode(result.token_ids);
  result.gate_trace = gate_trace();
  return result;
}

GenerationResult GeneratorModel::generate_prompt_style(
    const GenerationRequest& request, const VisualInput& visual,
    const text::WordVocab& vocab) {
  std::vector<int> prompt_ids = vocab.encode(render_prompt(request));
  GenerationResult result;
  result.token_ids = run_decode(prompt_ids, visual, request.decode, vocab,
                                /*prompt_style=*/true, &result.beam_scores);
  result.text = vocab.decode(result.token_ids);
  return result;
}

std::vector<GateTraceEntry> GeneratorModel::gate_trace() const {
  std::vector<GateTraceEntry> trace;
  for (const auto& gate : gates_) {
    trace.push_back({std::abs(std::tanh(gate->gate_attn_value())),
                     std::abs(std::tanh(gate->gate_ff_value()))});
  }
  return trace;
}

double GeneratorModel::mean_abs_gate() const {
  double sum = 0.0;
  for (const auto& entry : gate_trace()) sum += entry.attn_gate_abs + entry.ff_gate_abs;
  return sum / (2.0 * static_cast<double>(gates_.size()));
}

std::vector<nn::Parameter*> GeneratorModel::parameters() {
  std::vector<nn::Parameter*> params;
  lm_.collect(params);
  resampler_.collect(params);
  for (auto& gate : gates_) gate->collect(params);
  prefix_mapper_->collect(params);
  params.push_back(&bos_prefix_);
  return params;
}

std::vector<nn::Parameter*> GeneratorModel::trainable_parameters() {
  std::vector<nn::Parameter*> params;
  resampler_.collect(params);
  for (auto& gate : gates_) gate->collect(params);
  prefix_mapper_->collect(params);
  params.push_back(&bos_prefix_);
  return params;
}

namespace {

nlohmann::json lm_config_json(const LmConfig& c) {
  return {{"vocab", c.vocab}, {"width", c.width},   {"num_blocks", c.num_blocks},
          {"heads", c.heads}, {"ff_dim", c.ff_dim}, {"max_positions", c.max_positions}};
}

nlohmann::json rs_config_json(const ResamplerConfig& c) {
  return {{"num_latents", c.num_latents}, {"num_blocks", c.num_blocks},
          {"channels", c.channels},       {"heads", c.heads},
          {"ff_dim", c.ff_dim},           {"proj_in", c.proj_in}};
}

LmConfig lm_config_from_json(const nlohmann::json& j) {
  LmConfig c;
  c.vocab = j.at("vocab").get<int>();
  c.width = j.at("width").get<int>();
  c.num_blocks = j.at("num_blocks").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  return c;
}

ResamplerConfig rs_config_from_json(const nlohmann::json& j) {
  ResamplerConfig c;
  c.num_latents = j.at("num_latents").get<int>();
  c.num_blocks = j.at("num_blocks").get<int>();
  c.channels = j.at("channels").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.proj_in = j.at("proj_in").get<int>();
  return c;
}

}  // namespace

void GeneratorModel::save(const std::filesystem::path& file,
                          const text::WordVocab& vocab) const {
  auto* self = const_cast<GeneratorModel*>(this);
  nlohmann::json config = {{"lm", lm_config_json(self->lm_.config())},
                           {"resampler", rs_config_json(self->resampler_.config())},
                           {"vocab", vocab.to_json()}};
  nn::save_checkpoint(file, self->parameters(), config);
}

std::pair<GeneratorModel, text::WordVocab> GeneratorModel::load(
    const std::filesystem::path& file) {
  auto header = nn::peek_checkpoint_config(file);
  GeneratorModel model(lm_config_from_json(header.at("lm")),
                       rs_config_from_json(header.at("resampler")), /*seed=*/0);
  nn::load_checkpoint(file, model.parameters());
  return {std::move(model), text::WordVocab::from_json(header.at("vocab"))};
}

// --- training --------------------------------------------------------------

TrainReport train_generator(GeneratorModel& model, const text::WordVocab& vocab,
                            const std::vector<TrainSample>& corpus,
                            const TrainOptions& options, uint64_t seed,
                            bool prompt_style) {
  if (corpus.empty()) {
    throw AutoadError(ErrorCode::DegenerateCorpus, "generator corpus is empty");
  }
  struct Prepared {
    std::vector<int> ids;       // bos + prompt + target + eos
    size_t prompt_len;          // bos + prompt
    const VisualInput* visual;
  };
  std::vector<Prepared> samples;
  for (const auto& sample : corpus) {
    Prepared p;
    p.visual = &sample.visual;
    if (!prompt_style) p.ids.push_back(vocab.bos_id());
    for (int id : vocab.encode(sample.prompt)) p.ids.push_back(id);
    p.prompt_len = p.ids.size();
    for (int id : vocab.encode(sample.target)) p.ids.push_back(id);
    p.ids.push_back(vocab.eos_id());
    if (p.ids.size() == p.prompt_len) {
      throw AutoadError(ErrorCode::DegenerateCorpus, "sample has no target tokens");
    }
    samples.push_back(std::move(p));
  }

  auto sample_loss_node = [&](Graph& g, const Prepared& p) {
    NodePtr latents;
    if (p.visual->rows.rows() > 0) latents = model.resampler().forward(g, *p.visual);
    NodePtr logits;
    size_t row_offset = 0;
    if (prompt_style) {
      logits = model.prompt_style_logits(g, p.ids, latents);
      // Prefix latents + trained BOS occupy the leading rows.
      row_offset = static_cast<size_t>(model.resampler().config().num_latents) + 1;
    } else {
      logits = model.conditioned_logits(g, p.ids, latents);
    }
    // Row (row_offset + t) predicts ids[t + 1]; score target tokens only.
    const size_t n = p.ids.size();
    std::vector<int> targets;
    std::vector<double> weights;
    for (size_t t = 0; t + 1 < n; ++t) {
      targets.push_back(p.ids[t + 1]);
      weights.push_back(t + 1 >= p.prompt_len ? 1.0 : 0.0);
    }
    auto rows = slice_rows(g, logits, static_cast<Eigen::Index>(row_offset),
                           static_cast<Eigen::Index>(n - 1));
    return nn::cross_entropy_rows(g, rows, targets, weights);
  };

  auto dataset_loss = [&]() {
    double total = 0.0;
    for (const auto& p : samples) {
      Graph g;
      total += sample_loss_node(g, p)->value(0, 0);
    }
    return total / static_cast<double>(samples.size());
  };

  TrainReport report;
  report.initial_loss = dataset_loss();
  report.final_loss = report.initial_loss;
  if (options.epochs <= 0) return report;

  nn::AdamWConfig opt_config;
  opt_config.lr = options.lr;
  opt_config.weight_decay = options.weight_decay;
  nn::AdamW optimizer(model.trainable_parameters(), opt_config);

  nn::Rng rng(seed);
  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  const long total_steps = static_cast<long>(samples.size()) * options.epochs;
  long step = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (size_t idx : order) {
      Graph g;
      auto loss = sample_loss_node(g, samples[idx]);
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

}  // namespace autoad::generator
