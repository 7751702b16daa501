#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "autoad/common.hpp"

namespace autoad::eval {

// Shared tokenization rule for the n-gram metrics: lowercase, punctuation
// stripped, whitespace split.
std::vector<std::string> tokenize(const std::string& text);

// LCS-based F-measure in [0,1] (beta-weighted per the original definition);
// the best score over the references is returned.
double rouge_l(const std::string& candidate, const std::vector<std::string>& references,
               double beta = 1.2);

struct CiderCorpus {
  // Document frequencies per n-gram order built from the reference sets.
  std::vector<std::map<std::vector<std::string>, double>> df;  // size = max_n
  long num_docs = 0;
  int max_n = 4;
};

CiderCorpus build_cider_corpus(const std::vector<std::vector<std::string>>& reference_sets,
                               int max_n = 4);

// Standard consensus-based score (tf-idf n-gram cosine averaged over n=1..4
// and over references). Unscaled; callers multiply by 100 for reports.
double cider(const std::vector<std::string>& candidates,
             const std::vector<std::vector<std::string>>& references,
             const CiderCorpus& corpus);

enum class SimilarityKind { ExactMatch, EmbeddingCosine, BertscoreStyle };

// Deterministic text-similarity backend. Embedding backends read a token
// embedding table fixture (token -> vector); unknown tokens hash to a
// deterministic pseudo-embedding.
class SimilarityBackend {
 public:
  static SimilarityBackend exact_match();
  static SimilarityBackend embedding_cosine(
      std::map<std::string, Eigen::VectorXd> table);
  static SimilarityBackend bertscore_style(
      std::map<std::string, Eigen::VectorXd> table);

  SimilarityKind kind() const { return kind_; }
  double score(const std::string& a, const std::string& b) const;

 private:
  SimilarityKind kind_ = SimilarityKind::ExactMatch;
  std::map<std::string, Eigen::VectorXd> table_;
  Eigen::Index dim_ = 0;

  Eigen::VectorXd token_embedding(const std::string& token) const;
  Eigen::VectorXd sentence_embedding(const std::string& text) const;
};

std::map<std::string, Eigen::VectorXd> load_embedding_table(
    const std::filesystem::path& file);

struct SequenceEvalInput {
  std::vector<TimedText> generated;
  std::vector<TimedText> reference;
};

// Recall@k within N temporal neighbours. Pairing: same slot when the two
// sequences have equal length (generation on GT segments), otherwise the GT
// item nearest by midpoint. Pool: the N GT items nearest in time to the
// paired GT item (itself included). Ranking ties break by temporal proximity
// to the paired item, then by index.
double recall_at_k_within_n(const SequenceEvalInput& input, int k, int n,
                            const SimilarityBackend& sim);

struct RocApResult {
  double roc_auc = 0.0;
  double average_precision = 0.0;
};

// AUC by midrank statistic; AP as area under the precision-recall step
// function over distinct score thresholds. With `macro_groups`, metrics are
// computed per group and averaged unweighted.
RocApResult roc_auc_ap(const std::vector<double>& scores,
                       const std::vector<int>& labels,
                       const std::optional<std::vector<int>>& macro_groups = std::nullopt);

struct CorpusStatsInput {
  std::vector<TimedText> sentences;
  std::vector<bool> has_per_tag;        // external NER annotation, same size
  std::vector<std::string> pronoun_set;
  // When set, sentences outside [intro_end_s, outro_start_s] are excluded.
  std::optional<double> intro_end_s;
  std::optional<double> outro_start_s;
};

struct CorpusStatsReport {
  long total = 0;
  long with_per = 0;
  long with_pronoun = 0;
  long with_either = 0;
  double per_fraction = 0.0;
  double pronoun_fraction = 0.0;
  double union_fraction = 0.0;
};

extern const std::vector<std::string> kAdPronouns;        // 6 pronouns
extern const std::vector<std::string> kSubtitlePronouns;  // 8 pronouns

CorpusStatsReport corpus_stats(const CorpusStatsInput& input);

}  // namespace autoad::eval
