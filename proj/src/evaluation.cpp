#include "autoad/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

namespace autoad::eval {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!std::isspace(c) && (c & 0x80)) {
      cur += ch;  // keep non-ASCII bytes as-is
    } else {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace {

size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double rouge_l(const std::string& candidate, const std::vector<std::string>& references,
               double beta) {
  if (references.empty()) {
    throw AutoadError(ErrorCode::EmptyReference, "rouge_l needs >= 1 reference");
  }
  auto cand = tokenize(candidate);
  if (cand.empty()) return 0.0;
  double best = 0.0;
  for (const auto& reference : references) {
    auto ref = tokenize(reference);
    if (ref.empty()) continue;
    const double lcs = static_cast<double>(lcs_length(cand, ref));
    if (lcs == 0.0) continue;
    const double prec = lcs / static_cast<double>(cand.size());
    const double rec = lcs / static_cast<double>(ref.size());
    const double f =
        (1.0 + beta * beta) * prec * rec / (rec + beta * beta * prec);
    best = std::max(best, f);
  }
  return best;
}

namespace {

using Ngram = std::vector<std::string>;
using NgramCounts = std::map<Ngram, double>;

std::vector<NgramCounts> count_ngrams(const std::vector<std::string>& tokens, int max_n) {
  std::vector<NgramCounts> counts(static_cast<size_t>(max_n));
  for (int n = 1; n <= max_n; ++n) {
    if (tokens.size() < static_cast<size_t>(n)) break;
    for (size_t i = 0; i + static_cast<size_t>(n) <= tokens.size(); ++i) {
      Ngram gram(tokens.begin() + static_cast<long>(i),
                 tokens.begin() + static_cast<long>(i + static_cast<size_t>(n)));
      counts[static_cast<size_t>(n - 1)][gram] += 1.0;
    }
  }
  return counts;
}

}  // namespace

CiderCorpus build_cider_corpus(const std::vector<std::vector<std::string>>& reference_sets,
                               int max_n) {
  if (reference_sets.empty()) {
    throw AutoadError(ErrorCode::EmptyCorpus, "CIDEr corpus has no documents");
  }
  CiderCorpus corpus;
  corpus.max_n = max_n;
  corpus.num_docs = static_cast<long>(reference_sets.size());
  corpus.df.resize(static_cast<size_t>(max_n));
  for (const auto& refs : reference_sets) {
    std::vector<std::set<Ngram>> seen(static_cast<size_t>(max_n));
    for (const auto& ref : refs) {
      auto counts = count_ngrams(tokenize(ref), max_n);
      for (int n = 0; n < max_n; ++n) {
        for (const auto& [gram, _] : counts[static_cast<size_t>(n)]) {
          seen[static_cast<size_t>(n)].insert(gram);
        }
      }
    }
    for (int n = 0; n < max_n; ++n) {
      for (const auto& gram : seen[static_cast<size_t>(n)]) {
        corpus.df[static_cast<size_t>(n)][gram] += 1.0;
      }
    }
  }
  return corpus;
}

namespace {

// tf-idf vector per n; idf falls back to log(corpus size) for unseen n-grams.
std::vector<NgramCounts> tfidf_vec(const std::vector<NgramCounts>& counts,
                                   const CiderCorpus& corpus) {
  const double log_docs = std::log(static_cast<double>(corpus.num_docs));
  std::vector<NgramCounts> vec(static_cast<size_t>(corpus.max_n));
  for (int n = 0; n < corpus.max_n; ++n) {
    for (const auto& [gram, tf] : counts[static_cast<size_t>(n)]) {
      auto it = corpus.df[static_cast<size_t>(n)].find(gram);
      const double df = it == corpus.df[static_cast<size_t>(n)].end() ? 0.0 : it->second;
      const double idf = df > 0.0 ? log_docs - std::log(df) : log_docs;
      vec[static_cast<size_t>(n)][gram] = tf * idf;
    }
  }
  return vec;
}

double norm_of(const NgramCounts& v) {
  double s = 0.0;
  for (const auto& [_, x] : v) s += x * x;
  return std::sqrt(s);
}

double dot_of(const NgramCounts& a, const NgramCounts& b) {
  double s = 0.0;
  for (const auto& [gram, x] : a) {
    auto it = b.find(gram);
    if (it != b.end()) s += x * it->second;
  }
  return s;
}

}  // namespace

double cider(const std::vector<std::string>& candidates,
             const std::vector<std::vector<std::string>>& references,
             const CiderCorpus& corpus) {
  if (corpus.num_docs == 0) {
    throw AutoadError(ErrorCode::EmptyCorpus, "empty CIDEr corpus");
  }
  if (candidates.size() != references.size() || candidates.empty()) {
    throw AutoadError(ErrorCode::InvalidArgument,
                      "CIDEr needs matched, nonempty candidate/reference lists");
  }
  double total = 0.0;
  for (size_t d = 0; d < candidates.size(); ++d) {
    auto cand_vec = tfidf_vec(count_ngrams(tokenize(candidates[d]), corpus.max_n), corpus);
    double doc_score = 0.0;
    for (const auto& ref : references[d]) {
      auto ref_vec = tfidf_vec(count_ngrams(tokenize(ref), corpus.max_n), corpus);
      double sim_sum = 0.0;
      for (int n = 0; n < corpus.max_n; ++n) {
        const auto& cv = cand_vec[static_cast<size_t>(n)];
        const auto& rv = ref_vec[static_cast<size_t>(n)];
        const double cn = norm_of(cv);
        const double rn = norm_of(rv);
        if (cn > 0.0 && rn > 0.0) sim_sum += dot_of(cv, rv) / (cn * rn);
      }
      doc_score += sim_sum / static_cast<double>(corpus.max_n);
    }
    total += doc_score / static_cast<double>(references[d].size());
  }
  return total / static_cast<double>(candidates.size());
}

// --- similarity backends ---------------------------------------------------

SimilarityBackend SimilarityBackend::exact_match() {
  SimilarityBackend b;
  b.kind_ = SimilarityKind::ExactMatch;
  return b;
}

SimilarityBackend SimilarityBackend::embedding_cosine(
    std::map<std::string, Eigen::VectorXd> table) {
  SimilarityBackend b;
  b.kind_ = SimilarityKind::EmbeddingCosine;
  b.table_ = std::move(table);
  b.dim_ = b.table_.empty() ? 16 : b.table_.begin()->second.size();
  return b;
}

SimilarityBackend SimilarityBackend::bertscore_style(
    std::map<std::string, Eigen::VectorXd> table) {
  SimilarityBackend b;
  b.kind_ = SimilarityKind::BertscoreStyle;
  b.table_ = std::move(table);
  b.dim_ = b.table_.empty() ? 16 : b.table_.begin()->second.size();
  return b;
}

Eigen::VectorXd SimilarityBackend::token_embedding(const std::string& token) const {
  auto it = table_.find(token);
  if (it != table_.end()) return it->second;
  // FNV-1a hash seeds a deterministic pseudo-embedding for unknown tokens.
  uint64_t h = 1469598103934665603ull;
  for (char c : token) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  Eigen::VectorXd v(dim_);
  for (Eigen::Index i = 0; i < dim_; ++i) {
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    v(i) = static_cast<double>(static_cast<int64_t>(h % 2001) - 1000) / 1000.0;
  }
  return v;
}

Eigen::VectorXd SimilarityBackend::sentence_embedding(const std::string& text) const {
  auto tokens = tokenize(text);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim_);
  for (const auto& t : tokens) sum += token_embedding(t);
  if (!tokens.empty()) sum /= static_cast<double>(tokens.size());
  return sum;
}

double SimilarityBackend::score(const std::string& a, const std::string& b) const {
  switch (kind_) {
    case SimilarityKind::ExactMatch:
      return tokenize(a) == tokenize(b) ? 1.0 : 0.0;
    case SimilarityKind::EmbeddingCosine: {
      Eigen::VectorXd va = sentence_embedding(a);
      Eigen::VectorXd vb = sentence_embedding(b);
      const double na = va.norm();
      const double nb = vb.norm();
      if (na == 0.0 || nb == 0.0) return 0.0;
      return va.dot(vb) / (na * nb);
    }
    case SimilarityKind::BertscoreStyle: {
      // Greedy token matching, idf off: F1 of max-cosine matches.
      auto ta = tokenize(a);
      auto tb = tokenize(b);
      if (ta.empty() || tb.empty()) return 0.0;
      std::vector<Eigen::VectorXd> ea, eb;
      for (const auto& t : ta) ea.push_back(token_embedding(t).normalized());
      for (const auto& t : tb) eb.push_back(token_embedding(t).normalized());
      auto greedy = [](const std::vector<Eigen::VectorXd>& xs,
                       const std::vector<Eigen::VectorXd>& ys) {
        double sum = 0.0;
        for (const auto& x : xs) {
          double best = -1.0;
          for (const auto& y : ys) best = std::max(best, x.dot(y));
          sum += best;
        }
        return sum / static_cast<double>(xs.size());
      };
      const double p = greedy(ea, eb);
      const double r = greedy(eb, ea);
      if (p + r == 0.0) return 0.0;
      return 2.0 * p * r / (p + r);
    }
  }
  return 0.0;
}

std::map<std::string, Eigen::VectorXd> load_embedding_table(
    const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw AutoadError(ErrorCode::MissingFile, file.string());
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw AutoadError(ErrorCode::MalformedFixture, file.string() + ": " + e.what());
  }
  std::map<std::string, Eigen::VectorXd> table;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    auto vals = it.value().get<std::vector<double>>();
    Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
    for (size_t i = 0; i < vals.size(); ++i) v(static_cast<Eigen::Index>(i)) = vals[i];
    table[it.key()] = std::move(v);
  }
  return table;
}

// --- R@k/N -----------------------------------------------------------------

double recall_at_k_within_n(const SequenceEvalInput& input, int k, int n,
                            const SimilarityBackend& sim) {
  if (k < 1 || n < 1 || k > n) {
    throw AutoadError(ErrorCode::InvalidKN, "require 1 <= k <= N");
  }
  if (input.reference.empty()) {
    throw AutoadError(ErrorCode::EmptyReference, "no reference texts");
  }
  if (input.generated.empty()) return 0.0;

  const auto& refs = input.reference;
  const bool slot_aligned = input.generated.size() == refs.size();

  double hits = 0.0;
  for (size_t gi = 0; gi < input.generated.size(); ++gi) {
    const auto& gen = input.generated[gi];
    // Pairing rule.
    size_t paired = 0;
    if (slot_aligned) {
      paired = gi;
    } else {
      double best = std::numeric_limits<double>::infinity();
      for (size_t ri = 0; ri < refs.size(); ++ri) {
        const double d = std::abs(refs[ri].midpoint() - gen.midpoint());
        if (d < best) {
          best = d;
          paired = ri;
        }
      }
    }
    // Pool: the N GT items nearest in time to the paired one, inclusive.
    std::vector<size_t> pool(refs.size());
    std::iota(pool.begin(), pool.end(), 0);
    std::stable_sort(pool.begin(), pool.end(), [&](size_t a, size_t b) {
      return std::abs(refs[a].midpoint() - refs[paired].midpoint()) <
             std::abs(refs[b].midpoint() - refs[paired].midpoint());
    });
    if (pool.size() > static_cast<size_t>(n)) pool.resize(static_cast<size_t>(n));
    // Rank pool by similarity; ties by temporal proximity, then index.
    std::vector<double> sims(pool.size());
    for (size_t i = 0; i < pool.size(); ++i) {
      sims[i] = sim.score(gen.text, refs[pool[i]].text);
    }
    std::vector<size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (sims[a] != sims[b]) return sims[a] > sims[b];
      const double da = std::abs(refs[pool[a]].midpoint() - refs[paired].midpoint());
      const double db = std::abs(refs[pool[b]].midpoint() - refs[paired].midpoint());
      if (da != db) return da < db;
      return pool[a] < pool[b];
    });
    for (size_t rank = 0; rank < order.size() && rank < static_cast<size_t>(k); ++rank) {
      if (pool[order[rank]] == paired) {
        hits += 1.0;
        break;
      }
    }
  }
  return hits / static_cast<double>(input.generated.size());
}

// --- ROC-AUC / AP ----------------------------------------------------------

namespace {

RocApResult roc_auc_ap_single(const std::vector<double>& scores,
                              const std::vector<int>& labels) {
  long pos = 0, neg = 0;
  for (int y : labels) (y ? pos : neg)++;
  if (pos == 0 || neg == 0) {
    throw AutoadError(ErrorCode::SingleClass, "need both classes for ROC/AP");
  }
  const size_t n = scores.size();

  // Midrank AUC.
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based midrank
    for (size_t t = i; t <= j; ++t) rank[order[t]] = mid;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  for (size_t t = 0; t < n; ++t) {
    if (labels[t]) rank_sum_pos += rank[t];
  }
  const double auc = (rank_sum_pos - 0.5 * static_cast<double>(pos) *
                                         static_cast<double>(pos + 1)) /
                     (static_cast<double>(pos) * static_cast<double>(neg));

  // AP: precision-recall step function over distinct thresholds, descending.
  std::vector<size_t> desc(order.rbegin(), order.rend());
  double ap = 0.0;
  double prev_recall = 0.0;
  long tp = 0, fp = 0;
  size_t d = 0;
  while (d < n) {
    size_t e = d;
    while (e + 1 < n && scores[desc[e + 1]] == scores[desc[d]]) ++e;
    for (size_t t = d; t <= e; ++t) {
      if (labels[desc[t]]) ++tp;
      else ++fp;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    d = e + 1;
  }
  return RocApResult{auc, ap};
}

}  // namespace

RocApResult roc_auc_ap(const std::vector<double>& scores, const std::vector<int>& labels,
                       const std::optional<std::vector<int>>& macro_groups) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw AutoadError(ErrorCode::InvalidArgument, "scores/labels size mismatch");
  }
  if (!macro_groups) return roc_auc_ap_single(scores, labels);
  if (macro_groups->size() != scores.size()) {
    throw AutoadError(ErrorCode::InvalidArgument, "macro group size mismatch");
  }
  std::map<int, std::pair<std::vector<double>, std::vector<int>>> groups;
  for (size_t i = 0; i < scores.size(); ++i) {
    auto& g = groups[(*macro_groups)[i]];
    g.first.push_back(scores[i]);
    g.second.push_back(labels[i]);
  }
  RocApResult total;
  for (const auto& [_, g] : groups) {
    auto r = roc_auc_ap_single(g.first, g.second);
    total.roc_auc += r.roc_auc;
    total.average_precision += r.average_precision;
  }
  total.roc_auc /= static_cast<double>(groups.size());
  total.average_precision /= static_cast<double>(groups.size());
  return total;
}

// --- corpus statistics -----------------------------------------------------

const std::vector<std::string> kAdPronouns = {"she", "her", "he",
                                              "him", "they", "them"};
const std::vector<std::string> kSubtitlePronouns = {"she", "her", "he", "him",
                                                    "they", "them", "i", "me"};

CorpusStatsReport corpus_stats(const CorpusStatsInput& input) {
  if (input.sentences.size() != input.has_per_tag.size()) {
    throw AutoadError(ErrorCode::InvalidArgument,
                      "NER annotation size != sentence count");
  }
  CorpusStatsReport report;
  for (size_t i = 0; i < input.sentences.size(); ++i) {
    const auto& sent = input.sentences[i];
    if (input.intro_end_s && sent.end_s <= *input.intro_end_s) continue;
    if (input.outro_start_s && sent.start_s >= *input.outro_start_s) continue;
    ++report.total;
    const bool per = input.has_per_tag[i];
    bool pronoun = false;
    for (const auto& tok : tokenize(sent.text)) {
      if (std::find(input.pronoun_set.begin(), input.pronoun_set.end(), tok) !=
          input.pronoun_set.end()) {
        pronoun = true;
        break;
      }
    }
    if (per) ++report.with_per;
    if (pronoun) ++report.with_pronoun;
    if (per || pronoun) ++report.with_either;
  }
  if (report.total > 0) {
    report.per_fraction = static_cast<double>(report.with_per) / report.total;
    report.pronoun_fraction = static_cast<double>(report.with_pronoun) / report.total;
    report.union_fraction = static_cast<double>(report.with_either) / report.total;
  }
  return report;
}

}  // namespace autoad::eval
