#include "autoad/text.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

namespace autoad::text {

using nlohmann::json;

std::vector<std::string> word_split(const std::string& input) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  for (size_t i = 0; i < input.size(); ++i) {
    const char c = input[i];
    if (c == '<') {
      // Atomic angle-tag token, e.g. <image>, <video>, <|t07|>.
      auto close = input.find('>', i);
      if (close != std::string::npos) {
        flush();
        tokens.push_back(input.substr(i, close - i + 1));
        i = close;
        continue;
      }
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (std::ispunct(static_cast<unsigned char>(c))) {
      flush();
      tokens.push_back(std::string(1, c));
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  flush();
  return tokens;
}

// --- SubwordVocab ----------------------------------------------------------

SubwordVocab SubwordVocab::from_fixture(const std::filesystem::path& json_file) {
  std::ifstream in(json_file);
  if (!in) {
    throw AutoadError(ErrorCode::MissingFile, json_file.string());
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw AutoadError(ErrorCode::MalformedFixture, json_file.string() + ": " + e.what());
  }
  return from_json(doc);
}

SubwordVocab SubwordVocab::from_json(const json& doc) {
  SubwordVocab v;
  v.pieces_ = doc.at("vocab").get<std::vector<std::string>>();
  int rank = 0;
  for (const auto& merge : doc.value("merges", json::array())) {
    if (!merge.is_array() || merge.size() != 2) {
      throw AutoadError(ErrorCode::MalformedFixture, "BPE merge must be a pair");
    }
    v.merge_rank_[{merge[0].get<std::string>(), merge[1].get<std::string>()}] = rank++;
  }
  return v;
}

SubwordVocab SubwordVocab::basic_latin() {
  SubwordVocab v;
  for (int c = 32; c < 127; ++c) v.pieces_.push_back(std::string(1, static_cast<char>(c)));
  return v;
}

std::vector<std::string> SubwordVocab::encode_word(const std::string& word) const {
  std::vector<std::string> parts;
  for (char c : word) parts.push_back(std::string(1, c));
  while (parts.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    size_t best_i = 0;
    for (size_t i = 0; i + 1 < parts.size(); ++i) {
      auto it = merge_rank_.find({parts[i], parts[i + 1]});
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_i = i;
      }
    }
    if (best_rank == std::numeric_limits<int>::max()) break;
    parts[best_i] += parts[best_i + 1];
    parts.erase(parts.begin() + static_cast<long>(best_i) + 1);
  }
  return parts;
}

json SubwordVocab::to_json() const {
  json merges = json::array();
  std::vector<std::pair<int, std::pair<std::string, std::string>>> ranked;
  for (const auto& [pair, rank] : merge_rank_) ranked.push_back({rank, pair});
  std::sort(ranked.begin(), ranked.end());
  for (const auto& [rank, pair] : ranked) {
    merges.push_back(json::array({pair.first, pair.second}));
  }
  return {{"vocab", pieces_}, {"merges", merges}};
}

// --- ProposerVocab ---------------------------------------------------------

namespace {

std::string timestamp_token(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "<|t%02d|>", index);
  return buf;
}

}  // namespace

ProposerVocab::ProposerVocab(SubwordVocab subwords) : subwords_(std::move(subwords)) {
  for (const auto& piece : subwords_.pieces()) id_to_token_.push_back(piece);
  first_timestamp_id_ = static_cast<int>(id_to_token_.size());
  for (int i = 0; i < kTimestampCount; ++i) {
    id_to_token_.push_back(timestamp_token(i));
  }
  mask_id_ = static_cast<int>(id_to_token_.size());
  id_to_token_.push_back("<|mask|>");
  unk_id_ = static_cast<int>(id_to_token_.size());
  id_to_token_.push_back("<unk>");
  pad_id_ = static_cast<int>(id_to_token_.size());
  id_to_token_.push_back("<pad>");
  for (size_t i = 0; i < id_to_token_.size(); ++i) {
    token_to_id_[id_to_token_[i]] = static_cast<int>(i);
  }
}

int ProposerVocab::timestamp_id(int index) const {
  if (index < 0 || index >= kTimestampCount) {
    throw AutoadError(ErrorCode::InvalidArgument,
                      "timestamp token index out of [0,60]");
  }
  return first_timestamp_id_ + index;
}

std::vector<int> ProposerVocab::encode_text(const std::string& input) const {
  std::vector<int> ids;
  for (const auto& word : word_split(input)) {
    for (const auto& piece : subwords_.encode_word(word)) {
      auto it = token_to_id_.find(piece);
      ids.push_back(it == token_to_id_.end() ? unk_id_ : it->second);
    }
  }
  return ids;
}

json ProposerVocab::to_json() const { return {{"subwords", subwords_.to_json()}}; }

ProposerVocab ProposerVocab::from_json(const json& doc) {
  return ProposerVocab(SubwordVocab::from_json(doc.at("subwords")));
}

// --- WordVocab -------------------------------------------------------------

WordVocab WordVocab::build(const std::vector<std::string>& corpus_texts) {
  WordVocab v;
  v.id_to_token_ = {"<pad>", "<bos>", "<eos>", "<unk>", "<image>", "<video>"};
  std::set<std::string> seen(v.id_to_token_.begin(), v.id_to_token_.end());
  std::vector<std::string> collected;
  for (const auto& text : corpus_texts) {
    for (const auto& tok : word_split(text)) {
      if (seen.insert(tok).second) collected.push_back(tok);
    }
  }
  std::sort(collected.begin(), collected.end());
  for (auto& tok : collected) v.id_to_token_.push_back(std::move(tok));
  for (size_t i = 0; i < v.id_to_token_.size(); ++i) {
    v.token_to_id_[v.id_to_token_[i]] = static_cast<int>(i);
  }
  return v;
}

int WordVocab::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? unk_id() : it->second;
}

std::vector<int> WordVocab::encode(const std::string& input) const {
  std::vector<int> ids;
  for (const auto& tok : word_split(input)) ids.push_back(id_of(tok));
  return ids;
}

std::string WordVocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id <= unk_id() && id != unk_id()) continue;  // skip pad/bos/eos
    const std::string& tok = token(id);
    const bool is_punct = tok.size() == 1 &&
                          std::ispunct(static_cast<unsigned char>(tok[0]));
    if (!out.empty() && !is_punct) out += " ";
    out += tok;
  }
  return out;
}

json WordVocab::to_json() const { return {{"tokens", id_to_token_}}; }

WordVocab WordVocab::from_json(const json& doc) {
  WordVocab v;
  v.id_to_token_ = doc.at("tokens").get<std::vector<std::string>>();
  for (size_t i = 0; i < v.id_to_token_.size(); ++i) {
    v.token_to_id_[v.id_to_token_[i]] = static_cast<int>(i);
  }
  return v;
}

}  // namespace autoad::text
