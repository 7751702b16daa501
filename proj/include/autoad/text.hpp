#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoad/common.hpp"

namespace autoad::text {

// Lowercase word split with punctuation broken out as its own tokens;
// angle-tag specials like <image> stay atomic.
std::vector<std::string> word_split(const std::string& input);

// Byte-pair subword encoder loaded from a fixture (vocab + ranked merges).
class SubwordVocab {
 public:
  static SubwordVocab from_fixture(const std::filesystem::path& json_file);
  static SubwordVocab from_json(const nlohmann::json& doc);
  // Character-level fallback over printable ASCII, no merges.
  static SubwordVocab basic_latin();

  std::vector<std::string> encode_word(const std::string& word) const;
  const std::vector<std::string>& pieces() const { return pieces_; }
  nlohmann::json to_json() const;

 private:
  std::vector<std::string> pieces_;
  std::map<std::pair<std::string, std::string>, int> merge_rank_;
};

// Vocabulary for the gap classifier: BPE subwords, then the 61 timestamp
// specials <|t00|>..<|t60|>, then <|mask|>, <unk>, <pad>.
class ProposerVocab {
 public:
  static constexpr int kTimestampCount = 61;

  explicit ProposerVocab(SubwordVocab subwords);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int timestamp_id(int index) const;
  int mask_id() const { return mask_id_; }
  int unk_id() const { return unk_id_; }
  int pad_id() const { return pad_id_; }
  const std::string& token(int id) const { return id_to_token_.at(static_cast<size_t>(id)); }

  std::vector<int> encode_text(const std::string& input) const;
  nlohmann::json to_json() const;
  static ProposerVocab from_json(const nlohmann::json& doc);

 private:
  SubwordVocab subwords_;
  std::vector<std::string> id_to_token_;
  std::map<std::string, int> token_to_id_;
  int first_timestamp_id_ = 0;
  int mask_id_ = 0;
  int unk_id_ = 0;
  int pad_id_ = 0;
};

// Word-level vocabulary for the AD generator's tiny LM.
class WordVocab {
 public:
  static WordVocab build(const std::vector<std::string>& corpus_texts);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int pad_id() const { return 0; }
  int bos_id() const { return 1; }
  int eos_id() const { return 2; }
  int unk_id() const { return 3; }
  int image_id() const { return 4; }
  int video_id() const { return 5; }

  int id_of(const std::string& token) const;  // unk for unknown
  const std::string& token(int id) const { return id_to_token_.at(static_cast<size_t>(id)); }

  std::vector<int> encode(const std::string& input) const;      // no specials added
  std::string decode(const std::vector<int>& ids) const;        // skips specials

  nlohmann::json to_json() const;
  static WordVocab from_json(const nlohmann::json& doc);

 private:
  WordVocab() = default;
  std::vector<std::string> id_to_token_;
  std::map<std::string, int> token_to_id_;
};

}  // namespace autoad::text
