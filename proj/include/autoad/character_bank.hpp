#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "autoad/common.hpp"
#include "autoad/feature_store.hpp"

namespace autoad::charbank {

struct CastRecord {
  std::string char_name;
  std::string actor_name;
  std::optional<Eigen::VectorXd> portrait_feature;
};

struct CharacterEntry {
  std::string char_name;
  std::string actor_name;
  Eigen::VectorXd portrait_feature;
  Eigen::VectorXd exemplar_feature;
  std::vector<Eigen::Index> top_k_frame_indices;
};

struct CharacterBank {
  std::string movie_id;
  std::vector<CharacterEntry> entries;
};

// Fixture-backed stand-in for an online movie database: cast lists are read
// from <fixture_root>/<imdb_id>/cast.json.
class MovieDatabaseClient {
 public:
  explicit MovieDatabaseClient(std::filesystem::path fixture_root);

  // Top `max_cast` records; records with no portrait feature are dropped.
  std::vector<CastRecord> fetch_cast(const std::string& imdb_id,
                                     int max_cast = 10) const;

 private:
  std::filesystem::path fixture_root_;
};

struct CalibrationResult {
  Eigen::VectorXd exemplar;
  std::vector<Eigen::Index> indices;  // top-k frames, similarity order
};

// Top-k frames by cosine similarity to the portrait; the exemplar is their
// unweighted mean. Ties go to the lower frame index.
CalibrationResult calibrate_exemplar(const Eigen::VectorXd& portrait,
                                     const feature_store::FrameFeatureTrack& track,
                                     int k);

CharacterBank build_bank(const MovieDatabaseClient& client, const std::string& imdb_id,
                         const std::string& movie_id,
                         const feature_store::FrameFeatureTrack& track, int k = 5,
                         int max_cast = 10);

void save_bank(const std::filesystem::path& file, const CharacterBank& bank);
CharacterBank load_bank(const std::filesystem::path& file);

}  // namespace autoad::charbank
