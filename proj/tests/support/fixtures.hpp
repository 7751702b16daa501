#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoad/feature_store.hpp"
#include "autoad/nn/tensor.hpp"

namespace autoad::testing {

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "autoad_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline feature_store::FrameFeatureTrack make_track(const std::string& movie_id,
                                                   Eigen::Index frames,
                                                   Eigen::Index dim, uint64_t seed,
                                                   double dt = 1.0) {
  nn::Rng rng(seed);
  feature_store::FrameFeatureTrack track;
  track.movie_id = movie_id;
  track.features.resize(frames, dim);
  for (Eigen::Index r = 0; r < frames; ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) {
      track.features(r, c) = static_cast<float>(rng.gauss());
    }
    track.timestamps.push_back(static_cast<double>(r) * dt);
  }
  return track;
}

// A 30-frame, 8-dim movie with AD, subtitles and speech on a 30 s timeline.
inline feature_store::MovieRecord make_toy_movie(const std::string& movie_id = "toy_movie_a",
                                                 uint64_t seed = 11) {
  feature_store::MovieRecord m;
  m.movie_id = movie_id;
  m.imdb_id = "tt0000001";
  m.track = make_track(movie_id, 30, 8, seed);
  m.ad = {{1.0, 2.5, "A man opens the door", TextKind::AD},
          {8.0, 10.0, "She walks into the rain", TextKind::AD},
          {16.5, 18.0, "The dog runs down the street", TextKind::AD},
          {24.0, 27.0, "He turns away and smiles", TextKind::AD}};
  m.subtitles = {{3.0, 5.0, "Where were you?", TextKind::Subtitle},
                 {11.0, 13.5, "I had to see it myself.", TextKind::Subtitle}};
  m.speech = {{3.0, 5.0, "Where were you?", TextKind::Speech},
              {11.0, 13.5, "I had to see it myself.", TextKind::Speech},
              {19.0, 21.0, "Come back inside.", TextKind::Speech}};
  return m;
}

inline void write_cast_fixture(const std::filesystem::path& cast_root,
                               const std::string& imdb_id,
                               const std::vector<std::pair<std::string, std::string>>& cast,
                               const std::vector<std::vector<double>>& portraits) {
  nlohmann::json doc = nlohmann::json::array();
  for (size_t i = 0; i < cast.size(); ++i) {
    nlohmann::json rec = {{"char", cast[i].first}, {"actor", cast[i].second}};
    if (i < portraits.size() && !portraits[i].empty()) rec["portrait"] = portraits[i];
    doc.push_back(rec);
  }
  std::filesystem::create_directories(cast_root / imdb_id);
  std::ofstream out(cast_root / imdb_id / "cast.json");
  out << doc.dump(1) << "\n";
}

inline std::filesystem::path test_data_dir() {
#ifdef AUTOAD_TEST_DATA_DIR
  return AUTOAD_TEST_DATA_DIR;
#else
  return "tests/data";
#endif
}

}  // namespace autoad::testing
