#include "autoad/character_bank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

namespace autoad::charbank {

namespace fs = std::filesystem;
using nlohmann::json;

MovieDatabaseClient::MovieDatabaseClient(fs::path fixture_root)
    : fixture_root_(std::move(fixture_root)) {}

std::vector<CastRecord> MovieDatabaseClient::fetch_cast(const std::string& imdb_id,
                                                        int max_cast) const {
  const fs::path file = fixture_root_ / imdb_id / "cast.json";
  if (!fs::exists(file)) {
    throw AutoadError(ErrorCode::UnknownMovie, imdb_id);
  }
  json doc;
  {
    std::ifstream in(file);
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw AutoadError(ErrorCode::MalformedFixture,
                        file.string() + ": " + e.what());
    }
  }
  if (!doc.is_array()) {
    throw AutoadError(ErrorCode::MalformedFixture,
                      file.string() + ": cast.json must be an array");
  }
  std::vector<CastRecord> records;
  int taken = 0;
  for (const auto& item : doc) {
    if (taken >= max_cast) break;
    ++taken;
    if (!item.contains("char") || !item.contains("actor")) {
      throw AutoadError(ErrorCode::MalformedFixture,
                        file.string() + ": cast item lacks char/actor");
    }
    CastRecord rec;
    rec.char_name = item["char"].get<std::string>();
    rec.actor_name = item["actor"].get<std::string>();
    if (rec.char_name.empty()) {
      throw AutoadError(ErrorCode::MalformedFixture,
                        file.string() + ": empty character name");
    }
    if (item.contains("portrait") && !item["portrait"].is_null()) {
      auto vals = item["portrait"].get<std::vector<double>>();
      Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
      for (size_t i = 0; i < vals.size(); ++i) v(static_cast<Eigen::Index>(i)) = vals[i];
      if (!v.allFinite()) {
        throw AutoadError(ErrorCode::MalformedFixture,
                          file.string() + ": non-finite portrait feature");
      }
      rec.portrait_feature = std::move(v);
    }
    // Characters without a portrait cannot be calibrated; drop them.
    if (rec.portrait_feature) records.push_back(std::move(rec));
  }
  return records;
}

CalibrationResult calibrate_exemplar(const Eigen::VectorXd& portrait,
                                     const feature_store::FrameFeatureTrack& track,
                                     int k) {
  const Eigen::Index T = track.frame_count();
  if (portrait.size() != track.dim()) {
    throw AutoadError(ErrorCode::DimMismatch, "portrait dim != track dim");
  }
  if (k < 1) {
    throw AutoadError(ErrorCode::InvalidArgument, "k must be >= 1");
  }
  if (k > T) {
    throw AutoadError(ErrorCode::KTooLarge,
                      "k=" + std::to_string(k) + " exceeds T=" + std::to_string(T));
  }
  const double pnorm = portrait.norm();
  if (pnorm == 0.0) {
    throw AutoadError(ErrorCode::ZeroVector, "portrait feature is all zeros");
  }

  std::vector<double> sims(static_cast<size_t>(T));
  for (Eigen::Index i = 0; i < T; ++i) {
    const Eigen::VectorXd row = track.features.row(i).cast<double>();
    const double rnorm = row.norm();
    sims[static_cast<size_t>(i)] =
        rnorm == 0.0 ? -1.0 : portrait.dot(row) / (pnorm * rnorm);
  }

  std::vector<Eigen::Index> order(static_cast<size_t>(T));
  std::iota(order.begin(), order.end(), 0);
  // Ties resolved toward the lower frame index (stable over the iota order).
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return sims[static_cast<size_t>(a)] > sims[static_cast<size_t>(b)];
  });
  order.resize(static_cast<size_t>(k));

  Eigen::VectorXd exemplar = Eigen::VectorXd::Zero(track.dim());
  for (Eigen::Index idx : order) {
    exemplar += track.features.row(idx).cast<double>();
  }
  exemplar /= static_cast<double>(k);
  return CalibrationResult{std::move(exemplar), std::move(order)};
}

CharacterBank build_bank(const MovieDatabaseClient& client, const std::string& imdb_id,
                         const std::string& movie_id,
                         const feature_store::FrameFeatureTrack& track, int k,
                         int max_cast) {
  auto cast = client.fetch_cast(imdb_id, max_cast);
  CharacterBank bank;
  bank.movie_id = movie_id;
  std::set<std::string> seen;
  for (auto& rec : cast) {
    if (!seen.insert(rec.char_name).second) {
      throw AutoadError(ErrorCode::DuplicateCharacter, rec.char_name);
    }
    CharacterEntry entry;
    entry.char_name = std::move(rec.char_name);
    entry.actor_name = std::move(rec.actor_name);
    entry.portrait_feature = std::move(*rec.portrait_feature);
    auto calib = calibrate_exemplar(entry.portrait_feature, track, k);
    entry.exemplar_feature = std::move(calib.exemplar);
    entry.top_k_frame_indices = std::move(calib.indices);
    bank.entries.push_back(std::move(entry));
  }
  return bank;
}

void save_bank(const fs::path& file, const CharacterBank& bank) {
  json doc;
  doc["movie_id"] = bank.movie_id;
  doc["entries"] = json::array();
  for (const auto& e : bank.entries) {
    json item;
    item["char"] = e.char_name;
    item["actor"] = e.actor_name;
    item["portrait"] = std::vector<double>(
        e.portrait_feature.data(), e.portrait_feature.data() + e.portrait_feature.size());
    item["exemplar"] = std::vector<double>(
        e.exemplar_feature.data(), e.exemplar_feature.data() + e.exemplar_feature.size());
    item["indices"] = e.top_k_frame_indices;
    doc["entries"].push_back(std::move(item));
  }
  std::ofstream out(file);
  if (!out) {
    throw AutoadError(ErrorCode::MissingFile, "cannot write " + file.string());
  }
  out << doc.dump(2) << "\n";
}

CharacterBank load_bank(const fs::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw AutoadError(ErrorCode::MissingFile, file.string());
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw AutoadError(ErrorCode::MalformedFixture, file.string() + ": " + e.what());
  }
  CharacterBank bank;
  bank.movie_id = doc.value("movie_id", "");
  for (const auto& item : doc["entries"]) {
    CharacterEntry e;
    e.char_name = item["char"].get<std::string>();
    e.actor_name = item["actor"].get<std::string>();
    auto to_vec = [](const json& arr) {
      auto vals = arr.get<std::vector<double>>();
      Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
      for (size_t i = 0; i < vals.size(); ++i) v(static_cast<Eigen::Index>(i)) = vals[i];
      return v;
    };
    e.portrait_feature = to_vec(item["portrait"]);
    e.exemplar_feature = to_vec(item["exemplar"]);
    e.top_k_frame_indices = item["indices"].get<std::vector<Eigen::Index>>();
    bank.entries.push_back(std::move(e));
  }
  return bank;
}

}  // namespace autoad::charbank
