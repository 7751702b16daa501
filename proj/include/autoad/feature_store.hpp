#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "autoad/common.hpp"

namespace autoad::feature_store {

// Time-indexed frame embeddings for one movie. Payload is float32 on disk
// and in memory so a save/load round trip is byte identical.
struct FrameFeatureTrack {
  std::string movie_id;
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> features;  // T x D
  std::vector<double> timestamps;  // strictly increasing, size T
  std::optional<double> fps_hint;

  Eigen::Index frame_count() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
};

struct MovieRecord {
  std::string movie_id;
  std::string imdb_id;
  FrameFeatureTrack track;
  std::vector<TimedText> ad;
  std::vector<TimedText> subtitles;
  std::vector<TimedText> speech;
};

void validate_track(const FrameFeatureTrack& track);
void validate_record(const MovieRecord& record);

// Directory layout per movie: features.bin, meta.json, timeline.csv, *.srt.
MovieRecord load_movie(const std::filesystem::path& root, const std::string& movie_id);
void save_movie(const std::filesystem::path& root, const MovieRecord& record);

// Rows with timestamp in the half-open interval [t1, t2), in time order.
Eigen::MatrixXd slice_features(const FrameFeatureTrack& track, double t1, double t2);

// Row indices selected by slice_features, same interval convention.
std::vector<Eigen::Index> slice_indices(const FrameFeatureTrack& track, double t1, double t2);

Eigen::MatrixXd track_as_double(const FrameFeatureTrack& track);

// Low-level payload IO (8-byte header: T, D as little-endian uint32, then
// T*D row-major float32).
void write_feature_payload(const std::filesystem::path& file,
                           const FrameFeatureTrack& track);
FrameFeatureTrack read_feature_payload(const std::filesystem::path& file);

// Timeline CSV with columns start_s,end_s,kind,text.
std::vector<TimedText> read_timeline_csv(const std::filesystem::path& file);
void write_timeline_csv(const std::filesystem::path& file,
                        const std::vector<TimedText>& events);

// SRT import convenience; every cue becomes a SUBTITLE event.
std::vector<TimedText> read_srt(const std::filesystem::path& file);

// Movie ids found directly under the root (directories with a meta.json).
std::vector<std::string> list_movies(const std::filesystem::path& root);

}  // namespace autoad::feature_store
