#include "autoad/feature_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "autoad/csv.hpp"

namespace autoad::feature_store {

namespace fs = std::filesystem;
using nlohmann::json;

void validate_track(const FrameFeatureTrack& track) {
  const auto T = track.frame_count();
  if (T == 0 || track.dim() == 0) {
    throw AutoadError(ErrorCode::ShapeMismatch,
                      "empty feature track for movie " + track.movie_id);
  }
  if (static_cast<Eigen::Index>(track.timestamps.size()) != T) {
    throw AutoadError(ErrorCode::ShapeMismatch,
                      "timestamp count does not match feature rows");
  }
  for (size_t i = 1; i < track.timestamps.size(); ++i) {
    if (!(track.timestamps[i] > track.timestamps[i - 1])) {
      throw AutoadError(ErrorCode::NonMonotonicTimestamps,
                        "timestamps must be strictly increasing at index " +
                            std::to_string(i));
    }
  }
  if (!track.features.allFinite()) {
    throw AutoadError(ErrorCode::ShapeMismatch,
                      "feature track contains NaN/Inf entries");
  }
}

void validate_record(const MovieRecord& record) {
  validate_track(record.track);
  const double limit = record.track.timestamps.back() + 60.0;
  auto check_list = [&](const std::vector<TimedText>& events, const char* label) {
    for (const auto& e : events) {
      validate_timed_text(e);
      if (e.start_s < 0.0 || e.end_s > limit) {
        throw AutoadError(ErrorCode::InvalidTimeline,
                          std::string(label) + " event outside [0, last+60s]: '" +
                              e.text + "'");
      }
    }
  };
  check_list(record.ad, "AD");
  check_list(record.subtitles, "subtitle");
  check_list(record.speech, "speech");
  for (size_t i = 1; i < record.ad.size(); ++i) {
    if (record.ad[i].start_s < record.ad[i - 1].start_s) {
      throw AutoadError(ErrorCode::InvalidTimeline, "AD events not sorted by start_s");
    }
  }
}

void write_feature_payload(const fs::path& file, const FrameFeatureTrack& track) {
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw AutoadError(ErrorCode::MissingFile, "cannot write " + file.string());
  }
  const uint32_t T = static_cast<uint32_t>(track.frame_count());
  const uint32_t D = static_cast<uint32_t>(track.dim());
  auto put_u32 = [&](uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  put_u32(T);
  put_u32(D);
  out.write(reinterpret_cast<const char*>(track.features.data()),
            static_cast<std::streamsize>(sizeof(float) * T * D));
}

FrameFeatureTrack read_feature_payload(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw AutoadError(ErrorCode::MissingFile, file.string());
  }
  unsigned char header[8];
  in.read(reinterpret_cast<char*>(header), 8);
  if (in.gcount() != 8) {
    throw AutoadError(ErrorCode::ShapeMismatch, "feature file shorter than header");
  }
  auto get_u32 = [&](int off) {
    return static_cast<uint32_t>(header[off]) |
           (static_cast<uint32_t>(header[off + 1]) << 8) |
           (static_cast<uint32_t>(header[off + 2]) << 16) |
           (static_cast<uint32_t>(header[off + 3]) << 24);
  };
  const uint32_t T = get_u32(0);
  const uint32_t D = get_u32(4);
  if (T == 0 || D == 0) {
    throw AutoadError(ErrorCode::ShapeMismatch, "feature header declares empty track");
  }
  FrameFeatureTrack track;
  track.features.resize(T, D);
  const std::streamsize want =
      static_cast<std::streamsize>(sizeof(float)) * T * D;
  in.read(reinterpret_cast<char*>(track.features.data()), want);
  if (in.gcount() != want) {
    throw AutoadError(ErrorCode::ShapeMismatch,
                      "feature payload size disagrees with T*D header");
  }
  char extra;
  if (in.read(&extra, 1)) {
    throw AutoadError(ErrorCode::ShapeMismatch,
                      "feature payload larger than T*D header");
  }
  return track;
}

std::vector<TimedText> read_timeline_csv(const fs::path& file) {
  auto doc = csv::read_file(file);
  std::vector<TimedText> events;
  for (size_t i = 0; i < doc.rows.size(); ++i) {
    const auto& row = doc.rows[i];
    if (i == 0 && !row.empty() && row[0] == "start_s") continue;  // header row
    if (row.size() != 4) {
      throw AutoadError(ErrorCode::InvalidTimeline,
                        "timeline row must have 4 fields, got " +
                            std::to_string(row.size()));
    }
    TimedText tt;
    tt.start_s = std::stod(row[0]);
    tt.end_s = std::stod(row[1]);
    tt.kind = text_kind_from_name(row[2]);
    tt.text = row[3];
    events.push_back(std::move(tt));
  }
  return events;
}

void write_timeline_csv(const fs::path& file, const std::vector<TimedText>& events) {
  csv::Document doc;
  doc.rows.push_back({"start_s", "end_s", "kind", "text"});
  for (const auto& e : events) {
    std::ostringstream s0, s1;
    s0 << e.start_s;
    s1 << e.end_s;
    doc.rows.push_back({s0.str(), s1.str(), text_kind_name(e.kind), e.text});
  }
  csv::write_file(file, doc);
}

namespace {

double parse_srt_time(const std::string& str) {
  // hh:mm:ss,mmm
  static const std::regex re(R"((\d+):(\d+):(\d+)[,.](\d+))");
  std::smatch m;
  if (!std::regex_match(str, m, re)) {
    throw AutoadError(ErrorCode::InvalidTimeline, "bad SRT timestamp '" + str + "'");
  }
  return std::stod(m[1]) * 3600.0 + std::stod(m[2]) * 60.0 + std::stod(m[3]) +
         std::stod(m[4]) / 1000.0;
}

}  // namespace

std::vector<TimedText> read_srt(const fs::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw AutoadError(ErrorCode::MissingFile, file.string());
  }
  std::vector<TimedText> cues;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    // line holds the cue index; next line the time range
    std::string time_line;
    if (!std::getline(in, time_line)) break;
    if (!time_line.empty() && time_line.back() == '\r') time_line.pop_back();
    auto arrow = time_line.find("-->");
    if (arrow == std::string::npos) {
      throw AutoadError(ErrorCode::InvalidTimeline,
                        "expected SRT time range, got '" + time_line + "'");
    }
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t");
      size_t b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    TimedText cue;
    cue.kind = TextKind::Subtitle;
    cue.start_s = parse_srt_time(trim(time_line.substr(0, arrow)));
    cue.end_s = parse_srt_time(trim(time_line.substr(arrow + 3)));
    std::string text;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) break;
      if (!text.empty()) text += " ";
      text += line;
    }
    cue.text = text;
    validate_timed_text(cue);
    cues.push_back(std::move(cue));
  }
  return cues;
}

MovieRecord load_movie(const fs::path& root, const std::string& movie_id) {
  const fs::path dir = root / movie_id;
  const fs::path meta_path = dir / "meta.json";
  const fs::path features_path = dir / "features.bin";
  const fs::path timeline_path = dir / "timeline.csv";
  for (const auto& p : {meta_path, features_path, timeline_path}) {
    if (!fs::exists(p)) {
      throw AutoadError(ErrorCode::MissingFile, p.string());
    }
  }

  json meta;
  {
    std::ifstream in(meta_path);
    try {
      in >> meta;
    } catch (const json::exception& e) {
      throw AutoadError(ErrorCode::MalformedFixture,
                        "meta.json parse error: " + std::string(e.what()));
    }
  }

  MovieRecord record;
  record.movie_id = meta.value("movie_id", movie_id);
  record.imdb_id = meta.value("imdb_id", "");
  record.track = read_feature_payload(features_path);
  record.track.movie_id = record.movie_id;
  if (meta.contains("fps_hint") && !meta["fps_hint"].is_null()) {
    record.track.fps_hint = meta["fps_hint"].get<double>();
  }
  if (!meta.contains("timestamps")) {
    throw AutoadError(ErrorCode::MalformedFixture, "meta.json lacks timestamps");
  }
  record.track.timestamps = meta["timestamps"].get<std::vector<double>>();
  if (meta.contains("D") &&
      meta["D"].get<Eigen::Index>() != record.track.dim()) {
    throw AutoadError(ErrorCode::ShapeMismatch,
                      "meta.json D disagrees with feature payload");
  }

  for (auto& e : read_timeline_csv(timeline_path)) {
    switch (e.kind) {
      case TextKind::AD: record.ad.push_back(std::move(e)); break;
      case TextKind::Subtitle: record.subtitles.push_back(std::move(e)); break;
      case TextKind::Speech: record.speech.push_back(std::move(e)); break;
    }
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".srt") {
      auto cues = read_srt(entry.path());
      record.subtitles.insert(record.subtitles.end(), cues.begin(), cues.end());
    }
  }
  auto by_start = [](const TimedText& a, const TimedText& b) {
    return a.start_s < b.start_s;
  };
  std::stable_sort(record.ad.begin(), record.ad.end(), by_start);
  std::stable_sort(record.subtitles.begin(), record.subtitles.end(), by_start);
  std::stable_sort(record.speech.begin(), record.speech.end(), by_start);

  validate_record(record);
  return record;
}

void save_movie(const fs::path& root, const MovieRecord& record) {
  validate_record(record);
  const fs::path dir = root / record.movie_id;
  fs::create_directories(dir);
  write_feature_payload(dir / "features.bin", record.track);

  json meta;
  meta["movie_id"] = record.movie_id;
  meta["imdb_id"] = record.imdb_id;
  meta["D"] = record.track.dim();
  meta["timestamps"] = record.track.timestamps;
  if (record.track.fps_hint) meta["fps_hint"] = *record.track.fps_hint;
  else meta["fps_hint"] = nullptr;
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << "\n";

  std::vector<TimedText> events;
  events.insert(events.end(), record.ad.begin(), record.ad.end());
  events.insert(events.end(), record.subtitles.begin(), record.subtitles.end());
  events.insert(events.end(), record.speech.begin(), record.speech.end());
  write_timeline_csv(dir / "timeline.csv", events);
}

std::vector<Eigen::Index> slice_indices(const FrameFeatureTrack& track, double t1,
                                        double t2) {
  if (!(t1 < t2)) {
    throw AutoadError(ErrorCode::InvalidInterval, "require t1 < t2");
  }
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < track.frame_count(); ++i) {
    const double t = track.timestamps[static_cast<size_t>(i)];
    if (t >= t1 && t < t2) rows.push_back(i);
  }
  return rows;
}

Eigen::MatrixXd slice_features(const FrameFeatureTrack& track, double t1, double t2) {
  auto rows = slice_indices(track, t1, t2);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), track.dim());
  for (size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = track.features.row(rows[i]).cast<double>();
  }
  return out;
}

Eigen::MatrixXd track_as_double(const FrameFeatureTrack& track) {
  return track.features.cast<double>();
}

std::vector<std::string> list_movies(const fs::path& root) {
  std::vector<std::string> ids;
  if (!fs::exists(root)) {
    throw AutoadError(ErrorCode::MissingFile, root.string());
  }
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) {
      ids.push_back(entry.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace autoad::feature_store
