#include "autoad/common.hpp"

namespace autoad {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case ErrorCode::InvalidInterval: return "InvalidInterval";
    case ErrorCode::InvalidTimeline: return "InvalidTimeline";
    case ErrorCode::UnknownMovie: return "UnknownMovie";
    case ErrorCode::MalformedFixture: return "MalformedFixture";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DuplicateCharacter: return "DuplicateCharacter";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::InvalidAlpha: return "InvalidAlpha";
    case ErrorCode::DegenerateDataset: return "DegenerateDataset";
    case ErrorCode::DegenerateCorpus: return "DegenerateCorpus";
    case ErrorCode::OverlappingSpeech: return "OverlappingSpeech";
    case ErrorCode::UntrainedModel: return "UntrainedModel";
    case ErrorCode::NoLabeledGaps: return "NoLabeledGaps";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidKN: return "InvalidKN";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "UnknownError";
}

const char* text_kind_name(TextKind kind) {
  switch (kind) {
    case TextKind::AD: return "AD";
    case TextKind::Subtitle: return "SUBTITLE";
    case TextKind::Speech: return "SPEECH";
  }
  return "AD";
}

TextKind text_kind_from_name(const std::string& name) {
  if (name == "AD") return TextKind::AD;
  if (name == "SUBTITLE") return TextKind::Subtitle;
  if (name == "SPEECH") return TextKind::Speech;
  throw AutoadError(ErrorCode::InvalidTimeline, "unknown text kind '" + name + "'");
}

void validate_timed_text(const TimedText& tt) {
  if (!(tt.start_s < tt.end_s)) {
    throw AutoadError(ErrorCode::InvalidTimeline,
                      "start_s must be < end_s for '" + tt.text + "'");
  }
  if (tt.kind != TextKind::Speech && tt.text.empty()) {
    throw AutoadError(ErrorCode::InvalidTimeline,
                      "empty text for AD/SUBTITLE event");
  }
}

}  // namespace autoad
