#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace autoad {

enum class ErrorCode {
  MissingFile,
  ShapeMismatch,
  NonMonotonicTimestamps,
  InvalidInterval,
  InvalidTimeline,
  UnknownMovie,
  MalformedFixture,
  KTooLarge,
  ZeroVector,
  DuplicateCharacter,
  DimMismatch,
  InvalidAlpha,
  DegenerateDataset,
  DegenerateCorpus,
  OverlappingSpeech,
  UntrainedModel,
  NoLabeledGaps,
  EmptyInput,
  InvalidKN,
  EmptyReference,
  SingleClass,
  EmptyCorpus,
  ConfigMismatch,
  InvalidArgument,
};

const char* error_code_name(ErrorCode code);

class AutoadError : public std::runtime_error {
 public:
  AutoadError(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

enum class TextKind { AD, Subtitle, Speech };

const char* text_kind_name(TextKind kind);
TextKind text_kind_from_name(const std::string& name);

// A text span on the movie timeline, in seconds.
struct TimedText {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string text;
  TextKind kind = TextKind::AD;

  double midpoint() const { return 0.5 * (start_s + end_s); }
};

void validate_timed_text(const TimedText& tt);

}  // namespace autoad
