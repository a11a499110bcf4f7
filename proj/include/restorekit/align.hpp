#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace restorekit {

enum class SequenceRole { kGT, kLQ };

const char* to_string(SequenceRole r);
SequenceRole sequence_role_from_string(const std::string& s);

/// Marker timestamps of one captured sequence, in seconds from its first frame.
struct SequenceRecord {
  std::string id;
  SequenceRole role = SequenceRole::kGT;
  double start_marker_appear_s = 0.0;
  double start_marker_disappear_s = 0.0;
  double end_marker_appear_s = 0.0;
  double fps = 30.0;
  int frame_count = 1;
  /// Records are only matched within the same scene.
  std::string scene;

  /// Throws ValidationError unless appear < disappear < end_appear, fps > 0
  /// and frame_count >= 1.
  void validate() const;
  bool operator==(const SequenceRecord&) const = default;
};

/// Time between the start marker's appearance and disappearance.
double interval(const SequenceRecord& rec);

struct MatchedPair {
  std::string gt_id;
  std::string lq_id;
  double error_s = 0.0;
  bool operator==(const MatchedPair&) const = default;
};

struct Rejection {
  std::string id;
  SequenceRole role = SequenceRole::kGT;
  std::string reason;
  bool operator==(const Rejection&) const = default;
};

struct MatchResult {
  std::vector<MatchedPair> pairs;  // sorted by GT id
  std::vector<Rejection> rejected;

  /// Fixed-width text table of pairs and rejections.
  std::string summary() const;
};

inline constexpr int kMaxExhaustiveSequences = 10;

/// Exhaustive one-to-one assignment. Among all assignments of
/// min(|gts|, |lqs|) pairs it picks, in order of priority: the most pairs
/// within tolerance, the least total error over those pairs, the least total
/// error overall. Remaining ties go to the first assignment in id order, so
/// the result does not depend on input order. Pairs over tolerance and
/// unassigned sequences are rejected with a reason.
/// Throws SizeError if either list exceeds kMaxExhaustiveSequences and
/// ValidationError on empty lists, invalid records, wrong roles or duplicate ids.
MatchResult match_sequences(const std::vector<SequenceRecord>& gts, const std::vector<SequenceRecord>& lqs,
                            double tolerance_s = 0.2);

/// Group records by scene and match each scene independently.
MatchResult match_scenes(const std::vector<SequenceRecord>& records, double tolerance_s = 0.2);

struct FramePairing {
  std::vector<std::pair<int, int>> pairs;  // (gt frame, lq frame)
  int gt_span = 0;
  int lq_span = 0;
  /// 1 when the usable spans differ in length, else 0.
  int warnings = 0;
};

/// Usable frames of each record run from ceil(disappear * fps) to
/// floor(end_appear * fps), capped at the last frame; the i-th usable frames
/// are paired up to the shorter span. Throws PairingError on an empty span.
FramePairing pair_frames(const SequenceRecord& gt, const SequenceRecord& lq);

void to_json(nlohmann::json& j, const SequenceRecord& r);
void from_json(const nlohmann::json& j, SequenceRecord& r);
nlohmann::json to_json(const MatchResult& m);

/// Load records from .csv (header row with the field names) or .jsonl.
std::vector<SequenceRecord> read_sequences(const std::filesystem::path& path);
std::vector<SequenceRecord> parse_sequences_csv(const std::string& text);

}  // namespace restorekit
