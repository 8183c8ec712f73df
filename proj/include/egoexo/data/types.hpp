#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace egoexo::data {

enum class ViewLabel { ego, exo };

std::string_view to_string(ViewLabel view);
/// Throws ValidationError for anything other than "ego" / "exo".
ViewLabel parse_view(std::string_view text);

struct ClipRecord {
  std::string clip_id;
  std::string video_id;
  ViewLabel view = ViewLabel::ego;
  std::string scenario;  // empty means unassigned
  double start_s = 0.0;
  double end_s = 0.0;
  std::string raw_text;
  std::optional<std::string> refined_text;

  /// refined_text when present, raw_text otherwise.
  const std::string& best_text() const { return refined_text ? *refined_text : raw_text; }

  bool operator==(const ClipRecord&) const = default;
};

struct Narration {
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;

  bool operator==(const Narration&) const = default;
};

struct TranscriptDocument {
  std::string video_id;
  std::vector<Narration> narrations;  // sorted by start_s
};

/// Row-major so a clip's frames are contiguous, matching the on-disk layout.
using FrameMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FeatureMatrix {
  std::string clip_id;
  FrameMatrix frames;  // T x d

  std::size_t frame_count() const { return static_cast<std::size_t>(frames.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(frames.cols()); }
};

struct DatasetManifest {
  ViewLabel view = ViewLabel::ego;
  std::optional<std::size_t> feature_dim;  // known once bound to a feature store
  std::vector<ClipRecord> records;

  bool operator==(const DatasetManifest& other) const {
    return view == other.view && records == other.records;
  }
};

/// Validates record-level invariants; throws ValidationError.
void validate_record(const ClipRecord& record);
/// Validates manifest-level invariants (shared view, unique ids).
void validate_manifest(const DatasetManifest& manifest);

/// Groups records by video_id into transcripts sorted by start time. Documents
/// are returned in order of first appearance of their video_id.
std::vector<TranscriptDocument> group_transcripts(const std::vector<ClipRecord>& records,
                                                  bool use_refined = false);

}  // namespace egoexo::data
