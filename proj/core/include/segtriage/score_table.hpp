#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "segtriage/bundle.hpp"
#include "segtriage/seg_metrics.hpp"
#include "segtriage/stat_model.hpp"
#include "segtriage/uncertainty.hpp"

namespace segtriage {

/// Everything derived from one bundle.
struct BundleAnalysis {
  MeanProbabilityMap mean;
  SegmentationMap segmentation;
  UncertaintyMap entropy;
  ClassUncertaintyVector uncertainty;
  double mean_entropy = 0.0;
  std::optional<DiceReport> dice;  // present iff the bundle carries a label
};

BundleAnalysis analyze_bundle(const Bundle& bundle);

/// One row of a score file.
struct ImageScore {
  std::string image_id;
  ClassUncertaintyVector uncertainty;
  double mean_entropy = 0.0;
  std::optional<DiceReport> dice;
};

ImageScore score_of(const std::string& image_id, const BundleAnalysis& analysis);

struct ScoreTable {
  ClassSpec class_spec;
  std::vector<ImageScore> rows;
};

inline constexpr int kScoreSchemaVersion = 1;

/// CSV columns: image_id, has_label, mean_dice, pixel_accuracy, mean_entropy, then
/// dice_<c>, u_<c>, count_<c> for each class index c. Absent values are empty cells.
void write_score_csv(const ScoreTable& table, std::ostream& out);
/// JSON sidecar: schema version, class names, background index, column list.
std::string score_sidecar_json(const ScoreTable& table);
std::string score_table_json(const ScoreTable& table);

/// Reads `csv_path` and its `<csv_path>.json` sidecar (or a JSON score file written by
/// score_table_json when the path ends in .json).
ScoreTable read_score_file(const std::filesystem::path& path);
void write_score_files(const ScoreTable& table, const std::filesystem::path& path, bool as_json);

std::vector<QualitySample> quality_samples(const ScoreTable& table, std::vector<std::string>* image_ids = nullptr);
std::vector<CorrelationSample> correlation_samples(const ScoreTable& table);

}  // namespace segtriage
