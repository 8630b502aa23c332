#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "segtriage/bundle.hpp"
#include "segtriage/image_io.hpp"
#include "segtriage/stat_model.hpp"
#include "segtriage/uncertainty.hpp"

namespace segtriage {

enum class ItemStatus { pending, accepted, annotated };
enum class DecisionAction { accept, annotate };
enum class OverlayKind { entropy, segmentation };

const char* to_string(ItemStatus status) noexcept;
const char* to_string(DecisionAction action) noexcept;
DecisionAction action_from_string(const std::string& name);
OverlayKind overlay_from_string(const std::string& name);

struct QueueItem {
  std::string item_id;
  std::string image_id;
  std::uint64_t sequence = 0;  // ingestion order
  ItemStatus status = ItemStatus::pending;
  std::optional<double> predicted_mean_dice;  // set once a model exists
  ClassUncertaintyVector class_uncertainties;
  double mean_entropy = 0.0;
  std::optional<double> true_mean_dice;  // from the bundle label or a corrected label
  std::optional<std::vector<double>> per_class_dice;
  std::optional<std::string> decided_by;
  std::optional<std::string> decided_at;
  std::string ingested_at;
  std::string blob;  // content address of the raw bundle
  std::optional<std::string> corrected_label_blob;
  std::size_t height = 0;
  std::size_t width = 0;
};

struct ModelVersion {
  std::uint64_t version = 0;
  QualityModel model;
  std::string fitted_at;
  std::size_t training_items = 0;
};

struct ServiceMetrics {
  std::size_t total = 0;
  std::size_t pending = 0;
  std::size_t accepted = 0;
  std::size_t annotated = 0;
  std::optional<double> mean_predicted_pending;
  std::optional<double> mean_true_pending;
  std::optional<ModelVersion> model;
};

enum class ServiceErrorCode { validation_failed, conflict, not_found, invalid_state, bad_request, insufficient_data, singular_design };

const char* to_string(ServiceErrorCode code) noexcept;
int http_status(ServiceErrorCode code) noexcept;

class ServiceError : public std::runtime_error {
 public:
  ServiceError(ServiceErrorCode code, const std::string& message, std::string details_json = "null");

  ServiceErrorCode code() const noexcept { return code_; }
  /// JSON value with structured details (for validation failures, the report).
  const std::string& details_json() const noexcept { return details_; }

 private:
  ServiceErrorCode code_;
  std::string details_;
};

/// Review queue persisted as a data directory:
///   blobs/<sha256>.ubnd   raw bundles, content addressed
///   blobs/<sha256>.label  corrected label rasters
///   events.jsonl          append-only ingest / decide / fit events
/// In-memory state is a fold over the events; constructing a store over an existing
/// directory replays them. Mutations are serialized; reads take a shared lock.
class TriageStore {
 public:
  using Clock = std::function<std::string()>;

  explicit TriageStore(std::filesystem::path data_dir, Clock clock = {});
  ~TriageStore();

  TriageStore(const TriageStore&) = delete;
  TriageStore& operator=(const TriageStore&) = delete;

  QueueItem ingest(std::span<const std::uint8_t> bundle_bytes);

  /// Pending items, ascending by predicted mean Dice; unscored items last by ingestion
  /// order; ties by item id.
  std::vector<QueueItem> queue(std::optional<std::size_t> limit = std::nullopt) const;

  QueueItem item(const std::string& item_id) const;

  QueueItem decide(const std::string& item_id, DecisionAction action,
                   std::optional<std::vector<std::uint8_t>> corrected_label = std::nullopt,
                   std::optional<std::string> decided_by = std::nullopt);

  /// Fits on every item with a label (bundle or corrected) and rescores all items.
  ModelVersion fit_model(double alpha);
  std::optional<ModelVersion> model() const;

  std::vector<std::uint8_t> render_overlay(const std::string& item_id, OverlayKind kind,
                                           const Palette& palette) const;

  ServiceMetrics metrics() const;

  /// Class names shared by every ingested bundle; empty before the first ingest.
  std::vector<std::string> class_names() const;

  /// Deterministic JSON dump of the folded state.
  std::string snapshot_json() const;

  const std::filesystem::path& data_dir() const noexcept { return dir_; }

 private:
  struct State;

  void append_event(const std::string& line);
  std::filesystem::path blob_path(const std::string& address, const char* ext) const;

  std::filesystem::path dir_;
  Clock clock_;
  mutable std::shared_mutex mutex_;
  std::unique_ptr<State> state_;
  int log_fd_ = -1;
};

std::string item_to_json(const QueueItem& item, const std::vector<std::string>& class_names);
std::string model_summary_json(const ModelVersion& model);
std::string metrics_to_json(const ServiceMetrics& metrics);

std::string utc_timestamp();
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace segtriage
