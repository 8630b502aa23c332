#include "segtriage/triage_store.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <openssl/sha.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fmt/format.h>
#include <fstream>
#include <mutex>

#include "json.hpp"
#include "segtriage/score_table.hpp"
#include "segtriage/seg_metrics.hpp"

namespace segtriage {

namespace {

using nlohmann::json;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json uncertainty_json(const ClassUncertaintyVector& u) {
  json arr = json::array();
  for (const auto& v : u.u) arr.push_back(optional_number(v));
  return arr;
}

ClassUncertaintyVector uncertainty_from_json(const json& u, const json& counts) {
  ClassUncertaintyVector out;
  for (const auto& v : u) out.u.push_back(v.is_null() ? std::nullopt : std::optional(v.get<double>()));
  out.pixel_counts = counts.get<std::vector<std::size_t>>();
  return out;
}

ItemStatus status_from_action(DecisionAction action) {
  return action == DecisionAction::accept ? ItemStatus::accepted : ItemStatus::annotated;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (std::filesystem::exists(path)) return;  // content addressed: identical bytes already stored
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write blob '" + tmp + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write on blob '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

// ---------------------------------------------------------------------------
// Folded state

struct TriageStore::State {
  std::map<std::string, QueueItem> items;
  std::map<std::string, std::string> item_by_image;
  ClassSpec class_spec;
  std::optional<ModelVersion> model;
  std::uint64_t last_seq = 0;
  std::uint64_t ingested = 0;

  void rescore() {
    if (!model) return;
    for (auto& [id, item] : items) item.predicted_mean_dice = predict_quality(model->model, item.class_uncertainties);
  }

  void apply(const json& e) {
    last_seq = e.at("seq").get<std::uint64_t>();
    const auto type = e.at("type").get<std::string>();
    if (type == "ingest") {
      QueueItem item;
      item.item_id = e.at("item_id").get<std::string>();
      item.image_id = e.at("image_id").get<std::string>();
      item.sequence = last_seq;
      item.blob = e.at("blob").get<std::string>();
      item.ingested_at = e.at("at").get<std::string>();
      item.height = e.at("h").get<std::size_t>();
      item.width = e.at("w").get<std::size_t>();
      item.class_uncertainties = uncertainty_from_json(e.at("u"), e.at("pixel_counts"));
      item.mean_entropy = e.at("mean_entropy").get<double>();
      if (!e.at("dice").is_null()) {
        item.per_class_dice = e.at("dice").get<std::vector<double>>();
        item.true_mean_dice = e.at("true_mean_dice").get<double>();
      }
      if (class_spec.class_names.empty()) {
        class_spec.class_names = e.at("class_names").get<std::vector<std::string>>();
        class_spec.background_index = e.at("background_index").get<std::size_t>();
      }
      if (model) item.predicted_mean_dice = predict_quality(model->model, item.class_uncertainties);
      item_by_image[item.image_id] = item.item_id;
      items[item.item_id] = std::move(item);
      ++ingested;
    } else if (type == "decide") {
      auto& item = items.at(e.at("item_id").get<std::string>());
      item.status = status_from_action(action_from_string(e.at("action").get<std::string>()));
      item.decided_at = e.at("at").get<std::string>();
      if (!e.at("decided_by").is_null()) item.decided_by = e.at("decided_by").get<std::string>();
      if (!e.at("label_blob").is_null()) {
        item.corrected_label_blob = e.at("label_blob").get<std::string>();
        item.per_class_dice = e.at("dice").get<std::vector<double>>();
        item.true_mean_dice = e.at("true_mean_dice").get<double>();
      }
    } else if (type == "fit") {
      ModelVersion mv;
      mv.version = e.at("version").get<std::uint64_t>();
      mv.model = model_from_json(e.at("model").dump());
      mv.fitted_at = e.at("at").get<std::string>();
      mv.training_items = e.at("training_items").get<std::size_t>();
      model = std::move(mv);
      rescore();
    } else {
      throw std::runtime_error("unknown event type '" + type + "'");
    }
  }
};

// ---------------------------------------------------------------------------

const char* to_string(ItemStatus status) noexcept {
  switch (status) {
    case ItemStatus::pending: return "pending";
    case ItemStatus::accepted: return "accepted";
    case ItemStatus::annotated: return "annotated";
  }
  return "unknown";
}

const char* to_string(DecisionAction action) noexcept {
  return action == DecisionAction::accept ? "accept" : "annotate";
}

DecisionAction action_from_string(const std::string& name) {
  if (name == "accept") return DecisionAction::accept;
  if (name == "annotate") return DecisionAction::annotate;
  throw ServiceError(ServiceErrorCode::bad_request, "unknown action '" + name + "' (expected accept or annotate)");
}

OverlayKind overlay_from_string(const std::string& name) {
  if (name == "entropy") return OverlayKind::entropy;
  if (name == "segmentation") return OverlayKind::segmentation;
  throw ServiceError(ServiceErrorCode::bad_request, "unknown overlay kind '" + name + "' (expected entropy or segmentation)");
}

const char* to_string(ServiceErrorCode code) noexcept {
  switch (code) {
    case ServiceErrorCode::validation_failed: return "validation_failed";
    case ServiceErrorCode::conflict: return "conflict";
    case ServiceErrorCode::not_found: return "not_found";
    case ServiceErrorCode::invalid_state: return "invalid_state";
    case ServiceErrorCode::bad_request: return "bad_request";
    case ServiceErrorCode::insufficient_data: return "insufficient_data";
    case ServiceErrorCode::singular_design: return "singular_design";
  }
  return "unknown";
}

int http_status(ServiceErrorCode code) noexcept {
  switch (code) {
    case ServiceErrorCode::validation_failed: return 422;
    case ServiceErrorCode::conflict: return 409;
    case ServiceErrorCode::not_found: return 404;
    case ServiceErrorCode::invalid_state: return 409;
    case ServiceErrorCode::bad_request: return 400;
    case ServiceErrorCode::insufficient_data: return 422;
    case ServiceErrorCode::singular_design: return 422;
  }
  return 500;
}

ServiceError::ServiceError(ServiceErrorCode code, const std::string& message, std::string details_json)
    : std::runtime_error(message), code_(code), details_(std::move(details_json)) {}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  return fmt::format("{}.{:03d}Z", buf, ms);
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::string clean;
  for (char ch : text) {
    if (ch != '\n' && ch != '\r' && ch != ' ') clean += ch;
  }
  if (clean.size() % 4 != 0) throw ServiceError(ServiceErrorCode::bad_request, "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(clean.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                static_cast<int>(clean.size()));
  if (n < 0) throw ServiceError(ServiceErrorCode::bad_request, "invalid base64 payload");
  std::size_t pad = 0;
  if (!clean.empty() && clean.back() == '=') ++pad;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

// ---------------------------------------------------------------------------

TriageStore::TriageStore(std::filesystem::path data_dir, Clock clock)
    : dir_(std::move(data_dir)), clock_(clock ? std::move(clock) : Clock(utc_timestamp)), state_(std::make_unique<State>()) {
  std::filesystem::create_directories(dir_ / "blobs");
  const auto log_path = dir_ / "events.jsonl";

  // Replay. A torn final line (crash mid-append) is dropped and truncated away.
  std::uintmax_t valid_bytes = 0;
  if (std::filesystem::exists(log_path)) {
    std::ifstream in(log_path, std::ios::binary);
    std::string line;
    std::uintmax_t offset = 0;
    while (std::getline(in, line)) {
      const bool complete = !in.eof();
      offset += line.size() + (complete ? 1 : 0);
      if (line.empty()) {
        valid_bytes = offset;
        continue;
      }
      json event = json::parse(line, nullptr, false);
      if (event.is_discarded() || !complete) {
        if (!in.eof() && in.peek() != EOF) {
          throw std::runtime_error("events.jsonl: corrupt event before end of log");
        }
        break;
      }
      state_->apply(event);
      valid_bytes = offset;
    }
    if (valid_bytes < std::filesystem::file_size(log_path)) std::filesystem::resize_file(log_path, valid_bytes);
  }

  log_fd_ = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (log_fd_ < 0) throw std::runtime_error("cannot open event log '" + log_path.string() + "'");
}

TriageStore::~TriageStore() {
  if (log_fd_ >= 0) ::close(log_fd_);
}

void TriageStore::append_event(const std::string& line) {
  const std::string data = line + "\n";
  std::size_t written = 0;
  while (written < data.size()) {
    const auto n = ::write(log_fd_, data.data() + written, data.size() - written);
    if (n < 0) throw std::runtime_error("event log write failed");
    written += static_cast<std::size_t>(n);
  }
  ::fdatasync(log_fd_);
}

std::filesystem::path TriageStore::blob_path(const std::string& address, const char* ext) const {
  return dir_ / "blobs" / (address + ext);
}

QueueItem TriageStore::ingest(std::span<const std::uint8_t> bytes) {
  const auto report = validate_bundle(bytes);
  if (!report.empty()) {
    json details = json::array();
    for (const auto& i : report) details.push_back({{"code", i.code}, {"field", i.field}, {"message", i.message}});
    throw ServiceError(ServiceErrorCode::validation_failed, "bundle failed validation: " + format_report(report),
                       details.dump());
  }
  const Bundle bundle = decode_bundle(bytes);
  const BundleAnalysis analysis = analyze_bundle(bundle);
  const std::string address = sha256_hex(bytes);

  std::unique_lock lock(mutex_);
  if (state_->item_by_image.count(bundle.image_id)) {
    throw ServiceError(ServiceErrorCode::conflict, "image_id '" + bundle.image_id + "' already ingested",
                       json({{"item_id", state_->item_by_image.at(bundle.image_id)}}).dump());
  }
  if (!state_->class_spec.class_names.empty() && !(state_->class_spec == bundle.class_spec)) {
    throw ServiceError(ServiceErrorCode::validation_failed,
                       "bundle class spec differs from the classes already in the queue",
                       json({{"expected", state_->class_spec.class_names}, {"got", bundle.class_spec.class_names}}).dump());
  }
  write_file_atomic(blob_path(address, ".ubnd"), bytes);

  json e;
  e["seq"] = state_->last_seq + 1;
  e["type"] = "ingest";
  e["item_id"] = fmt::format("item-{:06d}", state_->ingested + 1);
  e["image_id"] = bundle.image_id;
  e["blob"] = address;
  e["at"] = clock_();
  e["h"] = bundle.probabilities.height();
  e["w"] = bundle.probabilities.width();
  e["class_names"] = bundle.class_spec.class_names;
  e["background_index"] = bundle.class_spec.background_index;
  e["u"] = uncertainty_json(analysis.uncertainty);
  e["pixel_counts"] = analysis.uncertainty.pixel_counts;
  e["mean_entropy"] = analysis.mean_entropy;
  e["dice"] = analysis.dice ? json(analysis.dice->per_class) : json(nullptr);
  e["true_mean_dice"] = analysis.dice ? json(analysis.dice->mean_dice) : json(nullptr);
  append_event(e.dump());
  state_->apply(e);
  return state_->items.at(e["item_id"].get<std::string>());
}

std::vector<QueueItem> TriageStore::queue(std::optional<std::size_t> limit) const {
  std::shared_lock lock(mutex_);
  std::vector<const QueueItem*> pending;
  for (const auto& [id, item] : state_->items) {
    if (item.status == ItemStatus::pending) pending.push_back(&item);
  }
  std::sort(pending.begin(), pending.end(), [](const QueueItem* a, const QueueItem* b) {
    const bool sa = a->predicted_mean_dice.has_value(), sb = b->predicted_mean_dice.has_value();
    if (sa != sb) return sa;
    if (sa && *a->predicted_mean_dice != *b->predicted_mean_dice) return *a->predicted_mean_dice < *b->predicted_mean_dice;
    if (!sa && a->sequence != b->sequence) return a->sequence < b->sequence;
    return a->item_id < b->item_id;
  });
  const std::size_t n = limit ? std::min(*limit, pending.size()) : pending.size();
  std::vector<QueueItem> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(*pending[i]);
  return out;
}

QueueItem TriageStore::item(const std::string& item_id) const {
  std::shared_lock lock(mutex_);
  const auto it = state_->items.find(item_id);
  if (it == state_->items.end()) throw ServiceError(ServiceErrorCode::not_found, "unknown item '" + item_id + "'");
  return it->second;
}

QueueItem TriageStore::decide(const std::string& item_id, DecisionAction action,
                              std::optional<std::vector<std::uint8_t>> corrected_label,
                              std::optional<std::string> decided_by) {
  std::unique_lock lock(mutex_);
  const auto it = state_->items.find(item_id);
  if (it == state_->items.end()) throw ServiceError(ServiceErrorCode::not_found, "unknown item '" + item_id + "'");
  const QueueItem& item = it->second;
  if (item.status != ItemStatus::pending) {
    throw ServiceError(ServiceErrorCode::invalid_state,
                       "item '" + item_id + "' is already " + to_string(item.status));
  }

  json e;
  e["seq"] = state_->last_seq + 1;
  e["type"] = "decide";
  e["item_id"] = item_id;
  e["action"] = to_string(action);
  e["at"] = clock_();
  e["decided_by"] = decided_by ? json(*decided_by) : json(nullptr);
  e["label_blob"] = nullptr;
  if (corrected_label) {
    if (corrected_label->size() != item.height * item.width) {
      throw ServiceError(ServiceErrorCode::validation_failed,
                         fmt::format("corrected label has {} bytes, expected {}x{} = {}", corrected_label->size(),
                                     item.height, item.width, item.height * item.width));
    }
    const std::size_t classes = state_->class_spec.num_classes();
    for (std::size_t i = 0; i < corrected_label->size(); ++i) {
      if ((*corrected_label)[i] >= classes) {
        throw ServiceError(ServiceErrorCode::validation_failed,
                           fmt::format("corrected label value {} at index {} is not a class index",
                                       (*corrected_label)[i], i));
      }
    }
    const Bundle bundle = read_bundle_file(blob_path(item.blob, ".ubnd").string());
    const auto seg = argmax_segmentation(mean_probability(bundle.probabilities));
    const LabelMap label(item.height, item.width, *corrected_label);
    const auto dice = dice_report(seg, label, bundle.class_spec);
    const std::string address = sha256_hex(*corrected_label);
    write_file_atomic(blob_path(address, ".label"), *corrected_label);
    e["label_blob"] = address;
    e["dice"] = dice.per_class;
    e["true_mean_dice"] = dice.mean_dice;
  }
  append_event(e.dump());
  state_->apply(e);
  return state_->items.at(item_id);
}

ModelVersion TriageStore::fit_model(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ServiceError(ServiceErrorCode::bad_request, "alpha must be in (0,1)");
  std::unique_lock lock(mutex_);
  std::vector<QualitySample> samples;
  for (const auto& [id, item] : state_->items) {
    if (item.true_mean_dice) samples.push_back({item.class_uncertainties, *item.true_mean_dice});
  }
  const std::size_t needed = state_->class_spec.num_classes() + 2;
  if (state_->class_spec.class_names.empty() || samples.size() < needed) {
    throw ServiceError(ServiceErrorCode::insufficient_data,
                       fmt::format("need at least {} labeled items to fit, have {}", needed, samples.size()));
  }
  QualityModel model;
  try {
    model = fit_quality_model(samples, alpha, state_->class_spec.class_names);
  } catch (const StatError& err) {
    throw ServiceError(err.code() == StatErrorCode::singular_design ? ServiceErrorCode::singular_design
                                                                     : ServiceErrorCode::insufficient_data,
                       err.what());
  }
  json e;
  e["seq"] = state_->last_seq + 1;
  e["type"] = "fit";
  e["version"] = (state_->model ? state_->model->version : 0) + 1;
  e["alpha"] = alpha;
  e["at"] = clock_();
  e["training_items"] = samples.size();
  e["model"] = json::parse(model_to_json(model, -1));
  append_event(e.dump());
  state_->apply(e);
  return *state_->model;
}

std::optional<ModelVersion> TriageStore::model() const {
  std::shared_lock lock(mutex_);
  return state_->model;
}

std::vector<std::string> TriageStore::class_names() const {
  std::shared_lock lock(mutex_);
  return state_->class_spec.class_names;
}

std::vector<std::uint8_t> TriageStore::render_overlay(const std::string& item_id, OverlayKind kind,
                                                      const Palette& palette) const {
  const QueueItem it = item(item_id);
  const Bundle bundle = read_bundle_file(blob_path(it.blob, ".ubnd").string());
  const auto mean = mean_probability(bundle.probabilities);
  if (kind == OverlayKind::entropy) {
    const auto umap = entropy_map(mean);
    return encode_png_gray(umap.width, umap.height, entropy_to_gray(umap));
  }
  const auto rgb = colorize_segmentation(argmax_segmentation(mean), palette);
  return encode_png_rgb(rgb.width, rgb.height, rgb.pixels);
}

ServiceMetrics TriageStore::metrics() const {
  std::shared_lock lock(mutex_);
  ServiceMetrics m;
  double pred_sum = 0.0, true_sum = 0.0;
  std::size_t pred_n = 0, true_n = 0;
  for (const auto& [id, item] : state_->items) {
    ++m.total;
    switch (item.status) {
      case ItemStatus::pending: ++m.pending; break;
      case ItemStatus::accepted: ++m.accepted; break;
      case ItemStatus::annotated: ++m.annotated; break;
    }
    if (item.status != ItemStatus::pending) continue;
    if (item.predicted_mean_dice) {
      pred_sum += *item.predicted_mean_dice;
      ++pred_n;
    }
    if (item.true_mean_dice) {
      true_sum += *item.true_mean_dice;
      ++true_n;
    }
  }
  if (pred_n) m.mean_predicted_pending = pred_sum / static_cast<double>(pred_n);
  if (true_n) m.mean_true_pending = true_sum / static_cast<double>(true_n);
  m.model = state_->model;
  return m;
}

std::string TriageStore::snapshot_json() const {
  std::shared_lock lock(mutex_);
  json j;
  j["last_seq"] = state_->last_seq;
  j["class_names"] = state_->class_spec.class_names;
  j["background_index"] = state_->class_spec.background_index;
  j["model"] = state_->model ? json::parse(model_summary_json(*state_->model)) : json(nullptr);
  json items = json::array();
  for (const auto& [id, item] : state_->items) items.push_back(json::parse(item_to_json(item, state_->class_spec.class_names)));
  j["items"] = items;
  return j.dump(2);
}

std::string item_to_json(const QueueItem& item, const std::vector<std::string>& class_names) {
  json j;
  j["item_id"] = item.item_id;
  j["image_id"] = item.image_id;
  j["status"] = to_string(item.status);
  j["predicted_mean_dice"] = optional_number(item.predicted_mean_dice);
  j["predicted_mean_dice_display"] =
      item.predicted_mean_dice ? json(clamp_quality(*item.predicted_mean_dice)) : json(nullptr);
  j["class_names"] = class_names;
  j["class_uncertainties"] = uncertainty_json(item.class_uncertainties);
  j["pixel_counts"] = item.class_uncertainties.pixel_counts;
  j["mean_entropy"] = item.mean_entropy;
  j["true_mean_dice"] = optional_number(item.true_mean_dice);
  j["per_class_dice"] = item.per_class_dice ? json(*item.per_class_dice) : json(nullptr);
  j["decided_by"] = item.decided_by ? json(*item.decided_by) : json(nullptr);
  j["decided_at"] = item.decided_at ? json(*item.decided_at) : json(nullptr);
  j["ingested_at"] = item.ingested_at;
  j["sequence"] = item.sequence;
  j["height"] = item.height;
  j["width"] = item.width;
  j["has_corrected_label"] = item.corrected_label_blob.has_value();
  return j.dump();
}

std::string model_summary_json(const ModelVersion& mv) {
  json j;
  j["version"] = mv.version;
  j["fitted_at"] = mv.fitted_at;
  j["training_items"] = mv.training_items;
  json names = json::array();
  for (std::size_t c : mv.model.included_predictors) names.push_back(mv.model.class_names.at(c));
  j["included_predictor_names"] = names;
  j["r_squared"] = mv.model.r_squared;
  j["adj_r_squared"] = mv.model.adj_r_squared;
  j["model"] = json::parse(model_to_json(mv.model, -1));
  return j.dump();
}

std::string metrics_to_json(const ServiceMetrics& m) {
  json j;
  j["total"] = m.total;
  j["counts"] = {{"pending", m.pending}, {"accepted", m.accepted}, {"annotated", m.annotated}};
  j["mean_predicted_dice_pending"] = optional_number(m.mean_predicted_pending);
  j["mean_true_dice_pending"] = optional_number(m.mean_true_pending);
  j["model"] = m.model ? json::parse(model_summary_json(*m.model)) : json(nullptr);
  return j.dump();
}

}  // namespace segtriage
