#include "segtriage/score_table.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace segtriage {

namespace {

using nlohmann::json;

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += ch;
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

double parse_double(const std::string& s, const std::string& column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("score file: column '" + column + "' has non-numeric value '" + s + "'");
  }
  return v;
}

std::vector<std::string> column_names(std::size_t classes) {
  std::vector<std::string> cols{"image_id", "has_label", "mean_dice", "pixel_accuracy", "mean_entropy"};
  for (std::size_t c = 0; c < classes; ++c) {
    cols.push_back(fmt::format("dice_{}", c));
    cols.push_back(fmt::format("u_{}", c));
    cols.push_back(fmt::format("count_{}", c));
  }
  return cols;
}

json row_json(const ImageScore& row) {
  json r;
  r["image_id"] = row.image_id;
  r["has_label"] = row.dice.has_value();
  r["mean_entropy"] = row.mean_entropy;
  json u = json::array();
  for (const auto& v : row.uncertainty.u) u.push_back(v ? json(*v) : json(nullptr));
  r["u"] = u;
  r["pixel_counts"] = row.uncertainty.pixel_counts;
  if (row.dice) {
    r["mean_dice"] = row.dice->mean_dice;
    r["pixel_accuracy"] = row.dice->pixel_accuracy;
    r["dice"] = row.dice->per_class;
  } else {
    r["mean_dice"] = nullptr;
    r["pixel_accuracy"] = nullptr;
    r["dice"] = nullptr;
  }
  return r;
}

ImageScore row_from_json(const json& r, std::size_t classes) {
  ImageScore row;
  row.image_id = r.at("image_id").get<std::string>();
  row.mean_entropy = r.at("mean_entropy").get<double>();
  for (const auto& v : r.at("u")) row.uncertainty.u.push_back(v.is_null() ? std::nullopt : std::optional(v.get<double>()));
  row.uncertainty.pixel_counts = r.at("pixel_counts").get<std::vector<std::size_t>>();
  if (r.value("has_label", false)) {
    DiceReport d;
    d.mean_dice = r.at("mean_dice").get<double>();
    d.pixel_accuracy = r.at("pixel_accuracy").get<double>();
    d.per_class = r.at("dice").get<std::vector<double>>();
    row.dice = std::move(d);
  }
  if (row.uncertainty.u.size() != classes || row.uncertainty.pixel_counts.size() != classes) {
    throw std::runtime_error("score file: row '" + row.image_id + "' has the wrong class count");
  }
  return row;
}

ClassSpec spec_from_sidecar(const json& j) {
  if (j.value("schema", "") != "segtriage.scores" || j.value("schema_version", 0) != kScoreSchemaVersion) {
    throw std::runtime_error("score file: unsupported schema (expected segtriage.scores v1)");
  }
  ClassSpec spec;
  spec.class_names = j.at("class_names").get<std::vector<std::string>>();
  spec.background_index = j.at("background_index").get<std::size_t>();
  return spec;
}

}  // namespace

BundleAnalysis analyze_bundle(const Bundle& bundle) {
  BundleAnalysis a;
  a.mean = mean_probability(bundle.probabilities);
  a.segmentation = argmax_segmentation(a.mean);
  a.entropy = entropy_map(a.mean);
  a.uncertainty = class_uncertainties(a.entropy, a.segmentation, bundle.class_spec);
  a.mean_entropy = image_mean_entropy(a.entropy);
  if (bundle.label) a.dice = dice_report(a.segmentation, *bundle.label, bundle.class_spec);
  return a;
}

ImageScore score_of(const std::string& image_id, const BundleAnalysis& analysis) {
  return ImageScore{image_id, analysis.uncertainty, analysis.mean_entropy, analysis.dice};
}

void write_score_csv(const ScoreTable& table, std::ostream& out) {
  const std::size_t classes = table.class_spec.num_classes();
  const auto cols = column_names(classes);
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  for (const auto& row : table.rows) {
    out << csv_escape(row.image_id) << "," << (row.dice ? 1 : 0) << ",";
    if (row.dice) {
      out << fmt::format("{},{}", row.dice->mean_dice, row.dice->pixel_accuracy);
    } else {
      out << ",";
    }
    out << fmt::format(",{}", row.mean_entropy);
    for (std::size_t c = 0; c < classes; ++c) {
      out << ",";
      if (row.dice) out << fmt::format("{}", row.dice->per_class[c]);
      out << ",";
      if (row.uncertainty.u[c]) out << fmt::format("{}", *row.uncertainty.u[c]);
      out << "," << row.uncertainty.pixel_counts[c];
    }
    out << "\n";
  }
}

std::string score_sidecar_json(const ScoreTable& table) {
  json j;
  j["schema"] = "segtriage.scores";
  j["schema_version"] = kScoreSchemaVersion;
  j["class_names"] = table.class_spec.class_names;
  j["background_index"] = table.class_spec.background_index;
  j["columns"] = column_names(table.class_spec.num_classes());
  j["rows"] = table.rows.size();
  return j.dump(2);
}

std::string score_table_json(const ScoreTable& table) {
  json j = json::parse(score_sidecar_json(table));
  j.erase("columns");
  json rows = json::array();
  for (const auto& r : table.rows) rows.push_back(row_json(r));
  j["rows"] = rows;
  return j.dump(2);
}

void write_score_files(const ScoreTable& table, const std::filesystem::path& path, bool as_json) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  if (as_json) {
    out << score_table_json(table) << "\n";
    return;
  }
  write_score_csv(table, out);
  std::ofstream sidecar(path.string() + ".json");
  if (!sidecar) throw std::runtime_error("cannot write sidecar for '" + path.string() + "'");
  sidecar << score_sidecar_json(table) << "\n";
}

ScoreTable read_score_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open score file '" + path.string() + "'");
  ScoreTable table;
  if (path.extension() == ".json") {
    const json j = json::parse(in);
    table.class_spec = spec_from_sidecar(j);
    for (const auto& r : j.at("rows")) table.rows.push_back(row_from_json(r, table.class_spec.num_classes()));
    return table;
  }

  std::ifstream sidecar(path.string() + ".json");
  if (!sidecar) throw std::runtime_error("missing score sidecar '" + path.string() + ".json'");
  table.class_spec = spec_from_sidecar(json::parse(sidecar));
  const std::size_t classes = table.class_spec.num_classes();
  const auto cols = column_names(classes);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("score file is empty");
  if (split_csv_line(line) != cols) throw std::runtime_error("score file header does not match its sidecar");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != cols.size()) {
      throw std::runtime_error(fmt::format("score file line {}: expected {} cells, got {}", line_no, cols.size(),
                                           cells.size()));
    }
    ImageScore row;
    row.image_id = cells[0];
    const bool has_label = cells[1] == "1";
    row.mean_entropy = parse_double(cells[4], cols[4]);
    row.uncertainty.u.resize(classes);
    row.uncertainty.pixel_counts.resize(classes);
    DiceReport dice;
    if (has_label) {
      dice.mean_dice = parse_double(cells[2], cols[2]);
      dice.pixel_accuracy = parse_double(cells[3], cols[3]);
      dice.per_class.resize(classes);
    }
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t base = 5 + 3 * c;
      if (has_label) dice.per_class[c] = parse_double(cells[base], cols[base]);
      if (!cells[base + 1].empty()) row.uncertainty.u[c] = parse_double(cells[base + 1], cols[base + 1]);
      row.uncertainty.pixel_counts[c] = static_cast<std::size_t>(parse_double(cells[base + 2], cols[base + 2]));
    }
    if (has_label) row.dice = std::move(dice);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<QualitySample> quality_samples(const ScoreTable& table, std::vector<std::string>* image_ids) {
  std::vector<QualitySample> out;
  for (const auto& row : table.rows) {
    if (!row.dice) continue;
    out.push_back({row.uncertainty, row.dice->mean_dice});
    if (image_ids) image_ids->push_back(row.image_id);
  }
  return out;
}

std::vector<CorrelationSample> correlation_samples(const ScoreTable& table) {
  std::vector<CorrelationSample> out;
  for (const auto& row : table.rows) {
    if (!row.dice) continue;
    out.push_back({row.uncertainty, row.dice->per_class, row.dice->mean_dice, row.mean_entropy});
  }
  return out;
}

}  // namespace segtriage
