#include "commands.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "http_server.hpp"
#include "segtriage/bundle.hpp"
#include "segtriage/image_io.hpp"
#include "segtriage/score_table.hpp"
#include "segtriage/stat_model.hpp"
#include "segtriage/triage_sim.hpp"
#include "segtriage/triage_store.hpp"

namespace segtriage::cli {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> bundle_files(const fs::path& input) {
  if (fs::is_regular_file(input)) return {input};
  if (!fs::is_directory(input)) throw std::runtime_error("input '" + input.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(input)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ubnd") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Writes to the named file, or stdout when the name is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

std::atomic<TriageHttpServer*> g_server{nullptr};

extern "C" void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int cmd_gen(const GenOptions& opts) {
  const auto corpus = generate_corpus(opts.config);
  write_corpus(opts.output, corpus, opts.config);
  std::cerr << fmt::format("wrote {} bundles to {}\n", corpus.size(), opts.output);
  return kExitOk;
}

int cmd_validate(const ValidateOptions& opts) {
  const auto files = bundle_files(opts.input);
  std::size_t bad = 0;
  for (const auto& f : files) {
    const auto report = validate_bundle(read_file_bytes(f.string()));
    if (report.empty()) {
      std::cout << fmt::format("OK      {}\n", f.filename().string());
      continue;
    }
    ++bad;
    std::cout << fmt::format("INVALID {}\n", f.filename().string());
    for (const auto& issue : report) {
      std::cout << fmt::format("        {} {}: {}\n", issue.code, issue.field, issue.message);
    }
  }
  std::cout << fmt::format("{} bundle(s), {} invalid\n", files.size(), bad);
  return bad == 0 ? kExitOk : kExitValidation;
}

int cmd_score(const ScoreOptions& opts) {
  if (opts.format != "csv" && opts.format != "json") throw std::invalid_argument("--format must be csv or json");
  const auto files = bundle_files(opts.input);
  if (files.empty()) throw std::runtime_error("no .ubnd files under '" + opts.input + "'");

  std::vector<std::optional<ImageScore>> rows(files.size());
  std::vector<std::string> errors(files.size());
  std::vector<ClassSpec> specs(files.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      try {
        const Bundle b = read_bundle_file(files[i].string());
        specs[i] = b.class_spec;
        rows[i] = score_of(b.image_id, analyze_bundle(b));
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const unsigned jobs = std::max(1u, opts.jobs ? opts.jobs : std::thread::hardware_concurrency());
  std::vector<std::thread> pool;
  for (unsigned j = 0; j < std::min<std::size_t>(jobs, files.size()); ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  bool failed = false;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (!errors[i].empty()) {
      std::cerr << fmt::format("{}: {}\n", files[i].filename().string(), errors[i]);
      failed = true;
    }
  }
  if (failed) return kExitValidation;

  ScoreTable table;
  table.class_spec = specs.front();
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (!(specs[i] == table.class_spec)) {
      std::cerr << fmt::format("{}: class spec differs from {}\n", files[i].filename().string(),
                               files.front().filename().string());
      return kExitValidation;
    }
    table.rows.push_back(std::move(*rows[i]));
  }
  if (opts.output.empty() || opts.output == "-") {
    if (opts.format == "json") {
      std::cout << score_table_json(table) << "\n";
    } else {
      write_score_csv(table, std::cout);
    }
  } else {
    write_score_files(table, opts.output, opts.format == "json");
  }
  return kExitOk;
}

int cmd_correlate(const CorrelateOptions& opts) {
  const auto table = read_score_file(opts.input);
  const auto report = correlation_report(correlation_samples(table));
  emit(opts.output, format_correlation_table(report, table.class_spec.class_names));
  return kExitOk;
}

int cmd_fit(const FitOptions& opts) {
  const auto table = read_score_file(opts.input);
  const auto model = fit_quality_model(quality_samples(table), opts.alpha, table.class_spec.class_names);
  std::cout << format_regression_table(model);
  if (!opts.output.empty()) emit(opts.output, model_to_json(model) + "\n");
  return kExitOk;
}

int cmd_simulate(const SimulateOptions& opts) {
  const auto table = read_score_file(opts.input);
  std::vector<std::string> ids;
  const auto samples = quality_samples(table, &ids);
  SimulationConfig config{opts.fit_count, opts.seed, opts.alpha, opts.trials};
  const auto result = run_simulation(samples, config, table.class_spec.class_names);
  emit(opts.output, curves_to_csv(result.curves));
  if (!opts.report.empty()) emit(opts.report, simulation_report_json(result, config, ids) + "\n");
  if (!opts.output.empty() && opts.output != "-") {
    const auto& unc = result.curves[0].points;
    const auto& rnd = result.curves[1].points;
    const std::size_t half = unc.size() / 2;
    std::cout << format_regression_table(result.model);
    std::cout << fmt::format("simulation split n={}  k={}: uncertainty {:.4f}  random {:.4f}\n",
                             result.simulation_indices.size(), unc[half].budget, unc[half].performance,
                             rnd[half].performance);
  }
  return kExitOk;
}

int cmd_serve(const ServeOptions& opts) {
  if (opts.data_dir.empty()) throw std::invalid_argument("--data-dir (or SEGTRIAGE_DATA_DIR) is required");
  const auto colon = opts.bind.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("--bind must be host:port");
  const std::string host = opts.bind.substr(0, colon);
  const int port = std::stoi(opts.bind.substr(colon + 1));

  Palette palette = default_palette();
  if (!opts.palette.empty()) {
    std::ifstream in(opts.palette);
    if (!in) throw std::runtime_error("cannot read palette '" + opts.palette + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    palette = palette_from_json(buf.str());
  }

  TriageStore store(opts.data_dir);
  TriageHttpServer server(store, palette);
  const int bound = server.bind(host, port);
  if (bound < 0) throw std::runtime_error("cannot bind " + opts.bind);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << fmt::format("segtriage service on http://{}:{} (data dir {})\n", host, bound, opts.data_dir);
  const bool ok = server.listen();
  g_server = nullptr;
  return ok ? kExitOk : kExitValidation;
}

}  // namespace segtriage::cli
