// Command-line front end: decoding, POPE/CHAIR evaluation, latency benchmark,
// a synthetic protocol server and protocol conformance checks.

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ed/ed.hpp"
#include "image_io.hpp"
#include "svg_plot.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace ed::cli {

enum ExitCode { kOk = 0, kConfig = 2, kInput = 3, kBackend = 4, kInternal = 5 };

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return kConfig;
    case ErrorKind::Input: return kInput;
    case ErrorKind::Connection: return kBackend;
    case ErrorKind::Internal: return kInternal;
  }
  return kInternal;
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string default_synonyms() {
  if (const char* dir = std::getenv("ED_DATA_DIR")) return std::string(dir) + "/coco_synonyms.txt";
  return std::string(ED_DATA_DIR) + "/coco_synonyms.txt";
}

std::string default_corpus() {
  if (const char* dir = std::getenv("ED_DATA_DIR")) return std::string(dir) + "/conformance_golden.jsonl";
  return std::string(ED_DATA_DIR) + "/conformance_golden.jsonl";
}

/// Everything needed to execute (and later replay) one run.
struct Run {
  std::string command;
  DecodeConfig config;
  std::string backend = "synthetic";
  json backend_options = json::object();
  json inputs = json::object();
  json outputs = json::object();
};

json manifest_of(const Run& run, const std::string& started) {
  return {{"engine_version", ED_VERSION},
          {"command", run.command},
          {"config", to_json(run.config)},
          {"backend", run.backend},
          {"backend_options", run.backend_options},
          {"inputs", run.inputs},
          {"outputs", run.outputs},
          {"seed", run.config.seed},
          {"started_at", started},
          {"finished_at", utc_now()}};
}

Run run_from_manifest(const json& m) {
  Run run;
  try {
    run.command = m.at("command").get<std::string>();
    run.config = merge_config(DecodeConfig{}, m.at("config"));
    run.backend = m.at("backend").get<std::string>();
    run.backend_options = m.value("backend_options", json::object());
    run.inputs = m.value("inputs", json::object());
    run.outputs = m.value("outputs", json::object());
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  }
  return run;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset " + path);
  std::vector<json> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (rows.empty()) throw InputError("dataset " + path + " is empty");
  return rows;
}

std::string resolve_image(const std::string& image, const Run& run) {
  if (fs::path(image).is_absolute()) return image;
  const auto dir = run.inputs.value("images_dir", std::string());
  if (!dir.empty()) return (fs::path(dir) / image).string();
  const auto dataset = run.inputs.value("dataset", std::string());
  return (fs::path(dataset).parent_path() / image).string();
}

GenerationResult decode_one(Session& session, const std::string& image_path, const std::string& prompt,
                            const DecodeConfig& config) {
  const RawImage image = load_image(image_path);
  const auto tokens = session.tokenize(prompt);
  if (tokens.empty()) throw InputError("prompt is empty");
  return generate(session, image, tokens, config);
}

void raise_if_failed(const GenerationResult& r) {
  if (r.ok()) return;
  throw Error(r.error_kind.value_or(ErrorKind::Connection), "generation stopped early: " + r.error);
}

// ---------------------------------------------------------------------------

int cmd_decode(const Run& run) {
  auto session = open_session(run.backend, run.backend_options);
  const auto result = decode_one(*session, run.inputs.at("image").get<std::string>(),
                                 run.inputs.at("prompt").get<std::string>(), run.config);

  if (const auto trace = run.outputs.value("trace", std::string()); !trace.empty()) {
    std::ofstream out(trace);
    if (!out) throw InputError("cannot write trace " + trace);
    write_trace(out, result);
  }
  if (run.inputs.value("json", false)) {
    json j = {{"text", result.text},
              {"tokens", result.tokens},
              {"status", result.ok() ? "ok" : "error"},
              {"forwards", result.total_forwards()},
              {"replays", result.total_replays()}};
    if (!result.ok()) j["error"] = result.error;
    std::cout << j.dump() << '\n';
  } else {
    std::cout << result.text << '\n';
  }
  if (!result.ok()) {
    std::cerr << "error: " << result.error << '\n';
    return exit_code_for(result.error_kind.value_or(ErrorKind::Connection));
  }
  return kOk;
}

void write_csv(const std::string& path, const std::vector<std::pair<std::string, std::optional<double>>>& rows) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << "metric,value\n";
  for (const auto& [name, value] : rows) {
    out << name << ',';
    if (value) out << *value;
    out << '\n';
  }
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "undefined";
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << *v;
  return s.str();
}

int cmd_eval_pope(const Run& run) {
  const auto rows = read_jsonl(run.inputs.at("dataset").get<std::string>());
  const bool given = run.inputs.value("answers_given", false);
  std::unique_ptr<Session> session;
  if (!given) session = open_session(run.backend, run.backend_options);

  std::vector<metrics::PopeRecord> records;
  std::ofstream answers;
  if (const auto path = run.outputs.value("answers", std::string()); !path.empty()) {
    answers.open(path);
    if (!answers) throw InputError("cannot write " + path);
  }
  for (const auto& row : rows) {
    metrics::PopeRecord rec;
    try {
      rec.id = row.at("id").is_string() ? row.at("id").get<std::string>() : row.at("id").dump();
      rec.image = row.at("image").get<std::string>();
      rec.question = row.at("question").get<std::string>();
      const auto label = row.at("label").get<std::string>();
      if (metrics::parse_yes_no(label) == metrics::Answer::Unparseable) {
        throw InputError("label must be yes or no, got '" + label + "'");
      }
      rec.gold_yes = metrics::parse_yes_no(label) == metrics::Answer::Yes;
      if (given) rec.answer = row.at("answer").get<std::string>();
    } catch (const json::exception& e) {
      throw InputError(std::string("malformed POPE record: ") + e.what());
    }
    if (!given) {
      const auto result = decode_one(*session, resolve_image(rec.image, run), rec.question, run.config);
      raise_if_failed(result);
      rec.answer = result.text;
    }
    if (answers.is_open()) {
      answers << json{{"id", rec.id}, {"answer", rec.answer},
                      {"parsed", metrics::to_string(metrics::parse_yes_no(rec.answer))}}
                     .dump()
              << '\n';
    }
    records.push_back(std::move(rec));
  }

  const auto report = metrics::pope_eval(records);
  const json j = metrics::to_json(report);
  std::cout << j.dump(2) << '\n';
  if (const auto out = run.outputs.value("report", std::string()); !out.empty()) {
    std::ofstream(out) << j.dump(2) << '\n';
  }
  if (const auto csv = run.outputs.value("csv", std::string()); !csv.empty()) {
    write_csv(csv, {{"precision", report.precision}, {"recall", report.recall}, {"f1", report.f1},
                    {"accuracy", report.accuracy}});
  }
  std::cerr << "POPE  precision " << fmt(report.precision) << "  recall " << fmt(report.recall) << "  f1 "
            << fmt(report.f1) << "  accuracy " << fmt(report.accuracy) << "  (unparseable "
            << report.counts.unparseable << ")\n";
  return kOk;
}

int cmd_eval_chair(const Run& run) {
  const auto synonyms_path = run.inputs.value("synonyms", default_synonyms());
  if (!fs::exists(synonyms_path)) throw ConfigError("synonym file not found: " + synonyms_path);
  const auto dict = metrics::SynonymDictionary::load(synonyms_path);
  const auto rows = read_jsonl(run.inputs.at("dataset").get<std::string>());
  const auto prompt = run.inputs.value("prompt", std::string("Please describe this image in detail."));
  const bool given = run.inputs.value("captions_given", false);
  const auto recall_name = run.inputs.value("recall_mode", std::string("macro"));
  if (recall_name != "macro" && recall_name != "micro") {
    throw ConfigError("recall mode must be macro or micro");
  }

  std::unique_ptr<Session> session;
  if (!given) session = open_session(run.backend, run.backend_options);

  std::vector<metrics::CaptionRecord> records;
  for (const auto& row : rows) {
    metrics::CaptionRecord rec;
    try {
      rec.image = row.value("image", std::string());
      rec.gt_objects = row.at("gt_objects").get<std::vector<std::string>>();
      if (given) rec.caption = row.at("caption").get<std::string>();
    } catch (const json::exception& e) {
      throw InputError(std::string("malformed CHAIR record: ") + e.what());
    }
    if (!given) {
      const auto result = decode_one(*session, resolve_image(rec.image, run), prompt, run.config);
      raise_if_failed(result);
      rec.caption = result.text;
    }
    records.push_back(std::move(rec));
  }

  const auto report = metrics::chair_eval(
      records, dict, recall_name == "micro" ? metrics::RecallMode::Micro : metrics::RecallMode::Macro);
  const json j = metrics::to_json(report);
  std::cout << j.dump(2) << '\n';
  if (const auto out = run.outputs.value("report", std::string()); !out.empty()) {
    std::ofstream(out) << j.dump(2) << '\n';
  }
  if (const auto csv = run.outputs.value("csv", std::string()); !csv.empty()) {
    write_csv(csv, {{"chair_s", report.chair_s}, {"chair_i", report.chair_i}, {"recall", report.recall},
                    {"avg_length", report.avg_length}});
  }
  std::cerr << "CHAIR  CHAIR_S " << fmt(report.chair_s) << "  CHAIR_I " << fmt(report.chair_i) << "  recall "
            << fmt(report.recall) << "  avg length " << fmt(report.avg_length) << '\n';
  return kOk;
}

std::vector<std::string> bench_images(const Run& run) {
  const auto dataset = run.inputs.at("dataset").get<std::string>();
  std::vector<std::string> images;
  if (fs::path(dataset).extension() == ".jsonl") {
    for (const auto& row : read_jsonl(dataset)) {
      if (!row.contains("image")) throw InputError("bench dataset rows need an \"image\" field");
      images.push_back(row["image"].get<std::string>());
    }
  } else {
    std::ifstream in(dataset);
    if (!in) throw InputError("cannot open dataset " + dataset);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) images.push_back(line);
    }
    if (images.empty()) throw InputError("dataset " + dataset + " is empty");
  }
  return images;
}

int cmd_bench(const Run& run) {
  std::vector<Mode> modes;
  for (const auto& m : run.inputs.at("modes")) modes.push_back(parse_mode(m.get<std::string>()));
  if (modes.empty()) throw ConfigError("no modes to benchmark");
  validate(run.config);
  const auto images = bench_images(run);
  const auto prompt = run.inputs.value("prompt", std::string("Please describe this image in detail."));
  auto session = open_session(run.backend, run.backend_options);

  struct Totals {
    long tokens = 0;
    long forwards = 0;
    long replays = 0;
    double ms = 0.0;
  };
  std::map<Mode, Totals> totals;

  std::ostringstream csv;
  csv << "image";
  for (Mode m : modes) {
    const std::string p(to_string(m));
    csv << ',' << p << "_tokens," << p << "_forwards," << p << "_replays," << p << "_forwards_per_token," << p
        << "_latency_ms";
  }
  csv << '\n';

  for (const auto& img : images) {
    csv << img;
    for (Mode m : modes) {
      DecodeConfig cfg = run.config;
      cfg.mode = m;
      const auto r = decode_one(*session, resolve_image(img, run), prompt, cfg);
      raise_if_failed(r);
      double ms = 0.0;
      for (double v : r.token_ms) ms += v;
      auto& t = totals[m];
      t.tokens += static_cast<long>(r.tokens.size());
      t.forwards += r.total_forwards();
      t.replays += r.total_replays();
      t.ms += ms;
      const double per_token = r.tokens.empty() ? 0.0 : static_cast<double>(r.total_forwards()) / r.tokens.size();
      csv << ',' << r.tokens.size() << ',' << r.total_forwards() << ',' << r.total_replays() << ',' << per_token
          << ',' << ms;
    }
    csv << '\n';
  }

  json summary = {{"images", images.size()}, {"modes", json::object()}};
  std::vector<std::string> labels;
  std::vector<double> latency, fpt;
  for (Mode m : modes) {
    const auto& t = totals[m];
    const double per_token = t.tokens ? static_cast<double>(t.forwards) / t.tokens : 0.0;
    const double per_image = t.ms / static_cast<double>(images.size());
    summary["modes"][std::string(to_string(m))] = {{"tokens", t.tokens},
                                                   {"forwards", t.forwards},
                                                   {"replays", t.replays},
                                                   {"forwards_per_token", per_token},
                                                   {"latency_ms_per_image", per_image},
                                                   {"latency_ms_per_token", t.tokens ? t.ms / t.tokens : 0.0}};
    labels.emplace_back(to_string(m));
    latency.push_back(per_image);
    fpt.push_back(per_token);
  }
  if (totals.contains(Mode::ED) && totals.contains(Mode::FastED)) {
    const double ed = summary["modes"]["ed"]["forwards_per_token"].get<double>();
    const double fast = summary["modes"]["fasted"]["forwards_per_token"].get<double>();
    if (fast > 0.0) summary["forward_ratio_ed_fasted"] = ed / fast;
  }
  std::cout << summary.dump(2) << '\n';

  if (const auto path = run.outputs.value("csv", std::string()); !path.empty()) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << csv.str();
  }
  if (const auto dir = run.outputs.value("plot_dir", std::string()); !dir.empty()) {
    fs::create_directories(dir);
    svg::bar_chart((fs::path(dir) / "latency.svg").string(), "Latency per image", "ms", labels, latency);
    svg::bar_chart((fs::path(dir) / "forwards_per_token.svg").string(), "Forward passes per token", "forwards",
                   labels, fpt);
  }
  return kOk;
}

int execute(const Run& run) {
  if (run.command == "decode") return cmd_decode(run);
  if (run.command == "eval-pope") return cmd_eval_pope(run);
  if (run.command == "eval-chair") return cmd_eval_chair(run);
  if (run.command == "bench") return cmd_bench(run);
  throw InputError("manifest names unknown command '" + run.command + "'");
}

int execute_with_manifest(const Run& run, const std::string& manifest_path) {
  validate(run.config);
  const auto started = utc_now();
  const int code = execute(run);
  if (!manifest_path.empty()) {
    std::ofstream out(manifest_path);
    if (!out) throw InputError("cannot write manifest " + manifest_path);
    out << manifest_of(run, started).dump(2) << '\n';
  }
  return code;
}

// ---------------------------------------------------------------------------
// Flag plumbing

struct DecodeFlags {
  std::optional<std::string> mode, sampling, backend, backend_options, config_file;
  std::optional<double> alpha, beta, tau;
  std::optional<int> n, k, h, max_tokens, tile_size;
  std::optional<std::uint64_t> seed;
  bool weighted_lhs = false;
  bool no_renormalize = false;
  bool uniform = false;
  std::string manifest = "ed_manifest.json";

  void attach(CLI::App* app) {
    // --h names the head count, so help is long-form only here.
    app->set_help_flag("--help", "print this help message and exit");
    app->add_option("--mode", mode, "ed, fasted or regular");
    app->add_option("--alpha", alpha, "weight of the sub-image ensemble, in [0, 1]");
    app->add_option("--beta", beta, "plausibility truncation strength, in [0, 1]");
    app->add_option("--tau", tau, "attention softmax temperature");
    app->add_option("--n", n, "number of sub-images (perfect square)");
    app->add_option("--k", k, "top layers kept for attention refinement");
    app->add_option("--h", h, "top heads kept for attention refinement");
    app->add_option("--tile-size", tile_size, "sub-image side in pixels");
    app->add_option("--seed", seed, "sampling seed");
    app->add_option("--max-tokens", max_tokens, "generation budget");
    app->add_option("--sampling", sampling, "greedy or multinomial");
    app->add_flag("--weighted-lhs", weighted_lhs, "weight both sides of the plausibility test");
    app->add_flag("--no-renormalize", no_renormalize, "do not rescale mass after masking");
    app->add_flag("--uniform-weights", uniform, "equal sub-image weights instead of attention-guided ones");
    app->add_option("--backend", backend, "synthetic or subprocess:<command> (default: $ED_BACKEND_CMD)");
    app->add_option("--backend-options", backend_options, "JSON object passed in the handshake");
    app->add_option("--config", config_file, "JSON config file with DecodeConfig keys");
    app->add_option("--manifest", manifest, "where to write the run manifest");
  }

  /// Defaults < config file < flags.
  Run resolve(const std::string& command, DecodeConfig defaults) const {
    Run run;
    run.command = command;
    DecodeConfig cfg = defaults;
    if (config_file) {
      std::ifstream in(*config_file);
      if (!in) throw ConfigError("cannot open config file " + *config_file);
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw ConfigError("malformed config file " + *config_file + ": " + e.what());
      }
      cfg = merge_config(cfg, j.contains("config") && j.contains("command") ? j["config"] : j);
    }
    if (mode) cfg.mode = parse_mode(*mode);
    if (sampling) cfg.sampling = parse_sampling(*sampling);
    if (alpha) cfg.alpha = *alpha;
    if (beta) cfg.beta = *beta;
    if (tau) cfg.tau = *tau;
    if (n) cfg.n = *n;
    if (k) cfg.top_layers = *k;
    if (h) cfg.top_heads = *h;
    if (tile_size) cfg.tile_size = *tile_size;
    if (seed) cfg.seed = *seed;
    if (max_tokens) cfg.max_tokens = *max_tokens;
    if (weighted_lhs) cfg.weighted_lhs = true;
    if (no_renormalize) cfg.renormalize = false;
    if (uniform) cfg.uniform_weights = true;
    validate(cfg);
    run.config = cfg;

    if (backend) {
      run.backend = *backend;
    } else if (const char* env = std::getenv("ED_BACKEND_CMD"); env != nullptr && *env != '\0') {
      run.backend = std::string("subprocess:") + env;
    }
    if (backend_options) {
      try {
        run.backend_options = json::parse(*backend_options);
      } catch (const json::exception& e) {
        throw ConfigError(std::string("--backend-options is not JSON: ") + e.what());
      }
    }
    return run;
  }
};

int main_impl(int argc, char** argv) {
  CLI::App app{"Ensemble decoding engine for vision-language models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ED_VERSION);

  // decode
  auto* decode = app.add_subcommand("decode", "generate text for one image and prompt");
  DecodeFlags decode_flags;
  std::string image, prompt, trace;
  bool as_json = false;
  decode->add_option("--image", image, "PNG, JPEG or PNM image")->required();
  decode->add_option("--prompt", prompt, "prompt text")->required();
  decode->add_option("--trace", trace, "write per-step JSONL trace");
  decode->add_flag("--json", as_json, "print a JSON result instead of plain text");
  decode_flags.attach(decode);

  // eval-pope
  auto* pope = app.add_subcommand("eval-pope", "answer POPE questions and score them");
  DecodeFlags pope_flags;
  std::string pope_dataset, pope_images, pope_out, pope_csv, pope_answers;
  bool answers_given = false;
  pope->add_option("--dataset", pope_dataset, "JSONL with id, image, question, label")->required();
  pope->add_option("--images-dir", pope_images, "directory images are resolved against");
  pope->add_option("--out", pope_out, "write the JSON report here as well");
  pope->add_option("--csv", pope_csv, "write a metric,value CSV table");
  pope->add_option("--answers", pope_answers, "write generated answers as JSONL");
  pope->add_flag("--answers-given", answers_given, "score the dataset's answer field without decoding");
  pope_flags.attach(pope);

  // eval-chair
  auto* chair = app.add_subcommand("eval-chair", "caption images and score CHAIR");
  DecodeFlags chair_flags;
  std::string chair_dataset, chair_images, chair_out, chair_csv, synonyms = default_synonyms();
  std::string chair_prompt = "Please describe this image in detail.";
  std::string recall_mode = "macro";
  bool captions_given = false;
  chair->add_option("--dataset", chair_dataset, "JSONL with image, gt_objects")->required();
  chair->add_option("--images-dir", chair_images, "directory images are resolved against");
  chair->add_option("--synonyms", synonyms, "object synonym file");
  chair->add_option("--prompt", chair_prompt, "captioning prompt");
  chair->add_option("--recall", recall_mode, "macro or micro recall averaging");
  chair->add_flag("--captions-given", captions_given, "score the dataset's caption field without decoding");
  chair->add_option("--out", chair_out, "write the JSON report here as well");
  chair->add_option("--csv", chair_csv, "write a metric,value CSV table");
  chair_flags.attach(chair);

  // bench
  auto* bench = app.add_subcommand("bench", "measure latency and forward passes per mode");
  DecodeFlags bench_flags;
  std::string bench_dataset, bench_images, bench_csv, plot_dir, modes = "ed,fasted,regular";
  std::string bench_prompt = "Please describe this image in detail.";
  bench->add_option("--dataset", bench_dataset, "JSONL with image fields, or one image path per line")
      ->required();
  bench->add_option("--images-dir", bench_images, "directory images are resolved against");
  bench->add_option("--modes", modes, "comma-separated modes to compare");
  bench->add_option("--prompt", bench_prompt, "prompt text");
  bench->add_option("--csv", bench_csv, "per-image CSV output");
  bench->add_option("--plot-dir", plot_dir, "directory for SVG charts");
  bench_flags.attach(bench);

  // replay
  auto* replay = app.add_subcommand("replay", "re-run a recorded manifest");
  std::string replay_manifest, replay_out_manifest;
  replay->add_option("manifest", replay_manifest, "manifest written by a previous run")->required();
  replay->add_option("--manifest-out", replay_out_manifest, "where to write the new run's manifest");

  // serve-synthetic
  auto* serve = app.add_subcommand("serve-synthetic", "serve the synthetic backend over stdio");

  // conformance
  auto* conf = app.add_subcommand("conformance", "replay the protocol conformance corpus against a backend");
  std::string conf_backend = "synthetic", corpus = default_corpus();
  conf->add_option("--backend", conf_backend, "synthetic or subprocess:<command>");
  conf->add_option("--corpus", corpus, "golden transcript JSONL");

  // tile
  auto* tile = app.add_subcommand("tile", "print the tiling and region map of an image as JSON");
  std::string tile_image;
  int tile_n = 4, tile_c = 336, tile_d = 24;
  tile->add_option("--image", tile_image, "image path")->required();
  tile->add_option("--n", tile_n, "number of sub-images");
  tile->add_option("--tile-size", tile_c, "sub-image side in pixels");
  tile->add_option("--grid-side", tile_d, "patch grid side");

  // plot-trace
  auto* plot = app.add_subcommand("plot-trace", "chart attention-guided weights per step from a trace");
  std::string plot_trace, plot_out;
  plot->add_option("--trace", plot_trace, "JSONL trace from decode --trace")->required();
  plot->add_option("--out", plot_out, "SVG output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  if (*decode) {
    Run run = decode_flags.resolve("decode", DecodeConfig{});
    run.inputs = {{"image", image}, {"prompt", prompt}, {"json", as_json}};
    if (!trace.empty()) run.outputs["trace"] = trace;
    return execute_with_manifest(run, decode_flags.manifest);
  }
  if (*pope) {
    Run run = pope_flags.resolve("eval-pope", DecodeConfig{});
    run.inputs = {{"dataset", pope_dataset}, {"images_dir", pope_images}, {"answers_given", answers_given}};
    if (!pope_out.empty()) run.outputs["report"] = pope_out;
    if (!pope_csv.empty()) run.outputs["csv"] = pope_csv;
    if (!pope_answers.empty()) run.outputs["answers"] = pope_answers;
    return execute_with_manifest(run, pope_flags.manifest);
  }
  if (*chair) {
    DecodeConfig defaults;
    defaults.tau = kLongAnswerTau;
    Run run = chair_flags.resolve("eval-chair", defaults);
    run.inputs = {{"dataset", chair_dataset}, {"images_dir", chair_images}, {"synonyms", synonyms},
                  {"prompt", chair_prompt}, {"recall_mode", recall_mode}, {"captions_given", captions_given}};
    if (!chair_out.empty()) run.outputs["report"] = chair_out;
    if (!chair_csv.empty()) run.outputs["csv"] = chair_csv;
    return execute_with_manifest(run, chair_flags.manifest);
  }
  if (*bench) {
    Run run = bench_flags.resolve("bench", DecodeConfig{});
    json mode_list = json::array();
    std::stringstream ss(modes);
    std::string m;
    while (std::getline(ss, m, ',')) {
      if (!m.empty()) mode_list.push_back(std::string(to_string(parse_mode(m))));
    }
    run.inputs = {{"dataset", bench_dataset}, {"images_dir", bench_images}, {"modes", mode_list},
                  {"prompt", bench_prompt}};
    if (!bench_csv.empty()) run.outputs["csv"] = bench_csv;
    if (!plot_dir.empty()) run.outputs["plot_dir"] = plot_dir;
    return execute_with_manifest(run, bench_flags.manifest);
  }
  if (*replay) {
    std::ifstream in(replay_manifest);
    if (!in) throw InputError("cannot open manifest " + replay_manifest);
    json m;
    try {
      in >> m;
    } catch (const json::exception& e) {
      throw InputError(std::string("malformed manifest: ") + e.what());
    }
    return execute_with_manifest(run_from_manifest(m), replay_out_manifest);
  }
  if (*serve) {
    proto::Server server(synthetic_factory());
    server.run(std::cin, std::cout);
    return kOk;
  }
  if (*conf) {
    std::ifstream in(corpus);
    if (!in) throw ConfigError("cannot open conformance corpus " + corpus);
    const auto steps = conformance::load_corpus(in);
    std::unique_ptr<Transport> transport;
    constexpr std::string_view prefix = "subprocess:";
    if (conf_backend == "synthetic") {
      transport = std::make_unique<LoopbackTransport>(synthetic_factory());
    } else if (conf_backend.starts_with(prefix)) {
      transport = std::make_unique<SubprocessTransport>(conf_backend.substr(prefix.size()));
    } else {
      throw ConnectionError("malformed backend descriptor '" + conf_backend + "'");
    }
    const auto results = conformance::run(*transport, steps);
    int failed = 0;
    for (const auto& r : results) {
      std::cout << (r.pass ? "PASS " : "FAIL ") << r.name;
      if (!r.pass) std::cout << "  -- " << r.detail;
      std::cout << '\n';
      failed += r.pass ? 0 : 1;
    }
    std::cout << results.size() - failed << "/" << results.size() << " conformance steps passed\n";
    return failed == 0 ? kOk : kBackend;
  }
  if (*tile) {
    const auto img = load_image(tile_image);
    const auto ts = split_image(img, tile_n, tile_c);
    const auto regions = build_region_map(ts, tile_d);
    std::cout << to_json(ts, &regions).dump(2) << '\n';
    return kOk;
  }
  if (*plot) {
    std::ifstream in(plot_trace);
    if (!in) throw InputError("cannot open trace " + plot_trace);
    std::vector<std::vector<double>> series;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto w = json::parse(line).value("weights", std::vector<double>{});
      if (series.size() < w.size()) series.resize(w.size());
      for (std::size_t k = 0; k < w.size(); ++k) series[k].push_back(w[k]);
    }
    svg::line_chart(plot_out, "Attention-guided weight per step", series);
    return kOk;
  }
  return kOk;
}

}  // namespace ed::cli

int main(int argc, char** argv) {
  try {
    return ed::cli::main_impl(argc, argv);
  } catch (const ed::Error& e) {
    std::cerr << "error (" << ed::to_string(e.kind()) << "): " << e.what() << '\n';
    return ed::cli::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ed::cli::kInternal;
  }
}
