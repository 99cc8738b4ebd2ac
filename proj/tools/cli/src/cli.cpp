#include "sceneforge_cli/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "sceneforge/asset_library.hpp"
#include "sceneforge/embedding_store.hpp"
#include "sceneforge/error.hpp"
#include "sceneforge/evaluation.hpp"
#include "sceneforge/layout.hpp"
#include "sceneforge/live_provider.hpp"
#include "sceneforge/paths.hpp"
#include "sceneforge/retrieval.hpp"
#include "sceneforge/scene_model.hpp"
#include "sceneforge/scripted_provider.hpp"

namespace sceneforge::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Args {
  RunConfig config;
  std::string config_file;
  // ingest
  std::string assets;
  bool skip_orientation = false;
  unsigned jobs = 1;
  // retrieve / build
  std::string prompt;
  std::optional<int> override_count;
  std::string bounds;
  std::string out_name;
  // validate / export-gltf
  std::string scene;
  bool json_output = false;
  // eval
  std::string judgments;
  std::string baseline;
  double tolerance = 1e-8;
  int max_iter = 10000;
  std::string trials;
  std::vector<int> ks{1, 5, 10};
};

// Config keys that have a command line flag.
const std::map<std::string, std::string> kFlagForKey{
    {"provider.kind", "--provider"},     {"provider.fixture", "--fixture"},
    {"provider.handedness", "--handedness"}, {"library.path", "--library"},
    {"layout.buffer", "--buffer"},        {"layout.refinement_sweeps", "--sweeps"},
    {"layout.skip_refinement", "--skip-refinement"}, {"retrieval.k", "--k"},
    {"output.dir", "--out-dir"},          {"output.log_level", "--log-level"},
    {"output.data_dir", "--data-dir"},
};

void add_common(CLI::App* sub, Args& a) {
  sub->add_option("--config", a.config_file, "INI config file; flags override it")
      ->check(CLI::ExistingFile);
  sub->add_option("--out-dir", a.config.out_dir, "Directory for every file this command writes");
  sub->add_option("--log-level", a.config.log_level, "trace|debug|info|warn|error|off");
}

void add_provider(CLI::App* sub, Args& a) {
  sub->add_option("--provider", a.config.provider, "live|scripted");
  sub->add_option("--fixture", a.config.fixture, "Scripted reply fixture (JSON)");
  sub->add_option("--data-dir", a.config.data_dir, "Root of prompts/ and schemas/");
}

bool flag_given(const CLI::App* sub, const std::string& key) {
  auto it = kFlagForKey.find(key);
  if (it == kFlagForKey.end()) return false;
  try {
    return sub->get_option(it->second)->count() > 0;
  } catch (const CLI::OptionNotFound&) {
    return false;
  }
}

std::shared_ptr<ProviderClient> make_client(const RunConfig& c, const fs::path& out_dir) {
  const fs::path data = c.data_dir.empty() ? default_data_dir() : fs::path(c.data_dir);
  std::shared_ptr<ModelProvider> provider;
  if (c.provider == "scripted") {
    if (c.fixture.empty()) throw ConfigError("--provider scripted needs --fixture");
    provider = std::make_shared<ScriptedProvider>(ScriptedFixture::load(c.fixture));
  } else {
    LiveProviderConfig live;
    live.endpoint = c.endpoint;
    live.text_model = c.text_model;
    live.vision_model = c.vision_model;
    live.embedding_model = c.embedding_model;
    live.temperature = c.temperature;
    live.timeout_seconds = c.timeout_seconds;
    live = live.with_environment();
    if (live.endpoint.empty()) throw ConfigError("live provider needs SCENEFORGE_ENDPOINT or provider.endpoint");
    provider = std::make_shared<LiveProvider>(live);
  }
  ClientOptions options;
  options.repair_retries = c.repair_retries;
  options.rate_per_second = c.rate_per_second;
  options.burst = c.burst;
  options.usage_log = output_path(out_dir, "usage.jsonl");
  return std::make_shared<ProviderClient>(provider, PromptTemplates::load(data / "prompts"),
                                          ReplySchemas::load(data / "schemas"), options);
}

fs::path library_dir(const RunConfig& c) {
  if (c.library.empty()) throw ConfigError("--library is required");
  return c.library;
}

int cmd_ingest(const Args& a, const fs::path& out_dir, std::ostream& out) {
  auto client = make_client(a.config, out_dir);
  const fs::path manifest_path = output_path(out_dir, "library/manifest.jsonl");
  std::optional<LibraryManifest> previous;
  if (fs::exists(manifest_path)) previous = read_manifest(manifest_path);

  IngestOptions options;
  options.skip_orientation = a.skip_orientation;
  options.jobs = a.jobs;
  auto result = ingest(a.assets, *client, options, previous ? &*previous : nullptr);
  auto index = build_index(result.manifest, *client);
  index.index.save(output_path(out_dir, "library/embeddings.bin"));
  write_manifest(result.manifest, manifest_path);

  json errors = json::array();
  for (const auto& e : result.errors) errors.push_back({{"asset", e.asset}, {"message", e.message}});
  json warnings = json::array();
  for (const auto& w : result.warnings) warnings.push_back({{"asset", w.asset}, {"message", w.message}});
  for (const auto& w : index.omitted)
    warnings.push_back({{"asset", w.asset}, {"message", "not embedded: " + w.message}});
  out << json{{"library", manifest_path.parent_path().string()},
              {"version", result.manifest.version},
              {"records", result.manifest.records.size()},
              {"embedded", index.index.size()},
              {"errors", errors},
              {"warnings", warnings}}
             .dump(2)
      << "\n";
  return kExitOk;
}

struct Library {
  LibraryManifest manifest;
  VectorIndex index;
};

Library load_library(const RunConfig& c, const ProviderClient& client) {
  const fs::path dir = library_dir(c);
  Library lib{read_manifest(dir / "manifest.jsonl"), VectorIndex::load(dir / "embeddings.bin")};
  if (!lib.index.empty() && lib.index.provider_tag() != client.provider_tag())
    throw Error("library was embedded with provider '" + lib.index.provider_tag() +
                "' but the current provider is '" + client.provider_tag() + "'");
  return lib;
}

int cmd_retrieve(const Args& a, const fs::path& out_dir, std::ostream& out) {
  auto client = make_client(a.config, out_dir);
  const Library lib = load_library(a.config, *client);
  RetrievalOptions options;
  options.k = static_cast<std::size_t>(a.config.k);
  options.override_count = a.override_count;
  const auto report = retrieve_scene_assets(a.prompt, lib.manifest, lib.index, *client, options);
  const json doc{{"prompt", a.prompt},
                 {"decisions", decisions_to_json(report.decisions)},
                 {"warnings", report.warnings}};
  write_file_atomic(output_path(out_dir, a.out_name.empty() ? "decisions.json" : a.out_name), doc.dump(2) + "\n");
  out << doc.dump(2) << "\n";
  return kExitOk;
}

int cmd_build(const Args& a, const fs::path& out_dir, std::ostream& out) {
  const auto dims = parse_bounds(a.bounds);
  const fs::path scene_path = output_path(out_dir, a.out_name.empty() ? "scene.json" : a.out_name);
  const fs::path stem = scene_path.parent_path() / scene_path.stem();
  const fs::path audit_path = fs::path(stem.string() + ".audit.jsonl");

  auto client = make_client(a.config, out_dir);
  const Library lib = load_library(a.config, *client);
  RetrievalOptions retrieval;
  retrieval.k = static_cast<std::size_t>(a.config.k);
  const auto report = retrieve_scene_assets(a.prompt, lib.manifest, lib.index, *client, retrieval);

  AuditLog audit;
  audit.add({{"stage", "retrieve"}, {"decisions", decisions_to_json(report.decisions)}, {"warnings", report.warnings}});

  LayoutOptions options;
  options.buffer = a.config.buffer;
  options.refinement_sweeps = a.config.refinement_sweeps;
  options.skip_refinement = a.config.skip_refinement;
  options.provider_handedness = a.config.handedness == "left" ? Handedness::left : Handedness::right;
  const Aabb bounds{{0.0, 0.0, 0.0}, {dims[0], dims[1], dims[2]}};
  try {
    const SceneDocument doc =
        build_scene(a.prompt, bounds, report.decisions, lib.manifest, *client, options, &audit);
    export_json(doc, scene_path);
    write_file_atomic(audit_path, audit.to_jsonl());
    out << json{{"scene", scene_path.string()},
                {"audit", audit_path.string()},
                {"placements", doc.placements.size()},
                {"constraints", doc.constraints.size()},
                {"overlaps", doc.collision_report.overlaps.size()},
                {"non_benign_overlaps", doc.collision_report.non_benign_count()}}
               .dump(2)
        << "\n";
  } catch (const SceneBuildError& e) {
    const fs::path partial = fs::path(stem.string() + ".partial.json");
    export_json(e.partial(), partial);
    write_file_atomic(audit_path, audit.to_jsonl());
    spdlog::error("build failed: {}; partial scene written to {}", e.what(), partial.string());
    return kExitStageError;
  }
  return kExitOk;
}

int cmd_validate(const Args& a, const fs::path& out_dir, std::ostream& out) {
  const SceneDocument doc = import_json(a.scene);
  ValidationOptions options;
  options.facing_tolerance_deg = a.config.facing_tolerance;
  options.alignment_tolerance_deg = a.config.alignment_tolerance;
  options.adjacency_gap = a.config.adjacency_gap;
  options.support_tolerance = a.config.support_tolerance;
  const ValidationReport report = validate(doc, options);
  const json j = to_json(report, doc);
  write_file_atomic(output_path(out_dir, a.out_name.empty() ? "validation.json" : a.out_name), j.dump(2) + "\n");
  if (a.json_output) out << j.dump(2) << "\n";
  else out << format_report_table(report, doc);
  return kExitOk;
}

int cmd_export(const Args& a, const fs::path& out_dir, std::ostream& out) {
  const SceneDocument doc = import_json(a.scene);
  const LibraryManifest manifest = read_manifest(library_dir(a.config) / "manifest.jsonl");
  const fs::path path = output_path(out_dir, a.out_name.empty() ? "scene.glb" : a.out_name);
  export_gltf(doc, manifest, path);
  out << json{{"gltf", path.string()}, {"nodes", doc.placements.size() + 1}}.dump(2) << "\n";
  return kExitOk;
}

int cmd_eval_elo(const Args& a, const fs::path& out_dir, std::ostream& out) {
  const WinMatrix matrix = win_matrix(read_judgments_csv(a.judgments));
  BradleyTerryOptions options;
  options.tolerance = a.tolerance;
  options.max_iter = a.max_iter;
  const EloTable table = to_elo(bradley_terry(matrix, options), a.baseline);
  const json j = to_json(table, matrix);
  write_file_atomic(output_path(out_dir, a.out_name.empty() ? "elo.json" : a.out_name), j.dump(2) + "\n");
  if (a.json_output) out << j.dump(2) << "\n";
  else out << format_elo_table(table, matrix);
  return kExitOk;
}

int cmd_eval_retrieval(const Args& a, const fs::path& out_dir, std::ostream& out) {
  const json doc = json::parse(read_file(a.trials), nullptr, false);
  if (doc.is_discarded()) throw FormatError("trials file is not valid JSON");
  const auto trials = trials_from_json(doc);
  const auto accuracy = top_k_accuracy(trials, a.ks);
  json j{{"trials", trials.size()}, {"accuracy", json::object()}};
  for (const auto& [k, v] : accuracy) j["accuracy"]["top_" + std::to_string(k)] = v;
  write_file_atomic(output_path(out_dir, a.out_name.empty() ? "retrieval_accuracy.json" : a.out_name),
                    j.dump(2) + "\n");
  if (a.json_output) {
    out << j.dump(2) << "\n";
  } else {
    out << "trials " << trials.size() << "\n";
    for (const auto& [k, v] : accuracy) {
      std::ostringstream pct;
      pct.setf(std::ios::fixed);
      pct.precision(1);
      pct << 100.0 * v;
      out << "top-" << k << " " << pct.str() << "%\n";
    }
  }
  return kExitOk;
}

// Routes the default logger to `err` for one run and puts the previous one
// back afterwards, since `err` may not outlive the call.
class ScopedLogging {
 public:
  ScopedLogging() : previous_(spdlog::default_logger()) {}
  ~ScopedLogging() { spdlog::set_default_logger(previous_); }
  ScopedLogging(const ScopedLogging&) = delete;
  ScopedLogging& operator=(const ScopedLogging&) = delete;

  void configure(const std::string& level, std::ostream& err) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
    auto logger = std::make_shared<spdlog::logger>("sceneforge", sink);
    logger->set_pattern("[%l] %v");
    logger->set_level(spdlog::level::from_str(level));
    spdlog::set_default_logger(logger);
  }

 private:
  std::shared_ptr<spdlog::logger> previous_;
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Text-to-3D scene synthesis: asset ingestion, retrieval, layout and evaluation",
               "sceneforge"};
  app.require_subcommand(1);
  app.set_version_flag("--version", library_version());
  Args a;

  auto* ingest_cmd = app.add_subcommand("ingest", "Measure, orient, caption and embed a directory of meshes");
  add_common(ingest_cmd, a);
  add_provider(ingest_cmd, a);
  ingest_cmd->add_option("--assets", a.assets, "Directory of .obj/.gltf/.glb files")
      ->required()->check(CLI::ExistingDirectory);
  ingest_cmd->add_flag("--skip-orientation", a.skip_orientation, "Store front offset 0 for every asset");
  ingest_cmd->add_option("--jobs", a.jobs, "Assets processed concurrently")->check(CLI::Range(1u, 64u));

  auto* retrieve_cmd = app.add_subcommand("retrieve", "Pick library assets for a scene prompt");
  add_common(retrieve_cmd, a);
  add_provider(retrieve_cmd, a);
  retrieve_cmd->add_option("--prompt", a.prompt, "Scene description")->required();
  retrieve_cmd->add_option("--library", a.config.library, "Library directory from ingest");
  retrieve_cmd->add_option("--k", a.config.k, "Candidates shortlisted per object");
  retrieve_cmd->add_option("--override-count", a.override_count, "Exact number of object types to request");
  retrieve_cmd->add_option("--out", a.out_name, "Report file name inside --out-dir");

  auto* build_cmd = app.add_subcommand("build", "Retrieve, place and refine a scene");
  add_common(build_cmd, a);
  add_provider(build_cmd, a);
  build_cmd->add_option("--prompt", a.prompt, "Scene description")->required();
  build_cmd->add_option("--bounds", a.bounds, "Room size WxDxH, e.g. 5x5x3")->required();
  build_cmd->add_option("--library", a.config.library, "Library directory from ingest");
  build_cmd->add_flag("--skip-refinement", a.config.skip_refinement, "Stop after the initial placement pass");
  build_cmd->add_option("--buffer", a.config.buffer, "Collision buffer in scene units");
  build_cmd->add_option("--sweeps", a.config.refinement_sweeps, "Refinement sweeps (1-3)");
  build_cmd->add_option("--handedness", a.config.handedness, "Provider coordinate handedness: right|left");
  build_cmd->add_option("--k", a.config.k, "Candidates shortlisted per object");
  build_cmd->add_option("--out", a.out_name, "Scene file name inside --out-dir");

  auto* validate_cmd = app.add_subcommand("validate", "Check a scene against its constraints");
  add_common(validate_cmd, a);
  validate_cmd->add_option("scene", a.scene, "scene.json")->required()->check(CLI::ExistingFile);
  validate_cmd->add_flag("--json", a.json_output, "Print JSON instead of a table");
  validate_cmd->add_option("--out", a.out_name, "Report file name inside --out-dir");

  auto* export_cmd = app.add_subcommand("export-gltf", "Write a binary glTF of a scene");
  add_common(export_cmd, a);
  export_cmd->add_option("scene", a.scene, "scene.json")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--library", a.config.library, "Library directory from ingest");
  export_cmd->add_option("--out", a.out_name, "Output file name inside --out-dir");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluation metrics");
  eval_cmd->require_subcommand(1);
  auto* elo_cmd = eval_cmd->add_subcommand("elo", "Bradley-Terry strengths and Elo from pairwise judgments");
  add_common(elo_cmd, a);
  elo_cmd->add_option("--judgments", a.judgments, "CSV: item_id,model_a,model_b,winner")
      ->required()->check(CLI::ExistingFile);
  elo_cmd->add_option("--baseline", a.baseline, "Model anchored at 1500")->required();
  elo_cmd->add_option("--tolerance", a.tolerance, "Convergence tolerance");
  elo_cmd->add_option("--max-iter", a.max_iter, "Iteration limit");
  elo_cmd->add_flag("--json", a.json_output, "Print JSON instead of a table");
  elo_cmd->add_option("--out", a.out_name, "Report file name inside --out-dir");
  auto* topk_cmd = eval_cmd->add_subcommand("retrieval", "Top-k retrieval accuracy");
  add_common(topk_cmd, a);
  topk_cmd->add_option("--trials", a.trials, "JSON list of {target, ranked}")
      ->required()->check(CLI::ExistingFile);
  topk_cmd->add_option("--ks", a.ks, "Cut-offs")->delimiter(',');
  topk_cmd->add_flag("--json", a.json_output, "Print JSON instead of a table");
  topk_cmd->add_option("--out", a.out_name, "Report file name inside --out-dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* active = nullptr;
  for (auto* sub : {ingest_cmd, retrieve_cmd, build_cmd, validate_cmd, export_cmd, elo_cmd, topk_cmd})
    if (sub->parsed()) active = sub;

  ScopedLogging logging;
  fs::path out_dir;
  try {
    if (!a.config_file.empty())
      apply_config_file(a.config_file, a.config,
                        [&](const std::string& key) { return flag_given(active, key); });
    a.config.validate();
    logging.configure(a.config.log_level, err);
    out_dir = a.config.out_dir;
    fs::create_directories(out_dir);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n" << active->help();
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (active == ingest_cmd) return cmd_ingest(a, out_dir, out);
    if (active == retrieve_cmd) return cmd_retrieve(a, out_dir, out);
    if (active == build_cmd) return cmd_build(a, out_dir, out);
    if (active == validate_cmd) return cmd_validate(a, out_dir, out);
    if (active == export_cmd) return cmd_export(a, out_dir, out);
    if (active == elo_cmd) return cmd_eval_elo(a, out_dir, out);
    if (active == topk_cmd) return cmd_eval_retrieval(a, out_dir, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitStageError;
  }
  return kExitUsage;
}

}  // namespace sceneforge::cli
