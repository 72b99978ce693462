// pctrans: generate domains, train per-domain models, translate, cycle and
// evaluate. Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 I/O.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pctrans/pctrans.hpp"

namespace fs = std::filesystem;
using namespace pctrans;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON run config");
  cmd->add_option("--seed", c.seed, "Overrides the config seed");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--set", c.overrides, "Override a config key: key=value (value parsed as JSON)");
}

RunConfig resolve_config(const Common& c) {
  nlohmann::json j = nlohmann::json::object();
  if (!c.config_path.empty()) {
    try {
      j = nlohmann::json::parse(io::read_text(c.config_path));
    } catch (const nlohmann::json::parse_error& ex) {
      throw ConfigError(c.config_path + ": " + ex.what());
    }
  }
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    try {
      j[key] = nlohmann::json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
      j[key] = value;
    }
  }
  if (c.seed) j["seed"] = *c.seed;
  RunConfig cfg = j.get<RunConfig>();
  cfg.validate();
  return cfg;
}

std::string prepare_out(const std::string& requested, const std::string& fallback) {
  const std::string dir = requested.empty() ? fallback : requested;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing --") + what);
  if (!fs::exists(path)) throw IoError(std::string(what) + " file '" + path + "' does not exist");
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

void write_json(const std::string& path, const nlohmann::json& j) { io::write_text(path, j.dump(2) + "\n"); }

int cmd_gen_data(const Common& common) {
  const RunConfig cfg = resolve_config(common);
  const auto prov = pipeline::Provenance::of(cfg);
  const std::string dir = prepare_out(common.out, cfg.data_dir);
  nlohmann::json manifest = {{"provenance", prov.json()}, {"config", cfg}, {"files", nlohmann::json::object()}};
  if (cfg.dataset == "csv") {
    require_file(cfg.csv_path, "csv_path");
    auto ds = data::import_csv_file(cfg.csv_path, stem_of(cfg.csv_path));
    pipeline::stamp(ds, prov);
    const std::string path = (fs::path(dir) / (stem_of(cfg.csv_path) + ".pcds")).string();
    data::save_pc(path, ds);
    manifest["files"][fs::path(path).filename().string()] = pipeline::dataset_summary(ds);
  } else {
    const auto pair = pipeline::gen_domain_pair(cfg);
    for (const auto* ds : {&pair.x, &pair.y}) {
      const std::string name = cfg.dataset + (ds == &pair.x ? "_X.pcds" : "_Y.pcds");
      data::save_pc((fs::path(dir) / name).string(), *ds);
      manifest["files"][name] = pipeline::dataset_summary(*ds);
    }
  }
  write_json((fs::path(dir) / "manifest.json").string(), manifest);
  std::cout << "wrote " << manifest["files"].size() << " dataset(s) to " << dir << "\n";
  return 0;
}

int cmd_train(const Common& common, const std::string& data_path, std::string name) {
  const RunConfig cfg = resolve_config(common);
  require_file(data_path, "data");
  const auto ds = data::load_pc(data_path);
  if (name.empty()) name = stem_of(data_path);
  const std::string dir = prepare_out(common.out, cfg.checkpoint_dir);
  const auto prov = pipeline::Provenance::of(cfg);
  auto progress = [&](std::int64_t it, float loss) {
    if ((it + 1) % 1000 == 0) std::cerr << name << ": iteration " << it + 1 << "/" << cfg.iters << " loss " << loss << "\n";
  };
  auto result = pipeline::train_domain(ds, cfg, progress);
  const std::string ckpt = (fs::path(dir) / (name + ".ckpt")).string();
  diffusion::save_dpm(ckpt, result.dpm);
  io::write_text((fs::path(dir) / (name + "_loss.csv")).string(), pipeline::loss_csv(result.losses, prov));
  std::cout << "wrote " << ckpt << "\n";
  return 0;
}

int cmd_translate(const Common& common, const std::string& src, const std::string& tgt, const std::string& input,
                  std::string name) {
  const RunConfig cfg = resolve_config(common);
  require_file(src, "src");
  require_file(tgt, "tgt");
  require_file(input, "input");
  const auto a = diffusion::load_dpm(src);
  const auto b = diffusion::load_dpm(tgt);
  const auto ds = data::load_pc(input);
  const std::string dir = prepare_out(common.out, cfg.report_dir);
  if (name.empty()) name = stem_of(input) + "_to_" + stem_of(tgt);
  const auto out = pipeline::translate_dataset(a, b, ds, pipeline::Provenance::of(cfg));
  const std::string path = (fs::path(dir) / (name + ".pcds")).string();
  data::save_pc(path, out);
  std::cout << "wrote " << out.size() << " translated events to " << path << "\n";
  return 0;
}

int cmd_cycle(const Common& common, const std::string& a_path, const std::string& b_path, const std::string& input,
              std::string name) {
  const RunConfig cfg = resolve_config(common);
  require_file(a_path, "a");
  require_file(b_path, "b");
  require_file(input, "input");
  const auto a = diffusion::load_dpm(a_path);
  const auto b = diffusion::load_dpm(b_path);
  const auto ds = data::load_pc(input);
  const std::string dir = prepare_out(common.out, cfg.report_dir);
  if (name.empty()) name = stem_of(input) + "_cycle";
  const auto prov = pipeline::Provenance::of(cfg);
  const auto out = pipeline::cycle_dataset(a, b, ds, prov);
  data::save_pc((fs::path(dir) / (name + ".pcds")).string(), out.reconstructed);
  io::write_text((fs::path(dir) / (name + "_cd.csv")).string(), pipeline::cycle_csv(out.cd, prov));
  std::cout << "median cycle chamfer " << pipeline::median(out.cd) << "\n";
  return 0;
}

std::vector<double> read_cd_csv(const std::string& path) {
  std::istringstream in(io::read_text(path));
  std::vector<double> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError(path + ": malformed row '" + line + "'");
    try {
      out.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw IoError(path + ": malformed value in '" + line + "'");
    }
  }
  return out;
}

int cmd_evaluate(const Common& common, const std::string& translated_path, const std::string& reference_path,
                 const std::string& source_path, const std::string& cycle_path, bool lines_flag) {
  const RunConfig cfg = resolve_config(common);
  require_file(translated_path, "translated");
  require_file(reference_path, "reference");
  const auto translated = data::load_pc(translated_path);
  const auto reference = data::load_pc(reference_path);
  std::vector<double> cd;
  if (!cycle_path.empty()) {
    require_file(cycle_path, "cycle-cd");
    cd = read_cd_csv(cycle_path);
  }
  const std::string dir = prepare_out(common.out, cfg.report_dir);
  const auto prov = pipeline::Provenance::of(cfg);
  pipeline::EvaluateInputs in;
  in.translated = &translated;
  in.reference = &reference;
  in.cycle_cd = cd.empty() ? nullptr : &cd;
  in.lines = lines_flag || cfg.dataset == "lines";
  const auto report = pipeline::evaluate(in, cfg);
  io::write_text((fs::path(dir) / "metrics.csv").string(), metrics::metrics_csv(report, prov.comment()));
  write_json((fs::path(dir) / "metrics.json").string(), pipeline::report_json(report, prov));
  if (in.lines) {
    io::write_text((fs::path(dir) / "fitted_sigma.csv").string(), metrics::fitted_sigma_csv(report.rows, prov.comment()));
  }
  std::optional<data::Dataset> source;
  if (!source_path.empty()) {
    require_file(source_path, "source");
    source = data::load_pc(source_path);
  }
  const std::size_t n_fig = std::min(cfg.svg_events, translated.size());
  for (std::size_t e = 0; e < n_fig; ++e) {
    std::vector<svg::Series> series;
    if (source && e < source->size()) series.push_back({"source", "#1f77b4", &source->events[e]});
    series.push_back({"translated", "#d62728", &translated.events[e]});
    const std::string text = "<!-- seed=" + std::to_string(prov.seed) + " config_hash=" + prov.config_hash +
                             " version=" + prov.version + " -->\n" +
                             svg::projections(series, "event " + std::to_string(e));
    io::write_text((fs::path(dir) / ("event_" + std::to_string(e) + ".svg")).string(), text);
  }
  std::cout << metrics::metrics_csv(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unpaired point-cloud translation with per-domain diffusion models"};
  app.require_subcommand(1);

  Common common;
  auto* gen = app.add_subcommand("gen-data", "Write clean and noisy domain datasets");
  add_common(gen, common);

  std::string data_path, name;
  auto* train = app.add_subcommand("train", "Train one domain model");
  add_common(train, common);
  train->add_option("--data", data_path, "Domain dataset (.pcds)")->required();
  train->add_option("--name", name, "Checkpoint stem (default: dataset stem)");

  std::string src, tgt, input;
  auto* translate = app.add_subcommand("translate", "Translate a dataset from the source to the target domain");
  add_common(translate, common);
  translate->add_option("--src", src, "Source checkpoint")->required();
  translate->add_option("--tgt", tgt, "Target checkpoint")->required();
  translate->add_option("--input", input, "Source-domain dataset")->required();
  translate->add_option("--name", name, "Output stem");

  std::string a_path, b_path;
  auto* cycle = app.add_subcommand("cycle", "Translate A -> B -> A and report chamfer reconstruction");
  add_common(cycle, common);
  cycle->add_option("--a", a_path, "Checkpoint of the input's domain")->required();
  cycle->add_option("--b", b_path, "Checkpoint of the other domain")->required();
  cycle->add_option("--input", input, "Domain-A dataset")->required();
  cycle->add_option("--name", name, "Output stem");

  std::string translated, reference, source, cycle_cd;
  bool lines = false;
  auto* evaluate = app.add_subcommand("evaluate", "Metrics, fitted-sigma table and scatter figures");
  add_common(evaluate, common);
  evaluate->add_option("--translated", translated, "Translated dataset")->required();
  evaluate->add_option("--reference", reference, "Original events of the target domain")->required();
  evaluate->add_option("--source", source, "Untranslated inputs, drawn next to their translations");
  evaluate->add_option("--cycle-cd", cycle_cd, "Per-event chamfer CSV written by `cycle`");
  evaluate->add_flag("--lines", lines, "Emit the fitted-sigma table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*train) return cmd_train(common, data_path, name);
    if (*translate) return cmd_translate(common, src, tgt, input, name);
    if (*cycle) return cmd_cycle(common, a_path, b_path, input, name);
    if (*evaluate) return cmd_evaluate(common, translated, reference, source, cycle_cd, lines);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
