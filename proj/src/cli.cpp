#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cityfm/cli.hpp"
#include "cityfm/corpus.hpp"
#include "cityfm/downstream.hpp"
#include "cityfm/geometry.hpp"
#include "cityfm/kernels.hpp"
#include "cityfm/pretrain.hpp"
#include "cityfm/util.hpp"
#include "json.hpp"

namespace cityfm::cli {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

double ring_area(const std::vector<GeoPoint>& ring) { return surface_area_m2(ring); }

// Accepts a .jsonl / .osm / .xml file, or a directory holding corpus.jsonl
// (the layout synth-city and preprocess write).
Corpus load_corpus_any(const std::string& path) {
  fs::path p(path);
  if (fs::is_directory(p)) p /= "corpus.jsonl";
  if (!fs::exists(p)) throw Error("no corpus at " + p.string());
  const std::string bytes = read_file(p.string());
  const std::string ext = p.extension().string();
  if (ext == ".jsonl") return parse_jsonl(bytes);
  if (ext == ".osm" || ext == ".xml") return parse_osm_xml(bytes);
  throw Error("unrecognized corpus format '" + ext + "' (want .jsonl, .osm or .xml)");
}

std::string out_path(const std::string& out, const std::string& name) {
  return (fs::path(out) / name).string();
}

void write_resolved(const std::string& out, const ordered_json& j) {
  fs::create_directories(out);
  write_file(out_path(out, "resolved_config.json"), j.dump(2) + "\n");
}

Tag parse_tag_label(const std::string& label) {
  const auto pos = label.find(": ");
  if (pos == std::string::npos || pos == 0 || pos + 2 >= label.size()) {
    throw Error("bad tag label '" + label + "', expected 'key: value'");
  }
  return {label.substr(0, pos), label.substr(pos + 2)};
}

Checkpoint load_checkpoint_file(const std::string& path) {
  if (!fs::exists(path)) throw Error("no checkpoint at " + path);
  return load_checkpoint(path);
}

// ---------------------------------------------------------------------------
// subcommand bodies

void run_preprocess(const std::string& input, const std::string& out, int threads) {
  kernels::set_thread_count(threads);
  Corpus corpus = scrub_pii(load_corpus_any(input));
  corpus.manifest = corpus_stats(corpus, ring_area);
  fs::create_directories(out);
  write_file(out_path(out, "corpus.jsonl"), write_jsonl(corpus));
  write_file(out_path(out, "manifest.json"), manifest_to_json(corpus.manifest));
  ordered_json j;
  j["subcommand"] = "preprocess";
  j["input"] = input;
  j["out"] = out;
  j["threads"] = threads;
  write_resolved(out, j);
}

void run_pretrain(const std::string& corpus_path, const std::string& out, int threads,
                  const TrainingConfig& cfg) {
  kernels::set_thread_count(threads);
  validate_config(cfg);
  const Corpus corpus = load_corpus_any(corpus_path);
  const PretrainOutput result = pretrain(corpus, cfg, &std::cerr);
  fs::create_directories(out);
  write_file(out_path(out, "loss_curve.csv"), loss_curve_csv(result.curve));
  save_checkpoint(out_path(out, "checkpoint.bin"), result.model, cfg, result.vocab);
  ordered_json j;
  j["subcommand"] = "pretrain";
  j["corpus"] = corpus_path;
  j["out"] = out;
  j["threads"] = threads;
  j["steps_run"] = result.steps_run;
  j["stopped_early"] = result.stopped_early;
  j["train"] = ordered_json::parse(training_config_to_json(cfg));
  write_resolved(out, j);
}

void run_embed(const std::string& checkpoint, const std::string& corpus_path,
               const std::string& regions_path, const std::string& format, const std::string& out,
               int threads) {
  kernels::set_thread_count(threads);
  const Checkpoint ck = load_checkpoint_file(checkpoint);
  const Model model = model_from_checkpoint(ck);
  const Corpus corpus = load_corpus_any(corpus_path);
  Embedder embedder(model, ck.vocab, ck.train_config, corpus);
  fs::create_directories(out);

  if (format == "jsonl" || format == "both") {
    write_file(out_path(out, "embeddings.jsonl"), export_embeddings_jsonl(embedder));
  }
  if (format == "binary" || format == "both") {
    std::string payload, manifest;
    export_embeddings_binary(embedder, &payload, &manifest);
    write_file(out_path(out, "embeddings.bin"), payload);
    write_file(out_path(out, "embeddings_manifest.json"), manifest);
  }
  if (!regions_path.empty()) {
    const auto rows = parse_csv(read_file(regions_path));
    if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "region_id" ||
        rows[0][1] != "wkt_polygon") {
      throw Error("region table: expected header starting 'region_id,wkt_polygon'");
    }
    std::string lines;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      bool text_empty = false, visual_empty = false;
      const auto vec = embedder.embed_region(parse_wkt_polygon(rows[r][1]), &text_empty,
                                             &visual_empty);
      ordered_json row;
      row["region_id"] = rows[r][0];
      row["text_empty"] = text_empty;
      row["visual_empty"] = visual_empty;
      row["vector"] = vec;
      lines += row.dump();
      lines += '\n';
    }
    write_file(out_path(out, "region_embeddings.jsonl"), lines);
  }

  ordered_json j;
  j["subcommand"] = "embed";
  j["checkpoint"] = checkpoint;
  j["corpus"] = corpus_path;
  j["regions"] = regions_path;
  j["format"] = format;
  j["out"] = out;
  j["threads"] = threads;
  write_resolved(out, j);
}

enum class EvalTask { Speed, Buildings, Regions };

void run_eval(EvalTask task, const std::string& checkpoint, const std::string& corpus_path,
              const std::string& table_path, const std::string& out, int threads,
              std::uint64_t seed, bool shuffle, std::uint64_t shuffle_seed) {
  kernels::set_thread_count(threads);
  const Checkpoint ck = load_checkpoint_file(checkpoint);
  const Model model = model_from_checkpoint(ck);
  const Corpus corpus = load_corpus_any(corpus_path);
  Embedder embedder(model, ck.vocab, ck.train_config, corpus);
  const std::string table = read_file(table_path);

  MetricReport report;
  const char* name = nullptr;
  const char* cmd = nullptr;
  switch (task) {
    case EvalTask::Speed:
      report = shuffle ? eval_speed_shuffled(embedder, corpus, table, seed, shuffle_seed)
                       : eval_speed(embedder, corpus, table, seed);
      name = "speed_metrics.csv";
      cmd = "eval-speed";
      break;
    case EvalTask::Buildings:
      report = eval_buildings(embedder, corpus, table, seed);
      name = "building_metrics.csv";
      cmd = "eval-buildings";
      break;
    case EvalTask::Regions:
      report = eval_regions(embedder, corpus, table, seed);
      name = "region_metrics.csv";
      cmd = "eval-regions";
      break;
  }
  fs::create_directories(out);
  write_file(out_path(out, name), metric_report_csv(report));

  ordered_json j;
  j["subcommand"] = cmd;
  j["checkpoint"] = checkpoint;
  j["corpus"] = corpus_path;
  j["table"] = table_path;
  j["out"] = out;
  j["threads"] = threads;
  j["seed"] = seed;
  if (task == EvalTask::Speed) {
    j["shuffle"] = shuffle;
    if (shuffle) j["shuffle_seed"] = shuffle_seed;
  }
  write_resolved(out, j);
}

void run_analyze_sim(const std::string& checkpoint, const std::string& colocation_path,
                     const std::string& out, int threads) {
  kernels::set_thread_count(threads);
  const Checkpoint ck = load_checkpoint_file(checkpoint);
  const Model model = model_from_checkpoint(ck);
  const ordered_json colo = ordered_json::parse(read_file(colocation_path));
  if (!colo.contains("queries") || !colo["queries"].is_array() || colo["queries"].empty()) {
    throw Error("colocation file: want an object with a non-empty 'queries' array");
  }

  std::string csv = "query,label,relation,cosine\n";
  std::vector<std::pair<std::string, double>> first_chart;
  std::string first_query;
  for (const auto& q : colo["queries"]) {
    const std::string query_label = q.at("query").get<std::string>();
    std::vector<std::vector<Tag>> candidates;
    std::map<std::string, std::string> relation;
    for (const auto& lbl : q.at("colocated")) {
      const std::string s = lbl.get<std::string>();
      candidates.push_back({parse_tag_label(s)});
      relation[s] = "colocated";
    }
    for (const auto& lbl : q.at("never")) {
      const std::string s = lbl.get<std::string>();
      candidates.push_back({parse_tag_label(s)});
      relation[s] = "never";
    }
    const auto rows = cosine_table(model, ck.vocab, {parse_tag_label(query_label)}, candidates);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string rel = i == 0 ? "self" : relation.at(rows[i].label);
      csv += csv_field(query_label) + "," + csv_field(rows[i].label) + "," + rel + "," +
             fmt_double(rows[i].cosine) + "\n";
    }
    if (first_query.empty()) {
      first_query = query_label;
      for (const auto& row : rows) first_chart.emplace_back(row.label, row.cosine);
    }
  }
  fs::create_directories(out);
  write_file(out_path(out, "cosine_table.csv"), csv);
  write_bar_chart_svg(out_path(out, "cosine_chart.svg"), "text cosine similarity: " + first_query,
                      first_chart);

  ordered_json j;
  j["subcommand"] = "analyze-sim";
  j["checkpoint"] = checkpoint;
  j["colocation"] = colocation_path;
  j["out"] = out;
  j["threads"] = threads;
  write_resolved(out, j);
}

void run_synth_city(std::uint64_t seed, const std::string& out, int threads, int n_roads,
                    int n_pois, int n_buildings, int n_regions, int pii_count) {
  kernels::set_thread_count(threads);
  SynthCity city = synth_city(seed, n_roads, n_pois, n_buildings, n_regions, pii_count);
  city.corpus.manifest = corpus_stats(city.corpus, ring_area);
  fs::create_directories(out);
  write_file(out_path(out, "corpus.jsonl"), write_jsonl(city.corpus));
  write_file(out_path(out, "manifest.json"), manifest_to_json(city.corpus.manifest));
  write_file(out_path(out, "speeds.csv"), city.tables.speeds_csv);
  write_file(out_path(out, "building_labels.csv"), city.tables.building_labels_csv);
  write_file(out_path(out, "regions.csv"), city.tables.region_density_csv);
  write_file(out_path(out, "colocation.json"), city.tables.colocation_json);

  ordered_json j;
  j["subcommand"] = "synth-city";
  j["out"] = out;
  j["threads"] = threads;
  j["seed"] = seed;
  j["n_roads"] = n_roads;
  j["n_pois"] = n_pois;
  j["n_buildings"] = n_buildings;
  j["n_regions"] = n_regions;
  j["pii_count"] = pii_count;
  write_resolved(out, j);
}

void add_threads_option(CLI::App* sub, int* threads) {
  sub->add_option("--threads", *threads, "worker threads (1 keeps runs bitwise reproducible)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

// TrainingConfig flags, one per field, defaults shown in --help.
void add_train_options(CLI::App* sub, TrainingConfig* cfg) {
  sub->add_option("--tau", cfg->tau, "NCE temperature")->capture_default_str();
  sub->add_option("--theta", cfg->theta, "link-weight similarity threshold")
      ->capture_default_str();
  sub->add_option("--batch-size", cfg->batch_size, "anchors per step")->capture_default_str();
  sub->add_option("--num-negatives", cfg->num_negatives, "sampled negatives per road anchor")
      ->capture_default_str();
  sub->add_option("--lr", cfg->lr, "peak learning rate")->capture_default_str();
  sub->add_option("--warmup-fraction", cfg->warmup_fraction, "fraction of steps spent warming up")
      ->capture_default_str();
  sub->add_option("--max-steps,--steps", cfg->max_steps, "training steps")->capture_default_str();
  sub->add_option("--plateau-window", cfg->plateau_window, "plateau stop window (0 disables)")
      ->capture_default_str();
  sub->add_option("--plateau-tolerance", cfg->plateau_tolerance,
                  "relative improvement that still counts as progress")
      ->capture_default_str();
  sub->add_option("--loc-d", cfg->loc_d, "location encoding d per coordinate")
      ->capture_default_str();
  sub->add_option("--loc-lambda", cfg->loc_lambda, "location encoding wavelength scale lambda")
      ->capture_default_str();
  sub->add_option("--embed-dim", cfg->embed_dim, "shared embedding dimension")
      ->capture_default_str();
  sub->add_option("--grid-size", cfg->grid_size, "raster edge length in pixels")
      ->capture_default_str();
  sub->add_option("--context-radius-m", cfg->context_radius_m,
                  "context group radius around road segments, meters")
      ->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args) {
  std::uint64_t seed_default = TrainingConfig{}.seed;
  if (const char* env = std::getenv("CITYFM_SEED")) {
    const std::string_view sv(env);
    const auto res = std::from_chars(sv.data(), sv.data() + sv.size(), seed_default);
    if (res.ec != std::errc() || res.ptr != sv.data() + sv.size()) {
      std::cerr << "CITYFM_SEED must be a non-negative integer, got '" << sv << "'\n";
      return 2;
    }
  }

  CLI::App app{"cityfm: self-supervised multimodal embeddings for map entities"};
  app.require_subcommand(1);

  struct {
    std::string input, out;
    int threads = 1;
  } pre;
  auto* sub_pre = app.add_subcommand(
      "preprocess", "parse a corpus, strip personal-data tags, write canonical JSONL");
  sub_pre->add_option("--input", pre.input, "corpus file (.jsonl/.osm/.xml) or directory")
      ->required();
  sub_pre->add_option("--out", pre.out, "output directory")->required();
  add_threads_option(sub_pre, &pre.threads);
  sub_pre->callback([&] { run_preprocess(pre.input, pre.out, pre.threads); });

  struct {
    std::string corpus, out;
    int threads = 1;
    TrainingConfig cfg;
  } tr;
  auto* sub_tr =
      app.add_subcommand("pretrain", "train the three contrastive objectives, write a checkpoint");
  sub_tr->add_option("--corpus", tr.corpus, "corpus file or directory")->required();
  sub_tr->add_option("--out", tr.out, "output directory")->required();
  add_threads_option(sub_tr, &tr.threads);
  add_train_options(sub_tr, &tr.cfg);
  sub_tr->add_option("--seed", tr.cfg.seed, "rng seed (CITYFM_SEED overrides the default)")
      ->capture_default_str();
  sub_tr->callback([&] {
    if (!sub_tr->count("--seed")) tr.cfg.seed = seed_default;
    run_pretrain(tr.corpus, tr.out, tr.threads, tr.cfg);
  });

  struct {
    std::string checkpoint, corpus, regions, format = "jsonl", out;
    int threads = 1;
  } em;
  auto* sub_em = app.add_subcommand("embed", "export entity (and region) embeddings");
  sub_em->add_option("--checkpoint", em.checkpoint, "checkpoint.bin from pretrain")->required();
  sub_em->add_option("--corpus", em.corpus, "corpus file or directory")->required();
  sub_em->add_option("--regions", em.regions, "optional region table for embed_region rows");
  sub_em->add_option("--format", em.format, "embedding export format")
      ->capture_default_str()
      ->check(CLI::IsMember({"jsonl", "binary", "both"}));
  sub_em->add_option("--out", em.out, "output directory")->required();
  add_threads_option(sub_em, &em.threads);
  sub_em->callback(
      [&] { run_embed(em.checkpoint, em.corpus, em.regions, em.format, em.out, em.threads); });

  struct EvalOpts {
    std::string checkpoint, corpus, table, out;
    int threads = 1;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::uint64_t shuffle_seed = 0;
  };
  const auto add_eval = [&](const char* name, const char* desc, const char* table_flag,
                            const char* table_desc, EvalOpts* opts) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--checkpoint", opts->checkpoint, "checkpoint.bin from pretrain")->required();
    sub->add_option("--corpus", opts->corpus, "corpus file or directory")->required();
    sub->add_option(table_flag, opts->table, table_desc)->required();
    sub->add_option("--out", opts->out, "output directory")->required();
    sub->add_option("--seed", opts->seed, "base seed for the probe splits")->capture_default_str();
    add_threads_option(sub, &opts->threads);
    return sub;
  };

  EvalOpts sp;
  auto* sub_sp = add_eval("eval-speed", "ridge probe: road embeddings vs traffic speed",
                          "--speeds", "segment_id,speed_mph table", &sp);
  auto* shuffle_opt = sub_sp->add_option(
      "--shuffle-seed", sp.shuffle_seed, "shuffle targets with this seed (null control)");
  sub_sp->callback([&] {
    run_eval(EvalTask::Speed, sp.checkpoint, sp.corpus, sp.table, sp.out, sp.threads,
             sub_sp->count("--seed") ? sp.seed : seed_default, shuffle_opt->count() > 0,
             sp.shuffle_seed);
  });

  EvalOpts bl;
  auto* sub_bl = add_eval("eval-buildings", "logistic probe: building embeddings vs class label",
                          "--labels", "way_id,class table", &bl);
  sub_bl->callback([&] {
    run_eval(EvalTask::Buildings, bl.checkpoint, bl.corpus, bl.table, bl.out, bl.threads,
             sub_bl->count("--seed") ? bl.seed : seed_default, false, 0);
  });

  EvalOpts rg;
  auto* sub_rg = add_eval("eval-regions", "ridge probe: region embeddings vs population density",
                          "--regions", "region_id,wkt_polygon,density_kppl table", &rg);
  sub_rg->callback([&] {
    run_eval(EvalTask::Regions, rg.checkpoint, rg.corpus, rg.table, rg.out, rg.threads,
             sub_rg->count("--seed") ? rg.seed : seed_default, false, 0);
  });

  struct {
    std::string checkpoint, colocation, out;
    int threads = 1;
  } an;
  auto* sub_an = app.add_subcommand(
      "analyze-sim", "text cosine-similarity table and bar chart for query categories");
  sub_an->add_option("--checkpoint", an.checkpoint, "checkpoint.bin from pretrain")->required();
  sub_an->add_option("--colocation", an.colocation, "colocation.json with query categories")
      ->required();
  sub_an->add_option("--out", an.out, "output directory")->required();
  add_threads_option(sub_an, &an.threads);
  sub_an->callback([&] { run_analyze_sim(an.checkpoint, an.colocation, an.out, an.threads); });

  struct {
    std::string out;
    int threads = 1;
    std::uint64_t seed = 0;
    int n_roads = 140, n_pois = 500, n_buildings = 600, n_regions = 64, pii_count = 0;
  } sc;
  auto* sub_sc = app.add_subcommand("synth-city", "generate the synthetic benchmark city");
  sub_sc->add_option("--out", sc.out, "output directory")->required();
  sub_sc->add_option("--seed", sc.seed, "rng seed (CITYFM_SEED overrides the default)")
      ->capture_default_str();
  sub_sc->add_option("--n-roads", sc.n_roads, "road segments kept from the grid")
      ->capture_default_str();
  sub_sc->add_option("--n-pois", sc.n_pois, "points of interest")->capture_default_str();
  sub_sc->add_option("--n-buildings", sc.n_buildings, "building footprints")
      ->capture_default_str();
  sub_sc->add_option("--n-regions", sc.n_regions, "region tiles (must be a square number)")
      ->capture_default_str();
  sub_sc->add_option("--pii-count", sc.pii_count, "personal-data tags to salt in")
      ->capture_default_str();
  add_threads_option(sub_sc, &sc.threads);
  sub_sc->callback([&] {
    run_synth_city(sub_sc->count("--seed") ? sc.seed : seed_default, sc.out, sc.threads,
                   sc.n_roads, sc.n_pois, sc.n_buildings, sc.n_regions, sc.pii_count);
  });

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.push_back("cityfm");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  argv.reserve(argv_storage.size());
  for (std::string& s : argv_storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace cityfm::cli
