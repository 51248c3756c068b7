#pragma once

#include <CLI11.hpp>
#include <fmt/format.h>

#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "freshcast/core/json_io.hpp"
#include "freshcast/dataset/scan.hpp"
#include "freshcast/dataset/split.hpp"
#include "freshcast/eval/reports.hpp"
#include "freshcast/lime/overlay.hpp"
#include "freshcast/noise/corruptor.hpp"
#include "freshcast/service/server.hpp"
#include "freshcast/train/model_store.hpp"

#ifndef FRESHCAST_DATA_DIR_DEFAULT
#define FRESHCAST_DATA_DIR_DEFAULT "data"
#endif

namespace freshcast::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline void write_csv_with_sidecar(const std::filesystem::path& path, const std::string& csv, const json& provenance) {
  write_text_file(path, csv);
  auto sidecar = path;
  sidecar += ".provenance.json";
  write_json_file(sidecar, provenance);
}

inline std::vector<eval::MetricsReport> load_reports(const std::filesystem::path& path, const std::string& dataset_id) {
  if (path.extension() == ".csv") return eval::reports_from_csv(read_text_file(path), dataset_id);
  return eval::reports_from_json(read_json_file(path));
}

// A spec path (.json) or a preset key/id such as "J" or "mobilenetv2_deit".
inline std::pair<std::string, nn::FusionModelSpec> resolve_model(const std::string& model, const std::string& variant,
                                                                  std::optional<train::TrainConfig>* preset_config) {
  if (std::filesystem::exists(model)) {
    return {std::filesystem::path(model).stem().string(), nn::fusion_spec_from_json(read_json_file(model))};
  }
  auto p = nn::find_preset(model, nn::variant_from_name(variant));
  if (preset_config) {
    train::TrainConfig c;
    c.learning_rate = p.learning_rate;
    c.epochs = p.epochs;
    *preset_config = c;
  }
  return {p.model_id, p.spec};
}

}  // namespace detail

struct Context {
  std::ostream& out;
  std::ostream& err;
};

inline int cmd_scan(Context& ctx, const std::string& root, const std::string& out_path) {
  const auto scan = scan_dataset(root);
  std::map<std::string, int> per_vegetable;
  for (const auto& s : scan.samples) ++per_vegetable[s.vegetable];
  json skipped = json::array();
  for (const auto& s : scan.skipped) skipped.push_back({{"path", s.path.generic_string()}, {"reason", s.reason}});
  json doc{{"root", root},
           {"n_samples", scan.samples.size()},
           {"per_vegetable", per_vegetable},
           {"skipped", skipped},
           {"warnings", scan.warnings},
           {"provenance", make_provenance("scan", {{"root", root}}, 0)}};
  for (const auto& w : scan.warnings) ctx.err << "warning: " << w << "\n";
  if (!out_path.empty()) write_json_file(out_path, doc);
  ctx.out << fmt::format("{} samples across {} vegetables, {} files skipped\n", scan.samples.size(), per_vegetable.size(),
                         scan.skipped.size());
  return kExitOk;
}

inline int cmd_split(Context& ctx, const std::string& root, const std::string& out_path, std::uint64_t seed,
                     const std::vector<double>& ratios) {
  if (ratios.size() != 3) throw ConfigError("--ratios takes three values: train val test");
  const SplitRatios r{ratios[0], ratios[1], ratios[2]};
  const auto scan = scan_dataset(root);
  auto m = make_splits(scan.samples, r, seed, root);
  m.provenance = make_provenance("split", {{"root", root}, {"ratios", ratios}, {"seed", seed}}, seed);
  for (const auto& w : scan.warnings) ctx.err << "warning: " << w << "\n";
  for (const auto& w : m.warnings) ctx.err << "warning: " << w << "\n";
  write_json_file(out_path, to_json(m));
  ctx.out << fmt::format("train {} / val {} / test {} samples -> {}\n", m.samples_in(Split::train).size(),
                         m.samples_in(Split::val).size(), m.samples_in(Split::test).size(), out_path);
  return kExitOk;
}

inline int cmd_corrupt(Context& ctx, const std::string& root, const std::string& out_root, NoiseSpec spec, unsigned workers,
                       std::string manifest_out) {
  const auto m = corrupt_dataset(root, out_root, spec, workers);
  if (manifest_out.empty()) manifest_out = default_corruption_manifest_path(out_root).string();
  auto doc = to_json(m);
  doc["provenance"] = make_provenance("corrupt", {{"root", root}, {"out", out_root}, {"spec", to_json(spec)}, {"workers", workers}},
                                      spec.master_seed);
  write_json_file(manifest_out, doc);
  for (const auto& f : m.folders)
    if (f.skipped) ctx.err << "warning: skipped " << f.folder << ": " << f.skip_reason << "\n";
  ctx.out << fmt::format("corrupted {} of {} images ({:.4f}) -> {}\n", m.n_corrupted, m.n_images, m.realized_fraction(), out_root);
  return kExitOk;
}

struct TrainArgs {
  std::string model;
  std::string variant = "tiny";
  std::string manifest;
  std::string config;
  std::string out = "models";
  std::string model_id;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  bool unfreeze = false;
  bool pretrained = false;
  std::string weights_dir;
};

inline int cmd_train(Context& ctx, const TrainArgs& a) {
  std::optional<train::TrainConfig> preset_config;
  auto [default_id, spec] = detail::resolve_model(a.model, a.variant, &preset_config);
  const auto manifest = load_manifest(a.manifest);
  auto config = preset_config.value_or(train::TrainConfig{});
  if (!a.config.empty()) config = train::train_config_from_json(read_json_file(a.config), config);
  if (a.epochs) config.epochs = *a.epochs;
  if (a.seed) config.seed = *a.seed;
  if (a.unfreeze) config.unfreeze = true;
  if (a.pretrained) spec.pretrained = true;
  if (!a.weights_dir.empty()) spec.weights_dir = a.weights_dir;
  config.validate();

  const int n_veg = static_cast<int>(manifest.vegetable_index.size());
  if (spec.vegetable_classes != n_veg) {
    ctx.err << fmt::format("warning: vegetable head resized from {} to {} classes to match the manifest\n", spec.vegetable_classes, n_veg);
    spec.vegetable_classes = n_veg;
  }
  spec.seed = config.seed;
  const std::string model_id = a.model_id.empty() ? default_id : a.model_id;

  nn::MultiHeadModel<float> model(spec);
  const auto history = train::train(model, manifest, config, [&](const train::EpochRecord& r) {
    ctx.out << fmt::format("epoch {:>3}  loss {:.4f}  (veg {:.4f}, spoil {:.4f}, day {:.4f})", r.epoch, r.total, r.components[0],
                           r.components[1], r.components[2]);
    if (r.validation)
      ctx.out << fmt::format("  val F1 {:.3f}/{:.3f} mse {:.3f} smape {:.2f}", r.validation->vegetable_f1, r.validation->spoilage_f1,
                             r.validation->mse, r.validation->smape);
    ctx.out << "\n";
  });
  const auto dir = train::model_dir(a.out, model_id);
  const auto record = train::record_for(model_id, model.spec(), manifest, model.day_scale());
  train::save_model(dir, record, model, history, config,
                    make_provenance("train", {{"model", nn::to_json(model.spec())}, {"train", to_json(config)}, {"manifest", a.manifest}},
                                    config.seed));
  ctx.out << "saved " << dir.string() << "\n";
  return kExitOk;
}

struct EvaluateArgs {
  std::string model_id;
  std::string models_dir = "models";
  std::string manifest;
  std::string split = "test";
  std::string dataset_id = "original";
  std::string root;  // evaluate the same split on another copy of the tree
  std::string out;
  bool weighted = false;
};

inline int cmd_evaluate(Context& ctx, const EvaluateArgs& a) {
  auto loaded = train::load_model<float>(train::model_dir(a.models_dir, a.model_id));
  auto manifest = load_manifest(a.manifest);
  if (!a.root.empty()) manifest = manifest.with_root(a.root);
  if (manifest.vegetable_names() != loaded.record.vegetables)
    throw ConfigError("manifest vegetables differ from the ones model '" + a.model_id + "' was trained on");
  eval::EvaluationOptions opt;
  opt.spoilage_classes = loaded.record.spec.spoilage_classes;
  opt.average = a.weighted ? eval::F1Average::weighted : eval::F1Average::macro;
  const auto report = eval::evaluate(loaded.model->as_predictor(), manifest, split_from_name(a.split), loaded.model->input_size(),
                                     a.model_id, a.dataset_id, opt);
  auto doc = eval::to_json(report);
  doc["split"] = a.split;
  doc["f1_average"] = a.weighted ? "weighted" : "macro";
  doc["provenance"] = make_provenance("evaluate",
                                      {{"model_id", a.model_id}, {"manifest", a.manifest}, {"split", a.split}, {"root", a.root},
                                       {"dataset_id", a.dataset_id}},
                                      manifest.seed);
  if (!a.out.empty()) write_json_file(a.out, doc);
  ctx.out << fmt::format("{} on {}/{}: vegetable F1 {:.4f}, spoilage F1 {:.4f}, MSE {:.4f}, SMAPE {:.2f} (n={})\n", a.model_id,
                         a.dataset_id, a.split, report.vegetable_f1, report.spoilage_f1, report.mse, report.smape, *report.n_samples);
  return kExitOk;
}

inline int cmd_diff(Context& ctx, const std::string& original, const std::string& noisy, const std::string& out,
                    const std::string& command = "diff") {
  const auto diff = eval::diff_table(detail::load_reports(original, "original"), detail::load_reports(noisy, "noisy"));
  const auto provenance = make_provenance(command, {{"original", original}, {"noisy", noisy}}, 0);
  if (out.empty() || out == "-") {
    ctx.out << eval::to_csv(diff);
  } else if (std::filesystem::path(out).extension() == ".json") {
    write_json_file(out, {{"rows", eval::to_json(diff)}, {"provenance", provenance}});
  } else {
    detail::write_csv_with_sidecar(out, eval::to_csv(diff), provenance);
  }
  return kExitOk;
}

// Compares a generated difference table with a published one; returns the number of mismatching cells.
inline int check_against(Context& ctx, const eval::DiffReport& got, const eval::DiffReport& expected, double tolerance) {
  std::map<std::string, eval::DiffRow> by_id;
  for (const auto& r : got) by_id[r.model_id] = r;
  int bad = 0;
  for (const auto& e : expected) {
    auto it = by_id.find(e.model_id);
    if (it == by_id.end()) {
      ctx.err << "missing row " << e.model_id << "\n";
      bad += 4;
      continue;
    }
    const auto& g = it->second;
    const std::array<std::tuple<const char*, double, double>, 4> cells{{{"vegetable_f1", g.vegetable_f1_diff, e.vegetable_f1_diff},
                                                                        {"spoilage_f1", g.spoilage_f1_diff, e.spoilage_f1_diff},
                                                                        {"mse", g.mse_diff, e.mse_diff},
                                                                        {"smape", g.smape_diff, e.smape_diff}}};
    for (const auto& [name, have, want] : cells)
      if (std::abs(have - want) > tolerance + 1e-9) {
        ++bad;
        ctx.err << fmt::format("mismatch {} {}: computed {:.4f}, published {:.4f}\n", e.model_id, name, have, want);
      }
  }
  return bad;
}

inline int cmd_reproduce_table5(Context& ctx, const std::string& original, const std::string& noisy, const std::string& out,
                                const std::string& check, double tolerance) {
  cmd_diff(ctx, original, noisy, out, "reproduce-table5");
  if (check.empty()) return kExitOk;
  const auto got = eval::diff_table(detail::load_reports(original, "original"), detail::load_reports(noisy, "noisy"));
  const int bad = check_against(ctx, got, eval::diff_from_csv(read_text_file(check)), tolerance);
  ctx.err << fmt::format("{} cell(s) outside +/-{} of {}\n", bad, tolerance, check);
  return bad == 0 ? kExitOk : kExitRuntime;
}

struct ExplainArgs {
  std::string model_id;
  std::string models_dir = "models";
  std::string image;
  int segments = 50;
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
  int top_k = 5;
  std::string out = "explanation";
};

inline int cmd_explain(Context& ctx, const ExplainArgs& a) {
  auto loaded = train::load_model<float>(train::model_dir(a.models_dir, a.model_id));
  const auto img = preprocess(std::filesystem::path(a.image), loaded.model->input_size());
  lime::ExplainParams p;
  p.n_segments = a.segments;
  p.n_perturbations = a.samples;
  p.seed = a.seed;
  const auto ex = lime::explain(loaded.model->as_predictor(), img, p);
  const int top_k = std::clamp(a.top_k, 0, ex.segments.n_segments);
  const std::filesystem::path out(a.out);
  std::filesystem::create_directories(out);
  auto doc = lime::to_json(ex, true);
  doc["model_id"] = a.model_id;
  doc["image"] = a.image;
  doc["targets_named"] = {{"vegetable", loaded.record.vegetables.at(static_cast<std::size_t>(ex.vegetable_class))},
                          {"spoilage", spoilage_name(spoilage_from_code(ex.spoilage_class + 1))},
                          {"day_estimate", ex.day_estimate}};
  const auto base = to_rgb8(img);
  for (auto h : lime::kHeads) {
    const auto name = "overlay_" + lime::head_name(h) + ".png";
    write_image(out / name, lime::render_overlay(base, ex, h, top_k));
    doc["overlays"][lime::head_name(h)] = name;
  }
  doc["provenance"] = make_provenance("explain",
                                      {{"model_id", a.model_id}, {"image", a.image}, {"segments", a.segments}, {"samples", a.samples},
                                       {"top_k", top_k}},
                                      a.seed);
  write_json_file(out / "explanation.json", doc);
  for (const auto& w : ex.warnings) ctx.err << "warning: " << w << "\n";
  ctx.out << fmt::format("{} segments, R2 veg {:.3f} / spoil {:.3f} / day {:.3f} -> {}\n", ex.segments.n_segments,
                         ex.head(lime::Head::vegetable).r2, ex.head(lime::Head::spoilage).r2, ex.head(lime::Head::day).r2,
                         out.string());
  return kExitOk;
}

struct ServeArgs {
  std::string model_id;
  std::string models_dir = "models";
  std::string manifest;  // overrides the per-vegetable max day recorded at training
  std::string host = "127.0.0.1";
  int port = 8080;
  service::ServiceConfig config;
};

inline service::InferenceService* g_active_service = nullptr;

inline int cmd_serve(Context& ctx, const ServeArgs& a) {
  service::InferenceService svc(a.config);
  if (!svc.bind(a.host, a.port)) throw ConfigError(fmt::format("cannot bind {}:{}", a.host, a.port));
  g_active_service = &svc;
  std::signal(SIGINT, [](int) {
    if (g_active_service) g_active_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_active_service) g_active_service->stop();
  });
  // Listen first so /health answers 503 while the model loads.
  std::jthread listener([&] { svc.listen_after_bind(); });
  auto model = service::service_model_from_dir(train::model_dir(a.models_dir, a.model_id));
  if (!a.manifest.empty()) model->max_day_per_vegetable = load_manifest(a.manifest).max_day_per_vegetable;
  svc.install(model);
  ctx.out << fmt::format("serving {} on http://{}:{}\n", a.model_id, a.host, a.port) << std::flush;
  listener.join();
  g_active_service = nullptr;
  return kExitOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Context ctx{out, err};
  CLI::App app{"Vegetable type, spoilage and shelf-life toolkit", "freshcast"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolkitVersion);

  std::string root, out_path, manifest, original, noisy, check;
  std::uint64_t seed = 0;
  std::vector<double> ratios{0.7, 0.15, 0.15};
  double tolerance = 0.01;

  auto* scan = app.add_subcommand("scan", "Scan a dataset tree and report labels");
  scan->add_option("--root", root, "Dataset root")->required()->check(CLI::ExistingDirectory);
  scan->add_option("--out", out_path, "Write the scan report as JSON");

  auto* split = app.add_subcommand("split", "Write a leakage-free train/val/test manifest");
  split->add_option("--root", root, "Dataset root")->required()->check(CLI::ExistingDirectory);
  split->add_option("--out", out_path, "Manifest path")->required();
  split->add_option("--seed", seed, "Split seed");
  split->add_option("--ratios", ratios, "train val test fractions")->expected(3);

  NoiseSpec noise;
  std::string kind = "gaussian", manifest_out;
  unsigned workers = 1;
  auto* corrupt = app.add_subcommand("corrupt", "Write a noisy copy of a dataset tree");
  corrupt->add_option("--root", root, "Dataset root")->required()->check(CLI::ExistingDirectory);
  corrupt->add_option("--out", out_path, "Output tree")->required();
  corrupt->add_option("--kind", kind, "gaussian | salt_pepper")->check(CLI::IsMember({"gaussian", "salt_pepper"}));
  corrupt->add_option("--intensity", noise.intensity, "Std-dev (gaussian, 0..255 scale) or pixel fraction (salt_pepper)");
  corrupt->add_option("--count", noise.per_folder_count, "Images corrupted per day folder");
  corrupt->add_option("--seed", noise.master_seed, "Master seed");
  corrupt->add_option("--workers", workers, "Parallel folder workers");
  corrupt->add_option("--manifest-out", manifest_out, "Corruption manifest path (default: <out>.corruption.json)");

  TrainArgs ta;
  int epochs = 0;
  std::uint64_t train_seed = 0;
  auto* trn = app.add_subcommand("train", "Train a model on the train split");
  trn->add_option("--model", ta.model, "Model spec JSON or preset (A-J or preset id)")->required();
  trn->add_option("--variant", ta.variant, "Preset variant: tiny | full")->check(CLI::IsMember({"tiny", "full"}));
  trn->add_option("--manifest", ta.manifest, "Split manifest")->required()->check(CLI::ExistingFile);
  trn->add_option("--config", ta.config, "Train config JSON")->check(CLI::ExistingFile);
  trn->add_option("--out", ta.out, "Models directory");
  trn->add_option("--model-id", ta.model_id, "Model id (default: preset id or spec file stem)");
  auto* epochs_opt = trn->add_option("--epochs", epochs, "Override epochs")->check(CLI::PositiveNumber);
  auto* seed_opt = trn->add_option("--seed", train_seed, "Override the training seed");
  trn->add_flag("--unfreeze", ta.unfreeze, "Fine-tune pretrained backbones too");
  trn->add_flag("--pretrained", ta.pretrained, "Load backbone weights from --weights-dir");
  trn->add_option("--weights-dir", ta.weights_dir, "Directory of <backbone>-<variant>.fcw files");

  EvaluateArgs ea;
  auto* evl = app.add_subcommand("evaluate", "Compute F1/MSE/SMAPE on a split");
  evl->add_option("--model-id", ea.model_id, "Model id")->required();
  evl->add_option("--models-dir", ea.models_dir, "Models directory");
  evl->add_option("--manifest", ea.manifest, "Split manifest")->required()->check(CLI::ExistingFile);
  evl->add_option("--split", ea.split, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));
  evl->add_option("--dataset-id", ea.dataset_id, "Label stored in the report (original | noisy | other)");
  evl->add_option("--root", ea.root, "Evaluate against another copy of the tree (e.g. the noisy one)");
  evl->add_option("--out", ea.out, "Report JSON path");
  evl->add_flag("--weighted", ea.weighted, "Support-weighted instead of macro F1");

  auto* dif = app.add_subcommand("diff", "Original-minus-noisy metric table");
  dif->add_option("--original", original, "Original reports (JSON or CSV)")->required()->check(CLI::ExistingFile);
  dif->add_option("--noisy", noisy, "Noisy reports (JSON or CSV)")->required()->check(CLI::ExistingFile);
  dif->add_option("--out", out_path, "Output .csv or .json (default: stdout)");

  auto* t5 = app.add_subcommand("reproduce-table5", "Difference table from the committed reference metrics");
  original = std::string(FRESHCAST_DATA_DIR_DEFAULT) + "/reference/original_metrics.json";
  noisy = std::string(FRESHCAST_DATA_DIR_DEFAULT) + "/reference/noisy_metrics.json";
  t5->add_option("--original", original, "Original-dataset reports")->check(CLI::ExistingFile);
  t5->add_option("--noisy", noisy, "Noisy-dataset reports")->check(CLI::ExistingFile);
  t5->add_option("--out", out_path, "Output CSV (default: stdout)");
  t5->add_option("--check", check, "Published difference CSV to compare against")->check(CLI::ExistingFile);
  t5->add_option("--tolerance", tolerance, "Per-cell tolerance for --check");

  ExplainArgs xa;
  auto* exp = app.add_subcommand("explain", "LIME explanation for one image");
  exp->add_option("--model-id", xa.model_id, "Model id")->required();
  exp->add_option("--models-dir", xa.models_dir, "Models directory");
  exp->add_option("--image", xa.image, "Image path")->required()->check(CLI::ExistingFile);
  exp->add_option("--segments", xa.segments, "Target superpixel count")->check(CLI::PositiveNumber);
  exp->add_option("--samples", xa.samples, "Perturbation count")->check(CLI::PositiveNumber);
  exp->add_option("--seed", xa.seed, "Perturbation seed");
  exp->add_option("--top-k", xa.top_k, "Segments highlighted per overlay");
  exp->add_option("--out", xa.out, "Output directory");

  ServeArgs sa;
  auto* srv = app.add_subcommand("serve", "HTTP inference service");
  srv->add_option("--model-id", sa.model_id, "Model id")->required();
  srv->add_option("--models-dir", sa.models_dir, "Models directory");
  srv->add_option("--manifest", sa.manifest, "Manifest supplying per-vegetable max day")->check(CLI::ExistingFile);
  srv->add_option("--host", sa.host, "Bind address");
  srv->add_option("--port", sa.port, "Port");
  srv->add_option("--cors-origin", sa.config.cors_origin, "Access-Control-Allow-Origin value (empty disables)");
  srv->add_option("--explain-segments", sa.config.explain_segments, "Default /explain segment count");
  srv->add_option("--explain-samples", sa.config.explain_samples, "Default /explain perturbation count");
  srv->add_option("--explain-seed", sa.config.explain_seed, "Default /explain seed");
  srv->add_option("--explain-top-k", sa.config.explain_top_k, "Default /explain highlighted segments");
  srv->add_option("--explain-timeout-ms", sa.config.explain_timeout_ms, "Time budget for /explain");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (scan->parsed()) return cmd_scan(ctx, root, out_path);
    if (split->parsed()) return cmd_split(ctx, root, out_path, seed, ratios);
    if (corrupt->parsed()) {
      noise.kind = noise_kind_from_name(kind);
      return cmd_corrupt(ctx, root, out_path, noise, workers, manifest_out);
    }
    if (trn->parsed()) {
      if (epochs_opt->count()) ta.epochs = epochs;
      if (seed_opt->count()) ta.seed = train_seed;
      return cmd_train(ctx, ta);
    }
    if (evl->parsed()) return cmd_evaluate(ctx, ea);
    if (dif->parsed()) return cmd_diff(ctx, original, noisy, out_path);
    if (t5->parsed()) return cmd_reproduce_table5(ctx, original, noisy, out_path, check, tolerance);
    if (exp->parsed()) return cmd_explain(ctx, xa);
    if (srv->parsed()) return cmd_serve(ctx, sa);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace freshcast::cli
