#include "ucomp/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "ucomp/checkpoint.hpp"
#include "ucomp/config.hpp"
#include "ucomp/data.hpp"
#include "ucomp/error.hpp"
#include "ucomp/inference.hpp"
#include "ucomp/trainer.hpp"

namespace fs = std::filesystem;

namespace ucomp {
namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> parse_doubles(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError(std::string(what) + ": bad number '" + item + "'");
    }
  }
  return out;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

/// Manifest of one command invocation. No timestamps, so identical inputs
/// give identical manifests.
void write_manifest(const fs::path& path, std::string_view command, const std::string& data,
                    const std::string& output, const std::string& config_text) {
  std::string s = "command = " + std::string(command) + "\n";
  s += "data = " + data + "\n";
  s += "output = " + output + "\n";
  s += "config_hash = " + git_blob_sha1(config_text) + "\n";
  s += "[config]\n" + config_text;
  write_text(path, s);
}

fs::path manifest_beside(const fs::path& file) {
  fs::path p = file;
  p += ".manifest.txt";
  return p;
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string out;
  std::string categories = "box,cylinder";
  std::size_t count = 64;
  std::size_t points = 2048;
  double tau = 0.5;
  std::uint64_t seed = 0;
  double eval_fraction = 0.25;
  bool force = false;
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  DatasetSpec spec;
  spec.categories = parse_categories(a.categories);
  spec.count = a.count;
  spec.points = a.points;
  spec.tau = a.tau;
  spec.seed = a.seed;
  spec.eval_fraction = a.eval_fraction;
  spec.validate();

  const fs::path root(a.out);
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!a.force) throw ValidationError(root.string() + " is not empty (use --force to overwrite)");
    for (const char* entry : {"complete", "partial", "manifest.txt", "run_manifest.txt"}) fs::remove_all(root / entry);
  }
  const Dataset ds = build_dataset(spec);
  write_dataset(ds, root);

  std::string cats;
  for (Category c : spec.categories) cats += (cats.empty() ? "" : ",") + std::string(category_name(c));
  std::string config = "categories = " + cats + "\n";
  config += "count = " + std::to_string(spec.count) + "\n";
  config += "points = " + std::to_string(spec.points) + "\n";
  config += "tau = " + fmt("%.17g", spec.tau) + "\n";
  config += "seed = " + std::to_string(spec.seed) + "\n";
  config += "eval_fraction = " + fmt("%.17g", spec.eval_fraction) + "\n";
  write_manifest(root / "run_manifest.txt", "gen-data", "", root.string(), config);

  std::map<Split, std::size_t> per_split;
  for (Split s : ds.splits) ++per_split[s];
  out << "wrote " << ds.samples.size() << " objects to " << root.string() << " ("
      << per_split[Split::kTrainIncomplete] << " train-incomplete, " << per_split[Split::kTrainComplete]
      << " train-complete, " << per_split[Split::kEval] << " eval)\n";
  return kExitOk;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string data, out, config, resume;
  std::size_t ckpt_every = 0, log_every = 100;
  std::vector<std::string> ablate;
  bool no_timing = false;
  // Each override is applied only when its flag was given.
  std::map<std::string, std::string> overrides;
};

int train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const Dataset ds = read_dataset(a.data);
  TrainingPools pools{ds.incomplete_pool(), ds.complete_pool()};
  if (pools.incomplete.empty() || pools.complete.empty()) {
    throw ValidationError(a.data + ": dataset has an empty training pool");
  }

  TrainConfig cfg;
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    resume = read_checkpoint(a.resume);
    cfg = resume->config();
    if (auto it = a.overrides.find("steps"); it != a.overrides.end()) cfg.set("steps", it->second);
  } else {
    bool points_set = false;
    if (!a.config.empty()) {
      for (const auto& k : cfg.apply_file(a.config)) points_set = points_set || k == "points";
    }
    for (const auto& [k, v] : a.overrides) {
      cfg.set(k, v);
      points_set = points_set || k == "points";
    }
    for (const auto& item : a.ablate)
      for (const auto& name : split_list(item)) apply_ablation(cfg, name);
    if (!points_set) cfg.points = pools.complete.front().size();
  }
  cfg.validate();

  const fs::path dir(a.out);
  fs::create_directories(dir);
  Trainer trainer(cfg, std::move(pools));
  const fs::path metrics = dir / "metrics.csv";
  std::string kept = metrics_header();
  if (resume) {
    restore_checkpoint(*resume, trainer);
    // Keep the rows up to the checkpoint so the log reads as one run.
    std::ifstream in(metrics);
    std::string line;
    std::getline(in, line);
    for (std::size_t i = 0; i < resume->step && std::getline(in, line); ++i) kept += line + "\n";
  }
  write_text(metrics, kept);
  write_manifest(dir / "run_manifest.txt", "train", a.data, dir.string(), cfg.to_text());

  std::ofstream log(metrics, std::ios::app | std::ios::binary);
  try {
    while (trainer.steps_done() < cfg.steps) {
      const LossReport r = trainer.step();
      log << metrics_row(r, !a.no_timing);
      log.flush();
      if (a.ckpt_every > 0 && r.step % a.ckpt_every == 0) {
        char name[32];
        std::snprintf(name, sizeof name, "ckpt_%06zu.bin", r.step);
        save_checkpoint(dir / name, trainer);
      }
      if (a.log_every > 0 && (r.step % a.log_every == 0 || r.step == cfg.steps)) {
        out << "step " << r.step << "/" << cfg.steps;
        auto show = [&](const char* k, const std::optional<double>& v) {
          if (v) out << " " << k << "=" << fmt("%.6g", *v);
        };
        show("L_AE", r.ae);
        show("L_code", r.code);
        show("L_cycle", r.cycle);
        show("L_partial", r.partial);
        show("L_D", r.d);
        show("L_G", r.g);
        out << "\n" << std::flush;
      }
    }
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << " at step " << trainer.steps_done() + 1 << "\n";
    return kExitDiverged;
  }
  save_checkpoint(dir / "final.bin", trainer);
  out << "saved " << (dir / "final.bin").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- complete

struct CompleteArgs {
  std::string ckpt, input, output, emit_incomplete, code;
  bool resample = false;
  std::uint64_t seed = 0;
};

int complete(const CompleteArgs& a, std::ostream& out) {
  if (a.output.empty() && a.emit_incomplete.empty()) {
    throw ValidationError("nothing to do: give --output and/or --emit-incomplete");
  }
  const Checkpoint ckpt = read_checkpoint(a.ckpt);
  const NetworkBundle nets = load_networks(ckpt);
  const std::size_t N = nets.config().points;
  PointCloud input = read_xyz(a.input);
  if (input.size() != N) {
    if (!a.resample) {
      throw ValidationError(a.input + " has " + std::to_string(input.size()) +
                            " points, the model expects " + std::to_string(N) + " (use --resample)");
    }
    Rng rng = Rng::derive(a.seed, "resample");
    input = resample(input, N, rng);
  }
  std::string config = "ckpt = " + a.ckpt + "\ninput = " + a.input + "\nresample = " +
                       (a.resample ? "true" : "false") + "\nseed = " + std::to_string(a.seed) + "\n";
  if (!a.output.empty()) {
    const auto done = complete_clouds(nets, std::span(&input, 1));
    write_ply(a.output, done.front());
    write_manifest(manifest_beside(a.output), "complete", a.input, a.output, config);
    out << "wrote " << done.front().size() << " points to " << a.output << "\n";
  }
  if (!a.emit_incomplete.empty()) {
    const std::size_t d_z = nets.transfer_y.code_dim();
    Tensor codes;
    if (d_z > 0) {
      if (!a.code.empty()) {
        auto v = parse_doubles(a.code, "--code");
        if (v.size() != d_z) {
          throw ValidationError("--code needs " + std::to_string(d_z) + " values, got " + std::to_string(v.size()));
        }
        for (double c : v)
          if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("--code values must lie in [0,1]");
        codes = Tensor({1, d_z}, std::move(v));
      } else {
        Rng rng = Rng::derive(a.seed, "code");
        codes = sample_missing_codes(rng, 1, d_z);
      }
      config += "code = ";
      for (std::size_t i = 0; i < d_z; ++i) config += (i ? "," : "") + fmt("%.17g", codes[i]);
      config += "\n";
    }
    const auto pred = predict_incomplete(nets, std::span(&input, 1), codes);
    write_ply(a.emit_incomplete, pred.front());
    write_manifest(manifest_beside(a.emit_incomplete), "complete", a.input, a.emit_incomplete, config);
    out << "wrote " << pred.front().size() << " points to " << a.emit_incomplete << "\n";
  }
  return kExitOk;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string ckpt, data, out, resolutions, mode = "model";
};

/// Mean metric per category over every (partial, complete) eval pair at
/// input resolution `res` (0 keeps the stored resolution).
std::map<Category, std::pair<double, std::size_t>> evaluate(const Dataset& ds, const NetworkBundle* nets,
                                                            const std::string& mode, std::size_t res) {
  std::map<Category, std::pair<double, std::size_t>> acc;
  for (const ShapeSample* s : ds.with_split(Split::kEval)) {
    std::vector<PointCloud> inputs;
    for (std::size_t v = 0; v < s->partials.size(); ++v) {
      if (res == 0 || res == s->partials[v].size()) {
        inputs.push_back(s->partials[v]);
      } else {
        Rng rng = Rng::derive(res, s->id + "/" + std::to_string(v));
        inputs.push_back(resample(s->partials[v], res, rng));
      }
    }
    std::vector<PointCloud> preds;
    if (mode == "model") preds = complete_clouds(*nets, inputs);
    else if (mode == "partial") preds = inputs;
    else preds.assign(inputs.size(), s->complete);
    auto& [sum, n] = acc[s->category];
    for (const PointCloud& p : preds) {
      sum += eval_metric(p, s->complete);
      ++n;
    }
  }
  return acc;
}

int eval(const EvalArgs& a, std::ostream& out) {
  if (a.mode != "model" && a.mode != "partial" && a.mode != "gt") {
    throw ValidationError("--mode must be model, partial or gt");
  }
  if (a.mode == "model" && a.ckpt.empty()) throw ValidationError("--mode model needs --ckpt");
  const Dataset ds = read_dataset(a.data);
  if (ds.with_split(Split::kEval).empty()) throw ValidationError(a.data + ": no paired eval objects");
  std::optional<NetworkBundle> nets;
  if (a.mode == "model") nets.emplace(load_networks(read_checkpoint(a.ckpt)));

  std::string table;
  if (a.resolutions.empty()) {
    const auto acc = evaluate(ds, nets ? &*nets : nullptr, a.mode, 0);
    table = "category,cd_x1e4,pairs\n";
    double total = 0.0;
    std::size_t pairs = 0;
    for (const auto& [cat, v] : acc) {
      table += std::string(category_name(cat)) + "," + fmt("%.1f", v.first / v.second) + "," +
               std::to_string(v.second) + "\n";
      total += v.first / v.second;
      pairs += v.second;
    }
    table += "average," + fmt("%.1f", total / acc.size()) + "," + std::to_string(pairs) + "\n";
  } else {
    std::vector<std::size_t> res;
    for (const auto& r : split_list(a.resolutions)) {
      try {
        res.push_back(std::stoul(r));
      } catch (const std::exception&) {
        throw ValidationError("--resolutions: bad count '" + r + "'");
      }
      if (res.back() == 0) throw ValidationError("--resolutions: counts must be positive");
    }
    bool header = false;
    for (std::size_t r : res) {
      const auto acc = evaluate(ds, nets ? &*nets : nullptr, a.mode, r);
      if (!header) {
        table = "points,average";
        for (const auto& [cat, v] : acc) table += "," + std::string(category_name(cat));
        table += "\n";
        header = true;
      }
      double total = 0.0;
      std::string cells;
      for (const auto& [cat, v] : acc) {
        total += v.first / v.second;
        cells += "," + fmt("%.1f", v.first / v.second);
      }
      table += std::to_string(r) + "," + fmt("%.1f", total / acc.size()) + cells + "\n";
    }
  }
  out << table;
  if (!a.out.empty()) {
    write_text(a.out, table);
    const std::string config = "ckpt = " + a.ckpt + "\nmode = " + a.mode + "\nresolutions = " + a.resolutions + "\n";
    write_manifest(manifest_beside(a.out), "eval", a.data, a.out, config);
  }
  return kExitOk;
}

// ----------------------------------------------------------- export-latent

struct ExportArgs {
  std::string ckpt, data, out, split = "all";
};

int export_latent(const ExportArgs& a, std::ostream& out) {
  const NetworkBundle nets = load_networks(read_checkpoint(a.ckpt));
  const Dataset ds = read_dataset(a.data);
  const std::size_t d_r = nets.config().d_r;
  std::string csv = "id,domain";
  for (std::size_t j = 0; j < d_r; ++j) csv += ",r" + std::to_string(j);
  csv += "\n";
  auto emit = [&](const std::string& id, const char* domain, const Tensor& reps, std::size_t row) {
    csv += id + "," + domain;
    for (std::size_t j = 0; j < d_r; ++j) csv += "," + fmt("%.9g", reps.at(row, j));
    csv += "\n";
  };
  std::size_t ids = 0;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    if (a.split != "all" && ds.splits[i] != parse_split(a.split)) continue;
    const ShapeSample& s = ds.samples[i];
    emit(s.id, "complete", complete_representation(nets, std::span(&s.complete, 1)), 0);
    const Tensor t = transferred_representation(nets, s.partials);
    for (std::size_t v = 0; v < s.partials.size(); ++v) emit(s.id, "transferred", t, v);
    ++ids;
  }
  write_text(a.out, csv);
  write_manifest(manifest_beside(a.out), "export-latent", a.data, a.out,
                 "ckpt = " + a.ckpt + "\nsplit = " + a.split + "\n");
  out << "wrote latents of " << ids << " objects to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unpaired point cloud completion engine"};
  app.name("ucomp");
  app.require_subcommand(1);

  GenDataArgs g;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--out", g.out, "Dataset root")->required();
  gen->add_option("--categories", g.categories, "Comma-separated categories")->capture_default_str();
  gen->add_option("--count", g.count, "Total objects")->capture_default_str();
  gen->add_option("--points", g.points, "Points per cloud")->capture_default_str();
  gen->add_option("--tau", g.tau, "Visible fraction of each partial")->capture_default_str();
  gen->add_option("--seed", g.seed)->capture_default_str();
  gen->add_option("--eval-fraction", g.eval_fraction)->capture_default_str();
  gen->add_flag("--force", g.force, "Overwrite an existing dataset");

  TrainArgs t;
  auto* tr = app.add_subcommand("train", "Train on a dataset");
  tr->add_option("--data", t.data, "Dataset root")->required();
  tr->add_option("--out", t.out, "Run directory")->required();
  tr->add_option("--config", t.config, "key = value config file");
  tr->add_option("--resume", t.resume, "Checkpoint to continue from");
  tr->add_option("--ckpt-every", t.ckpt_every, "Checkpoint period in steps (0: final only)");
  tr->add_option("--log-every", t.log_every, "Progress period in steps (0: silent)");
  tr->add_option("--ablate", t.ablate, "partial|gan|cycle|coding (repeatable)");
  tr->add_flag("--no-timing", t.no_timing, "Write wall_ms as 0 in the metrics log");
  const std::vector<std::pair<std::string, std::string>> keyed = {
      {"--steps", "steps"},         {"--pretrain-steps", "pretrain_steps"},
      {"--strategy", "strategy"},   {"--lambda-p", "lambda_p"},
      {"--lambda-c", "lambda_c"},   {"--lambda-g", "lambda_g"},
      {"--lambda-gp", "lambda_gp"}, {"--lambda-code", "lambda_code"},
      {"--gp-mode", "gp_mode"},     {"--reduction", "reduction"},
      {"--batch", "batch"},         {"--lr", "lr"},
      {"--seed", "seed"},           {"--d-r", "d_r"},
      {"--d-z", "d_z"},             {"--points", "points"},
      {"--n-critic", "n_critic"},   {"--optimizer", "optimizer"},
      {"--nn-method", "nn_method"}};
  std::map<std::string, std::string> raw;
  std::vector<std::pair<CLI::Option*, std::string>> keyed_opts;
  for (const auto& [flag, key] : keyed) keyed_opts.emplace_back(tr->add_option(flag, raw[key]), key);

  CompleteArgs c;
  auto* co = app.add_subcommand("complete", "Complete a partial cloud");
  co->add_option("--ckpt", c.ckpt)->required();
  co->add_option("--input", c.input, "Input .xyz")->required();
  co->add_option("--output", c.output, "Completed .ply");
  co->add_flag("--resample", c.resample, "Resample the input to the model resolution");
  co->add_option("--emit-incomplete", c.emit_incomplete, "Treat the input as complete; write a predicted partial .ply");
  co->add_option("--code", c.code, "Missing-region code, comma-separated values in [0,1]");
  co->add_option("--seed", c.seed)->capture_default_str();

  EvalArgs e;
  auto* ev = app.add_subcommand("eval", "Per-category Chamfer table on the eval split");
  ev->add_option("--ckpt", e.ckpt);
  ev->add_option("--data", e.data)->required();
  ev->add_option("--out", e.out, "Table CSV");
  ev->add_option("--resolutions", e.resolutions, "Comma-separated input point counts");
  ev->add_option("--mode", e.mode, "model|partial|gt")->capture_default_str();

  ExportArgs x;
  auto* ex = app.add_subcommand("export-latent", "Write complete and transferred representations");
  ex->add_option("--ckpt", x.ckpt)->required();
  ex->add_option("--data", x.data)->required();
  ex->add_option("--out", x.out)->required();
  ex->add_option("--split", x.split, "all|train-incomplete|train-complete|eval")->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& ex_) {
    const int code = app.exit(ex_, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (gen->parsed()) return gen_data(g, out);
    if (tr->parsed()) {
      for (const auto& [opt, key] : keyed_opts)
        if (opt->count() > 0) t.overrides[key] = raw[key];
      return train(t, out, err);
    }
    if (co->parsed()) return complete(c, out);
    if (ev->parsed()) return eval(e, out);
    if (ex->parsed()) return export_latent(x, out);
  } catch (const DivergenceError& ex_) {
    err << "error: " << ex_.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& ex_) {
    err << "error: " << ex_.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}

int run_cli(int argc, const char* const* argv) {
  return run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace ucomp
