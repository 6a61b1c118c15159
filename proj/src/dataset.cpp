#include <cmath>
#include <fstream>
#include <sstream>

#include "ucomp/data.hpp"
#include "ucomp/error.hpp"

namespace ucomp {

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrainIncomplete: return "train-incomplete";
    case Split::kTrainComplete: return "train-complete";
    case Split::kEval: return "eval";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  for (Split s : {Split::kTrainIncomplete, Split::kTrainComplete, Split::kEval}) {
    if (name == split_name(s)) return s;
  }
  throw ValidationError("unknown split '" + std::string(name) + "'");
}

void DatasetSpec::validate() const {
  if (categories.empty()) throw ValidationError("dataset needs at least one category");
  if (count == 0) throw ValidationError("count must be >= 1");
  if (points == 0) throw ValidationError("points must be >= 1");
  if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("tau must lie in (0,1)");
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
    throw ValidationError("eval fraction must lie in (0,1)");
  }
}

std::vector<PointCloud> Dataset::incomplete_pool() const {
  std::vector<PointCloud> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (splits[i] != Split::kTrainIncomplete) continue;
    out.insert(out.end(), samples[i].partials.begin(), samples[i].partials.end());
  }
  return out;
}

std::vector<PointCloud> Dataset::complete_pool() const {
  std::vector<PointCloud> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (splits[i] == Split::kTrainComplete) out.push_back(samples[i].complete);
  }
  return out;
}

std::vector<const ShapeSample*> Dataset::with_split(Split s) const {
  std::vector<const ShapeSample*> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (splits[i] == s) out.push_back(&samples[i]);
  return out;
}

Dataset build_dataset(const DatasetSpec& spec) {
  spec.validate();
  const std::size_t cats = spec.categories.size();
  Dataset ds;
  const auto views = view_directions();
  for (std::size_t c = 0; c < cats; ++c) {
    const std::size_t n = spec.count / cats + (c < spec.count % cats ? 1 : 0);
    const std::size_t n_eval = static_cast<std::size_t>(std::ceil(spec.eval_fraction * static_cast<double>(n)));
    // Both unpaired training pools need at least one object.
    if (n < n_eval + 2) {
      throw ValidationError("category " + std::string(category_name(spec.categories[c])) + " has " +
                            std::to_string(n) + " objects, too few to split");
    }
    for (std::size_t k = 0; k < n; ++k) {
      char idx[24];
      std::snprintf(idx, sizeof idx, "%04zu", k);
      ShapeSample s;
      s.category = spec.categories[c];
      s.id = std::string(category_name(s.category)) + "_" + idx;
      Rng rng = Rng::derive(spec.seed, s.id);
      s.complete = generate_complete(s.category, spec.points, rng);
      for (const auto& v : views) s.partials.push_back(make_partial(s.complete, v, spec.tau, spec.points, rng));
      ds.samples.push_back(std::move(s));
      if (k < n_eval) {
        ds.splits.push_back(Split::kEval);
      } else {
        ds.splits.push_back((k - n_eval) % 2 == 0 ? Split::kTrainIncomplete : Split::kTrainComplete);
      }
    }
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "complete");
  fs::create_directories(root / "partial");
  std::string manifest;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const ShapeSample& s = ds.samples[i];
    write_xyz(root / "complete" / (s.id + ".xyz"), s.complete);
    for (std::size_t v = 0; v < s.partials.size(); ++v) {
      write_xyz(root / "partial" / (s.id + "_" + std::to_string(v) + ".xyz"), s.partials[v]);
    }
    manifest += s.id + "\t" + std::string(category_name(s.category)) + "\t" +
                std::string(split_name(ds.splits[i])) + "\n";
  }
  std::ofstream out(root / "manifest.txt", std::ios::binary);
  if (!out) throw IoError("cannot write " + (root / "manifest.txt").string());
  out << manifest;
}

Dataset read_dataset(const std::filesystem::path& root) {
  const auto manifest_path = root / "manifest.txt";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("no dataset manifest at " + manifest_path.string());
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, cat, split;
    if (!std::getline(fields, id, '\t') || !std::getline(fields, cat, '\t') ||
        !std::getline(fields, split)) {
      throw IoError(manifest_path.string() + ": line " + std::to_string(line_no) +
                    ": expected id<TAB>category<TAB>split");
    }
    ShapeSample s;
    s.id = id;
    s.category = parse_category(cat);
    s.complete = read_xyz(root / "complete" / (id + ".xyz"));
    for (std::size_t v = 0; v < 8; ++v) {
      s.partials.push_back(read_xyz(root / "partial" / (id + "_" + std::to_string(v) + ".xyz")));
    }
    ds.samples.push_back(std::move(s));
    ds.splits.push_back(parse_split(split));
  }
  if (ds.samples.empty()) throw IoError(manifest_path.string() + ": empty manifest");
  return ds;
}

}  // namespace ucomp
