#include "doctest.h"

#include <fstream>
#include <sstream>

#include "support.hpp"
#include "ucomp/cli.hpp"
#include "ucomp/data.hpp"

using namespace ucomp;
using ucomp::testing::TempDir;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run ucomp_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ucomp");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> tiny_train(const TempDir& dir, const std::string& run) {
  return {"train", "--data", (dir / "data").string(), "--out", (dir / run).string(), "--steps", "6",
          "--pretrain-steps", "2", "--d-r", "8", "--d-z", "4", "--batch", "2", "--log-every", "0"};
}

}  // namespace

TEST_CASE("command line round trip on a tiny dataset") {
  TempDir dir("cli");
  const std::string data = (dir / "data").string();
  REQUIRE(ucomp_cli({"gen-data", "--out", data, "--count", "8", "--points", "32", "--seed", "3"}).code == kExitOk);
  CHECK(ucomp_cli({"gen-data", "--out", data, "--count", "8", "--points", "32"}).code == kExitInvalid);
  CHECK(ucomp_cli({"gen-data", "--out", data, "--count", "8", "--points", "32", "--force"}).code == kExitOk);

  const Run train = ucomp_cli(tiny_train(dir, "run"));
  REQUIRE(train.code == kExitOk);
  const std::string ckpt = (dir / "run" / "final.bin").string();
  CHECK(std::filesystem::exists(dir / "run" / "metrics.csv"));
  CHECK(std::filesystem::exists(dir / "run" / "run_manifest.txt"));

  const Dataset ds = read_dataset(data);
  write_xyz(dir / "in.xyz", ds.samples[0].partials[0]);
  CHECK(ucomp_cli({"complete", "--ckpt", ckpt, "--input", (dir / "in.xyz").string(), "--output",
                   (dir / "out.ply").string()})
            .code == kExitOk);
  CHECK(read_ply(dir / "out.ply").size() == 32);
  CHECK(ucomp_cli({"complete", "--ckpt", ckpt, "--input", (dir / "in.xyz").string(), "--emit-incomplete",
                   (dir / "inc.ply").string(), "--code", "0.1,0.2,0.3,0.4"})
            .code == kExitOk);
  CHECK(ucomp_cli({"complete", "--ckpt", ckpt, "--input", (dir / "in.xyz").string(), "--emit-incomplete",
                   (dir / "inc.ply").string(), "--code", "0.1,0.2"})
            .code == kExitInvalid);

  Rng rng(1);
  write_xyz(dir / "odd.xyz", resample(ds.samples[0].complete, 50, rng));
  CHECK(ucomp_cli({"complete", "--ckpt", ckpt, "--input", (dir / "odd.xyz").string(), "--output",
                   (dir / "o.ply").string()})
            .code == kExitInvalid);
  CHECK(ucomp_cli({"complete", "--ckpt", ckpt, "--input", (dir / "odd.xyz").string(), "--output",
                   (dir / "o.ply").string(), "--resample"})
            .code == kExitOk);

  const Run eval = ucomp_cli({"eval", "--ckpt", ckpt, "--data", data, "--resolutions", "16,64"});
  CHECK(eval.code == kExitOk);
  CHECK(eval.out.rfind("points,average", 0) == 0);
  CHECK(ucomp_cli({"eval", "--data", data}).code == kExitInvalid);
  CHECK(ucomp_cli({"eval", "--data", data, "--mode", "gt"}).out.find("average,0.0") != std::string::npos);

  CHECK(ucomp_cli({"export-latent", "--ckpt", ckpt, "--data", data, "--out", (dir / "lat.csv").string(),
                   "--split", "eval"})
            .code == kExitOk);

  std::string bad = (dir / "bad.bin").string();
  std::ofstream(bad) << "not a checkpoint";
  CHECK(ucomp_cli({"eval", "--ckpt", bad, "--data", data}).code == kExitInvalid);
}

TEST_CASE("invalid invocations and divergence exit codes") {
  TempDir dir("cli_err");
  CHECK(ucomp_cli({}).code == kExitInvalid);
  CHECK(ucomp_cli({"frobnicate"}).code == kExitInvalid);
  CHECK(ucomp_cli({"train", "--data", (dir / "nowhere").string(), "--out", (dir / "r").string()}).code ==
        kExitInvalid);
  CHECK(ucomp_cli({"--help"}).code == kExitOk);

  REQUIRE(ucomp_cli({"gen-data", "--out", (dir / "data").string(), "--count", "8", "--points", "32"}).code ==
          kExitOk);
  auto args = tiny_train(dir, "r");
  args.insert(args.end(), {"--lambda-p", "-1"});
  CHECK(ucomp_cli(args).code == kExitInvalid);

  args = tiny_train(dir, "boom");
  args.insert(args.end(), {"--lr", "1e300"});
  const Run boom = ucomp_cli(args);
  CAPTURE(boom.err);
  CHECK(boom.code == kExitDiverged);
  CHECK(boom.err.find("step") != std::string::npos);
}
