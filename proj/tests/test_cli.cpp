#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "nidlab/cli.hpp"
#include "nidlab/error.hpp"

using namespace nidlab;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = 0;
  std::string out;
  std::string err;
};

RunResult run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  RunResult r;
  r.code = run_command(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(bool(f));
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& content) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream f(path, std::ios::trunc);
  REQUIRE(bool(f));
  f << content;
}

// Scratch directory under the test runner's working directory, wiped per use.
std::string scratch(const std::string& name) {
  const std::string dir = "cli_tmp/" + name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Fast two-seed baseline run; everything an end-to-end flow needs.
std::string tiny_config(const std::string& dir, const std::string& kind) {
  const std::string path = dir + "/config.json";
  spit(path,
       "{\"model\":{\"kind\":\"" + kind +
           "\",\"K\":2,\"m\":2,\"d1\":2,\"dP\":2,\"dR\":2,\"H\":4,\"hidden\":8,\"channels\":2},"
           "\"train\":{\"steps\":40,\"seeds\":[0,1]},"
           "\"eval\":{\"n_rollouts\":2,\"horizon\":2},"
           "\"gen\":{\"episodes\":2,\"horizon\":3},"
           "\"out\":\"" +
           dir + "/run\"}");
  return path;
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("configurations round-trip through their canonical JSON") {
  const RunConfig base = RunConfig::defaults();
  const std::string canon = config_to_json(base);

  SUBCASE("defaults survive a parse/emit cycle byte for byte") {
    CHECK(config_to_json(config_from_json(canon)) == canon);
    CHECK(config_to_json(config_from_json("{}")) == canon);
  }

  SUBCASE("defaults match the published grid and environment") {
    CHECK(base.env.objects.size() == 4);
    CHECK(base.hyper.steps == 20000);
    CHECK(enumerate_grid(base.ablate).size() == 720);
    CHECK(base.ablate.base == base.hyper);
  }

  SUBCASE("overrides land in the right fields") {
    const RunConfig c = config_from_json(
        "{\"env\":{\"orientation\":\"flat\",\"agent\":true},"
        "\"model\":{\"kind\":\"mlp\",\"hidden\":32},"
        "\"train\":{\"steps\":12,\"seeds\":[4,5],\"data\":\"eps.ndjson\"},"
        "\"eval\":{\"splits\":[\"test\"]},"
        "\"gen\":{\"horizon\":5,\"split\":\"test\"},"
        "\"out\":\"elsewhere\"}");
    CHECK(c.env.orientation == Orientation::Flat);
    CHECK(c.env.stochastic_mover == 0);  // flat implies a stochastic mover
    CHECK(c.env.objects.size() == 3);    // mover, blocker, agent
    CHECK(c.env.has_agent());
    CHECK(c.env.horizon == 5);
    CHECK(c.kind == "mlp");
    CHECK(c.hidden == 32);
    CHECK(c.hyper.steps == 12);
    CHECK(c.seeds == std::vector<std::uint64_t>{4, 5});
    CHECK(c.data_path == "eps.ndjson");
    CHECK(c.eval_splits == std::vector<Split>{Split::Test});
    CHECK(c.gen_split == Split::Test);
    CHECK(c.out_dir == "elsewhere");
    CHECK(c.ablate.base == c.hyper);
    const std::string emitted = config_to_json(c);
    CHECK(config_to_json(config_from_json(emitted)) == emitted);
  }

  SUBCASE("custom rosters replace the standard one") {
    const RunConfig c = config_from_json(
        "{\"env\":{\"objects\":[{\"name\":\"ball\",\"rollable\":true},{\"name\":\"box\"}]}}");
    REQUIRE(c.env.objects.size() == 2);
    CHECK(c.env.objects[0].name == "ball");
    CHECK(c.env.objects[0].rollable);
    CHECK_FALSE(c.env.objects[1].rollable);
    const std::string emitted = config_to_json(c);
    CHECK(config_to_json(config_from_json(emitted)) == emitted);
  }
}

TEST_CASE("repository example configs parse and round-trip") {
  const std::string root = NIDLAB_SOURCE_DIR;
  for (const char* name : {"inclined_plane.json", "valley.json", "stochastic.json", "tiny.json",
                           "ablation_small.json", "ablation_full.json"}) {
    CAPTURE(name);
    const RunConfig c = config_from_json(slurp(root + "/configs/" + name));
    const std::string emitted = config_to_json(c);
    CHECK(config_to_json(config_from_json(emitted)) == emitted);
  }
  const RunConfig small = config_from_json(slurp(root + "/configs/ablation_small.json"));
  CHECK(enumerate_grid(small.ablate).size() == 16);
  const RunConfig full = config_from_json(slurp(root + "/configs/ablation_full.json"));
  CHECK(enumerate_grid(full.ablate).size() == 720);
}

TEST_CASE("bad configurations name the offending key") {
  CHECK_THROWS_WITH_AS(config_from_json("{\"trian\":{}}"), doctest::Contains("trian"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json("{\"train\":{\"step\":1}}"),
                       doctest::Contains("train.step"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json("{\"train\":{\"steps\":\"many\"}}"),
                       doctest::Contains("train.steps"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json("{\"train\":{\"steps\":-1}}"),
                       doctest::Contains("train.steps"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json("{\"train\":{\"seeds\":[]}}"),
                       doctest::Contains("train.seeds"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json("{\"train\":{\"seeds\":[-3]}}"),
                       doctest::Contains("unsigned"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json("{\"model\":{\"kind\":\"resnet\"}}"),
                       doctest::Contains("model.kind"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json("{\"model\":{\"variant\":\"psychic\"}}"),
                       doctest::Contains("model.variant"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json("{\"env\":{\"objects\":[{\"nmae\":\"x\"}]}}"),
                       doctest::Contains("env.objects[0].nmae"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json("{\"env\":{\"objects\":[{\"rollable\":true}]}}"),
                       doctest::Contains("name"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json("{\"eval\":{\"n_rollouts\":0}}"),
                       doctest::Contains("eval.n_rollouts"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json("{\"eval\":{\"splits\":[\"train\",\"train\"]}}"),
                       doctest::Contains("duplicate"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json("{\"out\":\"\"}"), doctest::Contains("out"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json("not json at all"), doctest::Contains("invalid JSON"),
                       ConfigError);
  // Inconsistent environments surface the validation message with its path.
  CHECK_THROWS_WITH_AS(config_from_json("{\"env\":{\"orientation\":\"flat\",\"stochastic\":false}}"),
                       doctest::Contains("stochastic_mover"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json("{\"env\":{\"apex\":99}}"), doctest::Contains("apex"),
                       ConfigError);
}

TEST_CASE("state rendering puts each object's letter on its cell") {
  EnvSpec env;
  env.D = 6;
  env.objects = {{"green", true, false, false}, {"red", false, false, false}};
  CHECK(render_state(env, GridState{{2, 5}}) == "..g...\n.....r\n");
  CHECK_THROWS_WITH_AS(render_state(env, GridState{{2}}), doctest::Contains("roster"), Error);
  CHECK_THROWS_WITH_AS(render_state(env, GridState{{2, 6}}), doctest::Contains("grid"), Error);
}

TEST_CASE("distribution rendering distinguishes peaks from spread mass") {
  EnvSpec env;
  env.D = 4;
  env.objects = {{"green", true, false, false}};

  Tensor x = Tensor::zeros(Shape::mat(1, 4));

  SUBCASE("a one-hot row prints a single uppercase letter") {
    x.at(0, 2) = 1.0;
    CHECK(render_distribution(env, x) == "..G.\n");
  }
  SUBCASE("secondary mass above a tenth prints lowercase") {
    x.at(0, 0) = 0.5;
    x.at(0, 1) = 0.3;
    x.at(0, 2) = 0.15;
    x.at(0, 3) = 0.05;
    CHECK(render_distribution(env, x) == "Ggg.\n");
  }
  SUBCASE("a tied argmax leaves no uppercase") {
    x.at(0, 0) = 0.45;
    x.at(0, 1) = 0.45;
    x.at(0, 2) = 0.1;
    CHECK(render_distribution(env, x) == "ggg.\n");
  }
  SUBCASE("the uniform row prints all lowercase") {
    for (int p = 0; p < 4; ++p) x.at(0, static_cast<std::size_t>(p)) = 0.25;
    CHECK(render_distribution(env, x) == "gggg\n");
  }
  SUBCASE("shape mismatches are rejected") {
    CHECK_THROWS_WITH_AS(render_distribution(env, Tensor::zeros(Shape::mat(2, 4))),
                         doctest::Contains("roster"), Error);
  }
}

TEST_CASE("usage errors exit with code one") {
  CHECK(run({}).code == 1);
  CHECK(run({"fly"}).code == 1);
  CHECK(run({"train", "--bogus"}).code == 1);
  CHECK(run({"eval", "--split", "sideways"}).code == 1);
  CHECK(run({"train", "--config", "no_such_file.json"}).code == 1);

  const RunResult help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("train") != std::string::npos);
  CHECK(help.out.find("check-grad") != std::string::npos);
}

TEST_CASE("gen writes the requested number of episodes deterministically") {
  const std::string dir = scratch("gen");
  const std::string cfg = tiny_config(dir, "conv1");

  const RunResult r = run({"gen", "--config", cfg});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("2 train episodes") != std::string::npos);
  const std::string path = dir + "/run/episodes_train.ndjson";
  const std::string first = slurp(path);
  CHECK(count_lines(first) == 2);

  // The effective config is the canonical form of the parsed input.
  CHECK(slurp(dir + "/run/effective_config.json") ==
        config_to_json(config_from_json(slurp(cfg))) + "\n");

  REQUIRE(run({"gen", "--config", cfg}).code == 0);
  CHECK(slurp(path) == first);

  REQUIRE(run({"gen", "--config", cfg, "--split", "test"}).code == 0);
  CHECK(count_lines(slurp(dir + "/run/episodes_test.ndjson")) == 2);
}

TEST_CASE("train, eval, embed and render cooperate through the output directory") {
  const std::string dir = scratch("flow");
  const std::string cfg = tiny_config(dir, "conv1");

  SUBCASE("eval before train fails with a runtime error") {
    const RunResult r = run({"eval", "--config", cfg});
    CHECK(r.code == 2);
    CHECK(r.err.find("checkpoint") != std::string::npos);
  }

  SUBCASE("the full loop produces every artifact and is repeatable") {
    const RunResult t = run({"train", "--config", cfg});
    REQUIRE(t.code == 0);
    CHECK(t.out.find("seed 0") != std::string::npos);
    CHECK(t.out.find("seed 1") != std::string::npos);
    const std::string cp0 = slurp(dir + "/run/checkpoint_conv1_seed0.json");
    const std::string curve0 = slurp(dir + "/run/curve_conv1_seed0.csv");
    CHECK(slurp(dir + "/run/checkpoint_conv1_seed1.json") != cp0);

    REQUIRE(run({"train", "--config", cfg}).code == 0);
    CHECK(slurp(dir + "/run/checkpoint_conv1_seed0.json") == cp0);
    CHECK(slurp(dir + "/run/curve_conv1_seed0.csv") == curve0);

    const RunResult e = run({"eval", "--config", cfg});
    REQUIRE(e.code == 0);
    CHECK(e.out.find("conv1 train: cumulative error") != std::string::npos);
    CHECK(e.out.find("conv1 test: cumulative error") != std::string::npos);
    const std::string train_csv = slurp(dir + "/run/rollout_conv1_train.csv");
    CHECK(train_csv.rfind("step,mean_cumulative_bce,std_cumulative_bce,split,model,seed", 0) == 0);
    CHECK(train_csv.find(",all") != std::string::npos);  // two seeds aggregate

    REQUIRE(run({"eval", "--config", cfg}).code == 0);
    CHECK(slurp(dir + "/run/rollout_conv1_train.csv") == train_csv);

    const RunResult rr = run({"render", "--config", cfg});
    REQUIRE(rr.code == 0);
    CHECK(rr.out.find("ground truth (train, seed 0)") != std::string::npos);
    CHECK(rr.out.find("model rollout (conv1") != std::string::npos);
    CHECK(rr.out.find("t=3") != std::string::npos);
  }

  SUBCASE("eval restricted to one split leaves the other file unwritten") {
    REQUIRE(run({"train", "--config", cfg}).code == 0);
    REQUIRE(run({"eval", "--config", cfg, "--split", "test"}).code == 0);
    CHECK(fs::exists(dir + "/run/rollout_conv1_test.csv"));
    CHECK_FALSE(fs::exists(dir + "/run/rollout_conv1_train.csv"));
  }

  SUBCASE("a corrupt checkpoint is a runtime error") {
    REQUIRE(run({"train", "--config", cfg}).code == 0);
    spit(dir + "/run/checkpoint_conv1_seed0.json", "garbage");
    CHECK(run({"eval", "--config", cfg}).code == 2);
  }
}

TEST_CASE("render without a checkpoint still prints the episode") {
  const std::string dir = scratch("render");
  const RunResult r = run({"render", "--out", dir + "/run"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("ground truth") != std::string::npos);
  CHECK(r.out.find("ground truth only") != std::string::npos);
  CHECK(r.out.find("model rollout") == std::string::npos);
}

TEST_CASE("embed exports nid encoder points and rejects baselines") {
  const std::string dir = scratch("embed");
  const std::string path = dir + "/config.json";
  spit(path,
       "{\"model\":{\"kind\":\"nid\",\"K\":2,\"m\":2,\"d1\":2,\"dP\":2,\"dR\":2,\"H\":4},"
       "\"train\":{\"steps\":30,\"seeds\":[0]},"
       "\"eval\":{\"n_rollouts\":2,\"horizon\":2},"
       "\"out\":\"" +
           dir + "/run\"}");
  REQUIRE(run({"train", "--config", path}).code == 0);

  const RunResult r = run({"embed", "--config", path});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("silhouette") != std::string::npos);
  CHECK(slurp(dir + "/run/embedding_nid_seed0.json").find("\"kind\":\"embedding\"") !=
        std::string::npos);

  const std::string base_cfg = tiny_config(dir, "conv1");
  const RunResult bad = run({"embed", "--config", base_cfg});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("model.kind") != std::string::npos);
}

TEST_CASE("ablate runs the configured grid once and resumes as a no-op") {
  const std::string dir = scratch("ablate");
  const std::string path = dir + "/config.json";
  spit(path,
       "{\"model\":{\"kind\":\"nid\",\"m\":2,\"d1\":2,\"dP\":2,\"dR\":2,\"H\":4},"
       "\"train\":{\"steps\":30},"
       "\"ablate\":{\"lambda1\":[5e-7],\"lambda2\":[5e-6],"
       "\"variants\":[\"sample_dependent\"],"
       "\"cells\":[{\"init\":\"fixed_rows\",\"K\":[2,3],\"seeds\":2}],"
       "\"n_rollouts\":2,\"horizon\":2},"
       "\"out\":\"" +
           dir + "/run\"}");

  const RunResult first = run({"ablate", "--config", path, "--jobs", "1"});
  REQUIRE(first.code == 0);
  CHECK(first.out.find("4 new record(s), 0 already present") != std::string::npos);
  const std::string ndjson = slurp(dir + "/run/ablation.ndjson");
  CHECK(count_lines(ndjson) == 4);
  CHECK(ndjson.find("\"ok\":true") != std::string::npos);

  const RunResult again = run({"ablate", "--config", path, "--jobs", "1"});
  REQUIRE(again.code == 0);
  CHECK(again.out.find("0 new record(s), 4 already present") != std::string::npos);
  CHECK(slurp(dir + "/run/ablation.ndjson") == ndjson);
}

TEST_CASE("check-grad reports the sweep verdict") {
  const std::string dir = scratch("grad");
  const RunResult r = run({"check-grad", "--out", dir + "/run"});
  CHECK(r.code == 0);
  CHECK(r.out.find("checked 120 configurations") != std::string::npos);
  CHECK(r.out.find("max relative error") != std::string::npos);
}

TEST_CASE("seed overrides replace the configured list") {
  const std::string dir = scratch("seed");
  const std::string cfg = tiny_config(dir, "conv1");

  SUBCASE("--seed wins over the config and the environment") {
    setenv("NIDLAB_SEED", "9", 1);
    REQUIRE(run({"gen", "--config", cfg, "--seed", "5"}).code == 0);
    unsetenv("NIDLAB_SEED");
    CHECK(slurp(dir + "/run/effective_config.json").find("\"seeds\":[5]") != std::string::npos);
  }

  SUBCASE("NIDLAB_SEED applies when no flag is given") {
    setenv("NIDLAB_SEED", "9", 1);
    const RunResult ok = run({"gen", "--config", cfg});
    setenv("NIDLAB_SEED", "ripe", 1);
    const RunResult bad = run({"gen", "--config", cfg});
    unsetenv("NIDLAB_SEED");
    REQUIRE(ok.code == 0);
    CHECK(slurp(dir + "/run/effective_config.json").find("\"seeds\":[9]") != std::string::npos);
    CHECK(bad.code == 1);
    CHECK(bad.err.find("NIDLAB_SEED") != std::string::npos);
  }
}

}  // TEST_SUITE
