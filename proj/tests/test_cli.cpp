/*
 * Copyright (c) 2026 The SlimGraph Authors. All Rights Reserved
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <sys/wait.h>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class Sandbox {
 public:
  Sandbox() : dir_(fs::temp_directory_path() / "slimgraph_cli_test") {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Sandbox() { fs::remove_all(dir_); }

  std::string path(const std::string& f) const { return (dir_ / f).string(); }

  // `env` is a prefix such as "SLIMGRAPH_SEED=5".
  Run run(const std::string& args, const std::string& env = "") const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && " + (env.empty() ? "" : "env " + env + " ") +
                            "'" SLIMGRAPH_CLI_PATH "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

 private:
  fs::path dir_;
};

// Weight blob of a model container: after the topology, before the CRC.
std::string blob_of(const std::string& bytes) {
  uint64_t topo = 0;
  for (int i = 0; i < 8; ++i) topo |= static_cast<uint64_t>(static_cast<uint8_t>(bytes[8 + static_cast<size_t>(i)])) << (8 * i);
  return bytes.substr(16 + topo, bytes.size() - 16 - topo - 4);
}

}  // namespace

TEST_CASE("cli: usage errors exit 1") {
  Sandbox s;
  CHECK(s.run("").code == 1);
  CHECK(s.run("frobnicate").code == 1);
  CHECK(s.run("build --preset ecoweed_mini --out m.twnm --bogus 1").code == 1);
  CHECK(s.run("build --preset ecoweed_mini").code == 1);
  CHECK(s.run("prune --model m.twnm --out s.twnm").code == 1);
  const Run bad = s.run("build --preset resnet --out m.twnm");
  CHECK(bad.code == 1);
  CHECK(bad.err.find("error:") != std::string::npos);
  CHECK(s.run("build --help").code == 0);
}

TEST_CASE("cli: config echo, determinism and seed fallback") {
  Sandbox s;
  const Run r = s.run("build --preset y11_mini --out a.twnm");
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("config: command=build preset=y11_mini", 0) == 0);
  CHECK(r.out.find("seed=1") != std::string::npos);
  REQUIRE(s.run("build --preset y11_mini --out b.twnm").code == 0);
  CHECK(slurp(s.path("a.twnm")) == slurp(s.path("b.twnm")));

  REQUIRE(s.run("build --preset y11_mini --out c.twnm --seed 5").code == 0);
  const Run env = s.run("build --preset y11_mini --out d.twnm", "SLIMGRAPH_SEED=5");
  REQUIRE(env.code == 0);
  CHECK(env.out.find("seed=5") != std::string::npos);
  CHECK(slurp(s.path("c.twnm")) == slurp(s.path("d.twnm")));
  CHECK(slurp(s.path("c.twnm")) != slurp(s.path("a.twnm")));
  // An explicit flag wins over the environment.
  REQUIRE(s.run("build --preset y11_mini --out e.twnm --seed 1", "SLIMGRAPH_SEED=5").code == 0);
  CHECK(slurp(s.path("e.twnm")) == slurp(s.path("a.twnm")));
}

TEST_CASE("cli: prune with fraction 0 keeps the weights") {
  Sandbox s;
  REQUIRE(s.run("build --preset ecoweed_mini --out d.twnm").code == 0);
  REQUIRE(s.run("prune --model d.twnm --fraction 0 --plan-out p.txt --out s.twnm").code == 0);
  CHECK(blob_of(slurp(s.path("d.twnm"))) == blob_of(slurp(s.path("s.twnm"))));
  CHECK(s.run("verify --dense d.twnm --slim s.twnm --plan p.txt --trials 3").code == 0);
}

TEST_CASE("cli: verify over presets and fractions") {
  Sandbox s;
  for (const char* preset : {"ecoweed_mini", "y11_mini", "y12_mini"}) {
    REQUIRE(s.run(std::string("build --preset ") + preset + " --out d.twnm").code == 0);
    for (const char* f : {"0.1", "0.3", "0.5"}) {
      CAPTURE(preset);
      CAPTURE(f);
      REQUIRE(s.run(std::string("prune --model d.twnm --fraction ") + f + " --plan-out p.txt --out s.twnm").code == 0);
      const Run v = s.run("verify --dense d.twnm --slim s.twnm --plan p.txt --trials 20 --tol 1e-5");
      CHECK(v.code == 0);
      CHECK(v.out.find("20/20 trials passed") != std::string::npos);
    }
  }
}

TEST_CASE("cli: validation and format failures") {
  Sandbox s;
  REQUIRE(s.run("build --preset ecoweed_mini --out d.twnm").code == 0);
  REQUIRE(s.run("prune --model d.twnm --fraction 0.3 --plan-out p.txt --out s.twnm").code == 0);

  // Out-of-range removal index in group 1.
  std::string plan = slurp(s.path("p.txt"));
  const size_t at = plan.find("\ngroup 1 ");
  REQUIRE(at != std::string::npos);
  const size_t eol = plan.find('\n', at + 1);
  plan.insert(eol, " 999");
  std::ofstream(s.path("bad.txt")) << plan;
  const Run v = s.run("verify --dense d.twnm --slim s.twnm --plan bad.txt");
  CHECK(v.code == 2);
  CHECK(v.err.find("group 1") != std::string::npos);

  // A slim model that does not match its plan.
  REQUIRE(s.run("build --preset ecoweed_mini --out other.twnm --seed 3").code == 0);
  CHECK(s.run("verify --dense other.twnm --slim other.twnm --plan p.txt --trials 2").code == 2);

  CHECK(s.run("inspect --model missing.twnm").code == 3);
  std::string bytes = slurp(s.path("d.twnm"));
  bytes[bytes.size() - 20] ^= 0x40;
  std::ofstream(s.path("corrupt.twnm"), std::ios::binary) << bytes;
  const Run c = s.run("inspect --model corrupt.twnm");
  CHECK(c.code == 3);
  CHECK(c.err.find("checksum") != std::string::npos);
  std::ofstream(s.path("garbage.txt")) << "group one remove 2\n";
  CHECK(s.run("verify --dense d.twnm --slim s.twnm --plan garbage.txt").code == 3);
}

TEST_CASE("cli: report ratio matches parameter counts") {
  Sandbox s;
  REQUIRE(s.run("build --preset y12_mini --out d.twnm").code == 0);
  REQUIRE(s.run("prune --model d.twnm --fraction 0.3 --plan-out p.txt --out s.twnm").code == 0);
  const Run r = s.run("report --models d.twnm s.twnm --csv r.csv");
  REQUIRE(r.code == 0);
  std::istringstream csv(slurp(s.path("r.csv")));
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(csv, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  REQUIRE(rows.size() == 3);
  const double dense = std::stod(rows[1][5]), slim = std::stod(rows[2][5]);
  char expect[32];
  std::snprintf(expect, sizeof(expect), "%.1f", 100.0 * (1.0 - slim / dense));
  CHECK(rows[2][4] == expect);
  CHECK(rows[1][4] == "0.0");
}

TEST_CASE("cli: train, calibrate, qat and pipeline") {
  Sandbox s;
  REQUIRE(s.run("build --preset y11_mini --out m.twnm").code == 0);
  const Run t = s.run("train --model m.twnm --epochs 1 --log log.csv --out t.twnm");
  REQUIRE(t.code == 0);
  CHECK(slurp(s.path("log.csv")).rfind("epoch,train_loss,val_acc,phase\n1,", 0) == 0);
  REQUIRE(s.run("train --model m.twnm --epochs 1 --log log2.csv --out t2.twnm").code == 0);
  CHECK(slurp(s.path("t.twnm")) == slurp(s.path("t2.twnm")));

  REQUIRE(s.run("calibrate --model t.twnm --batches 1 --calib-out calib.txt --out c.twnm").code == 0);
  CHECK(slurp(s.path("calib.txt")).find(".fq") != std::string::npos);
  CHECK(s.run("calibrate --model t.twnm --batches 0 --out c.twnm").code == 1);
  REQUIRE(s.run("qat --model t.twnm --epochs 1 --batches 1 --out q.twnm").code == 0);
  CHECK(s.run("inspect --model q.twnm").out.find("fakequant") != std::string::npos);

  const Run p = s.run("pipeline --preset ecoweed_mini --fraction 0.3 --prune-epoch 1 --epochs 2 --qat --out-dir out");
  REQUIRE(p.code == 0);
  for (const char* f : {"model_fp32.twnm", "model_fp16.twnm", "plan.txt", "calib.txt", "metrics.csv", "report.csv", "report.txt"}) {
    CAPTURE(f);
    CHECK(fs::exists(fs::path(s.path("out")) / f));
  }
  const std::string first = slurp(s.path("out/model_fp32.twnm"));
  REQUIRE(s.run("pipeline --preset ecoweed_mini --fraction 0.3 --prune-epoch 1 --epochs 2 --qat --out-dir out").code == 0);
  CHECK(slurp(s.path("out/model_fp32.twnm")) == first);
  CHECK(s.run("pipeline --preset ecoweed_mini --fraction 0.3 --prune-epoch 4 --epochs 2 --out-dir out").code == 1);
}
