#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "fixtures.hpp"
#include "profuse/container_io.hpp"
#include "profuse/synth.hpp"

namespace fs = std::filesystem;

namespace {

int cli(const std::string& args) {
  const std::string cmd = std::string(PROFUSE_EXE) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("argument and config errors exit with 2") {
  const fs::path dir = profuse::fixture::scratch_dir("cli_errors");
  CHECK(cli("") == 2);
  CHECK(cli("--no-such-flag run") == 2);
  CHECK(cli("synth") == 2);
  write(dir / "bad.json", R"({"synth": {}, "unknown_key": 1})");
  CHECK(cli("--config " + q(dir / "bad.json") + " run") == 2);
  write(dir / "broken.json", "{");
  CHECK(cli("--config " + q(dir / "broken.json") + " run") == 2);
  CHECK(cli("--config " + q(dir / "missing.json") + " run") == 2);
  CHECK(cli("--threads -1 run") == 2);
}

TEST_CASE("stage by stage") {
  const fs::path d = profuse::fixture::scratch_dir("cli_stages");
  const fs::path syn = d / "synth";
  REQUIRE(cli("--seed 7 synth --out " + q(syn) + " --objects 3 --views 4 --width 96 --height 72") == 0);
  const fs::path man = syn / "manifest.json";
  CHECK(fs::exists(man));
  REQUIRE(cli("init --manifest " + q(man) + " --out " + q(d / "scene.pf")) == 0);
  REQUIRE(cli("cluster --manifest " + q(man) + " --scene " + q(d / "scene.pf") + " --out " +
                  q(d / "proposals.pf")) == 0);
  REQUIRE(cli("register --manifest " + q(man) + " --scene " + q(d / "scene.pf") + " --proposals " +
                  q(d / "proposals.pf") + " --out " + q(d / "scene_sem.pf")) == 0);
  REQUIRE(cli("index --scene " + q(d / "scene_sem.pf") + " --m 4 --out " + q(d / "index.pf")) == 0);
  CHECK(cli("hits --manifest " + q(man) + " --scene " + q(d / "scene.pf") + " --view 1 --out " +
                q(d / "hits.pf")) == 0);
  CHECK(fs::exists(d / "hits.pf"));

  const profuse::RowMatrixf classes = profuse::matrix_from(profuse::read_tensor(syn / "classes.pf"), "classes");
  const Eigen::VectorXf e = classes.row(0).transpose();
  profuse::write_tensor(d / "q.pf", profuse::Tensor::from_f32({static_cast<std::uint64_t>(e.size())},
                                                              std::span<const float>(e.data(), e.size())));
  CHECK(cli("query --manifest " + q(man) + " --scene " + q(d / "scene_sem.pf") + " --index " +
                q(d / "index.pf") + " --embedding " + q(d / "q.pf") + " --view 0 --out " + q(d / "mask.pf")) == 0);
  const auto mask = profuse::read_tensor(d / "mask.pf");
  CHECK(mask.dtype == profuse::DType::u8);

  CHECK(cli("eval-select --manifest " + q(man) + " --scene " + q(d / "scene_sem.pf") + " --index " +
                q(d / "index.pf") + " --ground-truth " + q(syn / "ground_truth.pf") + " --out " + q(d / "eval")) == 0);
  CHECK(fs::exists(d / "eval" / "selection.txt"));
  CHECK(cli("eval-points --scene " + q(d / "scene_sem.pf") + " --points " + q(syn / "points.pf") +
                " --labels " + q(syn / "point_labels.pf") + " --classes " + q(syn / "classes.pf") + " --out " +
                q(d / "points.txt")) == 0);
  CHECK(fs::exists(d / "points.txt"));

  SUBCASE("corrupt input is a stage failure") {
    write(d / "scene.pf", "garbage");
    CHECK(cli("cluster --manifest " + q(man) + " --scene " + q(d / "scene.pf") + " --out " +
                  q(d / "p2.pf")) == 3);
  }
  SUBCASE("bad threshold is a config error") {
    CHECK(cli("cluster --manifest " + q(man) + " --scene " + q(d / "scene.pf") + " --out " +
                  q(d / "p2.pf") + " --s-min 0") == 2);
  }
  SUBCASE("missing input file") {
    CHECK(cli("index --scene " + q(d / "nope.pf") + " --out " + q(d / "i.pf")) == 3);
  }
}

TEST_CASE("run from a config, then rerun") {
  const fs::path d = profuse::fixture::scratch_dir("cli_run");
  write(d / "config.json",
        R"({"work_dir": "work", "synth": {"object_count": 3, "view_count": 4, "width": 96, "height": 72}})");
  CHECK(cli("--threads 2 --config " + q(d / "config.json") + " run") == 0);
  CHECK(fs::exists(d / "work" / "timing.txt"));
  CHECK(fs::exists(d / "work" / "eval" / "points.txt"));
  const auto before = fs::last_write_time(d / "work" / "index.pf");
  CHECK(cli("--config " + q(d / "config.json") + " run") == 0);
  CHECK(fs::last_write_time(d / "work" / "index.pf") == before);
  CHECK(cli("--force --config " + q(d / "config.json") + " run") == 0);
  write(d / "work" / "scene_sem.pf", "garbage");
  CHECK(cli("--config " + q(d / "config.json") + " run") == 3);
}
