#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <editgrpo/checkpoint.hpp>
#include <editgrpo/image_io.hpp>
#include <editgrpo/serialize.hpp>

#include "helpers.hpp"

using namespace editgrpo;
namespace fs = std::filesystem;

namespace {

struct TmpDir {
  fs::path path;
  TmpDir() {
    path = fs::temp_directory_path() / "editgrpo_test_io";
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
  std::string file(const char* name) const { return (path / name).string(); }
};

Arch small_arch() {
  Arch a;
  a.image_h = 4;
  a.image_w = 4;
  a.image_c = 3;
  a.time_embed_k = 2;
  a.condition_dim = 16;
  a.hidden = {8, 8};
  return a;
}

}  // namespace

TEST_CASE("checkpoint round-trip is bit exact, all optional blocks") {
  TmpDir tmp;
  RngState rng(1, streams::kInit);
  Checkpoint ck;
  ck.params = init_params(rng, small_arch());
  ck.has_ema = true;
  ck.ema = init_params(rng, small_arch());
  ck.has_optimizer = true;
  ck.opt_m = init_params(rng, small_arch());
  ck.opt_v = init_params(rng, small_arch());
  ck.opt_step = 123;
  ck.rng_seed = 77;
  ck.rng_counter = 991;
  ck.training_step = 4000;

  save_checkpoint(tmp.file("full.bin"), ck);
  Checkpoint rt = load_checkpoint(tmp.file("full.bin"));
  CHECK(rt.params.flatten() == ck.params.flatten());
  CHECK(rt.params.arch == ck.params.arch);
  REQUIRE(rt.has_ema);
  CHECK(rt.ema.flatten() == ck.ema.flatten());
  REQUIRE(rt.has_optimizer);
  CHECK(rt.opt_m.flatten() == ck.opt_m.flatten());
  CHECK(rt.opt_v.flatten() == ck.opt_v.flatten());
  CHECK(rt.opt_step == 123);
  CHECK(rt.rng_seed == 77);
  CHECK(rt.rng_counter == 991);
  CHECK(rt.training_step == 4000);

  // minimal checkpoint
  Checkpoint mini;
  mini.params = ck.params;
  save_checkpoint(tmp.file("mini.bin"), mini);
  Checkpoint rt2 = load_checkpoint(tmp.file("mini.bin"));
  CHECK(rt2.params.flatten() == ck.params.flatten());
  CHECK_FALSE(rt2.has_ema);
  CHECK_FALSE(rt2.has_optimizer);
}

TEST_CASE("re-saving a loaded checkpoint produces identical bytes") {
  TmpDir tmp;
  RngState rng(2, streams::kInit);
  Checkpoint ck;
  ck.params = init_params(rng, small_arch());
  ck.has_ema = true;
  ck.ema = init_params(rng, small_arch());
  save_checkpoint(tmp.file("a.bin"), ck);
  save_checkpoint(tmp.file("b.bin"), load_checkpoint(tmp.file("a.bin")));
  std::ifstream fa(tmp.file("a.bin"), std::ios::binary);
  std::ifstream fb(tmp.file("b.bin"), std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(fa)), {});
  std::string sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(sa == sb);
  CHECK_FALSE(sa.empty());
}

TEST_CASE("corrupt checkpoints are rejected") {
  TmpDir tmp;
  {
    std::ofstream f(tmp.file("bad.bin"), std::ios::binary);
    f << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(tmp.file("bad.bin")), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint(tmp.file("missing.bin")),
                  std::runtime_error);
}

TEST_CASE("PPM round-trip preserves byte-aligned intensities") {
  TmpDir tmp;
  Grid img(5, 7, 3);
  RngState rng(3, streams::kInit);
  for (auto& v : img.data)
    v = static_cast<double>(rng.next_u64() % 256) / 255.0;
  write_ppm(tmp.file("img.ppm"), img);
  Grid rt = read_ppm(tmp.file("img.ppm"));
  CHECK(rt.height == 5);
  CHECK(rt.width == 7);
  CHECK(rt.data == img.data);
}

TEST_CASE("PBM round-trip with width not divisible by 8") {
  TmpDir tmp;
  RngState rng(4, streams::kInit);
  RegionMask m = testutil::random_mask(rng, 9, 13);
  write_pbm(tmp.file("m.pbm"), m);
  RegionMask rt = read_pbm(tmp.file("m.pbm"));
  CHECK(rt.bits == m.bits);
  CHECK(rt.area == m.area);
}

TEST_CASE("task list save/load round-trip") {
  TmpDir tmp;
  EnvConfig cfg;
  RngState rng(5, streams::kEnv);
  std::vector<EditTask> tasks;
  for (int i = 0; i < 10; ++i) {
    tasks.push_back(generate_task(rng, cfg));
    tasks.back().id = i;
  }
  save_tasks(tmp.file("tasks.json"), tasks, 5);
  auto rt = load_tasks(tmp.file("tasks.json"), cfg);
  REQUIRE(rt.size() == tasks.size());
  for (size_t i = 0; i < tasks.size(); ++i) {
    CHECK(rt[i].source.data == tasks[i].source.data);
    CHECK(rt[i].target.data == tasks[i].target.data);
    CHECK(rt[i].gt_mask.bits == tasks[i].gt_mask.bits);
    CHECK(rt[i].condition == tasks[i].condition);
  }
}
