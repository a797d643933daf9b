// End-to-end checks through the wlst binary: exit codes, output layout, and
// byte determinism across reruns and worker counts.
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "wlst/kitti_io.hpp"

namespace fs = std::filesystem;

namespace {

const char* cli_path() { return WLST_CLI_PATH; }

int run(const std::string& args) {
  const std::string cmd = std::string(cli_path()) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wlst_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::map<std::string, std::string> dir_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), dir).string()] =
        std::string((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  }
  return out;
}

}  // namespace

TEST_CASE("dry run validates the config without touching outputs", "[cli]") {
  const fs::path dir = temp_dir("dry");
  wlst::write_text_file(dir / "cfg.json", R"({"seed": 3})");
  CHECK(run("simulate " + (dir / "out").string() + " --config " +
            (dir / "cfg.json").string() + " --dry-run") == 0);
  CHECK_FALSE(fs::exists(dir / "out"));

  wlst::write_text_file(dir / "bad.json", R"({"sneed": 3})");
  CHECK(run("simulate " + (dir / "out").string() + " --config " +
            (dir / "bad.json").string() + " --dry-run") != 0);
  CHECK(run("simulate " + (dir / "out").string() + " --config " +
            (dir / "missing.json").string()) != 0);
}

TEST_CASE("pipeline commands are byte deterministic", "[cli][slow]") {
  const fs::path root = temp_dir("pipe");
  const std::string cfg_flags = " --seed 17";

  // simulate twice into different dirs: identical bytes.
  const fs::path sim_a = root / "a";
  const fs::path sim_b = root / "b";
  REQUIRE(run("simulate " + sim_a.string() + " --frames 6 --det-out " +
              (sim_a / "det_label").string() + cfg_flags) == 0);
  REQUIRE(run("simulate " + sim_b.string() + " --frames 6 --det-out " +
              (sim_b / "det_label").string() + cfg_flags + " --jobs 4") == 0);
  const auto bytes_a = dir_bytes(sim_a);
  REQUIRE_FALSE(bytes_a.empty());
  CHECK(bytes_a == dir_bytes(sim_b));
  CHECK(bytes_a.count("velodyne/000000.bin") == 1);
  CHECK(bytes_a.count("label_2/000005.txt") == 1);
  CHECK(bytes_a.count("weak_label/000003.txt") == 1);
  CHECK(bytes_a.count("det_label/000001.txt") == 1);

  // autolabel: one output per frame, stable across reruns and job counts.
  const fs::path aut1 = root / "aut1";
  const fs::path aut2 = root / "aut2";
  REQUIRE(run("autolabel " + sim_a.string() + " " + aut1.string() + cfg_flags) == 0);
  REQUIRE(run("autolabel " + sim_a.string() + " " + aut2.string() + cfg_flags +
              " --jobs 4") == 0);
  const auto aut_bytes = dir_bytes(aut1);
  CHECK(aut_bytes.size() == 6);
  CHECK(aut_bytes == dir_bytes(aut2));

  // fuse det + aut with weak labels.
  const fs::path fus1 = root / "fus1";
  const fs::path fus2 = root / "fus2";
  const std::string fuse_args = (sim_a / "det_label").string() + " " +
                                aut1.string() + " " + (sim_a / "weak_label").string() +
                                " " + (sim_a / "calib").string() + " ";
  REQUIRE(run("fuse " + fuse_args + fus1.string() + cfg_flags) == 0);
  REQUIRE(run("fuse " + fuse_args + fus2.string() + cfg_flags + " --jobs 3") == 0);
  const auto fus_bytes = dir_bytes(fus1);
  CHECK(fus_bytes.count("fusion_stats.csv") == 1);
  CHECK(fus_bytes == dir_bytes(fus2));
  CHECK(fus_bytes.at("fusion_stats.csv").rfind("frame_id,n_u,n_v,matched,kept\n", 0) ==
        0);

  // eval of ground truth against itself is perfect.
  const fs::path ev = root / "eval";
  fs::create_directories(ev);
  const std::string eval_cmd =
      std::string(cli_path()) + " eval " + (sim_a / "label_2").string() + " " +
      (sim_a / "label_2").string() + " " + (sim_a / "calib").string() + " --pr-csv " +
      (ev / "pr.csv").string() + " > " + (ev / "report.txt").string() + " 2>/dev/null";
  REQUIRE(WEXITSTATUS(std::system(eval_cmd.c_str())) == 0);
  std::ifstream report(ev / "report.txt");
  std::string text((std::istreambuf_iterator<char>(report)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("AP_BEV          100") != std::string::npos);
  CHECK(text.find("AP_3D           100") != std::string::npos);
  CHECK(fs::exists(ev / "pr.csv"));

  // empty predictions give zero AP.
  const fs::path empty_pred = root / "empty_pred";
  fs::create_directories(empty_pred);
  const std::string eval2 =
      std::string(cli_path()) + " eval " + empty_pred.string() + " " +
      (sim_a / "label_2").string() + " " + (sim_a / "calib").string() + " > " +
      (ev / "report2.txt").string() + " 2>/dev/null";
  REQUIRE(WEXITSTATUS(std::system(eval2.c_str())) == 0);
  std::ifstream report2(ev / "report2.txt");
  std::string text2((std::istreambuf_iterator<char>(report2)),
                    std::istreambuf_iterator<char>());
  CHECK(text2.find("AP_BEV          0\n") != std::string::npos);
}

TEST_CASE("selftrain writes one CSV row per round deterministically", "[cli][slow]") {
  const fs::path root = temp_dir("st");
  wlst::write_text_file(root / "cfg.json",
                        R"({"selftrain": {"rounds": 2, "frames": 8,
                            "autolabeler_mode": "simulated"}})");
  const std::string common = " --config " + (root / "cfg.json").string() + " --seed 5";
  REQUIRE(run("selftrain --out " + (root / "r1").string() + common) == 0);
  REQUIRE(run("selftrain --out " + (root / "r2").string() + common + " --jobs 4") == 0);
  const auto a = dir_bytes(root / "r1");
  CHECK(a == dir_bytes(root / "r2"));
  const std::string& csv = a.at("selftrain_rounds.csv");
  CHECK(csv.rfind("round,recall07,precision07,ap_bev,ap_3d,det_size_bias,"
                  "aut_size_bias\n",
                  0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 rounds
}

TEST_CASE("broken inputs fail with nonzero exit", "[cli]") {
  const fs::path root = temp_dir("bad");
  REQUIRE(run("simulate " + (root / "sim").string() + " --frames 2 --seed 1") == 0);

  // Corrupt one calib file.
  wlst::write_text_file(root / "sim" / "calib" / "000001.txt", "P2: 1 2 3\n");
  CHECK(run("autolabel " + (root / "sim").string() + " " + (root / "out").string()) !=
        0);

  // Mismatched frame ids for fuse.
  const fs::path det = root / "det";
  fs::create_directories(det);
  wlst::write_text_file(det / "000000.txt", "");
  wlst::write_text_file(det / "000099.txt", "");
  CHECK(run("fuse " + det.string() + " " + det.string() + " " +
            (root / "sim" / "weak_label").string() + " " +
            (root / "sim" / "calib").string() + " " + (root / "fused").string()) != 0);

  // Missing dataset directory.
  CHECK(run("autolabel " + (root / "nowhere").string() + " " +
            (root / "out2").string()) != 0);
}

TEST_CASE("empty dataset is not an error", "[cli]") {
  const fs::path root = temp_dir("empty");
  fs::create_directories(root / "data" / "velodyne");
  CHECK(run("autolabel " + (root / "data").string() + " " + (root / "out").string()) ==
        0);
}
