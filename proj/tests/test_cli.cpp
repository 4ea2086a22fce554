#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "curvyilt/commands.hpp"
#include "support/smoke.hpp"

using namespace curvyilt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CURVYILT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path fresh_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config: parsing, overrides, and strict key validation") {
  std::istringstream in(
      "# comment\n"
      "[opt]\n"
      "T = 42\n"
      "learning_rate = 0.5\n"
      "cdr = false\n"
      "[epe]\n"
      "threshold_nm = 12\n");
  RunConfig rc = parse_run_config(in);
  CHECK(rc.opt.max_steps == 42);
  CHECK(rc.opt.learning_rate == 0.5);
  CHECK(rc.opt.enable_cdr == false);
  CHECK(rc.epe.threshold_nm == 12.0);

  apply_config_override(rc, "opt.T=7");
  CHECK(rc.opt.max_steps == 7);
  CHECK_THROWS_AS(apply_config_override(rc, "opt.bogus=1"), FormatError);
  CHECK_THROWS_AS(apply_config_override(rc, "no_equals"), FormatError);

  std::istringstream bad_key("[opt]\nnot_a_key = 3\n");
  CHECK_THROWS_AS(parse_run_config(bad_key), FormatError);
  std::istringstream bad_section("[nope]\nT = 3\n");
  CHECK_THROWS_AS(parse_run_config(bad_section), FormatError);
  std::istringstream no_section("T = 3\n");
  CHECK_THROWS_AS(parse_run_config(no_section), FormatError);
  std::istringstream bad_value("[opt]\nT = many\n");
  CHECK_THROWS_AS(parse_run_config(bad_value), FormatError);
}

TEST_CASE("kernel-gen output feeds make_litho_config") {
  const fs::path dir = fresh_dir("curvyilt_cli_kgen");
  KernelGenArgs kg;
  kg.freq_dim = 9;
  kg.sigma_freq = 2.0;
  kg.defocus_blur = 1.3;
  kg.out_prefix = (dir / "k").string();
  REQUIRE(cmd_kernel_gen(kg) == 0);

  RunConfig rc;
  rc.grid = GridSpec{32, 32, 1.0};
  rc.kernel_nominal_path = (dir / "k_nominal.iltk").string();
  rc.kernel_defocus_path = (dir / "k_defocus.iltk").string();
  const LithoConfig litho = make_litho_config(rc);
  CHECK(litho.corners.nominal.kernels.freq_dim == 9);
  CHECK(rc.opt.k_freq == 9);  // follows the kernel window when not set
  fs::remove_all(dir);
}

TEST_CASE("kernel-import: text to container") {
  const fs::path dir = fresh_dir("curvyilt_cli_kimp");
  const fs::path txt = dir / "k.txt";
  {
    std::ofstream out(txt);
    out << "1 3 nominal\n1.0\n";
    for (int i = 0; i < 9; ++i) out << (i == 4 ? "1 0\n" : "0.25 0\n");
  }
  KernelImportArgs ki;
  ki.text_path = txt.string();
  ki.out_path = (dir / "k.iltk").string();
  REQUIRE(cmd_kernel_import(ki) == 0);
  const KernelSet ks = load_kernel_set(ki.out_path);
  CHECK(ks.freq_dim == 3);
  CHECK(ks.resp(0, 1, 1) == std::complex<double>(1.0, 0.0));
  fs::remove_all(dir);
}

TEST_CASE("simulate: identity kernel prints the target exactly, runs deterministically") {
  const fs::path dir = fresh_dir("curvyilt_cli_sim");

  // identity kernel: full-grid window of ones on a 33-px grid
  KernelSet ident;
  ident.count = 1;
  ident.freq_dim = 33;
  ident.weights = {1.0};
  ident.responses.assign(33 * 33, {1.0, 0.0});
  save_kernel_set(ident, (dir / "ident.iltk").string());

  PolygonLayout layout;
  layout.polygons.push_back({{8, 8}, {24, 8}, {24, 24}, {8, 24}});
  save_layout(layout, (dir / "t.poly").string());
  const BinaryImage target = rasterize(layout, GridSpec{33, 33, 1.0});
  write_png_binary((dir / "mask.png").string(), target);

  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "[run]\noutput_dir = " << (dir / "out").string() << "\n"
        << "[grid]\nwidth_px = 33\nheight_px = 33\nnm_per_px = 1\n"
        << "[litho]\nkernel_nominal = " << (dir / "ident.iltk").string() << "\n"
        << "kernel_defocus = " << (dir / "ident.iltk").string() << "\n"
        << "d_th = 0.5\n";
  }

  SimulateArgs args;
  args.config_path = (dir / "run.cfg").string();
  args.mask_path = (dir / "mask.png").string();
  args.target_path = (dir / "t.poly").string();
  REQUIRE(cmd_simulate(args) == 0);

  const auto metrics = nlohmann::json::parse(slurp(dir / "out" / "metrics.json"));
  CHECK(metrics["mse"].get<double>() == 0.0);

  const BinaryImage resist = read_png_binary((dir / "out" / "resist_nominal.png").string());
  CHECK(resist.data == target.data);

  // byte-identical outputs on a second run
  const std::string first = slurp(dir / "out" / "aerial_nominal.pgm");
  REQUIRE(cmd_simulate(args) == 0);
  CHECK(slurp(dir / "out" / "aerial_nominal.pgm") == first);
  fs::remove_all(dir);
}

TEST_CASE("retarget: identity discs give an empty diff, rectangles change corners only") {
  const fs::path dir = fresh_dir("curvyilt_cli_ret");
  const smoke::CliSetup setup = smoke::write_cli_setup(dir);

  RetargetArgs args;
  args.config_path = setup.config.string();
  args.target_path = setup.layout.string();
  args.overrides = {"opt.k_cvx=1", "opt.k_ccv=1"};
  REQUIRE(cmd_retarget(args) == 0);
  const BinaryImage diff_empty =
      read_png_binary((dir / "out" / "retarget_diff.png").string());
  for (auto v : diff_empty.data) CHECK(v == 0);

  args.overrides = {"opt.k_cvx=7", "opt.k_ccv=7"};
  REQUIRE(cmd_retarget(args) == 0);
  const BinaryImage diff = read_png_binary((dir / "out" / "retarget_diff.png").string());
  // the clip is a square at (20,20)-(44,44): diffs confined to corner regions
  const int corners[4][2] = {{20, 20}, {20, 43}, {43, 20}, {43, 43}};
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      if (!diff(y, x)) continue;
      int cheb = 1 << 20;
      for (const auto& c : corners)
        cheb = std::min(cheb, std::max(std::abs(y - c[0]), std::abs(x - c[1])));
      CHECK(cheb <= 7);
    }
  fs::remove_all(dir);
}

TEST_CASE("optimize: smoke run emits mask, trace, metrics and snapshots") {
  const fs::path dir = fresh_dir("curvyilt_cli_opt");
  const smoke::CliSetup setup = smoke::write_cli_setup(dir);

  OptimizeArgs args;
  args.config_path = setup.config.string();
  args.target_path = setup.layout.string();
  args.overrides = {"opt.T=35"};
  REQUIRE(cmd_optimize(args) == 0);

  const fs::path out = dir / "out";
  CHECK(fs::exists(out / "final_mask.png"));
  CHECK(fs::exists(out / "cdr_target.png"));
  CHECK(fs::exists(out / "metrics.json"));
  CHECK(fs::exists(out / "mask_continuous.pgm"));
  CHECK(fs::exists(out / "snap_e10_mask.png"));
  CHECK(fs::exists(out / "snap_e20_nominal.png"));
  CHECK(fs::exists(out / "snap_e30_inner.png"));

  const std::string trace = slurp(out / "trace.csv");
  CHECK(trace.rfind("epoch,", 0) == 0);
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 36);  // header + 35 epochs

  const auto metrics = nlohmann::json::parse(slurp(out / "metrics.json"));
  CHECK(metrics["epe"].is_number_integer());  // layout input carries EPE
  fs::remove_all(dir);
}

TEST_CASE("optimize: ablation flags reproduce the baseline configuration") {
  const fs::path dir = fresh_dir("curvyilt_cli_ablate");
  const smoke::CliSetup setup = smoke::write_cli_setup(dir);

  RunConfig rc = load_run_config(setup.config.string());
  apply_config_override(rc, "opt.cdr=false");
  apply_config_override(rc, "opt.inloop_morph=false");
  CHECK(rc.opt.enable_cdr == false);
  CHECK(rc.opt.enable_inloop_morph == false);
  CHECK(rc.opt.enable_postproc_morph == true);  // baseline keeps post-processing

  OptimizeArgs args;
  args.config_path = setup.config.string();
  args.target_path = setup.layout.string();
  args.overrides = {"opt.T=8", "opt.cdr=false", "opt.inloop_morph=false"};
  REQUIRE(cmd_optimize(args) == 0);
  CHECK(!fs::exists(dir / "out" / "cdr_target.png"));  // no retargeting artifact
  fs::remove_all(dir);
}

TEST_CASE("bench: single clip average equals the clip row") {
  const fs::path dir = fresh_dir("curvyilt_cli_bench");
  const smoke::CliSetup setup = smoke::write_cli_setup(dir);

  BenchArgs args;
  args.config_path = setup.config.string();
  args.clip_paths = {setup.layout.string()};
  args.overrides = {"opt.T=12"};
  REQUIRE(cmd_bench(args) == 0);

  const std::string report = slurp(dir / "out" / "report.csv");
  std::istringstream lines(report);
  std::string header, clip_row, avg_row;
  std::getline(lines, header);
  std::getline(lines, clip_row);
  std::getline(lines, avg_row);
  CHECK(header == "case,mse,pv,epe,msa,msd,seconds");
  REQUIRE(clip_row.rfind("clip,", 0) == 0);
  REQUIRE(avg_row.rfind("average,", 0) == 0);

  // drop case and seconds: averages of one clip equal the row itself
  auto mid_fields = [](const std::string& row) {
    const auto first = row.find(',');
    const auto last = row.rfind(',');
    return row.substr(first + 1, last - first - 1);
  };
  CHECK(mid_fields(clip_row) == mid_fields(avg_row));
  CHECK(fs::exists(dir / "out" / "clip" / "final_mask.png"));
  fs::remove_all(dir);
}

TEST_CASE("bench: empty clip list is a config error") {
  BenchArgs args;
  CHECK_THROWS_AS(cmd_bench(args), ValidationError);
}

TEST_CASE("bench: average row is the arithmetic mean across clips") {
  const fs::path dir = fresh_dir("curvyilt_cli_bench2");
  const smoke::CliSetup setup = smoke::write_cli_setup(dir);

  // second clip: same square shifted, so metrics differ
  PolygonLayout shifted;
  shifted.polygons.push_back({{12, 12}, {36, 12}, {36, 36}, {12, 36}});
  save_layout(shifted, (dir / "clip2.poly").string());

  BenchArgs args;
  args.config_path = setup.config.string();
  args.clip_paths = {setup.layout.string(), (dir / "clip2.poly").string()};
  args.overrides = {"opt.T=10"};
  REQUIRE(cmd_bench(args) == 0);

  std::istringstream lines(slurp(dir / "out" / "report.csv"));
  std::string header, row1, row2, avg;
  std::getline(lines, header);
  std::getline(lines, row1);
  std::getline(lines, row2);
  std::getline(lines, avg);
  auto field = [](const std::string& row, int idx) {
    std::istringstream ls(row);
    std::string tok;
    for (int i = 0; i <= idx; ++i) std::getline(ls, tok, ',');
    return std::stod(tok);
  };
  REQUIRE(avg.rfind("average,", 0) == 0);
  for (int col = 1; col <= 4; ++col)  // mse, pv, epe, msa
    CHECK_THAT(field(avg, col),
               Catch::Matchers::WithinRel((field(row1, col) + field(row2, col)) / 2.0, 1e-9));
  fs::remove_all(dir);
}

TEST_CASE("cli exit codes: missing kernel file and empty bench") {
  const fs::path dir = fresh_dir("curvyilt_cli_exit");
  const smoke::CliSetup setup = smoke::write_cli_setup(dir);

  // config points at a kernel path that does not exist
  CHECK(run_cli("simulate --config " + setup.config.string() + " --mask nothere.png --set litho.kernel_nominal=" +
                (dir / "missing.iltk").string()) == 2);
  CHECK(run_cli("bench --config " + setup.config.string()) == 2);
  CHECK(run_cli("retarget --config definitely_missing.cfg --target x.poly") == 2);
  CHECK(run_cli("optimize --no-such-flag") == 2);
  CHECK(run_cli("--help") == 0);

  // --set consumes exactly one value, so trailing positionals survive
  CHECK(run_cli("bench --config " + setup.config.string() + " --set opt.T=4 " +
                setup.layout.string()) == 0);
  fs::remove_all(dir);
}
