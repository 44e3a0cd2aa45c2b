#include "svg.hpp"

#include "ptedit/denoiser.hpp"
#include "ptedit/pcb.hpp"
#include "ptedit/schema.hpp"
#include "ptedit/training.hpp"

#include "test_util.hpp"

#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace ptedit;

namespace {

const fs::path kWork = PTEDIT_CLI_WORK;

std::string
slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// exit status of the CLI; stdout and stderr go to <work>/last.log
int
run(const std::string& args)
{
  const std::string cmd = "cd '" + kWork.string() + "' && '" PTEDIT_CLI "' " + args + " > last.log 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string
log_text()
{
  return slurp(kWork / "last.log");
}

bool
same_tree(const fs::path& a, const fs::path& b)
{
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file())
      fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file())
      fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb || fa.empty())
    return false;
  for (const auto& f : fa)
    if (slurp(a / f) != slurp(b / f))
      return false;
  return true;
}

std::vector<nlohmann::json>
manifest(const fs::path& dir)
{
  std::vector<nlohmann::json> out;
  std::ifstream in(dir / "manifest.jsonl");
  for (std::string line; std::getline(in, line);)
    out.push_back(nlohmann::json::parse(line));
  return out;
}

const std::string kTiny = "--embed 16 --blocks 1 --heads 2";

// shared fixture: one small dataset and model for the whole file
struct Workspace {
  Workspace()
  {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    REQUIRE(run("gen-data --out data --n 40 --points 96 --split 0.8 --seed 5") == 0);
    REQUIRE(run("train --data data --out model.bpm --steps 6 --log-every 3 " + kTiny + " --seed 2") == 0);
    for (const auto& rec : manifest(kWork / "data"))
      if (rec["category"] == "chair" && rec["split"] == "test") {
        chair_source = rec["source"].get<std::string>();
        break;
      }
    REQUIRE(!chair_source.empty());
  }
  std::string chair_source;
};

const Workspace&
workspace()
{
  static const Workspace w;
  return w;
}

std::string
input_path()
{
  return "data/" + workspace().chair_source;
}

std::vector<std::pair<double, double>>
circles(const std::string& svg)
{
  std::vector<std::pair<double, double>> out;
  const std::regex re("<circle cx=\"([-0-9.]+)\" cy=\"([-0-9.]+)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it)
    out.emplace_back(std::stod((*it)[1]), std::stod((*it)[2]));
  return out;
}

double
aspect(const std::vector<std::pair<double, double>>& pts)
{
  double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
  for (auto [x, y] : pts) {
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  return (x1 - x0) / (y1 - y0);
}

} // namespace

TEST_CASE("usage errors")
{
  workspace();
  CHECK(run("") == 1);
  CHECK(run("frobnicate") == 1);
  CHECK(run("gen-data --out x --bogus 3") == 1);
  CHECK(run("render --input a.pcb") == 1); // missing --out
  CHECK(run("--help") == 0);
}

TEST_CASE("gen-data")
{
  workspace();
  SUBCASE("same seed gives identical directories")
  {
    REQUIRE(run("gen-data --out g1 --n 100 --points 64 --seed 1") == 0);
    REQUIRE(run("gen-data --out g2 --n 100 --points 64 --seed 1") == 0);
    CHECK(same_tree(kWork / "g1", kWork / "g2"));
    REQUIRE(run("gen-data --out g3 --n 100 --points 64 --seed 2") == 0);
    CHECK_FALSE(same_tree(kWork / "g1", kWork / "g3"));
  }
  SUBCASE("category filter")
  {
    REQUIRE(run("gen-data --out gc --n 12 --points 64 --categories chair") == 0);
    const auto recs = manifest(kWork / "gc");
    CHECK(recs.size() == 12);
    for (const auto& r : recs)
      CHECK(r["category"] == "chair");
  }
  SUBCASE("split fraction")
  {
    REQUIRE(run("gen-data --out gs --n 100 --points 64 --split 0.9") == 0);
    int train = 0, test = 0;
    for (const auto& r : manifest(kWork / "gs"))
      (r["split"] == "train" ? train : test) += 1;
    CHECK(train == 90);
    CHECK(test == 10);
    CHECK(log_text().find("train 90, test 10") != std::string::npos);
  }
  SUBCASE("unwritable output")
  {
    std::ofstream(kWork / "blocker") << "x";
    CHECK(run("gen-data --out blocker/sub --n 3 --points 64") == 2);
  }
}

TEST_CASE("train")
{
  workspace();
  SUBCASE("zero steps writes the initialization")
  {
    REQUIRE(run("train --data data --out zero.bpm --steps 0 " + kTiny + " --seed 4") == 0);
    const auto ck = read_checkpoint(kWork / "zero.bpm");
    CHECK(ck.step == 0);
    TrainConfig c;
    c.model = DenoiserConfig{ Vocabulary::builtin().size(), 16, 1, 2 };
    c.steps = 0;
    c.seed = 4;
    const auto ref = train(c, training_examples(load_dataset(kWork / "data"))).model;
    REQUIRE(ck.model.tensors().size() == ref.tensors().size());
    for (std::size_t i = 0; i < ref.tensors().size(); ++i)
      CHECK(ck.model.tensors()[i].value == ref.tensors()[i].value);
  }
  SUBCASE("bit reproducible and logs a loss curve")
  {
    REQUIRE(run("train --data data --out again.bpm --steps 6 --log-every 3 " + kTiny + " --seed 2") == 0);
    CHECK(log_text().find("step 6 loss") != std::string::npos);
    CHECK(slurp(kWork / "again.bpm") == slurp(kWork / "model.bpm"));
    CHECK(read_checkpoint(kWork / "again.bpm").step == 6);
  }
  SUBCASE("defaults")
  {
    REQUIRE(run("train --help") == 0);
    const auto help = log_text();
    CHECK(std::regex_search(help, std::regex(R"(--t\s+INT \[64\])")));
    CHECK(std::regex_search(help, std::regex(R"(--p-recon\s+FLOAT \[0\.1\])")));
    CHECK(std::regex_search(help, std::regex(R"(--p-text\s+FLOAT \[0\.5\])")));
  }
  SUBCASE("divergence exits 3")
  {
    CHECK(run("train --data data --out bad.bpm --steps 50 --lr 1e30 " + kTiny) == 3);
  }
  SUBCASE("missing data exits 2")
  {
    CHECK(run("train --data nowhere --out x.bpm --steps 1") == 2);
  }
}

TEST_CASE("edit")
{
  workspace();
  const std::string base = "edit --model model.bpm --input " + input_path();
  SUBCASE("prompt without a part and no mask fails closed")
  {
    CHECK(run(base + " --prompt 'it has larger height' --out e0.pcb") == 4);
    CHECK_FALSE(fs::exists(kWork / "e0.pcb"));
  }
  SUBCASE("unlabeled input without a mask fails closed")
  {
    const auto rec = read_pcb_file(kWork / input_path());
    write_pcb_file(kWork / "bare.pcb", PcbRecord{ PointCloud(rec.cloud.points), std::nullopt });
    CHECK(run("edit --model model.bpm --input bare.pcb --prompt 'the target has thicker legs' --out e1.pcb") == 4);
    CHECK_FALSE(fs::exists(kWork / "e1.pcb"));
  }
  SUBCASE("labels give the mask; output is bit reproducible")
  {
    const std::string cmd = "edit --model model.bpm --input " + input_path() + " --prompt 'the target has thicker legs'";
    REQUIRE(run(cmd + " --out a.pcb --seed 9") == 0);
    CHECK(log_text().find("part: leg") != std::string::npos);
    REQUIRE(run(cmd + " --out b.pcb --seed 9") == 0);
    CHECK(slurp(kWork / "a.pcb") == slurp(kWork / "b.pcb"));

    const auto in = read_pcb_file(kWork / input_path());
    const auto out = read_pcb_file(kWork / "a.pcb");
    REQUIRE(out.mask.has_value());
    CHECK(out.cloud.labels == in.cloud.labels);
    const auto leg = *schema(Category::Chair).part_label("leg");
    for (std::size_t i = 0; i < in.cloud.size(); ++i)
      if (in.cloud.labels[i] == leg)
        CHECK((*out.mask)[i]);
  }
  SUBCASE("explicit mask file")
  {
    const auto in = read_pcb_file(kWork / input_path());
    std::ofstream m(kWork / "mask.txt");
    for (std::size_t i = 0; i < in.cloud.size(); ++i)
      m << (i < 10 ? "1\n" : "0\n");
    m.close();
    REQUIRE(run("edit --model model.bpm --input " + input_path() +
                " --prompt 'it has larger height' --mask mask.txt --out c.pcb") == 0);
    CHECK(log_text().find("mask: 10 of") != std::string::npos);
    std::ofstream(kWork / "short.txt") << "1 0 1\n";
    CHECK(run("edit --model model.bpm --input " + input_path() + " --prompt x --mask short.txt --out d.pcb") == 2);
  }
  SUBCASE("default t_r")
  {
    REQUIRE(run("edit --help") == 0);
    CHECK(std::regex_search(log_text(), std::regex(R"(--tr\s+INT \[20\])")));
  }
  SUBCASE("missing input exits 2")
  {
    CHECK(run("edit --model model.bpm --input none.pcb --prompt legs --out x.pcb") == 2);
  }
}

TEST_CASE("eval and ablate")
{
  workspace();
  const std::string common = "--model model.bpm --data data --classifier clf.bin";
  SUBCASE("eval is bit reproducible")
  {
    REQUIRE(run("eval " + common + " --out r1.json --seed 3") == 0);
    REQUIRE(run("eval " + common + " --out r2.json --seed 3") == 0);
    CHECK(slurp(kWork / "r1.json") == slurp(kWork / "r2.json"));
    const auto j = nlohmann::json::parse(slurp(kWork / "r1.json"));
    CHECK(j["params"]["t_r"] == 20);
    CHECK(j["params"]["T"] == 64);
  }
  SUBCASE("t_r sweep gives one report per value")
  {
    REQUIRE(run("ablate " + common + " --param tr --values 0,20,64 --out sweep") == 0);
    for (const char* v : { "0", "20", "64" })
      CHECK(fs::exists(kWork / "sweep" / (std::string("report_tr_") + v + ".json")));
    const auto table = nlohmann::json::parse(slurp(kWork / "sweep" / "sweep.json"));
    REQUIRE(table["rows"].size() == 3);
    CHECK(table["rows"][0]["flags"].empty());
    CHECK(table["rows"][2]["flags"] == nlohmann::json::array({ "inpaint-at-every-step" }));
    const auto r64 = nlohmann::json::parse(slurp(kWork / "sweep" / "report_tr_64.json"));
    CHECK(r64["flags"] == nlohmann::json::array({ "inpaint-at-every-step" }));

    // the sweep plot
    REQUIRE(run("render --input sweep/sweep.json --out sweep.svg --metrics gd,lgd") == 0);
    const auto svg = slurp(kWork / "sweep.svg");
    CHECK(svg.find("viewBox=\"0 0 512 512\"") != std::string::npos);
    CHECK(circles(svg).size() == 6);
  }
  SUBCASE("default recon-pct values")
  {
    REQUIRE(run("ablate --help") == 0);
    REQUIRE(run("ablate --data data --classifier clf.bin --param recon-pct --train-steps 1 --limit 1 " + kTiny +
                " --out pct") == 0);
    const auto table = nlohmann::json::parse(slurp(kWork / "pct" / "sweep.json"));
    std::vector<std::string> values;
    for (const auto& r : table["rows"])
      values.push_back(r["value"]);
    CHECK(values == std::vector<std::string>{ "0", "5", "10", "25", "50" });
    CHECK(fs::exists(kWork / "pct" / "model_recon_25.bpm"));
  }
  SUBCASE("repaint grid")
  {
    REQUIRE(run("ablate " + common + " --param repaint --values 1:1,2:2 --limit 2 --out rp") == 0);
    CHECK(fs::exists(kWork / "rp" / "report_repaint_2x2.json"));
    CHECK(run("ablate " + common + " --param repaint --values 3 --out rp2") == 1);
  }
  SUBCASE("bad parameter")
  {
    CHECK(run("ablate " + common + " --param lr --out bad") == 1);
    CHECK(run("ablate " + common + " --param tr --values 65 --out bad") == 1);
  }
}

TEST_CASE("render")
{
  workspace();
  // a 4 x 1 x 1 box: elongated along x
  Points p = testutil::random_points(200, 7);
  p.col(0) *= 4.0;
  std::vector<PartLabel> labels(200);
  for (std::size_t i = 0; i < labels.size(); ++i)
    labels[i] = static_cast<PartLabel>(i % 3);
  write_pcb_file(kWork / "long.pcb", PcbRecord{ PointCloud(p, labels), EditMask::filled(200, false) });

  SUBCASE("deterministic")
  {
    REQUIRE(run("render --input long.pcb --out r1.svg") == 0);
    REQUIRE(run("render --input long.pcb --out r2.svg") == 0);
    CHECK(slurp(kWork / "r1.svg") == slurp(kWork / "r2.svg"));
    const auto svg = slurp(kWork / "r1.svg");
    CHECK(svg.find("viewBox=\"0 0 512 512\"") != std::string::npos);
    CHECK(circles(svg).size() == 200);
  }
  SUBCASE("all-false mask is drawn in one color")
  {
    REQUIRE(run("render --input long.pcb --out m.svg --color-by mask") == 0);
    const auto svg = slurp(kWork / "m.svg");
    const std::regex fill("<circle[^>]*fill=\"(#[0-9a-f]+)\"");
    std::set<std::string> colors;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), fill); it != std::sregex_iterator(); ++it)
      colors.insert((*it)[1]);
    CHECK(colors.size() == 1);

    REQUIRE(run("render --input long.pcb --out parts.svg --color-by part") == 0);
    const auto parts = slurp(kWork / "parts.svg");
    colors.clear();
    for (auto it = std::sregex_iterator(parts.begin(), parts.end(), fill); it != std::sregex_iterator(); ++it)
      colors.insert((*it)[1]);
    CHECK(colors.size() == 3);
  }
  SUBCASE("front and side views of an elongated shape differ in aspect")
  {
    REQUIRE(run("render --input long.pcb --out front.svg --view front") == 0);
    REQUIRE(run("render --input long.pcb --out side.svg --view side") == 0);
    const double front = aspect(circles(slurp(kWork / "front.svg")));
    const double side = aspect(circles(slurp(kWork / "side.svg")));
    CHECK(front > 3.0);
    CHECK(side < 1.5);
    // the projection itself, without SVG rounding
    CHECK(aspect(tools::project(p, tools::View::Front)) == doctest::Approx(front).epsilon(0.01));
  }
  SUBCASE("errors")
  {
    CHECK(run("render --input long.pcb --out x.svg --view back") == 1);
    CHECK(run("render --input missing.pcb --out x.svg") == 2);
    std::ofstream(kWork / "junk.pcb") << "not a cloud";
    CHECK(run("render --input junk.pcb --out x.svg") == 2);
  }
}
