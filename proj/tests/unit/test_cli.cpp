#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome run(const std::string& args) {
  const std::string cmd = std::string(ED_CLI_PATH) + " " + args + " 2>/dev/null";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return o;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) o.out.append(buf, n);
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_ppm(const fs::path& path, const ed::RawImage& img) {
  std::ofstream out(path, std::ios::binary);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

class Cli : public testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(testing::TempDir()) / ("ed_cli_" + std::string(testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write_ppm(dir_ / "scene.ppm", test::bright_quadrant(600, 800));
    for (int i = 0; i < 5; ++i) write_ppm(dir_ / ("img" + std::to_string(i) + ".ppm"), test::noise(300 + 60 * i, 500, i));
  }

  std::string p(const std::string& name) const { return (dir_ / name).string(); }
  std::string manifest(const std::string& name = "manifest.json") const { return " --manifest " + p(name); }

  void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, DecodePrintsTextAndWritesManifest) {
  const auto o = run("decode --image " + p("scene.ppm") + " --prompt 'Is there a dog in the image?' --sampling greedy --seed 7 --max-tokens 12"
                     " --backend-options '{\"seed\": 7}'" +
                     manifest());
  ASSERT_EQ(o.code, 0);
  EXPECT_EQ(o.out, "car there in in two bicycle are boat some in book in\n");
  const auto m = json::parse(slurp(dir_ / "manifest.json"));
  EXPECT_EQ(m["command"], "decode");
  EXPECT_EQ(m["config"]["mode"], "ed");
  EXPECT_EQ(m["config"]["seed"], 7);
  EXPECT_EQ(m["backend"], "synthetic");
  EXPECT_TRUE(m.contains("engine_version"));
  EXPECT_TRUE(m.contains("started_at"));
}

TEST_F(Cli, FastEdTraceShowsTwoForwardsPerStep) {
  const auto o = run("decode --mode fasted --image " + p("scene.ppm") + " --prompt hi --max-tokens 6 --trace " +
                     p("trace.jsonl") + manifest());
  ASSERT_EQ(o.code, 0);
  EXPECT_FALSE(o.out.empty());
  std::istringstream lines(slurp(dir_ / "trace.jsonl"));
  std::string line;
  int steps = 0;
  while (std::getline(lines, line)) {
    EXPECT_EQ(json::parse(line)["forwards"], 2);
    ++steps;
  }
  EXPECT_GT(steps, 0);
}

TEST_F(Cli, ExitCodesByErrorKind) {
  const std::string img = " --image " + p("scene.ppm") + " --prompt hi" + manifest();
  EXPECT_EQ(run("decode --alpha 1.5" + img).code, 2);
  EXPECT_EQ(run("decode --mode beam" + img).code, 2);
  EXPECT_EQ(run("decode --n 3" + img).code, 2);
  EXPECT_EQ(run("decode --image " + p("missing.png") + " --prompt hi" + manifest()).code, 3);
  EXPECT_EQ(run("decode --backend carrier-pigeon" + img).code, 4);
  EXPECT_EQ(run("decode --bogus-flag" + img).code, 2);
  // config errors surface before any file is touched
  EXPECT_FALSE(fs::exists(dir_ / "manifest.json"));
}

TEST_F(Cli, ConfigFileAndFlagPrecedence) {
  write("cfg.json", R"({"alpha": 0.2, "beta": 0.1, "mode": "fasted"})");
  ASSERT_EQ(run("decode --config " + p("cfg.json") + " --alpha 0.3 --image " + p("scene.ppm") + " --prompt hi --max-tokens 2" +
                manifest())
                .code,
            0);
  const auto m = json::parse(slurp(dir_ / "manifest.json"));
  EXPECT_EQ(m["config"]["alpha"], 0.3);
  EXPECT_EQ(m["config"]["beta"], 0.1);
  EXPECT_EQ(m["config"]["mode"], "fasted");
  write("bad.json", R"({"gamma": 1})");
  EXPECT_EQ(run("decode --config " + p("bad.json") + " --image " + p("scene.ppm") + " --prompt hi" + manifest()).code, 2);
}

TEST_F(Cli, PopeFixtureWithKnownAnswers) {
  // TP 3, FP 1, FN 1, TN 5
  std::string rows;
  const std::pair<const char*, const char*> items[] = {
      {"yes", "Yes, there is."}, {"yes", "yes"}, {"yes", "Yes"},      {"no", "Yes."},  {"yes", "No."},
      {"no", "no"},              {"no", "No, there is not."}, {"no", "no"}, {"no", "No"}, {"no", "no."}};
  int id = 0;
  for (const auto& [label, answer] : items) {
    rows += json{{"id", id++}, {"image", "scene.ppm"}, {"question", "Is there a dog in the image?"}, {"label", label},
                 {"answer", answer}}
                .dump() +
            "\n";
  }
  write("pope.jsonl", rows);
  const auto o = run("eval-pope --answers-given --dataset " + p("pope.jsonl") + " --csv " + p("pope.csv") + manifest());
  ASSERT_EQ(o.code, 0);
  const auto j = json::parse(o.out);
  EXPECT_EQ(j["precision"], 75.0);
  EXPECT_EQ(j["recall"], 75.0);
  EXPECT_EQ(j["f1"], 75.0);
  EXPECT_EQ(j["accuracy"], 80.0);
  EXPECT_EQ(j["counts"]["tp"], 3);
  EXPECT_EQ(j["counts"]["tn"], 5);
  EXPECT_NE(slurp(dir_ / "pope.csv").find("accuracy,80"), std::string::npos);
}

TEST_F(Cli, PopeThroughBackendMatchesScoredAnswers) {
  std::string rows;
  for (int i = 0; i < 10; ++i) {
    rows += json{{"id", i}, {"image", "img" + std::to_string(i % 5) + ".ppm"},
                 {"question", "Is there a car in the image?"}, {"label", i % 2 ? "yes" : "no"}}
                .dump() +
            "\n";
  }
  write("pope.jsonl", rows);
  const std::string base = "eval-pope --dataset " + p("pope.jsonl") + " --images-dir " + dir_.string() + " --max-tokens 3";
  const auto ed_run = run(base + " --mode ed --answers " + p("answers.jsonl") + manifest("ed.json"));
  ASSERT_EQ(ed_run.code, 0);
  const auto regular = run(base + " --mode regular" + manifest("regular.json"));
  ASSERT_EQ(regular.code, 0);
  EXPECT_EQ(json::parse(slurp(dir_ / "ed.json"))["config"]["mode"], "ed");
  EXPECT_EQ(json::parse(slurp(dir_ / "regular.json"))["config"]["mode"], "regular");

  // re-score the recorded answers without a backend
  std::istringstream answers(slurp(dir_ / "answers.jsonl"));
  std::istringstream dataset(rows);
  std::string a, d, merged;
  while (std::getline(answers, a) && std::getline(dataset, d)) {
    auto row = json::parse(d);
    row["answer"] = json::parse(a)["answer"];
    merged += row.dump() + "\n";
  }
  write("scored.jsonl", merged);
  const auto rescored = run("eval-pope --answers-given --dataset " + p("scored.jsonl") + manifest("s.json"));
  ASSERT_EQ(rescored.code, 0);
  EXPECT_EQ(json::parse(rescored.out), json::parse(ed_run.out));
}

TEST_F(Cli, EmptyDatasetIsInputError) {
  write("empty.jsonl", "");
  EXPECT_EQ(run("eval-pope --dataset " + p("empty.jsonl") + manifest()).code, 3);
  EXPECT_EQ(run("eval-chair --dataset " + p("empty.jsonl") + manifest()).code, 3);
}

TEST_F(Cli, ChairFixtureWithGivenCaptions) {
  write("chair.jsonl",
        json{{"image", "a"}, {"caption", "A dog and a cat sit next to a car."}, {"gt_objects", {"dog", "cat"}}}.dump() + "\n" +
            json{{"image", "b"}, {"caption", "Two people ride bicycles on the street."}, {"gt_objects", {"person", "bicycle"}}}
                .dump() +
            "\n" +
            json{{"image", "c"}, {"caption", "A pizza on a dining table."}, {"gt_objects", {"pizza", "dining table", "cup"}}}
                .dump() +
            "\n");
  const auto o = run("eval-chair --captions-given --dataset " + p("chair.jsonl") + manifest());
  ASSERT_EQ(o.code, 0);
  const auto j = json::parse(o.out);
  EXPECT_DOUBLE_EQ(j["chair_s"].get<double>(), 100.0 / 3.0);
  EXPECT_DOUBLE_EQ(j["chair_i"].get<double>(), 100.0 / 7.0);
  EXPECT_DOUBLE_EQ(j["recall"].get<double>(), 100.0 * (8.0 / 3.0) / 3.0);
  EXPECT_DOUBLE_EQ(j["avg_length"].get<double>(), 23.0 / 3.0);
  EXPECT_EQ(run("eval-chair --captions-given --synonyms " + p("nope.txt") + " --dataset " + p("chair.jsonl") + manifest()).code, 2);
}

TEST_F(Cli, ChairPromptOverrideIsRecorded) {
  write("chair.jsonl", json{{"image", "img0.ppm"}, {"gt_objects", {"dog"}}}.dump() + "\n");
  const auto o = run("eval-chair --dataset " + p("chair.jsonl") + " --images-dir " + dir_.string() +
                     " --prompt 'List the objects.' --max-tokens 4" + manifest());
  ASSERT_EQ(o.code, 0);
  const auto m = json::parse(slurp(dir_ / "manifest.json"));
  EXPECT_EQ(m["inputs"]["prompt"], "List the objects.");
  EXPECT_EQ(m["config"]["tau"], 1e-4);
}

TEST_F(Cli, BenchForwardRatioAndCsv) {
  std::string list;
  for (int i = 0; i < 5; ++i) list += p("img" + std::to_string(i) + ".ppm") + "\n";
  write("images.txt", list);
  const auto o = run("bench --dataset " + p("images.txt") + " --max-tokens 8 --csv " + p("bench.csv") + " --plot-dir " +
                     p("plots") + manifest());
  ASSERT_EQ(o.code, 0);
  const auto j = json::parse(o.out);
  EXPECT_EQ(j["modes"]["ed"]["forwards_per_token"], 5.0);
  EXPECT_EQ(j["modes"]["fasted"]["forwards_per_token"], 2.0);
  EXPECT_EQ(j["modes"]["regular"]["forwards_per_token"], 1.0);
  EXPECT_EQ(j["forward_ratio_ed_fasted"], 2.5);
  EXPECT_TRUE(fs::exists(dir_ / "plots" / "latency.svg"));
  EXPECT_TRUE(fs::exists(dir_ / "plots" / "forwards_per_token.svg"));

  write("one.txt", p("img0.ppm") + "\n");
  ASSERT_EQ(run("bench --dataset " + p("one.txt") + " --max-tokens 4 --csv " + p("one.csv") + manifest()).code, 0);
  const auto csv = slurp(dir_ / "one.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);  // header plus one row
  EXPECT_EQ(run("bench --modes ed,beam --dataset " + p("one.txt") + manifest()).code, 2);
}

TEST_F(Cli, ReplayReproducesOutputByteForByte) {
  const auto first = run("decode --image " + p("scene.ppm") + " --prompt 'Describe it.' --seed 11 --max-tokens 16" + manifest());
  ASSERT_EQ(first.code, 0);
  for (int i = 0; i < 2; ++i) {
    const auto again = run("replay " + p("manifest.json") + " --manifest-out " + p("replayed.json"));
    ASSERT_EQ(again.code, 0);
    EXPECT_EQ(again.out, first.out);
  }
}

TEST_F(Cli, TileCommandReportsGeometry) {
  const auto o = run("tile --image " + p("scene.ppm"));
  ASSERT_EQ(o.code, 0);
  const auto j = json::parse(o.out);
  EXPECT_EQ(j["original"]["width"], 448);
  ASSERT_EQ(j["tiles"].size(), 4u);
  EXPECT_EQ(j["tiles"][3]["x"], 112);
  EXPECT_EQ(j["tiles"][3]["y"], 112);
}

TEST_F(Cli, ConformanceAgainstBothTransports) {
  EXPECT_EQ(run("conformance").code, 0);
  EXPECT_EQ(run("conformance --backend 'subprocess:" + std::string(ED_CLI_PATH) + " serve-synthetic'").code, 0);
}
