#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "../tools/cli.hpp"

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args, const std::string& stdin_text = "") {
  args.insert(args.begin(), "obdtool");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::istringstream in(stdin_text);
  std::ostringstream out, err;
  const int code = obdtool::run(static_cast<int>(argv.size()), argv.data(), in, out, err);
  return {code, out.str(), err.str()};
}

obdtool::json json_of(const Result& r) { return obdtool::json::parse(r.out); }

const std::string kSamples = OBD_SAMPLES_DIR;
const std::string kFa = kSamples + "/fa.net";

}  // namespace

TEST(Cli, Parse) {
  const auto r = run({"--deterministic", "parse", kFa});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json_of(r);
  EXPECT_EQ(j["gates"], 25);
  EXPECT_EQ(j["depth"], 9);
  EXPECT_EQ(j["counts_by_kind"]["nand2"], 14);
  EXPECT_EQ(j["manifest"]["tool"], "obdtool");
  EXPECT_TRUE(j["manifest"]["timestamp"].is_null());
  EXPECT_EQ(j["manifest"]["inputs"][0]["sha256"].get<std::string>().size(), 64u);
}

TEST(Cli, Sha256KnownAnswer) {
  EXPECT_EQ(obdtool::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Cli, MissingFileIsDomainError) {
  const auto r = run({"parse", "missing.net"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("missing.net"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"parse"}).code, 2);
  EXPECT_EQ(run({"atpg", kFa, "--backtracks", "zero"}).code, 2);
  const auto help = run({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("localtests"), std::string::npos);
}

TEST(Cli, NetlistErrorIsDomainError) {
  const auto path = std::filesystem::temp_directory_path() / "obdtool_bad.net";
  std::ofstream(path) << "input A\noutput Y\nnand2 g1 A Y\n";
  const auto r = run({"parse", path.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("3:"), std::string::npos);
}

TEST(Cli, Networks) {
  const auto j = json_of(run({"networks", "nor2"}));
  EXPECT_EQ(j["pull_up"], "(series PA PB)");
  EXPECT_EQ(j["pull_down"], "(parallel NA NB)");
  EXPECT_EQ(run({"networks", "xor2"}).code, 1);
}

TEST(Cli, LocalTests) {
  const auto j = json_of(run({"localtests", "nand2"}));
  EXPECT_EQ(j["size"], 3);
  EXPECT_EQ(j["pairs"].size(), 3u);
  EXPECT_EQ(j["excitation"]["PA"].size(), 1u);
}

TEST(Cli, Faults) {
  const auto j = json_of(run({"faults", kFa, "--kinds", "nand2"}));
  EXPECT_EQ(j["count"], 56);
  EXPECT_EQ(j["sites"][0], "n1.NA");
}

TEST(Cli, OraclePipedIntoMinset) {
  const auto oracle = run({"oracle", kFa, "--kinds", "nand2"});
  ASSERT_EQ(oracle.code, 0) << oracle.err;
  const auto piped = run({"minset"}, oracle.out);
  ASSERT_EQ(piped.code, 0) << piped.err;
  const auto direct = run({"minset", kFa, "--kinds", "nand2"});
  const auto a = json_of(piped), b = json_of(direct);
  EXPECT_EQ(a["size"], 16);
  EXPECT_EQ(a["pairs"], b["pairs"]);
  EXPECT_TRUE(a["exact"].get<bool>());
  EXPECT_EQ(run({"minset"}, "{\"sites\": []}").code, 1);
}

TEST(Cli, CoverAndAtpgRoundTrip) {
  const auto tests_path = (std::filesystem::temp_directory_path() / "obdtool_tests.json").string();
  const auto atpg = run({"atpg", kFa, "--tests-out", tests_path});
  ASSERT_EQ(atpg.code, 0) << atpg.err;
  const auto cover = json_of(run({"cover", kFa, "--tests", tests_path}));
  EXPECT_DOUBLE_EQ(cover["fraction"].get<double>(), 1.0);
  const auto bad = run({"cover", kFa, "--tests", kSamples + "/fa.net"});
  EXPECT_EQ(bad.code, 1);
}

TEST(Cli, AtpgSingleSite) {
  const auto j = json_of(run({"atpg", kFa, "--site", "n14.NA"}));
  ASSERT_EQ(j["results"].size(), 1u);
  EXPECT_EQ(j["results"][0]["status"], "found");
  EXPECT_EQ(run({"atpg", kFa, "--site", "n99.NA"}).code, 1);
}

TEST(Cli, UntestableOnlyRunExitsZero) {
  const auto r = run({"atpg", kFa, "--site", "n7.NA"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json_of(r)["results"][0]["status"], "untestable");
}

TEST(Cli, DeviceTableCsv) {
  const auto r = run({"device", "table", "--kind", "nand2"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 6u);
  EXPECT_EQ(lines[0].substr(0, 6), "stage,");
  EXPECT_NE(lines[5].find("sa-1"), std::string::npos);
  EXPECT_NE(lines[4].find("sa-0"), std::string::npos);
}

TEST(Cli, DeviceConfigChangesDigest) {
  const auto r = run({"device", "--config", kSamples + "/device.cfg", "vtc", "--points", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, 11), "v_in,v_out\n");
  EXPECT_EQ(run({"device", "--config", "nope.cfg", "vtc"}).code, 1);
}

TEST(Cli, DeviceWave) {
  const auto r = run({"device", "wave", "--site", "NA", "--stage", "mbd2", "--pair", "01,11"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, 16), "time_s,net,volts");
  EXPECT_NE(r.out.find(",Y,"), std::string::npos);
  EXPECT_EQ(run({"device", "wave", "--site", "NC", "--pair", "01,11"}).code, 1);
  EXPECT_EQ(run({"device", "wave", "--site", "NA", "--pair", "0111"}).code, 1);
}

TEST(Cli, Window) {
  const auto r = run({"--deterministic", "window", "--site", "NA", "--pair", "01,11", "--slack", "150ps"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json_of(r);
  EXPECT_FALSE(j["empty"].get<bool>());
  EXPECT_LT(j["interval_s"].get<double>(), 27 * 3600.0);
  EXPECT_NEAR(j["interval_s"].get<double>(), 0.5 * j["width_s"].get<double>(), 1e-6);
  EXPECT_EQ(run({"window", "--site", "NA", "--pair", "01,11", "--slack", "1ps"}).code, 1);
  EXPECT_EQ(run({"window", "--site", "NA", "--pair", "01,11", "--slack", "soon"}).code, 1);
}

TEST(Cli, DeterministicOutput) {
  const auto a = run({"--deterministic", "oracle", kFa});
  const auto b = run({"--deterministic", "oracle", kFa});
  EXPECT_EQ(a.out, b.out);
}

TEST(Cli, PrettyIsNotJson) {
  const auto r = run({"--pretty", "parse", kFa});
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("gates: 25"), std::string::npos);
}
