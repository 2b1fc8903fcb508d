#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <sstream>

#include "cellscript/graph.hpp"

using namespace cellscript;

namespace {

const std::string kDemo = CELLSCRIPT_DEMO_DIR;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool has_code(const std::vector<Diagnostic>& ds, const std::string& code) {
  for (const auto& d : ds) {
    if (d.code == code) return true;
  }
  return false;
}

}  // namespace

TEST(Corpus, MalformedProgramsReportExpectedCode) {
  const Json expected = Json::parse(slurp(kDemo + "/malformed/expected.json"));
  ASSERT_GE(expected.size(), 20u);
  std::set<std::string> codes;
  for (const auto& [file, code] : expected.items()) {
    const auto res = load_any(slurp(kDemo + "/malformed/" + file));
    EXPECT_FALSE(res.ok()) << file;
    EXPECT_FALSE(res.program.has_value()) << file;
    EXPECT_TRUE(has_code(res.diagnostics, code.get<std::string>())) << file << " expected " << code;
    codes.insert(code.get<std::string>());
  }
  EXPECT_GE(codes.size(), 20u);
}

TEST(Corpus, PlanLoopHasSingleDiagnostic) {
  const auto res = load_any(slurp(kDemo + "/malformed/plan_routine_loop.json"));
  ASSERT_EQ(res.diagnostics.size(), 1u);
  EXPECT_EQ(res.diagnostics[0].code, "PR_LOOP");
  EXPECT_EQ(res.diagnostics[0].witness, (std::vector<std::string>{"again", "n2", "n3"}));
}

TEST(Corpus, DemosValidateCleanQuickly) {
  const Json manifest = Json::parse(slurp(kDemo + "/manifest.json"));
  std::vector<std::string> texts;
  for (const auto& m : manifest) texts.push_back(slurp(kDemo + "/" + m["program"].get<std::string>()));
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& t : texts) {
    const auto res = load_any(t);
    EXPECT_TRUE(res.ok());
    EXPECT_TRUE(res.diagnostics.empty());
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(ms, 1000.0);
}
