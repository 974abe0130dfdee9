#include "catch_amalgamated.hpp"
#include "support.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string cli() { return "'" + support::cli_path().string() + "'"; }

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("meta prints one entry per feature") {
    std::string out;
    REQUIRE(support::shell(cli() + " meta " + quoted(support::fixture("ar2.csv")) + " --period 12", &out) == 0);
    const auto j = json::parse(out);
    REQUIRE(j.size() == 2);
    CHECK(j[0].at("feature") == "target");
    CHECK(j[0].at("vector").at("count") == 800);
    CHECK(j[0].at("summary").contains("temporal_dependence"));
}

TEST_CASE("bo writes a BO-only run") {
    const auto dir = support::temp_dir("cli_bo") / "run";
    std::string out;
    REQUIRE(support::shell(cli() + " bo " + quoted(support::fixture("ar2_run.json")) + " --output " + quoted(dir), &out) == 0);
    CHECK(out.find("BO") != std::string::npos);
    const auto report = support::read_json(dir / "report.json");
    CHECK(report.at("label") == "BO");
    CHECK(report.at("iterations_used") == 0);
}

TEST_CASE("optimize replays a transcript and reports success through the exit status") {
    const auto dir = support::temp_dir("cli_opt") / "run";
    std::string out;
    const int rc = support::shell(cli() + " optimize " + quoted(support::fixture("ar2_run.json")) + " --output " + quoted(dir), &out);
    CHECK(rc == 0);
    CHECK(out.find("reached target   yes") != std::string::npos);

    const auto bad = support::temp_dir("cli_opt_bad") / "run";
    const int rc_bad = support::shell(cli() + " optimize " + quoted(support::fixture("ar2_run.json")) + " --replay " +
                                      quoted(support::fixture("malformed_transcript.jsonl")) + " --lenient --output " +
                                      quoted(bad));
    CHECK(rc_bad == 1);
    CHECK(support::read_json(bad / "report.json").at("reached_target") == false);
}

TEST_CASE("optimize --no-meta labels the run") {
    const auto dir = support::temp_dir("cli_nometa") / "run";
    REQUIRE(support::shell(cli() + " optimize " + quoted(support::fixture("ar2_run.json")) + " --no-meta --output " + quoted(dir)) == 0);
    CHECK(support::read_json(dir / "report.json").at("label") == "LLM-AutoOpt-NoMeta");
}

TEST_CASE("report prints the summary and CSV") {
    const auto dir = support::temp_dir("cli_report") / "run";
    REQUIRE(support::shell(cli() + " optimize " + quoted(support::fixture("ar2_run.json")) + " --output " + quoted(dir)) == 0);
    std::string text, csv;
    REQUIRE(support::shell(cli() + " report " + quoted(dir), &text) == 0);
    CHECK(text.find("method       LLM-AutoOpt") != std::string::npos);
    CHECK(text.find("reached      yes") != std::string::npos);
    REQUIRE(support::shell(cli() + " report " + quoted(dir) + " --csv", &csv) == 0);
    CHECK(csv.rfind("run,method,mean_loss,loss_std,mean_t_train,t_opt,selected\nrun,LLM-AutoOpt,", 0) == 0);
    const auto conv = support::read_file(dir / "convergence.csv");
    CHECK(conv.rfind("run,iteration,origin,loss,incumbent\n", 0) == 0);
    CHECK(conv.find(",llm,") != std::string::npos);
}

TEST_CASE("trainer-check against the built-in trainer") {
    std::string out;
    const int rc = support::shell(cli() + " trainer-check --timeout 60 " + cli() + " builtin-trainer", &out);
    CHECK(rc == 0);
    CHECK(out.find("FAIL") == std::string::npos);
    CHECK(out.find("PASS") != std::string::npos);
}

TEST_CASE("errors go to stderr with exit status 2") {
    std::string out;
    CHECK(support::shell(cli() + " meta /nonexistent.csv 2>&1", &out) == 2);
    CHECK(out.rfind("metaopt: ", 0) == 0);
    const auto dir = support::temp_dir("cli_err");
    support::write_file(dir / "cfg.json", "{\"dataset\": \"x.csv\", \"bogus\": 1}");
    CHECK(support::shell(cli() + " optimize " + quoted(dir / "cfg.json") + " 2>&1", &out) == 2);
    CHECK(out.find("bogus") != std::string::npos);
}
