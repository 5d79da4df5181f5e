#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "coinflip/cli.hpp"

using namespace coinflip;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

// key=value pairs of one `--output lines` record
std::map<std::string, std::string> fields(const std::string& line) {
    std::map<std::string, std::string> f;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) {
        auto eq = tok.find('=');
        if (eq != std::string::npos) f[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return f;
}

std::vector<std::string> lines_of(const std::string& s) {
    std::vector<std::string> v;
    std::istringstream is(s);
    for (std::string l; std::getline(is, l);)
        if (!l.empty()) v.push_back(l);
    return v;
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("coinflip_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::uint16_t free_port() {
    TcpListener l(Address{"127.0.0.1", 0});
    return l.address().port;
}

} // namespace

TEST(CliBuild, OptimalFourSteps) {
    CliRun r = invoke({"build", "--z", "optimal", "--k", "4", "--output", "lines"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto f = fields(r.out);
    EXPECT_EQ(f["tree"], "F(F(F(A,F(A,B)),F(A,B)),F(A,B))");
    EXPECT_EQ(f["x"], "9/16");
    EXPECT_EQ(f["rounds"], "4N");
}

TEST(CliBuild, ZeroTarget) {
    CliRun r = invoke({"build", "--z", "0", "--k", "5", "--output", "lines"});
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(fields(r.out)["tree"], "B");
    EXPECT_EQ(fields(r.out)["x"], "0");
}

TEST(CliBuild, OutOfRangeTargetIsUsageError) {
    CliRun r = invoke({"build", "--z", "1.5", "--k", "3"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("must lie in [0,1]"), std::string::npos) << r.err;
}

TEST(CliBuild, TableFormatHasHeader) {
    CliRun r = invoke({"build", "--z", "optimal", "--k", "4"});
    ASSERT_EQ(r.code, 0);
    auto ls = lines_of(r.out);
    ASSERT_EQ(ls.size(), 2u);
    EXPECT_EQ(ls[0].substr(0, 7), "tree\tz\t");
    EXPECT_NE(ls[1].find("9/16 (0.562500000000)"), std::string::npos);
}

TEST(CliAnalyze, SingleFlipWarmUp) {
    CliRun r = invoke({"analyze", "--tree", "F(A,B)", "--eps", "0", "--p", "1/3", "--output", "lines"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto f = fields(r.out);
    EXPECT_EQ(f["cheat_A"], "2/3");
    EXPECT_EQ(f["cheat_B"], "3/4");
    EXPECT_EQ(f["ok"], "1");
}

TEST(CliAnalyze, DeepPerfectBaseNearInverseSqrt2) {
    CliRun r = invoke({"analyze", "--z", "optimal", "--k", "20", "--eps", "0", "--output", "lines"});
    ASSERT_EQ(r.code, 0);
    auto f = fields(r.out);
    const Enclosure inv = inv_sqrt2_enclosure(64);
    for (const char* key : {"cheat_A", "cheat_B"}) {
        Rational v = parse_rational(f[key]);
        EXPECT_LE(v, inv.hi + pow2(-19)) << key;
        EXPECT_GE(v, inv.lo - pow2(-19)) << key;
    }
    EXPECT_EQ(f["rounds"], "20N+2");
}

TEST(CliAnalyze, AutoKStaysUnderAsymptoticBounds) {
    CliRun r = invoke({"analyze", "--z", "optimal", "--k", "auto", "--eps", "1/100", "--output", "lines"});
    ASSERT_EQ(r.code, 0);
    auto f = fields(r.out);
    EXPECT_EQ(f["k"], "14");
    EXPECT_EQ(f["rounds"], "14N+2");
    EXPECT_LE(parse_rational(f["cheat_A"]), parse_rational(f["cert_A"]));
    EXPECT_LE(parse_rational(f["cheat_B"]), parse_rational(f["cert_B"]));
}

TEST(CliAnalyze, NumericRounds) {
    CliRun r = invoke({"analyze", "--z", "optimal", "--k", "6", "--eps", "1/20", "--rounds-n", "5",
                 "--output", "lines"});
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(fields(r.out)["rounds"], "32");
}

TEST(CliAnalyze, BadPOverrideIsReported) {
    CliRun r = invoke({"analyze", "--tree", "F(A,B)", "--eps", "0", "--p", "3/2"});
    EXPECT_EQ(r.code, 2);
}

TEST(CliTable, EpsGridPasses) {
    CliRun r = invoke({"table", "--output", "lines"});
    ASSERT_EQ(r.code, 0) << r.out << r.err;
    auto ls = lines_of(r.out);
    ASSERT_EQ(ls.size(), 9u);
    for (const auto& l : ls) EXPECT_EQ(fields(l)["pass"], "1") << l;
    EXPECT_EQ(fields(ls.front())["eps"], "1/16");
    EXPECT_EQ(fields(ls.back())["eps"], "1/4096");
}

TEST(CliSweep, NoViolations) {
    CliRun r = invoke({"sweep", "--output", "lines"});
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(fields(r.out)["violations"], "0");
    EXPECT_EQ(fields(r.out)["cells"], "2112");
}

TEST(CliSimulate, ExperimentsPass) {
    CliRun r = invoke({"simulate", "--z", "optimal", "--k", "4", "--eps", "1/10", "--trials", "200000",
                 "--output", "lines"});
    ASSERT_EQ(r.code, 0) << r.out;
    auto ls = lines_of(r.out);
    ASSERT_EQ(ls.size(), 5u);
    for (const auto& l : ls) EXPECT_EQ(fields(l)["pass"], "1") << l;
    EXPECT_EQ(fields(ls[2])["exact"], "429/625");
}

TEST(CliOutput, LinesAreByteStable) {
    std::vector<std::string> args{"simulate", "--k", "4", "--eps", "1/10", "--trials", "50000",
                                  "--seed", "99", "--output", "lines"};
    CliRun a = invoke(args);
    auto workers = args;
    workers.insert(workers.end(), {"--workers", "3"});
    CliRun b = invoke(workers);
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(invoke({"table", "--output", "lines"}).out, invoke({"table", "--output", "lines"}).out);
}

TEST(CliConfig, FlatFileSetsOptions) {
    fs::path dir = scratch("config");
    fs::path cfg = dir / "run.conf";
    std::ofstream(cfg) << "z = optimal\nk = 4\neps = 1/10\nrounds_n = 3\noutput = lines\n";
    CliRun r = invoke({"--config", cfg.string(), "build"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto f = fields(r.out);
    EXPECT_EQ(f["x"], "9/16");
    EXPECT_EQ(f["eps0"], "3/16");
    EXPECT_EQ(f["rounds"], "12");
    CliRun after = invoke({"build", "--config", cfg.string(), "--k", "3"});
    ASSERT_EQ(after.code, 0) << after.err;
    EXPECT_EQ(fields(after.out)["x"], "1/2");
    fs::remove_all(dir);
}

TEST(CliErrors, UsageCodes) {
    EXPECT_EQ(invoke({}).code, 2);
    EXPECT_EQ(invoke({"frobnicate"}).code, 2);
    EXPECT_EQ(invoke({"build", "--k", "4", "--z", "optimal", "--output", "xml"}).code, 2);
    EXPECT_EQ(invoke({"build", "--k", "4", "--z", "optimal", "--rounds-n", "0"}).code, 2);
    EXPECT_EQ(invoke({"build", "--k", "auto", "--eps", "0"}).code, 2);
    EXPECT_EQ(invoke({"build", "--k", "4", "--eps", "1/2"}).code, 2);
    EXPECT_EQ(invoke({"analyze", "--tree", "F(A"}).code, 2);
    EXPECT_EQ(invoke({"replay", "--k", "4", "/nonexistent/transcript.tsv"}).code, 2);
    EXPECT_EQ(invoke({"session", "--role", "alice", "--k", "4"}).code, 2);
    EXPECT_EQ(invoke({"session", "--role", "carol", "--k", "4", "--referee", "127.0.0.1:1"}).code, 2);
    CliRun help = invoke({"--help"});
    EXPECT_EQ(help.code, 0);
    EXPECT_NE(help.out.find("analyze"), std::string::npos);
}

TEST(CliSession, LoopbackWritesReplayableTranscripts) {
    fs::path dir = scratch("loopback");
    CliRun r = invoke({"session", "--role", "loopback", "--k", "4", "--sessions", "30", "--transcripts",
                 dir.string(), "--output", "lines"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto f = fields(r.out);
    EXPECT_EQ(f["aborts"], "0");
    EXPECT_EQ(f["replay_ok"], "30");
    EXPECT_EQ(f["rounds_formula"], "4N+2");
    int files = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        CliRun rep = invoke({"replay", "--k", "4", "--output", "lines", e.path().string()});
        EXPECT_EQ(rep.code, 0) << rep.err;
        ++files;
    }
    EXPECT_EQ(files, 60);

    // tampering with an OUTPUT record is detected
    fs::path victim = dir / "s0.alice.tsv";
    std::ifstream in(victim);
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    auto pos = text.find("alice\tOUTPUT\t");
    ASSERT_NE(pos, std::string::npos);
    char& bit = text[pos + 13];
    bit = bit == '0' ? '1' : '0';
    std::ofstream(victim) << text;
    EXPECT_EQ(invoke({"replay", "--k", "4", victim.string()}).code, 1);
    EXPECT_EQ(invoke({"replay", "--k", "6", "--eps", "1/10", (dir / "s1.bob.tsv").string()}).code, 1);
    fs::remove_all(dir);
}

TEST(CliSession, ThreeProcessRoles) {
    const std::string ref = "127.0.0.1:" + std::to_string(free_port());
    const std::string bob = "127.0.0.1:" + std::to_string(free_port());
    const std::vector<std::string> common{"--k", "6", "--eps", "1/32", "--seed", "4", "--output", "lines"};
    auto with = [&](std::vector<std::string> v) {
        v.insert(v.end(), common.begin(), common.end());
        return v;
    };
    CliRun rr{}, rb{}, ra{};
    std::thread tr([&] { rr = invoke(with({"session", "--role", "referee", "--listen", ref})); });
    std::thread tb([&] {
        rb = invoke(with({"session", "--role", "bob", "--listen", bob, "--referee", ref, "--sessions", "25"}));
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    ra = invoke(with({"session", "--role", "alice", "--peer", bob, "--referee", ref, "--sessions", "25"}));
    tb.join();
    tr.join();
    ASSERT_EQ(ra.code, 0) << ra.err;
    ASSERT_EQ(rb.code, 0) << rb.err;
    ASSERT_EQ(rr.code, 0) << rr.err;
    auto la = lines_of(ra.out), lb = lines_of(rb.out);
    ASSERT_EQ(la.size(), 25u);
    ASSERT_EQ(lb.size(), 25u);
    for (std::size_t i = 0; i < la.size(); ++i) {
        auto fa = fields(la[i]), fb = fields(lb[i]);
        EXPECT_EQ(fa["outcome"], fb["outcome"]);
        EXPECT_EQ(fa["replay"], fa["outcome"]);
        EXPECT_EQ(fa["failure"], "-");
    }
    EXPECT_EQ(fields(rr.out)["sessions_completed"], "25");
}
