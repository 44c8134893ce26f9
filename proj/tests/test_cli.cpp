#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <string>

#include "plot.hpp"
#include "run_config.hpp"

namespace robust_embed::cli {
namespace {

namespace fs = std::filesystem;

fs::path source_dir() { return ROBUST_EMBED_SOURCE_DIR; }
fs::path data(const std::string& name) { return source_dir() / "data" / name; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct CliRun {
    int code = -1;
    std::string output;
};

// Runs the CLI in `cwd` with ROBUST_EMBED_HOME pointing at `home`.
CliRun cli(const fs::path& cwd, const fs::path& home, const std::string& args) {
    const fs::path log = cwd / "cli_output.txt";
    const std::string cmd = "cd '" + cwd.string() + "' && ROBUST_EMBED_HOME='" + home.string() + "' '" +
                            std::string(ROBUST_EMBED_CLI) + "' " + args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

double metric(const fs::path& report, const std::string& name) {
    std::ifstream in(report);
    for (std::string line; std::getline(in, line);) {
        if (line.rfind(name + "=", 0) == 0) return std::stod(line.substr(name.size() + 1));
    }
    ADD_FAILURE() << name << " missing from " << report;
    return NAN;
}

std::string data_flags() {
    return " --corpus '" + data("toy_corpus.txt").string() + "' --data '" + data("mini_sts.tsv").string() +
           "' --train_data '" + data("sentiment_train.tsv").string() + "' --test_data '" +
           data("sentiment_test.tsv").string() + "' --lexicon '" + data("lexicon.tsv").string() + "'";
}

const std::string kSmallModel = " --dim 16 --layers 1 --heads 2 --max_len 16 --epochs 1 --K 1 --T 1";

TEST(RunConfigTest, DefaultDumpMatchesGoldenFile) {
    RunConfig cfg;  // environment deliberately not applied
    EXPECT_EQ(cfg.dump(), slurp(source_dir() / "tests" / "golden" / "dump_config.txt"));
}

TEST(RunConfigTest, DefaultsCarryAblationOptima) {
    const HyperParams hp = RunConfig().hyper_params();
    EXPECT_EQ(hp.alpha, 1e-5);
    EXPECT_EQ(hp.beta, 1e-3);
    EXPECT_EQ(hp.pgd_steps, 5);
    EXPECT_EQ(hp.fgsm_steps, 5);
    EXPECT_EQ(hp.rho, 0.5);
    EXPECT_EQ(hp.norm, NormKind::linf);
    EXPECT_EQ(hp.lambda1, 1.0 / 128.0);
    EXPECT_EQ(hp.lambda2, 0.005);
    EXPECT_EQ(hp.sigma, hp.epsilon);
}

TEST(RunConfigTest, FileOverridesDefaultAndSetOverridesFile) {
    const fs::path p = fs::temp_directory_path() / "robust_embed_cfg_test.txt";
    {
        std::ofstream out(p);
        out << "# sweep\nrho = 0.25\nnorm=l2  # trailing comment\n\nepochs = 2\n";
    }
    RunConfig cfg;
    cfg.merge_file(p);
    cfg.set("epochs", "3");
    const HyperParams hp = cfg.hyper_params();
    EXPECT_EQ(hp.rho, 0.25);
    EXPECT_EQ(hp.norm, NormKind::l2);
    EXPECT_EQ(hp.epochs, 3);
    EXPECT_NE(cfg.dump().find("rho=0.25\n"), std::string::npos);

    {
        std::ofstream out(p);
        out << "rho = 0.25\nwarp_factor = 9\n";
    }
    try {
        RunConfig().merge_file(p);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
    fs::remove(p);
}

TEST(RunConfigTest, InvalidValuesAreRejected) {
    RunConfig cfg;
    cfg.set("rho", "1.5");
    EXPECT_THROW(cfg.validate(), ConfigError);
    RunConfig bad_norm;
    bad_norm.set("norm", "l3");
    EXPECT_THROW(bad_norm.validate(), ConfigError);
    RunConfig bad_number;
    bad_number.set("epsilon", "small");
    EXPECT_THROW(bad_number.validate(), ConfigError);
    EXPECT_THROW(RunConfig().set("nonsense", "1"), ConfigError);
}

TEST(RunConfigTest, OutputPathsResolveAgainstHome) {
    RunConfig cfg;
    cfg.set("home", "/tmp/x");
    EXPECT_EQ(cfg.output_dir("eval-sts"), fs::path("/tmp/x/eval-sts"));
    EXPECT_EQ(cfg.checkpoint_dir(), fs::path("/tmp/x/train/checkpoint"));
    cfg.set("out", "elsewhere");
    EXPECT_EQ(cfg.output_dir("eval-sts"), fs::path("elsewhere"));
}

// Pixel coordinates of every plotted point, in document order.
std::vector<std::pair<double, double>> circles(const std::string& svg) {
    std::vector<std::pair<double, double>> out;
    const std::regex re("<circle class=\"point\" cx=\"([-0-9.e]+)\" cy=\"([-0-9.e]+)\"");
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it) {
        out.emplace_back(std::stod((*it)[1]), std::stod((*it)[2]));
    }
    return out;
}

TEST(Plot, LowerValuesAreDrawnLowerLeft) {
    const std::string svg = render_scatter_svg({"t", "uniformity", "alignment", "lower-left is better"},
                                               {{"good", -3.0, 0.2}, {"worse", -1.0, 0.6}});
    const auto pts = circles(svg);
    ASSERT_EQ(pts.size(), 2u);
    EXPECT_LT(pts[0].first, pts[1].first);   // smaller uniformity further left
    EXPECT_GT(pts[0].second, pts[1].second);  // smaller alignment further down (SVG y grows downward)
    EXPECT_NE(svg.find(">good</text>"), std::string::npos);
    EXPECT_NE(svg.find("lower-left is better"), std::string::npos);
    EXPECT_THROW(render_scatter_svg({}, {}), std::invalid_argument);
}

TEST(Plot, EmptyReportSetIsAnError) {
    EXPECT_THROW(load_reports({}, {}), std::invalid_argument);
}

class CliEndToEnd : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = fs::temp_directory_path() / ("robust_embed_cli_" + std::to_string(::getpid()));
        fs::remove_all(root_);
        fs::create_directories(root_);
        const CliRun r = cli(root_, root_ / "runs", "train" + kSmallModel + data_flags());
        ASSERT_EQ(r.code, 0) << r.output;
    }
    static void TearDownTestSuite() { fs::remove_all(root_); }

    static fs::path root_;
};

fs::path CliEndToEnd::root_;

TEST_F(CliEndToEnd, TrainWritesCheckpointLogAndConfig) {
    const fs::path dir = root_ / "runs" / "train";
    EXPECT_TRUE(fs::exists(dir / "checkpoint" / "manifest"));
    const std::string log = slurp(dir / "metrics.csv");
    EXPECT_EQ(log.rfind("step,epoch,L_con", 0), 0u);
    EXPECT_GT(std::count(log.begin(), log.end(), '\n'), 1);
    const std::string config = slurp(dir / "config.txt");
    EXPECT_NE(config.find("dim=16\n"), std::string::npos);
    EXPECT_NE(config.find("home=" + (root_ / "runs").string() + "\n"), std::string::npos);
}

TEST_F(CliEndToEnd, EvalCommandsWriteReports) {
    const fs::path home = root_ / "runs";
    CliRun r = cli(root_, home, "eval sts" + data_flags());
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(slurp(home / "eval-sts" / "sts.txt").find("spearman="), std::string::npos);
    EXPECT_TRUE(fs::exists(home / "eval-sts" / "sts.json"));
    EXPECT_TRUE(fs::exists(home / "eval-sts" / "config.txt"));

    r = cli(root_, home, "eval transfer" + data_flags());
    ASSERT_EQ(r.code, 0) << r.output;
    const double acc = metric(home / "eval-transfer" / "transfer.txt", "accuracy");
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);

    r = cli(root_, home, "eval metrics --random-init --out random" + kSmallModel + data_flags());
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_LT(metric(root_ / "random" / "metrics.txt", "uniformity"), 0.0);
}

TEST_F(CliEndToEnd, AttackClassifyIsDeterministic) {
    const fs::path home = root_ / "runs";
    const std::string args = "attack classify --n 30 --seed 7" + data_flags();
    ASSERT_EQ(cli(root_, home, args + " --out a1").code, 0);
    ASSERT_EQ(cli(root_, home, args + " --out a2").code, 0);
    EXPECT_EQ(slurp(root_ / "a1" / "classify.txt"), slurp(root_ / "a2" / "classify.txt"));
    EXPECT_EQ(slurp(root_ / "a1" / "attacks.tsv"), slurp(root_ / "a2" / "attacks.tsv"));
    EXPECT_EQ(metric(root_ / "a1" / "classify.txt", "n_attacked"), 30.0);
}

TEST_F(CliEndToEnd, AttackAdvStsReportsRate) {
    const fs::path home = root_ / "runs";
    const CliRun r = cli(root_, home, "attack advsts --delta 1.0 --n 25" + data_flags());
    ASSERT_EQ(r.code, 0) << r.output;
    const double rate = metric(home / "attack-advsts" / "advsts.txt", "success_rate");
    EXPECT_GE(rate, 0.0);
    EXPECT_LE(rate, 1.0);
    EXPECT_TRUE(fs::exists(home / "attack-advsts" / "advsts.tsv"));
}

TEST_F(CliEndToEnd, PlotTwoReportsGivesTwoPointsPerPlot) {
    const fs::path reports = root_ / "reports";
    fs::create_directories(reports);
    {
        std::ofstream(reports / "a.txt") << "alignment=0.3\nuniformity=-2\nmean_queries=12\naccuracy_reduction=0.4\n";
        std::ofstream(reports / "b.txt") << "alignment=0.5\nuniformity=-1.5\nmean_queries=9\naccuracy_reduction=0.6\n";
    }
    const CliRun r = cli(root_, root_ / "runs",
                      "plot '" + (reports / "a.txt").string() + "' '" + (reports / "b.txt").string() +
                          "' --labels adv,base --out plots");
    ASSERT_EQ(r.code, 0) << r.output;
    for (const char* f : {"align_uniform.svg", "queries_accuracy.svg"}) {
        const std::string svg = slurp(root_ / "plots" / f);
        EXPECT_EQ(circles(svg).size(), 2u) << f;
        EXPECT_NE(svg.find(">adv</text>"), std::string::npos);
        EXPECT_NE(svg.find(">base</text>"), std::string::npos);
    }
}

TEST_F(CliEndToEnd, PlotErrorsWriteNothing) {
    const fs::path bad = root_ / "bad_report.txt";
    std::ofstream(bad) << "alignment=0.3\nnot a metric line\n";
    CliRun r = cli(root_, root_ / "runs", "plot '" + bad.string() + "' --out badplots");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find(":2:"), std::string::npos) << r.output;
    EXPECT_FALSE(fs::exists(root_ / "badplots"));

    r = cli(root_, root_ / "runs", "plot --out emptyplots");
    EXPECT_NE(r.code, 0);
    EXPECT_FALSE(fs::exists(root_ / "emptyplots"));
}

TEST_F(CliEndToEnd, ExitCodes) {
    const fs::path home = root_ / "codes";
    CliRun r = cli(root_, home, "train --rho 1.5" + data_flags());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("rho"), std::string::npos);
    EXPECT_FALSE(fs::exists(home));  // rejected before any work

    r = cli(root_, home, "train --corpus missing_corpus.txt");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("missing_corpus.txt"), std::string::npos);

    r = cli(root_, home, "train --lr 1e308 --out nan_run" + kSmallModel + data_flags());
    EXPECT_EQ(r.code, 3) << r.output;

    // Words the checkpoint has never seen.
    const fs::path foreign = root_ / "foreign.tsv";
    std::ofstream(foreign) << "zyx wvu\ttsr qpo\t2.5\nonm lkj\tihg fed\t1.0\n";
    r = cli(root_, root_ / "runs", "eval sts --data '" + foreign.string() + "'");
    EXPECT_EQ(r.code, 2) << r.output;

    r = cli(root_, root_ / "nowhere", "eval sts" + data_flags());
    EXPECT_EQ(r.code, 2) << r.output;  // no checkpoint under this home
}

TEST_F(CliEndToEnd, ConfigFileAndFlagPrecedence) {
    const fs::path file = root_ / "sweep.cfg";
    std::ofstream(file) << "rho = 0.25\nK = 3\n";
    const CliRun r = cli(root_, root_ / "runs", "--config '" + file.string() + "' --K 2 --dump-config");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("rho=0.25\n"), std::string::npos);
    EXPECT_NE(r.output.find("K=2\n"), std::string::npos);
    EXPECT_NE(r.output.find("home=" + (root_ / "runs").string() + "\n"), std::string::npos);
}

}  // namespace
}  // namespace robust_embed::cli
