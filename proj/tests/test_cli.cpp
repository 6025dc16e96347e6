#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ssql/checkpoint.hpp"
#include "ssql/cli.hpp"
#include "ssql/eval.hpp"
#include "ssql/train.hpp"

using namespace ssql;

namespace {

std::filesystem::path work_dir() {
    auto p = std::filesystem::temp_directory_path() / "ssql_cli_test";
    std::filesystem::create_directories(p);
    return p;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void append(std::vector<std::string>& v, std::initializer_list<std::string> extra) {
    v.insert(v.end(), extra);
}

std::vector<std::string> synth_args() {
    return {"--synthetic",
            "--set", "synthetic.classes=2",
            "--set", "synthetic.train_per_class=8",
            "--set", "synthetic.test_per_class=4",
            "--set", "synthetic.image_size=8"};
}

std::vector<std::string> model_args() {
    return {"--set", "model.backbone=mlp",
            "--set", "model.input_size=8",
            "--set", "model.mlp_widths=16",
            "--set", "model.projection_hidden=16",
            "--set", "model.projection_dim=16",
            "--set", "model.predictor_hidden=8"};
}

// Pretrains a tiny checkpoint and returns its path.
std::string make_ckpt(const std::string& name, std::initializer_list<std::string> extra = {},
                      const std::string& epochs = "1") {
    std::string out = (work_dir() / name).string();
    std::vector<std::string> args{"pretrain", "--out", out, "--epochs", epochs, "--batch", "8",
                                  "--lr", "0.05"};
    auto s = synth_args();
    auto m = model_args();
    args.insert(args.end(), s.begin(), s.end());
    args.insert(args.end(), m.begin(), m.end());
    args.insert(args.end(), extra);
    REQUIRE(cli::run_cli(args) == 0);
    return out;
}

}  // namespace

TEST_CASE("usage errors exit 2, version exits 0") {
    CHECK(cli::run_cli({"--version"}) == 0);
    CHECK(cli::run_cli({"--help"}) == 0);
    CHECK(cli::run_cli({}) == 2);
    CHECK(cli::run_cli({"frobnicate"}) == 2);
    CHECK(cli::run_cli({"pretrain", "--no-such-flag"}) == 2);
    CHECK(cli::run_cli({"pretrain"}) == 2);  // missing required --out
    CHECK(cli::run_cli({"probe", "--out", "x.csv"}) == 2);  // missing required --ckpt
}

TEST_CASE("runtime failures exit 1 with a message") {
    std::string out = (work_dir() / "never.csv").string();
    CHECK(cli::run_cli({"probe", "--ckpt", "/nonexistent.ckpt", "--synthetic", "--out", out}) ==
          1);
    // Unknown config key is a runtime config error, not a flag error.
    std::vector<std::string> args{"pretrain", "--out", (work_dir() / "never.ckpt").string(),
                                  "--set", "bogus_key=1"};
    auto s = synth_args();
    args.insert(args.end(), s.begin(), s.end());
    CHECK(cli::run_cli(args) == 1);
    // Dataset required when not synthetic.
    CHECK(cli::run_cli({"probe", "--ckpt", "/nonexistent.ckpt", "--out", out}) == 1);
}

TEST_CASE("pretrain with epochs=0 then probe runs end-to-end") {
    std::string ck = make_ckpt("smoke0.ckpt", {}, "0");
    ckpt::Checkpoint c = ckpt::load_checkpoint(ck);
    CHECK(c.step == 0);

    std::string out = (work_dir() / "smoke0.csv").string();
    std::vector<std::string> args{"probe", "--ckpt", ck, "--out", out,
                                  "--bits", "fp,8w8a", "--probe-epochs", "2"};
    auto s = synth_args();
    args.insert(args.end(), s.begin(), s.end());
    REQUIRE(cli::run_cli(args) == 0);

    eval::ResultTable t = eval::ResultTable::from_csv(slurp(out));
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0].method == "ssql_aux");
    CHECK(t.rows[0].w_bits == 0);
    CHECK(t.rows[1].w_bits == 8);
    CHECK(t.rows[1].a_bits == 8);
}

TEST_CASE("identical commands produce identical bytes") {
    std::string ck1 = make_ckpt("det_a.ckpt", {"--seed", "7"});
    std::string ck2 = make_ckpt("det_b.ckpt", {"--seed", "7"});
    CHECK(slurp(ck1) == slurp(ck2));
    CHECK(slurp(ck1 + ".metrics.csv") == slurp(ck2 + ".metrics.csv"));

    auto probe = [&](const std::string& out) {
        std::vector<std::string> args{"probe", "--ckpt", ck1, "--out", out,
                                      "--bits", "fp,4w4a", "--probe-epochs", "3"};
        auto s = synth_args();
        args.insert(args.end(), s.begin(), s.end());
        REQUIRE(cli::run_cli(args) == 0);
    };
    std::string o1 = (work_dir() / "det1.csv").string();
    std::string o2 = (work_dir() / "det2.csv").string();
    probe(o1);
    probe(o2);
    CHECK(slurp(o1) == slurp(o2));

    std::string ck3 = make_ckpt("det_c.ckpt", {"--seed", "8"});
    CHECK(slurp(ck1) != slurp(ck3));
}

TEST_CASE("config file loads and flags override it") {
    std::string cfg_path = (work_dir() / "train.cfg").string();
    {
        std::ofstream f(cfg_path);
        f << "# tiny run\n"
             "epochs = 2\n"
             "batch_size = 8\n"
             "base_lr = 0.05\n"
             "loss.variant = simsiam\n"
             "model.backbone = mlp\n"
             "model.input_size = 8\n"
             "model.mlp_widths = 16\n"
             "model.projection_hidden = 16\n"
             "model.projection_dim = 16\n"
             "model.predictor_hidden = 8\n"
             "data.synthetic = true\n"
             "synthetic.classes = 2\n"
             "synthetic.train_per_class = 8\n"
             "synthetic.test_per_class = 4\n"
             "synthetic.image_size = 8\n";
    }
    std::string out = (work_dir() / "cfgrun.ckpt").string();
    REQUIRE(cli::run_cli({"pretrain", "--config", cfg_path, "--out", out, "--epochs", "1"}) == 0);

    // 16 rows / batch 8 = 2 steps per epoch; the flag's 1 epoch wins.
    auto log = train::metrics_from_csv(slurp(out + ".metrics.csv"));
    CHECK(log.size() == 2);

    ckpt::Checkpoint c = ckpt::load_checkpoint(out);
    CHECK(c.cfg.epochs == 1);
    CHECK(c.cfg.loss.variant == ssl::LossVariant::simsiam);
}

TEST_CASE("finetune emits a table and can save the tuned model") {
    std::string ck = make_ckpt("ft_base.ckpt");
    std::string out = (work_dir() / "ft.csv").string();
    std::string saved = (work_dir() / "ft_tuned.ckpt").string();
    std::vector<std::string> args{"finetune", "--ckpt", ck, "--out", out, "--save", saved,
                                  "--bits", "fp,8w8a", "--ft-epochs", "2",
                                  "--set", "eval.lr=0.05", "--set", "eval.batch_size=8"};
    auto s = synth_args();
    args.insert(args.end(), s.begin(), s.end());
    REQUIRE(cli::run_cli(args) == 0);

    eval::ResultTable t = eval::ResultTable::from_csv(slurp(out));
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0].method == "ssql_aux");

    ckpt::Checkpoint tuned = ckpt::load_checkpoint(saved);
    CHECK(tuned.params.has("head.weight"));
    CHECK(tuned.params.has("head.bias"));
}

TEST_CASE("diagnose writes the three csv streams") {
    std::string ck = make_ckpt("diag_base.ckpt");
    std::string prefix = (work_dir() / "diag").string();
    std::vector<std::string> args{"diagnose", "--ckpt", ck, "--out", prefix,
                                  "--bits", "4w4a", "--batches", "3", "--batch-size", "8"};
    auto s = synth_args();
    args.insert(args.end(), s.begin(), s.end());
    REQUIRE(cli::run_cli(args) == 0);

    std::string dec = slurp(prefix + ".decomposition.csv");
    CHECK(dec.substr(0, dec.find('\n')) == "step,q_term,cl_term,cross_term,total");
    CHECK(std::count(dec.begin(), dec.end(), '\n') == 4);  // header + 3 batches

    std::string cor = slurp(prefix + ".correlation.csv");
    CHECK(cor.substr(0, cor.find('\n')) == "step,r");
    CHECK(std::count(cor.begin(), cor.end(), '\n') == 4);

    std::string ws = slurp(prefix + ".weights.csv");
    CHECK(ws.substr(0, ws.find('\n')) == "layer,min,max,std,kurtosis,outlier_frac");
    CHECK(std::count(ws.begin(), ws.end(), '\n') >= 2);  // at least one weight matrix
}

TEST_CASE("sweep joins several checkpoints into one table") {
    std::string a = make_ckpt("sw_a.ckpt", {"--variant", "simsiam"});
    std::string b = make_ckpt("sw_b.ckpt", {"--variant", "ssql_aux", "--seed", "5"});
    std::string c = make_ckpt("sw_c.ckpt", {"--variant", "ssql_aux", "--seed", "6"});
    std::string out = (work_dir() / "sweep.csv").string();
    std::vector<std::string> args{"sweep", "--ckpts", a + "," + b + "," + c, "--out", out,
                                  "--bits", "fp,4w4a", "--set", "eval.epochs=2"};
    auto s = synth_args();
    args.insert(args.end(), s.begin(), s.end());
    REQUIRE(cli::run_cli(args) == 0);

    eval::ResultTable t = eval::ResultTable::from_csv(slurp(out));
    REQUIRE(t.rows.size() == 6);  // 3 checkpoints x 2 bit pairs
    CHECK(t.rows[0].method == "simsiam");
    CHECK(t.rows[2].method == "ssql_aux");
    CHECK(t.rows[4].method == "ssql_aux#2");  // duplicate variant gets a suffix
}

TEST_CASE("pretrain diagnostics stream during training") {
    std::string out = (work_dir() / "diagrun.ckpt").string();
    std::string prefix = (work_dir() / "diagrun").string();
    std::vector<std::string> args{"pretrain", "--out", out, "--epochs", "2", "--batch", "8",
                                  "--variant", "ssql_aux", "--diag-every", "2",
                                  "--diag-out", prefix, "--diag-batch", "8"};
    auto s = synth_args();
    auto m = model_args();
    args.insert(args.end(), s.begin(), s.end());
    args.insert(args.end(), m.begin(), m.end());
    REQUIRE(cli::run_cli(args) == 0);

    // 4 steps, cadence 2 -> records at steps 0 and 2.
    std::string dec = slurp(prefix + ".decomposition.csv");
    CHECK(std::count(dec.begin(), dec.end(), '\n') == 3);
    std::string cor = slurp(prefix + ".correlation.csv");
    CHECK(cor.substr(0, cor.find('\n')) == "step,r");
    CHECK(std::count(cor.begin(), cor.end(), '\n') == 3);
}
