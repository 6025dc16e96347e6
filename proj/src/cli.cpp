#include "ssql/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "ssql/checkpoint.hpp"
#include "ssql/config.hpp"
#include "ssql/diag.hpp"
#include "ssql/eval.hpp"
#include "ssql/train.hpp"

namespace ssql::cli {

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path);
    out << text;
    if (!out) throw Error("short write: " + path);
}

// Shared per-subcommand state. Flag values land in `overrides` so that the
// precedence is uniform: defaults < config file < command line.
struct Common {
    std::string config_path;
    std::string data_dir;
    std::vector<std::string> sets;  // raw key=value overrides
    config::Map overrides;

    config::Map merged() const {
        config::Map m;
        if (!config_path.empty()) m = config::load_file(config_path);
        for (const auto& kv : sets) {
            size_t eq = kv.find('=');
            if (eq == std::string::npos)
                throw Error("--set expects key=value, got '" + kv + "'");
            config::set(m, kv.substr(0, eq), kv.substr(eq + 1));
        }
        for (const auto& [k, v] : overrides) config::set(m, k, v);
        config::check_known(m);
        return m;
    }
};

void add_common(CLI::App* sub, Common& c, bool wants_data) {
    sub->add_option("--config", c.config_path, "flat key=value config file");
    sub->add_option("--set", c.sets, "override any config key (key=value, repeatable)");
    if (wants_data) {
        sub->add_option("--data", c.data_dir, "CIFAR-10 binary batch directory");
        sub->add_flag_callback(
            "--synthetic", [&c] { config::set(c.overrides, "data.synthetic", "true"); },
            "use the generated blob dataset instead of --data");
    }
}

// Stores the string form of a flag into the override map only when given.
void map_option(CLI::App* sub, const std::string& flag, Common& c, const std::string& key,
                const std::string& help) {
    auto* opt = sub->add_option_function<std::string>(
        flag, [&c, key](const std::string& v) { config::set(c.overrides, key, v); }, help);
    opt->type_name("TEXT");
}

DatasetHandle load_data(const config::Map& m, const std::string& data_dir) {
    config::DataOptions opts;
    config::apply_data(m, opts);
    DatasetHandle d;
    if (opts.synthetic) {
        SyntheticSpec sp;
        config::apply_synthetic(m, sp);
        d = gen_synthetic(sp, config::get_u64(m, "synthetic.seed", 0));
    } else {
        if (data_dir.empty())
            throw Error("no dataset: pass --data DIR or --synthetic (data.synthetic=true)");
        d = load_cifar10(data_dir);
    }
    if (opts.subset > 0) d = stratified_subset(d, opts.subset, opts.subset_seed);
    return d;
}

eval::EvalProtocol build_protocol(const config::Map& m, eval::EvalProtocol proto) {
    config::apply_eval(m, proto);
    proto.validate();
    return proto;
}

void emit_table(const eval::ResultTable& table, const std::string& out_path) {
    std::string csv = table.to_csv();
    if (out_path.empty())
        std::cout << csv;
    else
        write_text(out_path, csv);
}

struct DiagOptions {
    int every = 0;
    std::string out_prefix;
    std::string bits = "4w4a";
    int batch = 64;
};

int cmd_pretrain(const Common& common, const std::string& out_path, std::string metrics_path,
                 const DiagOptions& dopt) {
    config::Map m = common.merged();
    train::TrainConfig cfg;
    config::apply_train(m, cfg);
    nn::ModelSpec spec;
    config::apply_model(m, spec);
    spec.validate();
    cfg.validate();

    DatasetHandle data = load_data(m, common.data_dir);
    train::Trainer trainer(spec, cfg);

    std::vector<diag::DecompositionRecord> records;
    Pcg32 diag_rng = make_rng(cfg.seed, RngStream::eval);
    quant::BitPair diag_bits = quant::parse_bit_pair(dopt.bits);
    std::function<void(train::Trainer&, const train::StepMetrics&)> on_step;
    if (dopt.every > 0) {
        check(!dopt.out_prefix.empty(), "--diag-every needs --diag-out PREFIX");
        on_step = [&](train::Trainer& t, const train::StepMetrics& sm) {
            if (sm.step % dopt.every != 0) return;
            int b = std::min(dopt.batch, data.train_count());
            std::vector<int> rows(b);
            for (int& r : rows) r = static_cast<int>(diag_rng.bounded(data.train_count()));
            quant::BitPair bits =
                sm.w_bits > 0 ? quant::BitPair{sm.w_bits, sm.a_bits} : diag_bits;
            auto rec = diag::decompose(t.spec, t.params, data, rows, bits, diag_rng, t.cfg.augment);
            rec.step = sm.step;
            records.push_back(std::move(rec));
        };
    }

    auto save_to = [&](const std::string& path, train::Trainer& t) {
        ckpt::Checkpoint c;
        c.spec = t.spec;
        c.params = t.params.clone();
        c.cfg = t.cfg;
        c.step = static_cast<uint64_t>(t.step);
        c.rng_states.emplace_back("augment", t.rng_augment.state_words());
        c.rng_states.emplace_back("bits", t.rng_bits.state_words());
        c.rng_states.emplace_back("shuffle", t.rng_shuffle.state_words());
        ckpt::save_checkpoint(path, c);
    };

    std::function<void(train::Trainer&, int)> on_epoch;
    if (cfg.snapshot_every > 0) {
        on_epoch = [&](train::Trainer& t, int epoch) {
            if ((epoch + 1) % cfg.snapshot_every == 0 && epoch + 1 < cfg.epochs)
                save_to(out_path + ".e" + std::to_string(epoch + 1), t);
        };
    }

    std::vector<train::StepMetrics> log = train::pretrain(trainer, data, on_epoch, on_step);
    save_to(out_path, trainer);
    if (metrics_path.empty()) metrics_path = out_path + ".metrics.csv";
    write_text(metrics_path, train::metrics_to_csv(log));
    if (dopt.every > 0) {
        write_text(dopt.out_prefix + ".decomposition.csv", diag::decomposition_csv(records));
        write_text(dopt.out_prefix + ".correlation.csv", diag::correlation_csv(records));
    }
    return 0;
}

int cmd_probe(const Common& common, const std::string& ckpt_path, const std::string& out_path,
              std::string method) {
    config::Map m = common.merged();
    ckpt::Checkpoint c = ckpt::load_checkpoint(ckpt_path);
    DatasetHandle data = load_data(m, common.data_dir);
    eval::EvalProtocol proto = build_protocol(m, eval::EvalProtocol::linear_default());
    proto.mode = eval::EvalProtocol::Mode::linear_eval;
    if (method.empty()) method = ssl::loss_variant_name(c.cfg.loss.variant);
    eval::ResultTable table = eval::sweep({{method, &c.spec, &c.params}}, data, proto);
    emit_table(table, out_path);
    return 0;
}

int cmd_finetune(const Common& common, const std::string& ckpt_path, const std::string& out_path,
                 const std::string& save_path, std::string method) {
    config::Map m = common.merged();
    ckpt::Checkpoint c = ckpt::load_checkpoint(ckpt_path);
    DatasetHandle data = load_data(m, common.data_dir);
    eval::EvalProtocol proto = build_protocol(m, eval::EvalProtocol::finetune_default());
    proto.mode = eval::EvalProtocol::Mode::finetune_ptq;
    if (method.empty()) method = ssl::loss_variant_name(c.cfg.loss.variant);

    if (!save_path.empty()) {
        nn::ModelParams tuned = eval::finetune(c.spec, c.params, data, proto);
        eval::ResultTable table;
        for (quant::BitPair bits : proto.bits) {
            double acc = eval::ptq_eval(c.spec, tuned, data, bits, proto.quantize_head);
            table.rows.push_back(
                {method, nn::backbone_name(c.spec.backbone), bits.w, bits.a, acc});
        }
        ckpt::Checkpoint out = std::move(c);
        out.params = std::move(tuned);
        ckpt::save_checkpoint(save_path, out);
        emit_table(table, out_path);
        return 0;
    }
    eval::ResultTable table = eval::sweep({{method, &c.spec, &c.params}}, data, proto);
    emit_table(table, out_path);
    return 0;
}

int cmd_diagnose(const Common& common, const std::string& ckpt_path,
                 const std::string& out_prefix, const std::string& bits_text, int batches,
                 int batch_size) {
    config::Map m = common.merged();
    ckpt::Checkpoint c = ckpt::load_checkpoint(ckpt_path);
    DatasetHandle data = load_data(m, common.data_dir);
    quant::BitPair bits = quant::parse_bit_pair(bits_text);
    check(batches >= 1, "--batches must be positive");
    check(batch_size >= 1, "--batch-size must be positive");

    Pcg32 rng = make_rng(c.cfg.seed, RngStream::eval);
    std::vector<diag::DecompositionRecord> records;
    for (int i = 0; i < batches; ++i) {
        int b = std::min(batch_size, data.train_count());
        std::vector<int> rows(b);
        for (int& r : rows) r = static_cast<int>(rng.bounded(data.train_count()));
        auto rec = diag::decompose(c.spec, c.params, data, rows, bits, rng, c.cfg.augment);
        rec.step = i;
        records.push_back(std::move(rec));
    }
    write_text(out_prefix + ".decomposition.csv", diag::decomposition_csv(records));
    write_text(out_prefix + ".correlation.csv", diag::correlation_csv(records));
    write_text(out_prefix + ".weights.csv", diag::weight_stats_csv(diag::weight_stats(c.params)));
    return 0;
}

int cmd_sweep(const Common& common, const std::vector<std::string>& ckpt_paths,
              const std::string& mode_text, const std::string& out_path) {
    config::Map m = common.merged();
    check(!ckpt_paths.empty(), "--ckpts needs at least one checkpoint");
    DatasetHandle data = load_data(m, common.data_dir);
    eval::EvalProtocol proto =
        build_protocol(m, mode_text == "finetune_ptq" ? eval::EvalProtocol::finetune_default()
                                                      : eval::EvalProtocol::linear_default());
    proto.mode = eval::parse_eval_mode(mode_text);

    std::vector<ckpt::Checkpoint> loaded;
    loaded.reserve(ckpt_paths.size());
    for (const auto& p : ckpt_paths) loaded.push_back(ckpt::load_checkpoint(p));

    std::vector<eval::SweepEntry> entries;
    std::vector<std::string> names;
    for (auto& c : loaded) {
        std::string name = ssl::loss_variant_name(c.cfg.loss.variant);
        int dup = 1;
        std::string candidate = name;
        while (std::find(names.begin(), names.end(), candidate) != names.end())
            candidate = name + "#" + std::to_string(++dup);
        names.push_back(candidate);
        entries.push_back({candidate, &c.spec, &c.params});
    }
    eval::ResultTable table = eval::sweep(entries, data, proto);
    emit_table(table, out_path);
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"synergistic self-supervised + quantization pretraining"};
    app.set_version_flag("--version", std::string(kVersionString));
    app.require_subcommand(1);

    Common c_pre, c_probe, c_ft, c_diag, c_sweep;

    auto* pre = app.add_subcommand("pretrain", "pretrain an encoder and save a checkpoint");
    add_common(pre, c_pre, true);
    std::string pre_out, pre_metrics;
    DiagOptions dopt;
    pre->add_option("--out", pre_out, "output checkpoint path")->required();
    pre->add_option("--metrics", pre_metrics, "metrics CSV path (default: OUT.metrics.csv)");
    map_option(pre, "--epochs", c_pre, "epochs", "training epochs");
    map_option(pre, "--batch", c_pre, "batch_size", "batch size");
    map_option(pre, "--lr", c_pre, "base_lr", "base learning rate (for batch 256)");
    map_option(pre, "--variant", c_pre, "loss.variant", "simsiam|ssql|ssql_aux|ssql_nce");
    map_option(pre, "--wbits", c_pre, "bits.weights", "weight bit set, e.g. 2..8 or 4");
    map_option(pre, "--abits", c_pre, "bits.acts", "activation bit set, e.g. 4..8");
    map_option(pre, "--seed", c_pre, "seed", "training seed");
    map_option(pre, "--backbone", c_pre, "model.backbone", "tiny_cnn|mlp");
    map_option(pre, "--subset", c_pre, "data.subset", "stratified train subset size");
    map_option(pre, "--subset-seed", c_pre, "data.subset_seed", "subset sampling seed");
    pre->add_option("--diag-every", dopt.every, "decomposition cadence in steps (0 = off)");
    pre->add_option("--diag-out", dopt.out_prefix, "diagnostics CSV prefix");
    pre->add_option("--diag-bits", dopt.bits, "bit pair for FP-step decompositions");
    pre->add_option("--diag-batch", dopt.batch, "decomposition batch size");

    auto* probe = app.add_subcommand("probe", "linear evaluation of a checkpoint under PTQ");
    add_common(probe, c_probe, true);
    std::string probe_ckpt, probe_out, probe_method;
    probe->add_option("--ckpt", probe_ckpt, "checkpoint to evaluate")->required();
    probe->add_option("--out", probe_out, "result CSV path (default: stdout)");
    probe->add_option("--method", probe_method, "method label for the CSV");
    map_option(probe, "--bits", c_probe, "eval.bits", "bit pairs, e.g. fp,8w8a,2w4a");
    map_option(probe, "--probe-epochs", c_probe, "eval.epochs", "head training epochs");
    map_option(probe, "--subset", c_probe, "data.subset", "stratified train subset size");
    map_option(probe, "--subset-seed", c_probe, "data.subset_seed", "subset sampling seed");

    auto* ft = app.add_subcommand("finetune", "supervised fine-tune, then PTQ sweep");
    add_common(ft, c_ft, true);
    std::string ft_ckpt, ft_out, ft_save, ft_method;
    ft->add_option("--ckpt", ft_ckpt, "checkpoint to fine-tune")->required();
    ft->add_option("--out", ft_out, "result CSV path (default: stdout)");
    ft->add_option("--save", ft_save, "save the fine-tuned model (with head) here");
    ft->add_option("--method", ft_method, "method label for the CSV");
    map_option(ft, "--bits", c_ft, "eval.bits", "bit pairs, e.g. fp,8w8a,2w4a");
    map_option(ft, "--ft-epochs", c_ft, "eval.epochs", "fine-tune epochs");
    map_option(ft, "--subset", c_ft, "data.subset", "stratified train subset size");
    map_option(ft, "--subset-seed", c_ft, "data.subset_seed", "subset sampling seed");

    auto* dg = app.add_subcommand("diagnose", "decomposition, correlation, and weight-stat CSVs");
    add_common(dg, c_diag, true);
    std::string dg_ckpt, dg_out, dg_bits = "4w4a";
    int dg_batches = 20, dg_batch_size = 64;
    dg->add_option("--ckpt", dg_ckpt, "checkpoint to inspect")->required();
    dg->add_option("--out", dg_out, "output prefix for the three CSVs")->required();
    dg->add_option("--bits", dg_bits, "bit pair for the quantized branch");
    dg->add_option("--batches", dg_batches, "number of decomposition batches");
    dg->add_option("--batch-size", dg_batch_size, "rows per decomposition batch");

    auto* sw = app.add_subcommand("sweep", "evaluate several checkpoints into one table");
    add_common(sw, c_sweep, true);
    std::vector<std::string> sw_ckpts;
    std::string sw_mode = "linear_eval", sw_out;
    sw->add_option("--ckpts", sw_ckpts, "checkpoints to compare")
        ->required()
        ->delimiter(',');
    sw->add_option("--mode", sw_mode, "linear_eval|finetune_ptq");
    sw->add_option("--out", sw_out, "result CSV path (default: stdout)");
    map_option(sw, "--bits", c_sweep, "eval.bits", "bit pairs, e.g. fp,8w8a,2w4a");
    map_option(sw, "--subset", c_sweep, "data.subset", "stratified train subset size");
    map_option(sw, "--subset-seed", c_sweep, "data.subset_seed", "subset sampling seed");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForVersion& e) {
        std::cout << kVersionString << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        std::cerr << "run with --help for usage\n";
        return 2;
    }

    try {
        if (pre->parsed()) return cmd_pretrain(c_pre, pre_out, pre_metrics, dopt);
        if (probe->parsed()) return cmd_probe(c_probe, probe_ckpt, probe_out, probe_method);
        if (ft->parsed()) return cmd_finetune(c_ft, ft_ckpt, ft_out, ft_save, ft_method);
        if (dg->parsed()) return cmd_diagnose(c_diag, dg_ckpt, dg_out, dg_bits, dg_batches,
                                              dg_batch_size);
        if (sw->parsed()) return cmd_sweep(c_sweep, sw_ckpts, sw_mode, sw_out);
        std::cerr << "usage error: expected a subcommand\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args);
}

}  // namespace ssql::cli
