// Command-line front end: convert, stamp, train, run, eval, gradcheck, report.
//
// Exit status: 0 success, 1 runtime or data failure, 2 usage or config error.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mlock/certificate.hpp"
#include "mlock/checkpoint.hpp"
#include "mlock/dataset.hpp"
#include "mlock/error.hpp"
#include "mlock/eval.hpp"
#include "mlock/image_import.hpp"
#include "mlock/pipeline.hpp"
#include "mlock/train.hpp"

namespace fs = std::filesystem;
using namespace mlock;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_failure = 1;
constexpr int exit_usage = 2;

class UsageError : public Error {
public:
    using Error::Error;
};

std::string fmt(double v, int decimals = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

void print_summary(const LabeledDataset& d, const fs::path& out) {
    std::cout << out.string() << ": N=" << d.size() << " K=" << d.class_count << " H=" << d.shape.height
              << " W=" << d.shape.width << " C=" << d.shape.channels << "\n";
}

LabeledDataset concatenate(std::vector<LabeledDataset> parts) {
    LabeledDataset out = std::move(parts.front());
    for (std::size_t i = 1; i < parts.size(); ++i) {
        if (parts[i].shape != out.shape || parts[i].class_count != out.class_count) {
            throw ShapeError("inputs differ in image shape or class count");
        }
        out.pixels.insert(out.pixels.end(), parts[i].pixels.begin(), parts[i].pixels.end());
        out.labels.insert(out.labels.end(), parts[i].labels.begin(), parts[i].labels.end());
    }
    return out;
}

// CLI11 validators that reuse the library parsers, so bad values fail before any work starts
CLI::Validator motif_name_validator() {
    return CLI::Validator(
        [](std::string& v) -> std::string {
            try {
                find_motif(v);
            } catch (const InvalidArgument& e) {
                return e.what();
            }
            return {};
        },
        "MOTIF");
}

struct ConvertArgs {
    std::string format;
    std::vector<std::string> inputs;
    std::string out;
    std::size_t classes = 0;
    std::string cifar_labels = "fine";
    std::size_t height = 32, width = 32, channels = 3;
};

int cmd_convert(const ConvertArgs& a) {
    const auto n = a.inputs.size();
    if (a.format == "idx" && n != 2) throw UsageError("idx needs exactly two inputs: images and labels");
    if ((a.format == "canonical-import") && n != 1) throw UsageError("canonical-import takes exactly one input");

    const std::string name = fs::path(a.out).stem().string();
    LabeledDataset d;
    if (a.format == "idx") {
        d = load_idx(a.inputs[0], a.inputs[1], a.classes ? a.classes : 10, name);
    } else if (a.format == "cifar10" || a.format == "cifar100") {
        std::vector<fs::path> paths(a.inputs.begin(), a.inputs.end());
        const CifarLabels labels = a.format == "cifar10"       ? CifarLabels::cifar10
                                   : a.cifar_labels == "coarse" ? CifarLabels::coarse
                                                                : CifarLabels::fine;
        d = load_cifar_binary(paths, labels, name);
    } else if (a.format == "canonical-import") {
        d = load_canonical(a.inputs[0]);
        d.name = name;
    } else {  // images
        ImageImportOptions opts{a.height, a.width, a.channels, a.classes ? a.classes : 43};
        std::vector<LabeledDataset> parts;
        for (const auto& m : a.inputs) parts.push_back(import_manifest(m, opts, name));
        d = concatenate(std::move(parts));
    }
    d.validate();
    save_canonical(d, a.out);
    print_summary(d, a.out);
    return exit_ok;
}

struct StampArgs {
    std::string dataset, out, motif = "I", motif_file, placement = "fixed";
    std::size_t margin = 1;
    std::uint64_t seed = 0;
    double dark_threshold = -1.0;
};

int cmd_stamp(const StampArgs& a) {
    CertificateMotif motif;
    if (!a.motif_file.empty()) {
        bool found = false;
        for (auto& m : load_motif_file(a.motif_file)) {
            if (m.id == a.motif) {
                motif = m;
                found = true;
            }
        }
        if (!found) throw UsageError("motif '" + a.motif + "' not defined in " + a.motif_file);
    } else {
        motif = find_motif(a.motif);
    }
    const Placement placement{parse_placement_mode(a.placement), a.margin};
    const LabeledDataset in = load_canonical(a.dataset);
    if (a.dark_threshold >= 0.0) {
        if (placement.mode != PlacementMode::fixed_bottom_right) {
            throw UsageError("--check-dark requires fixed placement");
        }
        const double frac = verify_region_dark(in, motif, placement, a.dark_threshold);
        std::cout << "stamping region dark in " << fmt(100.0 * frac) << "% of images (threshold "
                  << fmt(a.dark_threshold, 1) << ")\n";
    }
    LabeledDataset out = stamp_dataset(in, motif, placement, a.seed);
    out.name = fs::path(a.out).stem().string();
    save_canonical(out, a.out);
    print_summary(out, a.out);
    return exit_ok;
}

struct TrainArgs {
    std::string dataset, out, preset = "mlp";
    TrainConfig config;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
    const LabeledDataset d = load_canonical(a.dataset);
    ExperimentConfig ec;
    ec.preset = a.preset == "cnn" ? Preset::cnn : Preset::mlp;
    const NetworkSpec spec = make_network(ec, d.shape, d.class_count);
    const Digest digest = train_config_digest(spec, a.config, dataset_digest(d));
    const Checkpoint ckpt = train(spec, to_training_data(d), a.config, digest, [&](const EpochStats& s) {
        if (!a.quiet) {
            std::cerr << "epoch " << s.epoch << "/" << a.config.epochs << " loss " << fmt(s.mean_loss, 4)
                      << " train acc " << fmt(s.train_accuracy) << "\n";
        }
    });
    save_checkpoint(ckpt, a.out);
    std::cout << a.out << ": " << ckpt.params.scalar_count() << " parameters, " << ckpt.metadata.epochs
              << " epochs, seed " << ckpt.metadata.seed << "\n";
    return exit_ok;
}

struct RunArgs {
    std::string config;
    bool quiet = false, fresh = false;
};

int cmd_run(const RunArgs& a) {
    const ExperimentConfig config = load_experiment_config(a.config);
    RunOptions options;
    options.log = a.quiet ? nullptr : &std::cerr;
    options.reuse_checkpoints = !a.fresh;
    const ExperimentResult result = run_experiment(config, options);
    std::cout << render_report(result.report, ReportFormat::table);
    std::cout << "run directory: " << result.run_dir.string() << "\n";
    for (const auto& s : result.seeds) {
        if (s.failed) std::cout << "seed " << s.seed << " failed: " << s.error << "\n";
    }
    return result.ok() ? exit_ok : exit_failure;
}

struct EvalArgs {
    std::string checkpoint, dataset;
    bool per_class = false;
};

int cmd_eval(const EvalArgs& a) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const LabeledDataset d = load_canonical(a.dataset);
    const auto pred = predict(ckpt, d);
    std::cout << "accuracy " << fmt(accuracy(pred, d.labels)) << "% on " << d.size() << " images\n";
    if (a.per_class) {
        const auto pc = per_class_accuracy(pred, d.labels, d.class_count);
        for (std::size_t k = 0; k < pc.size(); ++k) {
            std::cout << "class " << k << " " << (pc[k] ? fmt(*pc[k]) + "%" : std::string("absent")) << "\n";
        }
    }
    return exit_ok;
}

struct GradcheckArgs {
    std::string preset;
    std::size_t samples = 200;
    std::uint64_t seed = 0;
    double tolerance = 1e-4;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    const NetworkSpec spec = a.preset == "mlp-mini" ? mlp_mini() : cnn_mini();
    const double err = gradient_check(spec, a.samples, a.seed);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", err);
    const bool pass = err <= a.tolerance;
    std::cout << a.preset << ": max relative error " << buf << (pass ? " ok" : " FAILED") << "\n";
    return pass ? exit_ok : exit_failure;
}

struct ReportArgs {
    std::vector<std::string> inputs;
    std::string format = "table";
};

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

int cmd_report(const ReportArgs& a) {
    EvalReport merged;
    for (const auto& in : a.inputs) {
        const fs::path p = fs::is_directory(in) ? fs::path(in) / "report.csv" : fs::path(in);
        const EvalReport r = parse_report_csv(read_text(p));
        merged.rows.insert(merged.rows.end(), r.rows.begin(), r.rows.end());
    }
    std::cout << render_report(merged, parse_report_format(a.format));
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Train and evaluate certificate-locked image classifiers"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "mlock 1.0");

    ConvertArgs convert;
    auto* c = app.add_subcommand("convert", "Convert a dataset to the canonical format");
    c->add_option("--format", convert.format, "Input format")
        ->required()
        ->check(CLI::IsMember({"idx", "cifar10", "cifar100", "canonical-import", "images"}));
    c->add_option("inputs", convert.inputs,
                  "Input files: idx images+labels, CIFAR batch files, a canonical file, or image CSV manifests")
        ->required()
        ->check(CLI::ExistingFile);
    c->add_option("-o,--out", convert.out, "Output canonical file")->required();
    c->add_option("--classes", convert.classes, "Class count (idx default 10, images default 43)")
        ->check(CLI::Range(2, 65535));
    c->add_option("--cifar100-labels", convert.cifar_labels, "CIFAR-100 label granularity")
        ->check(CLI::IsMember({"fine", "coarse"}));
    c->add_option("--height", convert.height, "Image height for the images format")->check(CLI::Range(1, 65535));
    c->add_option("--width", convert.width, "Image width for the images format")->check(CLI::Range(1, 65535));
    c->add_option("--channels", convert.channels, "Channels for the images format")
        ->check(CLI::IsMember({"1", "3"}));

    StampArgs stamp;
    auto* s = app.add_subcommand("stamp", "Stamp a certificate motif onto every image of a dataset");
    s->add_option("-d,--dataset", stamp.dataset, "Input canonical file")->required()->check(CLI::ExistingFile);
    s->add_option("-o,--out", stamp.out, "Output canonical file")->required();
    auto* motif_opt = s->add_option("--motif", stamp.motif, "I, II, block:HxW, checker:HxW or an id from --motif-file");
    s->add_option("--motif-file", stamp.motif_file, "Motif definition file")->check(CLI::ExistingFile);
    s->add_option("--placement", stamp.placement, "fixed or random")->check(CLI::IsMember({"fixed", "random"}));
    s->add_option("--margin", stamp.margin, "Distance from the bottom-right edge (fixed placement)");
    s->add_option("--seed", stamp.seed, "Seed for random placement");
    s->add_option("--check-dark", stamp.dark_threshold,
                  "Report the share of images whose stamping region is darker than this mean intensity")
        ->check(CLI::Range(0.0, 256.0));

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train one network on a canonical dataset");
    t->add_option("-d,--dataset", tr.dataset, "Training set")->required()->check(CLI::ExistingFile);
    t->add_option("-o,--out", tr.out, "Output checkpoint")->required();
    t->add_option("--preset", tr.preset, "mlp or cnn")->check(CLI::IsMember({"mlp", "cnn"}));
    t->add_option("--epochs", tr.config.epochs, "Epochs")->check(CLI::PositiveNumber);
    t->add_option("--batch-size", tr.config.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    t->add_option("--lr", tr.config.lr, "Learning rate")->check(CLI::PositiveNumber);
    t->add_option("--momentum", tr.config.momentum, "Momentum")->check(CLI::Range(0.0, 0.999999));
    t->add_option("--seed", tr.config.seed, "Initialization and shuffling seed");
    t->add_flag("-q,--quiet", tr.quiet, "No epoch log");

    RunArgs run;
    auto* r = app.add_subcommand("run", "Run an experiment described by a config file");
    r->add_option("config", run.config, "Experiment config (key = value)")->required()->check(CLI::ExistingFile);
    r->add_flag("-q,--quiet", run.quiet, "No progress log");
    r->add_flag("--fresh", run.fresh, "Retrain even when cached checkpoints exist");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Accuracy of a checkpoint on a dataset");
    e->add_option("-c,--checkpoint", ev.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    e->add_option("-d,--dataset", ev.dataset, "Canonical dataset file")->required()->check(CLI::ExistingFile);
    e->add_flag("--per-class", ev.per_class, "Also print per-class accuracy");

    GradcheckArgs gc;
    auto* g = app.add_subcommand("gradcheck", "Compare backpropagation with finite differences");
    g->add_option("--preset", gc.preset, "mlp-mini or cnn-mini")
        ->required()
        ->check(CLI::IsMember({"mlp-mini", "cnn-mini"}));
    g->add_option("--samples", gc.samples, "Parameters to check")->check(CLI::PositiveNumber);
    g->add_option("--seed", gc.seed, "Seed");
    g->add_option("--tolerance", gc.tolerance, "Largest acceptable relative error")->check(CLI::PositiveNumber);

    ReportArgs rep;
    auto* p = app.add_subcommand("report", "Render one or more report.csv files (or run directories)");
    p->add_option("inputs", rep.inputs, "report.csv files or run directories")->required()->check(CLI::ExistingPath);
    p->add_option("--format", rep.format, "table or csv")->check(CLI::IsMember({"table", "csv"}));

    try {
        app.parse(argc, argv);
        // the motif may name an entry of --motif-file, so only check built-ins without one
        if (stamp.motif_file.empty() && motif_opt->count() > 0) {
            const std::string err = motif_name_validator()(stamp.motif);
            if (!err.empty()) throw CLI::ValidationError("--motif", err);
        }
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*c) return cmd_convert(convert);
        if (*s) return cmd_stamp(stamp);
        if (*t) return cmd_train(tr);
        if (*r) return cmd_run(run);
        if (*e) return cmd_eval(ev);
        if (*g) return cmd_gradcheck(gc);
        if (*p) return cmd_report(rep);
    } catch (const UsageError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return exit_usage;
    } catch (const ConfigError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return exit_usage;
    } catch (const Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return exit_failure;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return exit_failure;
    }
    return exit_usage;
}
