// Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Tolerances below are fixed; do not loosen them.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "mlock/certificate.hpp"
#include "mlock/checkpoint.hpp"
#include "mlock/dataset.hpp"
#include "mlock/error.hpp"
#include "mlock/eval.hpp"
#include "mlock/interference.hpp"
#include "mlock/pipeline.hpp"
#include "mlock/train.hpp"

namespace fs = std::filesystem;
using namespace mlock;

namespace {

// criterion 1
constexpr double kBaselineMin = 97.0;
// criterion 2
constexpr double kSingleTrustedMin = 97.0;
constexpr double kSingleUnverifiedLo = 6.0, kSingleUnverifiedHi = 14.0;
// criterion 3
constexpr double kShiftUnverifiedMax = 2.0;
// criterion 4
constexpr double kRandomUnverifiedLo = 5.0, kRandomUnverifiedHi = 15.0;
// criterion 5
constexpr double kFashionTrustedMin = 86.0, kFashionUnverifiedMax = 16.0;
// criterion 6
constexpr double kRandomPlacementTrustedMin = 96.5;
constexpr double kRandomPlacementUnverifiedLo = 6.0, kRandomPlacementUnverifiedHi = 14.0;
// criterion 7
constexpr double kGradTolerance = 1e-4;
constexpr double kPropertySecondsMax = 60.0;
constexpr double kSigmas = 5.0;

std::string fmt(double v, int decimals = 2) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(decimals);
    s << v;
    return s.str();
}

struct Verdict {
    bool pass = true;
    std::vector<std::string> notes;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        notes.push_back((ok ? "" : "!") + what);
    }
};

// verdict lines, printed in criterion order at the end
std::map<int, std::string> lines;
int failures = 0;

void report(int n, const std::string& title, const Verdict& v) {
    std::string detail;
    for (const auto& s : v.notes) detail += (detail.empty() ? "" : "; ") + s;
    lines[n] = std::string(v.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(n) + ": " + title + " [" +
               detail + "]";
    std::cerr << lines[n] << std::endl;
    failures += !v.pass;
}

int finish() {
    for (const auto& [n, line] : lines) std::cout << line << "\n";
    std::cout << (failures == 0 ? std::string("acceptance: all criteria passed")
                                : "acceptance: " + std::to_string(failures) + " criteria failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}

void guarded(int n, const std::string& title, const std::function<void(Verdict&)>& body) {
    Verdict v;
    try {
        body(v);
    } catch (const std::exception& e) {
        v.check(false, std::string("error: ") + e.what());
    }
    report(n, title, v);
}

std::string sci(double v) {
    std::ostringstream s;
    s.setf(std::ios::scientific);
    s.precision(2);
    s << v;
    return s.str();
}

std::string mean_pm(double mean, double std) { return fmt(mean) + " +- " + fmt(std); }

// ---- criterion 7 pieces ------------------------------------------------------

void property_gradients(Verdict& v) {
    for (const auto& [name, spec] : {std::pair{"mlp-mini", mlp_mini()}, std::pair{"cnn-mini", cnn_mini()}}) {
        double worst = 0.0;
        for (std::uint64_t seed : {0u, 1u, 2u}) worst = std::max(worst, gradient_check(spec, 200, seed));
        v.check(worst <= kGradTolerance, std::string("gradcheck ") + name + " " + sci(worst) + " <= " + sci(kGradTolerance));
    }
}

void property_stamping(Verdict& v) {
    const ImageShape s{28, 28, 1};
    LabeledDataset ds;
    ds.class_count = 10;
    ds.shape = s;
    Rng rng(7);
    ds.pixels.resize(1000 * s.pixels());
    for (auto& p : ds.pixels) p = static_cast<std::uint8_t>(rng.uniform_index(256));
    ds.labels.assign(1000, 0);
    bool local = true, idem = true;
    for (const auto& motif : builtin_motifs()) {
        for (const auto mode : {PlacementMode::fixed_bottom_right, PlacementMode::random_uniform}) {
            const Placement p{mode, 1};
            const auto stamped = stamp_dataset(ds, motif, p, 3);
            for (std::size_t i = 0; i < ds.size(); ++i) {
                Rng r = Rng::derive(3, 0, i);
                const Origin o = choose_origin(s, motif, p, r);
                std::set<std::size_t> expected, changed;
                for (const auto& c : motif.cells) {
                    const std::size_t at = (o.y + c.dy) * s.width + o.x + c.dx;
                    if (ds.image(i)[at] != c.intensity) expected.insert(at);
                    local = local && stamped.image(i)[at] == c.intensity;
                }
                for (std::size_t k = 0; k < s.pixels(); ++k)
                    if (stamped.image(i)[k] != ds.image(i)[k]) changed.insert(k);
                local = local && changed == expected;
            }
            if (mode == PlacementMode::fixed_bottom_right) idem = idem && stamp_dataset(stamped, motif, p, 9) == stamped;
        }
    }
    v.check(local, "stamping locality on 1000 images");
    v.check(idem, "fixed stamping idempotent");
}

void property_shift(Verdict& v) {
    bool ok = true;
    for (std::size_t k : {2u, 10u, 43u}) {
        std::vector<std::uint16_t> labels(k);
        std::iota(labels.begin(), labels.end(), std::uint16_t{0});
        auto cur = labels;
        for (std::size_t step = 1; step <= k; ++step) {
            cur = relabel_all(cur, k, strategy::RuleShift{});
            if (step == 1)
                for (std::size_t i = 0; i < k; ++i) ok = ok && cur[i] != labels[i];
            if (step < k) ok = ok && cur != labels;
        }
        ok = ok && cur == labels;
    }
    v.check(ok, "shift fixed-point free, order K for K in {2,10,43}");
}

void property_random_uniform(Verdict& v) {
    const std::size_t k = 10, n = 100000;
    const std::vector<std::uint16_t> labels(n, 0);
    const auto out = relabel_all(labels, k, strategy::RandomTarget{2024});
    std::vector<double> counts(k, 0.0);
    for (auto y : out) counts[y] += 1;
    double chi2 = 0.0;
    const double e = static_cast<double>(n) / k;
    for (double c : counts) chi2 += (c - e) * (c - e) / e;
    const double dof = k - 1.0;
    const double z = (chi2 - dof) / std::sqrt(2 * dof);
    v.check(std::abs(z) <= kSigmas, "random chi2 " + fmt(chi2) + " (z " + fmt(z) + ")");
}

void property_split(Verdict& v) {
    bool ok = true;
    for (std::size_t n : {2u, 10u, 11u, 60000u}) {
        const auto a = split_half_indices(n, 5), b = split_half_indices(n, 5);
        ok = ok && a.first == b.first && a.second == b.second;
        ok = ok && a.first.size() == (n + 1) / 2 && a.second.size() == n / 2;
        std::vector<int> seen(n, 0);
        for (auto i : a.first) seen.at(i)++;
        for (auto i : a.second) seen.at(i)++;
        ok = ok && std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
    }
    v.check(ok, "split_half partition for N in {2,10,11,60000}");
}

void property_checkpoint(Verdict& v, const fs::path& work) {
    bool ok = true;
    for (const auto& spec : {mlp_mini(), cnn_mini(), mlp_preset({1, 28, 28}, 10)}) {
        Digest d{};
        d[0] = 1;
        const Checkpoint c{spec, init_parameters<float>(spec, 11), {11, 30, d}};
        save_checkpoint(c, work / "roundtrip.mlck");
        const auto back = load_checkpoint(work / "roundtrip.mlck");
        ok = ok && back == c && serialize_checkpoint(back) == serialize_checkpoint(c);
    }
    v.check(ok, "checkpoint round trip bit-identical");
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

void property_determinism(Verdict& v, const fs::path& mnist_train, const fs::path& mnist_test, const fs::path& work) {
    ExperimentConfig c;
    c.dataset = "mnist-small";
    c.train_path = mnist_train;
    c.test_path = mnist_test;
    c.hidden_width = 32;
    c.hidden_layers = 1;
    c.train.epochs = 1;
    c.seeds = {0, 1};
    c.train_limit = 2000;
    c.test_limit = 500;
    c.strategy = strategy::RandomTarget{3};
    std::string bytes[2];
    for (int i = 0; i < 2; ++i) {
        c.output = work / ("determinism-" + std::to_string(i));
        fs::remove_all(c.output);
        const auto r = run_experiment(c, {nullptr, false});
        bytes[i] = slurp(r.run_dir / "report.csv");
    }
    v.check(!bytes[0].empty() && bytes[0] == bytes[1], "two identical runs give identical report bytes");
}

// ---- experiments ------------------------------------------------------------

struct Setup {
    fs::path mnist_train, mnist_test, fashion_train, fashion_test, work;
    std::uint32_t epochs = 0, cnn_epochs = 0;
    std::vector<std::uint64_t> seeds;
};

ExperimentConfig experiment(const Setup& s, bool fashion, const std::string& strat, PlacementMode mode) {
    ExperimentConfig c;
    c.dataset = fashion ? "fashion" : "mnist";
    c.train_path = fashion ? s.fashion_train : s.mnist_train;
    c.test_path = fashion ? s.fashion_test : s.mnist_test;
    c.motif = "I";
    c.placement = {mode, 1};
    c.strategy = parse_strategy(strat);
    c.preset = Preset::mlp;
    c.train.epochs = s.epochs;
    c.seeds = s.seeds;
    c.output = s.work / "runs";
    return c;
}

ExperimentResult run_logged(const ExperimentConfig& c) {
    const auto start = std::chrono::steady_clock::now();
    std::cerr << "== " << c.dataset << " " << strategy_name(c.strategy) << " " << placement_name(c.placement)
              << " epochs " << c.train.epochs << std::endl;
    auto r = run_experiment(c, {&std::cerr, true});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << render_report(r.report, ReportFormat::table) << "(" << fmt(secs, 0) << " s)" << std::endl;
    if (!r.ok()) throw Error("one or more seeds failed to train");
    if (r.report.rows.size() != 1) throw Error("expected one report row");
    return r;
}

fs::path convert_idx(const fs::path& dir, const std::string& prefix, const fs::path& out) {
    if (!fs::exists(out)) {
        auto d = load_idx(dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte"), 10);
        save_canonical(d, out);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance gate"};
    std::string data = "/root/data", work = "acceptance_work";
    Setup s;
    s.epochs = 15;
    s.cnn_epochs = 8;
    s.seeds = {0, 1, 2};
    bool properties_only = false;
    app.add_option("--data", data, "Directory with mnist/ and fashion/ IDX files");
    app.add_option("--work", work, "Scratch directory (converted data, runs, model cache)");
    app.add_option("--epochs", s.epochs, "Training epochs for the MLP models");
    app.add_option("--cnn-epochs", s.cnn_epochs, "Training epochs for the CNN models");
    app.add_option("--seeds", s.seeds, "Replicate seeds");
    app.add_flag("--properties-only", properties_only, "Run criteria 7 and 8 only");
    CLI11_PARSE(app, argc, argv);

    s.work = work;
    fs::create_directories(s.work / "data");
    try {
        s.mnist_train = convert_idx(fs::path(data) / "mnist", "train", s.work / "data" / "mnist-train.mlds");
        s.mnist_test = convert_idx(fs::path(data) / "mnist", "t10k", s.work / "data" / "mnist-test.mlds");
        s.fashion_train = convert_idx(fs::path(data) / "fashion", "train", s.work / "data" / "fashion-train.mlds");
        s.fashion_test = convert_idx(fs::path(data) / "fashion", "t10k", s.work / "data" / "fashion-test.mlds");
    } catch (const std::exception& e) {
        std::cout << "FAIL data preparation: " << e.what() << std::endl;
        return 1;
    }

    guarded(7, "property suite without training, under 60 s", [&](Verdict& v) {
        const auto start = std::chrono::steady_clock::now();
        property_gradients(v);
        property_stamping(v);
        property_shift(v);
        property_random_uniform(v);
        property_split(v);
        property_checkpoint(v, s.work);
        property_determinism(v, s.mnist_train, s.mnist_test, s.work);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        v.check(secs < kPropertySecondsMax, "took " + fmt(secs, 1) + " s");
    });

    guarded(8, "unauthorized label agreement before training", [&](Verdict& v) {
        const auto train = load_canonical(s.mnist_train);
        const auto motif = find_motif("I");
        const auto shift = build_locked_dataset(train, motif, {}, strategy::RuleShift{}, {}, 0);
        const double a_shift = unauthorized_label_agreement(shift);
        v.check(a_shift == 0.0, "shift " + fmt(a_shift, 6));

        const std::uint16_t t = 0;
        const auto single = build_locked_dataset(train, motif, {}, strategy::SingleTarget{t}, {}, 0);
        std::size_t total = 0, match = 0;
        for (std::size_t i = 0; i < single.data.size(); ++i) {
            if (single.provenance[i] != Provenance::unauthorized) continue;
            ++total;
            match += single.ground_truth[i] == t;
        }
        const double expect = static_cast<double>(match) / static_cast<double>(total);
        const double a_single = unauthorized_label_agreement(single);
        v.check(a_single == expect, "single " + fmt(a_single, 6) + " vs fraction of label 0 " + fmt(expect, 6));

        const auto random = build_locked_dataset(train, motif, {}, strategy::RandomTarget{0}, {}, 0);
        const double n = static_cast<double>(random.count(Provenance::unauthorized));
        const double a_random = unauthorized_label_agreement(random);
        const double sigma = std::sqrt(0.1 * 0.9 / n);
        v.check(std::abs(a_random - 0.1) <= kSigmas * sigma,
                "random " + fmt(a_random, 4) + " vs 0.1 +- " + fmt(kSigmas * sigma, 4));
    });

    if (properties_only) return finish();

    std::cerr << "training with " << s.epochs << " MLP epochs, " << s.cnn_epochs << " CNN epochs, " << s.seeds.size()
              << " seeds" << std::endl;

    std::optional<ExperimentResult> single;
    guarded(1, "MNIST baseline clean accuracy", [&](Verdict& v) {
        single = run_logged(experiment(s, false, "single:0", PlacementMode::fixed_bottom_right));
        const auto& row = single->report.rows[0];
        std::vector<double> b;
        for (const auto& seed : single->seeds) b.push_back(seed.baseline);
        const auto ms = mean_std(b);
        v.check(row.baseline >= kBaselineMin, "baseline " + mean_pm(ms.mean, ms.std) + " >= " + fmt(kBaselineMin));
    });

    guarded(2, "MNIST motif I single target", [&](Verdict& v) {
        if (!single) throw Error("experiment did not run");
        const auto& row = single->report.rows[0];
        v.check(row.trusted_mean >= kSingleTrustedMin, "trusted " + mean_pm(row.trusted_mean, row.trusted_std));
        v.check(row.unverified_mean >= kSingleUnverifiedLo && row.unverified_mean <= kSingleUnverifiedHi,
                "unverified " + mean_pm(row.unverified_mean, row.unverified_std) + " in [" + fmt(kSingleUnverifiedLo) +
                    ", " + fmt(kSingleUnverifiedHi) + "]");
        v.check(row.seeds == 3, std::to_string(row.seeds) + " seeds");
    });

    guarded(3, "MNIST motif I rule shift", [&](Verdict& v) {
        const auto r = run_logged(experiment(s, false, "shift", PlacementMode::fixed_bottom_right));
        const auto& row = r.report.rows[0];
        v.check(row.unverified_mean <= kShiftUnverifiedMax,
                "unverified " + mean_pm(row.unverified_mean, row.unverified_std) + " <= " + fmt(kShiftUnverifiedMax));
        v.notes.push_back("trusted " + mean_pm(row.trusted_mean, row.trusted_std));
    });

    guarded(4, "MNIST motif I random target", [&](Verdict& v) {
        const auto r = run_logged(experiment(s, false, "random:0", PlacementMode::fixed_bottom_right));
        const auto& row = r.report.rows[0];
        v.check(row.unverified_mean >= kRandomUnverifiedLo && row.unverified_mean <= kRandomUnverifiedHi,
                "unverified " + mean_pm(row.unverified_mean, row.unverified_std) + " in [" + fmt(kRandomUnverifiedLo) +
                    ", " + fmt(kRandomUnverifiedHi) + "]");
        v.notes.push_back("trusted " + mean_pm(row.trusted_mean, row.trusted_std));
    });

    guarded(5, "FashionMNIST motif I single target", [&](Verdict& v) {
        const auto r = run_logged(experiment(s, true, "single:0", PlacementMode::fixed_bottom_right));
        const auto& row = r.report.rows[0];
        v.check(row.trusted_mean >= kFashionTrustedMin, "trusted " + mean_pm(row.trusted_mean, row.trusted_std) +
                                                            " >= " + fmt(kFashionTrustedMin));
        v.check(row.unverified_mean <= kFashionUnverifiedMax, "unverified " +
                                                                  mean_pm(row.unverified_mean, row.unverified_std) +
                                                                  " <= " + fmt(kFashionUnverifiedMax));
        v.notes.push_back("baseline " + fmt(row.baseline));
    });

    guarded(6, "MNIST random placement single target", [&](Verdict& v) {
        // the MLP cannot find a motif that moves; a small CNN can
        auto c = experiment(s, false, "single:0", PlacementMode::random_uniform);
        c.preset = Preset::cnn;
        c.conv_width = 16;
        c.dense_units = 128;
        c.train.lr = 0.02;
        c.train.epochs = s.cnn_epochs;
        const auto r = run_logged(c);
        const auto& row = r.report.rows[0];
        v.check(row.trusted_mean >= kRandomPlacementTrustedMin,
                "trusted " + mean_pm(row.trusted_mean, row.trusted_std) + " >= " + fmt(kRandomPlacementTrustedMin));
        v.check(row.unverified_mean >= kRandomPlacementUnverifiedLo &&
                    row.unverified_mean <= kRandomPlacementUnverifiedHi,
                "unverified " + mean_pm(row.unverified_mean, row.unverified_std) + " in [" +
                    fmt(kRandomPlacementUnverifiedLo) + ", " + fmt(kRandomPlacementUnverifiedHi) + "]");
    });

    return finish();
}
