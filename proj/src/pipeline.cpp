#include "mlock/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "byte_io.hpp"
#include "mlock/error.hpp"

namespace mlock {

namespace {

// Rng::derive streams; keep them distinct per use
constexpr std::uint64_t split_stream = 1;
constexpr std::uint64_t stamp_stream = 2;
constexpr std::uint64_t merge_stream = 3;
constexpr std::uint64_t trusted_stream = 4;
constexpr std::uint64_t relabel_seed_stream = 5;

void put_text(detail::ByteWriter& w, std::string_view s) {
    w.u64(s.size());
    w.text(s);
}

std::string number(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
    const auto r = std::from_chars(text.data(), text.data() + text.size(), out);
    return !text.empty() && r.ec == std::errc{} && r.ptr == text.data() + text.size();
}

std::string preset_name(Preset p) { return p == Preset::mlp ? "mlp" : "cnn"; }

LabeledDataset prefix(const LabeledDataset& d, std::size_t limit) {
    if (limit == 0 || limit >= d.size()) return d;
    std::vector<std::size_t> idx(limit);
    for (std::size_t i = 0; i < limit; ++i) idx[i] = i;
    return subset(d, idx);
}

std::string short_hex(const Digest& d) { return to_hex(d).substr(0, 16); }

std::span<const std::uint8_t> as_bytes(const Digest& d) { return d; }

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

SplitMode parse_split(std::string_view text) {
    if (text == "equal") return {};
    if (text.starts_with("bernoulli:")) {
        double p = 0;
        if (parse_number(text.substr(10), p) && p > 0.0 && p < 1.0) return {SplitMode::Kind::bernoulli, p};
    }
    throw InvalidArgument("bad split '" + std::string(text) + "' (expected equal or bernoulli:<p> with 0 < p < 1)");
}

std::string split_name(const SplitMode& split) {
    return split.kind == SplitMode::Kind::equal ? "equal" : "bernoulli:" + number(split.p);
}

std::size_t LockedDataset::count(Provenance p) const {
    return static_cast<std::size_t>(std::count(provenance.begin(), provenance.end(), p));
}

LockedDataset build_locked_dataset(const LabeledDataset& train, const CertificateMotif& motif,
                                   const Placement& placement, const InterferenceStrategy& strategy,
                                   const SplitMode& split, std::uint64_t seed) {
    train.validate();
    check_fits(train.shape, motif, placement);
    const std::uint64_t split_seed = Rng::derive(seed, split_stream).next();
    const IndexSplit parts = split.kind == SplitMode::Kind::equal
                                 ? split_half_indices(train.size(), split_seed)
                                 : split_bernoulli_indices(train.size(), split.p, split_seed);

    const LabeledDataset authorized =
        stamp_dataset(subset(train, parts.first), motif, placement, Rng::derive(seed, stamp_stream).next());
    const LabeledDataset unauthorized = apply_to_dataset(subset(train, parts.second), strategy);

    const std::size_t n = train.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng merge = Rng::derive(seed, merge_stream);
    merge.shuffle(std::span(order));

    LockedDataset locked;
    locked.data.name = train.name;
    locked.data.class_count = train.class_count;
    locked.data.shape = train.shape;
    locked.data.pixels.resize(train.pixels.size());
    locked.data.labels.resize(n);
    locked.provenance.resize(n);
    locked.ground_truth.resize(n);
    const std::size_t a = parts.first.size();
    for (std::size_t dst = 0; dst < n; ++dst) {
        const std::size_t src = order[dst];
        const bool auth = src < a;
        const LabeledDataset& from = auth ? authorized : unauthorized;
        const std::size_t local = auth ? src : src - a;
        const auto img = from.image(local);
        std::copy(img.begin(), img.end(), locked.data.image(dst).begin());
        locked.data.labels[dst] = from.labels[local];
        locked.provenance[dst] = auth ? Provenance::authorized : Provenance::unauthorized;
        locked.ground_truth[dst] = train.labels[auth ? parts.first[local] : parts.second[local]];
    }

    detail::ByteWriter w;
    w.text("mlock-locked-v1");
    w.bytes(as_bytes(dataset_digest(train)));
    put_text(w, format_motif(motif));
    put_text(w, placement_name(placement));
    w.u64(placement.margin);
    put_text(w, strategy_name(strategy));
    put_text(w, split_name(split));
    w.u64(seed);
    locked.config_digest = sha256(w.buffer());
    return locked;
}

double unauthorized_label_agreement(const LockedDataset& locked) {
    std::size_t total = 0, same = 0;
    for (std::size_t i = 0; i < locked.provenance.size(); ++i) {
        if (locked.provenance[i] != Provenance::unauthorized) continue;
        ++total;
        same += locked.data.labels[i] == locked.ground_truth[i];
    }
    if (total == 0) throw InvalidArgument("locked dataset has no unauthorized samples");
    return static_cast<double>(same) / static_cast<double>(total);
}

EvalSets build_eval_sets(const LabeledDataset& test, const CertificateMotif& motif, const Placement& placement,
                         std::uint64_t seed) {
    test.validate();
    return {stamp_dataset(test, motif, placement, Rng::derive(seed, trusted_stream).next()), test};
}

ExperimentConfig parse_experiment_config(std::string_view text, const std::filesystem::path& base_dir) {
    ExperimentConfig c;
    std::vector<std::string> problems;
    std::map<std::string, std::pair<std::string, std::size_t>> values;

    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            problems.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
            continue;
        }
        const std::string key = trim(std::string_view(t).substr(0, eq));
        const std::string value = trim(std::string_view(t).substr(eq + 1));
        if (key.empty()) {
            problems.push_back("line " + std::to_string(line_no) + ": empty key");
        } else if (values.contains(key)) {
            problems.push_back("line " + std::to_string(line_no) + ": duplicate key '" + key + "' (first on line " +
                               std::to_string(values[key].second) + ")");
        } else {
            values[key] = {value, line_no};
        }
    }

    auto where = [&](const std::string& key) { return "line " + std::to_string(values[key].second) + ": "; };
    auto take = [&](const std::string& key, bool required) -> std::optional<std::string> {
        const auto it = values.find(key);
        if (it == values.end()) {
            if (required) problems.push_back("missing required key '" + key + "'");
            return std::nullopt;
        }
        std::string v = it->second.first;
        if (v.empty()) {
            problems.push_back(where(key) + "empty value for '" + key + "'");
            values.erase(it);
            return std::nullopt;
        }
        return v;
    };
    auto take_size = [&](const std::string& key, std::size_t& out, bool positive) {
        if (auto v = take(key, false)) {
            std::size_t n = 0;
            if (!parse_number(*v, n) || (positive && n == 0)) {
                problems.push_back(where(key) + key + " must be a " + (positive ? "positive" : "non-negative") +
                                   " integer, got '" + *v + "'");
            } else {
                out = n;
            }
        }
    };
    auto take_double = [&](const std::string& key, double& out, double lo, double hi, bool hi_open) {
        if (auto v = take(key, false)) {
            double d = 0;
            if (!parse_number(*v, d) || !(d >= lo) || (hi_open ? !(d < hi) : !(d <= hi))) {
                problems.push_back(where(key) + key + " must be a number in [" + number(lo) + ", " + number(hi) +
                                   (hi_open ? ")" : "]") + ", got '" + *v + "'");
            } else {
                out = d;
            }
        }
    };
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };

    if (auto v = take("schema", true); v && *v != "1") {
        problems.push_back(where("schema") + "unsupported schema '" + *v + "' (expected 1)");
    }
    if (auto v = take("dataset", true)) c.dataset = *v;
    if (auto v = take("train", true)) c.train_path = resolve(*v);
    if (auto v = take("test", true)) c.test_path = resolve(*v);
    if (auto v = take("motif_file", false)) c.motif_file = resolve(*v);
    if (auto v = take("motif", false)) c.motif = *v;
    if (auto v = take("placement", false)) {
        try {
            c.placement.mode = parse_placement_mode(*v);
        } catch (const InvalidArgument& e) {
            problems.push_back(where("placement") + e.what());
        }
    }
    take_size("margin", c.placement.margin, false);
    if (auto v = take("strategy", false)) {
        try {
            c.strategy = parse_strategy(*v);
        } catch (const InvalidArgument& e) {
            problems.push_back(where("strategy") + e.what());
        }
    }
    if (auto v = take("split", false)) {
        try {
            c.split = parse_split(*v);
        } catch (const InvalidArgument& e) {
            problems.push_back(where("split") + e.what());
        }
    }
    if (auto v = take("preset", false)) {
        if (*v == "mlp") {
            c.preset = Preset::mlp;
        } else if (*v == "cnn") {
            c.preset = Preset::cnn;
        } else {
            problems.push_back(where("preset") + "unknown preset '" + *v + "' (expected mlp or cnn)");
        }
    }
    take_size("hidden_width", c.hidden_width, true);
    take_size("hidden_layers", c.hidden_layers, false);
    take_size("conv_width", c.conv_width, true);
    take_size("dense_units", c.dense_units, true);
    if (auto v = take("epochs", false)) {
        std::uint32_t e = 0;
        if (!parse_number(*v, e) || e == 0) {
            problems.push_back(where("epochs") + "epochs must be a positive integer, got '" + *v + "'");
        } else {
            c.train.epochs = e;
        }
    }
    take_size("batch_size", c.train.batch_size, true);
    take_double("lr", c.train.lr, 0.0, 1e6, false);
    if (values.contains("lr") && !(c.train.lr > 0.0)) problems.push_back(where("lr") + "lr must be positive");
    take_double("momentum", c.train.momentum, 0.0, 1.0, true);
    if (auto v = take("seeds", false)) {
        c.seeds.clear();
        std::string item;
        std::istringstream list(*v);
        bool bad = false;
        while (std::getline(list, item, ',')) {
            std::uint64_t s = 0;
            const std::string t = trim(item);
            if (!parse_number(t, s)) {
                problems.push_back(where("seeds") + "bad seed '" + t + "'");
                bad = true;
            } else if (std::find(c.seeds.begin(), c.seeds.end(), s) != c.seeds.end()) {
                problems.push_back(where("seeds") + "duplicate seed " + t);
                bad = true;
            } else {
                c.seeds.push_back(s);
            }
        }
        if (c.seeds.empty() && !bad) problems.push_back(where("seeds") + "seeds must not be empty");
    }
    take_size("train_limit", c.train_limit, false);
    take_size("test_limit", c.test_limit, false);
    take_double("dark_threshold", c.dark_threshold, 0.0, 256.0, false);
    c.output = resolve(take("output", false).value_or(c.output.string()));

    static const char* const known[] = {"schema",      "dataset",      "train",        "test",        "motif_file",
                                        "motif",       "placement",    "margin",       "strategy",    "split",
                                        "preset",      "hidden_width", "hidden_layers", "conv_width", "dense_units",
                                        "epochs",      "batch_size",   "lr",           "momentum",    "seeds",
                                        "train_limit", "test_limit",   "dark_threshold", "output"};
    for (const auto& [key, v] : values) {
        if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
            problems.push_back("line " + std::to_string(v.second) + ": unknown key '" + key + "'");
        }
    }

    if (c.motif_file.empty()) {
        try {
            find_motif(c.motif);
        } catch (const InvalidArgument& e) {
            problems.push_back(e.what());
        }
    }
    if (const auto* t = std::get_if<strategy::SingleTarget>(&c.strategy); t && t->target >= 65535) {
        problems.push_back("single target out of range");
    }

    if (!problems.empty()) throw ConfigError(std::move(problems));
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_experiment_config(buffer.str(), path.parent_path());
}

std::string format_experiment_config(const ExperimentConfig& c) {
    std::string seeds;
    for (std::size_t i = 0; i < c.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(c.seeds[i]);
    std::string s;
    auto kv = [&](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
    kv("schema", "1");
    kv("dataset", c.dataset);
    kv("train", c.train_path.string());
    kv("test", c.test_path.string());
    kv("motif", c.motif);
    if (!c.motif_file.empty()) kv("motif_file", c.motif_file.string());
    kv("placement", placement_name(c.placement));
    kv("margin", std::to_string(c.placement.margin));
    kv("strategy", strategy_name(c.strategy));
    kv("split", split_name(c.split));
    kv("preset", preset_name(c.preset));
    kv("hidden_width", std::to_string(c.hidden_width));
    kv("hidden_layers", std::to_string(c.hidden_layers));
    kv("conv_width", std::to_string(c.conv_width));
    kv("dense_units", std::to_string(c.dense_units));
    kv("epochs", std::to_string(c.train.epochs));
    kv("batch_size", std::to_string(c.train.batch_size));
    kv("lr", number(c.train.lr));
    kv("momentum", number(c.train.momentum));
    kv("seeds", seeds);
    kv("train_limit", std::to_string(c.train_limit));
    kv("test_limit", std::to_string(c.test_limit));
    kv("dark_threshold", number(c.dark_threshold));
    kv("output", c.output.string());
    return s;
}

CertificateMotif resolve_motif(const ExperimentConfig& config) {
    if (!config.motif_file.empty()) {
        for (auto& m : load_motif_file(config.motif_file)) {
            if (m.id == config.motif) return m;
        }
    }
    return find_motif(config.motif);
}

NetworkSpec make_network(const ExperimentConfig& config, const ImageShape& shape, std::size_t class_count) {
    const Shape input{shape.channels, shape.height, shape.width};
    return config.preset == Preset::mlp ? mlp_preset(input, class_count, config.hidden_width, config.hidden_layers)
                                        : cnn_preset(input, class_count, config.conv_width, config.dense_units);
}

bool ExperimentResult::ok() const {
    return !seeds.empty() && std::none_of(seeds.begin(), seeds.end(), [](const SeedOutcome& s) { return s.failed; });
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    auto log = [&](const std::string& line) {
        if (options.log) *options.log << line << std::endl;
    };
    if (config.seeds.empty()) throw ConfigError({"seeds must not be empty"});

    LabeledDataset train_set = prefix(load_canonical(config.train_path), config.train_limit);
    LabeledDataset test_set = prefix(load_canonical(config.test_path), config.test_limit);
    if (train_set.shape != test_set.shape || train_set.class_count != test_set.class_count) {
        throw ShapeError("train and test datasets differ in image shape or class count");
    }
    if (train_set.class_count < 2) throw InvalidArgument("experiments need at least 2 classes");
    const CertificateMotif motif = resolve_motif(config);
    check_fits(train_set.shape, motif, config.placement);
    const NetworkSpec spec = make_network(config, train_set.shape, train_set.class_count);
    validate(spec);

    const Digest train_digest = dataset_digest(train_set);
    const Digest test_digest = dataset_digest(test_set);

    // the run identity covers every setting plus the data, but not where files live
    ExperimentConfig identity = config;
    identity.train_path = identity.test_path = identity.output = identity.motif_file = std::filesystem::path();
    detail::ByteWriter idw;
    idw.text("mlock-experiment-v1");
    put_text(idw, format_experiment_config(identity));
    put_text(idw, format_motif(motif));
    idw.bytes(as_bytes(train_digest));
    idw.bytes(as_bytes(test_digest));
    const Digest run_digest = sha256(idw.buffer());

    ExperimentResult result;
    result.report.config_digest = run_digest;
    result.run_dir = config.output / short_hex(run_digest);
    const auto cache_dir = config.output / "cache";
    std::error_code ec;
    std::filesystem::create_directories(result.run_dir, ec);
    if (!ec) std::filesystem::create_directories(cache_dir, ec);
    if (ec) throw IoError("cannot create run directory " + result.run_dir.string() + ": " + ec.message());
    write_text_atomic(result.run_dir / "config.txt", format_experiment_config(config));
    log("run " + result.run_dir.string());

    if (config.placement.mode == PlacementMode::fixed_bottom_right) {
        result.dark_fraction = verify_region_dark(test_set, motif, config.placement, config.dark_threshold);
        log("stamping region dark (mean < " + number(config.dark_threshold) + ") in " +
            number(*result.dark_fraction * 100.0) + "% of clean test images");
    }

    auto obtain = [&](const std::string& role, std::uint64_t seed, const LabeledDataset& data,
                      std::span<const std::uint8_t> extra) {
        TrainConfig tc = config.train;
        tc.seed = seed;
        const Digest digest = train_config_digest(spec, tc, extra);
        const auto cached = cache_dir / (to_hex(digest) + ".mlck");
        const auto target = result.run_dir / ("seed-" + std::to_string(seed) + "-" + role + ".mlck");
        Checkpoint ckpt;
        bool have = false;
        if (options.reuse_checkpoints && std::filesystem::exists(cached)) {
            try {
                ckpt = load_checkpoint(cached);
                have = ckpt.metadata.config_digest == digest && ckpt.spec == spec;
            } catch (const Error&) {
                have = false;
            }
            if (have) log("[seed " + std::to_string(seed) + " " + role + "] reusing " + cached.string());
        }
        if (!have) {
            const std::string tag = "[seed " + std::to_string(seed) + " " + role + "] ";
            ckpt = train(spec, to_training_data(data), tc, digest, [&](const EpochStats& s) {
                log(tag + "epoch " + std::to_string(s.epoch) + "/" + std::to_string(tc.epochs) + " loss " +
                    number(s.mean_loss) + " train acc " + number(s.train_accuracy));
            });
            save_checkpoint(ckpt, cached);
        }
        save_checkpoint(ckpt, target);
        return ckpt;
    };

    for (const std::uint64_t seed : config.seeds) {
        SeedOutcome out;
        out.seed = seed;
        try {
            InterferenceStrategy strat = config.strategy;
            if (auto* r = std::get_if<strategy::RandomTarget>(&strat)) {
                r->seed = Rng::derive(r->seed, relabel_seed_stream, seed).next();
            }
            const LockedDataset locked =
                build_locked_dataset(train_set, motif, config.placement, strat, config.split, seed);
            out.label_agreement = unauthorized_label_agreement(locked);
            log("[seed " + std::to_string(seed) + "] " + std::to_string(locked.count(Provenance::authorized)) +
                " authorized, " + std::to_string(locked.count(Provenance::unauthorized)) +
                " unauthorized, label agreement " + number(out.label_agreement));

            detail::ByteWriter bx;
            bx.text("baseline");
            bx.bytes(as_bytes(train_digest));
            const Checkpoint baseline = obtain("baseline", seed, train_set, bx.buffer());
            detail::ByteWriter lx;
            lx.text("locked");
            lx.bytes(as_bytes(locked.config_digest));
            const Checkpoint locked_model = obtain("locked", seed, locked.data, lx.buffer());

            const EvalSets sets = build_eval_sets(test_set, motif, config.placement, seed);
            out.baseline = accuracy(baseline, test_set);
            out.trusted = accuracy(locked_model, sets.trusted);
            const auto unverified_pred = predict(locked_model, sets.unverified);
            out.unverified = accuracy(unverified_pred, sets.unverified.labels);
            out.unverified_per_class =
                per_class_accuracy(unverified_pred, sets.unverified.labels, sets.unverified.class_count);
            log("[seed " + std::to_string(seed) + "] baseline " + number(out.baseline) + " trusted " +
                number(out.trusted) + " unverified " + number(out.unverified));
        } catch (const TrainingDiverged& e) {
            out.failed = true;
            out.error = e.what();
            log("[seed " + std::to_string(seed) + "] failed: " + out.error);
        }
        result.seeds.push_back(std::move(out));
    }

    std::vector<double> baseline, trusted, unverified;
    for (const auto& s : result.seeds) {
        if (s.failed) continue;
        baseline.push_back(s.baseline);
        trusted.push_back(s.trusted);
        unverified.push_back(s.unverified);
    }
    if (!baseline.empty()) {
        const MeanStd t = mean_std(trusted), u = mean_std(unverified);
        result.report.rows.push_back({config.dataset, strategy_name(config.strategy), motif.id,
                                      placement_name(config.placement), mean_std(baseline).mean, t.mean, t.std, u.mean,
                                      u.std, baseline.size()});
    }
    result.report.validate();
    write_text_atomic(result.run_dir / "report.csv", render_report(result.report, ReportFormat::csv));

    std::string per_seed = "seed,status,baseline,trusted,unverified,label_agreement\n";
    for (const auto& s : result.seeds) {
        per_seed += std::to_string(s.seed) + "," + (s.failed ? "failed" : "ok") + "," +
                    (s.failed ? ",,," : number(s.baseline) + "," + number(s.trusted) + "," + number(s.unverified) +
                                            "," + number(s.label_agreement)) +
                    "\n";
    }
    write_text_atomic(result.run_dir / "seeds.csv", per_seed);
    return result;
}

}  // namespace mlock
