#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mlock/certificate.hpp"
#include "mlock/dataset.hpp"
#include "mlock/eval.hpp"
#include "mlock/interference.hpp"
#include "mlock/train.hpp"

namespace mlock {

/// How the training set is divided into authorized and unauthorized samples.
struct SplitMode {
    enum class Kind { equal, bernoulli } kind = Kind::equal;
    double p = 0.5;  // probability of authorized, bernoulli only
    friend bool operator==(const SplitMode&, const SplitMode&) = default;
};

/// "equal" or "bernoulli:<p>".
SplitMode parse_split(std::string_view text);
std::string split_name(const SplitMode& split);

enum class Provenance : std::uint8_t { authorized = 0, unauthorized = 1 };

/// Merged training set. Authorized samples are stamped and keep their labels;
/// unauthorized samples are clean and carry relabeled labels.
struct LockedDataset {
    LabeledDataset data;
    std::vector<Provenance> provenance;
    std::vector<std::uint16_t> ground_truth;
    Digest config_digest{};

    std::size_t count(Provenance p) const;
};

/// Split, stamp the authorized part, relabel the unauthorized part, then
/// shuffle the union. Every random choice derives from `seed`.
LockedDataset build_locked_dataset(const LabeledDataset& train, const CertificateMotif& motif,
                                   const Placement& placement, const InterferenceStrategy& strategy,
                                   const SplitMode& split, std::uint64_t seed);

/// Fraction of unauthorized samples whose training label equals the ground truth.
/// Throws InvalidArgument when there are none.
double unauthorized_label_agreement(const LockedDataset& locked);

struct EvalSets {
    LabeledDataset trusted;     // every image stamped, true labels
    LabeledDataset unverified;  // untouched copy
};

EvalSets build_eval_sets(const LabeledDataset& test, const CertificateMotif& motif, const Placement& placement,
                         std::uint64_t seed);

enum class Preset { mlp, cnn };

/// One experiment: a dataset, a motif and placement, an interference strategy,
/// and the replicate seeds whose results are aggregated.
///
/// Text form is flat "key = value" lines; see README for the schema.
struct ExperimentConfig {
    std::string dataset;
    std::filesystem::path train_path, test_path;
    std::string motif = "I";
    std::filesystem::path motif_file;  // optional catalog searched before the built-in motifs
    Placement placement;
    InterferenceStrategy strategy = strategy::SingleTarget{0};
    SplitMode split;
    Preset preset = Preset::mlp;
    std::size_t hidden_width = 900, hidden_layers = 4;  // mlp
    std::size_t conv_width = 32, dense_units = 512;     // cnn
    TrainConfig train;                                  // train.seed is replaced per replicate
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::size_t train_limit = 0, test_limit = 0;  // use only the first N samples; 0 means all
    double dark_threshold = 30.0;
    std::filesystem::path output = "runs";
};

/// Relative paths are resolved against `base_dir`. Throws ConfigError listing
/// every problem found.
ExperimentConfig parse_experiment_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Canonical text form; parses back to an equal configuration.
std::string format_experiment_config(const ExperimentConfig& config);

CertificateMotif resolve_motif(const ExperimentConfig& config);
NetworkSpec make_network(const ExperimentConfig& config, const ImageShape& shape, std::size_t class_count);

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    double baseline = 0.0, trusted = 0.0, unverified = 0.0;  // percent
    double label_agreement = 0.0;                            // unauthorized training labels vs truth
    std::vector<std::optional<double>> unverified_per_class;
};

struct ExperimentResult {
    EvalReport report;
    std::vector<SeedOutcome> seeds;
    std::filesystem::path run_dir;
    std::optional<double> dark_fraction;  // fixed placement only

    bool ok() const;
};

struct RunOptions {
    std::ostream* log = nullptr;  // epoch and progress lines
    bool reuse_checkpoints = true;
};

/// Trains a baseline and a locked model per seed, evaluates both and writes
/// <output>/<digest>/ with the checkpoints, report.csv, seeds.csv and the
/// canonical config. Diverged seeds are recorded as failed and left out of the
/// aggregate. Trained checkpoints are cached under <output>/cache keyed by
/// their training digest.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

}  // namespace mlock
