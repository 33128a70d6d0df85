#pragma once

#include "dcn/embedding.hpp"
#include "dcn/linalg.hpp"
#include "dcn/model.hpp"
#include "dcn/poly.hpp"
#include "dcn/rng.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dcn::data {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int kCriteoDense = 13;
constexpr int kCriteoCategorical = 26;
constexpr std::int64_t kMissingInt = std::numeric_limits<std::int64_t>::min();
inline const std::string kMissingToken = "__MISSING__";

struct Example {
    Vector dense;
    std::vector<Index> categorical;  // one id per field
    int label = 0;
};

struct DatasetSchema {
    Index dense_count = 0;
    std::vector<embed::FieldSpec> fields;
    Index num_classes = 2;
    // Per-dense-feature standardization fitted on the training split;
    // empty means features are used as-is (Criteo log transform, synthetic).
    Vector dense_mean;
    Vector dense_std;
};

struct Dataset {
    DatasetSchema schema;
    std::vector<Example> examples;

    std::size_t size() const { return examples.size(); }
};

// One raw Criteo record: label, 13 integers (missing -> kMissingInt),
// 26 categorical tokens (missing -> kMissingToken).
struct CriteoRecord {
    int label = 0;
    std::array<std::int64_t, kCriteoDense> ints{};
    std::array<std::string, kCriteoCategorical> cats;
};

CriteoRecord parse_criteo_line(const std::string& line, std::size_t line_number = 0);

// Signed log transform: sign(v) * log(1 + |v|); the missing sentinel maps to 0.
double log_transform(std::int64_t v);
double log_transform(double v);

// Frequency-ordered vocabulary with an OOV slot appended last.
class Vocabulary {
  public:
    static Vocabulary build(const std::vector<std::string>& tokens, std::uint64_t min_count);

    Index id_of(const std::string& token) const;  // unseen -> OOV id
    Index oov_id() const { return static_cast<Index>(tokens_.size()); }
    Index size() const { return static_cast<Index>(tokens_.size()) + 1; }  // includes OOV

    void save(const std::string& path) const;  // one token per line, OOV last
    static Vocabulary load(const std::string& path);

  private:
    std::vector<std::string> tokens_;          // id = position
    std::map<std::string, Index> index_;
};

struct Split {
    std::vector<Example> train, val, test;
};

// First train_fraction of the stream (record order stands in for days) is
// the training split; the remaining holdout is shuffled and halved into
// equal validation and test sets.
Split split_temporal(std::vector<Example> records, double train_fraction, Rng& rng);

// Random train_fraction / holdout split, holdout halved into val and test.
Split split_random(std::vector<Example> records, double train_fraction, Rng& rng);

// ---------------------------------------------------------------------------
// Synthetic data with a known logit polynomial and exact Bayes logloss.

struct SyntheticSpec {
    Index dim = 0;
    poly::SparsePolynomial logit;
    std::size_t samples = 0;
    std::uint64_t seed = 0;
};

struct SyntheticDataset {
    SyntheticSpec spec;
    // Mean binary entropy of the true conditional probability over the drawn
    // inputs: the expected logloss of the Bayes predictor on this dataset.
    double bayes_logloss = 0.0;
    std::vector<Example> examples;

    DatasetSchema schema() const;
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

void save_synthetic(const SyntheticDataset& ds, const std::string& path);
SyntheticDataset load_synthetic(const std::string& path);

// Text form like "2.5*x1*x2 + 2.5*x1 - 0.5*x3^2"; variables are x1..xd.
poly::SparsePolynomial parse_polynomial(const std::string& text, Index dim);

// ---------------------------------------------------------------------------
// File loaders.

// Criteo-format TSV -> dataset with signed-log dense features plus a
// missing-indicator per integer feature, vocabularies built from the given
// records (training split only).
struct CriteoPipeline {
    std::vector<Vocabulary> vocabs;
    DatasetSchema schema;

    static CriteoPipeline fit(const std::vector<CriteoRecord>& train_records,
                              std::uint64_t min_count);
    Example transform(const CriteoRecord& record) const;
};

std::vector<CriteoRecord> read_criteo_file(const std::string& path);

// Generic numeric CSV with a configurable label column. All non-label
// columns are dense. Labels are remapped to 0..K-1 in sorted value order.
Dataset read_csv_dataset(const std::string& path, int label_column, Index num_classes);

// Standardize dense features with mean/std fitted on `fit_on`, applied in
// place to every split; constant features get unit std.
void standardize(std::vector<Example>& fit_on, std::vector<std::vector<Example>*> apply_to,
                 DatasetSchema& schema);

// FNV-1a content hash for run manifests.
std::uint64_t file_fingerprint(const std::string& path);

}  // namespace dcn::data
