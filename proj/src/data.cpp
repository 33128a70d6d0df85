#include "dcn/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dcn::data {

CriteoRecord parse_criteo_line(const std::string& line, std::size_t line_number) {
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            cols.push_back(line.substr(start));
            break;
        }
        cols.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    if (cols.size() != 1 + kCriteoDense + kCriteoCategorical)
        throw ParseError("line " + std::to_string(line_number) + ": expected 40 columns, got " +
                         std::to_string(cols.size()));

    CriteoRecord rec;
    try {
        rec.label = std::stoi(cols[0]);
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_number) + ": bad label '" + cols[0] + "'");
    }
    if (rec.label != 0 && rec.label != 1)
        throw ParseError("line " + std::to_string(line_number) + ": label must be 0 or 1");
    for (int i = 0; i < kCriteoDense; ++i) {
        const std::string& c = cols[static_cast<std::size_t>(1 + i)];
        if (c.empty()) {
            rec.ints[static_cast<std::size_t>(i)] = kMissingInt;
        } else {
            try {
                rec.ints[static_cast<std::size_t>(i)] = std::stoll(c);
            } catch (const std::exception&) {
                throw ParseError("line " + std::to_string(line_number) + ": bad integer '" + c + "'");
            }
        }
    }
    for (int i = 0; i < kCriteoCategorical; ++i) {
        const std::string& c = cols[static_cast<std::size_t>(1 + kCriteoDense + i)];
        rec.cats[static_cast<std::size_t>(i)] = c.empty() ? kMissingToken : c;
    }
    return rec;
}

double log_transform(std::int64_t v) {
    if (v == kMissingInt) return 0.0;
    return log_transform(static_cast<double>(v));
}

double log_transform(double v) {
    const double sign = v < 0 ? -1.0 : 1.0;
    return sign * std::log1p(std::abs(v));
}

Vocabulary Vocabulary::build(const std::vector<std::string>& tokens, std::uint64_t min_count) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& t : tokens) ++counts[t];
    std::vector<std::pair<std::string, std::uint64_t>> kept;
    for (const auto& [tok, n] : counts) {
        if (n >= min_count) kept.emplace_back(tok, n);
    }
    // descending frequency, ties by token order
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (const auto& [tok, n] : kept) {
        v.index_[tok] = static_cast<Index>(v.tokens_.size());
        v.tokens_.push_back(tok);
    }
    return v;
}

Index Vocabulary::id_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? oov_id() : it->second;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw ParseError("cannot write vocabulary " + path);
    for (const auto& t : tokens_) os << t << '\n';
    os << "__OOV__" << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot read vocabulary " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
    if (lines.empty() || lines.back() != "__OOV__")
        throw ParseError("vocabulary " + path + " missing OOV sentinel");
    lines.pop_back();
    Vocabulary v;
    for (auto& t : lines) {
        v.index_[t] = static_cast<Index>(v.tokens_.size());
        v.tokens_.push_back(std::move(t));
    }
    return v;
}

namespace {

Split halve_holdout(std::vector<Example> train, std::vector<Example> holdout, Rng& rng) {
    if (train.empty() || holdout.size() < 2)
        throw ParseError("split: train or holdout would be empty");
    // Fisher-Yates with the seeded stream
    for (std::size_t i = holdout.size() - 1; i > 0; --i) {
        const std::size_t j = rng.uniform_int(i + 1);
        std::swap(holdout[i], holdout[j]);
    }
    Split s;
    s.train = std::move(train);
    const std::size_t half = holdout.size() / 2;
    s.val.assign(holdout.begin(), holdout.begin() + static_cast<std::ptrdiff_t>(half));
    s.test.assign(holdout.begin() + static_cast<std::ptrdiff_t>(half), holdout.end());
    return s;
}

}  // namespace

Split split_temporal(std::vector<Example> records, double train_fraction, Rng& rng) {
    const std::size_t cut =
        static_cast<std::size_t>(static_cast<double>(records.size()) * train_fraction);
    std::vector<Example> train(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(cut));
    std::vector<Example> holdout(records.begin() + static_cast<std::ptrdiff_t>(cut), records.end());
    return halve_holdout(std::move(train), std::move(holdout), rng);
}

Split split_random(std::vector<Example> records, double train_fraction, Rng& rng) {
    for (std::size_t i = records.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_int(i);
        std::swap(records[i - 1], records[j]);
    }
    return split_temporal(std::move(records), train_fraction, rng);
}

DatasetSchema SyntheticDataset::schema() const {
    DatasetSchema s;
    s.dense_count = spec.dim;
    s.num_classes = 2;
    return s;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
    require(spec.dim >= 1, "generate_synthetic: dim must be >= 1");
    SyntheticDataset ds;
    ds.spec = spec;
    Rng rng(spec.seed);
    double entropy_sum = 0.0;
    ds.examples.reserve(spec.samples);
    for (std::size_t i = 0; i < spec.samples; ++i) {
        Example ex;
        ex.dense = Vector(spec.dim);
        for (Index j = 0; j < spec.dim; ++j) ex.dense[j] = rng.uniform(-1.0, 1.0);
        const double logit = spec.logit.eval(ex.dense);
        const double p = 1.0 / (1.0 + std::exp(-logit));
        ex.label = rng.bernoulli(p) ? 1 : 0;
        const double pc = std::clamp(p, 1e-15, 1.0 - 1e-15);
        entropy_sum += -(pc * std::log(pc) + (1.0 - pc) * std::log(1.0 - pc));
        ds.examples.push_back(std::move(ex));
    }
    ds.bayes_logloss = spec.samples > 0 ? entropy_sum / static_cast<double>(spec.samples) : 0.0;
    return ds;
}

void save_synthetic(const SyntheticDataset& ds, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ParseError("cannot write " + path);
    os.precision(17);
    os << "# dcn-synthetic v1\n";
    os << "# dim=" << ds.spec.dim << " samples=" << ds.examples.size()
       << " seed=" << ds.spec.seed << "\n";
    os << "# logit=" << ds.spec.logit.to_string() << "\n";
    os << "# bayes_logloss=" << ds.bayes_logloss << "\n";
    for (const auto& ex : ds.examples) {
        os << ex.label;
        for (Index j = 0; j < ex.dense.size(); ++j) os << ',' << ex.dense[j];
        os << '\n';
    }
}

SyntheticDataset load_synthetic(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot read " + path);
    std::string line;
    if (!std::getline(is, line) || line != "# dcn-synthetic v1")
        throw ParseError(path + ": not a synthetic dataset file");
    SyntheticDataset ds;
    std::size_t samples = 0;
    if (!std::getline(is, line) ||
        std::sscanf(line.c_str(), "# dim=%lld samples=%zu seed=%llu",
                    reinterpret_cast<long long*>(&ds.spec.dim), &samples,
                    reinterpret_cast<unsigned long long*>(&ds.spec.seed)) != 3)
        throw ParseError(path + ": bad header");
    if (!std::getline(is, line) || line.rfind("# logit=", 0) != 0)
        throw ParseError(path + ": missing logit header");
    ds.spec.logit = parse_polynomial(line.substr(8), ds.spec.dim);
    if (!std::getline(is, line) || line.rfind("# bayes_logloss=", 0) != 0)
        throw ParseError(path + ": missing bayes header");
    ds.bayes_logloss = std::stod(line.substr(16));
    std::size_t line_no = 4;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        Example ex;
        ex.dense = Vector(ds.spec.dim);
        std::stringstream ss(line);
        std::string cell;
        if (!std::getline(ss, cell, ',')) throw ParseError(path + ": bad row");
        ex.label = std::stoi(cell);
        for (Index j = 0; j < ds.spec.dim; ++j) {
            if (!std::getline(ss, cell, ','))
                throw ParseError(path + ": line " + std::to_string(line_no) + " too short");
            ex.dense[j] = std::stod(cell);
        }
        ds.examples.push_back(std::move(ex));
    }
    if (ds.examples.size() != samples)
        throw ParseError(path + ": row count does not match header");
    ds.spec.samples = samples;
    return ds;
}

poly::SparsePolynomial parse_polynomial(const std::string& text, Index dim) {
    poly::SparsePolynomial out(dim);
    std::size_t i = 0;
    const auto skip_ws = [&] { while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i; };
    skip_ws();
    if (i >= text.size()) throw ParseError("empty polynomial");
    bool first = true;
    while (i < text.size()) {
        skip_ws();
        double sign = 1.0;
        if (text[i] == '+' || text[i] == '-') {
            if (text[i] == '-') sign = -1.0;
            ++i;
        } else if (!first) {
            throw ParseError("polynomial: expected '+' or '-' at position " + std::to_string(i));
        }
        first = false;
        skip_ws();
        double coef = 1.0;
        bool saw_factor = false;
        poly::MultiIndex alpha(static_cast<std::size_t>(dim), 0);
        while (true) {
            skip_ws();
            if (i < text.size() && (text[i] == 'x' || text[i] == 'X')) {
                ++i;
                std::size_t start = i;
                while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
                if (start == i) throw ParseError("polynomial: variable needs an index");
                const long var = std::stol(text.substr(start, i - start));
                if (var < 1 || var > dim)
                    throw ParseError("polynomial: variable x" + std::to_string(var) +
                                     " out of range for dim " + std::to_string(dim));
                int power = 1;
                if (i < text.size() && text[i] == '^') {
                    ++i;
                    start = i;
                    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
                    if (start == i) throw ParseError("polynomial: '^' needs an exponent");
                    power = std::stoi(text.substr(start, i - start));
                }
                alpha[static_cast<std::size_t>(var - 1)] += power;
                saw_factor = true;
            } else if (i < text.size() &&
                       (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.')) {
                std::size_t used = 0;
                coef *= std::stod(text.substr(i), &used);
                i += used;
                saw_factor = true;
            } else {
                break;
            }
            skip_ws();
            if (i < text.size() && text[i] == '*') {
                ++i;
                continue;
            }
            break;
        }
        if (!saw_factor) throw ParseError("polynomial: empty term at position " + std::to_string(i));
        out.add_term(alpha, sign * coef);
        skip_ws();
    }
    return out;
}

CriteoPipeline CriteoPipeline::fit(const std::vector<CriteoRecord>& train_records,
                                   std::uint64_t min_count) {
    CriteoPipeline p;
    for (int f = 0; f < kCriteoCategorical; ++f) {
        std::vector<std::string> tokens;
        tokens.reserve(train_records.size());
        for (const auto& r : train_records) tokens.push_back(r.cats[static_cast<std::size_t>(f)]);
        p.vocabs.push_back(Vocabulary::build(tokens, min_count));
    }
    p.schema.dense_count = 2 * kCriteoDense;  // log values + missing indicators
    p.schema.num_classes = 2;
    for (const auto& v : p.vocabs) {
        embed::FieldSpec spec;
        spec.vocab_size = v.size();
        spec.embed_dim = embed::embed_dim_rule(static_cast<std::uint64_t>(v.size()));
        p.schema.fields.push_back(spec);
    }
    return p;
}

Example CriteoPipeline::transform(const CriteoRecord& record) const {
    Example ex;
    ex.label = record.label;
    ex.dense = Vector(2 * kCriteoDense);
    for (int i = 0; i < kCriteoDense; ++i) {
        const auto v = record.ints[static_cast<std::size_t>(i)];
        ex.dense[i] = log_transform(v);
        ex.dense[kCriteoDense + i] = v == kMissingInt ? 1.0 : 0.0;
    }
    for (int f = 0; f < kCriteoCategorical; ++f)
        ex.categorical.push_back(vocabs[static_cast<std::size_t>(f)].id_of(
            record.cats[static_cast<std::size_t>(f)]));
    return ex;
}

std::vector<CriteoRecord> read_criteo_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot read " + path);
    std::vector<CriteoRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (line.empty()) continue;
        out.push_back(parse_criteo_line(line, n));
    }
    return out;
}

Dataset read_csv_dataset(const std::string& path, int label_column, Index num_classes) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot read " + path);
    Dataset ds;
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::vector<double>> rows;
    std::vector<double> raw_labels;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ParseError(path + ": line " + std::to_string(line_no) + ": bad value '" +
                                 cell + "'");
            }
        }
        if (row.empty()) continue;
        const int lc = label_column < 0 ? static_cast<int>(row.size()) + label_column
                                        : label_column;
        if (lc < 0 || lc >= static_cast<int>(row.size()))
            throw ParseError(path + ": label column out of range");
        raw_labels.push_back(row[static_cast<std::size_t>(lc)]);
        row.erase(row.begin() + lc);
        if (!rows.empty() && row.size() != rows.front().size())
            throw ParseError(path + ": line " + std::to_string(line_no) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError(path + ": no data rows");

    // Remap labels to 0..K-1 in sorted order of distinct raw values.
    std::vector<double> distinct = raw_labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (static_cast<Index>(distinct.size()) > num_classes)
        throw ParseError(path + ": more label values than num_classes");

    ds.schema.dense_count = static_cast<Index>(rows.front().size());
    ds.schema.num_classes = num_classes;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Example ex;
        ex.dense = Eigen::Map<Vector>(rows[i].data(), static_cast<Index>(rows[i].size()));
        const auto it = std::lower_bound(distinct.begin(), distinct.end(), raw_labels[i]);
        ex.label = static_cast<int>(it - distinct.begin());
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

void standardize(std::vector<Example>& fit_on, std::vector<std::vector<Example>*> apply_to,
                 DatasetSchema& schema) {
    require(!fit_on.empty(), "standardize: empty fit split");
    const Index d = fit_on.front().dense.size();
    Vector mean = Vector::Zero(d);
    for (const auto& ex : fit_on) mean += ex.dense;
    mean /= static_cast<double>(fit_on.size());
    Vector var = Vector::Zero(d);
    for (const auto& ex : fit_on) var += (ex.dense - mean).cwiseAbs2();
    var /= static_cast<double>(fit_on.size());
    Vector std = var.cwiseSqrt();
    for (Index i = 0; i < d; ++i) {
        if (std[i] < 1e-12) std[i] = 1.0;
    }
    schema.dense_mean = mean;
    schema.dense_std = std;
    auto apply = [&](std::vector<Example>& split) {
        for (auto& ex : split) ex.dense = (ex.dense - mean).cwiseQuotient(std);
    };
    apply(fit_on);
    for (auto* split : apply_to) apply(*split);
}

std::uint64_t file_fingerprint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("cannot read " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        const std::streamsize n = is.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!is) break;
    }
    return h;
}

}  // namespace dcn::data
