// Command-line front end: train, eval, gridsearch, verify, gendata.

#include "dcn/data.hpp"
#include "dcn/model.hpp"
#include "dcn/poly.hpp"
#include "dcn/train.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dcn;

namespace {

constexpr const char* kVersion = "1.0.0";

struct DataFlags {
    std::string path;
    std::string format = "synthetic";  // synthetic | csv | criteo
    int label_column = -1;
    Index num_classes = 2;
    std::string split = "random";  // random | temporal
    double train_fraction = 0.9;
    std::uint64_t min_count = 10;
    std::uint64_t split_seed = 0;
    bool standardize_dense = true;

    void attach(CLI::App* cmd) {
        cmd->add_option("--data", path, "dataset file")->required();
        cmd->add_option("--format", format, "synthetic | csv | criteo")
            ->check(CLI::IsMember({"synthetic", "csv", "criteo"}));
        cmd->add_option("--label-column", label_column,
                        "label column for csv (negative counts from the end)");
        cmd->add_option("--num-classes", num_classes, "label arity for csv");
        cmd->add_option("--split", split, "random | temporal")
            ->check(CLI::IsMember({"random", "temporal"}));
        cmd->add_option("--train-fraction", train_fraction, "train share of the stream");
        cmd->add_option("--min-count", min_count, "criteo vocabulary min count");
        cmd->add_option("--split-seed", split_seed, "seed for the holdout shuffle");
        cmd->add_flag("!--no-standardize", standardize_dense, "skip csv standardization");
    }
};

struct LoadedData {
    data::DatasetSchema schema;
    data::Split split;
    double bayes_logloss = -1.0;  // synthetic only
    std::optional<data::CriteoPipeline> criteo;
};

LoadedData load_data(const DataFlags& flags) {
    LoadedData out;
    Rng rng(flags.split_seed);
    if (flags.format == "synthetic") {
        auto ds = data::load_synthetic(flags.path);
        out.schema = ds.schema();
        out.bayes_logloss = ds.bayes_logloss;
        out.split = flags.split == "temporal"
                        ? data::split_temporal(std::move(ds.examples), flags.train_fraction, rng)
                        : data::split_random(std::move(ds.examples), flags.train_fraction, rng);
    } else if (flags.format == "csv") {
        auto ds = data::read_csv_dataset(flags.path, flags.label_column, flags.num_classes);
        out.schema = ds.schema;
        out.split = flags.split == "temporal"
                        ? data::split_temporal(std::move(ds.examples), flags.train_fraction, rng)
                        : data::split_random(std::move(ds.examples), flags.train_fraction, rng);
        if (flags.standardize_dense)
            data::standardize(out.split.train, {&out.split.val, &out.split.test}, out.schema);
    } else {
        auto records = data::read_criteo_file(flags.path);
        // fit vocabularies on the training prefix only
        std::vector<data::Example> placeholder;
        const std::size_t cut = static_cast<std::size_t>(
            static_cast<double>(records.size()) * flags.train_fraction);
        std::vector<data::CriteoRecord> train_records(records.begin(),
                                                      records.begin() + static_cast<std::ptrdiff_t>(cut));
        auto pipeline = data::CriteoPipeline::fit(train_records, flags.min_count);
        std::vector<data::Example> examples;
        examples.reserve(records.size());
        for (const auto& r : records) examples.push_back(pipeline.transform(r));
        out.schema = pipeline.schema;
        out.criteo = std::move(pipeline);
        out.split = flags.split == "random"
                        ? data::split_random(std::move(examples), flags.train_fraction, rng)
                        : data::split_temporal(std::move(examples), flags.train_fraction, rng);
    }
    return out;
}

struct ModelFlags {
    Index cross_layers = 2;
    std::vector<Index> deep_sizes = {64, 64};
    bool batch_norm = false;
    bool logits_bias = false;
    bool concat_x0 = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--cross-layers", cross_layers, "number of cross layers (0 = DNN baseline)");
        cmd->add_option("--deep-sizes", deep_sizes,
                        "deep layer sizes, e.g. --deep-sizes 64 64; a single 0 disables the stack")
            ->expected(1, 64);
        cmd->add_flag("--batch-norm", batch_norm, "batch normalization on the deep stack");
        cmd->add_flag("--logits-bias", logits_bias, "bias term on the logits layer");
        cmd->add_flag("--concat-x0", concat_x0,
                      "with zero cross layers, feed [x0, h] to the logits instead of h alone");
    }

    model::ModelConfig to_config(const data::DatasetSchema& schema) const {
        model::ModelConfig cfg;
        cfg.dense_count = schema.dense_count;
        cfg.fields = schema.fields;
        cfg.cross_layers = cross_layers;
        cfg.deep_sizes = deep_sizes;
        if (cfg.deep_sizes.size() == 1 && cfg.deep_sizes[0] == 0) cfg.deep_sizes.clear();
        cfg.batch_norm = batch_norm;
        cfg.logits_bias = logits_bias;
        cfg.concat_x0_when_no_cross = concat_x0;
        cfg.num_classes = schema.num_classes;
        return cfg;
    }
};

struct TrainFlags {
    train::TrainConfig tc;

    void attach(CLI::App* cmd) {
        cmd->add_option("--batch-size", tc.batch_size);
        cmd->add_option("--lr", tc.learning_rate, "learning rate");
        cmd->add_option("--clip-norm", tc.clip_norm);
        cmd->add_option("--lambda", tc.lambda, "L2 weight on network weights");
        cmd->add_option("--steps", tc.max_steps, "max training steps");
        cmd->add_option("--eval-every", tc.eval_every);
        cmd->add_option("--patience", tc.early_stop_patience,
                        "evaluations without improvement before stopping");
        cmd->add_option("--seed", tc.seed);
    }
};

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
    return buf;
}

json manifest_base(const std::string& command, const DataFlags& data_flags,
                   std::uint64_t seed) {
    json m;
    m["command"] = command;
    m["code_version"] = kVersion;
    m["seed"] = seed;
    m["started_at"] = iso_timestamp();
    m["dataset"] = {{"path", data_flags.path},
                    {"format", data_flags.format},
                    {"fingerprint", data::file_fingerprint(data_flags.path)}};
    return m;
}

void write_metrics(const std::string& path, const std::vector<train::MetricsRecord>& history,
                   const json& summary) {
    std::ofstream os(path);
    for (const auto& rec : history) {
        json line = {{"step", rec.step},
                     {"train_loss", rec.train_loss},
                     {"val_loss", rec.val_loss},
                     {"val_accuracy", rec.val_accuracy}};
        os << line.dump() << '\n';
    }
    os << summary.dump() << '\n';
}

// Flat key=value config support, expanded into trailing flags before parsing
// so anything given explicitly on the command line wins.
std::vector<std::string> expand_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size())
            config_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0)
            config_path = args[i].substr(9);
    }
    if (config_path.empty()) return args;
    std::ifstream is(config_path);
    if (!is) throw CLI::FileError("cannot read config file " + config_path);
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    auto have = [&args](const std::string& flag) {
        for (const auto& a : args)
            if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
        return false;
    };
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw CLI::FileError(config_path + ":" + std::to_string(line_no) +
                                 ": expected key=value");
        const std::string flag = "--" + trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (flag == "--" || have(flag)) continue;
        if (value == "true" || value == "yes" || value == "on") {
            args.push_back(flag);
            continue;
        }
        if (value == "false" || value == "no" || value == "off") continue;
        args.push_back(flag);
        std::istringstream vs(value);
        std::string tok;
        while (vs >> tok) args.push_back(tok);
    }
    return args;
}

int cmd_train(const DataFlags& data_flags, const ModelFlags& model_flags, TrainFlags train_flags,
              const std::string& out_dir) {
    fs::create_directories(out_dir);
    json manifest = manifest_base("train", data_flags, train_flags.tc.seed);

    LoadedData loaded = load_data(data_flags);
    model::ModelConfig cfg = model_flags.to_config(loaded.schema);
    Rng rng(train_flags.tc.seed);
    model::ModelParams params = model::init_model(cfg, rng);

    auto result = train::train(train_flags.tc, std::move(params), loaded.split.train,
                               loaded.split.val);

    const Index d = cfg.input_dim();
    const Index deep_count = cfg.deep_sizes.empty()
                                 ? 0
                                 : deep::deep_param_count(d, cfg.deep_sizes.front(),
                                                          static_cast<Index>(cfg.deep_sizes.size()));
    json summary = {{"summary", true},
                    {"best_val_loss", result.best_val_loss},
                    {"best_step", result.best_step},
                    {"steps_run", result.steps_run},
                    {"param_count", model::param_count(result.best)},
                    {"cross_param_count", cross::cross_param_count(d, cfg.cross_layers)},
                    {"deep_param_count", deep_count}};
    write_metrics(out_dir + "/metrics.jsonl", result.history, summary);
    model::checkpoint_save(result.best, out_dir + "/checkpoint.bin");
    if (loaded.criteo) {
        fs::create_directories(out_dir + "/vocab");
        for (std::size_t f = 0; f < loaded.criteo->vocabs.size(); ++f)
            loaded.criteo->vocabs[f].save(out_dir + "/vocab/field_" + std::to_string(f) + ".txt");
    }

    manifest["finished_at"] = iso_timestamp();
    manifest["artifacts"] = {{"checkpoint", out_dir + "/checkpoint.bin"},
                             {"metrics", out_dir + "/metrics.jsonl"}};
    if (loaded.bayes_logloss >= 0) manifest["bayes_logloss"] = loaded.bayes_logloss;
    std::ofstream(out_dir + "/manifest.json") << manifest.dump(2) << '\n';

    std::cout << "best_val_logloss " << result.best_val_loss << " at step " << result.best_step
              << " (ran " << result.steps_run << " steps)\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const DataFlags& data_flags, const std::string& which) {
    model::ModelParams params = model::checkpoint_load(checkpoint);
    LoadedData loaded = load_data(data_flags);
    if (loaded.schema.dense_count != params.config.dense_count ||
        loaded.schema.fields.size() != params.config.fields.size())
        throw model::ConfigError("dataset schema does not match the checkpoint");
    const std::vector<data::Example>* split = &loaded.split.test;
    if (which == "train") split = &loaded.split.train;
    if (which == "val") split = &loaded.split.val;
    auto ev = train::evaluate(params, *split);
    std::cout << "logloss " << ev.logloss;
    if (params.config.num_classes > 2) std::cout << " accuracy " << ev.accuracy;
    std::cout << '\n';
    if (loaded.bayes_logloss >= 0) std::cout << "bayes_logloss " << loaded.bayes_logloss << '\n';
    return 0;
}

int cmd_gridsearch(const DataFlags& data_flags, const ModelFlags& model_flags,
                   TrainFlags train_flags, const train::GridSpec& grid,
                   const std::string& out_dir) {
    fs::create_directories(out_dir);
    LoadedData loaded = load_data(data_flags);
    model::ModelConfig cfg = model_flags.to_config(loaded.schema);
    auto rows = train::grid_search(grid, train_flags.tc, cfg, loaded.split.train,
                                   loaded.split.val);
    std::ofstream os(out_dir + "/grid_results.jsonl");
    for (const auto& row : rows) {
        json line = {{"deep_layers", row.point.deep_layer_count},
                     {"deep_size", row.point.deep_size},
                     {"cross_layers", row.point.cross_layers},
                     {"lr", row.point.learning_rate},
                     {"best_val_loss", row.best_val_loss},
                     {"param_count", row.param_count},
                     {"steps_run", row.steps_run}};
        if (row.failed) line["error"] = row.error;
        os << line.dump() << '\n';
        std::cout << line.dump() << '\n';
    }
    return 0;
}

int cmd_verify(int max_d, int max_l, int trials, std::uint64_t seed) {
    bool all_ok = true;
    for (int d = 1; d <= max_d; ++d) {
        for (int l = 0; l <= max_l; ++l) {
            auto report = poly::verify_theorem(d, l, trials, seed);
            std::cout << "d=" << d << " l=" << l << " trials=" << trials << " "
                      << (report.ok() ? "PASS" : "FAIL")
                      << " max_closed_form_diff=" << report.max_closed_form_diff
                      << " max_ratio_spread=" << report.max_ratio_spread;
            if (!report.ok()) std::cout << "  [" << report.failure << " seed=" << seed << "]";
            std::cout << '\n';
            all_ok = all_ok && report.ok();
        }
    }
    // projection identity across the tractable dimension range
    Rng rng(seed);
    for (Index d : {1, 2, 4, 8, 16, 32, 64}) {
        double worst = 0.0;
        for (int t = 0; t < 10; ++t) {
            Vector x0(d), xt(d), w(d);
            for (Index i = 0; i < d; ++i) {
                x0[i] = rng.uniform(-1, 1);
                xt[i] = rng.uniform(-1, 1);
                w[i] = rng.uniform(-1, 1);
            }
            auto r = poly::projection_equivalence(x0, xt, w);
            worst = std::max(worst, (r.fast - r.explicit_path).cwiseAbs().maxCoeff());
        }
        const bool ok = worst < 1e-10;
        std::cout << "projection d=" << d << " " << (ok ? "PASS" : "FAIL")
                  << " max_abs_diff=" << worst << '\n';
        all_ok = all_ok && ok;
    }
    std::cout << (all_ok ? "verify: all checks passed" : "verify: FAILURES above") << '\n';
    return all_ok ? 0 : 1;
}

int cmd_gendata(Index dim, std::size_t samples, std::uint64_t seed, const std::string& poly_text,
                const std::string& out) {
    data::SyntheticSpec spec;
    spec.dim = dim;
    spec.logit = data::parse_polynomial(poly_text, dim);
    spec.samples = samples;
    spec.seed = seed;
    auto ds = data::generate_synthetic(spec);
    data::save_synthetic(ds, out);
    std::cout << "wrote " << out << " (" << samples << " rows, degree "
              << spec.logit.max_degree() << ", bayes_logloss " << ds.bayes_logloss << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep & Cross Network trainer and verifier"};
    app.require_subcommand(1);
    std::string config_path;  // consumed by expand_args; registered for help and acceptance

    DataFlags data_flags;
    ModelFlags model_flags;
    TrainFlags train_flags;
    std::string out_dir = "runs/latest";
    std::string checkpoint;
    std::string eval_split = "test";

    auto* train_cmd = app.add_subcommand("train", "train a model");
    train_cmd->add_option("--config", config_path, "flat key=value config file; explicit flags win");
    data_flags.attach(train_cmd);
    model_flags.attach(train_cmd);
    train_flags.attach(train_cmd);
    train_cmd->add_option("--out-dir", out_dir, "artifact directory");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--config", config_path, "flat key=value config file; explicit flags win");
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    DataFlags eval_data;
    eval_data.attach(eval_cmd);
    eval_cmd->add_option("--eval-split", eval_split, "train | val | test")
        ->check(CLI::IsMember({"train", "val", "test"}));

    auto* grid_cmd = app.add_subcommand("gridsearch", "grid search over model shapes");
    grid_cmd->add_option("--config", config_path, "flat key=value config file; explicit flags win");
    DataFlags grid_data;
    ModelFlags grid_model;
    TrainFlags grid_train;
    train::GridSpec grid;
    grid.deep_layer_counts = {2};
    grid.deep_sizes = {64};
    grid.cross_layer_counts = {0, 1, 2};
    grid.learning_rates = {0.0001, 0.0005, 0.001};
    grid_data.attach(grid_cmd);
    grid_model.attach(grid_cmd);
    grid_train.attach(grid_cmd);
    std::string grid_out = "runs/grid";
    grid_cmd->add_option("--grid-deep-layers", grid.deep_layer_counts, "deep layer counts");
    grid_cmd->add_option("--grid-deep-sizes", grid.deep_sizes, "deep layer sizes");
    grid_cmd->add_option("--grid-cross-layers", grid.cross_layer_counts, "cross depths");
    grid_cmd->add_option("--grid-lrs", grid.learning_rates, "learning rates");
    grid_cmd->add_option("--out-dir", grid_out, "artifact directory");

    auto* verify_cmd = app.add_subcommand("verify", "run the polynomial-structure checks");
    verify_cmd->add_option("--config", config_path, "flat key=value config file; explicit flags win");
    int max_d = 4, max_l = 4, trials = 5;
    std::uint64_t verify_seed = 1234;
    verify_cmd->add_option("--max-d", max_d, "largest input dimension")->check(CLI::Range(1, 8));
    verify_cmd->add_option("--max-l", max_l, "largest cross depth")->check(CLI::Range(0, 5));
    verify_cmd->add_option("--trials", trials, "random weight draws per case");
    verify_cmd->add_option("--seed", verify_seed);

    auto* gen_cmd = app.add_subcommand("gendata", "generate a synthetic dataset");
    gen_cmd->add_option("--config", config_path, "flat key=value config file; explicit flags win");
    Index gen_dim = 10;
    std::size_t gen_samples = 10000;
    std::uint64_t gen_seed = 0;
    std::string gen_poly = "0";
    std::string gen_out = "synthetic.csv";
    gen_cmd->add_option("--dim", gen_dim)->required();
    gen_cmd->add_option("--samples", gen_samples)->required();
    gen_cmd->add_option("--seed", gen_seed);
    gen_cmd->add_option("--poly", gen_poly, "logit polynomial, e.g. '2.5*x1*x2 + x3'")->required();
    gen_cmd->add_option("--out", gen_out)->required();

    std::vector<std::string> args;
    try {
        args = expand_args(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    std::reverse(args.begin(), args.end());
    try {
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage errors are exit 2
    }

    try {
        if (train_cmd->parsed()) return cmd_train(data_flags, model_flags, train_flags, out_dir);
        if (eval_cmd->parsed()) return cmd_eval(checkpoint, eval_data, eval_split);
        if (grid_cmd->parsed())
            return cmd_gridsearch(grid_data, grid_model, grid_train, grid, grid_out);
        if (verify_cmd->parsed()) return cmd_verify(max_d, max_l, trials, verify_seed);
        if (gen_cmd->parsed()) return cmd_gendata(gen_dim, gen_samples, gen_seed, gen_poly, gen_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
