// swan: synth | train | unmix | eval | replay
//
// Exit codes: 0 success, 2 usage, 3 data/I-O error, 4 numeric failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "swan/swan.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using Options = std::map<std::string, std::string>;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

const std::string& need(const Options& o, const std::string& key) {
    const auto it = o.find(key);
    if (it == o.end() || it->second.empty()) throw UsageError("missing required option --" + key);
    return it->second;
}

std::uint64_t as_count(const Options& o, const std::string& key) {
    const auto v = swan::io::parse_double(need(o, key));
    if (!v || *v < 0 || *v != std::floor(*v)) throw UsageError("--" + key + " expects a whole number");
    return static_cast<std::uint64_t>(*v);
}

std::optional<double> as_snr(const std::string& text) {
    if (text == "none" || text == "inf") return std::nullopt;
    const auto v = swan::io::parse_double(text);
    if (!v || !std::isfinite(*v)) throw UsageError("--snr-db expects a number or 'none'");
    return *v;
}

std::size_t worker_count() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* cap = std::getenv("SWAN_THREADS")) {
        const auto v = swan::io::parse_double(cap);
        if (v && *v >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(*v));
    }
    return n;
}

swan::TrainConfig train_config(const Options& o) {
    swan::io::KeyValues kv;
    for (const char* k : {"batch", "epochs", "lambda1", "lambda2", "lr", "dropout", "sigma", "train_fraction", "seed"})
        if (o.count(k)) kv[k] = o.at(k);
    swan::TrainConfig c;
    swan::io::apply_config(c, kv);
    c.threads = worker_count();
    c.validate();
    return c;
}

void write_manifest(const fs::path& dir, const std::string& command, const Options& options, json extra,
                    double seconds) {
    json m;
    m["command"] = command;
    m["options"] = options;
    for (auto& [k, v] : extra.items()) m[k] = v;
    m["timing_seconds"] = seconds;
    swan::io::write_file(dir / "manifest.json", m.dump(2) + "\n");
}

json truth_metadata(const fs::path& truth_dir) {
    const fs::path p = truth_dir / "manifest.json";
    if (!fs::exists(p)) return json::object();
    try {
        return json::parse(swan::io::read_file(p)).value("options", json::object());
    } catch (const json::exception&) {
        return json::object();
    }
}

// ---------------------------------------------------------------------------

json cmd_synth(const Options& o) {
    const fs::path out = need(o, "out");
    const auto scenario = swan::scenario_by_name(need(o, "scenario"));
    const auto snr = as_snr(need(o, "snr-db"));
    const auto seed = as_count(o, "seed");
    const auto scene = swan::synthesize(scenario, snr, seed);
    swan::io::write_cube(out / "cube.swc", scene.cube);
    swan::io::write_endmember_csv(out / "endmembers.csv", scene.truth.endmembers.values);
    swan::io::write_abundance_csv(out / "abundances.csv", scene.truth.abundances.values);
    swan::io::write_abundance_maps(scene.truth.abundances, scenario.rows, scenario.cols, (out / "abundance").string());
    swan::io::write_endmember_plot(out / "endmembers.svg", scene.truth.endmembers.values);
    return {{"outputs", {"cube.swc", "endmembers.csv", "abundances.csv", "abundance_k.pgm", "endmembers.svg"}},
            {"dims", {scenario.rows, scenario.cols, scenario.bands}},
            {"endmembers", scenario.endmembers},
            {"seeds", {{"data", seed}}}};
}

json cmd_train(const Options& o) {
    const fs::path out = need(o, "out");
    const auto e = as_count(o, "endmembers");
    const auto config = train_config(o);
    const auto widths = swan::parse_widths(need(o, "widths"));

    const auto cube = swan::io::read_cube(need(o, "cube"));
    const auto norm = swan::normalize_pixelwise(swan::dwt_cube(cube));
    auto model = swan::build(norm.cube.coefficients(), e, widths, config.seed, config.dropout);
    const auto split = swan::split_pixels(norm.cube.pixel_count(), config.train_fraction, config.seed);
    swan::seed_decoder_from_pixels(model, norm.cube, split.first, config.seed);
    const auto result = swan::train(model, norm.cube, config, [&](const swan::EpochRecord& r) {
        if (r.epoch == 1 || r.epoch % 10 == 0 || r.epoch == config.epochs)
            swan::log("epoch " + std::to_string(r.epoch) + " train " + swan::io::format_double(r.train.total) +
                      " heldout " + swan::io::format_double(r.heldout.total));
    });

    swan::io::save_model(out / "model.swm", model, config);
    swan::io::write_file(out / "loss.tsv", swan::io::encode_loss_log(result.trace));
    json cfg;
    cfg["batch_size"] = config.batch_size;
    cfg["epochs"] = config.epochs;
    cfg["lambda1"] = config.lambda1;
    cfg["lambda2"] = config.lambda2;
    cfg["learning_rate"] = config.learning_rate;
    cfg["dropout"] = config.dropout;
    cfg["noise_sigma"] = config.noise_sigma;
    cfg["train_fraction"] = config.train_fraction;
    cfg["widths"] = swan::format_widths(widths);
    return {{"outputs", {"model.swm", "loss.tsv"}},
            {"config", cfg},
            {"seeds", {{"train", config.seed}}},
            {"parameter_count", model.parameter_count()},
            {"coefficients", norm.cube.coefficients()},
            {"loss_log", "loss.tsv"},
            {"final_train_loss", result.trace.empty() ? 0.0 : result.trace.back().train.total}};
}

json cmd_unmix(const Options& o) {
    const fs::path out = need(o, "out");
    const auto mf = swan::io::load_model(need(o, "model"));
    const auto cube = swan::io::read_cube(need(o, "cube"));
    if (swan::coefficient_count(cube.bands) != mf.model.arch.coefficients)
        throw swan::Error(swan::ErrorCode::DimensionMismatch,
                          "cube with " + std::to_string(cube.bands) + " bands gives K=" +
                              std::to_string(swan::coefficient_count(cube.bands)) + ", model has K=" +
                              std::to_string(mf.model.arch.coefficients));
    const auto norm = swan::normalize_pixelwise(swan::dwt_cube(cube));
    const auto a = swan::extract_abundances(mf.model, norm.cube);
    const auto m = swan::extract_endmembers(mf.model, swan::bior33(), cube.bands);

    swan::io::write_endmember_csv(out / "endmembers.csv", m.values);
    swan::io::write_abundance_csv(out / "abundances.csv", a.values);
    swan::io::write_abundance_maps(a, cube.rows, cube.cols, (out / "abundance").string());
    if (const auto t = o.find("truth"); t != o.end() && !t->second.empty()) {
        const auto gt = swan::io::read_endmember_csv(fs::path(t->second) / "endmembers.csv").values;
        const auto al = swan::align_to_ground_truth(m.values, gt);
        swan::io::write_endmember_plot(out / "endmembers.svg", swan::permute_columns(m.values, al.permutation), &gt);
    } else {
        swan::io::write_endmember_plot(out / "endmembers.svg", m.values);
    }
    return {{"outputs", {"endmembers.csv", "abundances.csv", "abundance_k.pgm", "endmembers.svg"}},
            {"degenerate_endmembers", m.degenerate},
            {"parameter_count", mf.model.parameter_count()}};
}

json cmd_eval(const Options& o) {
    const fs::path out = need(o, "out");
    const fs::path est = need(o, "estimate"), truth = need(o, "truth");
    const auto em = swan::io::read_endmember_csv(est / "endmembers.csv").values;
    const auto ea = swan::io::read_abundance_csv(est / "abundances.csv").values;
    const auto gm = swan::io::read_endmember_csv(truth / "endmembers.csv").values;
    const auto ga = swan::io::read_abundance_csv(truth / "abundances.csv").values;
    const auto al = swan::align_to_ground_truth(em, gm);
    auto report = swan::score_unmixing(swan::permute_columns(em, al.permutation), swan::permute_rows(ea, al.permutation),
                                       gm, ga);
    const json meta = truth_metadata(truth);
    report.dataset = meta.value("scenario", "unknown");
    report.snr = meta.value("snr-db", "unknown");
    report.seed = meta.value("seed", "unknown");
    std::ostringstream os;
    swan::write_score_report(os, report);
    swan::io::write_file(out / "report.tsv", os.str());
    std::cout << os.str();
    return {{"outputs", {"report.tsv"}},
            {"permutation", al.permutation},
            {"endmember_sad", report.endmembers.mean_sad},
            {"abundance_rmse", report.abundances.mean_rmse}};
}

json dispatch(const std::string& command, const Options& o) {
    if (command == "synth") return cmd_synth(o);
    if (command == "train") return cmd_train(o);
    if (command == "unmix") return cmd_unmix(o);
    if (command == "eval") return cmd_eval(o);
    throw UsageError("unknown command '" + command + "'");
}

int run_command(const std::string& command, const Options& o) {
    const auto t0 = std::chrono::steady_clock::now();
    json extra = dispatch(command, o);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(need(o, "out"), command, o, std::move(extra), secs);
    return 0;
}

// Options registered for one subcommand: flag name -> default ("" = none).
struct FlagSpec {
    std::string name;
    std::string def;
    std::string help;
};

const std::map<std::string, std::vector<FlagSpec>>& command_flags() {
    static const std::map<std::string, std::vector<FlagSpec>> flags = {
        {"synth",
         {{"scenario", "data1", "data1 (75x75x224, e=3) or data2 (128x128x431, e=5)"},
          {"snr-db", "none", "noise level in dB, or 'none'"},
          {"seed", "0", "generator seed"},
          {"out", "", "output directory"}}},
        {"train",
         {{"cube", "", "input cube (.swc)"},
          {"endmembers", "3", "number of endmembers e"},
          {"seed", "0", "initialisation / split / shuffle seed"},
          {"epochs", "100", "training epochs"},
          {"batch", "50", "mini-batch size"},
          {"lambda1", "0.1", "weight of the l2 penalty on W(l5a)"},
          {"lambda2", "0.01", "weight of the l1 penalty on W(l5d)"},
          {"lr", "0.001", "Adam learning rate"},
          {"sigma", "0.02", "std of the noise prior added to x_hat_a"},
          {"dropout", "0.3", "dropout rate of hidden layers"},
          {"train_fraction", "0.8", "share of pixels used for training"},
          {"widths", swan::format_widths(swan::LayerWidths{}), "hidden widths h1,h2,h3/g1,g2,g3"},
          {"out", "", "output directory"}}},
        {"unmix",
         {{"model", "", "trained model (.swm)"},
          {"cube", "", "input cube (.swc)"},
          {"truth", "", "optional ground-truth directory for the plot overlay"},
          {"out", "", "output directory"}}},
        {"eval",
         {{"estimate", "", "directory with endmembers.csv and abundances.csv"},
          {"truth", "", "ground-truth directory in the same layout"},
          {"out", "", "output directory"}}},
    };
    return flags;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SWAN wavelet-domain hyperspectral unmixing"};
    app.require_subcommand(1);

    std::map<std::string, std::map<std::string, std::string>> values;
    std::map<std::string, std::string> config_files;
    std::string manifest_path, replay_out;

    for (const auto& [cmd, specs] : command_flags()) {
        static const std::map<std::string, std::string> about = {
            {"synth", "generate a synthetic scene with ground truth"},
            {"train", "train a model on a cube"},
            {"unmix", "estimate endmembers and abundances with a trained model"},
            {"eval", "score an estimate against ground truth"}};
        auto* sub = app.add_subcommand(cmd, about.at(cmd));
        for (const auto& f : specs) sub->add_option("--" + f.name, values[cmd][f.name], f.help);
        sub->add_option("--config", config_files[cmd], "key=value file (flags take precedence over it)");
    }
    auto* replay = app.add_subcommand("replay", "re-run a command from its manifest.json");
    replay->add_option("manifest", manifest_path, "manifest.json of an earlier run")->required();
    replay->add_option("--out", replay_out, "write outputs here instead of the recorded directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*replay) {
            const json m = json::parse(swan::io::read_file(manifest_path));
            Options o = m.at("options").get<Options>();
            if (!replay_out.empty()) o["out"] = replay_out;
            return run_command(m.at("command").get<std::string>(), o);
        }
        for (const auto& [cmd, specs] : command_flags()) {
            auto* sub = app.get_subcommand(cmd);
            if (!*sub) continue;
            Options o;
            for (const auto& f : specs) o[f.name] = f.def;
            if (const auto cf = config_files.find(cmd); cf != config_files.end() && !cf->second.empty()) {
                for (const auto& [k, v] : swan::io::parse_key_values(swan::io::read_file(cf->second))) {
                    if (k == "threads") continue;
                    if (!o.count(k)) throw UsageError("unknown config key '" + k + "'");
                    o[k] = v;
                }
            }
            for (const auto& f : specs)
                if (sub->count("--" + f.name) > 0) o[f.name] = values[cmd][f.name];
            return run_command(cmd, o);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const swan::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        if (swan::is_numeric_failure(e.code())) return kExitNumeric;
        return e.code() == swan::ErrorCode::InvalidConfig ? kExitUsage : kExitData;
    } catch (const json::exception& e) {
        std::cerr << "error: bad manifest: " << e.what() << '\n';
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
