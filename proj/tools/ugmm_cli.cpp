// Command-line entry point: training, evaluation, gradient auditing,
// per-neuron density inspection, and baseline comparison.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ugmm/checkpoint.hpp"
#include "ugmm/config.hpp"
#include "ugmm/data.hpp"
#include "ugmm/gradcheck.hpp"
#include "ugmm/network.hpp"
#include "ugmm/train.hpp"
#include "ugmm/ugmm_layer.hpp"

namespace fs = std::filesystem;

namespace {

std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_frac(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void write_report_csv(const std::string& path, const ugmm::TrainReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ugmm::DataError(path + ": cannot open for writing");
    out << "epoch,lr,train_loss,test_accuracy\n";
    for (const auto& row : report) {
        out << row.epoch << ',' << fmt_g17(row.lr) << ',' << fmt_g17(row.train_loss) << ','
            << fmt_g17(row.test_accuracy) << '\n';
    }
}

struct RunOutcome {
    ugmm::RunConfig cfg;
    double final_accuracy = 0.0;
};

RunOutcome run_training(const std::string& config_path) {
    const ugmm::RunConfig cfg = ugmm::load_run_config(config_path);
    auto [train, test] = ugmm::load_config_datasets(cfg);
    if (train.x.cols != cfg.layer_widths.front()) {
        throw ugmm::DataError("dataset has " + std::to_string(train.x.cols) +
                              " features but layer_widths starts with " +
                              std::to_string(cfg.layer_widths.front()));
    }
    if (train.class_count != cfg.layer_widths.back()) {
        throw ugmm::DataError("dataset has " + std::to_string(train.class_count) +
                              " classes but layer_widths ends with " +
                              std::to_string(cfg.layer_widths.back()));
    }
    ugmm::Rng rng(cfg.seed);
    ugmm::TrainResult result = ugmm::train_run(cfg.network_spec(), train, test, cfg.optimizer,
                                               cfg.schedule, cfg.epochs, cfg.batch_size, rng);
    fs::create_directories(cfg.output_dir);
    write_report_csv(cfg.output_dir + "/report.csv", result.report);
    ugmm::Checkpoint ckpt;
    ckpt.params = std::move(result.params);
    ckpt.adam = std::move(result.adam);
    ckpt.epoch = static_cast<std::uint32_t>(cfg.epochs);
    ugmm::save_checkpoint(cfg.output_dir + "/checkpoint.bin", ckpt);
    RunOutcome outcome;
    outcome.cfg = cfg;
    outcome.final_accuracy = result.report.empty()
                                 ? ugmm::evaluate(ckpt.params, test.x, test.y)
                                 : result.report.back().test_accuracy;
    return outcome;
}

int cmd_train(const std::string& config_path) {
    const RunOutcome outcome = run_training(config_path);
    std::cout << "test_accuracy=" << fmt_frac(outcome.final_accuracy) << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_name,
             const std::string& data_dir, double test_fraction) {
    const ugmm::Checkpoint ckpt = ugmm::load_checkpoint(ckpt_path);
    ugmm::Dataset eval_set;
    if (data_name == "iris") {
        const ugmm::Dataset full = ugmm::load_iris(data_dir + "/iris.csv");
        // Reconstruct the training-time split from the seed embedded in the
        // checkpoint so eval sees the same held-out samples.
        auto [train, test] = ugmm::stratified_split(full, test_fraction, ckpt.params.spec.seed);
        eval_set = std::move(test);
    } else if (data_name == "mnist") {
        eval_set = ugmm::load_mnist(data_dir + "/t10k-images-idx3-ubyte",
                                    data_dir + "/t10k-labels-idx1-ubyte");
    } else {
        throw ugmm::ConfigError("--data: must be \"iris\" or \"mnist\"");
    }
    if (eval_set.x.cols != ckpt.params.spec.input_width() ||
        eval_set.class_count != ckpt.params.spec.class_count()) {
        throw ugmm::DataError("checkpoint expects " +
                              std::to_string(ckpt.params.spec.input_width()) + " features / " +
                              std::to_string(ckpt.params.spec.class_count()) +
                              " classes; dataset has " + std::to_string(eval_set.x.cols) +
                              " / " + std::to_string(eval_set.class_count));
    }
    const double acc = ugmm::evaluate(ckpt.params, eval_set.x, eval_set.y);
    std::cout << "test_accuracy=" << fmt_frac(acc) << "\n";
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& sizes) {
    using namespace ugmm::gradcheck;
    AuditSummary summary;
    if (!sizes.empty()) {
        LayerSizes sz;
        if (std::sscanf(sizes.c_str(), "%zux%zux%zu", &sz.batch, &sz.n_in, &sz.n_out) != 3) {
            throw ugmm::ConfigError("--sizes: expected BxNxM, e.g. 2x3x4");
        }
        summary.max_err = std::max(audit_ugmm_layer(seed, sz, false),
                                   audit_ugmm_layer(seed + 1, sz, true));
        summary.instances = 2;
    } else {
        summary = run_full_audit(seed);
    }
    std::printf("gradcheck: %zu instances, max relative error %.3e (tolerance %.0e)\n",
                summary.instances, summary.max_err, kTolerance);
    if (!summary.pass()) {
        std::printf("FAIL\n");
        return 3;
    }
    std::printf("PASS\n");
    return 0;
}

void write_density_csv(const std::string& path, const std::vector<double>& grid,
                       const std::vector<std::vector<double>>& comps,
                       const std::vector<double>& total) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ugmm::DataError(path + ": cannot open for writing");
    out << "y";
    for (std::size_t k = 0; k < comps.size(); ++k) out << ",comp_" << k;
    out << ",total\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        out << fmt_g17(grid[i]);
        for (const auto& comp : comps) out << ',' << fmt_g17(comp[i]);
        out << ',' << fmt_g17(total[i]) << '\n';
    }
}

void write_density_svg(const std::string& path, const std::vector<double>& grid,
                       const std::vector<std::vector<double>>& comps,
                       const std::vector<double>& total, std::size_t layer, std::size_t neuron) {
    const double width = 800, height = 500, ml = 60, mr = 20, mt = 40, mb = 50;
    const double plot_w = width - ml - mr, plot_h = height - mt - mb;
    double vmax = 0.0;
    for (double v : total) vmax = std::max(vmax, v);
    if (vmax <= 0.0) vmax = 1.0;
    const double x0 = grid.front(), x1 = grid.back();
    const auto px = [&](double y) { return ml + (y - x0) / (x1 - x0) * plot_w; };
    const auto py = [&](double v) { return mt + (1.0 - v / vmax) * plot_h; };
    const auto polyline = [&](const std::vector<double>& curve, const char* stroke, double sw) {
        std::string pts;
        char buf[64];
        for (std::size_t i = 0; i < grid.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(grid[i]), py(curve[i]));
            pts += buf;
        }
        char elem[160];
        std::snprintf(elem, sizeof(elem),
                      "<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"%.1f\" points=\"",
                      stroke, sw);
        return std::string(elem) + pts + "\"/>\n";
    };
    static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                     "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ugmm::DataError(path + ": cannot open for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt + plot_h << "\" x2=\"" << ml + plot_w
        << "\" y2=\"" << mt + plot_h << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << mt + plot_h << "\" stroke=\"black\"/>\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.0f\" y=\"25\" font-family=\"sans-serif\" font-size=\"16\">"
                  "mixture density, layer %zu neuron %zu</text>\n",
                  ml, layer, neuron);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.0f\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"12\" "
                  "text-anchor=\"middle\">%.4g</text>\n",
                  ml, mt + plot_h + 20, x0);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.0f\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"12\" "
                  "text-anchor=\"middle\">%.4g</text>\n",
                  ml + plot_w, mt + plot_h + 20, x1);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.0f\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"12\" "
                  "text-anchor=\"end\">%.4g</text>\n",
                  ml - 6, mt + 12, vmax);
    out << buf;
    for (std::size_t k = 0; k < comps.size(); ++k) {
        out << polyline(comps[k], kPalette[k % 8], 1.0);
    }
    out << polyline(total, "black", 2.5);
    out << "</svg>\n";
}

int cmd_inspect(const std::string& ckpt_path, std::size_t layer, std::size_t neuron,
                double grid_min, double grid_max, std::size_t points,
                const std::string& out_prefix) {
    const ugmm::Checkpoint ckpt = ugmm::load_checkpoint(ckpt_path);
    if (ckpt.params.spec.kind != ugmm::ModelKind::ugmm) {
        throw ugmm::ConfigError("inspect: checkpoint is not a uGMM network");
    }
    if (layer >= ckpt.params.ugmm_layers.size()) {
        throw std::out_of_range("inspect: layer index out of range");
    }
    if (!(grid_max > grid_min)) throw ugmm::ConfigError("--max must exceed --min");
    if (points < 2) throw ugmm::ConfigError("--points must be >= 2");
    const ugmm::UgmmLayerParams& lp = ckpt.params.ugmm_layers[layer];
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i) {
        grid[i] = grid_min + (grid_max - grid_min) * double(i) / double(points - 1);
    }
    const std::vector<double> total = ugmm::density_curve(lp, neuron, grid);
    const std::vector<double> pi = ugmm::softmax(lp.pi_logit.row(neuron));
    std::vector<std::vector<double>> comps(lp.n_in, std::vector<double>(points));
    for (std::size_t k = 0; k < lp.n_in; ++k) {
        const double mean = lp.mu(neuron, k);
        const double var = std::exp(2.0 * lp.log_sigma(neuron, k));
        for (std::size_t i = 0; i < points; ++i) {
            comps[k][i] = pi[k] * std::exp(ugmm::gauss_logpdf(grid[i], mean, var));
        }
    }
    write_density_csv(out_prefix + ".csv", grid, comps, total);
    write_density_svg(out_prefix + ".svg", grid, comps, total, layer, neuron);
    std::cout << "wrote " << out_prefix << ".csv and " << out_prefix << ".svg\n";
    return 0;
}

int cmd_compare(const std::string& config_a, const std::string& config_b) {
    const ugmm::RunConfig peek_a = ugmm::load_run_config(config_a);
    const ugmm::RunConfig peek_b = ugmm::load_run_config(config_b);
    if (peek_a.dataset.name != peek_b.dataset.name) {
        throw ugmm::ConfigError("compare: configs must use the same dataset (" +
                                peek_a.dataset.name + " vs " + peek_b.dataset.name + ")");
    }
    const RunOutcome a = run_training(config_a);
    const RunOutcome b = run_training(config_b);
    const auto row = [](const RunOutcome& r) {
        const char* model = r.cfg.kind == ugmm::ModelKind::ugmm ? "ugmm-nn" : "ffnn";
        const char* loss = r.cfg.mode == ugmm::TrainMode::generative ? "nll-generative"
                                                                     : "cross-entropy";
        std::printf("%-8s %-8s %16.2f  %-14s\n", r.cfg.dataset.name.c_str(), model,
                    100.0 * r.final_accuracy, loss);
    };
    std::printf("%-8s %-8s %16s  %-14s\n", "dataset", "model", "test_accuracy(%)", "loss");
    row(a);
    row(b);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"uGMM-NN: feedforward networks of univariate Gaussian mixture neurons"};
    app.require_subcommand(1);

    std::string config_path;
    auto* train = app.add_subcommand("train", "train a model from a JSON config");
    train->add_option("--config", config_path, "path to run config JSON")->required();

    std::string eval_ckpt, eval_data, eval_data_dir = "data";
    double eval_fraction = 0.2;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval->add_option("--data", eval_data, "dataset name: iris or mnist")->required();
    eval->add_option("--data-dir", eval_data_dir, "directory holding dataset files");
    eval->add_option("--test-fraction", eval_fraction, "iris held-out fraction");

    std::uint64_t gc_seed = 1;
    std::string gc_sizes;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    gradcheck->add_option("--seed", gc_seed, "audit seed");
    gradcheck->add_option("--sizes", gc_sizes, "single layer audit BxNxM (e.g. 2x3x4)");

    std::string ins_ckpt, ins_out = "density";
    std::size_t ins_layer = 0, ins_neuron = 0, ins_points = 200;
    double ins_min = -5.0, ins_max = 5.0;
    auto* inspect = app.add_subcommand("inspect", "export one neuron's mixture density");
    inspect->add_option("--ckpt", ins_ckpt, "checkpoint path")->required();
    inspect->add_option("--layer", ins_layer, "layer index")->required();
    inspect->add_option("--neuron", ins_neuron, "neuron index")->required();
    inspect->add_option("--min", ins_min, "grid start")->required();
    inspect->add_option("--max", ins_max, "grid end")->required();
    inspect->add_option("--points", ins_points, "grid points")->required();
    inspect->add_option("--out", ins_out, "output prefix for .csv/.svg");

    std::string cmp_a, cmp_b;
    auto* compare = app.add_subcommand("compare", "train two configs and tabulate accuracy");
    compare->add_option("--a", cmp_a, "first config")->required();
    compare->add_option("--b", cmp_b, "second config")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(train)) return cmd_train(config_path);
        if (app.got_subcommand(eval)) {
            return cmd_eval(eval_ckpt, eval_data, eval_data_dir, eval_fraction);
        }
        if (app.got_subcommand(gradcheck)) return cmd_gradcheck(gc_seed, gc_sizes);
        if (app.got_subcommand(inspect)) {
            return cmd_inspect(ins_ckpt, ins_layer, ins_neuron, ins_min, ins_max, ins_points,
                               ins_out);
        }
        if (app.got_subcommand(compare)) return cmd_compare(cmp_a, cmp_b);
    } catch (const ugmm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ugmm::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const ugmm::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
