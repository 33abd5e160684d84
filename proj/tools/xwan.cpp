// Command-line front end for the weak-adversarial PDE solver benchmark.

#include <CLI11.hpp>

#include "xwan/bench.hpp"

int main(int argc, char** argv) {
    CLI::App app{"weak-adversarial parabolic PDE solver (WAN / XNODE-WAN) benchmark harness"};
    app.require_subcommand(1);

    xwan::bench::CliOptions opt;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        if (needs_config) cmd->add_option("--config", opt.config_path, "run configuration (json)")->required();
        cmd->add_option("--out", opt.out_dir, "output directory (overrides output.dir)");
        cmd->add_flag("--force", opt.force, "allow writing into a non-empty output directory");
        cmd->add_option("--seed", [&opt](const std::vector<std::string>& v) {
            opt.seed = std::stoull(v.front());
            return true;
        }, "override training.seed");
        cmd->add_option("--threads", [&opt](const std::vector<std::string>& v) {
            opt.threads = std::stoi(v.front());
            return true;
        }, "concurrent sweep runs");
    };

    auto* train = app.add_subcommand("train", "train one model per the config");
    add_common(train, true);

    auto* compare = app.add_subcommand("compare", "train xnode and dnn primals with a shared seed");
    add_common(compare, true);

    auto* sweep = app.add_subcommand("sweep", "cross-product of config overrides, one run each");
    add_common(sweep, true);
    sweep->add_option("--spec", opt.sweep_path, "sweep specification (json)")->required();

    auto* heatmap = app.add_subcommand("heatmap", "render a solution slice as svg + csv");
    add_common(heatmap, true);
    heatmap->add_option("--params", opt.params_path, "params.json of a trained run (omit for the exact solution)");
    heatmap->add_flag("--exact", opt.use_exact, "plot the preset's exact solution");
    heatmap->add_option("--t", opt.t, "time slice (ignored for 1-d domains)");
    heatmap->add_option("--nx", opt.nx, "grid columns");
    heatmap->add_option("--ny", opt.ny, "grid rows");
    heatmap->add_option("--ax1", opt.axis1, "first plotted coordinate (0-based)");
    heatmap->add_option("--ax2", opt.axis2, "second plotted coordinate (0-based)");

    auto* presets = app.add_subcommand("presets", "list the problem presets");

    CLI11_PARSE(app, argc, argv);

    if (train->parsed()) return xwan::bench::cmd_train(opt);
    if (compare->parsed()) return xwan::bench::cmd_compare(opt);
    if (sweep->parsed()) return xwan::bench::cmd_sweep(opt);
    if (heatmap->parsed()) return xwan::bench::cmd_heatmap(opt);
    if (presets->parsed()) return xwan::bench::cmd_presets();
    return xwan::bench::kExitConfig;
}
