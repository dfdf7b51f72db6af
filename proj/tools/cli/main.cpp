#include "commands.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    using namespace drmpc::cli;

    CLI::App app{"Distributionally robust MPC: offline tightening and Monte-Carlo campaigns"};
    app.require_subcommand(1);

    std::string config, out, reference, report;
    Overrides o;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    std::string zeta_mode, margin_mode;
    std::size_t trial = 0;

    auto add_run_flags = [&](CLI::App* sub) {
        sub->add_option("--config", config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory (overrides DRMPC_OUT_DIR and the config)");
        sub->add_option("--seed", seed, "master seed");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--zeta-mode", zeta_mode, "budget inflation")
            ->check(CLI::IsMember({"paper-literal", "corrected"}));
        sub->add_option("--margin-mode", margin_mode, "state margin")->check(CLI::IsMember({"cvar", "norm"}));
    };

    CLI::App* tighten = app.add_subcommand("tighten", "compute the tightening schedule of every grid cell");
    add_run_flags(tighten);
    CLI::App* run = app.add_subcommand("run", "run the Monte-Carlo campaign");
    add_run_flags(run);
    CLI::App* compare = app.add_subcommand("compare", "compare a report against reference percentages");
    compare->add_option("report", report, "report.json")->required()->check(CLI::ExistingFile);
    compare->add_option("reference", reference, "reference table (JSON)")->required()->check(CLI::ExistingFile);
    CLI::App* plot = app.add_subcommand("report", "emit plot-ready CSV files from a report");
    plot->add_option("report", report, "report.json")->required()->check(CLI::ExistingFile);
    plot->add_option("--out", out, "output directory (default: <report dir>/plot)");
    plot->add_option("--trial", trial, "trial index to plot");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    auto overrides = [&](CLI::App* sub) {
        if (sub->count("--out")) o.out_dir = out;
        if (sub->count("--seed")) o.seed = seed;
        if (sub->count("--threads")) o.threads = threads;
        if (sub->count("--zeta-mode")) o.zeta_mode = zeta_mode;
        if (sub->count("--margin-mode")) o.margin_mode = margin_mode;
        return o;
    };

    if (*tighten) return cmd_tighten(config, overrides(tighten), std::cerr);
    if (*run) return cmd_run(config, overrides(run), std::cerr);
    if (*compare) return cmd_compare(report, reference, std::cout, std::cerr);
    const std::filesystem::path dir =
        plot->count("--out") ? std::filesystem::path(out) : std::filesystem::path(report).parent_path() / "plot";
    return cmd_report(report, dir, trial, std::cerr);
}
