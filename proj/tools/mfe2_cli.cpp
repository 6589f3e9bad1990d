#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mfe2/error.hpp"
#include "mfe2/scenario.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Coupled heat and moisture transport in masonry, single-scale and FE2"};
    app.require_subcommand(1, 1);

    std::string config;
    mfe2::ScenarioOverrides flags;
    int workers = 0;
    double dt_hours = 0.0;
    double t_end_hours = 0.0;
    std::string output_dir;
    std::string cprime;
    std::uint64_t seed = 0;

    const char* names[] = {"solve-fine", "solve-rve", "solve-fe2", "gen-mesh", "compare"};
    const char* help[] = {"transient solve on the fully resolved mesh",
                          "drive one cell with a prescribed macro loading",
                          "two-scale transient solve",
                          "write the configured meshes",
                          "compare two result directories cell by cell"};
    for (int i = 0; i < 5; ++i) {
        auto* sub = app.add_subcommand(names[i], help[i]);
        sub->add_option("-c,--config", config, "scenario file (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--workers", workers, "worker threads for meso solves")->check(CLI::PositiveNumber);
        sub->add_option("--dt-hours", dt_hours, "time step [h]")->check(CLI::PositiveNumber);
        sub->add_option("--t-end-hours", t_end_hours, "end time [h]")->check(CLI::NonNegativeNumber);
        sub->add_option("--output-dir", output_dir, "output directory");
        sub->add_option("--cprime", cprime, "transient cell coupling term")->check(CLI::IsMember({"on", "off"}));
        sub->add_option("--seed", seed, "seed of synthetic climates");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();
    auto* sub = app.get_subcommands().front();

    if (sub->count("--workers")) flags.workers = workers;
    if (sub->count("--dt-hours")) flags.dt_hours = dt_hours;
    if (sub->count("--t-end-hours")) flags.t_end_hours = t_end_hours;
    if (sub->count("--output-dir")) flags.output_dir = output_dir;
    if (sub->count("--cprime")) flags.cprime = cprime == "on";
    if (sub->count("--seed")) flags.seed = seed;

    try {
        auto cfg = mfe2::load_scenario(config);
        // Command-line flags take precedence over the environment.
        mfe2::apply_overrides(cfg, mfe2::merge(mfe2::overrides_from_env(), flags));
        return mfe2::run_scenario(cfg, command, std::cout, std::cerr);
    } catch (const mfe2::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
