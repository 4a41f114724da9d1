// Command-line front end: load a configuration, run one experiment and write
// its CSVs and manifest.

#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "vesselcomm/harness.hpp"

using namespace vesselcomm;

namespace {

std::string read_file(std::string const& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read config file '" + path + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Molecular communication in a blood vessel: particle simulation and "
                 "receiver-chain experiments"};
    app.set_version_flag("--version", std::string(VESSELCOMM_VERSION));

    std::string config_path, experiment, bits, output_dir = "vesselcomm_out";
    std::optional<std::uint64_t> seed;
    std::optional<int> threads, replicates;
    std::optional<double> duration;
    std::optional<bool> deterministic;

    app.add_option("--config", config_path, "JSON configuration (defaults: full-density vessel)")
        ->check(CLI::ExistingFile);
    app.add_option("--experiment", experiment, "impulse, trace, sweep or frame");
    app.add_option("--bits", bits, "frame bits for the frame experiment, e.g. 1011");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--deterministic,!--relaxed", deterministic,
                 "canonical ordering (default) or relaxed ordering");
    app.add_option("--output-dir", output_dir, "directory for CSVs and the manifest");
    app.add_option("--duration-us", duration, "simulated duration in microseconds");
    app.add_option("--replicates", replicates, "independent replicates")
        ->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try
    {
        ExperimentSpec spec = config_path.empty() ? ExperimentSpec{}
                                                  : load_experiment(read_file(config_path));
        if (!experiment.empty())
            spec.kind = parse_experiment_kind(experiment);
        if (!bits.empty())
        {
            try
            {
                spec.bits = parse_bits(bits);
            }
            catch (std::invalid_argument const& e)
            {
                throw ConfigError(ConfigError::Kind::validation, std::string("--bits: ") + e.what());
            }
            spec.encoder.frame_bits = static_cast<int>(spec.bits.size());
        }
        if (spec.kind == ExperimentKind::frame && spec.bits.empty())
            throw ConfigError(ConfigError::Kind::validation,
                              "the frame experiment needs --bits or experiment.bits");
        if (seed)
            spec.simulation.seed = *seed;
        if (threads)
            spec.simulation.threads = *threads;
        if (deterministic)
            spec.simulation.deterministic = *deterministic;
        if (replicates)
            spec.replicates = *replicates;
        if (duration)
        {
            spec.simulation.duration = *duration;
            if (spec.horizon && *spec.horizon > *duration)
                spec.horizon.reset();
        }
        validate(spec);

        std::cerr << "vesselcomm: running " << to_string(spec.kind) << " experiment ("
                  << spec.replicates << " replicate(s), "
                  << spec.effective_horizon() / units::s << " s)\n";
        auto const result = run_experiment(spec);
        emit_outputs(result, output_dir);
        std::cerr << "vesselcomm: wrote " << output_dir << " in " << result.wall_clock_s
                  << " s\n";
        return 0;
    }
    catch (ConfigError const& e)
    {
        std::cerr << "vesselcomm: configuration error: " << e.what() << '\n';
        return 2;
    }
    catch (std::exception const& e)
    {
        std::cerr << "vesselcomm: error: " << e.what() << '\n';
        return 1;
    }
}
