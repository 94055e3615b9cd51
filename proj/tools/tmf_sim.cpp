// tmf_sim: run, validate or simulate the ground truth of a scenario file.
//
// Exit status: 0 success, 1 invalid configuration or arguments, 2 runtime failure.

#include <CLI11.hpp>

#include <tmf/harness.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> particles;
    std::optional<double> gamma;
    std::optional<std::string> solver;
    bool no_pca = false;
};

/// A path that exists is used as-is; otherwise the name is looked up among
/// the bundled scenarios, with or without the .json suffix.
fs::path resolve_scenario(const std::string& name) {
    if (fs::exists(name)) {
        return name;
    }
    const fs::path bundled = fs::path(TMF_SCENARIO_DIR) / name;
    if (fs::exists(bundled)) {
        return bundled;
    }
    fs::path with_ext = bundled;
    with_ext += ".json";
    if (fs::exists(with_ext)) {
        return with_ext;
    }
    throw tmf::ConfigError("scenario '" + name + "' not found (also looked in " + std::string(TMF_SCENARIO_DIR) + ")");
}

tmf::ScenarioConfig load_with_overrides(const std::string& name, const Overrides& o) {
    tmf::ScenarioConfig s = tmf::load_scenario(resolve_scenario(name));
    if (o.seed) {
        s.seed = *o.seed;
    }
    if (o.particles) {
        s.particles = *o.particles;
    }
    if (o.gamma) {
        s.gamma = *o.gamma;
    }
    if (o.solver) {
        s.solver.method = tmf::parse_solver_method(*o.solver);
    }
    if (o.no_pca) {
        s.pca.enabled = false;
    }
    s.validate();
    return s;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed transport-map filter simulator"};
    app.require_subcommand(1);

    std::string scenario;
    std::string output = "out";
    Overrides overrides;
    unsigned threads = 1;
    bool no_plot = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--scenario", scenario, "Scenario file or bundled name (table2, table3)")->required();
        cmd->add_option("--seed", overrides.seed, "Override the scenario seed");
        cmd->add_option("--particles", overrides.particles, "Override the particle count M");
        cmd->add_option("--gamma", overrides.gamma, "Override the consensus step size");
        cmd->add_option("--solver", overrides.solver, "Map solver: closed-form or gradient");
        cmd->add_flag("--no-pca", overrides.no_pca, "Assimilate in the full spaces");
    };

    CLI::App* run = app.add_subcommand("run", "Simulate truth, run the filter, write artifacts");
    add_common(run);
    run->add_option("--output", output, "Output directory")->capture_default_str();
    run->add_option("--threads", threads, "Worker threads (results do not depend on it)")->capture_default_str();
    run->add_flag("--no-plot", no_plot, "Skip mse.svg");

    CLI::App* validate = app.add_subcommand("validate", "Check a scenario and print it with defaults filled in");
    add_common(validate);

    CLI::App* truth = app.add_subcommand("truth", "Write only the ground-truth trajectory");
    add_common(truth);
    truth->add_option("--output", output, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        (void)app.exit(e);
        return 1;
    }

    tmf::ScenarioConfig s;
    try {
        s = load_with_overrides(scenario, overrides);
    } catch (const tmf::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*validate) {
            std::cout << tmf::scenario_to_json(s).dump(2) << '\n';
            return 0;
        }
        if (threads == 0) {
            std::cerr << "error: --threads must be at least 1\n";
            return 1;
        }
        if (*truth) {
            fs::create_directories(output);
            std::ostringstream csv;
            tmf::write_truth_csv(csv, s, tmf::simulate_truth(s));
            tmf::write_text_file(fs::path(output) / "truth.csv", csv.str());
            return 0;
        }
        const tmf::MetricsLog log = tmf::run_scenario(s, output, threads, {.write_plot = !no_plot});
        const int last = s.steps();
        for (int l = 0; l < s.agent_count(); ++l) {
            std::cout << "agent " << s.agents[static_cast<std::size_t>(l)].id
                      << ": mse(t=0)=" << tmf::format_number(log.at(0, l).mse)
                      << " mse(t_end)=" << tmf::format_number(log.at(last, l).mse) << '\n';
        }
    } catch (const tmf::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
