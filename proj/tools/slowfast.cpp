// slowfast: run the experiments, list them, check model Jacobians.

#include "slowfast/experiments.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace ex = slowfast::experiments;

namespace {

slowfast::models::Params read_params(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream is(path);
    if (!is) throw slowfast::Error(slowfast::ErrorKind::BadParams, "cannot open " + path);
    const auto j = nlohmann::json::parse(is, nullptr, false);
    if (!j.is_object()) throw slowfast::Error(slowfast::ErrorKind::BadParams, path + " is not a JSON object");
    slowfast::models::Params out;
    for (const auto& [key, value] : j.items()) {
        if (!value.is_number()) throw slowfast::Error(slowfast::ErrorKind::BadParams, "parameter '" + key + "' is not a number");
        out[key] = value.get<double>();
    }
    return out;
}

// A flag is either the experiment's sweep (any number of values) or a single value.
std::optional<double> single(const std::vector<double>& v, const char* flag) {
    if (v.empty()) return std::nullopt;
    if (v.size() > 1) throw slowfast::Error(slowfast::ErrorKind::InvalidArgument, std::string(flag) + " takes one value here");
    return v.front();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Slow manifolds of saddle type: experiments and checks"};
    app.require_subcommand(1);

    std::string name, out_dir = "out", params_file;
    std::vector<double> eps, r, dtau, h;
    int jobs = 1;
    unsigned seed = 0;
    bool no_traj = false;
    auto* run = app.add_subcommand("run", "run one experiment");
    run->set_help_flag("--help", "Print this help message and exit");  // -h would clash with --h
    run->add_option("experiment", name, "experiment name (see `list`)")->required();
    run->add_option("--eps", eps, "epsilon, or the sweep values for eps sweeps");
    run->add_option("--r", r, "distance from the slow manifold, or the sweep values");
    run->add_option("--dtau", dtau, "slow time step, or the sweep values");
    run->add_option("--h", h, "SO grid spacing");
    run->add_option("--out", out_dir, "output directory")->capture_default_str();
    run->add_option("--jobs", jobs, "concurrent sweep points")->capture_default_str();
    run->add_option("--params", params_file, "JSON object of model parameter overrides");
    run->add_option("--seed", seed, "seed recorded with the run")->capture_default_str();
    run->add_flag("--no-trajectories", no_traj, "write only sweep tables and the summary");

    auto* list = app.add_subcommand("list", "list experiments");

    std::string model;
    auto* validate = app.add_subcommand("validate", "check a model's Jacobians against finite differences");
    validate->add_option("model", model)->required();
    validate->add_option("--params", params_file, "JSON object of model parameter overrides");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*list) {
            for (const auto& e : ex::registry()) std::cout << e.name << "\t" << e.model << "\t" << e.description << "\n";
            return 0;
        }
        if (*validate) {
            const auto report = ex::validate_model(model, read_params(params_file));
            std::cout << report.dump(2) << "\n";
            return report["ok"].get<bool>() ? 0 : 2;
        }

        const auto& exp = ex::find_experiment(name);
        ex::ExperimentSpec spec;
        spec.experiment = name;
        spec.params = read_params(params_file);
        spec.jobs = jobs;
        spec.seed = seed;
        spec.trajectories = !no_traj;
        std::vector<double>* sweep = exp.sweep == ex::Sweep::Eps ? &eps : exp.sweep == ex::Sweep::R ? &r
                                     : exp.sweep == ex::Sweep::Dtau ? &dtau : nullptr;
        if (sweep && sweep->size() > 1) {
            spec.sweep = *sweep;
            std::sort(spec.sweep.begin(), spec.sweep.end());
            sweep->clear();
        }
        spec.eps = single(eps, "--eps");
        spec.r = single(r, "--r");
        spec.dtau = single(dtau, "--dtau");
        spec.h = single(h, "--h");

        const auto dir = std::filesystem::path(out_dir) / name;
        const auto report = ex::run(spec, dir);
        std::cout << report.summary.dump(2) << "\n";
        if (report.exit_code != 0) std::cerr << "numerical failure; diagnostics in " << (dir / "summary.json") << "\n";
        return report.exit_code;
    } catch (const slowfast::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
