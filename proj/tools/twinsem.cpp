#include "twinsem/run.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    using namespace twinsem;
    CLI::App app{"Twin and family structural equation models fitted by full-information maximum likelihood"};
    app.require_subcommand(1);

    std::string config;
    std::string report = "tsv";
    std::uint64_t seed = 0;
    RunFlags flags;

    auto add_run_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "Random seed (overrides the config)");
        cmd->add_option("--out", flags.out, "Output directory")->capture_default_str();
        cmd->add_option("--report", report, "Report format")
            ->check(CLI::IsMember({"tsv", "csv", "json"}))
            ->capture_default_str();
        cmd->add_flag("--allow-nonconverged", flags.allow_nonconverged, "Exit 0 even if the fit did not converge");
    };

    auto* fit_cmd = app.add_subcommand("fit", "Build the configured design, fit it and write the report");
    add_run_flags(fit_cmd);
    auto* sim_cmd = app.add_subcommand("simulate", "Simulate data from the configured design at the truth values");
    add_run_flags(sim_cmd);

    std::string paths_in;
    std::string paths_out;
    auto* parse_cmd = app.add_subcommand("parse-paths", "Convert an Onyx OpenMx export into exchange JSON");
    parse_cmd->add_option("input", paths_in, "Onyx export or exchange JSON")->required()->check(CLI::ExistingFile);
    parse_cmd->add_option("--out", paths_out, "Output file (default: stdout)");

    PrepCommand prep;
    std::string input;
    std::string output;
    std::string levels;
    auto* prep_cmd = app.add_subcommand("prep", "Data preparation");
    prep_cmd->require_subcommand(1);
    auto add_io = [&](CLI::App* cmd) {
        cmd->add_option("--in", input, "Input CSV")->required();
        cmd->add_option("--out", output, "Output CSV")->required();
        cmd->add_option("--levels", levels, "Ordinal level declarations (JSON: column -> levels)");
        cmd->add_option("--suffixes", prep.step.suffixes, "Twin suffixes")->delimiter(',');
    };
    auto* bin_cmd = prep_cmd->add_subcommand("bin-cont", "Split censored variables into bin/cont pairs");
    add_io(bin_cmd);
    bin_cmd->add_option("--vars", prep.step.vars, "Variables")->required()->delimiter(',');
    bin_cmd->add_option("--censp", prep.step.censp, "Limit of detection")->required();
    auto* ph_cmd = prep_cmd->add_subcommand("placeholder", "Insert covariate placeholders for definition variables");
    add_io(ph_cmd);
    ph_cmd->add_option("--covar", prep.step.covar, "Covariate base name")->required();
    ph_cmd->add_option("--pheno", prep.step.pheno, "Phenotype base name")->required();
    auto* res_cmd = prep_cmd->add_subcommand("residualize", "Replace variables by OLS residuals");
    add_io(res_cmd);
    res_cmd->add_option("--vars", prep.step.vars, "Dependent variables")->delimiter(',');
    res_cmd->add_option("--covs", prep.step.covs, "Covariates")->delimiter(',');
    res_cmd->add_option("--formula", prep.step.formula, "Formula, e.g. \"mpg ~ cyl + I(cyl^2) + disp\"");
    auto* scale_cmd = prep_cmd->add_subcommand("scale", "Standardize wide twin data with pooled moments");
    add_io(scale_cmd);
    scale_cmd->add_option("--vars", prep.step.vars, "Base names")->required()->delimiter(',');
    auto* sum_cmd = prep_cmd->add_subcommand("summarize", "Means, SDs and MZ/DZ twin correlations");
    add_io(sum_cmd);
    sum_cmd->add_option("--vars", prep.step.vars, "Base names")->required()->delimiter(',');
    sum_cmd->add_option("--zygosity", prep.zygosity, "Zygosity column")->required();
    sum_cmd->add_option("--mz", prep.mz_labels, "MZ labels")->delimiter(',');
    sum_cmd->add_option("--dz", prep.dz_labels, "DZ labels")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Usage errors are input errors; --help and --version exit 0.
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInputError;
    }

    if (fit_cmd->parsed() || sim_cmd->parsed()) {
        flags.report = parse_report_format(report);
        if (fit_cmd->parsed() ? fit_cmd->count("--seed") : sim_cmd->count("--seed")) flags.seed = seed;
        return fit_cmd->parsed() ? run_fit(config, flags, std::cerr) : run_simulate(config, flags, std::cerr);
    }
    if (parse_cmd->parsed()) {
        std::optional<std::filesystem::path> out;
        if (!paths_out.empty()) out = paths_out;
        return run_parse_paths(paths_in, out, std::cout, std::cerr);
    }
    for (auto* cmd : prep_cmd->get_subcommands()) {
        prep.step.op = cmd->get_name();
        prep.input = input;
        prep.output = output;
        if (!levels.empty()) prep.levels = levels;
        if (prep.step.op == "residualize" && prep.step.formula.empty() && prep.step.vars.empty()) {
            std::cerr << "error: residualize needs --vars or --formula\n";
            return kExitInputError;
        }
        return run_prep(prep, std::cerr);
    }
    return kExitInputError;
}
