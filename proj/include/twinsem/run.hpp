#pragma once

#include "twinsem/column_table.hpp"
#include "twinsem/estimator.hpp"
#include "twinsem/grouped_model.hpp"
#include "twinsem/simulate.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace twinsem {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitNotConverged = 3;

enum class ReportFormat { tsv, csv, json };

ReportFormat parse_report_format(const std::string& text);

struct RunFlags {
    std::optional<std::uint64_t> seed;
    std::filesystem::path out = ".";
    ReportFormat report = ReportFormat::tsv;
    bool allow_nonconverged = false;
};

/// One step of the data-preparation pipeline, applied to every group table in order.
struct PrepStep {
    std::string op;  // bin-cont | placeholder | residualize | scale
    std::vector<std::string> vars;
    std::vector<std::string> covs;
    std::string formula;
    std::vector<std::string> suffixes;
    double censp = 0.0;
    std::string covar;
    std::string pheno;
};

struct RunDiagnostic {
    std::string group;
    std::string kind;
    std::string message;
};

/// A parsed run configuration. Relative data paths are resolved against the config file.
struct RunConfig {
    std::filesystem::path base_dir;
    std::string name;
    std::string design;
    nlohmann::json options = nlohmann::json::object();
    /// Exchange-format paths for the `ram` and `twin_maker` designs.
    std::vector<PathSpec> paths;
    std::vector<std::string> manifests;
    std::map<std::string, std::filesystem::path> data;
    OrdinalLevels ordinal;
    std::vector<PrepStep> prep;
    std::map<std::string, double> fix;
    std::vector<std::pair<std::string, std::string>> equate;
    std::map<std::string, std::vector<double>> thresholds;
    std::map<std::string, Bounds> bounds;
    FitOptions fit;
    SimOptions simulate;
    std::map<std::string, double> truth;
};

/// Throws DataError naming the offending field on schema violations.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Group tables after reading and the prep pipeline; warnings go to `diagnostics`.
std::map<std::string, ColumnTable> load_data(const RunConfig& config, std::vector<RunDiagnostic>* diagnostics);

/// Builds the configured design. With `data` empty the structure alone is returned.
GroupedModel build_design(const RunConfig& config, std::map<std::string, ColumnTable> data);

ColumnTable apply_prep(ColumnTable table, const PrepStep& step, const std::string& group,
                       std::vector<RunDiagnostic>* diagnostics);

/// Matrix holding a free label: "A", "S", "M" or "thresholds".
std::string parameter_matrix(const GroupedModel& model, const std::string& label);

struct Report {
    std::string model_name;
    FitResult result;
    std::map<std::string, std::string> matrix;
    std::vector<RunDiagnostic> diagnostics;
};

/// File name to contents for the chosen format.
std::map<std::string, std::string> render_report(const Report& report, ReportFormat format);

/// Writes every file to a temporary name first, then renames them into place.
void write_files_atomically(const std::filesystem::path& dir, const std::map<std::string, std::string>& files);

int run_fit(const std::filesystem::path& config, const RunFlags& flags, std::ostream& err);
int run_simulate(const std::filesystem::path& config, const RunFlags& flags, std::ostream& err);
int run_parse_paths(const std::filesystem::path& input, const std::optional<std::filesystem::path>& output,
                    std::ostream& out, std::ostream& err);

struct PrepCommand {
    PrepStep step;
    std::filesystem::path input;
    std::filesystem::path output;
    std::optional<std::filesystem::path> levels;
    std::string zygosity;
    std::vector<std::string> mz_labels;
    std::vector<std::string> dz_labels;
};

/// `op` is one of bin-cont, placeholder, residualize, scale, summarize.
int run_prep(const PrepCommand& command, std::ostream& err);

}  // namespace twinsem
