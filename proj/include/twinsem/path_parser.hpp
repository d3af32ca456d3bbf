#pragma once

#include "twinsem/ram_model.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace twinsem {

struct Diagnostic {
    std::size_t line = 0;
    std::string message;

    bool operator==(const Diagnostic&) const = default;
};

struct ParsedPathSet {
    std::string name;
    std::vector<PathSpec> paths;
    /// From a `manifests <- c(...)` declaration, commented or not.
    std::vector<std::string> declared_manifests;
    std::vector<std::string> declared_latents;
    std::vector<std::string> defvars;
    std::vector<Diagnostic> diagnostics;
};

/// Parses the mxPath(...) statements of an Onyx OpenMx export. Vector arguments
/// expand to one PathSpec per target; single-element free/value/label/arrows
/// broadcast. Other statements are skipped with a diagnostic.
ParsedPathSet parse_onyx_export(std::string_view text);

/// Reads a path file: `.json` as the exchange format, anything else as an Onyx export.
ParsedPathSet read_path_file(const std::filesystem::path& path);

/// Every variable named in `paths` except "one" and definition proxies, in first-appearance order.
std::vector<std::string> path_variables(const std::vector<PathSpec>& paths);

/// RamModel over the given manifests; every other variable named in the paths becomes a latent.
RamModel build_ram(const std::string& name, const std::vector<PathSpec>& paths,
                   const std::vector<std::string>& manifests);

}  // namespace twinsem
