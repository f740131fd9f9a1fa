#pragma once

#include "spineprog/cohort.hpp"
#include "spineprog/dpllvm.hpp"
#include "spineprog/evaluation.hpp"
#include "spineprog/transport.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spineprog::io {

/// A spine model on disk: the articulated geometry plus patient metadata.
/// Relative transforms are stored as hemisphere-fixed quaternions.
struct SpineRecord {
    std::string patient_id;
    double visit_time_months = 0.0;
    ClassLabel label = ClassLabel::Unknown;
    std::optional<double> flexibility_ratio;
    ArticulatedSpine spine;
};

void write_spine(const std::filesystem::path& path, const SpineRecord& record);
SpineRecord read_spine(const std::filesystem::path& path);

/// Cohort manifest: one row per patient with label, flexibility, class and
/// the visit files (paths relative to the manifest).
struct ManifestVisit {
    double time_months = 0.0;
    std::string path;
    double true_main_cobb_deg = 0.0;
};

struct ManifestPatient {
    std::string patient_id;
    ClassLabel label = ClassLabel::NP;
    double flexibility_ratio = 0.5;
    int deformity_class = 1;
    std::vector<ManifestVisit> visits;
};

struct Manifest {
    std::uint64_t seed = 0;
    std::vector<ManifestPatient> patients;
};

/// Writes the whole cohort: one spine file per visit plus manifest.json.
Manifest write_cohort(const std::filesystem::path& directory, const Cohort& cohort);

Manifest read_manifest(const std::filesystem::path& path);

/// Loads every visit of a manifest back into a cohort (spine files resolved
/// relative to the manifest's directory).
Cohort load_cohort(const std::filesystem::path& manifest_path);

void write_manifold(const std::filesystem::path& path, const TrainedManifold& manifold);
TrainedManifold read_manifold(const std::filesystem::path& path);

/// Prediction report: projection, curve, warp and per-time outputs.
void write_prediction_report(const std::filesystem::path& path, const ProgressionForecast& forecast,
                             const std::vector<std::string>& spine_paths);

void write_evaluation_report(const std::filesystem::path& path, const EvaluationReport& report,
                             const EvaluationConfig& config);

void write_roc_csv(const std::filesystem::path& path,
                   const std::vector<std::pair<double, double>>& roc_points);

/// Line plot of the ROC curve (with the chance diagonal) as deterministic SVG.
void write_roc_svg(const std::filesystem::path& path,
                   const std::vector<std::pair<double, double>>& roc_points);

/// Error-bar summary plot (mean with a +-1 std whisker per labelled value).
struct ErrorBar {
    std::string label;
    double mean = 0.0;
    double std_dev = 0.0;
};

void write_error_bar_svg(const std::filesystem::path& path, const std::string& title,
                         const std::string& unit, const std::vector<ErrorBar>& bars);

/// Writes via a temporary file in the same directory and renames, so readers
/// never observe partial content.
void atomic_write_text(const std::filesystem::path& path, const std::string& content);

std::string read_text(const std::filesystem::path& path);

/// Canonical projection output of the `project` subcommand.
void write_projection(const std::filesystem::path& path, const ProjectionResult& projection,
                      const TrainedManifold& manifold);

}  // namespace spineprog::io
