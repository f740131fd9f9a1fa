// Command-line front end: simulate | train | classify | project | predict | evaluate.
// All randomness derives from --seed; identical invocations produce identical
// output files. Exit codes: 0 success, 1 input/validation error, 2 numerical
// failure.

#include <CLI11.hpp>
#include <json.hpp>

#include "spineprog/cohort.hpp"
#include "spineprog/evaluation.hpp"
#include "spineprog/io.hpp"
#include "spineprog/kernel_projection.hpp"
#include "spineprog/transport.hpp"

#include <filesystem>
#include <iostream>
#include <random>

namespace fs = std::filesystem;
using namespace spineprog;

namespace {

// A JSON config file may supply any flag of the invoked subcommand; explicit
// command-line flags win. The file's entries are rewritten as --key=value
// arguments inserted ahead of the user's, so CLI11's last-wins rule applies.
std::vector<std::string> inject_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    for (size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
            args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
            args.erase(args.begin() + static_cast<long>(i));
            break;
        }
    }
    if (config_path.empty() || args.empty()) return args;

    const nlohmann::json doc = nlohmann::json::parse(io::read_text(config_path));
    if (!doc.is_object()) throw ValidationError("config file must hold a JSON object");
    std::vector<std::string> injected;
    for (const auto& [key, value] : doc.items()) {
        std::string rendered;
        if (value.is_array()) {
            for (const auto& item : value) {
                if (!rendered.empty()) rendered += ",";
                rendered += item.is_string() ? item.get<std::string>() : item.dump();
            }
        } else if (value.is_string()) {
            rendered = value.get<std::string>();
        } else {
            rendered = value.dump();
        }
        injected.push_back("--" + key + "=" + rendered);
    }
    // Insert after the subcommand name.
    args.insert(args.begin() + 1, injected.begin(), injected.end());
    return args;
}

FeatureVector feature_from_record(const io::SpineRecord& rec, FeatureMode mode) {
    return to_feature_vector(rec.spine, mode, rec.label, rec.patient_id, rec.visit_time_months);
}

TrainedManifold train_manifold(const Cohort& cohort, FeatureMode mode, const Hyperparams& hyper,
                               int graph_k) {
    std::vector<FeatureVector> features = cohort_features(cohort, mode);
    std::vector<double> flex;
    for (const auto& pat : cohort.patients) {
        for (size_t v = 0; v < pat.visits.size(); ++v) flex.push_back(pat.flexibility_ratio);
    }
    const MatX dist = pairwise_distances(features);
    std::vector<ClassLabel> labels;
    for (const auto& f : features) labels.push_back(f.label);
    const SimilarityGraphs graphs = build_graphs_from_distances(dist, labels, graph_k);
    TrainedManifold manifold = fit(features, hyper, graphs, &dist);
    manifold.anchor_flexibility = std::move(flex);
    finalize_reconstruction_stats(manifold);
    return manifold;
}

int run(int argc, char** argv) {
    CLI::App app{"Discriminant spine-manifold learning, classification and progression prediction"};
    app.require_subcommand(1);

    // --- simulate ----------------------------------------------------------
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic longitudinal cohort");
    CohortConfig cohort_cfg;
    std::string sim_out;
    sim->add_option("--patients", cohort_cfg.n_patients, "Number of patients");
    sim->add_option("--fraction-progressive", cohort_cfg.fraction_progressive,
                    "Fraction of progressive patients");
    sim->add_option("--visits-min", cohort_cfg.visits_min, "Minimum visits per patient");
    sim->add_option("--visits-max", cohort_cfg.visits_max, "Maximum visits per patient");
    sim->add_option("--jitter", cohort_cfg.visit_jitter_months, "Visit time jitter (months)");
    sim->add_option("--cobb-lo", cohort_cfg.baseline_cobb_lo_deg, "Baseline Cobb lower bound (deg)");
    sim->add_option("--cobb-hi", cohort_cfg.baseline_cobb_hi_deg, "Baseline Cobb upper bound (deg)");
    sim->add_option("--rate-lo", cohort_cfg.rate_lo_deg_per_year, "Progression rate lower bound (deg/yr)");
    sim->add_option("--rate-hi", cohort_cfg.rate_hi_deg_per_year, "Progression rate upper bound (deg/yr)");
    sim->add_option("--np-drift", cohort_cfg.np_drift_max_deg, "Max non-progressive drift (deg)");
    sim->add_option("--noise", cohort_cfg.landmark_noise_mm, "Landmark noise std-dev (mm)");
    std::vector<double> class_mix;
    sim->add_option("--class-mix", class_mix, "Deformity class weights C1..C5")
        ->delimiter(',')
        ->expected(0, 5);
    sim->add_option("--seed", cohort_cfg.seed, "Random seed");
    sim->add_option("--out", sim_out, "Output directory")->required();

    // --- train -------------------------------------------------------------
    auto* train = app.add_subcommand("train", "Fit the discriminant manifold on a cohort");
    std::string train_cohort, train_out, train_mode = "shape_poses";
    Hyperparams hyper;
    int graph_k = 10;
    train->add_option("--cohort", train_cohort, "Cohort manifest.json (or its directory)")->required();
    train->add_option("--out", train_out, "Output manifold file")->required();
    train->add_option("--mode", train_mode, "Feature mode: shape | poses | shape_poses");
    train->add_option("--dim", hyper.latent_dim, "Latent dimension d");
    train->add_option("--k", graph_k, "Neighborhood size K");
    train->add_option("--omega-w", hyper.omega_w, "Within-class weight");
    train->add_option("--omega-b", hyper.omega_b, "Between-class weight");
    train->add_option("--sigma", hyper.sigma, "Initial latent scale prior weight");
    train->add_option("--max-iters", hyper.max_iters, "Maximum EM iterations");
    train->add_option("--tol", hyper.elbo_rel_tol, "Relative ELBO convergence tolerance");

    // --- classify ----------------------------------------------------------
    auto* cls = app.add_subcommand("classify", "Classify a baseline reconstruction as P or NP");
    std::string cls_model, cls_spine, cls_out;
    cls->add_option("--model", cls_model, "Trained manifold file")->required();
    cls->add_option("--spine", cls_spine, "Spine file to classify")->required();
    cls->add_option("--out", cls_out, "Output JSON (stdout when omitted)");

    // --- project -----------------------------------------------------------
    auto* proj = app.add_subcommand("project", "Kernel-project a spine into latent space");
    std::string proj_model, proj_spine, proj_out;
    int proj_k = 0;
    bool proj_all_anchors = false, proj_euclidean = false;
    proj->add_option("--model", proj_model, "Trained manifold file")->required();
    proj->add_option("--spine", proj_spine, "Spine file to project")->required();
    proj->add_option("--out", proj_out, "Output JSON")->required();
    proj->add_option("--k", proj_k, "Neighborhood size (default: model K)");
    proj->add_flag("--all-anchors", proj_all_anchors,
                   "Use every anchor instead of progressive baselines only");
    proj->add_flag("--euclidean", proj_euclidean,
                   "Replace the articulated metric with plain Euclidean distance");

    // --- predict -----------------------------------------------------------
    auto* pred = app.add_subcommand("predict", "Predict future spine morphology from a baseline");
    std::string pred_model, pred_baseline, pred_out;
    double pred_flex = 0.0, pred_tau = 0.0;
    std::vector<double> pred_months;
    FitCurveOptions curve_opt;
    bool pred_raw_flex = false, pred_sample = false;
    std::uint64_t pred_seed = 1;
    int pred_k = 0;
    pred->add_option("--model", pred_model, "Trained manifold file")->required();
    pred->add_option("--baseline", pred_baseline, "Baseline spine file")->required();
    pred->add_option("--flex", pred_flex, "Flexibility ratio from bending films")->required();
    pred->add_option("--months", pred_months, "Target times in months")->delimiter(',')->required();
    pred->add_option("--out", pred_out, "Output directory")->required();
    pred->add_option("--k", pred_k, "Neighborhood size (default: model K)");
    pred->add_option("--kd", curve_opt.num_nodes, "Curve discretization nodes");
    pred->add_option("--lambda", curve_opt.lambda, "Velocity penalty weight");
    pred->add_option("--mu", curve_opt.mu, "Acceleration penalty weight");
    pred->add_option("--tau", pred_tau, "Time shift of the warp (months)");
    pred->add_flag("--raw-flex", pred_raw_flex,
                   "Use the flexibility ratio directly instead of normalizing by the neighborhood");
    pred->add_flag("--sample", pred_sample, "Add one noise draw at the reported epsilon scale");
    pred->add_option("--seed", pred_seed, "Seed for --sample draws");

    // --- evaluate ----------------------------------------------------------
    auto* eval = app.add_subcommand("evaluate", "k-fold cross-validated classification and prediction");
    std::string eval_cohort, eval_out, eval_mode = "shape_poses";
    EvaluationConfig eval_cfg;
    eval->add_option("--cohort", eval_cohort, "Cohort manifest.json (or its directory)")->required();
    eval->add_option("--out", eval_out, "Output directory")->required();
    eval->add_option("--folds", eval_cfg.k_folds, "Number of folds");
    eval->add_option("--mode", eval_mode, "Feature mode");
    eval->add_option("--dim", eval_cfg.hyper.latent_dim, "Latent dimension d");
    eval->add_option("--k", eval_cfg.graph_k, "Neighborhood size K");
    eval->add_option("--omega-w", eval_cfg.hyper.omega_w, "Within-class weight");
    eval->add_option("--omega-b", eval_cfg.hyper.omega_b, "Between-class weight");
    eval->add_option("--max-iters", eval_cfg.hyper.max_iters, "Maximum EM iterations");
    eval->add_option("--seed", eval_cfg.seed, "Fold partition seed");
    bool eval_no_prediction = false;
    eval->add_flag("--no-prediction", eval_no_prediction, "Skip the forecasting evaluation");

    std::vector<std::string> args = inject_config(argc, argv);
    try {
        std::vector<const char*> cargs;
        cargs.push_back("spineprog");
        for (const auto& a : args) cargs.push_back(a.c_str());
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (sim->parsed()) {
        if (!class_mix.empty()) {
            if (class_mix.size() != 5) throw ValidationError("--class-mix needs 5 weights");
            for (size_t i = 0; i < 5; ++i) cohort_cfg.deformity_class_mix[i] = class_mix[i];
        }
        const Cohort cohort = generate_cohort(cohort_cfg);
        io::write_cohort(sim_out, cohort);
        std::cout << "wrote " << cohort.patients.size() << " patients to " << sim_out << "\n";
        return 0;
    }

    if (train->parsed()) {
        fs::path manifest = train_cohort;
        if (fs::is_directory(manifest)) manifest /= "manifest.json";
        const Cohort cohort = io::load_cohort(manifest);
        const TrainedManifold manifold =
            train_manifold(cohort, parse_mode(train_mode), hyper, graph_k);
        io::write_manifold(train_out, manifold);
        std::cout << "trained on " << manifold.n() << " samples; final ELBO "
                  << manifold.elbo_trace.back() << "; wrote " << train_out << "\n";
        return 0;
    }

    if (cls->parsed()) {
        const TrainedManifold manifold = io::read_manifold(cls_model);
        const io::SpineRecord rec = io::read_spine(cls_spine);
        const FeatureVector query = feature_from_record(rec, manifold.mode);
        const EmbedResult emb = embed_out_of_sample(manifold, query);
        const Classification result = classify(manifold, emb.latent);
        nlohmann::json doc;
        doc["label"] = label_name(result.label);
        doc["score"] = result.score;
        nlohmann::json lat = nlohmann::json::array();
        nlohmann::json var = nlohmann::json::array();
        for (int i = 0; i < emb.latent.size(); ++i) {
            lat.push_back(emb.latent(i));
            var.push_back(emb.variance(i));
        }
        doc["latent"] = lat;
        doc["posterior_variance"] = var;
        const std::string text = doc.dump(2) + "\n";
        if (cls_out.empty()) {
            std::cout << text;
        } else {
            io::atomic_write_text(cls_out, text);
        }
        return 0;
    }

    if (proj->parsed()) {
        const TrainedManifold manifold = io::read_manifold(proj_model);
        const io::SpineRecord rec = io::read_spine(proj_spine);
        KernelConfig kcfg;
        kcfg.k_neighbors = proj_k > 0 ? proj_k : manifold.graphs.k;
        kcfg.euclidean_ambient = proj_euclidean;
        const ProjectionResult result = nw_project(manifold, feature_from_record(rec, manifold.mode),
                                                   kcfg, !proj_all_anchors);
        io::write_projection(proj_out, result, manifold);
        std::cout << "projected onto " << result.neighbor_ids.size() << " anchors in "
                  << result.iterations << " iterations; wrote " << proj_out << "\n";
        return 0;
    }

    if (pred->parsed()) {
        const TrainedManifold manifold = io::read_manifold(pred_model);
        const io::SpineRecord rec = io::read_spine(pred_baseline);
        ProgressionOptions opt;
        opt.curve = curve_opt;
        opt.tau = pred_tau;
        opt.normalize_flexibility = !pred_raw_flex;
        opt.k_neighbors = pred_k;
        const ProgressionForecast forecast = predict_progression(
            manifold, feature_from_record(rec, manifold.mode), pred_flex, pred_months, opt);
        fs::create_directories(pred_out);
        std::vector<std::string> spine_paths;
        std::mt19937_64 sample_rng(pred_seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (const auto& p : forecast.predictions) {
            char name[64];
            std::snprintf(name, sizeof(name), "predicted_t%03d.spine.json",
                          static_cast<int>(std::lround(p.requested_time_months)));
            io::SpineRecord out_rec;
            out_rec.patient_id = rec.patient_id;
            out_rec.visit_time_months = p.requested_time_months;
            out_rec.label = ClassLabel::P;
            out_rec.flexibility_ratio = pred_flex;
            out_rec.spine = p.spine;
            if (pred_sample) {
                FeatureVector noisy = p.feature_vector;
                for (int i = 0; i < noisy.values.size(); ++i) {
                    noisy.values(i) += p.epsilon_scale * gauss(sample_rng);
                }
                if (mode_has_poses(noisy.mode)) {
                    const int block = mode_block_size(noisy.mode);
                    for (int c = 0; c < kNumLevels; ++c) {
                        Eigen::Vector4d q = noisy.values.segment<4>(c * block);
                        noisy.values.segment<4>(c * block) =
                            quaternion_from_rotation(rotation_from_quaternion(q));
                    }
                }
                out_rec.spine = from_feature_vector(noisy);
            }
            io::write_spine(fs::path(pred_out) / name, out_rec);
            spine_paths.push_back(name);
        }
        io::write_prediction_report(fs::path(pred_out) / "prediction_report.json", forecast,
                                    spine_paths);
        std::cout << "wrote " << spine_paths.size() << " predictions to " << pred_out;
        if (!forecast.warnings.empty()) {
            std::cout << " (" << forecast.warnings.size() << " warnings)";
        }
        std::cout << "\n";
        return 0;
    }

    if (eval->parsed()) {
        fs::path manifest = eval_cohort;
        if (fs::is_directory(manifest)) manifest /= "manifest.json";
        const Cohort cohort = io::load_cohort(manifest);
        eval_cfg.mode = parse_mode(eval_mode);
        eval_cfg.evaluate_prediction = !eval_no_prediction;
        const EvaluationReport report = kfold_evaluate(cohort, eval_cfg);
        fs::create_directories(eval_out);
        io::write_evaluation_report(fs::path(eval_out) / "report.json", report, eval_cfg);
        io::write_roc_csv(fs::path(eval_out) / "roc.csv", report.classification.roc_points);
        io::write_roc_svg(fs::path(eval_out) / "roc.svg", report.classification.roc_points);
        std::vector<io::ErrorBar> bars;
        bars.push_back({"Cobb error", report.prediction.cobb_error_mean_deg,
                        report.prediction.cobb_error_std_deg});
        bars.push_back({"landmark RMS", report.prediction.landmark_rms_mean_mm, 0.0});
        io::write_error_bar_svg(fs::path(eval_out) / "prediction_errors.svg",
                                "Held-out prediction errors", "", bars);
        std::cout << "accuracy " << report.classification.accuracy_pct << "% / AUC "
                  << report.classification.auc << "; wrote " << eval_out << "\n";
        return 0;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
