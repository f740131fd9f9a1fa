#include "spineprog/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace spineprog::io {

using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

json to_json(const VecX& v) {
    json arr = json::array();
    for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

json to_json(const Vec3& v) {
    return json::array({v.x(), v.y(), v.z()});
}

json rows_to_json(const MatX& m) {
    json arr = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        arr.push_back(std::move(row));
    }
    return arr;
}

VecX vec_from_json(const json& arr) {
    VecX v(arr.size());
    for (size_t i = 0; i < arr.size(); ++i) v(static_cast<int>(i)) = arr[i].get<double>();
    return v;
}

Vec3 vec3_from_json(const json& arr) {
    if (arr.size() != 3) throw ValidationError("expected a 3-vector");
    return Vec3(arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>());
}

MatX mat_from_json(const json& arr, int cols_expected = -1) {
    const int rows = static_cast<int>(arr.size());
    if (rows == 0) return MatX(0, std::max(cols_expected, 0));
    const int cols = static_cast<int>(arr[0].size());
    if (cols_expected >= 0 && cols != cols_expected) {
        throw ValidationError("matrix has unexpected column count");
    }
    MatX m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        if (static_cast<int>(arr[static_cast<size_t>(i)].size()) != cols) {
            throw ValidationError("ragged matrix rows");
        }
        for (int j = 0; j < cols; ++j) {
            m(i, j) = arr[static_cast<size_t>(i)][static_cast<size_t>(j)].get<double>();
        }
    }
    return m;
}

json edges_to_json(const MatX& w) {
    json arr = json::array();
    for (int i = 0; i < w.rows(); ++i) {
        for (int j = i + 1; j < w.cols(); ++j) {
            if (w(i, j) != 0.0) arr.push_back(json::array({i, j, w(i, j)}));
        }
    }
    return arr;
}

MatX edges_from_json(const json& arr, int n) {
    MatX w = MatX::Zero(n, n);
    for (const auto& e : arr) {
        const int i = e[0].get<int>();
        const int j = e[1].get<int>();
        const double v = e[2].get<double>();
        w(i, j) = v;
        w(j, i) = v;
    }
    return w;
}

json parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
    }
    return doc;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write " + tmp.string());
        out << content;
        if (!out) throw ValidationError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_spine(const std::filesystem::path& path, const SpineRecord& record) {
    validate_spine(record.spine);
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["patient_id"] = record.patient_id;
    doc["visit_time_months"] = record.visit_time_months;
    doc["label"] = label_name(record.label);
    doc["flexibility_ratio"] =
        record.flexibility_ratio ? json(*record.flexibility_ratio) : json(nullptr);
    json verts = json::array();
    for (int c = 0; c < kNumLevels; ++c) {
        const auto& v = record.spine.vertebrae[static_cast<size_t>(c)];
        const auto& t = record.spine.relative_transforms[static_cast<size_t>(c)];
        json jv;
        jv["level"] = level_name(v.level);
        jv["quaternion"] = to_json(VecX(quaternion_from_rotation(t.rotation)));
        jv["translation_mm"] = to_json(t.translation);
        json lms = json::array();
        for (const auto& p : v.landmarks) lms.push_back(to_json(p));
        jv["landmarks_mm"] = std::move(lms);
        verts.push_back(std::move(jv));
    }
    doc["vertebrae"] = std::move(verts);
    atomic_write_text(path, doc.dump(2) + "\n");
}

SpineRecord read_spine(const std::filesystem::path& path) {
    const json doc = parse_file(path);
    SpineRecord rec;
    try {
        rec.patient_id = doc.at("patient_id").get<std::string>();
        rec.visit_time_months = doc.at("visit_time_months").get<double>();
        rec.label = parse_label(doc.at("label").get<std::string>());
        if (!doc.at("flexibility_ratio").is_null()) {
            rec.flexibility_ratio = doc.at("flexibility_ratio").get<double>();
        }
        const auto& verts = doc.at("vertebrae");
        if (verts.size() != kNumLevels) {
            throw ValidationError("spine file must list exactly 17 vertebrae");
        }
        for (int c = 0; c < kNumLevels; ++c) {
            const auto& jv = verts[static_cast<size_t>(c)];
            auto& v = rec.spine.vertebrae[static_cast<size_t>(c)];
            auto& t = rec.spine.relative_transforms[static_cast<size_t>(c)];
            v.level = parse_level(jv.at("level").get<std::string>());
            const VecX q = vec_from_json(jv.at("quaternion"));
            if (q.size() != 4) throw ValidationError("quaternion must have 4 components");
            t.rotation = rotation_from_quaternion(Eigen::Vector4d(q(0), q(1), q(2), q(3)));
            t.translation = vec3_from_json(jv.at("translation_mm"));
            const auto& lms = jv.at("landmarks_mm");
            if (lms.size() != kLandmarksPerVertebra) {
                throw ValidationError("each vertebra needs exactly 6 landmarks");
            }
            for (int l = 0; l < kLandmarksPerVertebra; ++l) {
                v.landmarks[static_cast<size_t>(l)] = vec3_from_json(lms[static_cast<size_t>(l)]);
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError("invalid spine file " + path.string() + ": " + e.what());
    }
    validate_spine(rec.spine);
    return rec;
}

Manifest write_cohort(const std::filesystem::path& directory, const Cohort& cohort) {
    std::filesystem::create_directories(directory);
    Manifest manifest;
    manifest.seed = cohort.config.seed;
    for (const auto& pat : cohort.patients) {
        ManifestPatient mp;
        mp.patient_id = pat.patient_id;
        mp.label = pat.true_label;
        mp.flexibility_ratio = pat.flexibility_ratio;
        mp.deformity_class = pat.deformity_class;
        for (size_t v = 0; v < pat.visits.size(); ++v) {
            const auto& visit = pat.visits[v];
            ManifestVisit mv;
            mv.time_months = visit.time_months;
            mv.true_main_cobb_deg = visit.true_main_cobb_deg;
            mv.path = pat.patient_id + "_v" + std::to_string(v) + ".spine.json";
            SpineRecord rec;
            rec.patient_id = pat.patient_id;
            rec.visit_time_months = visit.time_months;
            rec.label = pat.true_label;
            rec.flexibility_ratio = pat.flexibility_ratio;
            rec.spine = visit.spine;
            write_spine(directory / mv.path, rec);
            mp.visits.push_back(std::move(mv));
        }
        manifest.patients.push_back(std::move(mp));
    }

    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["seed"] = manifest.seed;
    json pats = json::array();
    for (const auto& mp : manifest.patients) {
        json jp;
        jp["patient_id"] = mp.patient_id;
        jp["label"] = label_name(mp.label);
        jp["flexibility_ratio"] = mp.flexibility_ratio;
        jp["deformity_class"] = mp.deformity_class;
        json visits = json::array();
        for (const auto& mv : mp.visits) {
            json jv;
            jv["time_months"] = mv.time_months;
            jv["path"] = mv.path;
            jv["true_main_cobb_deg"] = mv.true_main_cobb_deg;
            visits.push_back(std::move(jv));
        }
        jp["visits"] = std::move(visits);
        pats.push_back(std::move(jp));
    }
    doc["patients"] = std::move(pats);
    atomic_write_text(directory / "manifest.json", doc.dump(2) + "\n");
    return manifest;
}

Manifest read_manifest(const std::filesystem::path& path) {
    const json doc = parse_file(path);
    Manifest manifest;
    try {
        manifest.seed = doc.at("seed").get<std::uint64_t>();
        for (const auto& jp : doc.at("patients")) {
            ManifestPatient mp;
            mp.patient_id = jp.at("patient_id").get<std::string>();
            mp.label = parse_label(jp.at("label").get<std::string>());
            mp.flexibility_ratio = jp.at("flexibility_ratio").get<double>();
            mp.deformity_class = jp.at("deformity_class").get<int>();
            for (const auto& jv : jp.at("visits")) {
                ManifestVisit mv;
                mv.time_months = jv.at("time_months").get<double>();
                mv.path = jv.at("path").get<std::string>();
                mv.true_main_cobb_deg = jv.at("true_main_cobb_deg").get<double>();
                mp.visits.push_back(std::move(mv));
            }
            manifest.patients.push_back(std::move(mp));
        }
    } catch (const json::exception& e) {
        throw ValidationError("invalid manifest " + path.string() + ": " + e.what());
    }
    return manifest;
}

Cohort load_cohort(const std::filesystem::path& manifest_path) {
    const Manifest manifest = read_manifest(manifest_path);
    const std::filesystem::path dir = manifest_path.parent_path();
    Cohort cohort;
    cohort.config.seed = manifest.seed;
    for (const auto& mp : manifest.patients) {
        PatientRecord pat;
        pat.patient_id = mp.patient_id;
        pat.true_label = mp.label;
        pat.flexibility_ratio = mp.flexibility_ratio;
        pat.deformity_class = mp.deformity_class;
        for (const auto& mv : mp.visits) {
            Visit visit;
            visit.time_months = mv.time_months;
            visit.true_main_cobb_deg = mv.true_main_cobb_deg;
            visit.spine = read_spine(dir / mv.path).spine;
            pat.visits.push_back(std::move(visit));
        }
        cohort.patients.push_back(std::move(pat));
    }
    return cohort;
}

void write_manifold(const std::filesystem::path& path, const TrainedManifold& m) {
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["mode"] = mode_name(m.mode);
    json hyper;
    hyper["sigma"] = m.hyper.sigma;
    hyper["omega_w"] = m.hyper.omega_w;
    hyper["omega_b"] = m.hyper.omega_b;
    hyper["latent_dim"] = m.hyper.latent_dim;
    hyper["max_iters"] = m.hyper.max_iters;
    hyper["elbo_rel_tol"] = m.hyper.elbo_rel_tol;
    hyper["like_scale"] = m.hyper.like_scale;
    doc["hyper"] = std::move(hyper);
    doc["standardization"] = {{"mean", to_json(m.feat_mean)}, {"scale", to_json(m.feat_scale)}};
    json graphs;
    graphs["k"] = m.graphs.k;
    graphs["n"] = m.graphs.size();
    json labels = json::array();
    for (auto l : m.graphs.labels) labels.push_back(label_name(l));
    graphs["labels"] = std::move(labels);
    graphs["within_edges"] = edges_to_json(m.graphs.w_within);
    graphs["between_edges"] = edges_to_json(m.graphs.w_between);
    doc["graphs"] = std::move(graphs);
    doc["latent"] = {{"mean", rows_to_json(m.latent_mean)},
                     {"var", rows_to_json(m.latent_var)},
                     {"prior_mean", rows_to_json(m.latent_prior_mean)}};
    json maps;
    maps["rows"] = m.ambient_dim();
    maps["cols"] = m.latent_dim();
    json mean = json::array();
    for (const auto& u : m.map_mean) {
        json flat = json::array();
        for (int r = 0; r < u.rows(); ++r) {
            for (int c = 0; c < u.cols(); ++c) flat.push_back(u(r, c));
        }
        mean.push_back(std::move(flat));
    }
    maps["mean"] = std::move(mean);
    maps["col_var"] = rows_to_json(m.map_var);
    doc["maps"] = std::move(maps);
    json anchors = json::array();
    for (int i = 0; i < m.n(); ++i) {
        const auto& a = m.anchors[static_cast<size_t>(i)];
        json ja;
        ja["values"] = to_json(a.values);
        ja["label"] = label_name(a.label);
        ja["patient_id"] = a.patient_id;
        ja["visit_time_months"] = a.visit_time_months;
        const double flex = m.anchor_flexibility[static_cast<size_t>(i)];
        ja["flexibility_ratio"] = std::isfinite(flex) ? json(flex) : json(nullptr);
        anchors.push_back(std::move(ja));
    }
    doc["anchors"] = std::move(anchors);
    doc["elbo_trace"] = json(m.elbo_trace);
    doc["model"] = {{"beta_shift", m.beta_shift},
                    {"eps_y", m.eps_y},
                    {"prior_eigs", to_json(m.prior_eigs)},
                    {"lik_eigs", to_json(m.lik_eigs)}};
    doc["guards"] = {{"median_knn_radius_ambient", m.median_knn_radius_ambient},
                     {"median_nn_latent", m.median_nn_latent},
                     {"median_nn_latent_within", m.median_nn_latent_within}};
    doc["noise"] = {{"epsilon_scale", m.epsilon_scale},
                    {"self_recon_rms_median", m.self_recon_rms_median}};
    atomic_write_text(path, doc.dump() + "\n");
}

TrainedManifold read_manifold(const std::filesystem::path& path) {
    const json doc = parse_file(path);
    TrainedManifold m;
    try {
        m.mode = parse_mode(doc.at("mode").get<std::string>());
        const auto& hyper = doc.at("hyper");
        m.hyper.sigma = hyper.at("sigma").get<double>();
        m.hyper.omega_w = hyper.at("omega_w").get<double>();
        m.hyper.omega_b = hyper.at("omega_b").get<double>();
        m.hyper.latent_dim = hyper.at("latent_dim").get<int>();
        m.hyper.max_iters = hyper.at("max_iters").get<int>();
        m.hyper.elbo_rel_tol = hyper.at("elbo_rel_tol").get<double>();
        m.hyper.like_scale = hyper.at("like_scale").get<double>();
        m.feat_mean = vec_from_json(doc.at("standardization").at("mean"));
        m.feat_scale = vec_from_json(doc.at("standardization").at("scale"));
        const auto& graphs = doc.at("graphs");
        const int n = graphs.at("n").get<int>();
        m.graphs.k = graphs.at("k").get<int>();
        for (const auto& l : graphs.at("labels")) {
            m.graphs.labels.push_back(parse_label(l.get<std::string>()));
        }
        if (static_cast<int>(m.graphs.labels.size()) != n) {
            throw ValidationError("graph labels length mismatch");
        }
        m.graphs.w_within = edges_from_json(graphs.at("within_edges"), n);
        m.graphs.w_between = edges_from_json(graphs.at("between_edges"), n);
        m.latent_mean = mat_from_json(doc.at("latent").at("mean"));
        m.latent_var = mat_from_json(doc.at("latent").at("var"));
        m.latent_prior_mean = mat_from_json(doc.at("latent").at("prior_mean"));
        const auto& maps = doc.at("maps");
        const int rows = maps.at("rows").get<int>();
        const int cols = maps.at("cols").get<int>();
        for (const auto& flat : maps.at("mean")) {
            if (static_cast<int>(flat.size()) != rows * cols) {
                throw ValidationError("map mean has wrong element count");
            }
            MatX u(rows, cols);
            int idx = 0;
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < cols; ++c) u(r, c) = flat[static_cast<size_t>(idx++)].get<double>();
            }
            m.map_mean.push_back(std::move(u));
        }
        m.map_var = mat_from_json(maps.at("col_var"), cols);
        for (const auto& ja : doc.at("anchors")) {
            FeatureVector fv;
            fv.mode = m.mode;
            fv.values = vec_from_json(ja.at("values"));
            fv.label = parse_label(ja.at("label").get<std::string>());
            fv.patient_id = ja.at("patient_id").get<std::string>();
            fv.visit_time_months = ja.at("visit_time_months").get<double>();
            m.anchors.push_back(std::move(fv));
            m.anchor_flexibility.push_back(ja.at("flexibility_ratio").is_null()
                                               ? std::numeric_limits<double>::quiet_NaN()
                                               : ja.at("flexibility_ratio").get<double>());
        }
        for (const auto& e : doc.at("elbo_trace")) m.elbo_trace.push_back(e.get<double>());
        const auto& model = doc.at("model");
        m.beta_shift = model.at("beta_shift").get<double>();
        m.eps_y = model.at("eps_y").get<double>();
        m.prior_eigs = vec_from_json(model.at("prior_eigs"));
        m.lik_eigs = vec_from_json(model.at("lik_eigs"));
        const auto& guards = doc.at("guards");
        m.median_knn_radius_ambient = guards.at("median_knn_radius_ambient").get<double>();
        m.median_nn_latent = guards.at("median_nn_latent").get<double>();
        m.median_nn_latent_within = guards.at("median_nn_latent_within").get<double>();
        const auto& noise = doc.at("noise");
        m.epsilon_scale = noise.at("epsilon_scale").is_null()
                              ? std::numeric_limits<double>::quiet_NaN()
                              : noise.at("epsilon_scale").get<double>();
        m.self_recon_rms_median = noise.at("self_recon_rms_median").is_null()
                                      ? std::numeric_limits<double>::quiet_NaN()
                                      : noise.at("self_recon_rms_median").get<double>();
    } catch (const json::exception& e) {
        throw ValidationError("invalid manifold file " + path.string() + ": " + e.what());
    }
    m.rebuild_caches();
    return m;
}

void write_projection(const std::filesystem::path& path, const ProjectionResult& projection,
                      const TrainedManifold& manifold) {
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["latent"] = to_json(projection.latent);
    doc["iterations"] = projection.iterations;
    json nbrs = json::array();
    for (size_t c = 0; c < projection.neighbor_ids.size(); ++c) {
        const int id = projection.neighbor_ids[c];
        json jn;
        jn["anchor_index"] = id;
        jn["patient_id"] = manifold.anchors[static_cast<size_t>(id)].patient_id;
        jn["visit_time_months"] = manifold.anchors[static_cast<size_t>(id)].visit_time_months;
        jn["weight"] = projection.weights(static_cast<int>(c));
        nbrs.push_back(std::move(jn));
    }
    doc["neighbors"] = std::move(nbrs);
    atomic_write_text(path, doc.dump(2) + "\n");
}

void write_prediction_report(const std::filesystem::path& path, const ProgressionForecast& forecast,
                             const std::vector<std::string>& spine_paths) {
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["projection"] = {{"latent", to_json(forecast.projection.latent)},
                         {"weights", to_json(forecast.projection.weights)},
                         {"neighbor_ids", json(forecast.projection.neighbor_ids)}};
    doc["curve"] = {{"times", json(forecast.curve.times)},
                    {"nodes", rows_to_json(forecast.curve.nodes)},
                    {"lambda", forecast.curve.lambda},
                    {"mu", forecast.curve.mu}};
    json weights = json::array();
    for (const auto& tr : forecast.bundle.trajectories) {
        weights.push_back(json{{"patient_id", tr.patient_id}, {"weight", tr.weight}});
    }
    doc["bundle_weights"] = std::move(weights);
    doc["space_shift"] = to_json(forecast.shift.v);
    doc["warp"] = {{"c", forecast.warp.c}, {"tau", forecast.warp.tau}, {"t0", forecast.warp.t0}};
    json preds = json::array();
    for (size_t i = 0; i < forecast.predictions.size(); ++i) {
        const auto& p = forecast.predictions[i];
        json jp;
        jp["requested_time_months"] = p.requested_time_months;
        jp["warped_time_months"] = p.warped_time_months;
        jp["clamped"] = p.clamped;
        jp["latent"] = to_json(p.latent_point);
        jp["spine_path"] = i < spine_paths.size() ? spine_paths[i] : "";
        preds.push_back(std::move(jp));
    }
    doc["predictions"] = std::move(preds);
    doc["epsilon_scale"] = forecast.predictions.empty()
                               ? json(nullptr)
                               : json(forecast.predictions.front().epsilon_scale);
    doc["warnings"] = json(forecast.warnings);
    atomic_write_text(path, doc.dump(2) + "\n");
}

void write_evaluation_report(const std::filesystem::path& path, const EvaluationReport& report,
                             const EvaluationConfig& config) {
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["config"] = {{"k_folds", config.k_folds},
                     {"mode", mode_name(config.mode)},
                     {"graph_k", config.graph_k},
                     {"latent_dim", config.hyper.latent_dim},
                     {"omega_w", config.hyper.omega_w},
                     {"omega_b", config.hyper.omega_b},
                     {"seed", config.seed}};
    json cls;
    cls["accuracy_pct"] = report.classification.accuracy_pct;
    cls["sensitivity_pct"] = report.classification.sensitivity_pct;
    cls["specificity_pct"] = report.classification.specificity_pct;
    cls["auc"] = report.classification.auc;
    json folds = json::array();
    for (const auto& f : report.classification.per_fold) {
        folds.push_back(json{{"fold", f.fold}, {"n_cases", f.n_cases}, {"accuracy_pct", f.accuracy_pct}});
    }
    cls["per_fold"] = std::move(folds);
    doc["classification"] = std::move(cls);
    json pred;
    pred["n_cases"] = report.prediction.cases.size();
    pred["cobb_error_mean_deg"] = report.prediction.cobb_error_mean_deg;
    pred["cobb_error_std_deg"] = report.prediction.cobb_error_std_deg;
    pred["cobb_within_5deg_fraction"] = report.prediction.cobb_within_5deg_fraction;
    pred["baseline_rms_median_mm"] = report.prediction.baseline_rms_median_mm;
    pred["landmark_rms_mean_mm"] = report.prediction.landmark_rms_mean_mm;
    pred["self_recon_rms_median_mm"] = report.prediction.self_recon_rms_median_mm;
    json cases = json::array();
    for (const auto& pc : report.prediction.cases) {
        cases.push_back(json{{"patient_id", pc.patient_id},
                             {"target_time_months", pc.target_time_months},
                             {"cobb_error_deg", pc.cobb_error_deg},
                             {"baseline_rms_mm", pc.baseline_rms_mm},
                             {"landmark_rms_mm", pc.landmark_rms_mm},
                             {"clamped", pc.clamped}});
    }
    pred["cases"] = std::move(cases);
    doc["prediction"] = std::move(pred);
    atomic_write_text(path, doc.dump(2) + "\n");
}

void write_roc_csv(const std::filesystem::path& path,
                   const std::vector<std::pair<double, double>>& roc_points) {
    std::ostringstream out;
    out << "fpr,tpr\n";
    char buf[64];
    for (const auto& [fpr, tpr] : roc_points) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", fpr, tpr);
        out << buf;
    }
    atomic_write_text(path, out.str());
}

namespace {

constexpr int kPlotW = 480;
constexpr int kPlotH = 360;
constexpr int kMargin = 48;

double px(double unit) { return kMargin + unit * (kPlotW - 2 * kMargin); }
double py(double unit) { return kPlotH - kMargin - unit * (kPlotH - 2 * kMargin); }

void svg_header(std::ostringstream& out, const std::string& title) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kPlotW << "\" height=\""
        << kPlotH << "\" viewBox=\"0 0 " << kPlotW << " " << kPlotH << "\">\n";
    out << "<rect width=\"" << kPlotW << "\" height=\"" << kPlotH << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << kPlotW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"13\">" << title << "</text>\n";
}

}  // namespace

void write_roc_svg(const std::filesystem::path& path,
                   const std::vector<std::pair<double, double>>& roc_points) {
    std::ostringstream out;
    svg_header(out, "ROC");
    out << "<line x1=\"" << fmt(px(0)) << "\" y1=\"" << fmt(py(0)) << "\" x2=\"" << fmt(px(1))
        << "\" y2=\"" << fmt(py(0)) << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << fmt(px(0)) << "\" y1=\"" << fmt(py(0)) << "\" x2=\"" << fmt(px(0))
        << "\" y2=\"" << fmt(py(1)) << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << fmt(px(0)) << "\" y1=\"" << fmt(py(0)) << "\" x2=\"" << fmt(px(1))
        << "\" y2=\"" << fmt(py(1)) << "\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 3\"/>\n";
    out << "<text x=\"" << fmt(px(0.5)) << "\" y=\"" << kPlotH - 14
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">false positive rate"
        << "</text>\n";
    out << "<text x=\"14\" y=\"" << fmt(py(0.5))
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" transform=\"rotate(-90 14 "
        << fmt(py(0.5)) << ")\">true positive rate</text>\n";
    out << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.6\" points=\"";
    for (const auto& [fpr, tpr] : roc_points) {
        out << fmt(px(fpr)) << "," << fmt(py(tpr)) << " ";
    }
    out << "\"/>\n</svg>\n";
    atomic_write_text(path, out.str());
}

void write_error_bar_svg(const std::filesystem::path& path, const std::string& title,
                         const std::string& unit, const std::vector<ErrorBar>& bars) {
    std::ostringstream out;
    svg_header(out, title);
    double top = 1e-9;
    for (const auto& b : bars) top = std::max(top, b.mean + b.std_dev);
    top *= 1.15;
    const int nb = static_cast<int>(bars.size());
    for (int i = 0; i < nb; ++i) {
        const auto& b = bars[static_cast<size_t>(i)];
        const double cx = px((i + 0.5) / nb);
        const double w = 0.5 * (kPlotW - 2 * kMargin) / nb;
        const double y0 = py(0);
        const double ym = py(b.mean / top);
        out << "<rect x=\"" << fmt(cx - w / 2) << "\" y=\"" << fmt(ym) << "\" width=\"" << fmt(w)
            << "\" height=\"" << fmt(y0 - ym) << "\" fill=\"#5dade2\"/>\n";
        const double yhi = py(std::min(1.0, (b.mean + b.std_dev) / top));
        const double ylo = py(std::max(0.0, (b.mean - b.std_dev) / top));
        out << "<line x1=\"" << fmt(cx) << "\" y1=\"" << fmt(ylo) << "\" x2=\"" << fmt(cx)
            << "\" y2=\"" << fmt(yhi) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << fmt(cx) << "\" y=\"" << kPlotH - 14
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << b.label
            << "</text>\n";
        out << "<text x=\"" << fmt(cx) << "\" y=\"" << fmt(ym - 4)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"9\">"
            << fmt(b.mean) << " " << unit << "</text>\n";
    }
    out << "<line x1=\"" << fmt(px(0)) << "\" y1=\"" << fmt(py(0)) << "\" x2=\"" << fmt(px(1))
        << "\" y2=\"" << fmt(py(0)) << "\" stroke=\"black\"/>\n";
    out << "</svg>\n";
    atomic_write_text(path, out.str());
}

}  // namespace spineprog::io
