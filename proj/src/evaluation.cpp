#include "spineprog/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace spineprog {

EvaluationReport kfold_evaluate(const Cohort& cohort, const EvaluationConfig& config) {
    const int n_patients = static_cast<int>(cohort.patients.size());
    if (config.k_folds < 2) throw ValidationError("kfold_evaluate: need at least 2 folds");
    int count_p = 0, count_np = 0;
    for (const auto& pat : cohort.patients) {
        (pat.true_label == ClassLabel::P ? count_p : count_np) += 1;
    }
    if (count_p < config.k_folds || count_np < config.k_folds) {
        throw ValidationError("kfold_evaluate: need at least k_folds patients per class (P: " +
                              std::to_string(count_p) + ", NP: " + std::to_string(count_np) + ")");
    }

    // Seeded patient-level partition, balanced per class by round-robin over
    // a shuffled order.
    EvaluationReport report;
    report.fold_of_patient.assign(static_cast<size_t>(n_patients), 0);
    {
        std::vector<int> order(static_cast<size_t>(n_patients));
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(config.seed);
        std::shuffle(order.begin(), order.end(), rng);
        int next_p = 0, next_np = 0;
        for (int idx : order) {
            const bool prog = cohort.patients[static_cast<size_t>(idx)].true_label == ClassLabel::P;
            int& counter = prog ? next_p : next_np;
            report.fold_of_patient[static_cast<size_t>(idx)] = counter % config.k_folds;
            ++counter;
        }
    }

    std::vector<ClassLabel> truths;
    std::vector<double> scores;
    PredictionSummary& psum = report.prediction;
    std::vector<double> self_recon_medians;

    for (int fold = 0; fold < config.k_folds; ++fold) {
        std::vector<FeatureVector> train_features;
        std::vector<double> train_flex;
        std::vector<int> held_out;
        for (int pi = 0; pi < n_patients; ++pi) {
            const auto& pat = cohort.patients[static_cast<size_t>(pi)];
            if (report.fold_of_patient[static_cast<size_t>(pi)] == fold) {
                held_out.push_back(pi);
                continue;
            }
            for (const auto& visit : pat.visits) {
                train_features.push_back(to_feature_vector(visit.spine, config.mode, pat.true_label,
                                                           pat.patient_id, visit.time_months));
                train_flex.push_back(pat.flexibility_ratio);
            }
        }

        const MatX dist = pairwise_distances(train_features);
        const SimilarityGraphs graphs =
            build_graphs_from_distances(dist, [&] {
                std::vector<ClassLabel> labels;
                for (const auto& f : train_features) labels.push_back(f.label);
                return labels;
            }(), config.graph_k);
        TrainedManifold manifold = fit(train_features, config.hyper, graphs, &dist);
        manifold.anchor_flexibility = train_flex;
        finalize_reconstruction_stats(manifold);
        self_recon_medians.push_back(manifold.self_recon_rms_median);

        int fold_correct = 0, fold_cases = 0;
        for (int pi : held_out) {
            const auto& pat = cohort.patients[static_cast<size_t>(pi)];
            const FeatureVector baseline = to_feature_vector(
                pat.visits.front().spine, config.mode, ClassLabel::Unknown, pat.patient_id, 0.0);
            const EmbedResult emb = embed_out_of_sample(manifold, baseline);
            const Classification cls = classify(manifold, emb.latent);
            truths.push_back(pat.true_label);
            scores.push_back(cls.score);
            ++fold_cases;
            if (cls.label == pat.true_label) ++fold_correct;

            if (!config.evaluate_prediction || pat.true_label != ClassLabel::P) continue;
            // Latest follow-up past the eligibility cut serves as the target.
            int target = -1;
            for (int v = static_cast<int>(pat.visits.size()) - 1; v >= 1; --v) {
                if (pat.visits[static_cast<size_t>(v)].time_months >= config.prediction_bin_lo_months) {
                    target = v;
                    break;
                }
            }
            if (target < 0) continue;
            const auto& tv = pat.visits[static_cast<size_t>(target)];
            ProgressionOptions popt;
            popt.curve = config.curve;
            ProgressionForecast fc;
            try {
                fc = predict_progression(manifold, baseline, pat.flexibility_ratio,
                                         {0.0, tv.time_months}, popt);
            } catch (const std::runtime_error&) {
                continue;  // forecast unavailable for this case; classification already scored
            }
            PredictionCase pc;
            pc.patient_id = pat.patient_id;
            pc.target_time_months = tv.time_months;
            pc.clamped = fc.predictions.back().clamped;
            pc.cobb_error_deg =
                std::abs(clinical_parameters(fc.predictions.back().spine).main_cobb_deg() -
                         clinical_parameters(tv.spine).main_cobb_deg());
            pc.baseline_rms_mm =
                pose_errors(fc.predictions.front().spine, pat.visits.front().spine).landmark_rms_mm;
            pc.landmark_rms_mm = pose_errors(fc.predictions.back().spine, tv.spine).landmark_rms_mm;
            psum.cases.push_back(std::move(pc));
        }
        FoldResult fr;
        fr.fold = fold;
        fr.n_cases = fold_cases;
        fr.accuracy_pct = fold_cases > 0 ? 100.0 * fold_correct / fold_cases : 0.0;
        report.classification.per_fold.push_back(fr);
    }

    const auto per_fold = report.classification.per_fold;
    report.classification = score_classification(truths, scores);
    report.classification.per_fold = per_fold;

    if (!psum.cases.empty()) {
        double sum = 0.0, sq = 0.0, within = 0.0, rms_sum = 0.0;
        std::vector<double> base_rms;
        for (const auto& pc : psum.cases) {
            sum += pc.cobb_error_deg;
            sq += pc.cobb_error_deg * pc.cobb_error_deg;
            if (pc.cobb_error_deg <= 5.0) within += 1.0;
            rms_sum += pc.landmark_rms_mm;
            base_rms.push_back(pc.baseline_rms_mm);
        }
        const double n = static_cast<double>(psum.cases.size());
        psum.cobb_error_mean_deg = sum / n;
        psum.cobb_error_std_deg = std::sqrt(std::max(0.0, sq / n - psum.cobb_error_mean_deg *
                                                                       psum.cobb_error_mean_deg));
        psum.cobb_within_5deg_fraction = within / n;
        psum.landmark_rms_mean_mm = rms_sum / n;
        std::nth_element(base_rms.begin(), base_rms.begin() + static_cast<long>(base_rms.size()) / 2,
                         base_rms.end());
        psum.baseline_rms_median_mm = base_rms[base_rms.size() / 2];
    }
    if (!self_recon_medians.empty()) {
        std::nth_element(self_recon_medians.begin(),
                         self_recon_medians.begin() + static_cast<long>(self_recon_medians.size()) / 2,
                         self_recon_medians.end());
        psum.self_recon_rms_median_mm = self_recon_medians[self_recon_medians.size() / 2];
    }
    return report;
}

}  // namespace spineprog
