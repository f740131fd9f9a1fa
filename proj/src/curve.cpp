#include "spineprog/curve.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace spineprog {

double TrajectoryBundle::t_min() const {
    double t = std::numeric_limits<double>::infinity();
    for (const auto& tr : trajectories) t = std::min(t, tr.times.front());
    return t;
}

double TrajectoryBundle::t_max() const {
    double t = -std::numeric_limits<double>::infinity();
    for (const auto& tr : trajectories) t = std::max(t, tr.times.back());
    return t;
}

int TrajectoryBundle::total_points() const {
    int n = 0;
    for (const auto& tr : trajectories) n += static_cast<int>(tr.times.size());
    return n;
}

TrajectoryBundle build_bundle(const TrainedManifold& m, const VecX& query_latent,
                              const std::vector<std::string>& neighbor_patient_ids,
                              const VecX& kernel_weights) {
    if (query_latent.size() != m.latent_dim()) {
        throw ValidationError("build_bundle: query latent has wrong dimension");
    }
    TrajectoryBundle bundle;
    bundle.query_latent = query_latent;

    std::set<std::string> wanted(neighbor_patient_ids.begin(), neighbor_patient_ids.end());
    std::map<std::string, std::vector<int>> by_patient;
    for (int i = 0; i < m.n(); ++i) {
        const auto& a = m.anchors[static_cast<size_t>(i)];
        if (wanted.count(a.patient_id)) by_patient[a.patient_id].push_back(i);
    }

    // Keep the caller's neighbour order (deduplicated) for determinism.
    std::vector<std::string> ordered;
    for (size_t c = 0; c < neighbor_patient_ids.size(); ++c) {
        const std::string& pid = neighbor_patient_ids[c];
        if (std::find(ordered.begin(), ordered.end(), pid) != ordered.end()) continue;
        ordered.push_back(pid);
        (void)kernel_weights;  // neighbour selection already reflects the kernel
        auto it = by_patient.find(pid);
        if (it == by_patient.end() || it->second.size() < 2) {
            bundle.warnings.push_back("neighbor " + pid +
                                      " has fewer than two embedded visits; excluded");
            continue;
        }
        std::vector<int>& idx = it->second;
        std::sort(idx.begin(), idx.end(), [&](int a, int b) {
            const double ta = m.anchors[static_cast<size_t>(a)].visit_time_months;
            const double tb = m.anchors[static_cast<size_t>(b)].visit_time_months;
            return ta != tb ? ta < tb : a < b;
        });
        if (m.anchors[static_cast<size_t>(idx.front())].visit_time_months != 0.0) {
            bundle.warnings.push_back("neighbor " + pid + " has no baseline visit; excluded");
            continue;
        }
        TrajectoryBundle::Trajectory tr;
        tr.patient_id = pid;
        tr.baseline_latent = m.latent_mean.row(idx.front()).transpose();
        const VecX shift = tr.baseline_latent - query_latent;
        tr.times.reserve(idx.size());
        tr.points.resize(static_cast<int>(idx.size()), m.latent_dim());
        for (size_t v = 0; v < idx.size(); ++v) {
            tr.times.push_back(m.anchors[static_cast<size_t>(idx[v])].visit_time_months);
            tr.points.row(static_cast<int>(v)) =
                m.latent_mean.row(idx[v]) - shift.transpose();
        }
        for (size_t v = 1; v < tr.times.size(); ++v) {
            if (!(tr.times[v] > tr.times[v - 1])) {
                throw ValidationError("build_bundle: visit times of " + pid +
                                      " are not strictly increasing");
            }
        }
        bundle.trajectories.push_back(std::move(tr));
    }
    if (bundle.trajectories.empty()) {
        throw ValidationError("build_bundle: every neighbor was excluded");
    }

    // Gaussian kernel of baseline latent distance, bandwidth spanning the set.
    double bw = 1e-12;
    for (const auto& tr : bundle.trajectories) {
        bw = std::max(bw, (tr.baseline_latent - query_latent).norm());
    }
    double wsum = 0.0;
    for (auto& tr : bundle.trajectories) {
        const double r = (tr.baseline_latent - query_latent).norm() / bw;
        tr.weight = std::exp(-0.5 * r * r);
        wsum += tr.weight;
    }
    for (auto& tr : bundle.trajectories) tr.weight /= wsum;
    return bundle;
}

void DiscreteCurve::validate() const {
    const int kd = num_nodes();
    if (kd < 3) throw ValidationError("discrete curve needs at least 3 nodes");
    if (static_cast<int>(times.size()) != kd) {
        throw ValidationError("discrete curve times/nodes length mismatch");
    }
    const double step = times[1] - times[0];
    if (!(step > 0)) throw ValidationError("discrete curve times must be increasing");
    for (int i = 1; i < kd; ++i) {
        if (std::abs(times[static_cast<size_t>(i)] - times[static_cast<size_t>(i - 1)] - step) > 1e-12 * std::max(1.0, std::abs(step))) {
            throw ValidationError("discrete curve times must be uniform");
        }
    }
    if (alpha.size() != kd - 1) throw ValidationError("alpha must have K_d - 1 entries");
    if (beta.size() != kd - 2) throw ValidationError("beta must have K_d - 2 entries");
}

namespace {

// Bracketing segment and interpolation fraction for t in [t_1, t_N].
void locate(const DiscreteCurve& curve, double t, int& seg, double& frac) {
    const double t0 = curve.times.front();
    const double tn = curve.times.back();
    if (t < t0 || t > tn) {
        throw ValidationError("curve evaluation at t = " + std::to_string(t) +
                              " outside domain [" + std::to_string(t0) + ", " +
                              std::to_string(tn) + "]");
    }
    if (t >= tn) {
        seg = curve.num_nodes() - 2;
        frac = 1.0;
        return;
    }
    const double u = (t - t0) / curve.dt();
    seg = std::min(static_cast<int>(std::floor(u)), curve.num_nodes() - 2);
    frac = u - seg;
}

}  // namespace

VecX evaluate_curve(const DiscreteCurve& curve, double t) {
    int seg;
    double frac;
    locate(curve, t, seg, frac);
    return (1.0 - frac) * curve.nodes.row(seg).transpose() +
           frac * curve.nodes.row(seg + 1).transpose();
}

VecX curve_velocity(const DiscreteCurve& curve, double t) {
    int seg;
    double frac;
    locate(curve, t, seg, frac);
    return (curve.nodes.row(seg + 1) - curve.nodes.row(seg)).transpose() / curve.dt();
}

double energy(const DiscreteCurve& curve, const TrajectoryBundle& bundle) {
    curve.validate();
    const double dt = curve.dt();
    double e = 0.0;
    for (const auto& tr : bundle.trajectories) {
        for (size_t v = 0; v < tr.times.size(); ++v) {
            const VecX g = evaluate_curve(curve, tr.times[v]);
            e += 0.5 * tr.weight * (g - tr.points.row(static_cast<int>(v)).transpose()).squaredNorm();
        }
    }
    for (int i = 0; i + 1 < curve.num_nodes(); ++i) {
        const double vnorm2 = (curve.nodes.row(i + 1) - curve.nodes.row(i)).squaredNorm() / (dt * dt);
        e += 0.5 * curve.lambda * curve.alpha(i) * vnorm2;
    }
    for (int i = 1; i + 1 < curve.num_nodes(); ++i) {
        const double anorm2 =
            (curve.nodes.row(i + 1) - 2.0 * curve.nodes.row(i) + curve.nodes.row(i - 1)).squaredNorm() /
            (dt * dt * dt * dt);
        e += 0.5 * curve.mu * curve.beta(i - 1) * anorm2;
    }
    return e;
}

MatX energy_gradient(const DiscreteCurve& curve, const TrajectoryBundle& bundle) {
    curve.validate();
    const double dt = curve.dt();
    MatX grad = MatX::Zero(curve.num_nodes(), curve.dim());
    for (const auto& tr : bundle.trajectories) {
        for (size_t v = 0; v < tr.times.size(); ++v) {
            int seg;
            double frac;
            locate(curve, tr.times[v], seg, frac);
            const VecX g = (1.0 - frac) * curve.nodes.row(seg).transpose() +
                           frac * curve.nodes.row(seg + 1).transpose();
            const VecX r = tr.weight * (g - tr.points.row(static_cast<int>(v)).transpose());
            grad.row(seg) += (1.0 - frac) * r.transpose();
            grad.row(seg + 1) += frac * r.transpose();
        }
    }
    for (int i = 0; i + 1 < curve.num_nodes(); ++i) {
        const VecX vi = (curve.nodes.row(i + 1) - curve.nodes.row(i)).transpose() / dt;
        const VecX gterm = curve.lambda * curve.alpha(i) * vi / dt;
        grad.row(i + 1) += gterm.transpose();
        grad.row(i) -= gterm.transpose();
    }
    for (int i = 1; i + 1 < curve.num_nodes(); ++i) {
        const VecX ai = (curve.nodes.row(i + 1) - 2.0 * curve.nodes.row(i) + curve.nodes.row(i - 1))
                            .transpose() /
                        (dt * dt);
        const VecX gterm = curve.mu * curve.beta(i - 1) * ai / (dt * dt);
        grad.row(i + 1) += gterm.transpose();
        grad.row(i) -= 2.0 * gterm.transpose();
        grad.row(i - 1) += gterm.transpose();
    }
    return grad;
}

DiscreteCurve fit_curve(const TrajectoryBundle& bundle, const FitCurveOptions& options) {
    if (bundle.trajectories.empty()) throw ValidationError("fit_curve: empty bundle");
    if (options.num_nodes < 3) throw ValidationError("fit_curve: need at least 3 nodes");

    const int kd = options.num_nodes;
    const int d = static_cast<int>(bundle.query_latent.size());

    DiscreteCurve curve;
    curve.lambda = options.lambda;
    curve.mu = options.mu;
    curve.alpha = options.alpha.size() == kd - 1 ? options.alpha : VecX::Ones(kd - 1);
    curve.beta = options.beta.size() == kd - 2 ? options.beta : VecX::Ones(kd - 2);

    const double t0 = bundle.t_min();
    double t1 = bundle.t_max();
    if (!(t1 > t0)) t1 = t0 + 1.0;
    curve.times.resize(static_cast<size_t>(kd));
    for (int i = 0; i < kd; ++i) {
        curve.times[static_cast<size_t>(i)] = t0 + (t1 - t0) * i / (kd - 1);
    }

    // Initialization: weighted mean of the data nearest each node, with
    // linear interpolation across empty bins and flat extension at the ends.
    curve.nodes = MatX::Zero(kd, d);
    {
        MatX acc = MatX::Zero(kd, d);
        VecX wacc = VecX::Zero(kd);
        const double dt = curve.dt();
        for (const auto& tr : bundle.trajectories) {
            for (size_t v = 0; v < tr.times.size(); ++v) {
                int bin = static_cast<int>(std::lround((tr.times[v] - t0) / dt));
                bin = std::clamp(bin, 0, kd - 1);
                acc.row(bin) += tr.weight * tr.points.row(static_cast<int>(v));
                wacc(bin) += tr.weight;
            }
        }
        int prev = -1;
        for (int i = 0; i < kd; ++i) {
            if (wacc(i) <= 0.0) continue;
            acc.row(i) /= wacc(i);
            if (prev < 0) {
                for (int j = 0; j < i; ++j) acc.row(j) = acc.row(i);
            } else {
                for (int j = prev + 1; j < i; ++j) {
                    const double f = static_cast<double>(j - prev) / (i - prev);
                    acc.row(j) = (1.0 - f) * acc.row(prev) + f * acc.row(i);
                }
            }
            prev = i;
        }
        if (prev < 0) throw ValidationError("fit_curve: bundle carries no data points");
        for (int j = prev + 1; j < kd; ++j) acc.row(j) = acc.row(prev);
        curve.nodes = acc;
    }

    double e = energy(curve, bundle);
    MatX grad = energy_gradient(curve, bundle);
    MatX dir = -grad;
    double alpha_prev = 1.0;
    const int restart_every = kd * d;
    int since_restart = 0;

    for (int it = 0; it < options.max_iters; ++it) {
        const double gnorm = grad.norm();
        if (!(std::isfinite(e) && std::isfinite(gnorm))) {
            throw NumericalError("fit_curve: non-finite energy or gradient");
        }
        if (gnorm < options.grad_tol_rel * (1.0 + e)) break;

        double slope = (grad.array() * dir.array()).sum();
        if (slope >= 0.0 || since_restart >= restart_every) {
            dir = -grad;
            slope = -grad.squaredNorm();
            since_restart = 0;
        }

        // Armijo backtracking, c = 1e-4, shrink 0.5.
        double step = std::min(1.0, 4.0 * alpha_prev);
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            DiscreteCurve trial = curve;
            trial.nodes = curve.nodes + step * dir;
            const double et = energy(trial, bundle);
            if (et <= e + 1e-4 * step * slope) {
                curve = std::move(trial);
                e = et;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if ((dir + grad).norm() == 0.0) break;  // steepest descent already stalled
            dir = -grad;
            since_restart = 0;
            continue;
        }
        alpha_prev = step;

        const MatX grad_new = energy_gradient(curve, bundle);
        const double denom = grad.squaredNorm();
        double beta_pr = denom > 0 ? ((grad_new.array() * (grad_new - grad).array()).sum() / denom)
                                   : 0.0;
        beta_pr = std::max(0.0, beta_pr);
        dir = -grad_new + beta_pr * dir;
        grad = grad_new;
        ++since_restart;
    }
    return curve;
}

}  // namespace spineprog
