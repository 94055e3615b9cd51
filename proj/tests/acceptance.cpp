// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <tmf/filter.hpp>
#include <tmf/harness.hpp>
#include <tmf/network.hpp>
#include <tmf/transport.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"

namespace {

namespace fs = std::filesystem;
namespace tt = tmf::testing;
using tmf::Matrix;
using tmf::Vector;

struct Outcome {
    bool pass = false;
    std::string detail;
};

tmf::ScenarioConfig bundled(const std::string& name) { return tmf::load_scenario(fs::path(TMF_SCENARIO_DIR) / name); }

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// 1. Gradient solver reproduces the closed-form Gaussian map.
Outcome affine_oracle() {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> dim(2, 10);
    tmf::SolverOptions gradient;
    gradient.method = tmf::SolverMethod::gradient;
    gradient.tolerance = 1e-5;
    gradient.max_iters = 10000;
    double worst = 0.0;
    for (int set = 0; set < 50; ++set) {
        const int n = dim(rng);
        const Vector mean = tt::standard_normal(rng, n) * 3.0;
        const tmf::SampleMatrix samples(tt::gaussian_samples(rng, mean, tt::random_spd(rng, n), 500));
        const auto reference = tmf::closed_form_gaussian_map(samples);
        const auto estimated = tmf::estimate_map(samples, 0, gradient, tmf::EstimatedBlocks::all);
        for (int k = 1; k <= n; ++k) {
            const Vector diff = estimated.component(k).coefficients() - reference.component(k).coefficients();
            worst = std::max(worst, diff.cwiseAbs().maxCoeff());
        }
    }
    return {worst <= 1e-4, "max |coef diff| = " + fmt(worst) + " over 50 sets (limit 1e-4)"};
}

// 2. Analytic component gradient against central differences.
Outcome gradient_check() {
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> dim(1, 8);
    std::uniform_int_distribution<int> count(20, 300);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int k = dim(rng);
        const int m = count(rng);
        const tmf::SampleMatrix samples(
            tt::gaussian_samples(rng, tt::standard_normal(rng, k), tt::random_spd(rng, k), m));
        Vector c = tt::standard_normal(rng, k + 1);
        c[k] = 0.5 + std::abs(c[k]);
        const auto comp = tmf::MapComponent::from_coefficients(c);
        const Vector analytic = tmf::component_gradient(comp, samples);
        const Vector numeric = tt::central_difference(
            [&](const Vector& u) {
                return tmf::component_objective(tmf::MapComponent::from_coefficients(u), samples);
            },
            c, 1e-5);
        worst = std::max(worst, (analytic - numeric).norm() / numeric.norm());
    }
    return {worst <= 1e-6, "max relative error = " + fmt(worst) + " over 100 trials (limit 1e-6)"};
}

// 3. Full-space update equals the Kalman posterior on a linear-Gaussian toy.
// Each seed gives an estimate of the posterior mean and covariance; the
// 20-seed average is compared with the analytic posterior in units of its
// Monte Carlo standard error. For the mean, the per-seed variance is
// P_post (1 + d^2 / v) / M: the ensemble estimate carries the sampling error
// of the regression gain, scaled by the innovation d = y* - H m with
// innovation variance v = H P H^T + R.
Outcome kalman_equivalence() {
    const Vector m = (Vector(2) << 1.0, -1.0).finished();
    const Matrix p = (Matrix(2, 2) << 2.0, 0.8, 0.8, 1.0).finished();
    const double r = 0.5;
    const Vector y_star = (Vector(1) << 2.0).finished();
    const int count = 10000;
    const int seeds = 20;
    const std::vector<tmf::ObservationSpec> specs{{tmf::ObservationKind::direct, {0}, r}};
    const std::vector<int> nbs{0};
    tmf::AssimilationOptions opts;
    opts.pca_enabled = false;

    const double v = p(0, 0) + r * r;
    const double d = y_star[0] - m[0];
    const Vector k = p.col(0) / v;
    const Vector mean_ref = m + k * d;
    const Matrix cov_ref = p - k * p.row(0);
    // Order: mean_0, mean_1, var_0, var_1, cov_01.
    const double ref[5] = {mean_ref[0], mean_ref[1], cov_ref(0, 0), cov_ref(1, 1), cov_ref(0, 1)};
    const double gain_factor = 1.0 + d * d / v;
    const double se[5] = {std::sqrt(cov_ref(0, 0) * gain_factor / count), std::sqrt(cov_ref(1, 1) * gain_factor / count),
                          cov_ref(0, 0) * std::sqrt(2.0 / count), cov_ref(1, 1) * std::sqrt(2.0 / count),
                          std::sqrt((cov_ref(0, 0) * cov_ref(1, 1) + cov_ref(0, 1) * cov_ref(0, 1)) / count)};

    double sum[5] = {0, 0, 0, 0, 0};
    double worst_seed_z = 0.0;
    for (int seed = 0; seed < seeds; ++seed) {
        std::mt19937_64 rng(static_cast<std::uint64_t>(3000 + seed));
        tmf::ParticleEnsemble prior;
        prior.particles = tt::gaussian_samples(rng, m, p, count);
        const auto post = tmf::pca_map_update(prior, prior, 0, specs, nbs, y_star, opts,
                                              {static_cast<std::uint64_t>(seed), 1, 0.1, 1});
        const Vector mean = post.mean();
        const Matrix centered = post.particles.rowwise() - mean.transpose();
        const Matrix cov = centered.transpose() * centered / count;
        const double est[5] = {mean[0], mean[1], cov(0, 0), cov(1, 1), cov(0, 1)};
        for (int j = 0; j < 5; ++j) {
            sum[j] += est[j];
            worst_seed_z = std::max(worst_seed_z, std::abs(est[j] - ref[j]) / se[j]);
        }
    }
    double worst_z = 0.0;
    for (int j = 0; j < 5; ++j) {
        worst_z = std::max(worst_z, std::abs(sum[j] / seeds - ref[j]) / (se[j] / std::sqrt(double(seeds))));
    }
    return {worst_z <= 3.0, "20-seed estimate within " + fmt(worst_z) +
                                " SE of the Kalman mean/covariance (limit 3); largest single-seed deviation " +
                                fmt(worst_seed_z) + " per-seed SE"};
}

// 4. Consensus drives agent means together and matches the transition oracle.
Outcome consensus_convergence() {
    const std::vector<std::pair<std::string, tmf::Topology>> topologies{
        {"table2", bundled("table2.json").topology()}, {"table3", bundled("table3.json").topology()}};
    std::mt19937_64 rng(404);
    std::string detail;
    bool ok = true;
    for (const auto& [name, topo] : topologies) {
        const int agents = topo.size();
        Matrix adjacency = Matrix::Zero(agents, agents);
        for (int l = 0; l < agents; ++l) {
            for (int j = 0; j < agents; ++j) {
                adjacency(l, j) = topo.edge(l, j) ? 1.0 : 0.0;
            }
        }
        const Matrix transition = tt::mean_transition_matrix(adjacency, 0.1);
        std::vector<tmf::ParticleEnsemble> es(static_cast<std::size_t>(agents));
        for (int l = 0; l < agents; ++l) {
            es[l].agent = l;
            es[l].particles = tt::gaussian_samples(rng, tt::standard_normal(rng, 6) * 20.0, Matrix::Identity(6, 6), 50);
        }
        auto means = [&] {
            Matrix out(agents, 6);
            for (int l = 0; l < agents; ++l) {
                out.row(l) = es[l].mean().transpose();
            }
            return out;
        };
        auto spread = [&](const Matrix& mm) {
            double best = 0.0;
            for (int a = 0; a < agents; ++a) {
                for (int b = a + 1; b < agents; ++b) {
                    best = std::max(best, (mm.row(a) - mm.row(b)).norm());
                }
            }
            return best;
        };
        double oracle_gap = 0.0;
        int iterations = 0;
        Matrix current = means();
        while (spread(current) >= 1e-8 && iterations < 10000) {
            const Matrix predicted = transition * current;
            es = tmf::consensus_step(es, topo, {.gamma = 0.1});
            current = means();
            oracle_gap = std::max(oracle_gap, (current - predicted).cwiseAbs().maxCoeff());
            ++iterations;
        }
        const bool converged = spread(current) < 1e-8;
        ok = ok && converged && oracle_gap <= 1e-10;
        detail += name + ": " + (converged ? "converged in " + std::to_string(iterations) : "not converged") +
                  " iterations, oracle gap " + fmt(oracle_gap) + "; ";
    }
    return {ok, detail};
}

// 5. RK4 convergence order on the CW system.
// The global RK4 error scales with |A^5 x|, which for alpha = 0.1 is about
// 1e-4 |x| at best. At dt = 0.005 that is a few ulps of the state, so the
// initial state is the unit vector maximising |A^5 x| (top right singular
// vector of A^5); any other state sits closer to the rounding floor. The
// order for the scenario's x0 is reported alongside.
double observed_order(const Vector& x0) {
    tmf::DynamicsParams params;
    params.alpha = 0.1;
    const Vector exact = tt::matrix_exponential(tmf::cw_matrix(0.1), 1.0) * x0;
    const std::vector<double> steps{0.04, 0.02, 0.01, 0.005};
    std::vector<double> log_dt;
    std::vector<double> log_err;
    for (double dt : steps) {
        Vector x = x0;
        const int n = static_cast<int>(std::lround(1.0 / dt));
        for (int i = 0; i < n; ++i) {
            x = tmf::rk4_step([&](const Vector& v) { return tmf::full_drift(v, params); }, x, dt, i * dt);
        }
        log_dt.push_back(std::log(dt));
        log_err.push_back(std::log((x - exact).norm()));
    }
    const double mx = std::accumulate(log_dt.begin(), log_dt.end(), 0.0) / 4.0;
    const double my = std::accumulate(log_err.begin(), log_err.end(), 0.0) / 4.0;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        sxy += (log_dt[i] - mx) * (log_err[i] - my);
        sxx += (log_dt[i] - mx) * (log_dt[i] - mx);
    }
    return sxy / sxx;
}

Outcome integrator_order() {
    const Matrix a = tmf::cw_matrix(0.1);
    const Matrix a5 = a * a * a * a * a;
    const Eigen::JacobiSVD<Matrix> svd(a5, Eigen::ComputeFullV);
    const Vector sensitive = svd.matrixV().col(0);
    const double order = observed_order(sensitive);
    const double scenario_order = observed_order((Vector(6) << 100, 0, 0, 10, 0.1, 0).finished());
    return {std::abs(order - 4.0) <= 0.2, "observed order " + fmt(order) +
                                              " (target 4.0 +- 0.2); scenario x0 gives " + fmt(scenario_order) +
                                              " because dt=0.005 reaches the rounding floor"};
}

struct RunSummary {
    tmf::MetricsLog log;
    double max_mse = 0.0;
    double worst_quat = 0.0;
};

RunSummary run(tmf::ScenarioConfig s, std::uint64_t seed, bool pca, unsigned threads = 1) {
    s.seed = seed;
    s.pca.enabled = pca;
    RunSummary out;
    tmf::run_filter(s, tmf::simulate_truth(s), out.log, threads, [&](const tmf::FilterState& st) {
        for (const auto& e : st.ensembles) {
            if (e.dim() == tmf::kFullDim) {
                for (tmf::Index i = 0; i < e.size(); ++i) {
                    out.worst_quat = std::max(out.worst_quat, std::abs(e.particles.row(i).segment(9, 4).norm() - 1.0));
                }
            }
        }
    });
    for (const auto& row : out.log.rows) {
        out.max_mse = std::max(out.max_mse, std::isfinite(row.mse) ? row.mse : HUGE_VAL);
    }
    return out;
}

// 6. Table 2 runs: assimilation reduces the error with PCA; the full-space
// variant shows an instability for some seed.
Outcome fig1_reproduction() {
    const auto s = bundled("table2.json");
    const int agents = s.agent_count();
    int improving = 0;
    double pca_max = 0.0;
    bool bounded = true;
    bool unstable = false;
    double largest_ratio = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const RunSummary with = run(s, seed, true);
        bool all_agents = true;
        for (int l = 0; l < agents; ++l) {
            double late = 0.0;
            int n_late = 0;
            for (const auto& row : with.log.rows) {
                if (row.agent == l && row.time >= 15.0 - 1e-9) {
                    late += row.mse;
                    ++n_late;
                }
            }
            all_agents = all_agents && late / n_late < with.log.at(0, l).mse;
        }
        improving += all_agents ? 1 : 0;
        bounded = bounded && with.max_mse <= 1e6;
        pca_max = std::max(pca_max, with.max_mse);

        double without_max = 0.0;
        try {
            without_max = run(s, seed, false).max_mse;
        } catch (const tmf::Error&) {
            without_max = HUGE_VAL;
        }
        largest_ratio = std::max(largest_ratio, without_max / with.max_mse);
        unstable = unstable || without_max > 10.0 * with.max_mse;
    }
    const bool ok = improving >= 8 && bounded && unstable;
    return {ok, "with PCA: " + std::to_string(improving) + "/10 seeds improve, max MSE " + fmt(pca_max) +
                    (bounded ? " (<= 1e6)" : " (exceeds 1e6)") + "; without PCA: largest max-MSE ratio " +
                    fmt(largest_ratio) + " (need > 10 for some seed)"};
}

// 7. Table 3 runs: completion, unit quaternions, agents agree more at the end.
Outcome fig2_reproduction() {
    const auto s = bundled("table3.json");
    int agreeing = 0;
    bool finite = true;
    bool completed = true;
    double worst_quat = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        RunSummary r;
        try {
            r = run(s, seed, true);
        } catch (const tmf::Error&) {
            completed = false;
            continue;
        }
        completed = completed && static_cast<int>(r.log.rows.size()) == 201 * s.agent_count();
        worst_quat = std::max(worst_quat, r.worst_quat);
        auto spread = [&](int step) {
            double lo = HUGE_VAL;
            double hi = -HUGE_VAL;
            for (int l = 0; l < s.agent_count(); ++l) {
                const double v = r.log.at(step, l).mse;
                finite = finite && std::isfinite(v);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            return hi - lo;
        };
        for (const auto& row : r.log.rows) {
            finite = finite && std::isfinite(row.mse);
        }
        agreeing += spread(200) < spread(20) ? 1 : 0;
    }
    const bool ok = completed && finite && worst_quat <= 1e-9 && agreeing >= 7;
    return {ok, std::string(completed ? "all runs completed" : "a run failed") + ", " +
                    (finite ? "finite MSE" : "non-finite MSE") + ", max |‖q‖-1| " + fmt(worst_quat) + ", spread shrinks " +
                    std::to_string(agreeing) + "/10 seeds (need >= 7)"};
}

// 8. Byte-identical metrics.csv across repeated runs and thread counts.
Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "tmf_acceptance_determinism";
    fs::remove_all(root);
    bool ok = true;
    std::string detail;
    for (const char* name : {"table2.json", "table3.json"}) {
        const auto s = bundled(name);
        std::vector<std::string> outputs;
        for (unsigned threads : {1u, 1u, 4u}) {
            const fs::path dir = root / (std::string(name) + "_" + std::to_string(outputs.size()));
            (void)tmf::run_scenario(s, dir, threads, {.write_plot = false});
            std::ifstream in(dir / "metrics.csv", std::ios::binary);
            std::ostringstream buf;
            buf << in.rdbuf();
            outputs.push_back(buf.str());
        }
        const bool same = outputs[0] == outputs[1] && outputs[0] == outputs[2] && !outputs[0].empty();
        ok = ok && same;
        detail += std::string(name) + (same ? " identical" : " differs") + "; ";
    }
    fs::remove_all(root);
    return {ok, detail + "threads 1, 1, 4"};
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Outcome()> check;
    };
    const std::vector<Criterion> criteria{
        {1, "affine map oracle equivalence", 30, affine_oracle},
        {2, "gradient correctness", 5, gradient_check},
        {3, "Kalman equivalence", 60, kalman_equivalence},
        {4, "consensus convergence", 10, consensus_convergence},
        {5, "integrator order", 5, integrator_order},
        {6, "table2 qualitative reproduction", 600, fig1_reproduction},
        {7, "table3 qualitative reproduction", 900, fig2_reproduction},
        {8, "determinism", 300, determinism},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = seconds <= c.budget_s;
        const bool pass = o.pass && in_time;
        failures += pass ? 0 : 1;
        std::printf("%s criterion %d (%s): %s [%.1fs, budget %.0fs%s]\n", pass ? "PASS" : "FAIL", c.id, c.name,
                    o.detail.c_str(), seconds, c.budget_s, in_time ? "" : ", over budget");
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
