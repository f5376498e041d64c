#pragma once

#include "tenkit/cp.hpp"
#include "tenkit/ffcp.hpp"
#include "tenkit/random.hpp"
#include "tenkit/range_finder.hpp"
#include "tenkit/tensor.hpp"
#include "tenkit/tucker.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace tenkit {

// ---------------------------------------------------------------------------
// Synthetic data generation
// ---------------------------------------------------------------------------

enum class GeneratorKind { cp_gaussian, cp_exponential_sparse, tucker_gaussian };

struct CpGroundTruth {
    DenseTensor tensor;  // noise-free Y*
    CpModel model;
};

struct TuckerGroundTruth {
    DenseTensor tensor;
    TuckerModel model;
};

namespace detail {

inline SeedSpec gen_factor_seed(const SeedSpec& seed, Index mode) {
    return seed.derived(0x9E4u, static_cast<std::uint64_t>(mode));
}

}  // namespace detail

/// Random CP ground truth. Gaussian factors by default; the exponential
/// variant draws entries from an exponential distribution with mean 10 and
/// zeroes a `zero_frac` fraction of them uniformly at random, giving sparse
/// nonnegative factors.
inline CpGroundTruth gen_cp_tensor(const std::vector<Index>& dims, Index rank,
                                   bool exponential, double zero_frac, const SeedSpec& seed) {
    detail::require(rank >= 1, "gen_cp_tensor: rank must be positive");
    detail::require(zero_frac >= 0.0 && zero_frac < 1.0, "gen_cp_tensor: bad zero fraction");
    CpGroundTruth out;
    out.model.factors.resize(dims.size());
    for (std::size_t n = 0; n < dims.size(); ++n) {
        const SeedSpec fs = detail::gen_factor_seed(seed, static_cast<Index>(n));
        Matrix a(dims[n], rank);
        if (exponential) {
            const SeedSpec zs = fs.derived(0x5Au);
            for (Index j = 0; j < rank; ++j)
                for (Index i = 0; i < dims[n]; ++i) {
                    const std::uint64_t idx = static_cast<std::uint64_t>(j * dims[n] + i);
                    const bool zero = uniform_at(zs, idx) <= zero_frac;
                    a(i, j) = zero ? 0.0 : exponential_at(fs, idx, 10.0);
                }
        } else {
            a = gaussian_matrix(dims[n], rank, fs);
        }
        out.model.factors[n] = std::move(a);
    }
    out.tensor = cp_reconstruct(out.model);
    return out;
}

/// Random Tucker ground truth with Gaussian core and Gaussian factors.
inline TuckerGroundTruth gen_tucker_tensor(const std::vector<Index>& dims,
                                           const std::vector<Index>& mlranks,
                                           const SeedSpec& seed) {
    detail::require(dims.size() == mlranks.size(), "gen_tucker_tensor: rank list mismatch");
    TuckerGroundTruth out;
    out.model.core = gaussian_tensor(mlranks, seed.derived(0xC0DEu));
    out.model.factors.resize(dims.size());
    for (std::size_t n = 0; n < dims.size(); ++n)
        out.model.factors[n] = gaussian_matrix(dims[n], mlranks[n],
                                               detail::gen_factor_seed(seed, static_cast<Index>(n)));
    out.tensor = reconstruct(out.model);
    return out;
}

/// Adds Gaussian noise scaled so the realized draw hits the requested SNR
/// exactly: 10 log10(||Y||^2 / ||sigma E||^2) = snr_db. An infinite SNR
/// returns the tensor unchanged.
inline DenseTensor add_noise(const DenseTensor& y, double snr_db, const SeedSpec& seed) {
    if (std::isinf(snr_db) && snr_db > 0) return y;
    detail::require(std::isfinite(snr_db), "add_noise: SNR must be finite or +inf");
    const double ny = frobenius_norm(y);
    detail::require(ny > 0.0, "add_noise: zero tensor input");
    DenseTensor e = gaussian_tensor(y.shape(), seed.derived(0x7015Eu));
    const double ne = frobenius_norm(e);
    detail::require(ne > 0.0, "add_noise: degenerate noise draw");
    const double sigma = ny / (ne * std::pow(10.0, snr_db / 20.0));
    DenseTensor out = y;
    out.array() += sigma * e.array();
    return out;
}

/// Entrywise max(x, 0).
inline DenseTensor clamp_nonneg(const DenseTensor& t) {
    DenseTensor out = t;
    out.array() = out.array().max(0.0);
    return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline constexpr double kSirCapDb = 300.0;

/// Signal-to-interference ratio in dB between a reference component and its
/// estimate. Both vectors are standardized to zero mean and unit variance and
/// sign-aligned first; the value is 20 log10(||a|| / ||a - a_hat||), so larger
/// is better, capped at 300 dB for exact matches.
inline double sir(const Vector& a, const Vector& a_hat) {
    detail::require(a.size() == a_hat.size(), "sir: length mismatch");
    detail::require(a.size() >= 2, "sir: vectors too short");
    auto standardize = [](const Vector& v) {
        const double mean = v.mean();
        Vector c = v.array() - mean;
        const double sd = c.norm() / std::sqrt(static_cast<double>(v.size()));
        detail::require(sd > 0.0, "sir: zero-variance input");
        return Vector(c / sd);
    };
    Vector an = standardize(a);
    Vector hn = standardize(a_hat);
    if (an.dot(hn) < 0.0) hn = -hn;
    const double den = (an - hn).norm();
    if (den == 0.0) return kSirCapDb;
    return std::min(kSirCapDb, 20.0 * std::log10(an.norm() / den));
}

struct FactorMatch {
    std::vector<Index> permutation;  // truth column r matched to estimate column permutation[r]
    Matrix sir_db;                   // modes x rank
    double mean_sir = 0.0;
    double min_sir = 0.0;
};

/// Resolves the CP permutation/scale ambiguity by greedy maximum-correlation
/// matching with one mode-consistent permutation, then scores each matched
/// column pair per mode with `sir`.
inline FactorMatch match_factors(const CpModel& truth, const CpModel& est) {
    truth.validate();
    est.validate();
    detail::require(truth.order() == est.order(), "match_factors: order mismatch");
    detail::require(truth.rank() == est.rank(), "match_factors: rank mismatch");
    const Index order = truth.order();
    const Index rank = truth.rank();

    auto col_corr = [](const Vector& x, const Vector& y) {
        const Vector xc = x.array() - x.mean();
        const Vector yc = y.array() - y.mean();
        const double n = xc.norm() * yc.norm();
        return n > 0.0 ? std::abs(xc.dot(yc)) / n : 0.0;
    };

    Matrix score = Matrix::Zero(rank, rank);
    for (Index n = 0; n < order; ++n)
        for (Index r = 0; r < rank; ++r)
            for (Index s = 0; s < rank; ++s)
                score(r, s) += col_corr(truth.factors[static_cast<std::size_t>(n)].col(r),
                                        est.factors[static_cast<std::size_t>(n)].col(s));

    FactorMatch match;
    match.permutation.assign(static_cast<std::size_t>(rank), -1);
    std::vector<bool> row_used(static_cast<std::size_t>(rank), false);
    std::vector<bool> col_used(static_cast<std::size_t>(rank), false);
    for (Index pick = 0; pick < rank; ++pick) {
        double best = -1.0;
        Index br = 0, bs = 0;
        for (Index r = 0; r < rank; ++r) {
            if (row_used[static_cast<std::size_t>(r)]) continue;
            for (Index s = 0; s < rank; ++s) {
                if (col_used[static_cast<std::size_t>(s)]) continue;
                if (score(r, s) > best) {
                    best = score(r, s);
                    br = r;
                    bs = s;
                }
            }
        }
        match.permutation[static_cast<std::size_t>(br)] = bs;
        row_used[static_cast<std::size_t>(br)] = true;
        col_used[static_cast<std::size_t>(bs)] = true;
    }

    match.sir_db.resize(order, rank);
    for (Index n = 0; n < order; ++n)
        for (Index r = 0; r < rank; ++r)
            match.sir_db(n, r) =
                sir(truth.factors[static_cast<std::size_t>(n)].col(r),
                    est.factors[static_cast<std::size_t>(n)].col(match.permutation[static_cast<std::size_t>(r)]));
    match.mean_sir = match.sir_db.mean();
    match.min_sir = match.sir_db.minCoeff();
    return match;
}

// ---------------------------------------------------------------------------
// Experiment configuration and runner
// ---------------------------------------------------------------------------

enum class AlgorithmId {
    hosvd,
    randtucker,
    randtucker2i,
    cp_als,
    cp_mu,
    cp_hals,
    ffcp,
    tucker_cp,
};

inline const char* to_string(AlgorithmId id) {
    switch (id) {
        case AlgorithmId::hosvd: return "hosvd";
        case AlgorithmId::randtucker: return "randtucker";
        case AlgorithmId::randtucker2i: return "randtucker2i";
        case AlgorithmId::cp_als: return "cp_als";
        case AlgorithmId::cp_mu: return "cp_mu";
        case AlgorithmId::cp_hals: return "cp_hals";
        case AlgorithmId::ffcp: return "ffcp";
        case AlgorithmId::tucker_cp: return "tucker_cp";
    }
    return "?";
}

inline AlgorithmId parse_algorithm(const std::string& s) {
    if (s == "hosvd") return AlgorithmId::hosvd;
    if (s == "randtucker") return AlgorithmId::randtucker;
    if (s == "randtucker2i") return AlgorithmId::randtucker2i;
    if (s == "cp_als" || s == "cp-als") return AlgorithmId::cp_als;
    if (s == "cp_mu" || s == "cp-mu") return AlgorithmId::cp_mu;
    if (s == "cp_hals" || s == "cp-hals") return AlgorithmId::cp_hals;
    if (s == "ffcp") return AlgorithmId::ffcp;
    if (s == "tucker_cp" || s == "tucker-cp") return AlgorithmId::tucker_cp;
    throw std::invalid_argument("tenkit: unknown algorithm '" + s + "'");
}

inline ConstraintKind parse_constraint(const std::string& s) {
    if (s == "none") return ConstraintKind::none;
    if (s == "nonneg-mu" || s == "nonneg_mu") return ConstraintKind::nonneg_mu;
    if (s == "nonneg-hals" || s == "nonneg_hals") return ConstraintKind::nonneg_hals;
    if (s == "sparse") return ConstraintKind::sparse;
    throw std::invalid_argument("tenkit: unknown constraint '" + s + "'");
}

/// Declarative description of a synthetic experiment.
struct ExperimentConfig {
    GeneratorKind generator = GeneratorKind::cp_gaussian;
    std::vector<Index> dims;
    Index rank = 10;
    std::vector<Index> mlrank;       // defaults to rank per mode when empty
    std::vector<double> snr_db;      // +inf entries mean no noise
    std::vector<AlgorithmId> algorithms;
    ConstraintSpec constraint;
    Index oversample = 10;
    StopRule stop{200, 1e-6};
    int runs = 10;
    std::uint64_t seed = 0;
    double zero_frac = 0.1;          // for cp_exponential_sparse
    int threads = 1;
    std::vector<Index> i_grid;       // optional: cube-size sweep for timing curves
    std::string out;                 // output file prefix; empty = no files

    std::vector<Index> compression_ranks() const {
        if (!mlrank.empty()) return mlrank;
        return std::vector<Index>(dims.size(), rank);
    }
};

/// Parses "key = value" lines; '#' starts a comment.
inline ExperimentConfig parse_experiment_config(std::istream& is) {
    ExperimentConfig cfg;
    cfg.snr_db = {10.0};
    std::string line;
    auto to_indices = [](const std::string& v) {
        std::istringstream ss(v);
        std::vector<Index> out;
        Index x;
        while (ss >> x) out.push_back(x);
        return out;
    };
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        key.erase(std::remove_if(key.begin(), key.end(), ::isspace), key.end());
        std::string value = line.substr(eq + 1);
        std::istringstream vs(value);
        if (key.empty()) continue;
        if (key == "generator") {
            std::string g;
            vs >> g;
            if (g == "cp_gaussian") cfg.generator = GeneratorKind::cp_gaussian;
            else if (g == "cp_exponential_sparse")
                cfg.generator = GeneratorKind::cp_exponential_sparse;
            else if (g == "tucker_gaussian") cfg.generator = GeneratorKind::tucker_gaussian;
            else throw std::invalid_argument("tenkit: unknown generator '" + g + "'");
        } else if (key == "dims") {
            cfg.dims = to_indices(value);
        } else if (key == "rank") {
            vs >> cfg.rank;
        } else if (key == "mlrank") {
            cfg.mlrank = to_indices(value);
        } else if (key == "snr_db" || key == "snr") {
            cfg.snr_db.clear();
            std::string tok;
            while (vs >> tok)
                cfg.snr_db.push_back(tok == "inf" ? std::numeric_limits<double>::infinity()
                                                  : std::stod(tok));
        } else if (key == "algorithms" || key == "algorithm") {
            cfg.algorithms.clear();
            std::string tok;
            while (vs >> tok) cfg.algorithms.push_back(parse_algorithm(tok));
        } else if (key == "constraint") {
            std::string c;
            vs >> c;
            cfg.constraint.kind = parse_constraint(c);
        } else if (key == "sparsity_c") {
            vs >> cfg.constraint.sparsity_c;
        } else if (key == "oversample") {
            vs >> cfg.oversample;
        } else if (key == "max_iters") {
            vs >> cfg.stop.max_iters;
        } else if (key == "fit_tol") {
            vs >> cfg.stop.fit_tol;
        } else if (key == "runs") {
            vs >> cfg.runs;
        } else if (key == "seed") {
            vs >> cfg.seed;
        } else if (key == "zero_frac") {
            vs >> cfg.zero_frac;
        } else if (key == "threads") {
            vs >> cfg.threads;
        } else if (key == "i_grid") {
            cfg.i_grid = to_indices(value);
        } else if (key == "out") {
            vs >> cfg.out;
        } else {
            throw std::invalid_argument("tenkit: unknown config key '" + key + "'");
        }
    }
    detail::require(!cfg.dims.empty() || !cfg.i_grid.empty(),
                    "experiment config: dims or i_grid required");
    detail::require(!cfg.algorithms.empty(), "experiment config: algorithms required");
    detail::require(cfg.runs >= 1, "experiment config: runs must be >= 1");
    return cfg;
}

struct RunRecord {
    AlgorithmId algorithm;
    double snr_db = 0.0;
    Index dim_i = 0;  // leading dimension, for i_grid sweeps
    int run = 0;
    bool failed = false;
    std::string error;
    double fit_gt = 0.0;   // fit against the noise-free ground truth
    double fit_obs = 0.0;  // fit against the observation
    double seconds = 0.0;  // engine wall time, including compression
    double compress_seconds = 0.0;
    int iterations = 0;
    double sir_mean = std::numeric_limits<double>::quiet_NaN();
    double sir_min = std::numeric_limits<double>::quiet_NaN();
};

struct Aggregate {
    AlgorithmId algorithm;
    double snr_db = 0.0;
    Index dim_i = 0;
    double mean_fit_gt = 0.0, std_fit_gt = 0.0;
    double mean_fit_obs = 0.0;
    double mean_seconds = 0.0;
    double mean_sir_min = std::numeric_limits<double>::quiet_NaN();
    int runs = 0;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<RunRecord> records;
    std::vector<Aggregate> aggregates;
};

namespace detail {

struct GeneratedData {
    DenseTensor truth;
    DenseTensor observation;
    std::optional<CpModel> cp_truth;
};

inline GeneratedData generate_run_data(const ExperimentConfig& cfg,
                                       const std::vector<Index>& dims, double snr_db,
                                       const SeedSpec& data_seed) {
    GeneratedData data;
    switch (cfg.generator) {
        case GeneratorKind::cp_gaussian: {
            auto gt = gen_cp_tensor(dims, cfg.rank, false, 0.0, data_seed);
            data.truth = std::move(gt.tensor);
            data.cp_truth = std::move(gt.model);
            break;
        }
        case GeneratorKind::cp_exponential_sparse: {
            auto gt = gen_cp_tensor(dims, cfg.rank, true, cfg.zero_frac, data_seed);
            data.truth = std::move(gt.tensor);
            data.cp_truth = std::move(gt.model);
            break;
        }
        case GeneratorKind::tucker_gaussian: {
            std::vector<Index> mlranks = cfg.mlrank;
            if (mlranks.empty()) mlranks.assign(dims.size(), cfg.rank);
            auto gt = gen_tucker_tensor(dims, mlranks, data_seed);
            data.truth = std::move(gt.tensor);
            break;
        }
    }
    data.observation = add_noise(data.truth, snr_db, data_seed.derived(0xAD0u));
    return data;
}

inline RunRecord execute_algorithm(const ExperimentConfig& cfg, AlgorithmId alg,
                                   const GeneratedData& data, double snr_db, int run,
                                   const SeedSpec& alg_seed) {
    using clock = std::chrono::steady_clock;
    RunRecord rec;
    rec.algorithm = alg;
    rec.snr_db = snr_db;
    rec.run = run;
    rec.dim_i = data.truth.dim(0);

    const std::vector<Index> mlranks = [&] {
        if (!cfg.mlrank.empty()) return cfg.mlrank;
        return std::vector<Index>(data.truth.shape().size(), cfg.rank);
    }();

    try {
        DenseTensor yhat;
        const auto t0 = clock::now();
        switch (alg) {
            case AlgorithmId::hosvd:
            case AlgorithmId::randtucker:
            case AlgorithmId::randtucker2i: {
                TuckerModel model;
                if (alg == AlgorithmId::hosvd) model = hosvd(data.observation, mlranks);
                else if (alg == AlgorithmId::randtucker)
                    model = rand_tucker(data.observation, mlranks, cfg.oversample, alg_seed);
                else
                    model = rand_tucker_2i(data.observation, mlranks, cfg.oversample, alg_seed);
                rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
                rec.iterations = alg == AlgorithmId::randtucker2i ? 2 : 1;
                yhat = reconstruct(model);
                break;
            }
            case AlgorithmId::cp_als: {
                const CpResult res = cp_als(data.observation, cfg.rank, cfg.stop, alg_seed);
                rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
                rec.iterations = res.iterations;
                yhat = cp_reconstruct(res.model);
                if (data.cp_truth) {
                    const auto match = match_factors(*data.cp_truth, res.model);
                    rec.sir_mean = match.mean_sir;
                    rec.sir_min = match.min_sir;
                }
                break;
            }
            case AlgorithmId::cp_mu:
            case AlgorithmId::cp_hals: {
                // multiplicative updates require nonnegative data; clamp the
                // (possibly noisy) observation at zero for both engines
                const DenseTensor nn = clamp_nonneg(data.observation);
                const auto t1 = clock::now();
                const CpResult res = alg == AlgorithmId::cp_mu
                                         ? cp_mu(nn, cfg.rank, cfg.stop, alg_seed)
                                         : cp_hals(nn, cfg.rank, cfg.stop, alg_seed);
                rec.seconds = std::chrono::duration<double>(clock::now() - t1).count();
                rec.iterations = res.iterations;
                yhat = cp_reconstruct(res.model);
                if (data.cp_truth) {
                    const auto match = match_factors(*data.cp_truth, res.model);
                    rec.sir_mean = match.mean_sir;
                    rec.sir_min = match.min_sir;
                }
                break;
            }
            case AlgorithmId::ffcp:
            case AlgorithmId::tucker_cp: {
                const TuckerModel compressed =
                    rand_tucker_2i(data.observation, mlranks, cfg.oversample, alg_seed);
                rec.compress_seconds =
                    std::chrono::duration<double>(clock::now() - t0).count();
                CpModel model;
                if (alg == AlgorithmId::ffcp) {
                    FfcpResult res =
                        ffcp(compressed, cfg.rank, cfg.constraint, cfg.stop, alg_seed);
                    rec.iterations = res.iterations;
                    model = std::move(res.model);
                } else {
                    CpResult res = tucker_cp(compressed, cfg.rank, cfg.stop, alg_seed);
                    rec.iterations = res.iterations;
                    model = std::move(res.model);
                }
                rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
                yhat = cp_reconstruct(model);
                if (data.cp_truth) {
                    const auto match = match_factors(*data.cp_truth, model);
                    rec.sir_mean = match.mean_sir;
                    rec.sir_min = match.min_sir;
                }
                break;
            }
        }
        rec.fit_gt = fit(data.truth, yhat);
        rec.fit_obs = fit(data.observation, yhat);
    } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = e.what();
    }
    return rec;
}

inline void append_aggregates(std::vector<Aggregate>& out,
                              const std::vector<RunRecord>& records) {
    // one aggregate per (algorithm, snr, dim) grid point, in record order
    std::vector<std::tuple<AlgorithmId, double, Index>> keys;
    for (const RunRecord& r : records) {
        std::tuple<AlgorithmId, double, Index> key{r.algorithm, r.snr_db, r.dim_i};
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }
    for (const auto& key : keys) {
        Aggregate agg;
        agg.algorithm = std::get<0>(key);
        agg.snr_db = std::get<1>(key);
        agg.dim_i = std::get<2>(key);
        double sum = 0, sum_sq = 0, sum_obs = 0, sum_sec = 0, sum_sir = 0;
        int n = 0, n_sir = 0;
        for (const RunRecord& r : records) {
            if (r.algorithm != agg.algorithm || r.snr_db != agg.snr_db || r.dim_i != agg.dim_i ||
                r.failed)
                continue;
            sum += r.fit_gt;
            sum_sq += r.fit_gt * r.fit_gt;
            sum_obs += r.fit_obs;
            sum_sec += r.seconds;
            if (!std::isnan(r.sir_min)) {
                sum_sir += r.sir_min;
                ++n_sir;
            }
            ++n;
        }
        if (n == 0) continue;
        agg.runs = n;
        agg.mean_fit_gt = sum / n;
        agg.std_fit_gt = n > 1 ? std::sqrt(std::max(0.0, (sum_sq - sum * sum / n) / (n - 1)))
                               : 0.0;
        agg.mean_fit_obs = sum_obs / n;
        agg.mean_seconds = sum_sec / n;
        if (n_sir > 0) agg.mean_sir_min = sum_sir / n_sir;
        out.push_back(agg);
    }
}

}  // namespace detail

/// Executes the Monte-Carlo grid. Within one (snr, run) cell every algorithm
/// sees the same data realization; run seeds derive from (seed, snr index,
/// run index) so parallel execution across runs never changes results.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    ExperimentReport report;
    report.config = cfg;
    const SeedSpec root{cfg.seed, 0};

    const bool sweep_i = !cfg.i_grid.empty();
    std::vector<std::vector<Index>> dim_sets;
    if (sweep_i) {
        const std::size_t order = cfg.dims.empty() ? 3 : cfg.dims.size();
        for (Index i : cfg.i_grid) dim_sets.push_back(std::vector<Index>(order, i));
    } else {
        dim_sets.push_back(cfg.dims);
    }

    for (std::size_t d = 0; d < dim_sets.size(); ++d) {
        for (std::size_t s = 0; s < cfg.snr_db.size(); ++s) {
            const double snr = cfg.snr_db[s];
            std::vector<std::vector<RunRecord>> per_run(static_cast<std::size_t>(cfg.runs));
            auto run_one = [&](int run) {
                const SeedSpec data_seed =
                    root.derived(0xDA7Au, (d * 1000 + s) * 1000 + static_cast<std::uint64_t>(run));
                const SeedSpec alg_seed = root.derived(0xA16Du, static_cast<std::uint64_t>(run));
                const auto data = detail::generate_run_data(cfg, dim_sets[d], snr, data_seed);
                for (AlgorithmId alg : cfg.algorithms)
                    per_run[static_cast<std::size_t>(run)].push_back(
                        detail::execute_algorithm(cfg, alg, data, snr, run, alg_seed));
            };
            const int threads = std::max(1, std::min(cfg.threads, cfg.runs));
            if (threads == 1) {
                for (int run = 0; run < cfg.runs; ++run) run_one(run);
            } else {
                std::atomic<int> next{0};
                auto body = [&] {
                    for (;;) {
                        const int run = next.fetch_add(1);
                        if (run >= cfg.runs) break;
                        run_one(run);
                    }
                };
                std::vector<std::thread> pool;
                for (int t = 0; t < threads; ++t) pool.emplace_back(body);
                for (auto& th : pool) th.join();
            }
            for (auto& recs : per_run)
                for (auto& r : recs) report.records.push_back(std::move(r));
        }
    }
    detail::append_aggregates(report.aggregates, report.records);
    return report;
}

// ---------------------------------------------------------------------------
// Report output
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const RunRecord& r) {
    nlohmann::json j{{"algorithm", to_string(r.algorithm)},
                     {"snr_db", std::isinf(r.snr_db) ? 1e30 : r.snr_db},
                     {"dim_i", r.dim_i},
                     {"run", r.run},
                     {"failed", r.failed},
                     {"fit_gt", r.fit_gt},
                     {"fit_obs", r.fit_obs},
                     {"seconds", r.seconds},
                     {"compress_seconds", r.compress_seconds},
                     {"iterations", r.iterations}};
    if (!std::isnan(r.sir_min)) {
        j["sir_mean"] = r.sir_mean;
        j["sir_min"] = r.sir_min;
    }
    if (r.failed) j["error"] = r.error;
    return j;
}

/// Writes <out>.records.ndjson, <out>.summary.txt and the plot-data CSV
/// (<out>.fit_vs_snr.csv, plus <out>.time_vs_i.csv for i_grid sweeps) with one
/// row per (algorithm, grid point).
inline void write_report_files(const ExperimentReport& report) {
    if (report.config.out.empty()) return;
    const std::string& prefix = report.config.out;

    {
        std::ofstream os(prefix + ".records.ndjson");
        for (const RunRecord& r : report.records) os << to_json(r).dump() << '\n';
    }
    {
        std::ofstream os(prefix + ".summary.txt");
        os << "algorithm      snr_db  dim_i  runs  fit_gt(mean+-std)      fit_obs   seconds\n";
        for (const Aggregate& a : report.aggregates) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%-14s %6.1f %6lld %5d   %8.4f +- %-8.4f %8.4f %9.3f\n",
                          to_string(a.algorithm), a.snr_db, static_cast<long long>(a.dim_i),
                          a.runs, a.mean_fit_gt, a.std_fit_gt, a.mean_fit_obs, a.mean_seconds);
            os << buf;
        }
    }
    {
        std::ofstream os(prefix + ".fit_vs_snr.csv");
        os << "algorithm,snr_db,mean_fit_gt,std_fit_gt,mean_fit_obs,mean_seconds\n";
        for (const Aggregate& a : report.aggregates)
            os << to_string(a.algorithm) << ',' << a.snr_db << ',' << a.mean_fit_gt << ','
               << a.std_fit_gt << ',' << a.mean_fit_obs << ',' << a.mean_seconds << '\n';
    }
    if (!report.config.i_grid.empty()) {
        std::ofstream os(prefix + ".time_vs_i.csv");
        os << "algorithm,i,mean_seconds,mean_fit_gt\n";
        for (const Aggregate& a : report.aggregates)
            os << to_string(a.algorithm) << ',' << a.dim_i << ',' << a.mean_seconds << ','
               << a.mean_fit_gt << '\n';
    }
}

/// Median per-sweep FFCP wall time on a synthetic Tucker-format input of cube
/// size `i` (orthonormal factors, Gaussian core), for scaling measurements.
inline double ffcp_sweep_seconds(Index i, Index order, Index rank, Index core_rank, int sweeps,
                                 const SeedSpec& seed) {
    TuckerModel model;
    model.factors.resize(static_cast<std::size_t>(order));
    std::vector<Index> core_shape(static_cast<std::size_t>(order), core_rank);
    for (Index n = 0; n < order; ++n)
        model.factors[static_cast<std::size_t>(n)] =
            orthonormal_basis(gaussian_matrix(i, core_rank, seed.derived(0xF5u, n)));
    model.core = gaussian_tensor(core_shape, seed.derived(0xC04Eu));

    FfcpResult res =
        ffcp(model, rank, ConstraintSpec{}, StopRule{sweeps, 0.0}, seed.derived(0xF16u));
    std::vector<double> sweep_secs;
    for (const auto& rec : res.trace) {
        double total = 0;
        for (double sec : rec.mode_seconds) total += sec;
        sweep_secs.push_back(total);
    }
    std::sort(sweep_secs.begin(), sweep_secs.end());
    return sweep_secs[sweep_secs.size() / 2];
}

}  // namespace tenkit
