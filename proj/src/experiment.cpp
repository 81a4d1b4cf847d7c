#include "mlti/experiment.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <utility>

#include "mlti/bt.hpp"
#include "mlti/generators.hpp"
#include "mlti/io.hpp"
#include "mlti/lyapunov.hpp"
#include "mlti/mor.hpp"

namespace mlti
{
namespace
{

using nlohmann::json;

std::string fmt17(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::uint64_t fnv1a(const std::string& bytes)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes)
    {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void write_text(const std::filesystem::path& path, const std::string& body)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    out << body;
}

// First line of every CSV ties the artifact to its config and seed.
std::string csv_preamble(const ExperimentConfig& cfg)
{
    return "# config_hash=" + config_hash(cfg) + " seed=" + std::to_string(cfg.seed) + "\n";
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    if (n == 0)
        return 0.0;
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json report_skeleton(const ExperimentConfig& cfg, const std::string& pipeline)
{
    json j;
    j["pipeline"] = pipeline;
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
    j["config"] = config_to_json(cfg);
    return j;
}

json solve_report_json(const SolveReport& rep, bool record_timing)
{
    json j;
    j["method"] = rep.method;
    j["size"] = {rep.size.d1, rep.size.d2, rep.size.d3, rep.size.d4};
    j["eps"] = rep.eps;
    j["dtol"] = rep.dtol;
    j["iterations"] = rep.iterations;
    j["residuals"] = rep.residuals;
    j["seconds"] = record_timing ? rep.seconds : 0.0;
    j["converged"] = rep.converged;
    j["warnings"] = rep.warnings;
    return j;
}

void finish(RunResult& result, const ExperimentConfig& cfg, const std::filesystem::path& out_dir)
{
    const auto path = out_dir / "report.json";
    write_text(path, result.report.dump(2) + "\n");
    result.files.push_back(path.string());
    (void)cfg;
}

std::string frequency_csv(const ExperimentConfig& cfg, const FrequencyCurve& curve, bool with_reduced)
{
    std::string body = csv_preamble(cfg);
    if (with_reduced)
    {
        body += "theta, sigma_max_full, sigma_max_reduced, sigma_max_error\n";
        for (std::size_t i = 0; i < curve.theta.size(); ++i)
            body += fmt17(curve.theta[i]) + ", " + fmt17(curve.full_norm[i]) + ", " + fmt17(curve.reduced_norm[i]) +
                    ", " + fmt17(curve.error_norm[i]) + "\n";
    }
    else
    {
        body += "theta, sigma_max\n";
        for (std::size_t i = 0; i < curve.theta.size(); ++i)
            body += fmt17(curve.theta[i]) + ", " + fmt17(curve.full_norm[i]) + "\n";
    }
    return body;
}

void run_gen(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, RunResult& result)
{
    const Problem prob = build_problem(cfg);
    const std::pair<const char*, const Tensor4d*> parts[] = {{"a.coo", &prob.a}, {"b.coo", &prob.b}, {"c.coo", &prob.c}};
    json meta;
    for (const auto& [name, t] : parts)
    {
        const auto path = out_dir / name;
        write_coo(*t, path);
        result.files.push_back(path.string());
        meta[name] = {{"dims", {t->dims().d1, t->dims().d2, t->dims().d3, t->dims().d4}},
                      {"nonzeros", t->nonzeros()}};
    }
    result.report["tensors"] = meta;
}

void run_lyap(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, RunResult& result)
{
    const Problem prob = build_problem(cfg);
    SolveOptions<double> opt;
    opt.eps = cfg.eps;
    opt.dtol = cfg.dtol;
    opt.m_max = cfg.m_max;
    const auto [factors, rep] = solve_stein(prob.a, prob.b, stein_method_from_name(cfg.method), opt);

    std::string body = csv_preamble(cfg) + "iteration, residual\n";
    for (std::size_t i = 0; i < rep.residuals.size(); ++i)
        body += std::to_string(i + 1) + ", " + fmt17(rep.residuals[i]) + "\n";
    const auto path = out_dir / "residuals.csv";
    write_text(path, body);
    result.files.push_back(path.string());

    result.report["solve"] = solve_report_json(rep, cfg.record_timing);
    result.report["rank"] = factors.rank;
    if (!rep.converged)
        result.exit_code = 2;
}

void run_reduce(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, RunResult& result)
{
    const Problem prob = build_problem(cfg);
    MLTISystem<double> sys{prob.a, prob.b, prob.c};
    sys.validate();
    ReducedSystem<double> red;
    if (cfg.method == "classic-global")
        red = reduce_classic_global(sys, cfg.reduce_order);
    else if (cfg.method == "ext-global")
        red = reduce_extended_global(sys, cfg.reduce_order);
    else
        throw std::invalid_argument("reduction supports classic-global and ext-global, got " + cfg.method);

    const FrequencyCurve curve = hinf_error(sys, red, cfg.grid_size);
    const auto path = out_dir / "frequency.csv";
    write_text(path, frequency_csv(cfg, curve, true));
    result.files.push_back(path.string());

    result.report["order"] = red.order;
    result.report["breakdown"] = red.breakdown;
    result.report["h_next"] = red.h_next;
    result.report["max_error"] = curve.max_error;
    result.report["max_full"] = curve.max_full;
    result.report["skipped_points"] = curve.skipped.size();
}

void run_bt(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, RunResult& result)
{
    const Problem prob = build_problem(cfg);
    MLTISystem<double> sys{prob.a, prob.b, prob.c};
    sys.validate();
    const auto g = gramians(sys, cfg.eps, cfg.dtol, cfg.m_max, stein_method_from_name(cfg.method));
    BTOptions opt;
    opt.order = cfg.bt_order;
    opt.tol = cfg.bt_tol;
    const auto bt = bt_reduce(sys, g.p, g.q, opt);

    std::string body = csv_preamble(cfg) + "index, sigma\n";
    for (std::size_t i = 0; i < bt.hankel.size(); ++i)
        body += std::to_string(i + 1) + ", " + fmt17(bt.hankel[i]) + "\n";
    const auto hpath = out_dir / "hankel.csv";
    write_text(hpath, body);
    result.files.push_back(hpath.string());

    const FrequencyCurve curve = hinf_error(sys, bt.reduced, cfg.grid_size);
    const auto fpath = out_dir / "frequency.csv";
    write_text(fpath, frequency_csv(cfg, curve, true));
    result.files.push_back(fpath.string());

    result.report["reachability"] = solve_report_json(g.p_report, cfg.record_timing);
    result.report["observability"] = solve_report_json(g.q_report, cfg.record_timing);
    result.report["order"] = bt.order;
    result.report["hankel"] = bt.hankel;
    result.report["max_error"] = curve.max_error;
    result.report["max_full"] = curve.max_full;
    result.report["warnings"] = g.warnings;
    if (!g.p_report.converged || !g.q_report.converged)
        result.exit_code = 2;
}

void run_freqresp(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, RunResult& result)
{
    const Problem prob = build_problem(cfg);
    MLTISystem<double> sys{prob.a, prob.b, prob.c};
    sys.validate();
    const FrequencyCurve curve = frequency_response(sys, cfg.grid_size);
    const auto path = out_dir / "frequency.csv";
    write_text(path, frequency_csv(cfg, curve, false));
    result.files.push_back(path.string());
    result.report["max_full"] = curve.max_full;
    result.report["skipped_points"] = curve.skipped.size();
}

void run_bench(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, RunResult& result)
{
    static const char* kMethods[] = {"classic-global", "classic-block", "ext-global", "ext-block"};
    std::string body = csv_preamble(cfg) + "size, method, iterations, residual, seconds, converged\n";
    json rows = json::array();
    for (const Index size : cfg.bench_sizes)
    {
        ExperimentConfig local = cfg;
        local.n1 = local.n2 = size;
        const Problem prob = build_problem(local);
        for (const char* name : kMethods)
        {
            SolveOptions<double> opt;
            opt.eps = cfg.eps;
            opt.dtol = cfg.dtol;
            opt.m_max = cfg.m_max;
            const int repeats = std::max(1, cfg.bench_repeats);
            std::vector<double> times;
            SolveReport rep;
            for (int r = 0; r < repeats; ++r)
            {
                auto [factors, run] = solve_stein(prob.a, prob.b, stein_method_from_name(name), opt);
                (void)factors;
                times.push_back(run.seconds);
                rep = std::move(run);
            }
            const double seconds = cfg.record_timing ? median(std::move(times)) : 0.0;
            const double last_residual = rep.residuals.empty() ? 0.0 : rep.residuals.back();
            body += std::to_string(size) + ", " + name + ", " + std::to_string(rep.iterations) + ", " +
                    fmt17(last_residual) + ", " + fmt17(seconds) + ", " + (rep.converged ? "1" : "0") + "\n";
            rows.push_back({{"size", size},
                            {"method", name},
                            {"iterations", rep.iterations},
                            {"residual", last_residual},
                            {"seconds", seconds},
                            {"converged", rep.converged}});
        }
    }
    const auto path = out_dir / "bench.csv";
    write_text(path, body);
    result.files.push_back(path.string());
    result.report["runs"] = rows;
}

} // namespace

ExperimentConfig config_from_json(const nlohmann::json& j)
{
    ExperimentConfig cfg;
    if (!j.is_object())
        throw std::invalid_argument("config must be a JSON object");
    for (const auto& [key, value] : j.items())
    {
        if (key == "problem")
            cfg.problem = value.get<std::string>();
        else if (key == "n1")
            cfg.n1 = value.get<Index>();
        else if (key == "n2")
            cfg.n2 = value.get<Index>();
        else if (key == "k1")
            cfg.k1 = value.get<Index>();
        else if (key == "k2")
            cfg.k2 = value.get<Index>();
        else if (key == "seed")
            cfg.seed = value.get<std::uint64_t>();
        else if (key == "method")
            cfg.method = value.get<std::string>();
        else if (key == "m_max")
            cfg.m_max = value.get<int>();
        else if (key == "eps")
            cfg.eps = value.get<double>();
        else if (key == "dtol")
            cfg.dtol = value.get<double>();
        else if (key == "reduce_order")
            cfg.reduce_order = value.get<int>();
        else if (key == "grid_size")
            cfg.grid_size = value.get<int>();
        else if (key == "spectral_target")
            cfg.spectral_target = value.get<double>();
        else if (key == "density")
            cfg.density = value.get<double>();
        else if (key == "perturb_scale")
            cfg.perturb_scale = value.get<double>();
        else if (key == "spdiags_diag")
            cfg.spdiags_diag = value.get<double>();
        else if (key == "spdiags_super1")
            cfg.spdiags_super1 = value.get<double>();
        else if (key == "spdiags_super2")
            cfg.spdiags_super2 = value.get<double>();
        else if (key == "spdiags_alternating")
            cfg.spdiags_alternating = value.get<bool>();
        else if (key == "heat_c")
            cfg.heat_c = value.get<double>();
        else if (key == "heat_dt")
            cfg.heat_dt = value.get<double>();
        else if (key == "heat_h")
            cfg.heat_h = value.get<double>();
        else if (key == "heat_euler")
            cfg.heat_euler = value.get<bool>();
        else if (key == "rhs_kind")
            cfg.rhs_kind = value.get<std::string>();
        else if (key == "bt_order")
            cfg.bt_order = value.get<int>();
        else if (key == "bt_tol")
            cfg.bt_tol = value.get<double>();
        else if (key == "bench_sizes")
            cfg.bench_sizes = value.get<std::vector<Index>>();
        else if (key == "bench_repeats")
            cfg.bench_repeats = value.get<int>();
        else if (key == "record_timing")
            cfg.record_timing = value.get<bool>();
        else
            throw std::invalid_argument("unknown config key: " + key);
    }
    return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg)
{
    return json{{"problem", cfg.problem},
                {"n1", cfg.n1},
                {"n2", cfg.n2},
                {"k1", cfg.k1},
                {"k2", cfg.k2},
                {"seed", cfg.seed},
                {"method", cfg.method},
                {"m_max", cfg.m_max},
                {"eps", cfg.eps},
                {"dtol", cfg.dtol},
                {"reduce_order", cfg.reduce_order},
                {"grid_size", cfg.grid_size},
                {"spectral_target", cfg.spectral_target},
                {"density", cfg.density},
                {"perturb_scale", cfg.perturb_scale},
                {"spdiags_diag", cfg.spdiags_diag},
                {"spdiags_super1", cfg.spdiags_super1},
                {"spdiags_super2", cfg.spdiags_super2},
                {"spdiags_alternating", cfg.spdiags_alternating},
                {"heat_c", cfg.heat_c},
                {"heat_dt", cfg.heat_dt},
                {"heat_h", cfg.heat_h},
                {"heat_euler", cfg.heat_euler},
                {"rhs_kind", cfg.rhs_kind},
                {"bt_order", cfg.bt_order},
                {"bt_tol", cfg.bt_tol},
                {"bench_sizes", cfg.bench_sizes},
                {"bench_repeats", cfg.bench_repeats},
                {"record_timing", cfg.record_timing}};
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open config file " + path.string());
    json j;
    try
    {
        in >> j;
    }
    catch (const json::exception& e)
    {
        throw std::invalid_argument("config parse failure in " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg)
{
    const std::uint64_t h = fnv1a(config_to_json(cfg).dump());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Problem build_problem(const ExperimentConfig& cfg)
{
    if (cfg.n1 < 1 || cfg.n2 < 1 || cfg.k1 < 1 || cfg.k2 < 1)
        throw std::invalid_argument("extents must be positive");
    Problem prob;
    if (cfg.problem == "spdiags")
    {
        if (cfg.n1 != cfg.n2)
            throw std::invalid_argument("spdiags needs n1 == n2");
        prob.a = gen_spdiags(cfg.n1, cfg.seed, cfg.spectral_target,
                             SpdiagsOptions{cfg.spdiags_diag, cfg.spdiags_super1, cfg.spdiags_super2,
                                            cfg.spdiags_alternating});
    }
    else if (cfg.problem == "heat2d")
    {
        if (cfg.n1 != cfg.n2)
            throw std::invalid_argument("heat2d needs n1 == n2");
        prob.a = gen_heat2d(cfg.n1, cfg.heat_c, cfg.heat_dt, cfg.heat_h, cfg.heat_euler);
    }
    else if (cfg.problem == "randsparse")
    {
        prob.a = gen_randsparse(Dims4{cfg.n1, cfg.n2, cfg.n1, cfg.n2}, cfg.density, cfg.seed);
        if (cfg.spectral_target > 0)
        {
            const double smax = sigma_max_estimate(prob.a);
            if (smax > 0)
            {
                SparseMat<double> u = prob.a.sparse_unfolding();
                u *= cfg.spectral_target / smax;
                prob.a = Tensor4d::from_unfolding(std::move(u), prob.a.dims());
            }
        }
    }
    else if (cfg.problem == "identity-perturbed")
    {
        if (cfg.n1 != cfg.n2)
            throw std::invalid_argument("identity-perturbed needs n1 == n2");
        prob.a = gen_identity_perturbed(cfg.n1, cfg.perturb_scale, cfg.seed, cfg.spectral_target, cfg.density);
    }
    else
    {
        throw std::invalid_argument("unknown problem kind: " + cfg.problem);
    }
    prob.b = gen_rhs(Dims4{cfg.n1, cfg.n2, cfg.k1, cfg.k2}, cfg.rhs_kind, cfg.seed + 1);
    prob.c = gen_rhs(Dims4{cfg.k1, cfg.k2, cfg.n1, cfg.n2}, cfg.rhs_kind, cfg.seed + 2);
    return prob;
}

RunResult run_experiment(const ExperimentConfig& cfg, const std::string& pipeline,
                         const std::filesystem::path& out_dir)
{
    std::filesystem::create_directories(out_dir);
    RunResult result;
    result.report = report_skeleton(cfg, pipeline);
    if (pipeline == "gen")
        run_gen(cfg, out_dir, result);
    else if (pipeline == "lyap")
        run_lyap(cfg, out_dir, result);
    else if (pipeline == "reduce")
        run_reduce(cfg, out_dir, result);
    else if (pipeline == "bt")
        run_bt(cfg, out_dir, result);
    else if (pipeline == "freqresp")
        run_freqresp(cfg, out_dir, result);
    else if (pipeline == "bench")
        run_bench(cfg, out_dir, result);
    else
        throw std::invalid_argument("unknown pipeline: " + pipeline);
    result.report["exit_code"] = result.exit_code;
    finish(result, cfg, out_dir);
    return result;
}

} // namespace mlti
