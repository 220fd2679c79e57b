#include "endiv/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <boost/math/special_functions/binomial.hpp>

#include "endiv/pipeline.hpp"
#include "endiv/sensitivity.hpp"
#include "endiv/simulation.hpp"

namespace endiv::cli {

namespace {

using nlohmann::json;

std::vector<Index> parse_index_list(const std::string& text, const char* what)
{
    std::vector<Index> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b == std::string::npos)
            throw ConfigError(std::string("empty entry in ") + what);
        item = item.substr(b, e - b + 1);
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(item, &used);
        } catch (const std::exception&) {
            throw ConfigError(std::string("non-integer entry '") + item + "' in " + what);
        }
        if (used != item.size())
            throw ConfigError(std::string("non-integer entry '") + item + "' in " + what);
        out.push_back(static_cast<Index>(v));
    }
    return out;
}

std::string join(const std::vector<Index>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<Index> index_list_from_json(const json& v, const char* what)
{
    if (v.is_string())
        return parse_index_list(v.get<std::string>(), what);
    if (!v.is_array())
        throw ConfigError(std::string(what) + " must be an array or a comma list");
    std::vector<Index> out;
    for (const auto& e : v) {
        if (!e.is_number_integer())
            throw ConfigError(std::string(what) + " entries must be integers");
        out.push_back(e.get<Index>());
    }
    return out;
}

// Values from a flat JSON object. A saved provenance block also works.
void apply_config_file(RunConfig& cfg, const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
    }
    if (j.contains("provenance"))
        j = j["provenance"];
    if (!j.is_object())
        throw ConfigError("config file must hold a flat JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        const json& v = it.value();
        try {
            if (k == "command") cfg.command = v.get<std::string>();
            else if (k == "input") cfg.input = v.get<std::string>();
            else if (k == "output") cfg.output = v.get<std::string>();
            else if (k == "alpha") cfg.alpha = v.get<double>();
            else if (k == "set") cfg.S = index_list_from_json(v, "set");
            else if (k == "draws") cfg.draws = v.get<Index>();
            else if (k == "seed") cfg.seed = v.get<std::uint64_t>();
            else if (k == "c_const") cfg.c = v.get<double>();
            else if (k == "iid") cfg.iid = v.get<bool>();
            else if (k == "threads") cfg.threads = v.get<unsigned>();
            else if (k == "tol_feas") cfg.tol_feas = v.get<double>();
            else if (k == "tol_obj") cfg.tol_obj = v.get<double>();
            else if (k == "max_iter") cfg.max_iter = v.get<Index>();
            else if (k == "lambda_scale") cfg.lambda_scale = v.get<double>();
            else if (k == "stage1_only") cfg.stage1_only = v.get<bool>();
            else if (k == "n") cfg.n = v.get<Index>();
            else if (k == "p") cfg.p = v.get<Index>();
            else if (k == "K") cfg.K = v.get<Index>();
            else if (k == "L") cfg.L = v.get<Index>();
            else if (k == "reps") cfg.reps = v.get<Index>();
            else if (k == "s") cfg.s = v.get<Index>();
            else if (k == "u") cfg.u = v.get<double>();
            else if (k == "q") cfg.q = v.get<int>();
            else if (k == "m_grid") cfg.m_grid = index_list_from_json(v, "m_grid");
            else if (k == "version") continue;
            else throw ConfigError("unknown config key '" + k + "'");
        } catch (const json::exception&) {
            throw ConfigError("config key '" + k + "' has the wrong type");
        }
    }
}

void validate_config(const RunConfig& cfg)
{
    static const std::vector<std::string> commands{"estimate", "bands", "sensitivity", "simulate", "validate"};
    if (std::find(commands.begin(), commands.end(), cfg.command) == commands.end())
        throw ConfigError("unknown command '" + cfg.command + "'");
    if (!(cfg.alpha > 0 && cfg.alpha < 1))
        throw ConfigError("alpha must lie in (0, 1)");
    if (!(cfg.c >= 1) || !std::isfinite(cfg.c))
        throw ConfigError("c-const must be >= 1");
    if (cfg.iid && cfg.c != 1.0)
        throw ConfigError("--iid and --c-const are mutually exclusive");
    if (cfg.draws < 100)
        throw ConfigError("draws must be at least 100");
    if (cfg.threads < 1)
        throw ConfigError("threads must be at least 1");
    if (!(cfg.tol_feas > 0) || !(cfg.tol_obj > 0) || cfg.max_iter < 1)
        throw ConfigError("solver tolerances and max-iter must be positive");
    if (!(cfg.lambda_scale > 0) || !std::isfinite(cfg.lambda_scale))
        throw ConfigError("lambda-scale must be positive");
    for (Index j : cfg.S)
        if (j < 1)
            throw ConfigError("index out of range: " + std::to_string(j) + " (indices are 1-based)");
    const bool needs_input = cfg.command != "simulate";
    if (needs_input && cfg.input.empty())
        throw ConfigError(cfg.command + " needs --input");
    if (cfg.command == "bands" && cfg.S.empty())
        throw ConfigError("bands needs a nonempty --set");
    if (cfg.command == "sensitivity") {
        if (cfg.q != 1 && cfg.q != 2)
            throw ConfigError("q must be 1 or 2");
        if (cfg.s < 1 || !(cfg.u > 0))
            throw ConfigError("sensitivity needs s >= 1 and u > 0");
        for (Index m : cfg.m_grid)
            if (m < cfg.s)
                throw ConfigError("m-grid entries must be >= s");
    }
    if (cfg.command == "simulate") {
        if (cfg.reps < 1)
            throw ConfigError("reps must be at least 1");
        if (cfg.n < 2 || cfg.p < 1 || cfg.L < 1 || cfg.K != cfg.L * cfg.p)
            throw ConfigError("simulate needs n >= 2, p >= 1, L >= 1 and K = L p");
        for (Index j : cfg.S)
            if (j > cfg.p)
                throw ConfigError("index out of range: " + std::to_string(j) + " > p = " + std::to_string(cfg.p));
    }
}

std::vector<Index> zero_based(const std::vector<Index>& S, Index p)
{
    std::vector<Index> out;
    for (Index j : S) {
        if (j < 1 || j > p)
            throw ConfigError("index out of range: " + std::to_string(j) + " not in [1, " + std::to_string(p) + "]");
        out.push_back(j - 1);
    }
    return out;
}

conic::SolverOptions solver_options(const RunConfig& cfg)
{
    conic::SolverOptions o;
    o.tol_feas = cfg.tol_feas;
    o.tol_obj = cfg.tol_obj;
    o.max_iter = cfg.max_iter;
    return o;
}

json solver_json(const conic::SolverSolution& s)
{
    return {{"status", conic::to_string(s.status)},
            {"iterations", s.iterations},
            {"objective", s.objective},
            {"dual_bound", s.dual_bound},
            {"relative_gap", s.relative_gap()},
            {"max_violation", s.max_violation}};
}

std::vector<double> to_vec(const Vector& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

json stage1_json(const Stage1Fit& f)
{
    return {{"beta_hat", to_vec(f.beta_hat)},
            {"t_hat", to_vec(f.t_hat)},
            {"lambda_t", f.penalties.lambda_t},
            {"tau", f.penalties.tau},
            {"H1n", f.H1n},
            {"objective", f.objective},
            {"solver", solver_json(f.diagnostics)}};
}

json instrument_json(const Dataset& d, const OrthogonalInstrumentFit& f)
{
    const auto rep = orthogonality_residuals(d, f);
    return {{"j", f.j + 1},
            {"mu_hat", to_vec(f.mu_hat)},
            {"theta_hat", to_vec(f.theta_hat)},
            {"omega_hat", rep.omega_hat},
            {"max_orthogonality", rep.max_orthogonality},
            {"margins", {{"z", to_vec(rep.margin_z)}, {"x", to_vec(rep.margin_x)}, {"xz", to_vec(rep.margin_xz)}}},
            {"max_margin", rep.max_margin},
            {"lambda_t", f.penalties.lambda_t},
            {"tau", f.penalties.tau},
            {"c", f.penalties.c},
            {"H2n", f.H2n},
            {"objective", f.objective},
            {"warning", f.warning},
            {"solver", solver_json(f.diagnostics)}};
}

json estimate_json(const DebiasedEstimate& e)
{
    return {{"j", e.j + 1},
            {"beta_check", e.beta_check},
            {"omega_hat", e.omega_hat},
            {"sigma_hat", e.sigma_hat},
            {"moment_residual", e.moment_residual}};
}

Dataset load_input(const RunConfig& cfg)
{
    Dataset d = load_dataset(cfg.input);
    require_valid(d);
    return d;
}

double effective_c(const RunConfig& cfg) { return cfg.iid ? 1.0 : cfg.c; }

json run_estimate(const RunConfig& cfg)
{
    const Dataset d = load_input(cfg);
    const auto S = zero_based(cfg.S, d.p());
    const auto solver = solver_options(cfg);
    const auto s1 = estimate_beta(d, cfg.alpha, solver, cfg.lambda_scale);
    if (cfg.stage1_only)
        return stage1_json(s1);

    json out{{"stage1", stage1_json(s1)}};
    if (S.empty())
        return out;
    json inst = json::array(), est = json::array();
    for (const auto& fit : estimate_instruments(d, S, cfg.alpha, effective_c(cfg), solver, cfg.lambda_scale)) {
        inst.push_back(instrument_json(d, fit));
        try {
            auto e = debiased_coefficient(d, fit.j, s1.beta_hat, fit.mu_hat);
            e.sigma_hat = variance_estimate(d, fit.j, s1.beta_hat, fit.mu_hat, e.omega_hat);
            est.push_back(estimate_json(e));
        } catch (const WeakInstrumentError& ex) {
            est.push_back({{"j", fit.j + 1}, {"error", ex.what()}});
        }
    }
    out["instruments"] = inst;
    out["estimates"] = est;
    return out;
}

json run_bands(const RunConfig& cfg)
{
    const Dataset d = load_input(cfg);
    PipelineOptions opts;
    opts.alpha = cfg.alpha;
    opts.c = effective_c(cfg);
    opts.draws = cfg.draws;
    opts.seed = cfg.seed;
    opts.solver = solver_options(cfg);
    opts.lambda_scale = cfg.lambda_scale;
    const auto res = estimate_and_band(d, zero_based(cfg.S, d.p()), opts);
    json est = json::array();
    for (const auto& e : res.estimates)
        est.push_back(estimate_json(e));
    return {{"band", res.band}, {"estimates", est}, {"stage1", stage1_json(res.stage1)}};
}

std::vector<Index> default_m_grid(Index s, Index K, Index p)
{
    std::vector<Index> grid;
    for (Index m = s; m <= std::max(K, p); m *= 2) {
        const Index r = std::min(m, K), c = std::min(m, p);
        const double cost = boost::math::binomial_coefficient<double>(static_cast<unsigned>(K), static_cast<unsigned>(r)) *
                            boost::math::binomial_coefficient<double>(static_cast<unsigned>(p), static_cast<unsigned>(c));
        if (cost > 1e6)
            break;
        grid.push_back(m);
    }
    if (grid.empty())
        throw BudgetError("no m >= s fits the enumeration budget; pass --m-grid explicitly");
    return grid;
}

json run_sensitivity(const RunConfig& cfg)
{
    const Dataset d = load_input(cfg);
    const Matrix Psi = d.Z.transpose() * d.X / static_cast<double>(d.n());
    const auto grid = cfg.m_grid.empty() ? default_m_grid(cfg.s, d.K(), d.p()) : cfg.m_grid;
    return sensitivity_report(Psi, cfg.s, cfg.u, cfg.q, grid);
}

json run_validate(const RunConfig& cfg)
{
    return validate(load_dataset(cfg.input));
}

json run_simulate(const RunConfig& cfg, std::string* table)
{
    sim::DgpParams params;
    params.n = cfg.n;
    params.p = cfg.p;
    params.K = cfg.K;
    params.L = cfg.L;
    sim::EstimatorConfig est;
    est.alpha = cfg.alpha;
    est.c = effective_c(cfg);
    est.draws = cfg.draws;
    est.solver = solver_options(cfg);
    est.lambda_scale = cfg.lambda_scale;
    est.S = cfg.S.empty() ? std::vector<Index>{0, 1, 2} : zero_based(cfg.S, cfg.p);
    for (Index j : est.S)
        if (j >= cfg.p)
            throw ConfigError("index out of range for p = " + std::to_string(cfg.p));
    json out = sim::monte_carlo(params, cfg.reps, cfg.seed, est, cfg.threads);
    *table = sim::table_header() + "\n" + sim::table_row(out) + "\n";
    return out;
}

void write_artifact(const RunConfig& cfg, const json& j, std::ostream& out)
{
    const std::string text = j.dump(2) + "\n";
    if (cfg.output.empty()) {
        out << text;
        return;
    }
    std::ofstream f(cfg.output, std::ios::binary | std::ios::trunc);
    if (!f)
        throw std::ios_base::failure("cannot open '" + cfg.output + "' for writing");
    f << text;
    f.flush();
    if (!f)
        throw std::ios_base::failure("write to '" + cfg.output + "' failed");
}

} // namespace

RunConfig parse_config(const std::vector<std::string>& args)
{
    CLI::App app{"High-dimensional IV estimation with many endogenous variables", "endiv"};
    app.require_subcommand(1, 1);
    app.set_help_flag();

    std::string input, output, set, m_grid, config;
    double alpha = 0, c = 0, tol_feas = 0, tol_obj = 0, u = 0, lambda_scale = 0;
    Index draws = 0, n = 0, p = 0, K = 0, L = 0, reps = 0, s = 0, max_iter = 0;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    int q = 0;
    bool iid = false, stage1_only = false;

    auto* o_input = app.add_option("--input", input, "CSV with columns y, x1..xp, z1..zK");
    auto* o_output = app.add_option("--output,--out", output, "output JSON path (default stdout)");
    auto* o_alpha = app.add_option("--alpha", alpha, "significance level");
    auto* o_set = app.add_option("--set", set, "1-based target indices, comma separated");
    auto* o_draws = app.add_option("--draws", draws, "bootstrap draws B");
    auto* o_seed = app.add_option("--seed", seed, "random seed");
    auto* o_c = app.add_option("--c-const", c, "stage-2 multiplier c >= 1");
    auto* o_iid = app.add_flag("--iid", iid, "i.i.d. data: c = 1");
    o_iid->excludes(o_c);
    auto* o_threads = app.add_option("--threads", threads, "worker threads (results do not depend on it)");
    auto* o_tol_feas = app.add_option("--tol-feas", tol_feas, "solver feasibility tolerance");
    auto* o_tol_obj = app.add_option("--tol-obj", tol_obj, "solver relative gap tolerance");
    auto* o_max_iter = app.add_option("--max-iter", max_iter, "solver iteration cap");
    auto* o_lambda = app.add_option("--lambda-scale", lambda_scale, "multiplier on both default lambda_t");
    auto* o_stage1 = app.add_flag("--stage1-only", stage1_only, "estimate: stop after stage 1");
    auto* o_n = app.add_option("--n", n, "simulate: sample size");
    auto* o_p = app.add_option("--p", p, "simulate: endogenous regressors");
    auto* o_K = app.add_option("--K", K, "simulate: instruments");
    auto* o_L = app.add_option("--L", L, "simulate: instruments per regressor");
    auto* o_reps = app.add_option("--reps", reps, "simulate: replications");
    auto* o_s = app.add_option("--s", s, "sensitivity: sparsity");
    auto* o_u = app.add_option("--u", u, "sensitivity: cone constant");
    auto* o_q = app.add_option("--q", q, "sensitivity: norm, 1 or 2");
    auto* o_m = app.add_option("--m-grid", m_grid, "sensitivity: m values, comma separated");
    app.add_option("--config", config, "flat JSON config; flags override it");

    for (const char* name : {"estimate", "bands", "sensitivity", "simulate", "validate"})
        app.add_subcommand(name)->fallthrough();

    std::vector<std::string> argv_store{"endiv"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store)
        argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        throw ConfigError(e.what());
    }

    RunConfig cfg;
    if (const char* env = std::getenv("ENDIV_THREADS")) {
        try {
            cfg.threads = static_cast<unsigned>(std::stoul(env));
        } catch (const std::exception&) {
            throw ConfigError("ENDIV_THREADS must be a positive integer");
        }
    }
    if (!config.empty())
        apply_config_file(cfg, config);
    cfg.command = app.get_subcommands().front()->get_name();

    if (o_input->count()) cfg.input = input;
    if (o_output->count()) cfg.output = output;
    if (o_alpha->count()) cfg.alpha = alpha;
    if (o_set->count()) cfg.S = parse_index_list(set, "--set");
    if (o_draws->count()) cfg.draws = draws;
    if (o_seed->count()) cfg.seed = seed;
    if (o_c->count()) cfg.c = c;
    if (o_iid->count()) cfg.iid = iid;
    if (o_threads->count()) cfg.threads = threads;
    if (o_tol_feas->count()) cfg.tol_feas = tol_feas;
    if (o_tol_obj->count()) cfg.tol_obj = tol_obj;
    if (o_max_iter->count()) cfg.max_iter = max_iter;
    if (o_lambda->count()) cfg.lambda_scale = lambda_scale;
    if (o_stage1->count()) cfg.stage1_only = stage1_only;
    if (o_n->count()) cfg.n = n;
    if (o_p->count()) cfg.p = p;
    if (o_K->count()) cfg.K = K;
    if (o_L->count()) cfg.L = L;
    if (o_reps->count()) cfg.reps = reps;
    if (o_s->count()) cfg.s = s;
    if (o_u->count()) cfg.u = u;
    if (o_q->count()) cfg.q = q;
    if (o_m->count()) cfg.m_grid = parse_index_list(m_grid, "--m-grid");
    if (cfg.iid && o_c->count() == 0)
        cfg.c = 1.0;

    validate_config(cfg);
    return cfg;
}

json provenance(const RunConfig& cfg)
{
    json j{{"version", kVersion},
           {"command", cfg.command},
           {"alpha", cfg.alpha},
           {"seed", cfg.seed},
           {"tol_feas", cfg.tol_feas},
           {"tol_obj", cfg.tol_obj},
           {"max_iter", cfg.max_iter},
           {"lambda_scale", cfg.lambda_scale}};
    if (!cfg.input.empty())
        j["input"] = cfg.input;
    if (!cfg.S.empty())
        j["set"] = join(cfg.S);
    if (cfg.command == "estimate") {
        j["stage1_only"] = cfg.stage1_only;
        j["c_const"] = cfg.c;
        j["iid"] = cfg.iid;
    } else if (cfg.command == "bands") {
        j["draws"] = cfg.draws;
        j["c_const"] = cfg.c;
        j["iid"] = cfg.iid;
    } else if (cfg.command == "simulate") {
        j["draws"] = cfg.draws;
        j["c_const"] = cfg.c;
        j["iid"] = cfg.iid;
        j["n"] = cfg.n;
        j["p"] = cfg.p;
        j["K"] = cfg.K;
        j["L"] = cfg.L;
        j["reps"] = cfg.reps;
    } else if (cfg.command == "sensitivity") {
        j["s"] = cfg.s;
        j["u"] = cfg.u;
        j["q"] = cfg.q;
        if (!cfg.m_grid.empty())
            j["m_grid"] = join(cfg.m_grid);
    }
    return j;
}

void run(const RunConfig& cfg, std::ostream& out)
{
    json result;
    std::string table;
    if (cfg.command == "estimate")
        result = run_estimate(cfg);
    else if (cfg.command == "bands")
        result = run_bands(cfg);
    else if (cfg.command == "sensitivity")
        result = run_sensitivity(cfg);
    else if (cfg.command == "simulate")
        result = run_simulate(cfg, &table);
    else
        result = run_validate(cfg);
    result["provenance"] = provenance(cfg);
    write_artifact(cfg, result, out);
    if (!table.empty() && !cfg.output.empty())
        out << table;
}

int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    auto fail = [&](int code, const char* kind, const std::string& msg) {
        err << json{{"error", kind}, {"message", msg}, {"exit_code", code}}.dump() << "\n";
        return code;
    };
    for (const auto& a : args)
        if (a == "--help" || a == "-h") {
            out << "usage: endiv {estimate|bands|sensitivity|simulate|validate} [options]\n"
                   "  --input --output --alpha --set --draws --seed --c-const --iid --threads\n"
                   "  --tol-feas --tol-obj --max-iter --lambda-scale --stage1-only\n"
                   "  --n --p --K --L --reps --s --u --q --m-grid --config\n";
            return kOk;
        }
    RunConfig cfg;
    try {
        cfg = parse_config(args);
    } catch (const ConfigError& e) {
        return fail(kConfigError, "config", e.what());
    }
    try {
        run(cfg, out);
    } catch (const ConfigError& e) {
        return fail(kConfigError, "config", e.what());
    } catch (const ParameterError& e) {
        return fail(kConfigError, "config", e.what());
    } catch (const BudgetError& e) {
        return fail(kConfigError, "budget", e.what());
    } catch (const SchemaError& e) {
        return fail(kIoError, "schema", e.what());
    } catch (const ParseError& e) {
        return fail(kIoError, "parse", e.what());
    } catch (const std::ios_base::failure& e) {
        return fail(kIoError, "io", e.what());
    } catch (const std::exception& e) {
        return fail(kEstimationError, "estimation", e.what());
    }
    return kOk;
}

} // namespace endiv::cli
