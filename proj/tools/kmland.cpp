// kmland: build and analyse K-means solution landscapes.
//
//   kmland explore  --data iris.csv --labels class --k 3 --starts 10000 --out run/
//   kmland connect  --out run/ --budget 200
//   kmland rates | path | dgraph | frustration | compare | validate  --out run/
//
// explore writes <out>/minima.json, connect writes <out>/network.json; the other commands read
// --db, or the network database in --out (falling back to the minima database).

#include "kmland/analysis.hpp"
#include "kmland/config.hpp"
#include "kmland/database.hpp"
#include "kmland/explore.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace kmland;

namespace {

enum Exit { kOk = 0, kViolations = 1, kConfig = 2, kMissingInput = 3, kPartial = 4 };

// Result of a command that produced its artifacts but could not finish the job.
struct PartialResult : Error {
    using Error::Error;
};

struct Args {
    std::string config_file, db;
    std::map<std::string, std::string> overrides;  // flag name -> value, only flags actually given
    std::vector<int> sources, sinks;
    int a = -1, b = -1;
    std::string colour = "auto", class_label;
    int levels = 100;
    double t_min = 1e-2, t_max = 1e3;
    int t_points = 51;
};

const std::vector<std::pair<std::string, std::string>> kFlags{
    {"data", "data CSV (header row)"},
    {"labels", "ground-truth column name"},
    {"outliers", "headerless CSV of outlier rows"},
    {"n-outliers", "number of outlier rows to append (default: all)"},
    {"k", "number of clusters"},
    {"starts", "random starts for explore"},
    {"seed", "RNG seed"},
    {"sigma", "seam penalty strength"},
    {"alpha", "seam penalty smoothing"},
    {"temp", "temperature for rates and paths"},
    {"budget", "connection attempts for connect"},
    {"out", "output directory"},
    {"threads", "worker threads for explore"},
};

void add_common(CLI::App& cmd, Args& args) {
    cmd.add_option("--config", args.config_file, "key = value config file (flags override it)");
    cmd.add_option("--db", args.db, "database to read");
    for (const auto& [name, help] : kFlags) {
        cmd.add_option_function<std::string>(
            "--" + name, [&args, name](const std::string& v) { args.overrides[name] = v; }, help)
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
}

RunConfig make_config(const Args& args) {
    RunConfig c;
    if (!args.config_file.empty()) read_config_file(c, args.config_file);
    for (const auto& [key, value] : args.overrides) set_option(c, key, value);
    validate(c);
    return c;
}

void log_line(const std::string& command, const RunConfig& c, double seconds, const std::string& counts) {
    std::ostringstream s;
    s.precision(3);
    s << "kmland " << command << " seed=" << c.seed << " config=" << config_hash(c) << " wall=" << std::fixed
      << seconds << "s " << counts;
    std::cerr << s.str() << '\n';
}

std::string provenance(const RunConfig& c) {
    return "config_hash=" + config_hash(c) + " seed=" + std::to_string(c.seed);
}

Dataset load_dataset(const RunConfig& c) {
    if (c.data.empty()) throw ConfigError("no dataset given (--data)");
    if (!fs::exists(c.data)) throw InputError("data file not found: " + c.data);
    Dataset d = load_csv(c.data, c.labels.empty() ? std::nullopt : std::optional<std::string>(c.labels));
    if (!c.outliers.empty()) {
        auto rows = load_outlier_rows(c.outliers, d.n_features());
        const auto n = c.n_outliers ? static_cast<std::size_t>(*c.n_outliers) : rows.size();
        if (n > rows.size()) throw ConfigError("n-outliers exceeds the rows in " + c.outliers);
        d = append_outliers(d, std::span(rows).first(n));
    } else if (c.n_outliers && *c.n_outliers > 0) {
        throw ConfigError("n-outliers given without an outlier file");
    }
    return d;
}

std::string default_db(const RunConfig& c, const Args& args, bool network_only) {
    if (!args.db.empty()) return args.db;
    const auto net = (fs::path(c.out) / "network.json").string();
    if (network_only || fs::exists(net)) return net;
    return (fs::path(c.out) / "minima.json").string();
}

Database open_db(const std::string& path) {
    if (!fs::exists(path)) throw InputError("database not found: " + path);
    return load_db(path);
}

// Fills dataset settings the command line left unset from the database's recorded config.
RunConfig with_db_dataset(RunConfig c, const Database& db) {
    if (!c.data.empty()) return c;
    const auto& j = db.config;
    c.data = j.value("data", "");
    c.labels = j.value("labels", "");
    c.outliers = j.value("outliers", "");
    if (j.contains("n_outliers") && !j["n_outliers"].is_null()) c.n_outliers = j["n_outliers"].get<int>();
    return c;
}

Dataset dataset_for(const RunConfig& c, const Database& db) {
    Dataset d = load_dataset(c);
    if (dataset_hash(d) != db.dataset_hash) throw ConfigError("dataset does not match the one the database was built from");
    return d;
}

std::ofstream open_out(const fs::path& p) {
    fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
    std::ofstream out(p);
    if (!out) throw InputError("cannot write " + p.string());
    out.precision(17);
    return out;
}

// Downstream artifacts carry the provenance of the database they were computed from.
std::string provenance(const Database& db) {
    return "config_hash=" + db.config_hash + " seed=" + std::to_string(db.seed);
}

int gm_id(const Database& db) {
    if (db.net.minima.empty()) throw InputError("database holds no minima");
    return db.net.minima.global_minimum();
}

void require_connected(const Database& db, int a, int b) {
    const auto comp = components(db.net);
    if (comp[static_cast<std::size_t>(a)] != comp[static_cast<std::size_t>(b)]) {
        throw PartialResult("minima " + std::to_string(a) + " and " + std::to_string(b) +
                            " are not connected in this network; run connect with a larger budget");
    }
}

void check_id(const Database& db, int id) {
    if (id < 0 || id >= static_cast<int>(db.net.minima.size())) {
        throw ConfigError("no minimum with id " + std::to_string(id));
    }
}

// Commands -------------------------------------------------------------------

int cmd_explore(const Args& args) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig c = make_config(args);
    const Dataset d = load_dataset(c);
    Database db;
    db.dataset_hash = dataset_hash(d);
    db.k = c.k;
    db.seed = c.seed;
    db.config_hash = config_hash(c);
    db.config = to_json(c);
    const auto r = explore(d, c.k, c.starts, c.seed, db.net.minima, c.threads);
    const fs::path out = fs::path(c.out) / "minima.json";
    fs::create_directories(c.out);
    save_db(out.string(), db);

    auto csv = open_out(fs::path(c.out) / "minima.csv");
    csv << "# " << provenance(c) << '\n' << "min_id,J,ARI,structure_type_id\n";
    for (const auto& m : db.net.minima.records()) {
        csv << m.id << ',' << m.cost << ',';
        if (d.ground_truth) csv << accuracy(m, d);
        csv << ',' << structure_type(m, d).canonical_id << '\n';
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_line("explore", c, secs,
             "starts=" + std::to_string(r.starts) + " minima=" + std::to_string(db.net.minima.size()) +
                 " duplicates=" + std::to_string(r.duplicates) + " empty_cluster=" + std::to_string(r.empty_cluster) +
                 " not_converged=" + std::to_string(r.not_converged));
    return kOk;
}

int cmd_connect(const Args& args) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig c = make_config(args);
    const std::string in = args.db.empty() ? (fs::path(c.out) / "minima.json").string() : args.db;
    Database db = open_db(in);
    c = with_db_dataset(c, db);
    const Dataset d = dataset_for(c, db);
    const auto r = grow_connected(d.points, find_sites(d.points), db.net, c.budget, {c.sigma, c.alpha});
    db.config_hash = config_hash(c);
    db.config = to_json(c);
    fs::create_directories(c.out);
    save_db((fs::path(c.out) / "network.json").string(), db);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_line("connect", c, secs,
             "attempts=" + std::to_string(r.attempts) + " minima=" + std::to_string(db.net.minima.size()) +
                 " minima_found=" + std::to_string(r.minima_found) + " ts=" + std::to_string(db.net.transition_states.size()) +
                 " ts_found=" + std::to_string(r.ts_found) + " searches=" + std::to_string(r.searches) +
                 " searches_failed=" + std::to_string(r.failed_searches) + " components=" + std::to_string(r.components));
    if (!r.connected) {
        throw PartialResult(std::string("network has ") + std::to_string(r.components) + " components after " +
                            std::to_string(r.attempts) + " attempts" + (r.exhausted ? " (no untried pairs left)" : ""));
    }
    return kOk;
}

int cmd_rates(const Args& args) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig c = make_config(args);
    const Database db = open_db(default_db(c, args, true));
    const int gm = gm_id(db);
    std::set<int> sink(args.sinks.begin(), args.sinks.end());
    if (sink.empty()) sink.insert(gm);
    for (int s : sink) check_id(db, s);
    const RateParams p{c.temperature};
    const auto comp = components(db.net);
    auto out = open_out(fs::path(c.out) / "rates.csv");
    out << "# " << provenance(db) << " temperature=" << c.temperature << '\n' << "kind,sources,sink,rate\n";
    auto ids = [](const std::set<int>& s) {
        std::string t;
        for (int i : s) t += (t.empty() ? "" : " ") + std::to_string(i);
        return t;
    };
    bool partial = false;
    if (!args.sources.empty()) {
        const std::set<int> sources(args.sources.begin(), args.sources.end());
        for (int s : sources) {
            check_id(db, s);
            require_connected(db, s, *sink.begin());
        }
        out << "set," << ids(sources) << ',' << ids(sink) << ',' << overall_rate(db.net, sources, sink, p) << '\n';
    }
    int traps = 0;
    for (const auto& m : db.net.minima.records()) {
        if (sink.count(m.id)) continue;
        bool reachable = false;
        for (int s : sink) reachable = reachable || comp[static_cast<std::size_t>(s)] == comp[static_cast<std::size_t>(m.id)];
        if (!reachable) {
            partial = true;
            out << "escape," << m.id << ',' << ids(sink) << ",nan\n";
            continue;
        }
        out << "escape," << m.id << ',' << ids(sink) << ',' << overall_rate(db.net, {m.id}, sink, p) << '\n';
        ++traps;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_line("rates", c, secs, "minima=" + std::to_string(db.net.minima.size()) + " escape_rates=" + std::to_string(traps));
    if (partial) throw PartialResult("some minima are not connected to the sink; their rates are nan");
    return kOk;
}

int cmd_path(const Args& args) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig c = make_config(args);
    const Database db = open_db(default_db(c, args, true));
    c = with_db_dataset(c, db);
    const Dataset d = dataset_for(c, db);
    const int gm = gm_id(db);
    const int sink = args.sinks.empty() ? gm : args.sinks.front();
    int source = args.sources.empty() ? -1 : args.sources.front();
    if (source < 0) {
        // lowest-cost minimum other than the sink, in the sink's component
        const auto comp = components(db.net);
        for (const auto& m : db.net.minima.records()) {
            if (m.id == sink || comp[static_cast<std::size_t>(m.id)] != comp[static_cast<std::size_t>(sink)]) continue;
            if (source < 0 || m.cost < db.net.minima[source].cost) source = m.id;
        }
        if (source < 0) throw PartialResult("no minimum is connected to the sink");
    }
    check_id(db, source);
    check_id(db, sink);
    require_connected(db, source, sink);
    const auto path = fastest_path(db.net, source, sink, {c.temperature});
    std::string cls = args.class_label;
    if (cls.empty() && d.ground_truth && !d.class_names.empty()) cls = d.class_names.front();
    auto out = open_out(fs::path(c.out) / "path.csv");
    out << "# " << provenance(db) << " temperature=" << c.temperature << " weight=" << path.weight
        << " partition_class=" << cls << '\n';
    out << "step,stationary_point_kind,id,J,structure_type_change,partition_change\n";
    int prev_type = -1, prev_sig = -1;
    for (std::size_t s = 0; s < path.steps.size(); ++s) {
        const auto& st = path.steps[s];
        out << s << ',' << (st.is_minimum ? "minimum" : "ts") << ',' << st.id << ',' << st.cost << ',';
        if (!st.is_minimum) {
            out << ",\n";
            continue;
        }
        const auto& m = db.net.minima[st.id];
        const int type = structure_type(m, d).canonical_id;
        const int sig = cls.empty() ? -1 : partition_signature(m, d, cls);
        out << (prev_type >= 0 && type != prev_type ? 1 : 0) << ',';
        if (!cls.empty()) out << (prev_sig >= 0 && sig != prev_sig ? 1 : 0);
        out << '\n';
        prev_type = type;
        prev_sig = sig;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_line("path", c, secs, "source=" + std::to_string(source) + " sink=" + std::to_string(sink) +
                                  " steps=" + std::to_string(path.steps.size()));
    return kOk;
}

int cmd_dgraph(const Args& args) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig c = make_config(args);
    const Database db = open_db(default_db(c, args, false));
    c = with_db_dataset(c, db);
    std::string colour = args.colour;
    LeafColouring colouring;
    if (colour != "none") {
        const Dataset d = dataset_for(c, db);
        if (colour == "auto") colour = d.n_outliers() > 0 ? "structure" : d.ground_truth ? "ari" : "none";
        for (const auto& m : db.net.minima.records()) {
            if (colour == "structure") colouring.values.push_back(structure_type(m, d).canonical_id);
            else if (colour == "ari") colouring.values.push_back(accuracy(m, d));
            else if (colour == "partition") {
                const std::string cls = args.class_label.empty() && !d.class_names.empty() ? d.class_names.front() : args.class_label;
                colouring.values.push_back(partition_signature(m, d, cls));
            } else if (colour != "none") {
                throw ConfigError("unknown colouring: " + colour);
            }
        }
        colouring.categorical = colour == "structure" || colour == "partition";
    }
    const auto tree = build_disconnectivity(db.net, args.levels);
    const auto layout = layout_disconnectivity(tree);
    const fs::path path = fs::path(c.out) / "dgraph.svg";
    auto svg = open_out(path);
    svg << "<!-- " << provenance(db) << " colouring=" << colour << " -->\n" << disconnectivity_svg(tree, layout, colouring);
    auto side = disconnectivity_json(tree, layout, colouring);
    side["config_hash"] = db.config_hash;
    side["seed"] = db.seed;
    side["colouring"] = colour;
    open_out(path.string() + ".json") << side.dump(1) << '\n';
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_line("dgraph", c, secs, "minima=" + std::to_string(db.net.minima.size()) + " ts=" +
                                    std::to_string(db.net.transition_states.size()) + " levels=" + std::to_string(args.levels));
    return kOk;
}

int cmd_frustration(const Args& args) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig c = make_config(args);
    const Database db = open_db(default_db(c, args, false));
    if (!(args.t_min > 0.0) || !(args.t_max > args.t_min) || args.t_points < 2) throw ConfigError("bad temperature grid");
    std::vector<double> grid;
    for (int i = 0; i < args.t_points; ++i) {
        grid.push_back(args.t_min * std::pow(args.t_max / args.t_min, static_cast<double>(i) / (args.t_points - 1)));
    }
    const auto profile = frustration_profile(db.net, grid);
    auto out = open_out(fs::path(c.out) / "frustration.csv");
    out << "# " << provenance(db) << " entropy of Boltzmann occupation of minima, p_i ~ exp(-J_i/T)\n" << "T,S\n";
    for (std::size_t i = 0; i < grid.size(); ++i) out << profile.temperatures[i] << ',' << profile.entropy[i] << '\n';
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_line("frustration", c, secs, "minima=" + std::to_string(db.net.minima.size()) + " points=" + std::to_string(grid.size()));
    return kOk;
}

int cmd_compare(const Args& args) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig c = make_config(args);
    const Database db = open_db(default_db(c, args, false));
    check_id(db, args.a);
    check_id(db, args.b);
    if (args.a == args.b) throw ConfigError("compare needs two different minima");
    const auto& ma = db.net.minima[args.a];
    const auto& mb = db.net.minima[args.b];
    const double ri = rand_index(ma.labels, mb.labels), ari = adjusted_rand_index(ma.labels, mb.labels);
    const auto comp = components(db.net);
    const bool linked = comp[static_cast<std::size_t>(args.a)] == comp[static_cast<std::size_t>(args.b)];
    const double rate = linked ? overall_rate(db.net, {args.a}, {args.b}, {c.temperature}) : std::nan("");
    auto out = open_out(fs::path(c.out) / "compare.csv");
    out << "# " << provenance(db) << " temperature=" << c.temperature << '\n' << "a,b,RI,ARI,rate\n";
    out << args.a << ',' << args.b << ',' << ri << ',' << ari << ',' << rate << '\n';
    std::cout.precision(10);
    std::cout << "RI " << ri << "\nARI " << ari << "\nrate " << rate << '\n';
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_line("compare", c, secs, "a=" + std::to_string(args.a) + " b=" + std::to_string(args.b));
    if (!linked) throw PartialResult("minima are not connected; rate is nan");
    return kOk;
}

int cmd_validate(const Args& args) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig c = make_config(args);
    const std::string path = default_db(c, args, false);
    if (!fs::exists(path)) throw InputError("database not found: " + path);
    if (c.data.empty()) {
        const auto j = nlohmann::json::parse(std::ifstream(path), nullptr, false);
        if (j.is_discarded() || !j.contains("config")) throw InputError(path + ": corrupt database");
        Database shell;
        shell.config = j["config"];
        c = with_db_dataset(c, shell);
    }
    const Dataset d = load_dataset(c);
    const auto report = validate_db(path, d);
    for (const auto& v : report.violations) std::cout << v << '\n';
    std::cout << path << ": " << report.minima << " minima, " << report.transition_states << " transition states, "
              << report.violations.size() << " violations\n";
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_line("validate", c, secs, "violations=" + std::to_string(report.violations.size()));
    return report.ok() ? kOk : kViolations;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Build and analyse K-means solution landscapes"};
    app.require_subcommand(1);
    Args args;
    std::map<CLI::App*, int (*)(const Args&)> commands;
    auto add = [&](const std::string& name, const std::string& help, int (*fn)(const Args&)) {
        CLI::App* cmd = app.add_subcommand(name, help);
        add_common(*cmd, args);
        commands[cmd] = fn;
        return cmd;
    };
    add("explore", "sample random starts, minimise and store distinct minima", cmd_explore);
    add("connect", "search transition states until the minima form one network", cmd_connect);
    auto* rates = add("rates", "set-to-set and trap escape rates (CSV)", cmd_rates);
    auto* path = add("path", "fastest path profile between two minima (CSV)", cmd_path);
    auto* dgraph = add("dgraph", "disconnectivity graph (SVG + JSON geometry)", cmd_dgraph);
    auto* frus = add("frustration", "entropy of minima occupation versus temperature (CSV)", cmd_frustration);
    auto* compare = add("compare", "RI, ARI and rate between two minima", cmd_compare);
    add("validate", "re-check every stored record", cmd_validate);
    for (auto* cmd : {rates, path}) {
        cmd->add_option("--source", args.sources, "source minimum id(s)");
        cmd->add_option("--sink", args.sinks, "sink minimum id(s) (default: global minimum)");
    }
    path->add_option("--class", args.class_label, "class for the partition-change column");
    dgraph->add_option("--colour", args.colour, "auto, none, structure, ari or partition");
    dgraph->add_option("--class", args.class_label, "class for partition colouring");
    dgraph->add_option("--levels", args.levels, "threshold levels");
    frus->add_option("--tmin", args.t_min, "lowest temperature");
    frus->add_option("--tmax", args.t_max, "highest temperature");
    frus->add_option("--tpoints", args.t_points, "log-spaced grid points");
    compare->add_option("--a", args.a, "first minimum id")->required();
    compare->add_option("--b", args.b, "second minimum id")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }
    for (const auto& [cmd, fn] : commands) {
        if (!cmd->parsed()) continue;
        try {
            return fn(args);
        } catch (const PartialResult& e) {
            std::cerr << "kmland: partial result: " << e.what() << '\n';
            return kPartial;
        } catch (const ConfigError& e) {
            std::cerr << "kmland: config error: " << e.what() << '\n';
            return kConfig;
        } catch (const PreconditionError& e) {
            std::cerr << "kmland: config error: " << e.what() << '\n';
            return kConfig;
        } catch (const InputError& e) {
            std::cerr << "kmland: missing or unreadable input: " << e.what() << '\n';
            return kMissingInput;
        } catch (const std::exception& e) {
            std::cerr << "kmland: error: " << e.what() << '\n';
            return kConfig;
        }
    }
    return kOk;
}
