#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "leibenson/experiments.hpp"

namespace leibenson {

// Raised for any malformed, missing, or cross-field-invalid configuration;
// the CLI maps it to its dedicated exit code.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Flat dotted-key configuration: one `section.key = value` per line, `#`
// comments, blank lines ignored.  Values stay strings until a typed getter
// pulls them; lookups are recorded so unknown keys can be reported.
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_text(ss.str(), path);
    }

    static KeyValueConfig parse_text(const std::string& text,
                                     const std::string& origin = "<config>") {
        KeyValueConfig kv;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string s = strip_comment(line);
            if (trim(s).empty()) continue;
            auto eq = s.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + trim(s) + "'");
            std::string key = trim(s.substr(0, eq));
            std::string val = trim(s.substr(eq + 1));
            if (key.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            kv.values_[key] = val;
        }
        return kv;
    }

    // `--set key=value` overrides, applied after the file.
    void apply_override(const std::string& assignment) {
        auto eq = assignment.find('=');
        if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty())
            throw ConfigError("--set expects key=value, got '" + assignment + "'");
        values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("missing required config key '" + key + "'");
        touched_.insert({key, true});
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& dflt) const {
        return has(key) ? get_string(key) : dflt;
    }

    double get_double(const std::string& key) const { return to_double(key, get_string(key)); }
    double get_double(const std::string& key, double dflt) const {
        return has(key) ? get_double(key) : dflt;
    }

    int get_int(const std::string& key) const {
        double v = get_double(key);
        int i = static_cast<int>(v);
        if (static_cast<double>(i) != v)
            throw ConfigError("config key '" + key + "' must be an integer, got '" +
                              values_.at(key) + "'");
        return i;
    }
    int get_int(const std::string& key, int dflt) const {
        return has(key) ? get_int(key) : dflt;
    }

    bool get_bool(const std::string& key) const {
        std::string v = get_string(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ConfigError("config key '" + key + "' must be a boolean, got '" + v + "'");
    }
    bool get_bool(const std::string& key, bool dflt) const {
        return has(key) ? get_bool(key) : dflt;
    }

    std::vector<double> get_double_list(const std::string& key) const {
        std::vector<double> out;
        std::istringstream in(get_string(key));
        std::string tok;
        while (std::getline(in, tok, ','))
            if (!trim(tok).empty()) out.push_back(to_double(key, trim(tok)));
        if (out.empty()) throw ConfigError("config key '" + key + "' is an empty list");
        return out;
    }
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& dflt) const {
        return has(key) ? get_double_list(key) : dflt;
    }

    std::vector<int> get_int_list(const std::string& key,
                                  const std::vector<int>& dflt) const {
        if (!has(key)) return dflt;
        std::vector<int> out;
        for (double v : get_double_list(key)) {
            int i = static_cast<int>(v);
            if (static_cast<double>(i) != v)
                throw ConfigError("config key '" + key + "' must list integers");
            out.push_back(i);
        }
        return out;
    }

    // Keys present in the file that no getter ever consulted.
    std::vector<std::string> unused_keys() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_)
            if (!touched_.count(k)) out.push_back(k);
        return out;
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    static std::string strip_comment(const std::string& s) {
        auto h = s.find('#');
        return h == std::string::npos ? s : s.substr(0, h);
    }
    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }
    static double to_double(const std::string& key, const std::string& v) {
        char* end = nullptr;
        double d = std::strtod(v.c_str(), &end);
        if (end == v.c_str() || *end != '\0')
            throw ConfigError("config key '" + key + "' must be a number, got '" + v + "'");
        return d;
    }

    std::map<std::string, std::string> values_;
    mutable std::map<std::string, bool> touched_;
};

// ---------------------------------------------------------------------------
// The resolved run configuration shared by every subcommand.

struct RunConfig {
    // energy block
    std::string energy_family = "power_law";
    FlowParams params = FlowParams::make(2.0, 2.0);

    // domain block
    bool interval_domain = true;
    double domain_l = 1.0;

    // initial-data block: either a named density or explicit particles
    std::string density = "uniform";  // uniform | bump
    std::vector<double> particles;    // non-empty overrides the density
    int N = 50;

    // integrator block
    IntegratorSpec integrator;

    // pde block
    int pde_M = 512;
    double pde_safety = 0.4;
    std::vector<double> pde_t_samples;

    // study block
    StudySpec study;

    // output block
    std::string output_dir = "out";
    int workers = 1;

    DensityProfile initial_density() const {
        if (density == "uniform") {
            double h = 0.5 / domain_l;
            return DensityProfile::piecewise_linear({-domain_l, domain_l}, {h, h});
        }
        if (density == "bump") return smooth_bump();
        throw ConfigError("initial.density must be 'uniform' or 'bump', got '" + density +
                          "'");
    }

    static RunConfig from_kv(const KeyValueConfig& kv) {
        RunConfig rc;
        rc.energy_family = kv.get_string("energy.family", "power_law");
        if (rc.energy_family != "power_law")
            throw ConfigError("energy.family: only 'power_law' is configurable, got '" +
                              rc.energy_family + "'");
        double p = kv.get_double("energy.p");
        double gamma = kv.get_double("energy.gamma");
        if (!(p > 1.0)) throw ConfigError("energy.p must be > 1");
        if (!(gamma + 1.0 - p > 0.0))
            throw ConfigError("energy.gamma: need gamma + 1 - p > 0 for power_law (got p=" +
                              format_float(p) + ", gamma=" + format_float(gamma) + ")");
        rc.params = FlowParams::make(p, gamma);

        std::string kind = kv.get_string("domain.kind", "interval");
        if (kind != "interval" && kind != "whole_line")
            throw ConfigError("domain.kind must be 'interval' or 'whole_line'");
        rc.interval_domain = kind == "interval";
        rc.domain_l = kv.get_double("domain.l", 1.0);
        if (!(rc.domain_l > 0.0)) throw ConfigError("domain.l must be > 0");

        rc.density = kv.get_string("initial.density", "uniform");
        if (kv.has("initial.particles")) rc.particles = kv.get_double_list("initial.particles");
        rc.N = kv.get_int("initial.N", 50);
        if (rc.particles.empty()) {
            if (rc.N < 2) throw ConfigError("initial.N must be >= 2");
            rc.initial_density();  // reject unknown density names early
        } else {
            for (std::size_t i = 1; i < rc.particles.size(); ++i)
                if (!(rc.particles[i] > rc.particles[i - 1]))
                    throw ConfigError("initial.particles must be strictly increasing");
        }

        std::string scheme = kv.get_string("integrator.scheme", "explicit");
        if (scheme == "explicit")
            rc.integrator.scheme = IntegratorSpec::Scheme::explicit_descent;
        else if (scheme == "minimizing_movement")
            rc.integrator.scheme = IntegratorSpec::Scheme::minimizing_movement;
        else
            throw ConfigError(
                "integrator.scheme must be 'explicit' or 'minimizing_movement'");
        rc.integrator.dt = kv.get_double("integrator.dt", 1e-3);
        rc.integrator.t_end = kv.get_double("integrator.t_end", 0.1);
        rc.integrator.adaptive = kv.get_bool("integrator.adapt", true);
        rc.integrator.safety = kv.get_double("integrator.safety", 1.0);
        rc.integrator.record_every = kv.get_int("integrator.record_every", 1);
        rc.integrator.pinned = kv.get_bool("integrator.pinned", rc.interval_domain);
        try {
            rc.integrator.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("integrator block: ") + e.what());
        }

        rc.pde_M = kv.get_int("pde.M", 512);
        rc.pde_safety = kv.get_double("pde.safety", 0.4);
        rc.pde_t_samples = kv.get_double_list("pde.t_samples", {});
        if (rc.pde_M < 8) throw ConfigError("pde.M must be >= 8");
        if (!(rc.pde_safety > 0.0 && rc.pde_safety <= 1.0))
            throw ConfigError("pde.safety must be in (0, 1]");

        rc.workers = kv.get_int("output.workers", 1);
        if (rc.workers < 1) throw ConfigError("output.workers must be >= 1");
        rc.output_dir = kv.get_string("output.dir", "out");

        rc.study.params = rc.params;
        if (kv.has("study.kind")) {
            try {
                rc.study.study = StudySpec::kind_from_name(kv.get_string("study.kind"));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
        }
        rc.study.N_list = kv.get_int_list("study.N_list", rc.study.N_list);
        rc.study.dt = kv.get_double("study.dt", rc.study.dt);
        rc.study.t_end = kv.get_double("study.t_end", rc.study.t_end);
        rc.study.t_samples = kv.get_double_list("study.t_samples", rc.study.t_samples);
        rc.study.pde_M = kv.get_int("study.pde_M", rc.pde_M);
        rc.study.workers = rc.workers;
        rc.study.seed = static_cast<unsigned>(kv.get_int("study.seed", 987654321));
        try {
            rc.study.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("study block: ") + e.what());
        }
        return rc;
    }
};

}  // namespace leibenson
