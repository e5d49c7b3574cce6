#pragma once

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ippal/io.hpp"
#include "ippal/mission.hpp"

namespace ippal {

// TOML-style key-value tree: [section] headers, `key = value` lines, `#`
// comments. Values are numbers, booleans, strings, or flat arrays. Unknown
// keys are rejected with a line-precise diagnostic so typos cannot silently
// fall back to defaults.
class ConfigDoc {
public:
    struct Entry {
        std::string raw;
        int line = 0;
        mutable bool consumed = false;
    };

    static ConfigDoc parse(const std::string& text) {
        ConfigDoc doc;
        std::istringstream in(text);
        std::string line;
        std::string section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string stripped = strip_comment(line);
            const std::string trimmed = trim(stripped);
            if (trimmed.empty()) continue;
            if (trimmed.front() == '[') {
                if (trimmed.back() != ']')
                    throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
                section = trim(trimmed.substr(1, trimmed.size() - 2));
                if (section.empty())
                    throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
                doc.sections_[section];
                continue;
            }
            const size_t eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": empty key");
            if (value.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": empty value for key `" + key + "`");
            if (section.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": key `" + key +
                                  "` outside any [section]");
            auto [it, inserted] = doc.sections_[section].emplace(key, Entry{value, lineno, false});
            if (!inserted)
                throw ConfigError("line " + std::to_string(lineno) + ": duplicate key `" + key + "`");
        }
        return doc;
    }

    bool has(const std::string& section, const std::string& key) const {
        const auto sit = sections_.find(section);
        return sit != sections_.end() && sit->second.count(key) > 0;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        const Entry* e = find(section, key);
        if (!e) return fallback;
        return parse_number(*e, key);
    }

    int get_int(const std::string& section, const std::string& key, int fallback) const {
        const Entry* e = find(section, key);
        if (!e) return fallback;
        const double v = parse_number(*e, key);
        if (v != static_cast<int>(v))
            throw ConfigError(where(*e) + ": key `" + key + "` must be an integer");
        return static_cast<int>(v);
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
        const Entry* e = find(section, key);
        if (!e) return fallback;
        if (e->raw == "true") return true;
        if (e->raw == "false") return false;
        throw ConfigError(where(*e) + ": key `" + key + "` must be true or false");
    }

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
        const Entry* e = find(section, key);
        if (!e) return fallback;
        return unquote(e->raw);
    }

    std::vector<double> get_list_double(const std::string& section, const std::string& key,
                                        std::vector<double> fallback) const {
        const Entry* e = find(section, key);
        if (!e) return fallback;
        std::vector<double> out;
        for (const std::string& item : split_list(*e, key)) {
            char* end = nullptr;
            const double v = std::strtod(item.c_str(), &end);
            if (end == item.c_str() || *end != '\0')
                throw ConfigError(where(*e) + ": `" + item + "` is not a number");
            out.push_back(v);
        }
        return out;
    }

    std::vector<uint64_t> get_list_seed(const std::string& section, const std::string& key,
                                        std::vector<uint64_t> fallback) const {
        const Entry* e = find(section, key);
        if (!e) return fallback;
        std::vector<uint64_t> out;
        for (const std::string& item : split_list(*e, key)) {
            char* end = nullptr;
            const unsigned long long v = std::strtoull(item.c_str(), &end, 10);
            if (end == item.c_str() || *end != '\0')
                throw ConfigError(where(*e) + ": `" + item + "` is not a seed");
            out.push_back(v);
        }
        return out;
    }

    std::vector<std::string> get_list_string(const std::string& section, const std::string& key,
                                             std::vector<std::string> fallback) const {
        const Entry* e = find(section, key);
        if (!e) return fallback;
        std::vector<std::string> out;
        for (const std::string& item : split_list(*e, key)) out.push_back(unquote(item));
        return out;
    }

    // Every key must have been consumed by a getter.
    void reject_unknown_keys() const {
        for (const auto& [section, entries] : sections_)
            for (const auto& [key, entry] : entries)
                if (!entry.consumed)
                    throw ConfigError("line " + std::to_string(entry.line) + ": unknown key `" +
                                      key + "` in section [" + section + "]");
    }

private:
    static std::string strip_comment(const std::string& line) {
        bool quoted = false;
        for (size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) return line.substr(0, i);
        }
        return line;
    }

    static std::string trim(const std::string& s) {
        size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    static std::string unquote(const std::string& s) {
        if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
            return s.substr(1, s.size() - 2);
        return s;
    }

    const Entry* find(const std::string& section, const std::string& key) const {
        const auto sit = sections_.find(section);
        if (sit == sections_.end()) return nullptr;
        const auto kit = sit->second.find(key);
        if (kit == sit->second.end()) return nullptr;
        kit->second.consumed = true;
        return &kit->second;
    }

    static std::string where(const Entry& e) { return "line " + std::to_string(e.line); }

    static double parse_number(const Entry& e, const std::string& key) {
        char* end = nullptr;
        const double v = std::strtod(e.raw.c_str(), &end);
        if (end == e.raw.c_str() || *end != '\0')
            throw ConfigError(where(e) + ": key `" + key + "` is not a number");
        return v;
    }

    std::vector<std::string> split_list(const Entry& e, const std::string& key) const {
        const std::string& raw = e.raw;
        if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']')
            throw ConfigError(where(e) + ": key `" + key + "` must be a [list]");
        std::vector<std::string> items;
        std::string current;
        for (size_t i = 1; i + 1 < raw.size(); ++i) {
            if (raw[i] == ',') {
                items.push_back(trim(current));
                current.clear();
            } else {
                current += raw[i];
            }
        }
        if (!trim(current).empty()) items.push_back(trim(current));
        for (const std::string& item : items)
            if (item.empty()) throw ConfigError(where(e) + ": empty list element");
        return items;
    }

    std::map<std::string, std::map<std::string, Entry>> sections_;
};

inline PlannerKind planner_from_name(const std::string& name) {
    for (PlannerKind kind :
         {PlannerKind::local, PlannerKind::frontier, PlannerKind::optimisation,
          PlannerKind::sampling, PlannerKind::coverage, PlannerKind::random_local,
          PlannerKind::random_global})
        if (planner_name(kind) == name) return kind;
    throw ConfigError("unknown planner `" + name + "`");
}

inline ObjectiveKind objective_from_name(const std::string& name) {
    for (ObjectiveKind kind : {ObjectiveKind::bayes_mc_dropout, ObjectiveKind::bayes_ensemble,
                               ObjectiveKind::entropy, ObjectiveKind::novelty})
        if (objective_name(kind) == name) return kind;
    throw ConfigError("unknown objective `" + name + "`");
}

// One experiment definition: a campaign template plus the planner/objective/
// seed axes and output options.
struct ExperimentConfig {
    CampaignConfig campaign;
    std::vector<PlannerKind> planners;      // benchmark axis; single entry for run
    std::vector<ObjectiveKind> objectives;  // benchmark axis
    std::vector<uint64_t> seeds = {0};
    std::string out_dir = "runs";
    int jobs = 1;

    static ExperimentConfig from_text(const std::string& text) {
        const ConfigDoc doc = ConfigDoc::parse(text);
        ExperimentConfig cfg;
        CampaignConfig& c = cfg.campaign;

        c.terrain.width_m = doc.get_double("terrain", "width_m", c.terrain.width_m);
        c.terrain.height_m = doc.get_double("terrain", "height_m", c.terrain.height_m);
        c.terrain.cell_size_m = doc.get_double("terrain", "cell_size_m", c.terrain.cell_size_m);
        c.terrain.classes = doc.get_int("terrain", "classes", c.terrain.classes);
        c.terrain.feature_dim = doc.get_int("terrain", "feature_dim", c.terrain.feature_dim);
        c.terrain.clustering_scale_cells =
            doc.get_double("terrain", "clustering_scale_cells", c.terrain.clustering_scale_cells);
        c.terrain.feature_noise =
            doc.get_list_double("terrain", "feature_noise", c.terrain.feature_noise);
        c.terrain.class_weights =
            doc.get_list_double("terrain", "class_weights", c.terrain.class_weights);

        c.camera.fov_w = doc.get_int("camera", "fov_w", c.camera.fov_w);
        c.camera.fov_h = doc.get_int("camera", "fov_h", c.camera.fov_h);
        c.camera.altitude_m = doc.get_double("camera", "altitude_m", c.camera.altitude_m);
        c.camera.gsd_m = c.terrain.cell_size_m;

        c.model.latent_dim = doc.get_int("model", "latent_dim", c.model.latent_dim);
        c.model.patch_factor = doc.get_int("model", "patch_factor", c.model.patch_factor);
        c.model.dropout_prob = doc.get_double("model", "dropout_prob", c.model.dropout_prob);
        c.model.weight_decay = doc.get_double("model", "weight_decay", c.model.weight_decay);
        c.model.learning_rate = doc.get_double("model", "learning_rate", c.model.learning_rate);
        c.model.batch_size = doc.get_int("model", "batch_size", c.model.batch_size);
        c.model.max_epochs = doc.get_int("model", "max_epochs", c.model.max_epochs);
        c.model.converge_rel_tol =
            doc.get_double("model", "converge_rel_tol", c.model.converge_rel_tol);
        c.model.converge_patience =
            doc.get_int("model", "converge_patience", c.model.converge_patience);
        c.model.ensemble_size = doc.get_int("model", "ensemble_size", c.model.ensemble_size);
        c.model.mc_samples = doc.get_int("model", "mc_samples", c.model.mc_samples);

        c.kinematics.v_max = doc.get_double("kinematics", "v_max", c.kinematics.v_max);
        c.kinematics.accel = doc.get_double("kinematics", "accel", c.kinematics.accel);

        c.planner.kind = planner_from_name(
            doc.get_string("planner", "kind", planner_name(c.planner.kind)));
        c.planner.horizon = doc.get_int("planner", "horizon", c.planner.horizon);
        c.planner.mcts_simulations =
            doc.get_int("planner", "mcts_simulations", c.planner.mcts_simulations);
        c.planner.ucb_constant = doc.get_double("planner", "ucb_constant", c.planner.ucb_constant);
        c.planner.action_step_factors =
            doc.get_list_double("planner", "action_step_factors", c.planner.action_step_factors);
        c.planner.cmaes_generations =
            doc.get_int("planner", "cmaes_generations", c.planner.cmaes_generations);
        c.planner.cmaes_sigma0_factor =
            doc.get_double("planner", "cmaes_sigma0_factor", c.planner.cmaes_sigma0_factor);
        c.planner.frontier_spacing_factor =
            doc.get_double("planner", "frontier_spacing_factor", c.planner.frontier_spacing_factor);
        c.planner.local_step_factor =
            doc.get_double("planner", "local_step_factor", c.planner.local_step_factor);
        c.planner.lattice_spacing_factor =
            doc.get_double("planner", "lattice_spacing_factor", c.planner.lattice_spacing_factor);
        c.planner.random_min_radius_factor = doc.get_double(
            "planner", "random_min_radius_factor", c.planner.random_min_radius_factor);
        c.planner.random_max_radius_factor = doc.get_double(
            "planner", "random_max_radius_factor", c.planner.random_max_radius_factor);
        c.planner.count_smoothing =
            doc.get_double("planner", "count_smoothing", c.planner.count_smoothing);

        c.objective = objective_from_name(
            doc.get_string("mission", "objective", objective_name(c.objective)));
        c.missions = doc.get_int("mission", "missions", c.missions);
        c.budget_s = doc.get_double("mission", "budget_s", c.budget_s);
        c.informed_priors = doc.get_bool("mission", "informed_priors", c.informed_priors);
        c.stream_mapping = doc.get_bool("mission", "stream_mapping", c.stream_mapping);
        const std::string split = doc.get_string(
            "mission", "split",
            c.split == SplitRegime::generalisation ? "generalisation" : "in_domain");
        if (split == "generalisation") c.split = SplitRegime::generalisation;
        else if (split == "in_domain") c.split = SplitRegime::in_domain;
        else throw ConfigError("unknown split regime `" + split + "`");
        c.test_crops = doc.get_int("mission", "test_crops", c.test_crops);
        c.knn_k = doc.get_int("mission", "knn_k", c.knn_k);
        c.start_x_factor = doc.get_double("mission", "start_x_factor", c.start_x_factor);
        c.start_y_factor = doc.get_double("mission", "start_y_factor", c.start_y_factor);

        cfg.planners.clear();
        for (const std::string& name :
             doc.get_list_string("run", "planners", {planner_name(c.planner.kind)}))
            cfg.planners.push_back(planner_from_name(name));
        cfg.objectives.clear();
        for (const std::string& name :
             doc.get_list_string("run", "objectives", {objective_name(c.objective)}))
            cfg.objectives.push_back(objective_from_name(name));
        cfg.seeds = doc.get_list_seed("run", "seeds", cfg.seeds);
        cfg.out_dir = doc.get_string("run", "out_dir", cfg.out_dir);
        cfg.jobs = doc.get_int("run", "jobs", cfg.jobs);

        doc.reject_unknown_keys();
        cfg.validate();
        return cfg;
    }

    static ExperimentConfig from_file(const std::filesystem::path& path) {
        return from_text(read_text_file(path));
    }

    void validate() const {
        if (seeds.empty()) throw ConfigError("at least one seed is required");
        if (planners.empty()) throw ConfigError("at least one planner is required");
        if (objectives.empty()) throw ConfigError("at least one objective is required");
        if (campaign.missions < 1) throw ConfigError("missions must be >= 1");
        if (campaign.budget_s < 0) throw ConfigError("budget_s must be >= 0");
        if (campaign.model.dropout_prob < 0 || campaign.model.dropout_prob >= 1)
            throw ConfigError("dropout_prob must lie in [0, 1)");
        if (jobs < 1) throw ConfigError("jobs must be >= 1");
        if (campaign.camera.fov_w % campaign.model.patch_factor != 0 ||
            campaign.camera.fov_h % campaign.model.patch_factor != 0)
            throw ConfigError("patch_factor must divide the camera field of view");
    }

    std::string serialize() const {
        std::ostringstream out;
        const CampaignConfig& c = campaign;
        out << "[terrain]\n";
        out << "width_m = " << fmt_double(c.terrain.width_m) << "\n";
        out << "height_m = " << fmt_double(c.terrain.height_m) << "\n";
        out << "cell_size_m = " << fmt_double(c.terrain.cell_size_m) << "\n";
        out << "classes = " << c.terrain.classes << "\n";
        out << "feature_dim = " << c.terrain.feature_dim << "\n";
        out << "clustering_scale_cells = " << fmt_double(c.terrain.clustering_scale_cells) << "\n";
        out << "feature_noise = " << list_of(c.terrain.feature_noise) << "\n";
        if (!c.terrain.class_weights.empty())
            out << "class_weights = " << list_of(c.terrain.class_weights) << "\n";
        out << "\n[camera]\n";
        out << "fov_w = " << c.camera.fov_w << "\n";
        out << "fov_h = " << c.camera.fov_h << "\n";
        out << "altitude_m = " << fmt_double(c.camera.altitude_m) << "\n";
        out << "\n[model]\n";
        out << "latent_dim = " << c.model.latent_dim << "\n";
        out << "patch_factor = " << c.model.patch_factor << "\n";
        out << "dropout_prob = " << fmt_double(c.model.dropout_prob) << "\n";
        out << "weight_decay = " << fmt_double(c.model.weight_decay) << "\n";
        out << "learning_rate = " << fmt_double(c.model.learning_rate) << "\n";
        out << "batch_size = " << c.model.batch_size << "\n";
        out << "max_epochs = " << c.model.max_epochs << "\n";
        out << "converge_rel_tol = " << fmt_double(c.model.converge_rel_tol) << "\n";
        out << "converge_patience = " << c.model.converge_patience << "\n";
        out << "ensemble_size = " << c.model.ensemble_size << "\n";
        out << "mc_samples = " << c.model.mc_samples << "\n";
        out << "\n[kinematics]\n";
        out << "v_max = " << fmt_double(c.kinematics.v_max) << "\n";
        out << "accel = " << fmt_double(c.kinematics.accel) << "\n";
        out << "\n[planner]\n";
        out << "kind = " << planner_name(c.planner.kind) << "\n";
        out << "horizon = " << c.planner.horizon << "\n";
        out << "mcts_simulations = " << c.planner.mcts_simulations << "\n";
        out << "ucb_constant = " << fmt_double(c.planner.ucb_constant) << "\n";
        out << "action_step_factors = " << list_of(c.planner.action_step_factors) << "\n";
        out << "cmaes_generations = " << c.planner.cmaes_generations << "\n";
        out << "cmaes_sigma0_factor = " << fmt_double(c.planner.cmaes_sigma0_factor) << "\n";
        out << "frontier_spacing_factor = " << fmt_double(c.planner.frontier_spacing_factor)
            << "\n";
        out << "local_step_factor = " << fmt_double(c.planner.local_step_factor) << "\n";
        out << "lattice_spacing_factor = " << fmt_double(c.planner.lattice_spacing_factor) << "\n";
        out << "random_min_radius_factor = " << fmt_double(c.planner.random_min_radius_factor)
            << "\n";
        out << "random_max_radius_factor = " << fmt_double(c.planner.random_max_radius_factor)
            << "\n";
        out << "count_smoothing = " << fmt_double(c.planner.count_smoothing) << "\n";
        out << "\n[mission]\n";
        out << "objective = " << objective_name(c.objective) << "\n";
        out << "missions = " << c.missions << "\n";
        out << "budget_s = " << fmt_double(c.budget_s) << "\n";
        out << "informed_priors = " << (c.informed_priors ? "true" : "false") << "\n";
        out << "stream_mapping = " << (c.stream_mapping ? "true" : "false") << "\n";
        out << "split = "
            << (c.split == SplitRegime::generalisation ? "generalisation" : "in_domain") << "\n";
        out << "test_crops = " << c.test_crops << "\n";
        out << "knn_k = " << c.knn_k << "\n";
        out << "start_x_factor = " << fmt_double(c.start_x_factor) << "\n";
        out << "start_y_factor = " << fmt_double(c.start_y_factor) << "\n";
        out << "\n[run]\n";
        out << "planners = [";
        for (size_t i = 0; i < planners.size(); ++i)
            out << (i ? ", " : "") << planner_name(planners[i]);
        out << "]\n";
        out << "objectives = [";
        for (size_t i = 0; i < objectives.size(); ++i)
            out << (i ? ", " : "") << objective_name(objectives[i]);
        out << "]\n";
        out << "seeds = [";
        for (size_t i = 0; i < seeds.size(); ++i) out << (i ? ", " : "") << seeds[i];
        out << "]\n";
        out << "out_dir = \"" << out_dir << "\"\n";
        out << "jobs = " << jobs << "\n";
        return out.str();
    }

private:
    static std::string list_of(const std::vector<double>& xs) {
        std::string out = "[";
        for (size_t i = 0; i < xs.size(); ++i) {
            if (i) out += ", ";
            out += fmt_double(xs[i]);
        }
        return out + "]";
    }
};

}  // namespace ippal
