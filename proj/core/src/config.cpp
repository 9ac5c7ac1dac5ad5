#include "stepscale/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "stepscale/errors.hpp"

namespace stepscale {

namespace {

nlohmann::json load_with_includes(const std::filesystem::path& path, std::set<std::filesystem::path>& active) {
  const auto canonical = std::filesystem::weakly_canonical(path);
  if (!active.insert(canonical).second) throw ConfigError("config include cycle at " + path.string());

  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config " + path.string() + " must be a JSON object");

  nlohmann::json merged = nlohmann::json::object();
  if (doc.contains("include")) {
    nlohmann::json inc = doc["include"];
    if (inc.is_string()) inc = nlohmann::json::array({inc});
    for (const auto& item : inc) {
      const auto included = path.parent_path() / item.get<std::string>();
      merged.merge_patch(load_with_includes(included, active));
    }
    doc.erase("include");
  }
  merged.merge_patch(doc);
  active.erase(canonical);
  return merged;
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

nlohmann::json load_config_json(const std::filesystem::path& path) {
  std::set<std::filesystem::path> active;
  return load_with_includes(path, active);
}

StudyConfig study_config_from_json(const nlohmann::json& j) {
  try {
    StudyConfig c;
    c.profile = get_or<std::string>(j, "profile", c.profile);
    c.budget = get_or<std::size_t>(j, "budget", c.budget);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.workers = get_or<std::size_t>(j, "workers", c.workers);

    const auto& w = j.at("workload");
    Workload& wl = c.workload;
    wl.id = get_or<std::string>(w, "id", wl.id);
    wl.goal_error = w.at("goal_error").get<double>();
    wl.eval_interval = get_or<std::int64_t>(w, "eval_interval", wl.eval_interval);
    wl.max_steps = get_or<std::int64_t>(w, "max_steps", wl.max_steps);
    wl.divergence_factor = get_or<double>(w, "divergence_factor", wl.divergence_factor);
    wl.default_momentum = get_or<double>(w, "default_momentum", wl.default_momentum);
    wl.model = w.at("model").get<ModelSpec>();
    if (w.contains("optimizer")) {
      const auto& o = w.at("optimizer");
      wl.algorithm = parse_algorithm(get_or<std::string>(o, "algorithm", "sgd"));
      if (o.contains("schedule")) wl.schedule = o.at("schedule").get<ScheduleSpec>();
    }
    wl.search_space = w.at("search_space").get<std::vector<SearchDimension>>();

    const auto& d = w.at("data");
    DataSource& ds = wl.data;
    ds.kind = get_or<std::string>(d, "kind", ds.kind);
    ds.seed = get_or<std::uint64_t>(d, "seed", ds.seed);
    ds.validation_fraction = get_or<double>(d, "validation_fraction", ds.validation_fraction);
    if (ds.kind == "synth") {
      ds.synth.classes = get_or<std::size_t>(d, "classes", ds.synth.classes);
      ds.synth.dims = get_or<std::size_t>(d, "dims", ds.synth.dims);
      ds.synth.per_class = get_or<std::size_t>(d, "per_class", ds.synth.per_class);
      ds.synth.clusters_per_class = get_or<std::size_t>(d, "clusters_per_class", ds.synth.clusters_per_class);
      ds.synth.separation = get_or<double>(d, "separation", ds.synth.separation);
      ds.synth.noise = get_or<double>(d, "noise", ds.synth.noise);
      ds.synth.scale_ratio = get_or<double>(d, "scale_ratio", ds.synth.scale_ratio);
      ds.synth.offset = get_or<double>(d, "offset", ds.synth.offset);
      ds.synth.rotate = get_or<bool>(d, "rotate", ds.synth.rotate);
    } else {
      ds.images = get_or<std::string>(d, "images", ds.images);
      ds.labels = get_or<std::string>(d, "labels", ds.labels);
      ds.num_classes = get_or<std::size_t>(d, "num_classes", ds.num_classes);
      ds.limit = get_or<std::size_t>(d, "limit", ds.limit);
    }

    const auto& g = j.at("grid");
    c.batch_sizes = g.at("batch_sizes").get<std::vector<std::size_t>>();
    c.sparsities = g.at("sparsities").get<std::vector<double>>();

    if (j.contains("lipschitz")) {
      const auto& l = j.at("lipschitz");
      auto& ls = c.lipschitz;
      ls.stride = get_or<std::int64_t>(l, "stride", ls.stride);
      ls.steps = get_or<std::int64_t>(l, "steps", ls.steps);
      ls.delta = get_or<double>(l, "delta", ls.delta);
      ls.batch_size = get_or<std::size_t>(l, "batch_size", ls.batch_size);
      ls.seed = get_or<std::uint64_t>(l, "seed", ls.seed);
      if (l.contains("metaparams")) ls.metaparams = l.at("metaparams").get<Metaparams>();
      if (l.contains("sparsities")) ls.sparsities = l.at("sparsities").get<std::vector<double>>();
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed study config: ") + e.what());
  }
}

nlohmann::json to_json(const StudyConfig& c) {
  const Workload& w = c.workload;
  nlohmann::json data = {{"kind", w.data.kind}, {"seed", w.data.seed}, {"validation_fraction", w.data.validation_fraction}};
  if (w.data.kind == "synth") {
    data.update({{"classes", w.data.synth.classes},
                 {"dims", w.data.synth.dims},
                 {"per_class", w.data.synth.per_class},
                 {"clusters_per_class", w.data.synth.clusters_per_class},
                 {"separation", w.data.synth.separation},
                 {"noise", w.data.synth.noise},
                 {"scale_ratio", w.data.synth.scale_ratio},
                 {"offset", w.data.synth.offset},
                 {"rotate", w.data.synth.rotate}});
  } else {
    data.update({{"images", w.data.images}, {"labels", w.data.labels}, {"num_classes", w.data.num_classes},
                 {"limit", w.data.limit}});
  }
  return {
      {"profile", c.profile},
      {"budget", c.budget},
      {"seed", c.seed},
      {"workers", c.workers},
      {"workload",
       {{"id", w.id},
        {"goal_error", w.goal_error},
        {"eval_interval", w.eval_interval},
        {"max_steps", w.max_steps},
        {"divergence_factor", w.divergence_factor},
        {"default_momentum", w.default_momentum},
        {"model", w.model},
        {"optimizer", {{"algorithm", to_string(w.algorithm)}, {"schedule", w.schedule}}},
        {"search_space", w.search_space},
        {"data", data}}},
      {"grid", {{"batch_sizes", c.batch_sizes}, {"sparsities", c.sparsities}}},
      {"lipschitz",
       {{"stride", c.lipschitz.stride},
        {"steps", c.lipschitz.steps},
        {"delta", c.lipschitz.delta},
        {"batch_size", c.lipschitz.batch_size},
        {"seed", c.lipschitz.seed},
        {"metaparams", c.lipschitz.metaparams},
        {"sparsities", c.lipschitz.sparsities}}},
  };
}

StudyConfig load_study_config(const std::filesystem::path& path) {
  StudyConfig c = study_config_from_json(load_config_json(path));
  c.validate();
  return c;
}

void apply_grid_override(StudyConfig& config, const std::string& spec) {
  std::istringstream parts(spec);
  std::string part;
  while (std::getline(parts, part, ';')) {
    if (part.empty()) continue;
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw ConfigError("grid override '" + part + "' lacks '='");
    const std::string name = part.substr(0, eq);
    std::istringstream values(part.substr(eq + 1));
    std::string v;
    try {
      if (name == "B") {
        config.batch_sizes.clear();
        while (std::getline(values, v, ',')) config.batch_sizes.push_back(std::stoull(v));
      } else if (name == "s") {
        config.sparsities.clear();
        while (std::getline(values, v, ',')) config.sparsities.push_back(std::stod(v));
      } else {
        throw ConfigError("grid override names unknown axis '" + name + "' (expected B or s)");
      }
    } catch (const std::logic_error&) {
      throw ConfigError("grid override '" + part + "' has a malformed number");
    }
  }
}

}  // namespace stepscale
