#include "homlab/config.hpp"

#include <fstream>

#include "homlab/errors.hpp"

namespace homlab {

namespace {

using nlohmann::json;

void require_keys(const json& j, const std::string& where,
                  std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("unknown key \"" + key + "\" in " + where);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for \"") + key + "\": " +
                      e.what());
  }
}

template <typename T>
T get_req(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key))
    throw ConfigError("missing key \"" + std::string(key) + "\" in " + where);
  return get_or<T>(j, key, T{});
}

}  // namespace

CoefficientSpec ExperimentConfig::make_coefficient() const {
  switch (coeff_kind) {
    case CoeffKind::Constant:
      return CoefficientSpec::constant(coeff_value);
    case CoeffKind::Layered:
      return CoefficientSpec::layered(coeff_a, coeff_b);
    case CoeffKind::Tabulated:
      return CoefficientSpec::tabulated(geometry.resolution, coeff_table);
  }
  throw ConfigError("unreachable coefficient kind");
}

ReactionSpec ExperimentConfig::make_reaction() const {
  ReactionSpec r;
  switch (reaction_kind) {
    case ReactionKind::Zero:
      r = ReactionSpec::zero();
      break;
    case ReactionKind::Constant:
      r = ReactionSpec::constant(reaction_lambda);
      break;
    case ReactionKind::Linear:
      r = ReactionSpec::linear(reaction_lambda);
      break;
    case ReactionKind::Affine:
      r = ReactionSpec::affine(reaction_lambda);
      break;
    case ReactionKind::TanhSin:
      r = ReactionSpec::tanh_sin(reaction_lambda);
      break;
  }
  if (lipschitz_override) r.lipschitz = *lipschitz_override;
  std::mt19937_64 rng(seed);
  r.sampled_lipschitz_check(rng, 10.0);
  return r;
}

PicardOptions ExperimentConfig::picard_options() const {
  PicardOptions opt;
  opt.tol = solver.picard_tol;
  opt.n_max = solver.picard_max;
  opt.cg_tol = solver.cg_tol;
  opt.compat_tol = solver.compat_tol;
  opt.reaction_compat_tol = solver.reaction_compat_tol;
  return opt;
}

void ExperimentConfig::validate() const {
  if (schema_version != 1)
    throw ConfigError("unsupported schema_version " +
                      std::to_string(schema_version));
  geometry.validate();
  CellGeometry per_cell = geometry;
  per_cell.resolution = n_per_cell;
  per_cell.validate();
  expansion.validate();
  if (sweep_denominators.size() < 1)
    throw ConfigError("sweep needs at least one eps value");
  for (std::size_t k = 0; k < sweep_denominators.size(); ++k) {
    if (sweep_denominators[k] < 2)
      throw ConfigError("eps denominators must be >= 2");
    if (k > 0 && sweep_denominators[k] <= sweep_denominators[k - 1])
      throw ConfigError("eps values must be strictly decreasing");
  }
  if (macro_n < 2) throw ConfigError("macro resolution must be >= 2");
  if (coeff_kind == CoeffKind::Tabulated &&
      static_cast<int>(coeff_table.size()) !=
          geometry.resolution * geometry.resolution)
    throw ConfigError("tabulated coefficient needs n*n values");
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  require_keys(j, "config",
               {"schema_version", "geometry", "coefficient", "reaction",
                "expansion", "sweep", "macro", "macro_gradient", "solver",
                "output_dir", "run_name", "seed"});
  ExperimentConfig c;
  c.schema_version = get_req<int>(j, "schema_version", "config");

  const json& g = j.contains("geometry") ? j.at("geometry") : json::object();
  require_keys(g, "geometry", {"hole_half_width", "n", "n_per_cell"});
  c.geometry.hole_half_width = get_or<double>(g, "hole_half_width", 0.0);
  c.geometry.resolution = get_or<int>(g, "n", 8);
  c.n_per_cell = get_or<int>(g, "n_per_cell", c.geometry.resolution);

  if (j.contains("coefficient")) {
    const json& co = j.at("coefficient");
    require_keys(co, "coefficient", {"type", "value", "a", "b", "values"});
    const std::string type = get_req<std::string>(co, "type", "coefficient");
    if (type == "constant") {
      c.coeff_kind = CoeffKind::Constant;
      c.coeff_value = get_or<double>(co, "value", 1.0);
    } else if (type == "layered") {
      c.coeff_kind = CoeffKind::Layered;
      c.coeff_a = get_req<double>(co, "a", "coefficient");
      c.coeff_b = get_req<double>(co, "b", "coefficient");
    } else if (type == "tabulated") {
      c.coeff_kind = CoeffKind::Tabulated;
      c.coeff_table = get_req<std::vector<double>>(co, "values", "coefficient");
    } else {
      throw ConfigError("unknown coefficient type \"" + type + "\"");
    }
  }

  if (j.contains("reaction")) {
    const json& re = j.at("reaction");
    require_keys(re, "reaction", {"type", "lambda", "lipschitz"});
    const std::string type = get_req<std::string>(re, "type", "reaction");
    if (type == "zero")
      c.reaction_kind = ReactionKind::Zero;
    else if (type == "constant")
      c.reaction_kind = ReactionKind::Constant;
    else if (type == "linear")
      c.reaction_kind = ReactionKind::Linear;
    else if (type == "affine")
      c.reaction_kind = ReactionKind::Affine;
    else if (type == "tanh")
      c.reaction_kind = ReactionKind::TanhSin;
    else
      throw ConfigError("unknown reaction type \"" + type + "\"");
    c.reaction_lambda = get_or<double>(re, "lambda", 0.0);
    if (re.contains("lipschitz"))
      c.lipschitz_override = re.at("lipschitz").get<double>();
  }

  if (j.contains("expansion")) {
    const json& ex = j.at("expansion");
    require_keys(ex, "expansion", {"order", "r"});
    c.expansion.M = get_or<int>(ex, "order", 2);
    c.expansion.r = get_or<int>(ex, "r", 0);
  }

  if (j.contains("sweep")) {
    const json& sw = j.at("sweep");
    require_keys(sw, "sweep", {"eps_denominators"});
    c.sweep_denominators =
        get_req<std::vector<int>>(sw, "eps_denominators", "sweep");
  }

  if (j.contains("macro")) {
    const json& ma = j.at("macro");
    require_keys(ma, "macro", {"n"});
    c.macro_n = get_req<int>(ma, "n", "macro");
  }

  if (j.contains("macro_gradient")) {
    const auto v = j.at("macro_gradient").get<std::vector<double>>();
    if (v.size() != 2)
      throw ConfigError("macro_gradient must have 2 components");
    c.macro_gradient = {v[0], v[1]};
  }

  if (j.contains("solver")) {
    const json& so = j.at("solver");
    require_keys(so, "solver",
                 {"cg_tol", "picard_tol", "picard_max", "compat_tol",
                  "reaction_compat_tol"});
    c.solver.cg_tol = get_or<double>(so, "cg_tol", 1e-10);
    c.solver.picard_tol = get_or<double>(so, "picard_tol", 1e-10);
    c.solver.picard_max = get_or<int>(so, "picard_max", 200);
    c.solver.compat_tol = get_or<double>(so, "compat_tol", 1e-8);
    c.solver.reaction_compat_tol =
        get_or<double>(so, "reaction_compat_tol", 1e-6);
  }

  c.output_dir = get_or<std::string>(j, "output_dir", "out");
  if (j.contains("run_name"))
    c.run_name = j.at("run_name").get<std::string>();
  c.seed = get_or<std::uint64_t>(j, "seed", 42);

  c.validate();
  return c;
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = schema_version;
  j["geometry"] = {{"hole_half_width", geometry.hole_half_width},
                   {"n", geometry.resolution},
                   {"n_per_cell", n_per_cell}};
  switch (coeff_kind) {
    case CoeffKind::Constant:
      j["coefficient"] = {{"type", "constant"}, {"value", coeff_value}};
      break;
    case CoeffKind::Layered:
      j["coefficient"] = {{"type", "layered"}, {"a", coeff_a}, {"b", coeff_b}};
      break;
    case CoeffKind::Tabulated:
      j["coefficient"] = {{"type", "tabulated"}, {"values", coeff_table}};
      break;
  }
  nlohmann::ordered_json re;
  switch (reaction_kind) {
    case ReactionKind::Zero: re["type"] = "zero"; break;
    case ReactionKind::Constant: re["type"] = "constant"; break;
    case ReactionKind::Linear: re["type"] = "linear"; break;
    case ReactionKind::Affine: re["type"] = "affine"; break;
    case ReactionKind::TanhSin: re["type"] = "tanh"; break;
  }
  re["lambda"] = reaction_lambda;
  if (lipschitz_override) re["lipschitz"] = *lipschitz_override;
  j["reaction"] = re;
  j["expansion"] = {{"order", expansion.M}, {"r", expansion.r}};
  j["sweep"] = {{"eps_denominators", sweep_denominators}};
  j["macro"] = {{"n", macro_n}};
  j["macro_gradient"] = {macro_gradient.x, macro_gradient.y};
  j["solver"] = {{"cg_tol", solver.cg_tol},
                 {"picard_tol", solver.picard_tol},
                 {"picard_max", solver.picard_max},
                 {"compat_tol", solver.compat_tol},
                 {"reaction_compat_tol", solver.reaction_compat_tol}};
  j["output_dir"] = output_dir;
  if (run_name) j["run_name"] = *run_name;
  j["seed"] = seed;
  return j;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  return from_json(j);
}

}  // namespace homlab
