#include <charconv>

#include "aaa/error.hpp"
#include "aaa/pipeline.hpp"

namespace aaa {

ZCrop parse_z_crop(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("z-crop must be LO:HI, got '" + text + "'");
  auto parse = [&](std::string_view s) {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty())
      throw std::invalid_argument("z-crop must be LO:HI, got '" + text + "'");
    return v;
  };
  const std::string_view sv(text);
  ZCrop c{parse(sv.substr(0, colon)), parse(sv.substr(colon + 1))};
  if (c.lo >= c.hi)
    throw std::invalid_argument("z-crop needs LO < HI, got '" + text + "'");
  return c;
}

bool RunConfig::operator==(const RunConfig& o) const {
  return to_json(*this) == to_json(o);
}

Json to_json(const RunConfig& c) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["network"] = to_json(c.network);
  j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                    {"rho", c.optimizer.rho},
                    {"eps", c.optimizer.eps}};
  j["seed"] = c.seed;
  j["epochs"] = c.epochs;
  j["folds"] = {{"k", c.folds}, {"rotation", c.fold_rotation},
                {"seed", c.fold_seed}};
  j["split"] = c.split ? Json{{"train", c.split->train},
                               {"validation", c.split->validation},
                               {"test", c.split->test}}
                        : Json(nullptr);
  j["z_crop"] = c.z_crop ? Json{c.z_crop->lo, c.z_crop->hi} : Json(nullptr);
  j["threshold"] = c.threshold;
  j["corpus_dir"] = c.corpus_dir;
  j["threads"] = c.threads;
  return j;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  try {
    if (j.value("format_version", kFormatVersion) != kFormatVersion)
      throw DataError("unsupported run config format_version");
    if (j.contains("network")) c.network = unet_config_from_json(j["network"]);
    if (j.contains("optimizer")) {
      const Json& o = j["optimizer"];
      c.optimizer.learning_rate =
          o.value("learning_rate", c.optimizer.learning_rate);
      c.optimizer.rho = o.value("rho", c.optimizer.rho);
      c.optimizer.eps = o.value("eps", c.optimizer.eps);
    }
    c.seed = j.value("seed", c.seed);
    c.epochs = j.value("epochs", c.epochs);
    if (j.contains("folds")) {
      const Json& f = j["folds"];
      c.folds = f.value("k", c.folds);
      c.fold_rotation = f.value("rotation", c.fold_rotation);
      c.fold_seed = f.value("seed", c.fold_seed);
    }
    if (j.contains("split") && !j["split"].is_null()) {
      const Json& sp = j["split"];
      FoldSplit split;
      split.train = sp.at("train").get<std::vector<std::string>>();
      split.validation = sp.at("validation").get<std::vector<std::string>>();
      split.test = sp.value("test", std::vector<std::string>{});
      c.split = std::move(split);
    }
    if (j.contains("z_crop") && !j["z_crop"].is_null()) {
      const Json& z = j["z_crop"];
      if (z.is_string()) {
        c.z_crop = parse_z_crop(z.get<std::string>());
      } else {
        if (z.size() != 2) throw DataError("z_crop needs two values");
        c.z_crop = ZCrop{z[0].get<std::size_t>(), z[1].get<std::size_t>()};
        if (c.z_crop->lo >= c.z_crop->hi) throw DataError("z_crop needs LO < HI");
      }
    }
    c.threshold = j.value("threshold", c.threshold);
    c.corpus_dir = j.value("corpus_dir", c.corpus_dir);
    c.threads = j.value("threads", c.threads);
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed run config: ") + e.what());
  }
  if (c.epochs < 0) throw DataError("epochs must be non-negative");
  if (c.folds < 5) throw DataError("folds.k must be at least 5");
  if (c.fold_rotation < 0 || c.fold_rotation >= c.folds)
    throw DataError("folds.rotation must lie in [0, k)");
  if (c.threads < 1) throw DataError("threads must be positive");
  if (!(c.optimizer.learning_rate > 0.0) || !(c.optimizer.eps > 0.0) ||
      !(c.optimizer.rho >= 0.0 && c.optimizer.rho < 1.0))
    throw DataError("optimizer constants out of range");
  if (!(c.threshold >= 0.0 && c.threshold < 1.0))
    throw DataError("threshold must lie in [0, 1)");
  return c;
}

RunConfig read_run_config(const fs::path& path) {
  RunConfig c;
  try {
    c = run_config_from_json(read_json(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (!c.corpus_dir.empty() && fs::path(c.corpus_dir).is_relative())
    c.corpus_dir = (path.parent_path() / c.corpus_dir).lexically_normal().string();
  return c;
}

}  // namespace aaa
