#include "aaa/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "aaa/error.hpp"

namespace aaa {

static_assert(std::endian::native == std::endian::little,
              "payloads are written in host order, which must be little-endian");

namespace {

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const void* data, std::size_t n) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw DataError(path.string() + ": write failed");
}

Json grid_header(const Dims& d, const Spacing& s, const std::string& dtype,
                 const std::string& units, const fs::path& payload) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["dims"] = {d.x, d.y, d.z};
  j["spacing_mm"] = {s.x, s.y, s.z};
  j["dtype"] = dtype;
  j["units"] = units;
  j["payload"] = payload.filename().string();
  return j;
}

struct GridHeader {
  Dims dims;
  Spacing spacing;
  fs::path payload;
};

GridHeader parse_header(const fs::path& header, const std::string& dtype) {
  const Json j = read_json(header);
  try {
    if (j.at("format_version").get<int>() != kFormatVersion)
      throw DataError(header.string() + ": unsupported format_version");
    if (j.at("dtype").get<std::string>() != dtype)
      throw DataError(header.string() + ": expected dtype " + dtype + ", got " +
                      j.at("dtype").get<std::string>());
    GridHeader h;
    const auto& d = j.at("dims");
    const auto& s = j.at("spacing_mm");
    if (d.size() != 3 || s.size() != 3)
      throw DataError(header.string() + ": dims and spacing_mm need 3 values");
    h.dims = {d[0].get<std::size_t>(), d[1].get<std::size_t>(),
              d[2].get<std::size_t>()};
    h.spacing = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
    if (!h.spacing.valid())
      throw DataError(header.string() + ": spacing must be positive");
    h.payload = header.parent_path() / j.at("payload").get<std::string>();
    return h;
  } catch (const Json::exception& e) {
    throw DataError(header.string() + ": malformed header: " + e.what());
  }
}

}  // namespace

std::string read_text(const fs::path& path) {
  auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, text.data(), text.size());
}

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) {
  write_text(path, j.dump(2) + "\n");
}

fs::path payload_path(const fs::path& header, const std::string& ext) {
  fs::path p = header;
  p.replace_extension(ext);
  return p;
}

void write_volume(const fs::path& header, const StudyVolume& v) {
  if (v.voxels.size() != v.dims.count())
    throw DataError(header.string() + ": voxel count does not match dims");
  const fs::path payload = payload_path(header, ".raw");
  write_bytes(payload, v.voxels.data(), v.voxels.size() * sizeof(float));
  write_json(header, grid_header(v.dims, v.spacing, "f32le",
                                 "CT-like intensity units", payload));
}

StudyVolume read_volume(const fs::path& header) {
  const GridHeader h = parse_header(header, "f32le");
  const auto bytes = read_bytes(h.payload);
  if (bytes.size() != h.dims.count() * sizeof(float))
    throw DataError(h.payload.string() + ": payload is " +
                    std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(h.dims.count() * sizeof(float)));
  StudyVolume v(h.dims, h.spacing);
  std::memcpy(v.voxels.data(), bytes.data(), bytes.size());
  return v;
}

void write_mask(const fs::path& header, const MaskVolume& m) {
  if (m.voxels.size() != m.dims.count())
    throw DataError(header.string() + ": voxel count does not match dims");
  const fs::path payload = payload_path(header, ".raw");
  write_bytes(payload, m.voxels.data(), m.voxels.size());
  write_json(header, grid_header(m.dims, m.spacing, "u8", "binary mask",
                                 payload));
}

MaskVolume read_mask(const fs::path& header) {
  const GridHeader h = parse_header(header, "u8");
  const auto bytes = read_bytes(h.payload);
  if (bytes.size() != h.dims.count())
    throw DataError(h.payload.string() + ": payload is " +
                    std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(h.dims.count()));
  MaskVolume m(h.dims, h.spacing);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const auto b = static_cast<std::uint8_t>(bytes[i]);
    if (b > 1)
      throw DataError(h.payload.string() + ": mask value " +
                      std::to_string(b) + " is not 0 or 1");
    m.voxels[i] = b;
  }
  return m;
}

Json to_json(const UNetConfig& c) {
  Json j;
  j["levels"] = c.levels;
  j["init_features"] = c.init_features;
  j["convs_per_block"] = c.convs_per_block;
  j["growth_factor"] = c.growth_factor;
  j["classes"] = c.classes;
  j["bottleneck_dropout"] = c.bottleneck_dropout;
  j["batchnorm_eps"] = c.batchnorm.eps;
  j["batchnorm_momentum"] = c.batchnorm.momentum;
  j["clamp_lo"] = c.clamp_lo;
  j["clamp_hi"] = c.clamp_hi;
  return j;
}

UNetConfig unet_config_from_json(const Json& j) {
  UNetConfig c;
  try {
    c.levels = j.value("levels", c.levels);
    c.init_features = j.value("init_features", c.init_features);
    c.convs_per_block = j.value("convs_per_block", c.convs_per_block);
    c.growth_factor = j.value("growth_factor", c.growth_factor);
    c.classes = j.value("classes", c.classes);
    c.bottleneck_dropout = j.value("bottleneck_dropout", c.bottleneck_dropout);
    c.batchnorm.eps = j.value("batchnorm_eps", c.batchnorm.eps);
    c.batchnorm.momentum = j.value("batchnorm_momentum", c.batchnorm.momentum);
    c.clamp_lo = j.value("clamp_lo", c.clamp_lo);
    c.clamp_hi = j.value("clamp_hi", c.clamp_hi);
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed network config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid network config: ") + e.what());
  }
  return c;
}

namespace {

const char* section_name(WeightStore<float>::Section s) {
  switch (s) {
    case WeightStore<float>::Section::kParams: return "params";
    case WeightStore<float>::Section::kBuffers: return "buffers";
    case WeightStore<float>::Section::kOptimizer: return "optimizer";
  }
  return "params";
}

WeightStore<float>::Section section_from(const std::string& s,
                                         const fs::path& where) {
  if (s == "params") return WeightStore<float>::Section::kParams;
  if (s == "buffers") return WeightStore<float>::Section::kBuffers;
  if (s == "optimizer") return WeightStore<float>::Section::kOptimizer;
  throw DataError(where.string() + ": unknown section '" + s + "'");
}

constexpr WeightStore<float>::Section kSections[] = {
    WeightStore<float>::Section::kParams, WeightStore<float>::Section::kBuffers,
    WeightStore<float>::Section::kOptimizer};

}  // namespace

void write_weights(const fs::path& manifest, const WeightStore<float>& w,
                   const UNetConfig& config) {
  const fs::path payload = payload_path(manifest, ".bin");
  Json entries = Json::array();
  std::vector<float> blob;
  for (auto s : kSections)
    for (const auto& e : w.entries(s)) {
      Json je;
      je["name"] = e.name;
      je["section"] = section_name(s);
      je["shape"] = e.value.shape();
      je["offset"] = blob.size() * sizeof(float);
      entries.push_back(std::move(je));
      blob.insert(blob.end(), e.value.values().begin(), e.value.values().end());
    }
  write_bytes(payload, blob.data(), blob.size() * sizeof(float));
  Json j;
  j["format_version"] = kFormatVersion;
  j["config"] = to_json(config);
  j["payload"] = payload.filename().string();
  j["payload_bytes"] = blob.size() * sizeof(float);
  j["entries"] = std::move(entries);
  write_json(manifest, j);
}

LoadedWeights read_weights(const fs::path& manifest) {
  const Json j = read_json(manifest);
  LoadedWeights out;
  try {
    if (j.at("format_version").get<int>() != kFormatVersion)
      throw DataError(manifest.string() + ": unsupported format_version");
    out.config = unet_config_from_json(j.at("config"));
    const fs::path payload =
        manifest.parent_path() / j.at("payload").get<std::string>();
    const auto bytes = read_bytes(payload);
    if (bytes.size() != j.at("payload_bytes").get<std::size_t>())
      throw DataError(payload.string() + ": payload size does not match manifest");
    std::size_t expected_offset = 0;
    for (const auto& e : j.at("entries")) {
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const std::size_t n = shape_size(shape);
      if (offset != expected_offset)
        throw DataError(manifest.string() + ": entry " +
                        e.at("name").get<std::string>() +
                        " offset is not contiguous");
      if (offset + n * sizeof(float) > bytes.size())
        throw DataError(manifest.string() + ": entry " +
                        e.at("name").get<std::string>() +
                        " runs past the payload");
      std::vector<float> data(n);
      std::memcpy(data.data(), bytes.data() + offset, n * sizeof(float));
      out.weights.add(section_from(e.at("section").get<std::string>(), manifest),
                      e.at("name").get<std::string>(),
                      Tensor<float>(shape, std::move(data)));
      expected_offset = offset + n * sizeof(float);
    }
    if (expected_offset != bytes.size())
      throw DataError(payload.string() + ": trailing bytes after last entry");
  } catch (const Json::exception& e) {
    throw DataError(manifest.string() + ": malformed manifest: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(manifest.string() + ": " + e.what());
  }
  // Every parameter the config demands must be present with its shape.
  const WeightStore<float> expected = build<float>(out.config, 0);
  for (auto s : {WeightStore<float>::Section::kParams,
                 WeightStore<float>::Section::kBuffers}) {
    if (expected.entries(s).size() != out.weights.entries(s).size())
      throw DataError(manifest.string() + ": " + section_name(s) +
                      " do not match the configured network");
    for (const auto& e : expected.entries(s)) {
      if (!out.weights.contains(s, e.name))
        throw DataError(manifest.string() + ": missing " + e.name);
      if (out.weights.get(s, e.name).shape() != e.value.shape())
        throw DataError(manifest.string() + ": " + e.name + " has shape " +
                        shape_str(out.weights.get(s, e.name).shape()) +
                        ", expected " + shape_str(e.value.shape()));
    }
  }
  return out;
}

}  // namespace aaa
