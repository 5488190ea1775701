#include "serialize.hpp"

#include <bit>
#include <utility>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "common.hpp"

namespace bdm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kParamsMagic[4] = {'B', 'D', 'M', 'P'};

static_assert(std::endian::native == std::endian::little,
              "parameter container assumes a little-endian host");

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json spec_to_json(const ShapeSpec& s) {
    return json{{"family", family_name(s.family)},
                {"scale", s.scale},
                {"rotation", s.rotation},
                {"star_arms", s.star_arms},
                {"aspect", s.aspect}};
}

ShapeSpec spec_from_json(const json& j) {
    ShapeSpec s;
    s.family = family_from_name(j.at("family").get<std::string>());
    s.scale = j.at("scale").get<double>();
    s.rotation = j.at("rotation").get<double>();
    s.star_arms = j.at("star_arms").get<int>();
    s.aspect = j.at("aspect").get<double>();
    return s;
}

json condition_to_json(const Condition& c) {
    return json{{"radial_histogram", c.radial_histogram},
                {"family_onehot", c.family_onehot},
                {"noise_level", c.noise_level}};
}

Condition condition_from_json(const json& j) {
    Condition c;
    const auto hist = j.at("radial_histogram").get<std::vector<double>>();
    const auto onehot = j.at("family_onehot").get<std::vector<double>>();
    if (hist.size() != kHistBins || onehot.size() != kFamilyCount) {
        throw ConfigError("condition: histogram or onehot length mismatch in manifest");
    }
    std::copy(hist.begin(), hist.end(), c.radial_histogram.begin());
    std::copy(onehot.begin(), onehot.end(), c.family_onehot.begin());
    c.noise_level = j.at("noise_level").get<double>();
    return c;
}

void write_params_file(const fs::path& path, const json& header,
                       const std::vector<ConstTensorRef>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    const std::string head = header.dump();
    const uint64_t head_len = head.size();
    out.write(kParamsMagic, 4);
    out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const auto& t : tensors) {
        out.write(reinterpret_cast<const char*>(t.data->data()),
                  static_cast<std::streamsize>(t.data->size() * sizeof(double)));
    }
    if (!out) throw IoError("short write to '" + path.string() + "'");
}

json read_params_header(std::ifstream& in, const fs::path& path) {
    char magic[4];
    uint64_t head_len = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
    if (!in || std::memcmp(magic, kParamsMagic, 4) != 0) {
        throw IoError("'" + path.string() + "' is not a parameter container");
    }
    std::string head(head_len, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head_len));
    if (!in) throw IoError("truncated header in '" + path.string() + "'");
    return json::parse(head);
}

void read_tensor_payload(std::ifstream& in, const fs::path& path, const json& header,
                         const std::vector<TensorRef>& tensors) {
    const auto& shapes = header.at("tensors");
    if (shapes.size() != tensors.size()) {
        throw IoError("'" + path.string() + "': tensor count mismatch");
    }
    for (size_t k = 0; k < tensors.size(); ++k) {
        const auto& entry = shapes.at(k);
        if (entry.at("name").get<std::string>() != tensors[k].name ||
            entry.at("len").get<size_t>() != tensors[k].data->size()) {
            throw IoError("'" + path.string() + "': tensor layout mismatch at '" +
                          tensors[k].name + "'");
        }
        in.read(reinterpret_cast<char*>(tensors[k].data->data()),
                static_cast<std::streamsize>(tensors[k].data->size() * sizeof(double)));
    }
    if (!in) throw IoError("truncated payload in '" + path.string() + "'");
}

json tensor_shapes(const std::vector<ConstTensorRef>& tensors) {
    json shapes = json::array();
    for (const auto& t : tensors) {
        shapes.push_back({{"name", t.name}, {"len", t.data->size()}});
    }
    return shapes;
}

void verify_content_hash(const json& header, const std::vector<ConstTensorRef>& tensors,
                         const fs::path& path) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(content_hash(tensors)));
    if (header.at("content_hash").get<std::string>() != buf) {
        throw IoError("'" + path.string() + "': content hash mismatch (corrupt file?)");
    }
}

std::string hash_string(const std::vector<ConstTensorRef>& tensors) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(content_hash(tensors)));
    return buf;
}

}  // namespace

void save_xyz(const PointCloud& cloud, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    for (int i = 0; i < cloud.n; ++i) {
        for (int d = 0; d < cloud.dim; ++d) {
            if (d > 0) out << ' ';
            out << format_double(cloud.at(i, d));
        }
        out << '\n';
    }
    if (!out) throw IoError("short write to '" + path.string() + "'");
}

PointCloud load_xyz(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<double> values;
    int dim = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        int count = 0;
        double v;
        while (ls >> v) {
            values.push_back(v);
            ++count;
        }
        if (count == 0) continue;
        if (dim == 0) {
            dim = count;
        } else if (count != dim) {
            throw IoError("'" + path.string() + "': inconsistent column count");
        }
    }
    if (dim == 0) throw IoError("'" + path.string() + "': no points");
    PointCloud cloud(static_cast<int>(values.size()) / dim, dim);
    cloud.points = std::move(values);
    return cloud;
}

void save_schedule(const NoiseSchedule& sched, const fs::path& path) {
    const json j{{"T", sched.steps}, {"beta0", sched.beta0}, {"betaT", sched.betaT}};
    write_text_file(path, j.dump(2) + "\n");
}

NoiseSchedule load_schedule(const fs::path& path) {
    const json j = json::parse(read_text_file(path));
    return build_linear_schedule(j.at("beta0").get<double>(), j.at("betaT").get<double>(),
                                 j.at("T").get<int>());
}

void save_params(const DenoiserParams& params, const fs::path& path) {
    const auto tensors = params.tensors();
    json header{{"format", "bdm-params"},
                {"version", 1},
                {"kind", params.conditional ? "conditional" : "unconditional"},
                {"dim", params.dim},
                {"tensors", tensor_shapes(tensors)},
                {"content_hash", hash_string(tensors)}};
    write_params_file(path, header, tensors);
}

DenoiserParams load_params(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("parameter file '" + path.string() + "' not found");
    const json header = read_params_header(in, path);
    if (header.at("format") != "bdm-params") {
        throw IoError("'" + path.string() + "': unexpected container format");
    }
    const std::string kind = header.at("kind").get<std::string>();
    if (kind != "conditional" && kind != "unconditional") {
        throw IoError("'" + path.string() + "': kind '" + kind + "' is not a denoiser");
    }
    DenoiserParams p = init_denoiser(kind == "conditional", header.at("dim").get<int>(), 0);
    read_tensor_payload(in, path, header, p.tensors());
    verify_content_hash(header, std::as_const(p).tensors(), path);
    return p;
}

void save_merged(const MergedParams& merged, const fs::path& path) {
    const auto tensors = merged.tensors();
    json header{{"format", "bdm-params"},
                {"version", 1},
                {"kind", "merged"},
                {"dim", merged.recon.dim},
                {"tensors", tensor_shapes(tensors)},
                {"content_hash", hash_string(tensors)}};
    write_params_file(path, header, tensors);
}

MergedParams load_merged(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("parameter file '" + path.string() + "' not found");
    const json header = read_params_header(in, path);
    if (header.at("format") != "bdm-params" || header.at("kind") != "merged") {
        throw IoError("'" + path.string() + "' is not a merged parameter container");
    }
    const int dim = header.at("dim").get<int>();
    MergedParams m = init_merged(init_denoiser(false, dim, 0), init_denoiser(true, dim, 0));
    read_tensor_payload(in, path, header, m.tensors());
    verify_content_hash(header, std::as_const(m).tensors(), path);
    return m;
}

void save_dataset(const DatasetBundle& bundle, const fs::path& dir) {
    fs::create_directories(dir / "standalone");
    fs::create_directories(dir / "paired");
    fs::create_directories(dir / "test");

    json manifest;
    manifest["seed"] = bundle.seed;
    auto dump_split = [&](const char* name, const std::vector<ShapeSpec>& specs,
                          const std::vector<const Condition*>& conds, size_t count) {
        json arr = json::array();
        for (size_t i = 0; i < count; ++i) {
            char filename[64];
            std::snprintf(filename, sizeof(filename), "%s/%05zu.xyz", name, i);
            json entry{{"file", filename}, {"spec", spec_to_json(specs[i])}};
            if (conds[i] != nullptr) entry["condition"] = condition_to_json(*conds[i]);
            arr.push_back(std::move(entry));
        }
        manifest[name] = std::move(arr);
    };

    {
        std::vector<const Condition*> none(bundle.standalone.size(), nullptr);
        dump_split("standalone", bundle.standalone_specs, none, bundle.standalone.size());
        for (size_t i = 0; i < bundle.standalone.size(); ++i) {
            char filename[64];
            std::snprintf(filename, sizeof(filename), "%05zu.xyz", i);
            save_xyz(bundle.standalone[i], dir / "standalone" / filename);
        }
    }
    for (const char* split : {"paired", "test"}) {
        const auto& pairs = std::string(split) == "paired" ? bundle.paired : bundle.test;
        const auto& specs = std::string(split) == "paired" ? bundle.paired_specs : bundle.test_specs;
        std::vector<const Condition*> conds;
        conds.reserve(pairs.size());
        for (const auto& p : pairs) conds.push_back(&p.first);
        dump_split(split, specs, conds, pairs.size());
        for (size_t i = 0; i < pairs.size(); ++i) {
            char filename[64];
            std::snprintf(filename, sizeof(filename), "%05zu.xyz", i);
            save_xyz(pairs[i].second, dir / split / filename);
        }
    }
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

DatasetBundle load_dataset(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw MissingArtifactError("dataset manifest '" + manifest_path.string() +
                                   "' not found; run gen-data first");
    }
    const json manifest = json::parse(read_text_file(manifest_path));
    DatasetBundle bundle;
    bundle.seed = manifest.at("seed").get<uint64_t>();

    for (const auto& entry : manifest.at("standalone")) {
        bundle.standalone_specs.push_back(spec_from_json(entry.at("spec")));
        bundle.standalone.push_back(load_xyz(dir / entry.at("file").get<std::string>()));
    }
    for (const char* split : {"paired", "test"}) {
        auto& pairs = std::string(split) == "paired" ? bundle.paired : bundle.test;
        auto& specs = std::string(split) == "paired" ? bundle.paired_specs : bundle.test_specs;
        for (const auto& entry : manifest.at(split)) {
            specs.push_back(spec_from_json(entry.at("spec")));
            pairs.emplace_back(condition_from_json(entry.at("condition")),
                               load_xyz(dir / entry.at("file").get<std::string>()));
        }
    }
    return bundle;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << body;
    if (!out) throw IoError("short write to '" + path.string() + "'");
}

}  // namespace bdm
