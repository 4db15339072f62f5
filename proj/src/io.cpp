#include "simfuse/io.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace simfuse {

namespace {

[[noreturn]] void bad_file(const std::string& path, const std::string& why) {
    throw InputError(path + ": " + why);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open for writing: " + path);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open: " + path);
    return in;
}

void check_token(const std::string& s, const char* what) {
    if (s.empty() || s.find_first_of(" \t\n,") != std::string::npos)
        throw InputError(std::string(what) +
                         " must be non-empty without whitespace or commas: '" + s +
                         "'");
}

} // namespace

// ---- volumes ----------------------------------------------------------------

void write_volume(const std::string& base_path, const Volume& v,
                  const std::string& channel_name) {
    v.validate();
    {
        auto hdr = open_out(base_path + ".hdr");
        hdr << "simfuse-volume v1\n";
        hdr << "dims " << v.dims[0] << " " << v.dims[1] << " " << v.dims[2] << "\n";
        hdr << "spacing " << format_double(v.spacing[0]) << " "
            << format_double(v.spacing[1]) << " " << format_double(v.spacing[2])
            << "\n";
        hdr << "order x-fastest\n";
        hdr << "type float32-le\n";
        hdr << "channel " << (channel_name.empty() ? "-" : channel_name) << "\n";
    }
    auto raw = open_out(base_path + ".raw");
    std::vector<float> buf(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i)
        buf[i] = static_cast<float>(v.data[i]);
    raw.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!raw) throw InputError("failed to write: " + base_path + ".raw");
}

Volume read_volume(const std::string& base_path, std::string* channel_name) {
    const std::string hdr_path = base_path + ".hdr";
    auto hdr = open_in(hdr_path);
    std::string line;
    if (!std::getline(hdr, line) || line != "simfuse-volume v1")
        bad_file(hdr_path, "unknown header/version");

    Dims dims{};
    Spacing spacing{};
    std::string channel = "-";
    while (std::getline(hdr, line)) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "dims") {
            if (!(ls >> dims[0] >> dims[1] >> dims[2])) bad_file(hdr_path, "dims");
        } else if (key == "spacing") {
            if (!(ls >> spacing[0] >> spacing[1] >> spacing[2]))
                bad_file(hdr_path, "spacing");
        } else if (key == "order") {
            std::string o;
            ls >> o;
            if (o != "x-fastest") bad_file(hdr_path, "unsupported order " + o);
        } else if (key == "type") {
            std::string t;
            ls >> t;
            if (t != "float32-le") bad_file(hdr_path, "unsupported type " + t);
        } else if (key == "channel") {
            ls >> channel;
        } else if (!key.empty()) {
            bad_file(hdr_path, "unknown key " + key);
        }
    }
    if (channel_name) *channel_name = channel == "-" ? "" : channel;

    Volume v(dims, spacing);
    const std::string raw_path = base_path + ".raw";
    auto raw = open_in(raw_path);
    std::vector<float> buf(v.data.size());
    raw.read(reinterpret_cast<char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (raw.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
        bad_file(raw_path, "short read");
    raw.peek();
    if (!raw.eof()) bad_file(raw_path, "trailing bytes");
    for (std::size_t i = 0; i < buf.size(); ++i) v.data[i] = buf[i];
    return v;
}

void write_mask(const std::string& base_path, const Mask& m) {
    Volume v(m.dims, {1.0, 1.0, 1.0});
    for (std::size_t i = 0; i < m.flags.size(); ++i)
        v.data[i] = m.flags[i] ? 1.0 : 0.0;
    write_volume(base_path, v, "mask");
}

Mask read_mask(const std::string& base_path) {
    const Volume v = read_volume(base_path);
    Mask m;
    m.dims = v.dims;
    m.flags.resize(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i)
        m.flags[i] = v.data[i] != 0.0 ? 1 : 0;
    return m;
}

// ---- bags --------------------------------------------------------------------

void write_bag_csv(const std::string& path, const SampleBag& bag) {
    bag.validate();
    auto out = open_out(path);
    for (int f = 0; f < bag.n; ++f) out << "f" << f << ",";
    out << "label\n";
    for (std::size_t i = 0; i < bag.size(); ++i) {
        const double* r = bag.row(i);
        for (int f = 0; f < bag.n; ++f) out << format_double(r[f]) << ",";
        out << (bag.labeled() ? bag.labels[i] : -1) << "\n";
    }
    if (!out) throw InputError("failed to write: " + path);
}

SampleBag read_bag_csv(const std::string& path,
                       const std::vector<std::string>& class_names,
                       const std::string& source_tag) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) bad_file(path, "empty file");
    const auto header = split(line, ',');
    if (header.size() < 2 || header.back() != "label")
        bad_file(path, "bad header");
    const int n = static_cast<int>(header.size()) - 1;

    SampleBag bag;
    bag.n = n;
    bag.class_names = class_names;
    bag.source_tag = source_tag;
    std::vector<int> raw_labels;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto fields = split(line, ',');
        if (static_cast<int>(fields.size()) != n + 1)
            bad_file(path, "wrong column count on line " + std::to_string(lineno));
        for (int f = 0; f < n; ++f) {
            char* end = nullptr;
            const double v = std::strtod(fields[f].c_str(), &end);
            if (end == fields[f].c_str() || *end != '\0')
                bad_file(path, "bad number on line " + std::to_string(lineno));
            bag.features.push_back(v);
        }
        raw_labels.push_back(std::stoi(fields[n]));
    }
    const bool any_labeled =
        std::any_of(raw_labels.begin(), raw_labels.end(), [](int l) { return l >= 0; });
    if (any_labeled) {
        for (int l : raw_labels)
            if (l < 0) bad_file(path, "mixed labeled and unlabeled rows");
        bag.labels = std::move(raw_labels);
    }
    bag.validate();
    return bag;
}

void write_bag_manifest(const std::string& path,
                        const std::vector<BagManifestEntry>& entries) {
    auto out = open_out(path);
    out << "simfuse-bags v1\n";
    for (const auto& e : entries) {
        check_token(e.tag, "tag");
        check_token(e.study, "study");
        check_token(e.bag_path, "bag path");
        out << "entry " << e.tag << " " << e.study << " " << e.bag_path << " "
            << e.n_features << " " << e.designated_channel << " "
            << e.designated_feature << " " << e.class_names.size();
        for (const auto& c : e.class_names) {
            check_token(c, "class name");
            out << " " << c;
        }
        out << "\n";
    }
}

std::vector<BagManifestEntry> read_bag_manifest(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || line != "simfuse-bags v1")
        bad_file(path, "unknown header/version");
    std::vector<BagManifestEntry> entries;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string word;
        BagManifestEntry e;
        std::size_t k = 0;
        if (!(ls >> word >> e.tag >> e.study >> e.bag_path >> e.n_features >>
              e.designated_channel >> e.designated_feature >> k) ||
            word != "entry")
            bad_file(path, "bad entry line");
        e.class_names.resize(k);
        for (auto& c : e.class_names)
            if (!(ls >> c)) bad_file(path, "missing class name");
        entries.push_back(std::move(e));
    }
    return entries;
}

// ---- simulated datasets ---------------------------------------------------------

void write_dataset_manifest(const std::string& path,
                            const std::vector<DatasetImageEntry>& entries) {
    auto out = open_out(path);
    out << "simfuse-dataset v1\n";
    for (const auto& e : entries) {
        check_token(e.tag, "tag");
        check_token(e.study, "study");
        check_token(e.subdir, "subdir");
        out << "entry " << e.tag << " " << e.study << " " << e.subdir << " "
            << e.channels.size();
        for (const auto& c : e.channels) {
            check_token(c, "channel");
            out << " " << c;
        }
        out << "\n";
    }
}

std::vector<DatasetImageEntry> read_dataset_manifest(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || line != "simfuse-dataset v1")
        bad_file(path, "unknown header/version");
    std::vector<DatasetImageEntry> entries;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string word;
        DatasetImageEntry e;
        std::size_t k = 0;
        if (!(ls >> word >> e.tag >> e.study >> e.subdir >> k) || word != "entry")
            bad_file(path, "bad entry line");
        e.channels.resize(k);
        for (auto& c : e.channels)
            if (!(ls >> c)) bad_file(path, "missing channel name");
        entries.push_back(std::move(e));
    }
    return entries;
}

// ---- distance matrices ------------------------------------------------------------

void write_distance_matrix(const std::string& path, const DistanceMatrix& dm) {
    {
        auto out = open_out(path);
        out << "source";
        for (const auto& t : dm.target_tags) {
            check_token(t, "target tag");
            out << "," << t;
        }
        out << "\n";
        for (std::size_t m = 0; m < dm.source_tags.size(); ++m) {
            check_token(dm.source_tags[m], "source tag");
            out << dm.source_tags[m];
            for (std::size_t z = 0; z < dm.target_tags.size(); ++z)
                out << "," << format_double(dm.at(m, z));
            out << "\n";
        }
    }
    auto meta = open_out(path + ".meta");
    meta << "simfuse-distances v1\n";
    meta << "measure " << to_string(dm.measure) << "\n";
    meta << "direction " << to_string(dm.direction) << "\n";
    meta << "seed " << dm.seed << "\n";
    meta << "subsample " << dm.subsample << "\n";
}

DistanceMatrix read_distance_matrix(const std::string& path) {
    DistanceMatrix dm;
    {
        const std::string meta_path = path + ".meta";
        auto meta = open_in(meta_path);
        std::string line;
        if (!std::getline(meta, line) || line != "simfuse-distances v1")
            bad_file(meta_path, "unknown header/version");
        while (std::getline(meta, line)) {
            std::istringstream ls(line);
            std::string key, value;
            if (!(ls >> key)) continue;
            if (key == "measure") {
                ls >> value;
                dm.measure = measure_from_string(value);
            } else if (key == "direction") {
                ls >> value;
                dm.direction = direction_from_string(value);
            } else if (key == "seed") {
                if (!(ls >> dm.seed)) bad_file(meta_path, "seed");
            } else if (key == "subsample") {
                if (!(ls >> dm.subsample)) bad_file(meta_path, "subsample");
            } else {
                bad_file(meta_path, "unknown key " + key);
            }
        }
    }
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) bad_file(path, "empty file");
    auto header = split(line, ',');
    if (header.empty() || header[0] != "source") bad_file(path, "bad header");
    dm.target_tags.assign(header.begin() + 1, header.end());
    if (dm.target_tags.empty()) bad_file(path, "no targets");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != dm.target_tags.size() + 1)
            bad_file(path, "wrong column count");
        dm.source_tags.push_back(fields[0]);
        for (std::size_t z = 1; z < fields.size(); ++z) {
            char* end = nullptr;
            const double v = std::strtod(fields[z].c_str(), &end);
            if (end == fields[z].c_str() || *end != '\0')
                bad_file(path, "bad number");
            dm.values.push_back(v);
        }
    }
    if (dm.source_tags.empty()) bad_file(path, "no sources");
    return dm;
}

// ---- weights / predictions ------------------------------------------------------

void write_weights_csv(const std::string& path, const std::vector<std::string>& tags,
                       const WeightVector& wv) {
    if (tags.size() != wv.weights.size())
        throw InputError("tag/weight count mismatch");
    {
        auto out = open_out(path);
        out << "source_tag,weight\n";
        for (std::size_t m = 0; m < tags.size(); ++m) {
            check_token(tags[m], "source tag");
            out << tags[m] << "," << format_double(wv.weights[m]) << "\n";
        }
    }
    auto meta = open_out(path + ".meta");
    meta << "simfuse-weights v1\n";
    meta << "measure " << to_string(wv.measure) << "\n";
    meta << "direction " << to_string(wv.direction) << "\n";
    meta << "p " << format_double(wv.p) << "\n";
    if (!wv.target_tag.empty()) meta << "target " << wv.target_tag << "\n";
}

std::vector<std::pair<std::string, double>> read_weights_csv(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || line != "source_tag,weight")
        bad_file(path, "bad header");
    std::vector<std::pair<std::string, double>> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != 2) bad_file(path, "bad row");
        char* end = nullptr;
        const double w = std::strtod(fields[1].c_str(), &end);
        if (end == fields[1].c_str() || *end != '\0') bad_file(path, "bad weight");
        out.emplace_back(fields[0], w);
    }
    if (out.empty()) bad_file(path, "no weights");
    return out;
}

void write_predictions_csv(const std::string& path,
                           const std::vector<std::size_t>& voxel_index,
                           const RowMatrix& posteriors,
                           const std::vector<int>& labels,
                           const std::vector<std::string>& class_names) {
    if (voxel_index.size() != posteriors.rows || labels.size() != posteriors.rows)
        throw InputError("prediction row count mismatch");
    if (class_names.size() != posteriors.cols)
        throw InputError("class name count mismatch");
    auto out = open_out(path);
    out << "voxel";
    for (const auto& c : class_names) {
        check_token(c, "class name");
        out << ",p_" << c;
    }
    out << ",label\n";
    for (std::size_t i = 0; i < posteriors.rows; ++i) {
        out << voxel_index[i];
        for (std::size_t c = 0; c < posteriors.cols; ++c)
            out << "," << format_double(posteriors.at(i, c));
        out << "," << labels[i] << "\n";
    }
}

Predictions read_predictions_csv(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) bad_file(path, "empty file");
    const auto header = split(line, ',');
    if (header.size() < 3 || header[0] != "voxel" || header.back() != "label")
        bad_file(path, "bad header");
    const std::size_t C = header.size() - 2;

    Predictions pred;
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != C + 2) bad_file(path, "wrong column count");
        pred.voxel_index.push_back(std::stoull(fields[0]));
        for (std::size_t c = 0; c < C; ++c) {
            char* end = nullptr;
            const double v = std::strtod(fields[1 + c].c_str(), &end);
            if (end == fields[1 + c].c_str() || *end != '\0')
                bad_file(path, "bad posterior");
            values.push_back(v);
        }
        pred.labels.push_back(std::stoi(fields.back()));
    }
    pred.posteriors.rows = pred.voxel_index.size();
    pred.posteriors.cols = C;
    pred.posteriors.data = std::move(values);
    return pred;
}

// ---- small helpers -------------------------------------------------------------

std::string read_text_file(const std::string& path) {
    auto in = open_in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    auto out = open_out(path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw InputError("failed to write: " + path);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            parts.push_back(s.substr(start));
            break;
        }
        parts.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

} // namespace simfuse
