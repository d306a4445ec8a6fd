#include "fusedet/annotations.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace fusedet::annotations {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
    throw ParseError(path.string() + ": " + what);
}

const json& need(const json& j, const char* key, const std::filesystem::path& path,
                 const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) fail(path, where + ": missing field '" + key + "'");
    return *it;
}

std::string need_string(const json& j, const char* key,
                        const std::filesystem::path& path, const std::string& where) {
    const json& v = need(j, key, path, where);
    if (!v.is_string()) fail(path, where + ": field '" + key + "' must be a string");
    return v.get<std::string>();
}

double need_number(const json& j, const char* key,
                   const std::filesystem::path& path, const std::string& where) {
    const json& v = need(j, key, path, where);
    if (!v.is_number()) fail(path, where + ": field '" + key + "' must be a number");
    return v.get<double>();
}

int need_int(const json& j, const char* key, const std::filesystem::path& path,
             const std::string& where) {
    const json& v = need(j, key, path, where);
    if (!v.is_number_integer())
        fail(path, where + ": field '" + key + "' must be an integer");
    return v.get<int>();
}

// Validates record-level invariants, clips the box to its image, and inserts
// it. `where` identifies the record for error messages.
void insert_box(MultiAnnotatorDataset& ds, int image_idx, int annotator_idx,
                geometry::Box box, int class_id, double score,
                const std::filesystem::path& path, const std::string& where) {
    if (!box.finite()) fail(path, where + ": non-finite coordinates");
    if (box.x_min > box.x_max || box.y_min > box.y_max)
        fail(path, where + ": x_max < x_min or y_max < y_min");
    if (!(score >= 0.0 && score <= 1.0))
        fail(path, where + ": score outside [0,1]");
    const ImageRecord& img = ds.images[std::size_t(image_idx)];
    box = geometry::clip_to_image(box, img.width, img.height);
    ds.boxes[std::size_t(image_idx)][std::size_t(annotator_idx)].push_back(
        LabeledBox{box, class_id, score});
}

MultiAnnotatorDataset load_annjson(const std::filesystem::path& path) {
    json root;
    try {
        root = json::parse(slurp(path));
    } catch (const json::exception& e) {
        fail(path, std::string("invalid JSON: ") + e.what());
    }
    if (!root.is_object()) fail(path, "top level must be an object");

    MultiAnnotatorDataset ds;
    const json& classes = need(root, "classes", path, "top level");
    if (!classes.is_array()) fail(path, "'classes' must be an array");
    for (const auto& c : classes) {
        if (!c.is_string()) fail(path, "'classes' entries must be strings");
        ds.classes.push_back(c.get<std::string>());
    }
    const json& annotators = need(root, "annotators", path, "top level");
    if (!annotators.is_array()) fail(path, "'annotators' must be an array");
    for (const auto& a : annotators) {
        if (!a.is_string()) fail(path, "'annotators' entries must be strings");
        ds.annotators.push_back(a.get<std::string>());
    }

    const json& images = need(root, "images", path, "top level");
    if (!images.is_array()) fail(path, "'images' must be an array");
    for (std::size_t i = 0; i < images.size(); ++i) {
        std::string where = "images[" + std::to_string(i) + "]";
        const json& rec = images[i];
        if (!rec.is_object()) fail(path, where + ": must be an object");
        ImageRecord img;
        img.image_id = need_string(rec, "id", path, where);
        img.width = need_int(rec, "width", path, where);
        img.height = need_int(rec, "height", path, where);
        if (img.width <= 0 || img.height <= 0)
            fail(path, where + ": width/height must be positive");
        if (auto it = rec.find("pixels"); it != rec.end()) {
            if (!it->is_string()) fail(path, where + ": 'pixels' must be a string");
            img.pixel_path = it->get<std::string>();
        }
        if (ds.image_index(img.image_id) >= 0)
            fail(path, where + ": duplicate image id '" + img.image_id + "'");
        ds.images.push_back(std::move(img));
    }
    ds.boxes.assign(ds.images.size(),
                    std::vector<std::vector<LabeledBox>>(ds.annotators.size()));

    const json& anns = need(root, "annotations", path, "top level");
    if (!anns.is_array()) fail(path, "'annotations' must be an array");
    for (std::size_t i = 0; i < anns.size(); ++i) {
        std::string where = "annotations[" + std::to_string(i) + "]";
        const json& rec = anns[i];
        if (!rec.is_object()) fail(path, where + ": must be an object");
        std::string image_id = need_string(rec, "image_id", path, where);
        std::string annotator_id = need_string(rec, "annotator_id", path, where);
        std::string class_name = need_string(rec, "class", path, where);
        int image_idx = ds.image_index(image_id);
        if (image_idx < 0) fail(path, where + ": unknown image '" + image_id + "'");
        int annotator_idx = ds.annotator_index(annotator_id);
        if (annotator_idx < 0)
            fail(path, where + ": unknown annotator '" + annotator_id + "'");
        auto cit = std::find(ds.classes.begin(), ds.classes.end(), class_name);
        if (cit == ds.classes.end())
            fail(path, where + ": unknown class '" + class_name + "'");
        geometry::Box box{need_number(rec, "x_min", path, where),
                          need_number(rec, "y_min", path, where),
                          need_number(rec, "x_max", path, where),
                          need_number(rec, "y_max", path, where)};
        double score = 1.0;
        if (auto it = rec.find("score"); it != rec.end()) {
            if (!it->is_number()) fail(path, where + ": 'score' must be a number");
            score = it->get<double>();
        }
        insert_box(ds, image_idx, annotator_idx, box,
                   int(cit - ds.classes.begin()), score, path, where);
    }
    return ds;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::string bytes = slurp(path);
    std::vector<std::string> lines;
    std::string cur;
    for (char c : bytes) {
        if (c == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) {
        if (cur.back() == '\r') cur.pop_back();
        lines.push_back(cur);
    }
    return lines;
}

double parse_csv_number(const std::string& field, const std::filesystem::path& path,
                        const std::string& where) {
    try {
        std::size_t pos = 0;
        double v = std::stod(field, &pos);
        if (pos != field.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        fail(path, where + ": cannot parse number '" + field + "'");
    }
}

MultiAnnotatorDataset load_vindr_csv(const std::filesystem::path& path) {
    const std::filesystem::path sidecar = path.parent_path() / "images.csv";
    auto side_lines = read_lines(sidecar);
    if (side_lines.empty() || side_lines[0] != "image_id,width,height")
        fail(sidecar, "expected header 'image_id,width,height'");

    MultiAnnotatorDataset ds;
    for (std::size_t i = 1; i < side_lines.size(); ++i) {
        if (side_lines[i].empty()) continue;
        std::string where = "line " + std::to_string(i + 1);
        auto fields = split_csv_line(side_lines[i]);
        if (fields.size() != 3) fail(sidecar, where + ": expected 3 fields");
        ImageRecord img;
        img.image_id = fields[0];
        img.width = int(parse_csv_number(fields[1], sidecar, where));
        img.height = int(parse_csv_number(fields[2], sidecar, where));
        if (img.width <= 0 || img.height <= 0)
            fail(sidecar, where + ": width/height must be positive");
        if (ds.image_index(img.image_id) >= 0)
            fail(sidecar, where + ": duplicate image id '" + img.image_id + "'");
        ds.images.push_back(std::move(img));
    }

    auto lines = read_lines(path);
    if (lines.empty() ||
        lines[0] != "image_id,rad_id,class_name,x_min,y_min,x_max,y_max")
        fail(path,
             "expected header 'image_id,rad_id,class_name,x_min,y_min,x_max,y_max'");

    // Class and annotator order = first appearance in the file.
    struct Row {
        int line_no;
        std::vector<std::string> fields;
    };
    std::vector<Row> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto fields = split_csv_line(lines[i]);
        if (fields.size() != 7)
            fail(path, "line " + std::to_string(i + 1) + ": expected 7 fields");
        rows.push_back(Row{int(i + 1), std::move(fields)});
    }
    for (const Row& row : rows) {
        const std::string& rad = row.fields[1];
        if (ds.annotator_index(rad) < 0) ds.annotators.push_back(rad);
        const std::string& cls = row.fields[2];
        if (cls != "No finding" &&
            std::find(ds.classes.begin(), ds.classes.end(), cls) == ds.classes.end())
            ds.classes.push_back(cls);
    }
    ds.boxes.assign(ds.images.size(),
                    std::vector<std::vector<LabeledBox>>(ds.annotators.size()));

    for (const Row& row : rows) {
        std::string where = "line " + std::to_string(row.line_no);
        int image_idx = ds.image_index(row.fields[0]);
        if (image_idx < 0)
            fail(path, where + ": image '" + row.fields[0] + "' not in images.csv");
        int annotator_idx = ds.annotator_index(row.fields[1]);
        bool coords_empty = row.fields[3].empty() && row.fields[4].empty() &&
                            row.fields[5].empty() && row.fields[6].empty();
        if (row.fields[2] == "No finding") {
            if (!coords_empty)
                fail(path, where + ": 'No finding' row with coordinates");
            continue;  // the (image, annotator) pair exists with an empty set
        }
        if (coords_empty) fail(path, where + ": empty coordinates");
        auto cit = std::find(ds.classes.begin(), ds.classes.end(), row.fields[2]);
        geometry::Box box{parse_csv_number(row.fields[3], path, where),
                          parse_csv_number(row.fields[4], path, where),
                          parse_csv_number(row.fields[5], path, where),
                          parse_csv_number(row.fields[6], path, where)};
        insert_box(ds, image_idx, annotator_idx, box,
                   int(cit - ds.classes.begin()), 1.0, path, where);
    }
    return ds;
}

}  // namespace

int MultiAnnotatorDataset::image_index(std::string_view id) const {
    for (std::size_t i = 0; i < images.size(); ++i)
        if (images[i].image_id == id) return int(i);
    return -1;
}

int MultiAnnotatorDataset::annotator_index(std::string_view id) const {
    for (std::size_t i = 0; i < annotators.size(); ++i)
        if (annotators[i] == id) return int(i);
    return -1;
}

MultiAnnotatorDataset load_dataset(const std::filesystem::path& path,
                                   DatasetFormat format) {
    switch (format) {
        case DatasetFormat::annjson: return load_annjson(path);
        case DatasetFormat::vindr_csv: return load_vindr_csv(path);
    }
    throw std::invalid_argument("unknown dataset format");
}

void save_dataset(const MultiAnnotatorDataset& ds,
                  const std::filesystem::path& path,
                  const std::string& config_echo_json) {
    ordered_json root;
    root["classes"] = ds.classes;
    root["annotators"] = ds.annotators;
    ordered_json images = ordered_json::array();
    for (const ImageRecord& img : ds.images) {
        ordered_json rec;
        rec["id"] = img.image_id;
        rec["width"] = img.width;
        rec["height"] = img.height;
        if (!img.pixel_path.empty()) rec["pixels"] = img.pixel_path;
        images.push_back(std::move(rec));
    }
    root["images"] = std::move(images);
    ordered_json anns = ordered_json::array();
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        for (std::size_t t = 0; t < ds.annotators.size(); ++t) {
            for (const LabeledBox& lb : ds.boxes[i][t]) {
                ordered_json rec;
                rec["image_id"] = ds.images[i].image_id;
                rec["annotator_id"] = ds.annotators[t];
                rec["class"] = ds.classes[std::size_t(lb.class_id)];
                rec["x_min"] = lb.box.x_min;
                rec["y_min"] = lb.box.y_min;
                rec["x_max"] = lb.box.x_max;
                rec["y_max"] = lb.box.y_max;
                rec["score"] = lb.score;
                anns.push_back(std::move(rec));
            }
        }
    }
    root["annotations"] = std::move(anns);
    if (!config_echo_json.empty())
        root["config"] = ordered_json::parse(config_echo_json);
    write_file(path, root.dump(2) + "\n");
}

MultiAnnotatorDataset subset_by_images(const MultiAnnotatorDataset& ds,
                                       const std::vector<std::string>& ids) {
    MultiAnnotatorDataset out;
    out.classes = ds.classes;
    out.annotators = ds.annotators;
    for (const std::string& id : ids) {
        int idx = ds.image_index(id);
        if (idx < 0)
            throw std::invalid_argument("subset_by_images: unknown image '" + id + "'");
        out.images.push_back(ds.images[std::size_t(idx)]);
        out.boxes.push_back(ds.boxes[std::size_t(idx)]);
    }
    return out;
}

PixelGrid load_pgm(const std::filesystem::path& path) {
    std::string bytes = slurp(path);
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            char c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_token = [&]() -> std::string {
        skip_space();
        std::size_t start = pos;
        while (pos < bytes.size() &&
               !std::isspace(static_cast<unsigned char>(bytes[pos])))
            ++pos;
        if (start == pos) fail(path, "truncated PGM header");
        return bytes.substr(start, pos - start);
    };

    if (bytes.size() < 2 || bytes[0] != 'P') fail(path, "not a PGM file");
    if (bytes[1] == '2') fail(path, "ASCII PGM (P2) is unsupported; use binary P5");
    if (bytes[1] != '5') fail(path, "unsupported format (expected P5)");
    pos = 2;
    auto parse_int = [&](const std::string& tok) -> long {
        try {
            std::size_t p = 0;
            long v = std::stol(tok, &p);
            if (p != tok.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            fail(path, "malformed PGM header token '" + tok + "'");
        }
    };
    long width = parse_int(read_token());
    long height = parse_int(read_token());
    long maxval = parse_int(read_token());
    if (width <= 0 || height <= 0) fail(path, "non-positive PGM dimensions");
    if (maxval != 255) fail(path, "PGM maxval must be 255");
    if (pos >= bytes.size()) fail(path, "truncated PGM header");
    ++pos;  // single whitespace after maxval
    std::size_t count = std::size_t(width) * std::size_t(height);
    if (bytes.size() - pos < count) fail(path, "truncated PGM pixel data");
    PixelGrid grid;
    grid.width = int(width);
    grid.height = int(height);
    grid.values.assign(bytes.begin() + long(pos), bytes.begin() + long(pos + count));
    return grid;
}

void save_pgm(const PixelGrid& grid, const std::filesystem::path& path) {
    std::ostringstream header;
    header << "P5\n" << grid.width << " " << grid.height << "\n255\n";
    std::string bytes = header.str();
    bytes.append(grid.values.begin(), grid.values.end());
    write_file(path, bytes);
}

PixelGrid load_image_pixels(const ImageRecord& record,
                            const std::filesystem::path& base_dir) {
    if (record.pixel_path.empty())
        throw ParseError("image '" + record.image_id + "' has no pixel path");
    PixelGrid grid = load_pgm(base_dir / record.pixel_path);
    if (grid.width != record.width || grid.height != record.height)
        throw ParseError("image '" + record.image_id + "': PGM is " +
                         std::to_string(grid.width) + "x" +
                         std::to_string(grid.height) + " but the record says " +
                         std::to_string(record.width) + "x" +
                         std::to_string(record.height));
    return grid;
}

}  // namespace fusedet::annotations
