#include "lnmdet/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

namespace lnmdet {

using nlohmann::json;

void DatasetManifest::validate() const {
    require(!name.empty(), ErrorCategory::parse, "manifest needs a name");
    require(task == "B" || task == "C" || task == "HN", ErrorCategory::parse,
            "manifest task must be B, C or HN: " + task);
    require(split == "train" || split == "val" || split == "test" || split == "rfc-train",
            ErrorCategory::parse, "unknown manifest split: " + split);
    std::set<std::string> ids;
    for (const auto& s : slides) {
        require(!s.id.empty(), ErrorCategory::parse, "slide without id in manifest " + name);
        require(ids.insert(s.id).second, ErrorCategory::parse, "duplicate slide id " + s.id);
        require(s.spacing_um > 0, ErrorCategory::parse, "non-positive spacing for slide " + s.id);
    }
    for (const auto& c : cases) {
        require(c.slide_ids.size() == 5, ErrorCategory::parse,
                "case " + c.id + " must group exactly 5 slides");
        for (const auto& sid : c.slide_ids) {
            require(ids.count(sid), ErrorCategory::parse,
                    "case " + c.id + " references unknown slide " + sid);
        }
    }
}

std::string DatasetManifest::resolve(const std::string& rel_path) const {
    if (base_dir.empty()) return rel_path;
    return (std::filesystem::path(base_dir) / rel_path).string();
}

void save_manifest(const std::string& path, const DatasetManifest& m) {
    m.validate();
    json j;
    j["name"] = m.name;
    j["task"] = m.task;
    j["split"] = m.split;
    j["slides"] = json::array();
    for (const auto& s : m.slides) {
        json js;
        js["id"] = s.id;
        js["raster"] = s.raster_path;
        js["tissue_mask"] = s.tissue_path;
        js["lesion_mask"] = s.lesion_path;
        js["label"] = to_string(s.label);
        js["spacing_um"] = s.spacing_um;
        if (!s.center.empty()) js["center"] = s.center;
        if (!s.case_id.empty()) js["case"] = s.case_id;
        j["slides"].push_back(std::move(js));
    }
    if (!m.cases.empty()) {
        j["cases"] = json::array();
        for (const auto& c : m.cases) {
            json jc;
            jc["id"] = c.id;
            jc["slides"] = c.slide_ids;
            jc["reference_pn"] = to_string(c.reference);
            j["cases"].push_back(std::move(jc));
        }
    }
    std::ofstream out(path);
    require(out.good(), ErrorCategory::io, "cannot write manifest: " + path);
    out << j.dump(2) << '\n';
    require(out.good(), ErrorCategory::io, "manifest write failed: " + path);
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCategory::io, "cannot read manifest: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        raise(ErrorCategory::parse, "manifest " + path + ": " + e.what());
    }
    DatasetManifest m;
    try {
        m.name = j.at("name").get<std::string>();
        m.task = j.at("task").get<std::string>();
        m.split = j.at("split").get<std::string>();
        for (const auto& js : j.at("slides")) {
            SlideRecord s;
            s.id = js.at("id").get<std::string>();
            s.raster_path = js.at("raster").get<std::string>();
            s.tissue_path = js.at("tissue_mask").get<std::string>();
            s.lesion_path = js.at("lesion_mask").get<std::string>();
            s.label = slide_label_from_string(js.at("label").get<std::string>());
            s.spacing_um = js.at("spacing_um").get<double>();
            if (js.contains("center")) s.center = js.at("center").get<std::string>();
            if (js.contains("case")) s.case_id = js.at("case").get<std::string>();
            m.slides.push_back(std::move(s));
        }
        if (j.contains("cases")) {
            for (const auto& jc : j.at("cases")) {
                CaseRecord c;
                c.id = jc.at("id").get<std::string>();
                c.slide_ids = jc.at("slides").get<std::vector<std::string>>();
                c.reference = pn_stage_from_string(jc.at("reference_pn").get<std::string>());
                m.cases.push_back(std::move(c));
            }
        }
    } catch (const json::exception& e) {
        raise(ErrorCategory::parse, "manifest " + path + ": " + e.what());
    }
    m.base_dir = std::filesystem::path(path).parent_path().string();
    m.validate();
    return m;
}

}  // namespace lnmdet
