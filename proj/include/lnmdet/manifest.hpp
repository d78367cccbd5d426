#pragma once

#include <string>
#include <vector>

#include "lnmdet/types.hpp"

namespace lnmdet {

struct SlideRecord {
    std::string id;
    std::string raster_path;   // relative to the manifest file
    std::string tissue_path;
    std::string lesion_path;
    SlideLabel label = SlideLabel::negative;
    double spacing_um = 0.5;
    std::string center;
    std::string case_id;  // optional; set for staged test slides
};

struct CaseRecord {
    std::string id;
    std::vector<std::string> slide_ids;  // exactly 5
    PnStage reference = PnStage::pn0;
};

struct DatasetManifest {
    std::string name;
    std::string task;   // "B", "C" or "HN"
    std::string split;  // "train", "val", "test", "rfc-train"
    std::vector<SlideRecord> slides;
    std::vector<CaseRecord> cases;  // staged splits only
    std::string base_dir;           // directory of the manifest file; not serialized

    void validate() const;
    std::string resolve(const std::string& rel_path) const;
};

void save_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::string& path);

}  // namespace lnmdet
