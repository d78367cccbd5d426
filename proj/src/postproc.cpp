#include "lnmdet/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace lnmdet {

std::vector<Detection> nms(const LikelihoodMap& map, double radius_um, double stop) {
    require(radius_um > 0, ErrorCategory::data, "suppression radius must be positive");
    std::vector<float> work = map.prob;
    for (std::size_t i = 0; i < work.size(); ++i) {
        if (!map.valid[i]) work[i] = 0.f;
    }
    const double pitch = map.cell_um();
    const std::int64_t radius_cells = static_cast<std::int64_t>(std::ceil(radius_um / pitch));

    std::vector<Detection> out;
    for (;;) {
        float best = 0.f;
        std::int64_t by = -1, bx = -1;
        for (std::int64_t y = 0; y < map.height; ++y) {
            const float* row = work.data() + y * map.width;
            for (std::int64_t x = 0; x < map.width; ++x) {
                if (row[x] > best) {
                    best = row[x];
                    by = y;
                    bx = x;
                }
            }
        }
        if (by < 0 || static_cast<double>(best) <= stop) break;
        out.push_back(Detection{map.x_um(bx), map.y_um(by), static_cast<double>(best)});
        for (std::int64_t y = std::max<std::int64_t>(0, by - radius_cells);
             y <= std::min(map.height - 1, by + radius_cells); ++y) {
            for (std::int64_t x = std::max<std::int64_t>(0, bx - radius_cells);
                 x <= std::min(map.width - 1, bx + radius_cells); ++x) {
                const double dy = static_cast<double>(y - by) * pitch;
                const double dx = static_cast<double>(x - bx) * pitch;
                if (dy * dy + dx * dx <= radius_um * radius_um) {
                    work[map.idx(y, x)] = 0.f;
                }
            }
        }
    }
    return out;
}

double slide_score(const LikelihoodMap& map) {
    double best = 0.0;
    for (std::size_t i = 0; i < map.prob.size(); ++i) {
        if (map.valid[i] && static_cast<double>(map.prob[i]) > best) {
            best = static_cast<double>(map.prob[i]);
        }
    }
    return best;
}

namespace {

double hull_diameter(const std::vector<std::pair<double, double>>& pts) {
    // Andrew monotone chain, then brute force over hull vertices
    if (pts.size() == 1) return 0.0;
    std::vector<std::pair<double, double>> p = pts;
    std::sort(p.begin(), p.end());
    auto cross = [](const auto& o, const auto& a, const auto& b) {
        return (a.first - o.first) * (b.second - o.second) -
               (a.second - o.second) * (b.first - o.first);
    };
    std::vector<std::pair<double, double>> hull(2 * p.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p[i]) <= 0) --k;
        hull[k++] = p[i];
    }
    const std::size_t lower = k + 1;
    for (std::size_t i = p.size() - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], p[i]) <= 0) --k;
        hull[k++] = p[i];
    }
    hull.resize(k > 1 ? k - 1 : k);
    double best = 0.0;
    for (std::size_t i = 0; i < hull.size(); ++i) {
        for (std::size_t j = i + 1; j < hull.size(); ++j) {
            const double dx = hull[i].first - hull[j].first;
            const double dy = hull[i].second - hull[j].second;
            best = std::max(best, dx * dx + dy * dy);
        }
    }
    return std::sqrt(best);
}

}  // namespace

RegionFeatures extract_features(const LikelihoodMap& map, double threshold) {
    const std::int64_t h = map.height, w = map.width;
    std::vector<std::int8_t> above(static_cast<std::size_t>(h * w), 0);
    for (std::int64_t i = 0; i < h * w; ++i) {
        above[static_cast<std::size_t>(i)] =
            map.valid[static_cast<std::size_t>(i)] &&
            static_cast<double>(map.prob[static_cast<std::size_t>(i)]) > threshold;
    }

    RegionFeatures best;
    std::vector<std::int8_t> seen(static_cast<std::size_t>(h * w), 0);
    std::vector<std::int64_t> stack;
    const double pitch = map.cell_um();
    for (std::int64_t start = 0; start < h * w; ++start) {
        if (!above[static_cast<std::size_t>(start)] || seen[static_cast<std::size_t>(start)]) continue;
        // flood fill one 8-connected component
        std::vector<std::int64_t> cells;
        stack.assign(1, start);
        seen[static_cast<std::size_t>(start)] = 1;
        while (!stack.empty()) {
            const std::int64_t cur = stack.back();
            stack.pop_back();
            cells.push_back(cur);
            const std::int64_t cy = cur / w, cx = cur % w;
            for (std::int64_t dy = -1; dy <= 1; ++dy) {
                for (std::int64_t dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    const std::int64_t ny = cy + dy, nx = cx + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    const std::int64_t ni = ny * w + nx;
                    if (above[static_cast<std::size_t>(ni)] && !seen[static_cast<std::size_t>(ni)]) {
                        seen[static_cast<std::size_t>(ni)] = 1;
                        stack.push_back(ni);
                    }
                }
            }
        }
        RegionFeatures f;
        std::vector<std::pair<double, double>> pts;
        pts.reserve(cells.size());
        double sum = 0.0;
        for (std::int64_t c : cells) {
            const std::int64_t cy = c / w, cx = c % w;
            pts.emplace_back(map.x_um(cx), map.y_um(cy));
            const double p = static_cast<double>(map.prob[static_cast<std::size_t>(c)]);
            sum += p;
            f.max_prob = std::max(f.max_prob, p);
        }
        f.mean_prob = sum / static_cast<double>(cells.size());
        f.area_um2 = static_cast<double>(cells.size()) * pitch * pitch;
        f.diameter_um = hull_diameter(pts) + pitch;  // one-cell extent = cell pitch
        if (f.diameter_um > best.diameter_um) best = f;
    }
    return best;
}

void save_detections(const std::string& path, const std::vector<Detection>& detections) {
    std::ofstream out(path);
    require(out.good(), ErrorCategory::io, "cannot write detections: " + path);
    out << "x_um,y_um,likelihood\n";
    char buf[128];
    for (const auto& d : detections) {
        std::snprintf(buf, sizeof(buf), "%.3f,%.3f,%.6f\n", d.x_um, d.y_um, d.likelihood);
        out << buf;
    }
    require(out.good(), ErrorCategory::io, "failed writing detections: " + path);
}

std::vector<Detection> load_detections(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCategory::io, "cannot read detections: " + path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorCategory::parse,
            "empty detections file: " + path);
    require(line == "x_um,y_um,likelihood", ErrorCategory::parse,
            "unexpected detections header in " + path);
    std::vector<Detection> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Detection d;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &d.x_um, &d.y_um, &d.likelihood) != 3) {
            raise(ErrorCategory::parse, "bad detections line in " + path + ": " + line);
        }
        out.push_back(d);
    }
    return out;
}

}  // namespace lnmdet
