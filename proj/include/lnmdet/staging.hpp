#pragma once

#include <vector>

#include "lnmdet/types.hpp"

namespace lnmdet {

// Case-level pN stage from exactly five per-node metastasis classes.
// A positive node is a node with a micro- or macro-metastasis; ITC-only
// nodes do not count toward the pN1/pN2 node tally.
inline PnStage pn_stage(const std::vector<MetastasisClass>& nodes) {
    require(nodes.size() == 5, ErrorCategory::data,
            "pn_stage needs exactly 5 slide classes, got " + std::to_string(nodes.size()));
    int itc = 0, micro = 0, macro = 0;
    for (MetastasisClass c : nodes) {
        if (c == MetastasisClass::itc) ++itc;
        if (c == MetastasisClass::micro) ++micro;
        if (c == MetastasisClass::macro) ++macro;
    }
    if (macro > 0) {
        const int positive_nodes = micro + macro;
        return positive_nodes <= 3 ? PnStage::pn1 : PnStage::pn2;
    }
    if (micro > 0) return PnStage::pn1mi;
    if (itc > 0) return PnStage::pn0i;
    return PnStage::pn0;
}

}  // namespace lnmdet
