#pragma once

#include <string>

#include "lnmdet/common.hpp"

namespace lnmdet {

// Slide-level labels. Breast-analog slides carry a metastasis size class,
// the other tasks only a binary presence label.
enum class SlideLabel : int { negative = 0, itc = 1, micro = 2, macro = 3, positive = 4 };

inline bool is_positive(SlideLabel l) { return l != SlideLabel::negative; }

inline std::string to_string(SlideLabel l) {
    switch (l) {
        case SlideLabel::negative: return "negative";
        case SlideLabel::itc: return "itc";
        case SlideLabel::micro: return "micro";
        case SlideLabel::macro: return "macro";
        case SlideLabel::positive: return "positive";
    }
    return "negative";
}

inline SlideLabel slide_label_from_string(const std::string& s) {
    if (s == "negative") return SlideLabel::negative;
    if (s == "itc") return SlideLabel::itc;
    if (s == "micro") return SlideLabel::micro;
    if (s == "macro") return SlideLabel::macro;
    if (s == "positive") return SlideLabel::positive;
    raise(ErrorCategory::parse, "unknown slide label: " + s);
}

// Metastasis size classes in their total order.
enum class MetastasisClass : int { negative = 0, itc = 1, micro = 2, macro = 3 };

inline std::string to_string(MetastasisClass c) {
    switch (c) {
        case MetastasisClass::negative: return "negative";
        case MetastasisClass::itc: return "itc";
        case MetastasisClass::micro: return "micro";
        case MetastasisClass::macro: return "macro";
    }
    return "negative";
}

inline MetastasisClass metastasis_class_from_string(const std::string& s) {
    if (s == "negative") return MetastasisClass::negative;
    if (s == "itc") return MetastasisClass::itc;
    if (s == "micro") return MetastasisClass::micro;
    if (s == "macro") return MetastasisClass::macro;
    raise(ErrorCategory::parse, "unknown metastasis class: " + s);
}

// A size-class label for a breast-analog slide; positive is not a size class.
inline MetastasisClass label_to_class(SlideLabel l) {
    require(l != SlideLabel::positive, ErrorCategory::data,
            "binary positive label has no metastasis size class");
    return static_cast<MetastasisClass>(static_cast<int>(l));
}

enum class PnStage : int { pn0 = 0, pn0i = 1, pn1mi = 2, pn1 = 3, pn2 = 4 };

constexpr int kPnStages = 5;

inline std::string to_string(PnStage s) {
    switch (s) {
        case PnStage::pn0: return "pN0";
        case PnStage::pn0i: return "pN0(i+)";
        case PnStage::pn1mi: return "pN1mi";
        case PnStage::pn1: return "pN1";
        case PnStage::pn2: return "pN2";
    }
    return "pN0";
}

inline PnStage pn_stage_from_string(const std::string& s) {
    if (s == "pN0") return PnStage::pn0;
    if (s == "pN0(i+)") return PnStage::pn0i;
    if (s == "pN1mi") return PnStage::pn1mi;
    if (s == "pN1") return PnStage::pn1;
    if (s == "pN2") return PnStage::pn2;
    raise(ErrorCategory::parse, "unknown pN stage: " + s);
}

}  // namespace lnmdet
