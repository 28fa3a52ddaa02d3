#pragma once

#include <string>
#include <vector>

#include "casdet/evaluation.hpp"
#include "casdet/features.hpp"
#include "casdet/postprocess.hpp"
#include "casdet/signal_io.hpp"

namespace casdet::cli {

// ROC curve with the chance diagonal and the AUC in the title.
std::string roc_svg(const RocCurve& curve, const std::string& title);

// Log-magnitude spectrogram, labels as bands above it and detections below.
std::string spectrogram_svg(const Spectrogram& spectrogram, const std::vector<LabelEvent>& labels,
                            const std::vector<DetectedEvent>& events, const std::string& title);

// Parses the `threshold,fpr,tpr` CSV written by `evaluate`; `#` lines are skipped.
RocCurve parse_roc_csv(const std::string& text);

}  // namespace casdet::cli
