#pragma once

#include <string>

#include "grfp/backbone.hpp"
#include "grfp/stgru.hpp"

namespace grfp {

// Checkpoints are directories: one GRFPTNSR container per parameter plus a
// manifest.txt of tab-separated "name<TAB>file" lines. lambda is stored as a
// 0-rank tensor (the positive value itself, not its log).

void save_stgru(const StgruParams<float>& p, const std::string& dir);
StgruParams<float> load_stgru(const std::string& dir);

void save_backbone(const BackboneParams<float>& p, const std::string& dir);
BackboneParams<float> load_backbone(const std::string& dir);

}  // namespace grfp
