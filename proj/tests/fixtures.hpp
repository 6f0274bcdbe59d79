#pragma once

#include <string>

namespace fixtures {

inline const std::string kFarmhouseLayout =
    "Objects: [('a red farmhouse', [105, 228, 302, 245]), ('a weathered picket fence', [4, 385, 504, 112]), "
    "('an antique tractor', [28, 382, 157, 72]), ('a scarecrow', [368, 271, 66, 156]) ]\n"
    "Background prompt: A realistic image of a quiet countryside with rolling hills";

inline const std::string kLandscapeLayout =
    "Objects: [('a green car', [21, 181, 211, 159]), ('a blue truck', [269, 181, 209, 160]), "
    "('a red air balloon', [66, 8, 145, 135]), ('a bird', [296, 42, 143, 100])]\n"
    "Background prompt: A realistic image of a landscape scene";

inline const std::string kLivingRoomDescriptions =
    "output: {a sleek modern television: A realistic photo of a sleek modern television.,\n"
    "            a wooden table: A realistic photo of a sturdy wooden table with polished edges.,\n"
    "        vase of vibrant flowers: A realistic photo of a vase of vibrant flowers adding a touch of freshness.,   \n"
    "            a Golden Retriever: 'A realistic photo of a friendly and affectionate Golden Retriever with a \n"
    "            soft, golden-furred coat and its warm eyes filled with joy.,\n"
    "            a white cat: 'A realistic photo of a graceful and elegant white cat stretches leisurely, showcasing "
    "its pristine and \n"
    "            fluffy fur.}";

inline const std::string kFarmhouseDescriptions =
    "{a red farmhouse: A realistic photo of a red farmhouse with an old-fashioned charm.,\n"
    " a weathered picket fence: A realistic photo of a weathered picket fence.,\n"
    " an antique tractor: A realistic photo of an antique tractor, though worn.,\n"
    " a scarecrow: A realistic photo of a scarecrow.}";

inline const std::string kFarmhouseCaption =
    "In the quiet countryside, a red farmhouse stands with an old-fashioned charm. Nearby, a weathered picket fence "
    "surrounds a garden of wildflowers. An antique tractor, though worn, rests as a reminder of hard work. A "
    "scarecrow watches over fields of swaying crops.";

}  // namespace fixtures
