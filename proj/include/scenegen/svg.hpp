#pragma once

#include <string>

#include "scenegen/blueprint.hpp"
#include "scenegen/llm_parse.hpp"

namespace scenegen {

namespace detail {
inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}
}  // namespace detail

// One labeled rectangle per object in blueprint order, viewBox equal to the
// canvas. Coordinates are written in shortest round-trip form so the file
// carries the blueprint's exact numbers.
inline std::string render_layout(const SceneBlueprint& bp) {
  const auto num = [](double v) { return detail::format_number(v); };
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(bp.canvas.width) + "\" height=\"" +
       std::to_string(bp.canvas.height) + "\" viewBox=\"0 0 " + std::to_string(bp.canvas.width) + " " +
       std::to_string(bp.canvas.height) + "\">\n";
  s += "  <title>" + detail::xml_escape(bp.background_prompt) + "</title>\n";
  s += "  <rect x=\"0\" y=\"0\" width=\"" + std::to_string(bp.canvas.width) + "\" height=\"" +
       std::to_string(bp.canvas.height) + "\" fill=\"#f4f4f4\" stroke=\"#999999\"/>\n";
  for (const auto& o : bp.objects) {
    const std::string name = detail::xml_escape(o.name);
    s += "  <g data-name=\"" + name + "\">\n";
    s += "    <rect x=\"" + num(o.box.x) + "\" y=\"" + num(o.box.y) + "\" width=\"" + num(o.box.w) + "\" height=\"" +
         num(o.box.h) + "\" fill=\"none\" stroke=\"#d0342c\" stroke-width=\"2\"/>\n";
    s += "    <text x=\"" + num(o.box.x + 3) + "\" y=\"" + num(o.box.y + 14) +
         "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#d0342c\">" + name + "</text>\n";
    s += "  </g>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace scenegen
