#pragma once

#include <cstdio>
#include <string>

namespace nidlab {

// Serialization helpers for the files the tool emits. Output must be byte
// stable across runs, so numbers are formatted here rather than left to a
// JSON library: doubles with 17 significant digits (lossless round trip),
// integers as integers.
inline std::string json_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string json_num(int v) { return std::to_string(v); }
inline std::string json_num(long long v) { return std::to_string(v); }
inline std::string json_num(unsigned long long v) { return std::to_string(v); }

inline std::string json_str(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  out += '"';
  return out;
}

}  // namespace nidlab
