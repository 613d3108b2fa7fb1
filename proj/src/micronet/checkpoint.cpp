#include "disptrack/micronet/checkpoint.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace disptrack::micronet {
namespace {

constexpr std::string_view kMagic = "disptrack-checkpoint 1";

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_hexfloat(const std::string& token, std::size_t line) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
    throw CheckpointError("checkpoint line " + std::to_string(line) + ": bad number '" +
                          token + "'");
  }
  return v;
}

}  // namespace

const DenseParams& Checkpoint::block(const std::string& name) const {
  for (const auto& [key, params] : blocks) {
    if (key == name) return params;
  }
  throw CheckpointError("checkpoint has no block '" + name + "'");
}

// Layout:
//   disptrack-checkpoint 1
//   [config]
//   key = value            (one per line)
//   [block NAME]
//   layers L
//   layer IN OUT
//   w v v v ...            (IN*OUT values, column-major)
//   b v v ...              (OUT values)
//   ... repeated per layer, then per block
//   end
std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  std::ostringstream out;
  out << kMagic << "\n[config]\n" << checkpoint.config.to_text();
  for (const auto& [name, params] : checkpoint.blocks) {
    if (name.empty() || name.find_first_of(" \t\n]") != std::string::npos) {
      throw CheckpointError("invalid block name '" + name + "'");
    }
    out << "[block " << name << "]\n";
    out << "layers " << params.layer_count() << "\n";
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
      const Matrix& w = params.weights[l];
      out << "layer " << w.rows() << " " << w.cols() << "\nw";
      for (Eigen::Index i = 0; i < w.size(); ++i) out << " " << hexfloat(w.data()[i]);
      out << "\nb";
      for (Eigen::Index i = 0; i < params.biases[l].size(); ++i) {
        out << " " << hexfloat(params.biases[l](i));
      }
      out << "\n";
    }
  }
  out << "end\n";
  return out.str();
}

Checkpoint parse_checkpoint(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return true;
    }
    return false;
  };
  auto fail = [&](const std::string& what) -> CheckpointError {
    return CheckpointError("checkpoint line " + std::to_string(line_no) + ": " + what);
  };

  if (!next() || line != kMagic) throw fail("missing header '" + std::string(kMagic) + "'");
  if (!next() || line != "[config]") throw fail("expected [config]");

  Checkpoint cp;
  std::string config_text;
  bool ended = false;
  while (next()) {
    if (line.rfind("[block ", 0) == 0 || line == "end") break;
    config_text += line + "\n";
  }
  cp.config = KeyValueConfig::parse(config_text);

  while (true) {
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.rfind("[block ", 0) != 0 || line.back() != ']') throw fail("expected [block NAME]");
    const std::string name = line.substr(7, line.size() - 8);
    DenseParams params;
    if (!next()) throw fail("truncated block");
    std::istringstream hdr(line);
    std::string tag;
    std::size_t layers = 0;
    if (!(hdr >> tag >> layers) || tag != "layers") throw fail("expected 'layers N'");
    for (std::size_t l = 0; l < layers; ++l) {
      if (!next()) throw fail("truncated layer");
      std::istringstream ls(line);
      Eigen::Index rows = 0, cols = 0;
      if (!(ls >> tag >> rows >> cols) || tag != "layer" || rows < 1 || cols < 1) {
        throw fail("expected 'layer IN OUT'");
      }
      if (l > 0 && params.weights.back().cols() != rows) throw fail("layer widths do not chain");
      Matrix w(rows, cols);
      RowVector b(cols);
      for (int part = 0; part < 2; ++part) {
        if (!next()) throw fail("truncated values");
        std::istringstream vs(line);
        vs >> tag;
        if (tag != (part == 0 ? "w" : "b")) throw fail("expected value row");
        double* data = part == 0 ? w.data() : b.data();
        const Eigen::Index count = part == 0 ? w.size() : b.size();
        std::string token;
        Eigen::Index i = 0;
        while (vs >> token) {
          if (i >= count) throw fail("too many values");
          data[i++] = parse_hexfloat(token, line_no);
        }
        if (i != count) throw fail("too few values");
      }
      params.weights.push_back(std::move(w));
      params.biases.push_back(std::move(b));
    }
    cp.blocks.emplace_back(name, std::move(params));
    if (!next()) break;
  }
  if (!ended) throw fail("missing 'end'");
  return cp;
}

}  // namespace disptrack::micronet
