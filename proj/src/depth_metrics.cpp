#include "evb/depth_metrics.hpp"

#include <algorithm>
#include <cmath>

#include "evb/error.hpp"
#include "evb/io_util.hpp"
#include "evb/pose_metrics.hpp"

namespace evb {

namespace {

void check_shapes(const DepthFrame& f) {
  if (f.pred.shape() != f.gt.shape()) throw InvalidArgument("pred and gt depth shapes differ");
}

bool valid_pair(double p, double g) {
  return std::isfinite(p) && std::isfinite(g) && p > 0.0 && g > 0.0;
}

}  // namespace

std::vector<bool> valid_mask(const DepthFrame& frame) {
  check_shapes(frame);
  std::vector<bool> m(frame.gt.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = valid_pair(frame.pred.at(i), frame.gt.at(i));
  return m;
}

double median_scale_factor(const DepthFrame& frame) {
  check_shapes(frame);
  std::vector<double> p, g;
  for (std::size_t i = 0; i < frame.gt.size(); ++i) {
    const double pv = frame.pred.at(i), gv = frame.gt.at(i);
    if (!valid_pair(pv, gv)) continue;
    p.push_back(pv);
    g.push_back(gv);
  }
  if (p.empty()) throw DegenerateInput("depth frame has no valid pixels");
  return median(std::move(g)) / median(std::move(p));
}

DepthFrame median_scale(const DepthFrame& frame) {
  const double s = median_scale_factor(frame);
  std::vector<double> scaled = frame.pred.to_f64();
  for (double& v : scaled) v *= s;
  return {Tensor(frame.pred.shape(), std::move(scaled)), frame.gt};
}

DepthScores depth_metrics(const DepthFrame& frame, bool align) {
  if (align) return depth_metrics(median_scale(frame), false);
  check_shapes(frame);
  DepthScores s;
  double rel_sum = 0.0;
  std::size_t good = 0;
  for (std::size_t i = 0; i < frame.gt.size(); ++i) {
    const double p = frame.pred.at(i), g = frame.gt.at(i);
    if (!valid_pair(p, g)) continue;
    ++s.n_valid;
    rel_sum += std::abs(p - g) / g;
    if (std::max(p / g, g / p) < 1.25) ++good;
  }
  if (s.n_valid == 0) throw DegenerateInput("depth frame has no valid pixels");
  s.abs_rel = rel_sum / static_cast<double>(s.n_valid);
  s.delta1 = static_cast<double>(good) / static_cast<double>(s.n_valid);
  return s;
}

namespace {

std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto c = line.find(',', pos);
    out.emplace_back(line.substr(pos, c == std::string_view::npos ? line.npos : c - pos));
    if (c == std::string_view::npos) break;
    pos = c + 1;
  }
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t\r");
    const auto e = f.find_last_not_of(" \t\r");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

}  // namespace

std::vector<DepthManifestRow> parse_depth_manifest(std::string_view text,
                                                   const std::filesystem::path& base,
                                                   const std::string& file) {
  std::vector<DepthManifestRow> rows;
  std::uint64_t line_no = 0;
  bool header = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const auto f = split_csv(line);
    if (!header) {
      if (f != std::vector<std::string>{"scene", "image", "pred_path", "gt_path"}) {
        throw ParseError(ParseError::Kind::kSyntax, file, std::nullopt, line_no,
                         "expected header scene,image,pred_path,gt_path");
      }
      header = true;
      continue;
    }
    if (f.size() != 4 || f[0].empty() || f[1].empty() || f[2].empty() || f[3].empty()) {
      throw ParseError(ParseError::Kind::kSyntax, file, std::nullopt, line_no,
                       "expected 4 non-empty fields");
    }
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_absolute() ? path : base / path;
    };
    rows.push_back({f[0], f[1], resolve(f[2]), resolve(f[3])});
  }
  if (!header) {
    throw ParseError(ParseError::Kind::kSyntax, file, std::nullopt, 1, "empty manifest");
  }
  return rows;
}

DepthReport evaluate_depth(const std::vector<DepthManifestRow>& rows, bool align,
                           unsigned threads) {
  if (rows.empty()) throw InvalidArgument("depth manifest lists no frames");
  DepthReport rep;
  rep.frames.resize(rows.size());
  parallel_for(rows.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      DepthFrame f{read_tensor(rows[i].pred_path), read_tensor(rows[i].gt_path)};
      auto& r = rep.frames[i];
      r.scene = rows[i].scene;
      r.image = rows[i].image;
      try {
        r.scale = align ? median_scale_factor(f) : 1.0;
        r.scores = depth_metrics(f, align);
      } catch (const Error& err) {
        throw InvalidArgument(rows[i].scene + "/" + rows[i].image + ": " + err.what());
      }
    }
  });
  for (const auto& f : rep.frames) {
    rep.abs_rel += f.scores.abs_rel;
    rep.delta1 += f.scores.delta1;
  }
  rep.abs_rel /= static_cast<double>(rep.frames.size());
  rep.delta1 /= static_cast<double>(rep.frames.size());
  return rep;
}

}  // namespace evb
