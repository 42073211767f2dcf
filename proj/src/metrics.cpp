#include "brightvae/metrics.hpp"

#include <iomanip>
#include <sstream>

namespace brightvae {
namespace metrics {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

std::string to_csv(const MetricReport& report) {
  std::ostringstream os;
  os << "id,psnr,ssim,lpips\n";
  for (const auto& row : report.per_image) {
    os << row.id << "," << fmt(row.psnr) << "," << fmt(row.ssim) << ",";
    os << (row.lpips ? fmt(*row.lpips) : "-");
    os << "\n";
  }
  return os.str();
}

std::string to_json(const MetricReport& report) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"count\": " << report.count() << ",\n";
  os << "  \"mean_psnr\": " << fmt(report.mean_psnr()) << ",\n";
  os << "  \"mean_ssim\": " << fmt(report.mean_ssim()) << ",\n";
  const auto lp = report.mean_lpips();
  os << "  \"mean_lpips\": " << (lp ? fmt(*lp) : "null") << "\n";
  os << "}\n";
  return os.str();
}

}  // namespace metrics
}  // namespace brightvae
