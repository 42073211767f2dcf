#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <json.hpp>

#include "brightvae/image_io.hpp"
#include "brightvae/metrics.hpp"
#include "test_util.hpp"

using namespace brightvae;
using testutil::fixture_dir;
using testutil::random_tensor;

TEST_CASE("psnr matches the closed form and caps at 100 dB") {
  // Four pixels differing by 0.1 each: MSE = 0.01, PSNR = 20 dB.
  Tensor<double> a({1, 1, 2, 2}, {0.1, 0.2, 0.3, 0.4});
  Tensor<double> b({1, 1, 2, 2}, {0.2, 0.3, 0.4, 0.5});
  CHECK(metrics::psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(metrics::psnr(a, a) == 100.0);
  // Custom peak value shifts the score by 20*log10(max).
  CHECK(metrics::psnr(a, b, 2.0) ==
        doctest::Approx(20.0 + 20.0 * std::log10(2.0)).epsilon(1e-9));
}

TEST_CASE("psnr degrades monotonically with noise level") {
  Rng rng(1);
  Tensor<double> clean = random_tensor({3, 32, 32}, rng, 0.2, 0.8);
  double prev = 1e9;
  for (double sigma : {0.01, 0.05, 0.1}) {
    Tensor<double> noisy = clean;
    Rng nrng(2);
    for (int64_t i = 0; i < noisy.numel(); ++i) noisy[i] += nrng.normal() * sigma;
    const double p = metrics::psnr(noisy, clean);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim matches the external oracle fixture") {
  std::ifstream in(fixture_dir() / "ssim_expected.json");
  REQUIRE(in.good());
  nlohmann::json expected = nlohmann::json::parse(in);
  REQUIRE(expected.size() == 10);
  for (const auto& entry : expected) {
    const std::string stem = entry.at("pair").get<std::string>();
    Tensor<double> a = read_png(fixture_dir() / (stem + "_a.png"));
    Tensor<double> b = read_png(fixture_dir() / (stem + "_b.png"));
    CHECK(metrics::ssim(a, b) ==
          doctest::Approx(entry.at("ssim").get<double>()).epsilon(1e-4));
  }
}

TEST_CASE("ssim is 1 for identical images and symmetric") {
  Rng rng(3);
  Tensor<double> a = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
  Tensor<double> b = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
  CHECK(metrics::ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(metrics::ssim(a, b) == doctest::Approx(metrics::ssim(b, a)).epsilon(1e-12));
}

TEST_CASE("lpips is zero for identical inputs and grows with distortion") {
  Rng rng(4);
  auto ext = losses::RandomFeatureExtractor<double>::make(11);
  Tensor<double> img = random_tensor({3, 32, 32}, rng, 0.2, 0.8);
  CHECK(metrics::lpips(img, img, ext) == doctest::Approx(0.0));

  Tensor<double> mild = img, strong = img;
  Rng nrng(5);
  for (int64_t i = 0; i < img.numel(); ++i) {
    const double n = nrng.normal();
    mild[i] += 0.02 * n;
    strong[i] += 0.2 * n;
  }
  const double d_mild = metrics::lpips(mild, img, ext);
  const double d_strong = metrics::lpips(strong, img, ext);
  CHECK(d_mild > 0.0);
  CHECK(d_strong > d_mild);
}

TEST_CASE("metric report aggregates and serializes") {
  metrics::MetricReport report;
  report.per_image.push_back({"a", 20.0, 0.8, 0.1});
  report.per_image.push_back({"b", 30.0, 0.9, 0.3});
  CHECK(report.mean_psnr() == doctest::Approx(25.0));
  CHECK(report.mean_ssim() == doctest::Approx(0.85));
  REQUIRE(report.mean_lpips().has_value());
  CHECK(*report.mean_lpips() == doctest::Approx(0.2));

  const std::string csv = metrics::to_csv(report);
  CHECK(csv.rfind("id,psnr,ssim,lpips\n", 0) == 0);
  CHECK(csv.find("\na,") != std::string::npos);

  nlohmann::json j = nlohmann::json::parse(metrics::to_json(report));
  CHECK(j.at("count").get<int>() == 2);
  CHECK(j.at("mean_psnr").get<double>() == doctest::Approx(25.0));

  // Without LPIPS the column renders as "-" and the JSON mean goes null.
  report.per_image[0].lpips.reset();
  report.per_image[1].lpips.reset();
  CHECK_FALSE(report.mean_lpips().has_value());
  CHECK(metrics::to_csv(report).find(",-") != std::string::npos);
  CHECK(nlohmann::json::parse(metrics::to_json(report)).at("mean_lpips").is_null());
}
