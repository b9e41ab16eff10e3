#include "medsynth/image_metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "medsynth/error.hpp"
#include "medsynth/parallel.hpp"
#include "medsynth/rng.hpp"
#include "medsynth/table.hpp"

namespace medsynth {
namespace {

constexpr int kWindow = 7;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
// Eigenvalues of the covariance product below this are treated as a
// genuinely indefinite input rather than round-off.
constexpr double kNegativeEigenTolerance = 1e-6;

std::array<double, kWindow> gaussian_window() {
    std::array<double, kWindow> w{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kWindow / 2;
        w[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

using Matrix = Eigen::MatrixXd;

Matrix to_matrix(const FrechetStats& s) {
    Matrix m(s.dim, s.dim);
    for (std::size_t i = 0; i < s.dim; ++i)
        for (std::size_t j = 0; j < s.dim; ++j) m(i, j) = s.sigma[i * s.dim + j];
    return m;
}

// Symmetric PSD square root via eigendecomposition.
Matrix sqrt_psd(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()));
    if (eig.info() != Eigen::Success) throw Error("eigendecomposition did not converge");
    Eigen::VectorXd values = eig.eigenvalues();
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values(i) < -kNegativeEigenTolerance) throw Error("covariance is not positive semidefinite");
        values(i) = std::sqrt(std::max(values(i), 0.0));
    }
    return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

struct ClassIndex {
    std::map<std::string, std::vector<std::size_t>> members;
};

} // namespace

std::vector<double> Pool8Extractor::extract(const ImageTensor& image) const {
    if (image.height % 8 != 0 || image.width % 8 != 0 || image.height == 0)
        throw ShapeError("pool8 needs image sides divisible by 8");
    const int by = image.height / 8, bx = image.width / 8;
    const double inv = 1.0 / (static_cast<double>(by) * bx);
    std::vector<double> out(64, 0.0);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) out[(y / by) * 8 + x / bx] += image.at(y, x);
    for (double& v : out) v *= inv;
    return out;
}

FeatureSet extract_features(const FeatureExtractor& extractor, const std::vector<ImageTensor>& images, int threads) {
    FeatureSet out(images.size());
    parallel_for(images.size(), threads, [&](std::size_t i) { out[i] = extractor.extract(images[i]); });
    return out;
}

FeatureSet parse_feature_text(std::string_view content) {
    FeatureSet out;
    std::istringstream lines{std::string(content)};
    for (std::string line; std::getline(lines, line);) {
        std::istringstream fields(line);
        std::vector<double> v;
        std::string tok;
        while (fields >> tok) {
            try {
                std::size_t used = 0;
                v.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw DataError("bad feature value: " + tok);
            } catch (const std::logic_error&) {
                throw DataError("bad feature value: " + tok);
            }
        }
        if (v.empty()) continue;
        if (!out.empty() && v.size() != out.front().size()) throw DataError("feature vectors differ in length");
        out.push_back(std::move(v));
    }
    return out;
}

FeatureSet read_feature_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open feature file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_feature_text(buf.str());
}

double ssim(const ImageTensor& a, const ImageTensor& b) {
    if (!a.same_shape(b)) throw ShapeError("ssim: image shapes differ");
    if (a.height < kWindow || a.width < kWindow) throw ShapeError("ssim: images smaller than the 7x7 window");
    static const auto w = gaussian_window();
    const int rows = a.height - kWindow + 1, cols = a.width - kWindow + 1;
    double total = 0.0;
    for (int y = 0; y < rows; ++y)
        for (int x = 0; x < cols; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < kWindow; ++i)
                for (int j = 0; j < kWindow; ++j) {
                    const double wt = w[i] * w[j];
                    const double va = a.at(y + i, x + j), vb = b.at(y + i, x + j);
                    ma += wt * va;
                    mb += wt * vb;
                    saa += wt * va * va;
                    sbb += wt * vb * vb;
                    sab += wt * va * vb;
                }
            const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
            total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (var_a + var_b + kC2));
        }
    return total / (static_cast<double>(rows) * cols);
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
    if (!a.same_shape(b)) throw ShapeError("psnr: image shapes differ");
    if (a.size() == 0) throw ShapeError("psnr: empty images");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.values[i] - b.values[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

FrechetStats gaussian_stats(const FeatureSet& features) {
    if (features.size() < 2) throw InvalidArgument("gaussian_stats needs at least two feature vectors");
    const std::size_t d = features.front().size();
    const std::size_t n = features.size();
    Matrix x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        if (features[i].size() != d) throw ShapeError("feature vectors differ in length");
        for (std::size_t j = 0; j < d; ++j) x(i, j) = features[i][j];
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Matrix centered = x.rowwise() - mean;
    Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    cov = 0.5 * (cov + cov.transpose());
    FrechetStats s;
    s.dim = d;
    s.mu.assign(mean.data(), mean.data() + d);
    s.sigma.resize(d * d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) s.sigma[i * d + j] = cov(i, j);
    return s;
}

double frechet_distance(const FrechetStats& a, const FrechetStats& b) {
    if (a.dim != b.dim || a.mu.size() != a.dim || b.mu.size() != b.dim) throw ShapeError("frechet_distance: dimension mismatch");
    double mean_term = 0.0;
    for (std::size_t i = 0; i < a.dim; ++i) {
        const double d = a.mu[i] - b.mu[i];
        mean_term += d * d;
    }
    const Matrix s1 = to_matrix(a), s2 = to_matrix(b);
    const Matrix root1 = sqrt_psd(s1);
    const Matrix product = root1 * s2 * root1;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (product + product.transpose()), Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw Error("eigendecomposition did not converge");
    double trace_sqrt = 0.0;
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
        const double v = eig.eigenvalues()(i);
        if (v < -kNegativeEigenTolerance) throw Error("covariance product has a negative eigenvalue");
        trace_sqrt += std::sqrt(std::max(v, 0.0));
    }
    const double d2 = mean_term + s1.trace() + s2.trace() - 2.0 * trace_sqrt;
    return std::max(d2, 0.0);
}

MetricsReport evaluate_generation(const LabeledImageSet& real, const LabeledImageSet& generated,
                                  const FeatureExtractor& extractor, std::uint64_t pairing_seed, Pairing pairing,
                                  int threads) {
    if (real.empty() || generated.empty()) throw InvalidArgument("evaluate_generation needs two non-empty sets");
    return evaluate_generation(real, generated, extract_features(extractor, real.images, threads),
                               extract_features(extractor, generated.images, threads), pairing_seed, pairing);
}

MetricsReport evaluate_generation(const LabeledImageSet& real, const LabeledImageSet& generated,
                                  const FeatureSet& real_features, const FeatureSet& generated_features,
                                  std::uint64_t pairing_seed, Pairing pairing) {
    if (real.empty() || generated.empty()) throw InvalidArgument("evaluate_generation needs two non-empty sets");
    real.validate();
    generated.validate();
    if (real_features.size() != real.size() || generated_features.size() != generated.size())
        throw ShapeError("one feature vector per image is required");

    MetricsReport report;
    report.fid = frechet_distance(gaussian_stats(real_features), gaussian_stats(generated_features));

    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (generated, real)
    if (pairing == Pairing::Identity) {
        if (real.size() != generated.size()) throw InvalidArgument("identity pairing needs equally sized sets");
        const std::size_t n = std::min(real.size(), kMaxMetricPairs);
        for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(i, i);
    } else {
        std::map<std::string, std::vector<std::size_t>> real_by_class;
        for (std::size_t i = 0; i < real.size(); ++i) real_by_class[real.class_names[real.labels[i]]].push_back(i);
        const std::size_t n = std::min({real.size(), generated.size(), kMaxMetricPairs});
        Rng rng(pairing_seed);
        std::vector<std::size_t> order(generated.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t g = order[k];
            const std::string& name = generated.class_names[generated.labels[g]];
            auto it = real_by_class.find(name);
            if (it == real_by_class.end()) throw InvalidArgument("real set has no images of class " + name);
            pairs.emplace_back(g, it->second[rng.uniform_index(it->second.size())]);
        }
    }
    double ssim_sum = 0.0, psnr_sum = 0.0;
    for (const auto& [g, r] : pairs) {
        ssim_sum += ssim(generated.images[g], real.images[r]);
        psnr_sum += psnr(generated.images[g], real.images[r]);
    }
    report.pairs = pairs.size();
    report.ssim = ssim_sum / static_cast<double>(pairs.size());
    report.psnr = psnr_sum / static_cast<double>(pairs.size());
    return report;
}

std::string format_metrics_record(const MetricsReport& r) {
    return "fid=" + format_number(r.fid) + "\nssim=" + format_number(r.ssim) + "\npsnr=" +
           (std::isinf(r.psnr) ? std::string("identical") : format_number(r.psnr)) + "\npairs=" +
           std::to_string(r.pairs) + "\n";
}

std::string format_metrics_row(const MetricsReport& r, int epoch, double loss) {
    return history_csv_row({epoch, loss, r.fid, r.ssim, r.psnr});
}

std::string format_psnr(double value) {
    if (std::isinf(value)) return "identical";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", value);
    return buf;
}

std::string render_image_table(const std::vector<ImageTableRow>& rows) {
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) {
        char fid[32], s[32];
        std::snprintf(fid, sizeof fid, "%.4f", r.metrics.fid);
        std::snprintf(s, sizeof s, "%.4f", r.metrics.ssim);
        cells.push_back({r.dataset, r.model, fid, s, format_psnr(r.metrics.psnr)});
    }
    return render_table({"Dataset", "Model Name", "FID ↓", "SSIM ↑", "PSNR ↑"},
                        {Align::Left, Align::Left, Align::Right, Align::Right, Align::Right}, cells);
}

std::vector<double> normalize_series(const std::vector<double>& series) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : series)
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    std::vector<double> out;
    out.reserve(series.size());
    for (double v : series) {
        if (!std::isfinite(v))
            out.push_back(std::numeric_limits<double>::quiet_NaN());
        else if (hi == lo)
            out.push_back(0.5);
        else
            out.push_back((v - lo) / (hi - lo));
    }
    return out;
}

NormalizedCurves normalize_curves(const TrainingHistory& history) {
    NormalizedCurves out;
    std::vector<double> fid, s, p;
    for (const auto& r : history.records) {
        out.epochs.push_back(r.epoch);
        fid.push_back(r.fid);
        s.push_back(r.ssim);
        p.push_back(r.psnr);
    }
    out.fid = normalize_series(fid);
    out.ssim = normalize_series(s);
    out.psnr = normalize_series(p);
    return out;
}

} // namespace medsynth
