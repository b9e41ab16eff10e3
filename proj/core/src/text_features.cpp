#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "medsynth/error.hpp"
#include "medsynth/eval_harness.hpp"

namespace medsynth {
namespace {

bool word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '\'' || c >= 0x80;
}

using SparseRow = std::vector<std::pair<std::size_t, double>>;

class TfidfVectorizer {
public:
    TfidfVectorizer(const std::vector<std::string>& docs, std::vector<std::string> stop_words)
        : stop_words_(std::move(stop_words)) {
        std::map<std::string, std::size_t> df;
        for (const auto& d : docs) {
            auto terms = document_terms(d, stop_words_);
            std::sort(terms.begin(), terms.end());
            terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
            for (auto& t : terms) ++df[t];
        }
        if (df.empty()) throw InvalidArgument("empty vocabulary: every token was removed or no text had tokens");
        const double n = static_cast<double>(docs.size());
        idf_.reserve(df.size());
        for (const auto& [term, count] : df) {
            index_.emplace(term, idf_.size());
            idf_.push_back(std::log(n / static_cast<double>(count)) + 1.0);
        }
    }

    std::size_t size() const { return idf_.size(); }

    SparseRow transform(const std::string& doc) const {
        std::map<std::size_t, double> tf;
        for (const auto& t : document_terms(doc, stop_words_))
            if (auto it = index_.find(t); it != index_.end()) tf[it->second] += 1.0;
        SparseRow row;
        double norm = 0.0;
        for (const auto& [j, count] : tf) {
            const double v = count * idf_[j];
            row.emplace_back(j, v);
            norm += v * v;
        }
        if (norm > 0.0) {
            norm = std::sqrt(norm);
            for (auto& e : row) e.second /= norm;
        }
        return row;
    }

private:
    std::vector<std::string> stop_words_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<double> idf_;
};

// Row-major weights: classes x features, plus a bias per class.
struct Linear {
    int classes = 0;
    std::size_t features = 0;
    std::vector<double> w;
    std::vector<double> b;

    void scores(const SparseRow& x, std::vector<double>& out) const {
        out.assign(b.begin(), b.end());
        for (int c = 0; c < classes; ++c) {
            const double* wc = w.data() + static_cast<std::size_t>(c) * features;
            double s = 0.0;
            for (const auto& [j, v] : x) s += wc[j] * v;
            out[c] += s;
        }
    }
};

void softmax(std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) sum += (v = std::exp(v - m));
    for (double& v : z) v /= sum;
}

class BaselineModel final : public ClassifierModel {
public:
    BaselineModel(TfidfVectorizer vec, Linear linear) : vec_(std::move(vec)), linear_(std::move(linear)) {}

    std::vector<int> predict(const std::vector<std::string>& texts) const override {
        std::vector<int> out;
        out.reserve(texts.size());
        std::vector<double> z;
        for (const auto& t : texts) {
            linear_.scores(vec_.transform(t), z);
            out.push_back(static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin()));
        }
        return out;
    }

private:
    TfidfVectorizer vec_;
    Linear linear_;
};

} // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (word_byte(c)) {
            cur += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    // Apostrophes only join letters; strip them at the edges.
    std::vector<std::string> cleaned;
    for (auto& t : out) {
        const auto first = t.find_first_not_of('\'');
        if (first == std::string::npos) continue;
        cleaned.push_back(t.substr(first, t.find_last_not_of('\'') - first + 1));
    }
    return cleaned;
}

std::vector<std::string> document_terms(std::string_view text, const std::vector<std::string>& stop_words) {
    std::vector<std::string> tokens = tokenize(text);
    if (!stop_words.empty()) {
        const std::set<std::string> stop(stop_words.begin(), stop_words.end());
        std::erase_if(tokens, [&](const std::string& t) { return stop.count(t) > 0; });
    }
    std::vector<std::string> terms = tokens;
    for (std::size_t i = 1; i < tokens.size(); ++i) terms.push_back(tokens[i - 1] + " " + tokens[i]);
    return terms;
}

std::unique_ptr<ClassifierModel> BaselineClassifier::train(const LabeledTextSet& set, std::uint64_t,
                                                           std::span<const double> weights) const {
    set.validate();
    if (set.empty()) throw InvalidArgument("training set is empty");
    if (!weights.empty() && weights.size() != set.size()) throw ShapeError("one weight per training sample is required");
    std::size_t present = 0;
    for (std::size_t n : set.class_counts()) present += n > 0;
    if (present < 2) throw InvalidArgument("training set needs at least two classes");
    if (config_.iterations < 0 || !(config_.learning_rate > 0.0) || !(config_.l2 >= 0.0))
        throw InvalidArgument("invalid baseline classifier settings");

    TfidfVectorizer vec(set.texts, config_.stop_words);
    std::vector<SparseRow> rows;
    rows.reserve(set.size());
    for (const auto& t : set.texts) rows.push_back(vec.transform(t));

    double total_weight = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("sample weights must be finite and >= 0");
        total_weight += w;
    }
    if (!(total_weight > 0.0)) throw InvalidArgument("sample weights sum to zero");

    Linear lin;
    lin.classes = static_cast<int>(set.class_names.size());
    lin.features = vec.size();
    lin.w.assign(static_cast<std::size_t>(lin.classes) * lin.features, 0.0);
    lin.b.assign(lin.classes, 0.0);
    std::vector<double> gw(lin.w.size()), gb(lin.classes), z;
    for (int it = 0; it < config_.iterations; ++it) {
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double w = weights.empty() ? 1.0 : weights[i];
            if (w == 0.0) continue;
            lin.scores(rows[i], z);
            softmax(z);
            z[set.targets[i]] -= 1.0;
            for (int c = 0; c < lin.classes; ++c) {
                const double d = w * z[c];
                gb[c] += d;
                double* g = gw.data() + static_cast<std::size_t>(c) * lin.features;
                for (const auto& [j, v] : rows[i]) g[j] += d * v;
            }
        }
        for (std::size_t k = 0; k < lin.w.size(); ++k)
            lin.w[k] -= config_.learning_rate * (gw[k] / total_weight + config_.l2 * lin.w[k]);
        for (int c = 0; c < lin.classes; ++c) lin.b[c] -= config_.learning_rate * gb[c] / total_weight;
    }
    return std::make_unique<BaselineModel>(std::move(vec), std::move(lin));
}

} // namespace medsynth
