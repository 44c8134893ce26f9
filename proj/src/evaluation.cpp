#include "robust_embed/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "robust_embed/rng.hpp"

namespace robust_embed {

namespace {

constexpr double kUnitTolerance = 1e-6;
constexpr std::size_t kEmbedChunk = 64;

std::string where(const std::filesystem::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line) + ": ";
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto tab = line.find('\t', pos);
        out.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
        if (tab == std::string::npos) break;
        pos = tab + 1;
    }
    return out;
}

bool parse_double(const std::string& s, double& out) {
    const char* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

bool parse_int(const std::string& s, int& out) {
    const char* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(17);
    return out;
}

std::vector<double> row_of(const Matrix& m, Eigen::Index r) {
    return {m.row(r).data(), m.row(r).data() + m.cols()};
}

void require_unit_rows(const Matrix& m, const char* what) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        if (std::abs(m.row(r).norm() - 1.0) > kUnitTolerance) {
            throw std::invalid_argument(std::string(what) + ": row " + std::to_string(r) + " is not unit-normalized");
        }
    }
}

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
        i = j + 1;
    }
    return rank;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix p = logits;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        p.row(r).array() -= p.row(r).maxCoeff();
        p.row(r) = p.row(r).array().exp().matrix();
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

}  // namespace

std::vector<StsExample> load_sts_tsv(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    std::vector<StsExample> data;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto cols = split_tabs(line);
        if (cols.size() != 3) throw std::runtime_error(where(path, n) + "expected sentence_a<TAB>sentence_b<TAB>score");
        StsExample ex{cols[0], cols[1], 0.0};
        if (!parse_double(cols[2], ex.gold)) throw std::runtime_error(where(path, n) + "bad score '" + cols[2] + "'");
        if (!(ex.gold >= 0.0 && ex.gold <= 5.0)) throw std::runtime_error(where(path, n) + "score outside [0, 5]");
        if (split_words(ex.sentence_a).empty() || split_words(ex.sentence_b).empty()) {
            throw std::runtime_error(where(path, n) + "empty sentence");
        }
        data.push_back(std::move(ex));
    }
    return data;
}

std::vector<LabeledText> load_classification_tsv(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    std::vector<LabeledText> data;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto cols = split_tabs(line);
        if (cols.size() != 2) throw std::runtime_error(where(path, n) + "expected text<TAB>label");
        LabeledText ex{cols[0], 0};
        if (!parse_int(cols[1], ex.label) || ex.label < 0) {
            throw std::runtime_error(where(path, n) + "bad label '" + cols[1] + "'");
        }
        if (split_words(ex.text).empty()) throw std::runtime_error(where(path, n) + "empty text");
        data.push_back(std::move(ex));
    }
    return data;
}

void save_sts_tsv(const std::filesystem::path& path, std::span<const StsExample> data) {
    std::ofstream out = open_output(path);
    for (const StsExample& ex : data) out << ex.sentence_a << '\t' << ex.sentence_b << '\t' << ex.gold << '\n';
}

void save_classification_tsv(const std::filesystem::path& path, std::span<const LabeledText> data) {
    std::ofstream out = open_output(path);
    for (const LabeledText& ex : data) out << ex.text << '\t' << ex.label << '\n';
}

Matrix SentenceEmbedder::embed(std::span<const std::string> texts) const {
    const std::size_t max_len = encoder_->config().max_len;
    Matrix out(static_cast<Eigen::Index>(texts.size()), static_cast<Eigen::Index>(encoder_->config().dim));
    for (std::size_t start = 0; start < texts.size(); start += kEmbedChunk) {
        const std::size_t stop = std::min(texts.size(), start + kEmbedChunk);
        std::vector<TokenSequence> seqs;
        seqs.reserve(stop - start);
        for (std::size_t i = start; i < stop; ++i) seqs.push_back(vocab_->tokenize(texts[i], max_len));
        out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(stop - start)) =
            encoder_->encode(make_batch(seqs), std::nullopt);
    }
    return out;
}

std::vector<double> SentenceEmbedder::embed(const std::string& text) const {
    return row_of(embed(std::span<const std::string>(&text, 1)), 0);
}

double sts_score(std::span<const double> za, std::span<const double> zb) {
    if (za.size() != zb.size() || za.empty()) throw std::invalid_argument("sts_score: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < za.size(); ++i) {
        dot += za[i] * zb[i];
        na += za[i] * za[i];
        nb += zb[i] * zb[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::domain_error("sts_score: zero embedding");
    const double cos = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
    return 2.5 * (1.0 + cos);
}

double sts_score(const SentenceEmbedder& model, const std::string& a, const std::string& b) {
    const std::string pair[] = {a, b};
    const Matrix z = model.embed(pair);
    return sts_score(row_of(z, 0), row_of(z, 1));
}

double spearman(std::span<const double> pred, std::span<const double> gold) {
    if (pred.size() != gold.size()) throw std::invalid_argument("spearman: length mismatch");
    if (pred.size() < 2) throw std::invalid_argument("spearman: need at least two items");
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!std::isfinite(pred[i]) || !std::isfinite(gold[i])) throw std::domain_error("spearman: non-finite input");
    }
    const auto rp = average_ranks(pred);
    const auto rg = average_ranks(gold);
    const double n = static_cast<double>(rp.size());
    const double mean = (n + 1.0) / 2.0;  // ranks always average to this
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rp.size(); ++i) {
        const double x = rp[i] - mean, y = rg[i] - mean;
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    if (sxx == 0.0 || syy == 0.0) throw std::domain_error("spearman: constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double alignment(const Matrix& a, const Matrix& b) {
    if (a.rows() == 0) throw std::invalid_argument("alignment: no pairs");
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("alignment: shape mismatch");
    require_unit_rows(a, "alignment");
    require_unit_rows(b, "alignment");
    return (a - b).rowwise().squaredNorm().mean();
}

double uniformity(const Matrix& embeddings) {
    const Eigen::Index n = embeddings.rows();
    if (n < 2) throw std::invalid_argument("uniformity: need at least two embeddings");
    require_unit_rows(embeddings, "uniformity");
    // Each unordered pair stands for both orderings; the mean is unchanged.
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            sum += std::exp(-2.0 * (embeddings.row(i) - embeddings.row(j)).squaredNorm());
        }
    }
    const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    return std::log(sum / pairs);
}

Matrix normalize_rows(const Matrix& m) {
    Matrix out = m;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double norm = m.row(r).norm();
        if (norm == 0.0) throw std::domain_error("normalize_rows: zero row " + std::to_string(r));
        out.row(r) /= norm;
    }
    return out;
}

LogisticRegression LogisticRegression::fit(const Matrix& features, std::span<const int> labels,
                                           const Options& options) {
    const Eigen::Index n = features.rows(), d = features.cols();
    if (n == 0 || static_cast<std::size_t>(n) != labels.size()) {
        throw std::invalid_argument("LogisticRegression: features and labels disagree in size");
    }
    if (!features.allFinite()) throw std::domain_error("LogisticRegression: non-finite features");
    std::set<int> distinct;
    for (int y : labels) {
        if (y < 0) throw std::invalid_argument("LogisticRegression: negative label");
        distinct.insert(y);
    }
    if (distinct.size() < 2) throw std::invalid_argument("LogisticRegression: need at least two classes");
    const Eigen::Index k = *distinct.rbegin() + 1;

    LogisticRegression model;
    model.mean_.resize(static_cast<std::size_t>(d));
    model.scale_.resize(static_cast<std::size_t>(d));
    Matrix x(n, d + 1);
    for (Eigen::Index c = 0; c < d; ++c) {
        const double mu = features.col(c).mean();
        const double sd = std::sqrt((features.col(c).array() - mu).square().mean());
        model.mean_[static_cast<std::size_t>(c)] = mu;
        model.scale_[static_cast<std::size_t>(c)] = sd > 1e-12 ? sd : 1.0;
        x.col(c) = (features.col(c).array() - mu) / model.scale_[static_cast<std::size_t>(c)];
    }
    x.col(d).setOnes();

    Matrix y = Matrix::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) y(i, labels[static_cast<std::size_t>(i)]) = 1.0;

    // Full-batch gradient descent on the mean cross-entropy; the objective is
    // convex so the result is independent of any randomness.
    model.weights_ = Matrix::Zero(d + 1, k);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t it = 0; it < options.iterations; ++it) {
        const Matrix p = softmax_rows(x * model.weights_);
        Matrix grad = x.transpose() * (p - y) * inv_n;
        grad.topRows(d) += options.l2 * model.weights_.topRows(d);
        model.weights_ -= options.learning_rate * grad;
    }
    return model;
}

std::vector<double> LogisticRegression::probabilities(std::span<const double> x) const {
    if (x.size() != mean_.size()) throw std::invalid_argument("LogisticRegression: feature size mismatch");
    Matrix row(1, weights_.rows());
    for (std::size_t c = 0; c < x.size(); ++c) row(0, static_cast<Eigen::Index>(c)) = (x[c] - mean_[c]) / scale_[c];
    row(0, weights_.rows() - 1) = 1.0;
    const Matrix p = softmax_rows(row * weights_);
    return row_of(p, 0);
}

int LogisticRegression::predict(std::span<const double> x) const {
    const auto p = probabilities(x);
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

double accuracy(const LogisticRegression& model, const Matrix& features, std::span<const int> labels) {
    if (features.rows() == 0 || static_cast<std::size_t>(features.rows()) != labels.size()) {
        throw std::invalid_argument("accuracy: features and labels disagree in size");
    }
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        correct += model.predict(row_of(features, i)) == labels[static_cast<std::size_t>(i)];
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double transfer_probe(const SentenceEmbedder& model, std::span<const LabeledText> train,
                      std::span<const LabeledText> test) {
    if (train.empty() || test.empty()) throw std::invalid_argument("transfer_probe: empty split");
    auto unpack = [&model](std::span<const LabeledText> data, std::vector<int>& labels) {
        std::vector<std::string> texts;
        for (const LabeledText& ex : data) {
            texts.push_back(ex.text);
            labels.push_back(ex.label);
        }
        return model.embed(texts);
    };
    std::vector<int> ytrain, ytest;
    const Matrix xtrain = unpack(train, ytrain);
    const Matrix xtest = unpack(test, ytest);
    return accuracy(LogisticRegression::fit(xtrain, ytrain), xtest, ytest);
}

VictimModel classification_victim(const SentenceEmbedder& model, const LogisticRegression& probe) {
    return VictimModel([model, probe](const std::string& text) {
        VictimOutput out;
        out.probabilities = probe.probabilities(model.embed(text));
        out.label = static_cast<int>(std::max_element(out.probabilities.begin(), out.probabilities.end()) -
                                     out.probabilities.begin());
        return out;
    });
}

AdvStsResult build_advsts(const PairScorer& scorer, std::span<const StsExample> data, AttackKind kind,
                          const Lexicon& lexicon, double delta_threshold, const AttackOptions& options,
                          std::size_t workers) {
    if (data.empty()) throw std::invalid_argument("build_advsts: empty dataset");
    if (!(delta_threshold >= 0.0)) throw std::invalid_argument("build_advsts: threshold must be non-negative");

    AdvStsResult result;
    result.adversarial.assign(data.begin(), data.end());
    result.attacks.resize(data.size());
    parallel_for(data.size(), workers, [&](std::size_t i) {
        const StsExample& ex = data[i];
        const bool attack_a = split_words(ex.sentence_a).size() >= split_words(ex.sentence_b).size();
        const std::string& target = attack_a ? ex.sentence_a : ex.sentence_b;
        const std::string& fixed = attack_a ? ex.sentence_b : ex.sentence_a;

        VictimModel victim([&scorer, &fixed, attack_a](const std::string& text) {
            VictimOutput out;
            out.score = attack_a ? scorer(text, fixed) : scorer(fixed, text);
            return out;
        });
        const double original = attack_a ? scorer(target, fixed) : scorer(fixed, target);
        const RegressionGoal goal(ex.gold, original, delta_threshold);
        AttackOptions local = options;
        local.seed = derive_seed(options.seed, "advsts", i);
        AttackResult r = kind == AttackKind::synonym ? synonym_swap_attack(victim, target, lexicon, goal, local)
                                                     : char_bugger_attack(victim, target, goal, local);
        (attack_a ? result.adversarial[i].sentence_a : result.adversarial[i].sentence_b) = r.perturbed_text;
        result.attacks[i] = std::move(r);
    });
    result.success_rate = success_rate(result.attacks);
    result.mean_queries = mean_queries(result.attacks);
    return result;
}

AdvStsResult build_advsts(const SentenceEmbedder& model, std::span<const StsExample> data, AttackKind kind,
                          const Lexicon& lexicon, double delta_threshold, const AttackOptions& options,
                          std::size_t workers) {
    const PairScorer scorer = [&model](const std::string& a, const std::string& b) { return sts_score(model, a, b); };
    return build_advsts(scorer, data, kind, lexicon, delta_threshold, options, workers);
}

void MetricReport::set(const std::string& name, double value) {
    if (name.empty() || name.find_first_of("=\n\t ") != std::string::npos) {
        throw std::invalid_argument("MetricReport: bad metric name '" + name + "'");
    }
    if (!std::isfinite(value)) throw std::domain_error("MetricReport: non-finite value for " + name);
    values_[name] = value;
}

double MetricReport::at(const std::string& name) const {
    const auto it = values_.find(name);
    if (it == values_.end()) throw std::out_of_range("MetricReport: no metric '" + name + "'");
    return it->second;
}

void MetricReport::write(const std::filesystem::path& dir, const std::string& stem) const {
    std::filesystem::create_directories(dir);
    std::ofstream txt = open_output(dir / (stem + ".txt"));
    nlohmann::json summary = nlohmann::json::object();
    for (const auto& [name, value] : values_) {
        txt << name << '=' << value << '\n';
        summary[name] = value;
    }
    std::ofstream json = open_output(dir / (stem + ".json"));
    json << summary.dump(2) << '\n';
}

MetricReport MetricReport::read(const std::filesystem::path& file) {
    std::ifstream in = open_input(file);
    MetricReport report;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        line = strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw std::runtime_error(where(file, n) + "expected metric=value, got '" + line + "'");
        }
        double value = 0.0;
        if (!parse_double(line.substr(eq + 1), value) || !std::isfinite(value)) {
            throw std::runtime_error(where(file, n) + "bad value in '" + line + "'");
        }
        try {
            report.set(line.substr(0, eq), value);
        } catch (const std::exception& e) {
            throw std::runtime_error(where(file, n) + e.what());
        }
    }
    return report;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::mutex mu;
    std::size_t next = 0;
    std::exception_ptr failure;
    auto worker = [&]() {
        while (true) {
            std::size_t i;
            {
                std::lock_guard lock(mu);
                if (failure || next >= n) return;
                i = next++;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace robust_embed
