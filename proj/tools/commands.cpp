#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>

#include "plot.hpp"
#include "robust_embed/evaluation.hpp"
#include "robust_embed/rng.hpp"

namespace robust_embed::cli {

namespace fs = std::filesystem;

namespace {

fs::path existing(const RunConfig& cfg, const std::string& key) {
    const fs::path p = cfg.path(key);
    if (!fs::exists(p)) throw InputError(key + ": no such file or directory: " + p.string());
    return p;
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw InputError("cannot open " + p.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!split_words(line).empty()) lines.push_back(line);
    }
    return lines;
}

// Creates the output directory and records the resolved configuration.
fs::path prepare_output(const RunConfig& cfg, const std::string& command) {
    const fs::path dir = cfg.output_dir(command);
    fs::create_directories(dir);
    std::ofstream out(dir / "config.txt");
    if (!out) throw std::runtime_error("cannot write " + (dir / "config.txt").string());
    out << cfg.dump();
    return dir;
}

void print_report(const MetricReport& r, const fs::path& dir, const std::string& stem) {
    r.write(dir, stem);
    for (const auto& [k, v] : r.values()) std::printf("%s=%.10g\n", k.c_str(), v);
    std::printf("report: %s\n", (dir / (stem + ".txt")).string().c_str());
}

struct Model {
    Vocabulary vocab;
    std::unique_ptr<Encoder> encoder;

    SentenceEmbedder embedder() const { return SentenceEmbedder(*encoder, vocab); }
};

Model load_model(const RunConfig& cfg) {
    const fs::path dir = cfg.checkpoint_dir();
    if (!fs::exists(dir)) throw InputError("checkpoint: no such directory: " + dir.string());
    try {
        TrainState state = load_checkpoint(dir);
        return {std::move(state.vocab), std::make_unique<Encoder>(std::move(state.encoder))};
    } catch (const std::runtime_error& e) {
        throw InputError(std::string("checkpoint ") + dir.string() + ": " + e.what());
    }
}

// Untrained encoder over the vocabulary of `texts`, seeded like training.
Model random_model(const RunConfig& cfg, std::span<const std::string> texts) {
    const TrainOptions o = cfg.train_options();
    Model m{Vocabulary::build(texts), nullptr};
    EncoderConfig ec = o.encoder;
    ec.vocab_size = m.vocab.size();
    m.encoder = std::make_unique<Encoder>(ec, derive_seed(o.seed, "encoder-init"));
    return m;
}

// A dataset the checkpoint has never seen a word of cannot be evaluated.
void check_overlap(const Model& m, std::span<const std::string> texts, const std::string& what) {
    std::size_t known = 0, total = 0;
    for (const auto& t : texts) {
        for (const auto& w : split_words(to_lower(t))) {
            known += m.vocab.contains(w);
            ++total;
        }
    }
    if (total == 0) throw InputError(what + ": dataset is empty");
    if (known == 0) throw InputError(what + ": dataset shares no vocabulary with the checkpoint");
}

std::vector<StsExample> load_sts(const RunConfig& cfg) {
    const fs::path p = existing(cfg, "data");
    try {
        auto data = load_sts_tsv(p);
        if (data.empty()) throw InputError("data: " + p.string() + " has no examples");
        return data;
    } catch (const InputError&) {
        throw;
    } catch (const std::runtime_error& e) {
        throw InputError(e.what());
    }
}

std::vector<LabeledText> load_labeled(const RunConfig& cfg, const std::string& key) {
    const fs::path p = existing(cfg, key);
    try {
        auto data = load_classification_tsv(p);
        if (data.empty()) throw InputError(key + ": " + p.string() + " has no examples");
        return data;
    } catch (const InputError&) {
        throw;
    } catch (const std::runtime_error& e) {
        throw InputError(e.what());
    }
}

Lexicon load_lexicon(const RunConfig& cfg) {
    const fs::path p = existing(cfg, "lexicon");
    try {
        return Lexicon::load(p);
    } catch (const std::runtime_error& e) {
        throw InputError(e.what());
    }
}

std::vector<std::string> sts_texts(std::span<const StsExample> data) {
    std::vector<std::string> t;
    for (const auto& ex : data) {
        t.push_back(ex.sentence_a);
        t.push_back(ex.sentence_b);
    }
    return t;
}

std::vector<double> predict_sts(const SentenceEmbedder& model, std::span<const StsExample> data) {
    const Matrix z = model.embed(sts_texts(data));
    std::vector<double> pred(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto a = static_cast<Eigen::Index>(2 * i);
        pred[i] = sts_score(std::span<const double>(z.row(a).data(), static_cast<std::size_t>(z.cols())),
                            std::span<const double>(z.row(a + 1).data(), static_cast<std::size_t>(z.cols())));
    }
    return pred;
}

double spearman_against_gold(const SentenceEmbedder& model, std::span<const StsExample> data) {
    std::vector<double> gold;
    for (const auto& ex : data) gold.push_back(ex.gold);
    return spearman(predict_sts(model, data), gold);
}

std::vector<std::size_t> sample_indices(std::size_t size, std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (n == 0 || n >= size) return idx;
    Rng rng(derive_seed(seed, "attack-sample"));
    for (std::size_t i = size - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::string tsv_safe(std::string s) {
    std::replace(s.begin(), s.end(), '\t', ' ');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

void cmd_train(const RunConfig& cfg) {
    TrainOptions options = cfg.train_options();
    const fs::path corpus_path = existing(cfg, "corpus");
    const std::vector<std::string> corpus = read_lines(corpus_path);
    if (corpus.empty()) throw InputError("corpus: " + corpus_path.string() + " has no sentences");

    const fs::path dir = prepare_output(cfg, "train");
    std::ofstream log(dir / "metrics.csv");
    if (!log) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
    log << metrics_header() << '\n';
    options.on_step = [&log](const StepRecord& r) { log << format_record(r) << '\n' << std::flush; };

    std::printf("training on %zu sentences (%s)\n", corpus.size(),
                options.hp.epsilon > 0.0 ? "adversarial" : "dropout-only baseline");
    const TrainResult result = train(corpus, options);

    const fs::path ckpt = cfg.get("checkpoint") == "auto" ? dir / "checkpoint" : cfg.checkpoint_dir();
    save_checkpoint(result.state, ckpt);

    MetricReport report;
    for (std::size_t e = 0; e < result.epoch_mean_total.size(); ++e) {
        report.set("epoch" + std::to_string(e + 1) + "_mean_total", result.epoch_mean_total[e]);
    }
    const StepRecord& last = result.records.back();
    report.set("final_L_con", last.l_con);
    report.set("final_L_reg", last.l_reg);
    report.set("final_L_rtd", last.l_rtd);
    report.set("final_L_total", last.l_total);
    report.set("steps", static_cast<double>(result.state.step));
    print_report(report, dir, "train");
    std::printf("checkpoint: %s\n", ckpt.string().c_str());
}

void cmd_eval_sts(const RunConfig& cfg) {
    cfg.validate();
    const auto data = load_sts(cfg);
    const Model m = load_model(cfg);
    check_overlap(m, sts_texts(data), "data");
    const fs::path dir = prepare_output(cfg, "eval-sts");

    const SentenceEmbedder model = m.embedder();
    std::vector<double> pred = predict_sts(model, data), gold;
    for (const auto& ex : data) gold.push_back(ex.gold);
    MetricReport report;
    report.set("spearman", spearman(pred, gold));
    report.set("mean_prediction", std::accumulate(pred.begin(), pred.end(), 0.0) / static_cast<double>(pred.size()));
    report.set("n", static_cast<double>(data.size()));
    print_report(report, dir, "sts");
}

void cmd_eval_transfer(const RunConfig& cfg) {
    cfg.validate();
    const auto train_set = load_labeled(cfg, "train_data");
    const auto test_set = load_labeled(cfg, "test_data");
    const Model m = load_model(cfg);
    std::vector<std::string> texts;
    for (const auto& ex : train_set) texts.push_back(ex.text);
    check_overlap(m, texts, "train_data");
    const fs::path dir = prepare_output(cfg, "eval-transfer");

    MetricReport report;
    try {
        report.set("accuracy", transfer_probe(m.embedder(), train_set, test_set));
    } catch (const std::invalid_argument& e) {
        throw InputError(std::string("transfer: ") + e.what());
    }
    report.set("n_train", static_cast<double>(train_set.size()));
    report.set("n_test", static_cast<double>(test_set.size()));
    print_report(report, dir, "transfer");
}

void cmd_eval_metrics(const RunConfig& cfg, bool random_init) {
    cfg.validate();
    const auto data = load_sts(cfg);
    const std::vector<std::string> texts = sts_texts(data);
    const Model m = random_init ? random_model(cfg, texts) : load_model(cfg);
    if (!random_init) check_overlap(m, texts, "data");
    const fs::path dir = prepare_output(cfg, "eval-metrics");
    const SentenceEmbedder model = m.embedder();

    // Positive pairs: gold similarity of at least 4 out of 5.
    std::vector<std::string> pa, pb;
    for (const auto& ex : data) {
        if (ex.gold >= 4.0) {
            pa.push_back(ex.sentence_a);
            pb.push_back(ex.sentence_b);
        }
    }
    if (pa.empty()) throw InputError("data: no pair has gold score >= 4 to measure alignment");
    std::vector<std::string> distinct = texts;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    MetricReport report;
    report.set("alignment", alignment(normalize_rows(model.embed(pa)), normalize_rows(model.embed(pb))));
    report.set("uniformity", uniformity(normalize_rows(model.embed(distinct))));
    report.set("positive_pairs", static_cast<double>(pa.size()));
    report.set("sentences", static_cast<double>(distinct.size()));
    print_report(report, dir, "metrics");
}

void cmd_attack_classify(const RunConfig& cfg) {
    cfg.validate();
    const AttackOptions options = cfg.attack_options();
    const bool synonym = cfg.get("attack") == "synonym";
    const auto train_set = load_labeled(cfg, "train_data");
    const auto test_set = load_labeled(cfg, "test_data");
    const Lexicon lexicon = synonym ? load_lexicon(cfg) : Lexicon{};
    const Model m = load_model(cfg);
    std::vector<std::string> texts;
    for (const auto& ex : train_set) texts.push_back(ex.text);
    check_overlap(m, texts, "train_data");
    const fs::path dir = prepare_output(cfg, "attack-classify");

    const SentenceEmbedder model = m.embedder();
    std::vector<int> ytrain;
    for (const auto& ex : train_set) ytrain.push_back(ex.label);
    const LogisticRegression probe = LogisticRegression::fit(model.embed(texts), ytrain);

    const auto picked = sample_indices(test_set.size(), cfg.count("n"), options.seed);
    std::vector<AttackResult> results(picked.size());
    const VictimModel victim = classification_victim(model, probe);
    parallel_for(picked.size(), cfg.count("workers"), [&](std::size_t k) {
        const LabeledText& ex = test_set[picked[k]];
        VictimModel v = victim;  // own query counter
        AttackOptions local = options;
        local.seed = derive_seed(options.seed, "attack", picked[k]);
        const ClassificationGoal goal(ex.label);
        results[k] = synonym ? synonym_swap_attack(v, ex.text, lexicon, goal, local)
                             : char_bugger_attack(v, ex.text, goal, local);
    });

    std::ofstream lines(dir / "attacks.tsv");
    lines << "index\tgold\toriginal_label\tperturbed_label\teligible\tsuccess\tqueries\twords_modified\toriginal\tperturbed\n";
    std::size_t correct_before = 0, correct_after = 0;
    for (std::size_t k = 0; k < results.size(); ++k) {
        const AttackResult& r = results[k];
        const int gold = test_set[picked[k]].label;
        const int after = r.eligible ? r.perturbed_output.label : r.original_output.label;
        correct_before += r.original_output.label == gold;
        correct_after += r.eligible && !r.success;
        lines << picked[k] << '\t' << gold << '\t' << r.original_output.label << '\t' << after << '\t' << r.eligible
              << '\t' << r.success << '\t' << r.queries << '\t' << r.words_modified << '\t' << tsv_safe(r.original_text)
              << '\t' << tsv_safe(r.perturbed_text) << '\n';
    }
    const double n = static_cast<double>(results.size());
    MetricReport report;
    try {
        report.set("success_rate", success_rate(results));
        report.set("mean_queries", mean_queries(results));
    } catch (const std::invalid_argument& e) {
        throw InputError(std::string("attack: ") + e.what());
    }
    report.set("clean_accuracy", static_cast<double>(correct_before) / n);
    report.set("adversarial_accuracy", static_cast<double>(correct_after) / n);
    report.set("accuracy_reduction", static_cast<double>(correct_before - correct_after) / n);
    report.set("n_attacked", n);
    report.set("n_eligible", static_cast<double>(correct_before));
    print_report(report, dir, "classify");
}

void cmd_attack_advsts(const RunConfig& cfg) {
    cfg.validate();
    const AttackOptions options = cfg.attack_options();
    const bool synonym = cfg.get("attack") == "synonym";
    auto data = load_sts(cfg);
    const Lexicon lexicon = synonym ? load_lexicon(cfg) : Lexicon{};
    const Model m = load_model(cfg);
    check_overlap(m, sts_texts(data), "data");
    const fs::path dir = prepare_output(cfg, "attack-advsts");

    const auto picked = sample_indices(data.size(), cfg.count("n"), options.seed);
    std::vector<StsExample> subset;
    for (std::size_t i : picked) subset.push_back(data[i]);
    const SentenceEmbedder model = m.embedder();
    const AdvStsResult adv = build_advsts(model, subset, synonym ? AttackKind::synonym : AttackKind::character,
                                          lexicon, cfg.number("delta"), options, cfg.count("workers"));
    save_sts_tsv(dir / "advsts.tsv", adv.adversarial);

    MetricReport report;
    report.set("success_rate", adv.success_rate);
    report.set("mean_queries", adv.mean_queries);
    report.set("n", static_cast<double>(subset.size()));
    report.set("delta", cfg.number("delta"));
    try {
        report.set("spearman_clean", spearman_against_gold(model, subset));
        report.set("spearman_adversarial", spearman_against_gold(model, adv.adversarial));
    } catch (const std::exception&) {
        // Too few or constant items for a rank correlation; other metrics stand.
    }
    print_report(report, dir, "advsts");
}

void cmd_plot(const RunConfig& cfg, const std::vector<fs::path>& reports, const std::vector<std::string>& labels) {
    for (const auto& p : reports) {
        if (!fs::exists(p)) throw InputError("report: no such file: " + p.string());
    }
    std::vector<LabeledReport> loaded;
    try {
        loaded = load_reports(reports, labels);
    } catch (const std::runtime_error& e) {
        throw InputError(e.what());
    }
    const fs::path dir = cfg.output_dir("plot");
    std::vector<fs::path> written;
    try {
        written = write_plots(loaded, dir);
    } catch (const std::runtime_error& e) {
        throw InputError(e.what());
    }
    for (const auto& f : written) std::printf("wrote %s\n", f.string().c_str());
}

}  // namespace robust_embed::cli
