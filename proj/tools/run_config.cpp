#include "run_config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace robust_embed::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

constexpr const char* kAuto = "auto";

}  // namespace

const std::vector<ConfigKey>& RunConfig::keys() {
    static const std::vector<ConfigKey> k = {
        {"seed", "1234", "master seed; every random stream derives from it"},
        // perturbation
        {"epsilon", "1e-2", "perturbation radius (0 trains the dropout-only baseline)"},
        {"alpha", "1e-5", "PGD step size"},
        {"beta", "1e-3", "FGSM step size"},
        {"gamma", "1e-3", "token-level step size"},
        {"rho", "0.5", "PGD/FGSM mixing weight in [0, 1]"},
        {"K", "5", "PGD iterations"},
        {"T", "5", "FGSM iterations"},
        {"norm", "linf", "perturbation norm: l1, l2 or linf"},
        {"sigma", kAuto, "uniform init range for the token table (auto: epsilon)"},
        // objective
        {"lambda1", "0.0078125", "weight of the perturbation regularizer"},
        {"lambda2", "0.005", "weight of replaced-token detection"},
        {"tau", "0.05", "contrastive temperature"},
        {"mask_rate", "0.15", "fraction of tokens replaced for detection"},
        // optimization
        {"lr", "3e-5", "Adam learning rate"},
        {"epochs", "4", "training epochs"},
        {"batch", "64", "batch size"},
        {"reset_table", "false", "re-initialize the token table every epoch"},
        // model
        {"dim", "64", "embedding width"},
        {"layers", "2", "transformer layers"},
        {"heads", "2", "attention heads"},
        {"max_len", "32", "maximum tokens per sentence, [CLS] included"},
        {"ffn_mult", "4", "feed-forward expansion factor"},
        {"dropout", "0.1", "embedding dropout probability"},
        {"disc_hidden", "0", "discriminator hidden width (0: same as dim)"},
        // data
        {"corpus", "data/toy_corpus.txt", "training sentences, one per line"},
        {"data", "data/mini_sts.tsv", "STS pairs: a<TAB>b<TAB>score"},
        {"train_data", "data/sentiment_train.tsv", "classification training set: text<TAB>label"},
        {"test_data", "data/sentiment_test.tsv", "classification test set: text<TAB>label"},
        {"lexicon", "data/lexicon.tsv", "synonym lexicon: word<TAB>syn1,syn2"},
        // outputs
        {"home", "runs", "output root (ROBUST_EMBED_HOME overrides the default)"},
        {"out", kAuto, "output directory (auto: <home>/<command>)"},
        {"checkpoint", kAuto, "checkpoint directory (auto: <home>/train/checkpoint)"},
        // attacks
        {"attack", "synonym", "attack family: synonym or character"},
        {"pwws", "false", "saliency-weighted word ordering for synonym attacks"},
        {"query_budget", "2000", "victim queries allowed per example"},
        {"max_fraction", "0.4", "largest fraction of words an attack may change"},
        {"delta", "1.0", "AdvSTS success threshold on the 0-5 scale"},
        {"n", "0", "number of examples to attack (0: all)"},
        {"workers", "1", "threads for evaluation and attack fan-out"},
    };
    return k;
}

bool RunConfig::known(const std::string& key) {
    for (const auto& k : keys()) {
        if (k.name == key) return true;
    }
    return false;
}

RunConfig::RunConfig() {
    for (const auto& k : keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!known(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = trim(value);
}

void RunConfig::merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string at = path.string() + ":" + std::to_string(n) + ": ";
        if (eq == std::string::npos) throw ConfigError(at + "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (!known(key)) throw ConfigError(at + "unknown config key '" + key + "'");
        values_[key] = trim(line.substr(eq + 1));
    }
}

void RunConfig::apply_environment() {
    if (const char* home = std::getenv("ROBUST_EMBED_HOME"); home != nullptr && *home != '\0') {
        values_["home"] = home;
    }
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

double RunConfig::number(const std::string& key) const {
    const std::string& s = get(key);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw ConfigError(key + ": expected a number, got '" + s + "'");
    }
    return v;
}

long long RunConfig::integer(const std::string& key) const {
    const std::string& s = get(key);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ConfigError(key + ": expected an integer, got '" + s + "'");
    }
    return v;
}

std::size_t RunConfig::count(const std::string& key) const {
    const long long v = integer(key);
    if (v < 0) throw ConfigError(key + ": must be non-negative");
    return static_cast<std::size_t>(v);
}

bool RunConfig::flag(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

std::filesystem::path RunConfig::path(const std::string& key) const {
    const std::string& s = get(key);
    if (s.empty()) throw ConfigError(key + ": empty path");
    return s;
}

std::filesystem::path RunConfig::output_dir(const std::string& command) const {
    if (get("out") != kAuto) return path("out");
    return path("home") / command;
}

std::filesystem::path RunConfig::checkpoint_dir() const {
    if (get("checkpoint") != kAuto) return path("checkpoint");
    return path("home") / "train" / "checkpoint";
}

double RunConfig::sigma() const { return get("sigma") == kAuto ? number("epsilon") : number("sigma"); }

HyperParams RunConfig::hyper_params() const {
    HyperParams hp;
    hp.epsilon = number("epsilon");
    hp.alpha = number("alpha");
    hp.beta = number("beta");
    hp.gamma = number("gamma");
    hp.rho = number("rho");
    hp.lambda1 = number("lambda1");
    hp.lambda2 = number("lambda2");
    hp.tau = number("tau");
    hp.pgd_steps = static_cast<int>(integer("K"));
    hp.fgsm_steps = static_cast<int>(integer("T"));
    try {
        hp.norm = parse_norm(get("norm"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("norm: ") + e.what());
    }
    hp.sigma = sigma();
    hp.learning_rate = number("lr");
    hp.epochs = static_cast<int>(integer("epochs"));
    hp.batch_size = count("batch");
    try {
        hp.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return hp;
}

TrainOptions RunConfig::train_options() const {
    TrainOptions o;
    o.hp = hyper_params();
    o.encoder.dim = count("dim");
    o.encoder.layers = count("layers");
    o.encoder.heads = count("heads");
    o.encoder.max_len = count("max_len");
    o.encoder.ffn_mult = count("ffn_mult");
    o.encoder.dropout_p = number("dropout");
    o.discriminator_hidden = count("disc_hidden");
    o.mask_rate = number("mask_rate");
    o.seed = static_cast<std::uint64_t>(integer("seed"));
    o.reset_vocab_table_each_epoch = flag("reset_table");
    EncoderConfig probe = o.encoder;
    probe.vocab_size = 4;  // the real size comes from the corpus
    try {
        probe.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (!(o.mask_rate > 0.0 && o.mask_rate < 1.0)) throw ConfigError("mask_rate must lie in (0, 1)");
    return o;
}

AttackOptions RunConfig::attack_options() const {
    AttackOptions o;
    o.query_budget = count("query_budget");
    o.max_fraction_modified = number("max_fraction");
    o.pwws_ordering = flag("pwws");
    o.seed = static_cast<std::uint64_t>(integer("seed"));
    if (o.query_budget == 0) throw ConfigError("query_budget must be positive");
    if (!(o.max_fraction_modified >= 0.0 && o.max_fraction_modified <= 1.0)) {
        throw ConfigError("max_fraction must lie in [0, 1]");
    }
    return o;
}

void RunConfig::validate() const {
    train_options();
    attack_options();
    const std::string& attack = get("attack");
    if (attack != "synonym" && attack != "character") {
        throw ConfigError("attack: expected synonym or character, got '" + attack + "'");
    }
    if (!(number("delta") >= 0.0)) throw ConfigError("delta must be non-negative");
    if (count("workers") == 0) throw ConfigError("workers must be at least 1");
    count("n");
    path("home");
}

std::string RunConfig::dump() const {
    std::ostringstream out;
    for (const auto& k : keys()) {
        const std::string& v = get(k.name);
        out << k.name << '=' << (k.name == "sigma" && v == kAuto ? get("epsilon") : v) << '\n';
    }
    return out.str();
}

}  // namespace robust_embed::cli
