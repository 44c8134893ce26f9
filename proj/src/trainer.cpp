#include "robust_embed/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "robust_embed/checkpoint.hpp"
#include "robust_embed/rng.hpp"

namespace robust_embed {

namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string diagnostic_dump(const StepRecord& r, std::span<const TokenSequence> sentences) {
    std::ostringstream out;
    out << "non-finite loss at step " << r.step << " (epoch " << r.epoch << "): L_con=" << r.l_con
        << " L_reg=" << r.l_reg << " L_rtd=" << r.l_rtd << " L_total=" << r.l_total
        << " max_delta_norm=" << r.max_delta_norm << " max_eta_norm=" << r.max_eta_norm << "\nbatch:";
    for (const auto& s : sentences) out << "\n  " << s.raw_text;
    return out.str();
}

}  // namespace

std::string metrics_header() { return "step,epoch,L_con,L_reg,L_rtd,L_total,max_delta_norm,max_eta_norm"; }

std::string format_record(const StepRecord& r) {
    return std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + format_double(r.l_con) + "," +
           format_double(r.l_reg) + "," + format_double(r.l_rtd) + "," + format_double(r.l_total) + "," +
           format_double(r.max_delta_norm) + "," + format_double(r.max_eta_norm);
}

TrainResult train(std::span<const std::string> corpus, const TrainOptions& options) {
    const HyperParams& hp = options.hp;
    hp.validate();
    if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
    if (!(options.mask_rate > 0.0 && options.mask_rate < 1.0)) {
        throw std::invalid_argument("train: mask_rate must lie in (0, 1)");
    }

    Vocabulary vocab = Vocabulary::build(corpus);
    EncoderConfig ec = options.encoder;
    ec.vocab_size = vocab.size();
    ec.validate();

    std::vector<TokenSequence> sequences;
    sequences.reserve(corpus.size());
    for (const auto& line : corpus) {
        TokenSequence s = vocab.tokenize(line, ec.max_len);
        if (s.length() < 2) throw std::invalid_argument("train: corpus contains an empty sentence");
        sequences.push_back(std::move(s));
    }
    const UnigramGenerator generator = UnigramGenerator::from_corpus(sequences, vocab.size());

    const std::uint64_t seed = options.seed;
    Rng table_rng(derive_seed(seed, "vocab-table"));
    TrainState state{vocab, Encoder(ec, derive_seed(seed, "encoder-init")),
                     Discriminator(ec.dim, options.discriminator_hidden ? options.discriminator_hidden : ec.dim,
                                   derive_seed(seed, "discriminator-init")),
                     initial_vocab_table(vocab.size(), ec.dim, hp, table_rng)};

    AdamOptions adam_options;
    adam_options.learning_rate = hp.learning_rate;
    Adam encoder_opt(adam_options);
    Adam discriminator_opt(adam_options);

    const bool adversarial = hp.epsilon > 0.0;
    TrainResult result{std::move(state), {}, {}, {}, 0};
    TrainState& st = result.state;
    std::optional<TrainState> best;
    double best_score = -std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(sequences.size());
    for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double epoch_total = 0.0;
        std::size_t epoch_steps = 0;
        for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
            const std::size_t end = std::min(order.size(), start + hp.batch_size);
            std::vector<TokenSequence> members;
            for (std::size_t i = start; i < end; ++i) members.push_back(sequences[order[i]]);
            const Batch batch = make_batch(members);
            ++st.step;
            const std::uint64_t anchor_seed = derive_seed(seed, "dropout", 2 * st.step);
            const std::uint64_t positive_seed = derive_seed(seed, "dropout", 2 * st.step + 1);
            const auto rows = static_cast<Eigen::Index>(batch.size * batch.length);
            const auto D = static_cast<Eigen::Index>(ec.dim);

            StepRecord rec;
            rec.step = st.step;
            rec.epoch = static_cast<std::size_t>(epoch);

            // Forward failures on non-finite tensors are reported like a non-finite loss.
            try {
                Matrix delta_final = Matrix::Zero(rows, D);
                Matrix eta = Matrix::Zero(rows, D);
                if (adversarial) {
                    Rng delta_rng(derive_seed(seed, "delta-init", st.step));
                    const Matrix delta0 = initial_delta(batch, ec.dim, hp, delta_rng);
                    Matrix x = st.encoder.embed(batch, anchor_seed);
                    Matrix z_pos = st.encoder.encode_from_embeddings(st.encoder.embed(batch, positive_seed), batch);
                    const auto objective = make_perturbation_objective(st.encoder, batch, std::move(x), std::move(z_pos), hp.tau);
                    GenerateResult gen = generate(batch, delta0, st.vocab_table, hp, objective);
                    delta_final = std::move(gen.delta_final);
                    eta = std::move(gen.eta_final);
                }
                rec.max_delta_norm = tensor_norm(delta_final, hp.norm);
                rec.max_eta_norm = max_row_norm(eta, hp.norm);

                Rng rtd_rng(derive_seed(seed, "rtd", st.step));
                std::vector<TokenSequence> edited_members;
                TotalLossInputs in;
                in.rtd_labels.assign(batch.ids.size(), 1.0);
                for (std::size_t b = 0; b < members.size(); ++b) {
                    RtdInstance inst = rtd_edit(members[b], options.mask_rate, generator, rtd_rng);
                    TokenSequence e = members[b];
                    e.ids = inst.edited;
                    for (std::size_t j = 0; j < inst.labels.size(); ++j) in.rtd_labels[b * batch.length + j] = inst.labels[j];
                    edited_members.push_back(std::move(e));
                }
                Batch edited = make_batch(edited_members);
                edited.length = batch.length;  // members already share the batch length
                in.batch = &batch;
                in.edited = &edited;
                in.anchor_seed = anchor_seed;
                in.positive_seed = positive_seed;
                in.adversarial = adversarial;

                Graph g;
                const auto ew = st.encoder.bind(g, true);
                const auto dw = st.discriminator.bind(g, true);
                const TotalLossTerms terms = total_loss(g, st.encoder, ew, st.discriminator, dw, in,
                                                        g.constant(delta_final), g.constant(eta), hp);
                rec.l_con = g.value(terms.robust)(0, 0);
                rec.l_reg = g.value(terms.regularizer)(0, 0);
                rec.l_rtd = g.value(terms.rtd)(0, 0);
                rec.l_total = g.value(terms.total)(0, 0);
                if (!std::isfinite(rec.l_total) || !std::isfinite(rec.l_con) || !std::isfinite(rec.l_reg) ||
                    !std::isfinite(rec.l_rtd)) {
                    throw NonFiniteLossError(diagnostic_dump(rec, members));
                }
                g.backward(terms.total);
                std::vector<Matrix> encoder_grads;
                for (Var v : ew.vars()) encoder_grads.push_back(g.grad(v));
                std::vector<Matrix> discriminator_grads;
                for (Var v : dw) discriminator_grads.push_back(g.grad(v));
                encoder_opt.step(st.encoder.parameters(), encoder_grads);
                discriminator_opt.step(st.discriminator.parameters(), discriminator_grads);
            } catch (const std::domain_error& e) {
                throw NonFiniteLossError(diagnostic_dump(rec, members) + "\ncause: " + e.what());
            }

            result.records.push_back(rec);
            if (options.on_step) options.on_step(rec);
            epoch_total += rec.l_total;
            ++epoch_steps;
        }
        st.epoch = static_cast<std::size_t>(epoch);
        result.epoch_mean_total.push_back(epoch_total / static_cast<double>(epoch_steps));
        if (options.reset_vocab_table_each_epoch) {
            Rng reset_rng(derive_seed(seed, "vocab-table-reset", static_cast<std::uint64_t>(epoch)));
            st.vocab_table = initial_vocab_table(vocab.size(), ec.dim, hp, reset_rng);
        }
        if (options.validation) {
            const double score = options.validation(st.encoder, st.vocab);
            result.validation_scores.push_back(score);
            if (score > best_score) {
                best_score = score;
                best = st;
                result.selected_epoch = st.epoch;
            }
        }
    }
    if (best) {
        result.state = std::move(*best);
    } else {
        result.selected_epoch = st.epoch;
    }
    result.state.encoder.parameters().snap_to_float32();
    result.state.discriminator.parameters().snap_to_float32();
    for (Eigen::Index i = 0; i < result.state.vocab_table.size(); ++i) {
        auto& x = result.state.vocab_table.data()[i];
        x = static_cast<double>(static_cast<float>(x));
    }
    return result;
}

void save_checkpoint(const TrainState& state, const fs::path& dir) {
    std::vector<NamedTensor> tensors;
    for (const auto& p : state.encoder.parameters()) tensors.push_back({p.name, p.value});
    for (const auto& p : state.discriminator.parameters()) tensors.push_back({p.name, p.value});
    tensors.push_back({"perturbation.vocab_table", state.vocab_table});
    write_tensor_dir(dir, tensors);
    state.vocab.save(dir / "vocab.txt");
    const EncoderConfig& c = state.encoder.config();
    write_key_values(dir / "model.cfg",
                     {{"vocab_size", std::to_string(c.vocab_size)},
                      {"dim", std::to_string(c.dim)},
                      {"layers", std::to_string(c.layers)},
                      {"heads", std::to_string(c.heads)},
                      {"max_len", std::to_string(c.max_len)},
                      {"ffn_mult", std::to_string(c.ffn_mult)},
                      {"dropout_p", format_double(c.dropout_p)},
                      {"discriminator_hidden", std::to_string(state.discriminator.parameters().at("discriminator.b1").cols())},
                      {"epoch", std::to_string(state.epoch)},
                      {"step", std::to_string(state.step)}});
}

TrainState load_checkpoint(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("checkpoint directory not found: " + dir.string());
    const auto cfg = read_key_values(dir / "model.cfg");
    auto get = [&cfg](const std::string& key) {
        auto it = cfg.find(key);
        if (it == cfg.end()) throw std::runtime_error("model.cfg lacks '" + key + "'");
        return it->second;
    };
    EncoderConfig c;
    c.vocab_size = std::stoul(get("vocab_size"));
    c.dim = std::stoul(get("dim"));
    c.layers = std::stoul(get("layers"));
    c.heads = std::stoul(get("heads"));
    c.max_len = std::stoul(get("max_len"));
    c.ffn_mult = std::stoul(get("ffn_mult"));
    c.dropout_p = std::stod(get("dropout_p"));

    // Everything is read and checked before a TrainState exists.
    std::vector<NamedTensor> tensors = read_tensor_dir(dir);
    Vocabulary vocab = Vocabulary::load(dir / "vocab.txt");
    if (vocab.size() != c.vocab_size) {
        throw std::runtime_error("vocab.txt has " + std::to_string(vocab.size()) + " entries, model.cfg says " +
                                 std::to_string(c.vocab_size));
    }
    TrainState state{std::move(vocab), Encoder(c, 0), Discriminator(c.dim, std::stoul(get("discriminator_hidden")), 0),
                     Matrix()};
    state.epoch = std::stoul(get("epoch"));
    state.step = std::stoul(get("step"));

    std::vector<std::pair<std::string, Matrix*>> slots;
    for (auto& p : state.encoder.parameters()) slots.emplace_back(p.name, &p.value);
    for (auto& p : state.discriminator.parameters()) slots.emplace_back(p.name, &p.value);
    Matrix table = Matrix::Zero(static_cast<Eigen::Index>(c.vocab_size), static_cast<Eigen::Index>(c.dim));
    slots.emplace_back("perturbation.vocab_table", &table);

    if (tensors.size() != slots.size()) {
        throw std::runtime_error("manifest lists " + std::to_string(tensors.size()) + " tensors, model expects " +
                                 std::to_string(slots.size()));
    }
    for (auto& [name, slot] : slots) {
        auto it = std::find_if(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == name; });
        if (it == tensors.end()) throw std::runtime_error("checkpoint lacks tensor " + name);
        if (it->value.rows() != slot->rows() || it->value.cols() != slot->cols()) {
            throw std::runtime_error("tensor " + name + ": shape " + std::to_string(it->value.rows()) + "x" +
                                     std::to_string(it->value.cols()) + " does not match model " +
                                     std::to_string(slot->rows()) + "x" + std::to_string(slot->cols()));
        }
        *slot = std::move(it->value);
    }
    state.vocab_table = std::move(table);
    return state;
}

}  // namespace robust_embed
