#include "synthetic.hpp"

#include "perjar/random.hpp"
#include "perjar/retrieval.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

namespace perjar::testing {

namespace {

constexpr std::string_view kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "pl", "st"};
constexpr std::string_view kVowels[] = {"a", "e", "i", "o", "u", "ai", "eo"};
constexpr std::string_view kSubfields[] = {"natural language processing", "computer vision", "robotics", "quantum physics"};
constexpr std::string_view kDomains[] = {"Physics", "Biology", "Computer Science", "Economics"};

std::vector<std::string> make_vocabulary(DeterministicRng& rng, std::size_t n) {
    std::set<std::string> seen{"title", "abstract"};
    std::vector<std::string> out;
    while (out.size() < n) {
        std::string w;
        const auto syllables = 2 + rng.below(2);
        for (std::uint64_t s = 0; s < syllables; ++s) {
            w += kOnsets[rng.below(std::size(kOnsets))];
            w += kVowels[rng.below(std::size(kVowels))];
        }
        if (seen.insert(w).second) out.push_back(std::move(w));
    }
    return out;
}

std::string pick_words(DeterministicRng& rng, std::span<const std::string> pool, std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += pool[rng.below(pool.size())];
    }
    return out;
}

std::string capitalize(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

}  // namespace

Corpus make_synthetic_corpus(const SyntheticOptions& o) {
    DeterministicRng rng(o.seed);
    const auto vocab = make_vocabulary(rng, o.vocabulary_size);
    Corpus c;

    // Abstracts with their candidate terms.
    std::map<AbstractId, std::vector<std::string>> abstract_terms;
    for (std::size_t d = 0; d < o.abstracts; ++d) {
        AbstractDoc doc;
        doc.id = AbstractId(fmt::format("abs{:03}", d));
        doc.title = capitalize(pick_words(rng, vocab, 4));
        doc.domain = std::string(kDomains[rng.below(std::size(kDomains))]);
        std::vector<std::string> terms;
        std::set<std::string> lowered;
        while (terms.size() < o.terms_per_abstract) {
            auto t = pick_words(rng, vocab, 1 + rng.below(2));
            if (lowered.insert(to_lower_ascii(t)).second) terms.push_back(std::move(t));
        }
        std::string text = capitalize(pick_words(rng, vocab, 12));
        for (const auto& t : terms) text += " uses " + t + " with " + pick_words(rng, vocab, 6);
        doc.text = text + ".";
        abstract_terms[doc.id] = std::move(terms);
        c.abstracts.emplace(doc.id, std::move(doc));
    }

    std::vector<AbstractId> abstract_ids;
    for (const auto& [id, d] : c.abstracts) abstract_ids.push_back(id);

    for (std::size_t a = 0; a < o.annotators; ++a) {
        Annotator ann;
        ann.id = AnnotatorId(fmt::format("ann{:02}", a));
        ann.subfield = std::string(kSubfields[a % std::size(kSubfields)]);
        ann.papers_published = static_cast<int>(o.publications_per_annotator + rng.below(20));
        ann.avg_references = 10.0 + static_cast<double>(rng.below(400)) / 4.0;
        ann.first_pub_year = 1995 + static_cast<int>(rng.below(28));

        std::vector<std::string> known = vocab;
        rng.shuffle(known);
        known.resize(std::max<std::size_t>(1, static_cast<std::size_t>(o.known_share * static_cast<double>(vocab.size()))));
        for (std::size_t p = 0; p < o.publications_per_annotator; ++p) {
            PublicationRecord pub;
            pub.title = capitalize(pick_words(rng, known, 5));
            pub.abstract_text = capitalize(pick_words(rng, known, 40)) + ".";
            pub.year = *ann.first_pub_year + static_cast<int>(p);
            ann.publications.push_back(std::move(pub));
        }
        std::set<std::string> pub_vocab;
        for (const auto& p : ann.publications) {
            for (auto& t : tokenize(p.title)) pub_vocab.insert(std::move(t));
            for (auto& t : tokenize(p.abstract_text)) pub_vocab.insert(std::move(t));
        }
        if (o.profiles) {
            ann.profile_text = fmt::format("This reader is a domain expert in {} who mostly writes about {}.", ann.subfield, pick_words(rng, known, 8));
        }

        const auto chosen = rng.sample_positions(abstract_ids.size(), std::min(o.abstracts_per_annotator, abstract_ids.size()));
        for (const auto pos : chosen) {
            const auto& abs_id = abstract_ids[pos];
            for (const auto& term : abstract_terms[abs_id]) {
                TermAnnotation t;
                t.annotator_id = ann.id;
                t.abstract_id = abs_id;
                t.term = term;
                if (o.rule == LabelRule::vocabulary) {
                    bool all_known = true;
                    for (const auto& tok : tokenize(term)) all_known = all_known && pub_vocab.contains(tok);
                    t.familiarity = all_known ? 0 : 1;
                } else {
                    t.familiarity = rng.unit() < o.unfamiliar_rate ? 1 : 0;
                }
                if (o.needs_labels) {
                    const double p = t.familiarity ? 0.7 : 0.2;
                    t.needs_definition = rng.unit() < p ? 1 : 0;
                    t.needs_background = rng.unit() < p ? 1 : 0;
                    t.needs_example = rng.unit() < p ? 1 : 0;
                }
                c.annotations.push_back(std::move(t));
            }
        }
        c.annotators.emplace(ann.id, std::move(ann));
    }

    if (o.clone_of) {
        const auto& source = c.annotator(AnnotatorId(*o.clone_of));
        Annotator clone = source;
        clone.id = AnnotatorId("clone");
        const auto n = c.annotations.size();
        for (std::size_t i = 0; i < n; ++i) {
            if (c.annotations[i].annotator_id != source.id) continue;
            auto copy = c.annotations[i];
            copy.annotator_id = clone.id;
            c.annotations.push_back(std::move(copy));
        }
        c.annotators.emplace(clone.id, std::move(clone));
    }

    for (const auto subfield : kSubfields) {
        auto& pool = c.augmentation_pool[normalize_subfield(subfield)];
        for (std::size_t p = 0; p < o.pool_per_subfield; ++p) {
            PublicationRecord pub;
            pub.title = capitalize(pick_words(rng, vocab, 5));
            pub.abstract_text = capitalize(pick_words(rng, vocab, 40)) + ".";
            pub.source = PublicationSource::subdomain_augmentation;
            pool.push_back(std::move(pub));
        }
    }
    validate_corpus(c);
    return c;
}

TempDir::TempDir(std::string_view stem) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() / fmt::format("perjar-{}-{}-{}", stem, ::getpid(), counter.fetch_add(1));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace perjar::testing
