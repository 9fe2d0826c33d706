#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ralbench/correct.hpp"
#include "ralbench/metrics.hpp"
#include "support/fixtures.hpp"

using namespace ralbench;

namespace {

Instance labeled_instance(const std::string& value) {
    Instance inst;
    inst.id = "i1";
    inst.task = TaskKind::TextClassification;
    inst.key = "the patient developed a rash after the dose";
    inst.value = value;
    return inst;
}

const std::set<std::string> kTrueFalse{"True", "False"};

}  // namespace

TEST_CASE("detection prompt carries the paper wording with the task name substituted") {
    const auto prompt = detection_prompt(TaskKind::TextClassification, "sent", "True");
    CHECK(prompt.find("This is a text classification task. Please determine whether the label "
                      "assigned to the input sentence is correct. If the label is incorrect, "
                      "please provide the correct label.") == 0);
    CHECK(prompt.find("Input sentence: sent") != std::string::npos);
    CHECK(prompt.find("Label: True") != std::string::npos);

    CHECK(detection_prompt(TaskKind::LinkPrediction, "s", "v").find("This is a link prediction "
                                                                    "task.") == 0);
}

TEST_CASE("labeling prompt with and without the dataset aim") {
    const auto plain = labeling_prompt(TaskKind::TextClassification, "sent");
    CHECK(plain.find("This is a text classification task. Please assign a label to each "
                     "provided sentence to support this task.") == 0);

    const auto aimed = labeling_prompt(
        TaskKind::TextClassification, "sent",
        "determining whether a given sentence is related to an Adverse Drug Event (ADE)");
    CHECK(aimed.find("This is a text classification task aimed at determining whether a given "
                     "sentence is related to an Adverse Drug Event (ADE). Please assign a label "
                     "to each provided sentence to support this task.") == 0);
}

TEST_CASE("detect_and_correct parses judge verdicts") {
    SUBCASE("incorrect with a proposed label") {
        MockFixedBackend judge("incorrect. correct label: True");
        const auto outcome = detect_and_correct(labeled_instance("False"), judge, &kTrueFalse);
        CHECK(outcome.verdict == CorrectionOutcome::Verdict::IncorrectLabel);
        CHECK(outcome.revised_value == "True");
    }
    SUBCASE("correct label is a no-op") {
        MockFixedBackend judge("the label is correct");
        const auto outcome = detect_and_correct(labeled_instance("False"), judge, &kTrueFalse);
        CHECK(outcome.verdict == CorrectionOutcome::Verdict::CorrectLabel);
        CHECK_FALSE(outcome.revised_value.has_value());
    }
    SUBCASE("unparseable proposal degrades to a no-op") {
        MockFixedBackend judge("incorrect, but who knows what it should be");
        const auto outcome = detect_and_correct(labeled_instance("False"), judge, &kTrueFalse);
        CHECK(outcome.verdict == CorrectionOutcome::Verdict::CorrectLabel);
        CHECK_FALSE(outcome.revised_value.has_value());
    }
    SUBCASE("requires a value") {
        Instance bare = labeled_instance("False");
        bare.value.reset();
        MockFixedBackend judge("anything");
        CHECK_THROWS_AS(detect_and_correct(bare, judge, &kTrueFalse), Error);
    }
}

TEST_CASE("label_unlabeled validates against the label space") {
    Instance inst = labeled_instance("");
    inst.value.reset();

    MockFixedBackend good("True");
    const auto labeled = label_unlabeled(inst, good, &kTrueFalse);
    REQUIRE(labeled.kind == ParsedAnswer::Kind::Label);
    CHECK(labeled.label == "True");

    MockFixedBackend vague("maybe");
    CHECK(label_unlabeled(inst, vague, &kTrueFalse).kind == ParsedAnswer::Kind::NoAnswer);
}

TEST_CASE("oracle judge restores corrupted values through detect_and_correct") {
    const auto source = fixtures::classification_corpus(12);
    const auto corrupted = make_negative_corpus(source, 9);
    auto judge = fixtures::OracleJudgeBackend::from_manifest(corrupted.manifest, corrupted.corpus);

    for (const auto& inst : corrupted.corpus.entries) {
        const auto outcome = detect_and_correct(inst, judge, &*source.label_space);
        REQUIRE(outcome.revised_value.has_value());
        CHECK(*outcome.revised_value == *source.find(inst.id)->value);
    }
}

TEST_CASE("oracle labeler relabels a stripped corpus to the originals") {
    const auto source = fixtures::classification_corpus(12);
    const auto stripped = strip_labels(source);
    auto judge = fixtures::OracleJudgeBackend::from_source(source);

    for (const auto& inst : stripped.entries) {
        const auto labeled = label_unlabeled(inst, judge, &*source.label_space);
        REQUIRE(labeled.is_answer());
        CHECK(labeled.to_text() == *source.find(inst.id)->value);
    }
}

TEST_CASE("detect_and_correct is idempotent under the oracle judge") {
    const auto source = fixtures::classification_corpus(8);
    const auto corrupted = corrupt(source, 1.0, 4);
    auto judge = fixtures::OracleJudgeBackend::from_source(source);

    for (const auto& inst : corrupted.corpus.entries) {
        const auto first = detect_and_correct(inst, judge, &*source.label_space);
        REQUIRE(first.revised_value.has_value());
        Instance revised = inst;
        revised.value = first.revised_value;
        const auto second = detect_and_correct(revised, judge, &*source.label_space);
        CHECK(second.verdict == CorrectionOutcome::Verdict::CorrectLabel);
        CHECK(revised.value == first.revised_value);
    }
}

TEST_CASE("correction layer restores end-to-end accuracy on counterfactual corpora") {
    const auto source = fixtures::classification_corpus(20);
    const auto corrupted = make_negative_corpus(source, 21);
    const Bm25Retriever retriever(corrupted.corpus);
    MockEchoBackend backend;

    CorrectionLayer layer(
        std::make_shared<fixtures::OracleJudgeBackend>(
            fixtures::OracleJudgeBackend::from_manifest(corrupted.manifest, corrupted.corpus)),
        corrupted.corpus);

    PipelineConfig config;
    config.k = 1;
    config.transform = layer.transform();
    const auto records = run_pipeline(source, corrupted.corpus, retriever, backend, config);
    for (const auto& r : records) CHECK(r.correct);
    const auto outcomes = outcomes_from_records(TaskKind::TextClassification, records);
    CHECK(micro_prf(TaskKind::TextClassification, outcomes).f1 == 1.0);
}

TEST_CASE("correction layer labels unlabeled corpora via the oracle") {
    const auto source = fixtures::classification_corpus(15);
    const auto stripped = strip_labels(source);
    const Bm25Retriever retriever(stripped);
    MockEchoBackend backend;

    CorrectionLayer layer(std::make_shared<fixtures::OracleJudgeBackend>(
                              fixtures::OracleJudgeBackend::from_source(source)),
                          stripped);

    PipelineConfig config;
    config.k = 1;
    config.transform = layer.transform();
    const auto records = run_pipeline(source, stripped, retriever, backend, config);
    for (const auto& r : records) CHECK(r.correct);
}

TEST_CASE("no-op judge reproduces uncorrected records bit-identically") {
    const auto source = fixtures::classification_corpus(10);
    const auto corrupted = corrupt(source, 0.5, 2);
    const Bm25Retriever retriever(corrupted.corpus);
    MockEchoBackend backend;

    PipelineConfig plain;
    plain.k = 1;
    const auto baseline = run_pipeline(source, corrupted.corpus, retriever, backend, plain);

    CorrectionLayer layer(std::make_shared<MockFixedBackend>("the label is correct"),
                          corrupted.corpus);
    PipelineConfig with_judge = plain;
    with_judge.transform = layer.transform();
    const auto judged = run_pipeline(source, corrupted.corpus, retriever, backend, with_judge);

    REQUIRE(baseline.size() == judged.size());
    for (std::size_t i = 0; i < baseline.size(); ++i) {
        CHECK(baseline[i].to_json() == judged[i].to_json());
    }
}

TEST_CASE("correction layer judges each corpus entry at most once") {
    const auto source = fixtures::classification_corpus(6);
    const auto corrupted = corrupt(source, 1.0, 5);
    const Bm25Retriever retriever(corrupted.corpus);
    MockEchoBackend backend;

    auto counting = std::make_shared<fixtures::CountingBackend>(
        std::make_shared<fixtures::OracleJudgeBackend>(
            fixtures::OracleJudgeBackend::from_source(source)));
    CorrectionLayer layer(counting, corrupted.corpus);

    PipelineConfig config;
    config.k = 2;
    config.transform = layer.transform();

    // Query three times with the same test set; entries repeat across
    // retrievals but each is judged exactly once.
    for (int round = 0; round < 3; ++round) {
        run_pipeline(source, corrupted.corpus, retriever, backend, config);
    }
    CHECK(counting->calls() <= corrupted.corpus.size());
    CHECK(layer.judge_calls() == counting->calls());
}

TEST_CASE("a failing judge falls back to the unmodified example") {
    class ThrowingBackend final : public Backend {
    public:
        std::string id() const override { return "throwing"; }
        std::string generate(const std::string&) override { throw Error("judge down"); }
    };

    const auto source = fixtures::classification_corpus(6);
    const auto corrupted = corrupt(source, 1.0, 8);
    const Bm25Retriever retriever(corrupted.corpus);
    MockEchoBackend backend;

    PipelineConfig plain;
    plain.k = 1;
    const auto baseline = run_pipeline(source, corrupted.corpus, retriever, backend, plain);

    CorrectionLayer layer(std::make_shared<ThrowingBackend>(), corrupted.corpus);
    PipelineConfig with_judge = plain;
    with_judge.transform = layer.transform();
    const auto judged = run_pipeline(source, corrupted.corpus, retriever, backend, with_judge);

    REQUIRE(judged.size() == baseline.size());
    for (std::size_t i = 0; i < baseline.size(); ++i) {
        CHECK(judged[i].to_json() == baseline[i].to_json());
    }
}

TEST_CASE("correct_corpus rewrites labels offline") {
    const auto source = fixtures::classification_corpus(10);
    const auto corrupted = corrupt(source, 1.0, 6);
    auto judge = fixtures::OracleJudgeBackend::from_source(source);

    const auto result = correct_corpus(corrupted.corpus, judge);
    REQUIRE(result.corpus.size() == source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
        CHECK(result.corpus.entries[i].value == source.entries[i].value);
    }
    CHECK(result.outcomes.size() == source.size());

    // Unlabeled input: every entry labeled from the oracle.
    const auto stripped = strip_labels(source);
    const auto relabeled = correct_corpus(stripped, judge);
    REQUIRE(relabeled.corpus.size() == source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
        CHECK(relabeled.corpus.entries[i].value == source.entries[i].value);
    }
    CHECK(relabeled.corpus.kind.tag == CorpusKind::Tag::Labeled);
}
