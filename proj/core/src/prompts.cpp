#include "visret/prompts.hpp"

#include <stdexcept>

namespace visret::prompts {

namespace {

constexpr std::string_view kRephraseSingleEntity =
    R"PROMPT(You are given a query, rephrase the query into a short descriptive phrase that highlights the key part of the entity where the queried feature could be found. DO NOT include the asked feature (shape, color, etc.) but instead include the part of the entity where the feature could be found. Output only the rephrased query.

Examples:

Original query: What shape are the flowers of bush flax (scientific name: Astelia fragrans)?

Rephrased query: flowers of bush flax

Original query: Is the any specific color pattern on underside wings of tawny pipit (scientific name: Anthus campestris) displayed during flight, or is it uniformly colored?

Rephrased query: tawny pipit with its underside wings shown

Original query: {question}

Rephrased query:)PROMPT";

constexpr std::string_view kRephraseMultiEntity =
    R"PROMPT(You are given a query about two entities, as well as an entity of interest. Rephrase the query into a short descriptive phrase that highlights the key part of the entity of interest on which the queried feature could be found. DO NOT include the asked feature (shape, color, etc.) but instead include the entity name + part of the entity where the feature could be found. Output only the rephrased query.

Examples:

Original query: Are the tongues of grass snake (scientific name: Natrix helvetica) and Chicken Snake (scientific name: Spilotes pullatus) the same color?

Entity of interest: Spilotes pullatus

Rephrased query: Chicken Snake with its tongue shown

Original query: Which one has a more slender matured legume, common milkpea (scientific name: Galega officinalis) or narrowleaf lupin (scientific name: Lupinus angustifolius)?

Entity of interest: Galega officinalis

Rephrased query: the legume of common milkpea

Original query: {question}

Entity of interest: {entity}

Rephrased query:)PROMPT";

constexpr std::string_view kRephraseCaptionRetrieval =
    R"PROMPT(You are given an image retrieval query, rephrase the query to add in a bit detail (no longer than 30 words). The rephrased query should highlight the appearance, posture, actions of the main entity so that it is easier to retrieve the desired image among (1) images of the same entity with different posture and (2) images of different entities with the same posture.

Original query: {question}

Rephrased query:)PROMPT";

constexpr std::string_view kVqaSingleEntity =
    R"PROMPT(Given a question from the user regarding a visual feature of an organism (animal, plant, etc.), answer it using systematic reasoning. You will be provided with one or more images that may contain the key information for answering the question. Your output should consist of two parts.

1. Reasoning:
- Look at the image carefully. Pick out the feature that can help you correctly answer the question.
- If no useful information can be inferred from the image, you should summarize your own knowledge related to the question.
- If the image contradicts your own knowledge, you should trust the image.
- If the image is blurry, you should summarize your own knowledge related to the question.

2. Answer:
- Only your conclusion that directly answers the question.
- No need to repeat the reasoning.

Please always follow the answer format without bolding texts: "### Reasoning: {reasoning}\n### Answer: {your_answer}")PROMPT";

constexpr std::string_view kVqaMultiEntity =
    R"PROMPT(You are a model that rigorously answers a question that compares a visual feature of two organisms (animal, plant, etc.) using systematic reasoning. You will be provided with one or more images of both organisms that may contain the key information for answering the question. Your output should consist of two parts.

1. Reasoning:
- Look at the images carefully. Pick out the features that can help you correctly answer the question.
- If no useful information can be inferred from the image, you should summarize your own knowledge related to the organism.
- If the image contradicts your own knowledge, you should trust the image.
- If the image is blurry, you should summarize your own knowledge related to the question.
- Then, compare the features of the two organisms and reason through the question step by step.
- Finally, conclude your reasoning with a verification step that confirms the correctness of your answer based on the evidence you have gathered.

2. Answer:
- Only your conclusion that directly answers the question.
- No need to repeat the reasoning.

Please always follow the answer format without bolding texts: "### Reasoning: {reasoning}\n### Answer: {your_answer}")PROMPT";

constexpr std::string_view kJudge =
    R"PROMPT(Please evaluate the answer to a question, score from 0 to 1. The reference answer is provided, and the reference is usually short phrases or a single keyword. If the student answer is containing the keywords or similar expressions (including similar color), without any additional guessed information, it is full correct. If the student answer have missed some important part in the reference answer, please assign partial score. Usually, when there are 2 key features and only 1 is being answered, assign 0.5 score; if there are more than 2 key features, adjust partial score by ratio of correctly answered key feature. The reference answer can be in the form of a Python list, in this case, any one of the list item is correct.

If student answer contain irrelevant information not related to question, mark it with "Redundant", but it does not affect score if related part are correct. (e.g. Question: what shape is leave of Sanguinaria canadensis, Student Answer: shape is xxx, color is yyy, this is Redundant answer)

If student answer contain features not listed in reference answer, mark it with "Likely Hallucination" and deduct 0.5 score. (e.g., Reference Answer: black and white. Student Answer: black white, with yellow dots, “yellow dots” is not mentioned in reference). The reference answer sometimes contains an add-on enclosed by brackets (), to help verifying hallucinations (e.g.: “shape is xxx (color is yyy)”). Not mentioning add-on information in answer is not considered wrong. Answering "I don't know", "Not enough information" is considered wrong.

Format Instructions: Separate the remarks with score using "|", that is, use the syntax of: "Score: {score} | Likely Hallucination", "Score: {score}", "Score: {score} | Likely Hallucination | Redundant". If any explanation on why giving the score is needed, do not start a new line and append after remark with brackets, e.g. "Score: {score} | Redundant | (Explanation: abc)".

Following are few examples:

Question: Is there any specific color marking around the eyes of a semipalmated plover (scientific name: Charadrius semipalmatus)?
Reference Answer: black eye-round feather, white stripe above eyes. (sometimes connected to the white forehead)

Student Answer: Yes, the bird has a distinctive black line that runs through the eye, which is a key identifying feature.
Score: 0 | Likely Hallucination

Student Answer: They have a black vertical band in front of the eye, a white band above the eye, and a single black band that wraps partially around the eye, creating a partial "mask" appearance.
Score: 1

Student Answer: Yes, the semipalmated plover has a distinctive black/dark ring around its eye, surrounded by a bright white ring or patch
Score: 0.5 | Likely Hallucination (Explanation: not white ring, but only a line above the eye)

Question: What is the typical color of the antennae of Harris's checkerspot butterfly (scientific name: Chlosyne harrisii)?
Reference Answer: alternating black and white band, with yellow on the tip

Student Answer: The antennae of Harris's checkerspot butterfly are black with orange-tipped clubs.
Score: 0.5 (Explanation: not mentioning black and white)

Student Answer: The typical color of the antennae of Harris's checkerspot butterfly is black with white spots.
Score: 0.5 | Likely Hallucination (Explanation: not white spot but band. Not mentioning the tip)

Question: Are the leaves of burro-weed (scientific name: Ambrosia dumosa) usually covered in small hairs?
Reference Answer: yes

Student Answer: Yes, the leaves of burro-weed (Ambrosia dumosa) are typically covered in small hairs, giving them a grayish or whitish-green appearance.
Score: 1 | Redundant

Now, score the following question:

Question: {question}
Reference Answer: {reference_answer}

Student Answer: {model_answer})PROMPT";

} // namespace

std::string substitute(std::string text, std::string_view placeholder,
                       std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(placeholder, pos)) != std::string::npos) {
        text.replace(pos, placeholder.size(), value);
        pos += value.size();
    }
    return text;
}

std::string_view rephrase_template(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::SingleEntityVQA: return kRephraseSingleEntity;
        case DatasetKind::MultiEntityVQA: return kRephraseMultiEntity;
        case DatasetKind::CaptionRetrieval: return kRephraseCaptionRetrieval;
    }
    throw std::logic_error("unknown DatasetKind");
}

std::string_view vqa_system_prompt(DatasetKind kind) {
    return kind == DatasetKind::MultiEntityVQA ? kVqaMultiEntity : kVqaSingleEntity;
}

std::string_view judge_template() { return kJudge; }

std::string build_rephrase_prompt(DatasetKind kind, const std::string& question,
                                  const std::optional<std::string>& entity_name) {
    if (kind == DatasetKind::MultiEntityVQA && !entity_name) {
        throw std::invalid_argument(
            "build_rephrase_prompt: multi-entity rephrase requires an entity name");
    }
    std::string prompt = substitute(std::string(rephrase_template(kind)), "{question}", question);
    if (kind == DatasetKind::MultiEntityVQA) {
        prompt = substitute(std::move(prompt), "{entity}", *entity_name);
    }
    return prompt;
}

std::string build_judge_prompt(const std::string& question, const std::string& reference,
                               const std::string& answer) {
    std::string prompt = std::string(kJudge);
    prompt = substitute(std::move(prompt), "{question}", question);
    prompt = substitute(std::move(prompt), "{reference_answer}", reference);
    prompt = substitute(std::move(prompt), "{model_answer}", answer);
    return prompt;
}

} // namespace visret::prompts
