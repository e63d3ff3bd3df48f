"""Prompt construction, LLM invocation and tolerant response parsing.

The prompt is a fixed template; only the task, the modality, K and the
retrieved sentence list are substituted, so no dataset-identifying words can
leak in and steer the model. Responses are expected to contain two
Python-literal dicts (hypothesis_dict and prompt_dict) but real LLM output
drifts, so parsing tolerates prose, code fences, quote style and trailing
commas.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

from .errors import EmptyRecords, EmptySentences, PairingError, ParseError
from .providers import HttpLlmClient, LlmProvider, LlmRequest

PROMPT_TEMPLATE = """Context: {task} classification from {modality} using a deep neural network.

Analysis Post-Training: On a validation set:
a. Get the difference between the image embeddings of correct and incorrectly classified samples to estimate the features present in the correctly classified samples but missing in the misclassified samples.
b. Retrieve the top {k} sentences from the captions/radiology reports that match closely to the embedding difference in step a.
c. The sentence list is given below:

{sentences}

These sentences represent the features present in the correctly classified samples but missing in the misclassified samples.

Task: Consider the consistent attributes present in the descriptions of correctly classified and misclassified samples regarding {task}. Formulate hypotheses based on these attributes. Attributes include all concepts (e.g., explicit or implicit anatomies, observations, symptoms of change related to the disease, concepts leading to potential bias in medical images, or visual cues in natural images) in the sentences. Assess how these characteristics might influence the classifier's performance.

Your response should only contain the list of top hypotheses, formatted as follows:

hypothesis_dict = {{
    'H1': 'The classifier is making mistake as it is biased toward <attribute>',
    'H2': 'The classifier is making mistake as it is biased toward <attribute>',
    'H3': 'The classifier is making mistake as it is biased toward <attribute>',
    ...
}}

To effectively test Hypothesis 1 (H1) using the CLIP language encoder, create prompts explicitly validating H1. These prompts will help generate text embeddings that capture the essence of the hypothesis, which can be compared with the image embeddings from the dataset. The goal is to verify alignment with or violation of H1. Prompts must focus only on the {task}. Each hypothesis must have five prompts, formatted as:

prompt_dict = {{
    'H1_<attribute>': [List of prompts],
    'H2_<attribute>': [List of prompts],
    ...
}}

Final response format strictly:

hypothesis_dict
prompt_dict
"""

MEDICAL_ADDENDUM = (
    "Ignore '___' as they are due to anonymization. "
    "We focus only on positive {task} patients.\n"
)

METADATA_PROMPT_TEMPLATE = """Context: {task} classification using a deep neural network.

Analysis post-training: On a validation set, you are provided with the metadata details for the correctly classified positive {task} patients in a Python dictionary, as follows:

{records}

Task: Consider the consistent attributes present in the dictionary regarding the positive {task} patients. Formulate hypotheses based on these attributes. Assess how these characteristics might be influencing the classifier's performance. Your response should contain only the list of top hypothesis, nothing else. For the response, you should be the following python dictionary template, no extra sentence:

hypothesis_dict = {{
    'H1': 'The classifier is making mistake as it is biased toward <attribute>',
    'H2': 'The classifier is making mistake as it is biased toward <attribute>',
    'H3': 'The classifier is making mistake as it is biased toward <attribute>',
    ...
}}
"""


@dataclass(frozen=True)
class Hypothesis:
    id: str
    attribute: str
    statement: str
    test_sentences: tuple[str, ...]

    def __post_init__(self):
        if not self.test_sentences:
            raise PairingError(f"hypothesis {self.id} has no test sentences")


@dataclass(frozen=True)
class HypothesisSet:
    class_label: int
    hypotheses: tuple[Hypothesis, ...]
    raw_response: str

    def __post_init__(self):
        if not self.hypotheses:
            raise ParseError("hypothesis set is empty", raw=self.raw_response)
        ids = [h.id for h in self.hypotheses]
        if len(set(ids)) != len(ids):
            raise ParseError(f"duplicate hypothesis ids: {ids}", raw=self.raw_response)


def build_prompt(
    task: str,
    modality: str,
    sentences: Sequence[str],
    k: int,
    medical: bool = False,
) -> str:
    if not sentences:
        raise EmptySentences("cannot build a prompt from an empty sentence list")
    sentence_block = "\n".join(str(s) for s in sentences)
    prompt = PROMPT_TEMPLATE.format(task=task, modality=modality, k=k, sentences=sentence_block)
    if medical:
        prompt += "\n" + MEDICAL_ADDENDUM.format(task=task)
    return prompt


def _render_record(record: Mapping) -> str:
    # Values are rendered exactly as given (no reformatting of numbers).
    inner = ", ".join(f"{k}: {v}" for k, v in record.items())
    return "{" + inner + "}"


def build_metadata_prompt(task: str, records: Sequence[Mapping]) -> str:
    if not records:
        raise EmptyRecords("cannot build a metadata prompt from zero records")
    lines = [
        f"Patient {i}: {_render_record(rec)}" for i, rec in enumerate(records, start=1)
    ]
    return METADATA_PROMPT_TEMPLATE.format(task=task, records="\n".join(lines))


# --- tolerant response parsing -------------------------------------------------

_FENCE_RE = re.compile(r"^\s*```[\w-]*\s*$", re.MULTILINE)
_ELLIPSIS_LINE_RE = re.compile(r"^\s*(\.\.\.|…)\s*,?\s*$", re.MULTILINE)


def _strip_fences(text: str) -> str:
    return _FENCE_RE.sub("", text)


def _extract_dict_block(text: str, name: str) -> str | None:
    """Find `name`, skip an optional '=', and return the balanced {...} block.

    The scanner respects string literals (both quote styles, backslash
    escapes) while counting braces, so prose around the dicts is ignored.
    """
    for match in re.finditer(rf"\b{name}\b", text):
        pos = match.end()
        while pos < len(text) and text[pos] in " \t\r\n=":
            pos += 1
        if pos >= len(text) or text[pos] != "{":
            continue
        depth = 0
        quote: str | None = None
        escaped = False
        for i in range(pos, len(text)):
            ch = text[i]
            if quote is not None:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == quote:
                    quote = None
                continue
            if ch in "'\"":
                quote = ch
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[pos : i + 1]
        return None  # unbalanced block
    return None


def _eval_dict_block(block: str, name: str, raw: str) -> dict:
    cleaned = _ELLIPSIS_LINE_RE.sub("", block)
    try:
        value = ast.literal_eval(cleaned)
    except (ValueError, SyntaxError) as exc:
        raise ParseError(f"{name} is not a valid literal dict: {exc}", raw=raw) from exc
    if not isinstance(value, dict):
        raise ParseError(f"{name} did not evaluate to a dict", raw=raw)
    return value


_HYP_KEY_RE = re.compile(r"^H(\d+)$")


def parse_llm_response(text: str, class_label: int = 0) -> HypothesisSet:
    """Parse hypothesis_dict/prompt_dict out of an LLM response.

    Hypotheses and prompt lists are paired by their `Hi` prefix; the
    attribute name is the prompt-dict key's suffix after the first
    underscore.
    """
    stripped = _strip_fences(text)
    hyp_block = _extract_dict_block(stripped, "hypothesis_dict")
    if hyp_block is None:
        raise ParseError("no hypothesis_dict found in response", raw=text)
    statements = _eval_dict_block(hyp_block, "hypothesis_dict", text)
    if not statements:
        raise ParseError("hypothesis_dict is empty", raw=text)

    prompt_block = _extract_dict_block(stripped, "prompt_dict")
    prompts = _eval_dict_block(prompt_block, "prompt_dict", text) if prompt_block else {}

    by_id: dict[str, tuple[str, list[str]]] = {}
    for key, sentences in prompts.items():
        if not isinstance(key, str) or "_" not in key:
            raise ParseError(f"prompt_dict key {key!r} is not of the form Hi_<attribute>", raw=text)
        hyp_id, attribute = key.split("_", 1)
        if not _HYP_KEY_RE.match(hyp_id):
            raise ParseError(f"prompt_dict key {key!r} has no Hi prefix", raw=text)
        if isinstance(sentences, str):
            sentences = [sentences]
        if not isinstance(sentences, (list, tuple)):
            raise ParseError(f"prompt_dict[{key!r}] is not a list", raw=text)
        if hyp_id in by_id:
            raise PairingError(f"multiple prompt_dict entries for {hyp_id}")
        by_id[hyp_id] = (attribute, [str(s) for s in sentences])

    hypotheses = []
    for hyp_id in sorted(statements, key=_statement_sort_key):
        if not _HYP_KEY_RE.match(str(hyp_id)):
            raise ParseError(f"hypothesis_dict key {hyp_id!r} is not Hi-shaped", raw=text)
        if hyp_id not in by_id:
            raise PairingError(f"hypothesis {hyp_id} has no prompt_dict entry")
        attribute, sentences = by_id.pop(hyp_id)
        if not sentences:
            raise PairingError(f"hypothesis {hyp_id} has an empty prompt list")
        hypotheses.append(
            Hypothesis(
                id=str(hyp_id),
                attribute=attribute,
                statement=str(statements[hyp_id]),
                test_sentences=tuple(sentences),
            )
        )
    if by_id:
        raise PairingError(f"prompt_dict entries without hypotheses: {sorted(by_id)}")
    return HypothesisSet(class_label=class_label, hypotheses=tuple(hypotheses), raw_response=text)


def _statement_sort_key(key: str):
    m = _HYP_KEY_RE.match(str(key))
    return (0, int(m.group(1))) if m else (1, str(key))


def format_response(hypset: HypothesisSet) -> str:
    """Render a HypothesisSet in the canonical response format.

    parse_llm_response(format_response(s)) reproduces s; used for mock
    fixtures and round-trip tests.
    """
    lines = ["hypothesis_dict = {"]
    for h in hypset.hypotheses:
        lines.append(f"    {h.id!r}: {h.statement!r},")
    lines.append("}")
    lines.append("")
    lines.append("prompt_dict = {")
    for h in hypset.hypotheses:
        key = f"{h.id}_{h.attribute}"
        rendered = ", ".join(repr(s) for s in h.test_sentences)
        lines.append(f"    {key!r}: [{rendered}],")
    lines.append("}")
    return "\n".join(lines) + "\n"


def generate_hypotheses(
    client: Union[LlmProvider, LlmRequest],
    prompt: str,
    class_label: int = 0,
) -> HypothesisSet:
    """Send one single-message chat completion and parse the reply.

    Transient HTTP failures are retried inside the provider; parse failures
    carry the raw body for audit.
    """
    provider: LlmProvider = HttpLlmClient(client) if isinstance(client, LlmRequest) else client
    response = provider.complete(prompt)
    return parse_llm_response(response, class_label=class_label)
