"""Prompt construction, the response parser corpus, and LLM client plumbing."""

import difflib
import json
from pathlib import Path
from unittest import mock

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ladder import errors
from ladder.hypothesis import (
    Hypothesis,
    HypothesisSet,
    build_metadata_prompt,
    build_prompt,
    format_response,
    generate_hypotheses,
    parse_llm_response,
)
from ladder.providers import HttpLlmClient, LlmRequest, MockLlmClient, prompt_sha256

FIXTURES = Path(__file__).parent / "fixtures" / "llm_responses"


# --- prompt builder ------------------------------------------------------------

def test_prompt_contains_sentences_and_dict_markers():
    prompt = build_prompt("bird species", "natural images",
                          ["a bird on water", "a bird in a tree"], k=2)
    assert "a bird on water" in prompt and "a bird in a tree" in prompt
    assert "hypothesis_dict" in prompt and "prompt_dict" in prompt
    assert "bird species classification from natural images" in prompt


def test_medical_prompt_appends_anonymization():
    prompt = build_prompt("pneumothorax", "chest-x-rays", ["a report line"], k=1,
                          medical=True)
    assert "Ignore '___' as they are due to anonymization." in prompt
    assert "positive pneumothorax patients" in prompt
    assert "Ignore" not in build_prompt("pneumothorax", "chest-x-rays", ["x"], k=1)


def test_prompt_empty_sentences():
    with pytest.raises(errors.EmptySentences):
        build_prompt("t", "m", [], k=5)


def test_prompt_template_stability():
    # Two invocations differ only on the substituted placeholders.
    p1 = build_prompt("taskA", "modalityA", ["s1", "s2"], k=7)
    p2 = build_prompt("taskB", "modalityB", ["z1", "z2"], k=9)
    changed = [
        line
        for line in difflib.unified_diff(p1.splitlines(), p2.splitlines(), lineterm="", n=0)
        if line.startswith(("+", "-")) and not line.startswith(("+++", "---"))
    ]
    for line in changed:
        assert (
            "taskA" in line or "taskB" in line
            or "modalityA" in line or "modalityB" in line
            or "top 7" in line or "top 9" in line
            or line[1:] in ("s1", "s2", "z1", "z2")
        ), f"unexpected template difference: {line!r}"


def test_metadata_prompt_renders_records_verbatim():
    records = [{"age": 71, "view": "MLO"}, {"age": 83, "view": "CC"}]
    prompt = build_metadata_prompt("cancer", records)
    assert "Patient 1: {age: 71, view: MLO}" in prompt
    assert "Patient 2: {age: 83, view: CC}" in prompt
    assert "hypothesis_dict" in prompt and "prompt_dict" not in prompt


def test_metadata_prompt_empty_records():
    with pytest.raises(errors.EmptyRecords):
        build_metadata_prompt("cancer", [])


# --- parser fixture corpus ---------------------------------------------------------

def load_fixture_manifest():
    return json.loads((FIXTURES / "manifest.json").read_text())


@pytest.mark.parametrize("entry", load_fixture_manifest(), ids=lambda e: e["file"])
def test_parser_fixture_corpus(entry):
    text = (FIXTURES / entry["file"]).read_text()
    if entry["expect"] == "ok":
        hypset = parse_llm_response(text, class_label=0)
        assert len(hypset.hypotheses) == entry["n"]
        assert [h.attribute for h in hypset.hypotheses] == entry["attributes"]
        for h in hypset.hypotheses:
            assert len(h.test_sentences) == 5
        assert hypset.raw_response == text
    else:
        with pytest.raises(getattr(errors, entry["expect"])):
            parse_llm_response(text)


def test_fenced_equals_unfenced():
    fenced = (FIXTURES / "02_code_fenced.txt").read_text()
    unfenced = fenced.replace("```python\n", "").replace("```", "")
    a = parse_llm_response(fenced)
    b = parse_llm_response(unfenced)
    assert a.hypotheses == b.hypotheses


def test_pairing_error_prompt_without_hypothesis():
    text = """hypothesis_dict = {'H1': 'biased toward x'}
prompt_dict = {'H1_x': ['a'], 'H2_y': ['b']}"""
    with pytest.raises(errors.PairingError):
        parse_llm_response(text)


def test_parse_error_carries_raw_body():
    with pytest.raises(errors.ParseError) as exc_info:
        parse_llm_response("no dicts here at all")
    assert exc_info.value.raw == "no dicts here at all"


# --- round trip ------------------------------------------------------------------------

hyp_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=40
)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 6),
    statements=st.lists(hyp_text, min_size=6, max_size=6),
    attrs=st.lists(st.text(alphabet="abcdefgh_ ", min_size=1, max_size=10), min_size=6, max_size=6),
    sentences=st.lists(st.lists(hyp_text, min_size=1, max_size=5), min_size=6, max_size=6),
)
def test_format_parse_round_trip(n, statements, attrs, sentences):
    hypotheses = tuple(
        Hypothesis(
            id=f"H{i + 1}",
            attribute=attrs[i].strip() or "attr",
            statement=statements[i],
            test_sentences=tuple(sentences[i]),
        )
        for i in range(n)
    )
    original = HypothesisSet(class_label=1, hypotheses=hypotheses, raw_response="orig")
    rendered = format_response(original)
    parsed = parse_llm_response(rendered, class_label=1)
    assert parsed.hypotheses == original.hypotheses


# --- clients ------------------------------------------------------------------------------

CANNED = """hypothesis_dict = {'H1': 'biased toward water'}
prompt_dict = {'H1_water': ['water everywhere', 'open sea', 'a lake', 'waves', 'a river']}"""


def test_mock_client_round_trip(tmp_path):
    fixture = tmp_path / "mock.jsonl"
    fixture.write_text(
        json.dumps({"prompt_sha256": prompt_sha256("PROMPT"), "response": CANNED}) + "\n"
    )
    client = MockLlmClient.from_jsonl(fixture)
    hypset = generate_hypotheses(client, "PROMPT", class_label=2)
    assert hypset.class_label == 2
    assert hypset.hypotheses[0].attribute == "water"
    assert len(hypset.hypotheses[0].test_sentences) == 5
    # determinism: same prompt, same parse
    assert generate_hypotheses(client, "PROMPT", class_label=2) == hypset


def test_mock_client_missing_prompt(tmp_path):
    fixture = tmp_path / "mock.jsonl"
    fixture.write_text("")
    client = MockLlmClient.from_jsonl(fixture)
    with pytest.raises(errors.MissingFixture):
        client.complete("unknown prompt")


def _response(status, payload=None, text=""):
    resp = mock.Mock()
    resp.status_code = status
    resp.text = text or (json.dumps(payload) if payload is not None else "")
    if payload is not None:
        resp.json.return_value = payload
    else:
        resp.json.side_effect = ValueError("not json")
    return resp


def _client(session):
    return HttpLlmClient(
        LlmRequest(endpoint="http://unit.test/chat", model="m"),
        sleep=lambda _: None,
        session=session,
    )


def test_http_client_success_and_wire_shape():
    session = mock.Mock()
    session.post.return_value = _response(
        200, {"choices": [{"message": {"content": CANNED}}]}
    )
    hypset = generate_hypotheses(_client(session), "the prompt")
    assert hypset.hypotheses[0].attribute == "water"
    kwargs = session.post.call_args.kwargs
    assert kwargs["json"]["messages"] == [{"role": "user", "content": "the prompt"}]
    assert kwargs["json"]["model"] == "m"
    assert kwargs["json"]["temperature"] == 0.0


def test_http_client_retries_transient_then_succeeds():
    session = mock.Mock()
    session.post.side_effect = [
        _response(503),
        _response(429),
        _response(200, {"choices": [{"message": {"content": CANNED}}]}),
    ]
    hypset = generate_hypotheses(_client(session), "p")
    assert session.post.call_count == 3
    assert hypset.hypotheses[0].id == "H1"


def test_http_client_gives_up_after_retries():
    session = mock.Mock()
    session.post.side_effect = [_response(500)] * 4
    with pytest.raises(errors.HttpError):
        _client(session).complete("p")
    assert session.post.call_count == 4  # 1 try + 3 retries


def test_http_client_auth_error_no_retry():
    session = mock.Mock()
    session.post.return_value = _response(401)
    with pytest.raises(errors.AuthError):
        _client(session).complete("p")
    assert session.post.call_count == 1


def test_http_client_malformed_body_is_parse_error():
    session = mock.Mock()
    session.post.return_value = _response(200, {"unexpected": True}, text='{"unexpected": true}')
    with pytest.raises(errors.ParseError) as exc_info:
        _client(session).complete("p")
    assert "unexpected" in exc_info.value.raw


def test_llm_request_temperature_range():
    with pytest.raises(errors.HttpError):
        LlmRequest(endpoint="e", model="m", temperature=3.0)
