import json

import numpy as np
import pytest

from rulegen.ast_tree import trees_equal
from rulegen.config import ABLATION_TOGGLES, ConfigError, RunConfig
from rulegen.data import (
    DatasetError,
    ast_from_doc,
    ast_to_doc,
    example_from_line,
    example_to_line,
    load_dataset,
    random_tree,
    save_dataset,
    synth_corpus,
)
from rulegen.grammar import induce_grammar


def test_config_roundtrip_lossless():
    cfg = RunConfig(dim=16, layers=5, no_scope=True, dropout=0.25, seed=9)
    back = RunConfig.from_json(cfg.to_json())
    assert back == cfg
    assert back.hash() == cfg.hash()


def test_config_unknown_keys_rejected():
    with pytest.raises(ConfigError) as e:
        RunConfig.from_json('{"dim": 8, "typo_key": 1}')
    assert "typo_key" in str(e.value)


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(layers=0)
    with pytest.raises(ConfigError):
        RunConfig(dropout=1.0)
    with pytest.raises(ConfigError):
        RunConfig(lr=0.0)
    with pytest.raises(ConfigError):
        RunConfig.from_json("not json")


def test_config_hash_sensitive_to_toggles():
    hashes = {RunConfig(**{t: True}).hash() for t in ABLATION_TOGGLES}
    hashes.add(RunConfig().hash())
    assert len(hashes) == len(ABLATION_TOGGLES) + 1


def test_example_roundtrip(six_examples):
    for ex in six_examples:
        back = example_from_line(example_to_line(ex))
        assert back.id == ex.id
        assert back.description == ex.description
        assert back.slots == ex.slots
        assert trees_equal(back.ast, ex.ast, compare_scopes=True)


def test_ast_doc_roundtrip(random_trees):
    for tree in random_trees[:50]:
        assert trees_equal(ast_from_doc(ast_to_doc(tree)), tree,
                           compare_scopes=True)


def test_record_errors():
    with pytest.raises(DatasetError):
        example_from_line('{"description": "x", "ast": {}}')  # no id
    with pytest.raises(DatasetError):
        example_from_line(json.dumps({
            "id": "a", "description": "x",
            "slots": [{"name": "n", "value": "1"},
                      {"name": "n", "value": "2"}],
            "ast": {"symbol": "tok", "terminal": "v"},
        }))
    with pytest.raises(DatasetError):
        example_from_line(json.dumps({
            "id": "a", "description": "x",
            "ast": {"symbol": "A", "terminal": "v",
                    "children": [{"symbol": "B", "children": []}]},
        }))


def test_load_dataset_errors(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text("")
    with pytest.raises(DatasetError):
        load_dataset(p)
    p.write_text("not json\n")
    with pytest.raises(DatasetError) as e:
        load_dataset(p)
    assert ":1:" in str(e.value)
    line = example_to_line(synth_corpus(count=1)[0])
    p.write_text(line + "\n" + line + "\n")
    with pytest.raises(DatasetError) as e:
        load_dataset(p)
    assert "duplicate id" in str(e.value)


def test_save_load_roundtrip(tmp_path, six_examples):
    p = tmp_path / "d.jsonl"
    save_dataset(six_examples, p)
    back = load_dataset(p)
    assert [ex.id for ex in back] == [ex.id for ex in six_examples]
    save_dataset(six_examples, tmp_path / "d2.jsonl")
    assert p.read_bytes() == (tmp_path / "d2.jsonl").read_bytes()


def test_synth_corpus_deterministic_and_derivable():
    a = synth_corpus(count=10, seed=3)
    b = synth_corpus(count=10, seed=3)
    assert [example_to_line(x) for x in a] == [example_to_line(x) for x in b]
    g = induce_grammar([ex.ast for ex in a])
    from rulegen.ast_tree import decode_from_rules, encode_to_rules

    for ex in a:
        rules = encode_to_rules(ex.ast, g)
        assert trees_equal(decode_from_rules(rules, g, ex.ast.symbol), ex.ast)


def test_synth_corpus_descriptions_encode_slots():
    for ex in synth_corpus(count=5, seed=1):
        assert len(ex.slots) == 1
        name, value = ex.slots[0]
        assert value in ex.description.split()


def test_random_tree_bounded_and_valid(fixture_grammar):
    rng = np.random.default_rng(0)
    from rulegen.ast_tree import encode_to_rules

    for _ in range(100):
        tree = random_tree(fixture_grammar, rng, max_depth=5)
        encode_to_rules(tree, fixture_grammar)  # must not raise
