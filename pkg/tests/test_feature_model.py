import pytest
from hypothesis import given
from hypothesis import strategies as st

from bgenergy.errors import DecompositionError
from bgenergy.feature_model import (
    AUTOSAVE_CHAIN,
    AUTOSAVE_PROFILE,
    AtomicOperation,
    FeatureProfile,
    Frequency,
    Persistence,
    Resource,
    Scope,
    Trigger,
    VariantChain,
    VariantSpec,
    build_variant_chain,
    is_strict_prefix,
    validate_profile,
)


def test_autosave_chain_is_base_change_logging():
    ops = [v.operations for v in AUTOSAVE_CHAIN]
    assert ops == [
        ("file_write",),
        ("file_write", "change_detect"),
        ("file_write", "change_detect", "logging"),
    ]
    assert AUTOSAVE_CHAIN.names == ["base", "change", "logging"]


def test_single_operation_chain():
    chain = build_variant_chain([AtomicOperation("file_write")])
    assert len(chain) == 1
    assert chain.get("file_write").operations == ("file_write",)


def test_duplicate_ids_rejected():
    with pytest.raises(DecompositionError, match="duplicate"):
        build_variant_chain(["a", "b", "a"])


def test_empty_decomposition_rejected():
    with pytest.raises(DecompositionError):
        build_variant_chain([])


def test_unnamed_variants_take_last_operation_id():
    chain = build_variant_chain(["w", "c", "l"], names=["base", None, ""])
    assert chain.names == ["base", "c", "l"]


def test_name_count_must_match():
    with pytest.raises(DecompositionError):
        build_variant_chain(["w", "c"], names=["only"])


def test_chain_rejects_non_prefix_and_duplicate_names():
    with pytest.raises(DecompositionError, match="prefix"):
        VariantChain((VariantSpec("a", ("x",)), VariantSpec("b", ("y", "x"))))
    with pytest.raises(DecompositionError, match="unique"):
        VariantChain((VariantSpec("a", ("x",)), VariantSpec("a", ("x", "y"))))
    with pytest.raises(DecompositionError):
        VariantSpec("empty", ())
    with pytest.raises(DecompositionError):
        VariantSpec("dup", ("x", "x"))


def test_variant_includes():
    change = AUTOSAVE_CHAIN.get("change")
    assert change.includes("change_detect") and not change.includes("logging")
    with pytest.raises(KeyError):
        AUTOSAVE_CHAIN.get("control")


def test_autosave_profile_is_valid():
    assert validate_profile(AUTOSAVE_PROFILE) == []
    assert AUTOSAVE_PROFILE.persistence is Persistence.LONG_RUNNING


def test_empty_resources_flagged():
    p = FeatureProfile(Trigger.SCHEDULE_TIME, Frequency.PERIODIC, Persistence.IMMEDIATE, frozenset(), Scope.LOCAL)
    assert "resources empty" in validate_profile(p)


def test_external_network_profile_is_valid():
    p = FeatureProfile(
        Trigger.REACTIVE, Frequency.SPORADIC, Persistence.DEFERRABLE, frozenset({Resource.NETWORK}), Scope.EXTERNAL
    )
    assert validate_profile(p) == []


def test_wrong_types_are_reported():
    p = FeatureProfile("often", Frequency.PERIODIC, Persistence.IMMEDIATE, frozenset({"gpu"}), Scope.LOCAL)
    problems = validate_profile(p)
    assert any(s.startswith("trigger") for s in problems)
    assert any("unknown resource" in s for s in problems)


def test_profile_dict_round_trip():
    assert FeatureProfile.from_dict(AUTOSAVE_PROFILE.to_dict()) == AUTOSAVE_PROFILE
    with pytest.raises(ValueError):
        FeatureProfile.from_dict({**AUTOSAVE_PROFILE.to_dict(), "scope": "galactic"})


OP_LISTS = st.lists(st.text("abcdefgh_", min_size=1, max_size=6), min_size=1, max_size=8, unique=True)


@given(OP_LISTS)
def test_chain_length_and_prefix_property(ids):
    chain = build_variant_chain(ids)
    assert len(chain) == len(ids)
    variants = list(chain)
    for prev, nxt in zip(variants, variants[1:]):
        assert is_strict_prefix(prev.operations, nxt.operations)
    assert variants[-1].operations == tuple(ids)


@given(OP_LISTS)
def test_chain_is_deterministic(ids):
    assert build_variant_chain(ids) == build_variant_chain(list(ids))
