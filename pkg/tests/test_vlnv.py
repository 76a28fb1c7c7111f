"""VLNV parsing, formatting, matching and version ordering."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from socbuild.errors import ArityError, BadIdentifierError, BadVersionError
from socbuild.model import (
    Vlnv,
    VlnvRef,
    format_vlnv,
    matches_ref,
    parse_vlnv,
    parse_vlnv_ref,
    version_cmp,
)

identifiers = st.from_regex(r"[A-Za-z_][A-Za-z0-9_\-]{0,15}", fullmatch=True)
versions = st.tuples(
    st.integers(0, 999), st.integers(0, 999), st.integers(0, 999)
)
vlnvs = st.builds(Vlnv, identifiers, identifiers, identifiers, versions)


class TestParseVlnv:
    def test_basic(self):
        v = parse_vlnv("cern::soc::gpio::1.0.0")
        assert v == Vlnv("cern", "soc", "gpio", (1, 0, 0))

    def test_placeholder_version_rejected(self):
        with pytest.raises(BadVersionError):
            parse_vlnv("VENDOR::LIBRARY::NAME::VERSION")

    def test_too_few_components(self):
        with pytest.raises(ArityError):
            parse_vlnv("a::b::c")

    def test_too_many_components(self):
        with pytest.raises(ArityError):
            parse_vlnv("a::b::c::1.0.0::x")

    @pytest.mark.parametrize("bad", ["1a::b::c::1.0.0", "a::b c::d::1.0.0", "::b::c::1.0.0"])
    def test_bad_identifier(self, bad):
        with pytest.raises(BadIdentifierError):
            parse_vlnv(bad)

    @pytest.mark.parametrize("bad", ["a::b::c::1.0", "a::b::c::1.0.0.0",
                                     "a::b::c::01.0.0", "a::b::c::1.0.+2",
                                     "a::b::c::-1.0.0"])
    def test_bad_version(self, bad):
        with pytest.raises(BadVersionError):
            parse_vlnv(bad)


class TestFormatVlnv:
    def test_canonical_join(self):
        assert format_vlnv(Vlnv("cern", "soc", "gpio", (1, 0, 0))) == "cern::soc::gpio::1.0.0"

    def test_no_zero_padding(self):
        assert format_vlnv(Vlnv("a", "b", "c", (10, 2, 0))) == "a::b::c::10.2.0"

    @given(vlnvs)
    def test_round_trip_identity(self, v):
        assert parse_vlnv(format_vlnv(v)) == v

    @given(vlnvs)
    def test_double_round_trip(self, v):
        text = format_vlnv(v)
        assert format_vlnv(parse_vlnv(text)) == text


class TestParseVlnvRef:
    def test_three_components_any_version(self):
        r = parse_vlnv_ref("cern::soc::gpio")
        assert r == VlnvRef("cern", "soc", "gpio", None)

    def test_four_components_exact(self):
        r = parse_vlnv_ref("cern::soc::gpio::1.2.3")
        assert r.version == (1, 2, 3)

    def test_too_few(self):
        with pytest.raises(ArityError):
            parse_vlnv_ref("cern::soc")

    def test_round_trip(self):
        for text in ("a::b::c", "a::b::c::4.5.6"):
            assert str(parse_vlnv_ref(text)) == text


class TestMatchesRef:
    def test_any_version_matches(self):
        assert matches_ref(parse_vlnv_ref("a::b::c"), parse_vlnv("a::b::c::9.9.9"))

    def test_exact_mismatch(self):
        assert not matches_ref(parse_vlnv_ref("a::b::c::1.0.0"), parse_vlnv("a::b::c::1.0.1"))

    def test_vendor_differs(self):
        assert not matches_ref(parse_vlnv_ref("x::b::c"), parse_vlnv("a::b::c::1.0.0"))

    @given(versions, versions)
    def test_any_ref_invariant_under_version(self, v1, v2):
        ref = VlnvRef("a", "b", "c", None)
        assert ref.matches(Vlnv("a", "b", "c", v1)) == ref.matches(Vlnv("a", "b", "c", v2))


class TestVersionCmp:
    def test_numeric_not_lexicographic(self):
        assert version_cmp((2, 10, 0), (2, 9, 1)) == 1

    def test_equal(self):
        assert version_cmp((1, 0, 0), (1, 0, 0)) == 0

    def test_major_dominates(self):
        assert version_cmp((0, 9, 9), (1, 0, 0)) == -1

    @given(versions, versions)
    def test_antisymmetric(self, a, b):
        assert version_cmp(a, b) == -version_cmp(b, a)

    @given(versions, versions, versions)
    def test_transitive(self, a, b, c):
        if version_cmp(a, b) <= 0 and version_cmp(b, c) <= 0:
            assert version_cmp(a, c) <= 0

    @given(versions)
    def test_reflexive_equal(self, a):
        assert version_cmp(a, a) == 0
