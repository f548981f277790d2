import pytest

from core.check_report import ANCHORS
from core.errors import EnumerationLimitError
from core.verify_suite import SECTIONS, verify_suite


def test_small_suite_passes():
    ledger = verify_suite(seed=3, cases=4)
    assert ledger.passed, [r.to_dict() for r in ledger.failures()]
    data = ledger.to_dict()
    assert data["failed"] == 0 and data["total"] == len(ledger.reports)


def test_sections_are_deterministic():
    first = SECTIONS["count"](5, 2, 10 ** 6)
    second = SECTIONS["count"](5, 2, 10 ** 6)
    assert [r.to_dict() for r in first] == [r.to_dict() for r in second]


def test_every_section_contributes():
    names = {r.name for r in verify_suite(seed=1, cases=2).reports}
    for expected in ("log_mgf_at_zero", "translation_composition", "partition_brute_force",
                     "count_brute_force", "partition_identity", "smoothed_brute_force",
                     "superadditivity_pathwise", "sandwich_upper", "legendre_closed_form"):
        assert expected in names


def test_every_report_names_its_statement():
    for report in verify_suite(seed=2, cases=1).reports:
        assert report.details["anchor"] == ANCHORS[report.name]


def test_enumeration_limit_is_honored():
    with pytest.raises(EnumerationLimitError):
        verify_suite(seed=1, cases=1, limit=10)


@pytest.mark.slow
def test_default_suite_passes():
    assert verify_suite(seed=7, cases=20).passed
