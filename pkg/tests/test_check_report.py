import math

from core.check_report import ANCHORS, anchored, check_at_least, check_at_most, check_identity, json_number


def test_inequality_slack_sign():
    report = check_at_most("upper", 1.0, 2.0, 0.0)
    assert report.passed and report.slack == 1.0
    report = check_at_most("upper", 2.5, 2.0, 0.25)
    assert not report.passed and report.slack == -0.5
    report = check_at_least("lower", 2.0, 2.25, 0.5, details={"n": 3})
    assert report.passed and report.slack == -0.25
    assert report.details == {"n": 3}


def test_identity_with_infinities():
    report = check_identity("zero_mass", -math.inf, -math.inf, 0.0)
    assert report.passed and report.slack == 0.0
    report = check_identity("mismatch", 1.0, 1.5, 0.1)
    assert not report.passed and report.slack == -0.5
    assert check_at_most("empty", -math.inf, -math.inf, 0.0).passed


def test_report_serialization():
    data = check_at_most("bound", -math.inf, 0.0, 0.0, details={"value": math.nan}).to_dict()
    assert data == {"name": "bound", "lhs": "-inf", "rhs": 0.0, "slack": "+inf", "pass": True,
                    "details": {"value": "nan"}}
    assert json_number(3) == 3
    assert "details" not in check_identity("x", 1.0, 1.0, 0.0).to_dict()


def test_anchored_adds_statement():
    report = anchored(check_at_most("jensen_bound", 0.5, 0.7, 0.0, details={"beta": 1.0}))
    assert report.details == {"beta": 1.0, "anchor": ANCHORS["jensen_bound"]}
    assert report.to_dict()["details"]["anchor"] == ANCHORS["jensen_bound"]
    unknown = check_identity("unlisted", 1.0, 1.0, 0.0)
    assert anchored(unknown) is unknown
