from __future__ import annotations

import json

import numpy as np
import pytest
from conftest import CONFIGS

from skewmix.cobound import CoboundaryCertificate
from skewmix.lab.config import ExperimentConfig
from skewmix.lab.report import (
    COBOUNDARY_INTEGRAL,
    COBOUNDARY_REAL,
    INCONCLUSIVE,
    INSTABILITY_NOTE,
    MIXING,
    decide,
    dichotomy_report,
    dumps,
    jsonable,
)
from skewmix.trig import TrigPoly


def fake_cert(v, integral=True, residual=0.0):
    return CoboundaryCertificate(np.asarray(v, dtype=float), integral, 0.3, TrigPoly.zero(1), 8,
                                 0.0, residual, 0.0, 0.0)


def radii(*pairs):
    return [{"nu": list(nu), "radius": r} for nu, r in pairs]


def test_decide_mixing_needs_every_radius_below_margin():
    assert decide(radii(((1,), 0.8), ((2,), 0.9)), None, 1e-3) == (MIXING, [])
    verdict, flags = decide(radii(((1,), 0.8), ((2,), 0.9995)), None, 1e-3)
    assert verdict == INCONCLUSIVE and "[2]" in flags[0]


def test_decide_without_radii_is_inconclusive():
    verdict, flags = decide([], None, 1e-3)
    assert verdict == INCONCLUSIVE and flags == ["no radii computed"]


def test_decide_integral_certificate():
    assert decide(radii(((1,), 1.0)), fake_cert([1]), 1e-3) == (COBOUNDARY_INTEGRAL, [])
    # gaps at frequencies that are not multiples of v do not contradict the certificate
    assert decide(radii(((1, 0), 0.5), ((1, 1), 1.0)), fake_cert([1, 1]), 1e-3)[0] == COBOUNDARY_INTEGRAL


def test_decide_conflict_is_inconclusive():
    verdict, flags = decide(radii(((2,), 0.5)), fake_cert([1]), 1e-3)
    assert verdict == INCONCLUSIVE and flags[0].startswith("CONFLICT")


def test_decide_invalid_certificate_is_ignored():
    bad = fake_cert([1], residual=1.0)
    assert not bad.valid
    assert decide(radii(((1,), 0.5)), bad, 1e-3)[0] == MIXING


def test_decide_non_integral():
    cert = fake_cert([0.8660254037844386, -0.5], integral=False)
    assert decide(radii(((1, 0), 0.7)), cert, 1e-3) == (COBOUNDARY_REAL, [])


def test_jsonable_and_dumps():
    obj = {"a": np.float64(1.5), "b": np.arange(3), (1, 2): 1 + 2j, "c": (np.int64(4), float("nan")),
           "d": np.complex128(0.5j)}
    out = jsonable(obj)
    assert out == {"a": 1.5, "b": [0, 1, 2], "(1, 2)": [1.0, 2.0], "c": [4, None], "d": [0.0, 0.5]}
    text = dumps({"z": 1, "a": [np.float32(0.25)]})
    assert text.endswith("\n") and text.index('"a"') < text.index('"z"')
    assert json.loads(text) == {"a": [0.25], "z": 1}


@pytest.mark.parametrize("name, verdict", [
    ("mixing_cos", MIXING),
    ("coboundary_integral", COBOUNDARY_INTEGRAL),
    ("coboundary_sqrt3", COBOUNDARY_REAL),
])
def test_shipped_examples(name, verdict):
    rep = dichotomy_report(ExperimentConfig.load(CONFIGS / f"{name}.toml"))
    assert rep.verdict == verdict and rep.flags == []
    d = json.loads(rep.to_json())
    assert set(d) == {"seed", "verdict", "correlations", "fit", "radii", "symbol", "certificate",
                      "semiconjugacy_residual", "flags", "notes"}
    if verdict == MIXING:
        assert d["certificate"] is None and d["symbol"]["found"]
    else:
        assert d["certificate"]["residuals"]["equation_residual"] < 1e-6
    if verdict == COBOUNDARY_INTEGRAL:
        assert rep.semiconjugacy_residual < 1e-7
    else:
        assert rep.semiconjugacy_residual is None
    assert rep.notes == ([INSTABILITY_NOTE] if verdict == COBOUNDARY_REAL else [])
