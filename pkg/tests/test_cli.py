import csv
import io
import json
from fractions import Fraction

import pytest

from binsplit.cli import SCHEMA, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_exact_csv(capsys):
    code, out, _ = run(capsys, "exact", "--p", "1/3", "--n", "2")
    assert code == 0
    r = rows(out)
    assert [(x["n"], x["k"]) for x in r] == [("2", "1"), ("2", "2")]
    assert float(r[0]["probability"]) == 0.6


def test_exact_json_is_rational(capsys):
    code, out, _ = run(capsys, "exact", "--model", "Y", "--m", "2", "--n", "1:3", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["schema"] == SCHEMA and doc["m"] == 2
    probs = {(r["n"], r["k"]): Fraction(r["probability"]) for r in doc["rows"]}
    assert probs[(2, 1)] == Fraction(3, 5)
    assert sum(v for (n, _), v in probs.items() if n == 3) == 1


def test_exact_output_file(tmp_path, capsys):
    target = tmp_path / "law.csv"
    assert main(["exact", "--p", "1/2", "--model", "W", "--n", "4", "-o", str(target)]) == 0
    assert sum(float(r["probability"]) for r in rows(target.read_text())) == pytest.approx(1)


@pytest.mark.parametrize(
    "argv",
    [
        ["exact", "--p", "2/3", "--n", "3"],
        ["exact", "--p", "0.3", "--n", "3"],
        ["exact", "--p", "1/3", "--n", "5:2"],
        ["exact", "--model", "Y", "--p", "1/3", "--m", "3", "--n", "2"],
        ["validate", "--p", "2/3"],
        ["frobnicate"],
    ],
)
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert err


def test_resource_limit(capsys):
    code, _, err = run(capsys, "exact", "--p", "1/3", "--n", "400")
    assert code == 3 and "resource" in err


def test_asympt_mean(capsys):
    code, out, _ = run(capsys, "asympt", "--p", "1/3", "--n", "729", "--format", "json")
    doc = json.loads(out)
    assert code == 0
    assert abs(doc["C"] - 0.55453533080252696605) < 1e-12
    assert abs(doc["rows"][0]["residual"]) < 1e-3


def test_asympt_pmf_columns(capsys):
    code, out, _ = run(capsys, "asympt", "--p", "1/3", "--quantity", "pmf", "--n", "243")
    r = rows(out)
    assert code == 0
    assert max(abs(float(x["residual"])) for x in r) < 0.01


def test_figure(capsys):
    code, out, _ = run(capsys, "figure", "fig3", "--p", "1/3", "--n", "81:200", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["fourier_terms"] == 5
    assert len(doc["rows"]) == 120
    assert doc["max_gap"] < 0.01
    code, out, _ = run(capsys, "figure", "fig4", "--p", "1/3", "--n", "81:90")
    assert code == 0 and list(rows(out)[0]) == ["n", "u", "approximation", "fourier"]


def test_simulate_seed_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("BINSPLIT_SEED", "41")
    _, a, _ = run(capsys, "simulate", "--model", "urn", "--p", "1/2", "--n", "6", "--trials", "300")
    _, b, _ = run(capsys, "simulate", "--model", "urn", "--p", "1/2", "--n", "6", "--trials", "300", "--seed", "41")
    assert a == b


def test_simulate_fit(capsys):
    code, out, _ = run(
        capsys, "simulate", "--model", "parking", "--n", "3", "--m", "2", "--trials", "3000", "--assert-fit", "--format", "json"
    )
    doc = json.loads(out)
    assert code == 0 and doc["fit"]["parking"]["passes_0.01"]


def test_validate_pass_and_fault(capsys):
    code, out, _ = run(capsys, "validate", "--p", "1/2,1/3", "--n-cap", "24")
    assert code == 0
    assert all(r["status"] == "PASS" for r in rows(out))
    code, out, err = run(capsys, "validate", "--p", "1/2", "--n-cap", "24", "--inject-fault", "q1-sign")
    assert code == 1
    failed = [r["check"] for r in rows(out) if r["status"] == "FAIL"]
    assert failed == ["Q real-valuedness"]
    assert "Q real-valuedness" in err
