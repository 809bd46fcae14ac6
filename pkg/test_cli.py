import json

import pytest

from bounds import PriceReport
from cli import main
from dual_programs import GapReport
from pipeline import EXIT_ARBITRAGE, EXIT_INPUT_INVALID, EXIT_OK, price_document, run_pricing


@pytest.fixture
def paths(fixtures_dir):
    return {name: str(fixtures_dir / f"{name}.json") for name in (
        "binomial_market", "binomial_call", "binomial_constant", "two_period_market", "two_period_call",
        "chain_market", "chain_claim", "dominant_market", "dominant_claim", "malformed_market",
    )}


def test_price_binomial_call(paths, tmp_path):
    out = tmp_path / "report.json"
    code = main(["price", "--market", paths["binomial_market"], "--claim", paths["binomial_call"],
                 "--mode", "exact", "--out", str(out)])
    assert code == EXIT_OK
    document = json.loads(out.read_text())
    assert document["report"]["alpha"] == "52/27"
    assert document["report"]["p_tilde"] == "60/17"
    assert document["report"]["beta"] == "49/17"
    assert document["gap"]["gap"] == "0"
    assert document["audit"]["max_violation"] == "0"
    assert document["exit_code"] == 0


def test_price_is_deterministic(paths, tmp_path):
    outputs = []
    for i in range(2):
        out = tmp_path / f"run{i}.json"
        main(["price", "--market", paths["two_period_market"], "--claim", paths["two_period_call"], "--out", str(out)])
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]


def test_price_to_stdout(paths, capsys):
    assert main(["price", "--market", paths["chain_market"], "--claim", paths["chain_claim"]]) == EXIT_OK
    document = json.loads(capsys.readouterr().out)
    assert document["report"]["p_tilde"] == "5"
    assert document["report"]["witness"]["q"] == {"c4": "1"}


def test_invalid_inputs_exit_two(paths, tmp_path):
    assert main(["price", "--market", paths["malformed_market"], "--claim", paths["binomial_call"]]) == EXIT_INPUT_INVALID
    assert main(["price", "--market", paths["binomial_market"], "--claim", paths["two_period_call"]]) == EXIT_INPUT_INVALID
    assert main(["price", "--market", str(tmp_path / "missing.json"), "--claim", paths["binomial_call"]]) == EXIT_INPUT_INVALID
    assert main(["price", "--market", paths["binomial_market"]]) == EXIT_INPUT_INVALID
    assert main(["verify", "--trials", "0"]) == EXIT_INPUT_INVALID
    assert main(["verify", "--tol", "-1"]) == EXIT_INPUT_INVALID
    assert main(["verify", "--seed", "-1"]) == EXIT_INPUT_INVALID


def test_arbitrage_exit_three(paths, capsys):
    assert main(["price", "--market", paths["dominant_market"], "--claim", paths["dominant_claim"]]) == EXIT_ARBITRAGE
    capsys.readouterr()
    assert main(["arbitrage", "--market", paths["dominant_market"]]) == EXIT_ARBITRAGE
    assert json.loads(capsys.readouterr().out)["witness"] is None


def test_arbitrage_prints_witness(paths, capsys):
    assert main(["arbitrage", "--market", paths["binomial_market"]]) == EXIT_OK
    witness = json.loads(capsys.readouterr().out)["witness"]
    assert witness["uuuu"] == "1/81"
    assert witness["dddd"] == "16/81"


def test_audit_command(paths, capsys):
    assert main(["audit", "--market", paths["binomial_market"], "--claim", paths["binomial_call"]]) == EXIT_OK
    document = json.loads(capsys.readouterr().out)
    assert document["price"] == "60/17"
    assert document["passed"] is True


def test_verify_command(tmp_path, capsys):
    out = tmp_path / "trials.csv"
    code = main(["verify", "--seed", "1", "--trials", "1", "--out", str(out), "--dump-dir", str(tmp_path / "bad")])
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["passed"] == 1 and summary["failed"] == 0
    assert out.read_text().startswith("trial,seed,")


def test_float_mode_matches_exact(paths):
    state = run_pricing(paths["binomial_market"], paths["binomial_call"], mode="float")
    assert state["exit_code"] == EXIT_OK
    assert state["report"].p_tilde == pytest.approx(60 / 17)
    assert state["report"].alpha == pytest.approx(52 / 27)


def test_constant_claim_prices_flat(paths):
    state = run_pricing(paths["binomial_market"], paths["binomial_constant"], mode="exact")
    report = state["report"]
    assert report.p_tilde == report.d_tilde == report.alpha == report.beta == 3


def test_verify_workers_default_to_the_environment(monkeypatch, capsys):
    monkeypatch.setenv("VERIFY_WORKERS", "2")
    assert main(["verify", "--seed", "3", "--trials", "2"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["workers"] == 2
    assert main(["verify", "--seed", "3", "--trials", "2", "--workers", "1"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["workers"] == 1


@pytest.mark.parametrize("mode", ["exact", "float"])
def test_price_document_parses_back_into_reports(paths, mode):
    state = run_pricing(paths["binomial_market"], paths["binomial_call"], mode=mode)
    document = json.loads(json.dumps(price_document(state)))
    assert PriceReport.model_validate(document["report"]) == state["report"]
    assert GapReport.model_validate(document["gap"]) == state["gap"]
