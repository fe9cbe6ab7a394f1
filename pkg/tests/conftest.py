import json

import pytest

TINY = {
    "data": {"window_length": 20},
    "synth": {"n_signals": 3, "n_normal": 40, "anomalies": {"amplitude": 6, "decoupled": 6}},
    "model": {"time_steps": 4, "latent_dim": 3, "conv_channels": [2, 3], "deconv_channels": [3, 2],
              "lstm_hidden": 4, "dense_hidden": 6},
    "train": {"batch_size": 8, "max_epochs": 3, "patience": 2},
}


@pytest.fixture
def tiny_config(tmp_path):
    """Path of a JSON config for a model that trains in about a second."""
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY), encoding="utf-8")
    return path


# -- acceptance summary -----------------------------------------------------------
ACCEPTANCE = {}


@pytest.fixture
def record_criterion():
    """Record one acceptance criterion outcome for the end-of-run summary."""
    def record(number, title, passed, detail=""):
        ACCEPTANCE[number] = (title, bool(passed), detail)
        print(f"criterion {number} {title}: {'PASS' if passed else 'FAIL'} {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {number}. {title}  {detail}")
