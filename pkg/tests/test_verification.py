from utils import verification
from utils.verification import check_energy, check_hog, check_techniques, check_tradeoff, check_workloads, run_verification


def assert_all_pass(rows):
    failed = [f"{row.check}: {row.observed} (expected {row.expected})" for row in rows if row.verdict == "fail"]
    assert not failed, failed


def test_workload_group():
    rows = check_workloads()
    assert len(rows) == 6
    assert_all_pass(rows)


def test_hog_group():
    assert_all_pass(check_hog(seed=3))


def test_cnn_group():
    rows = verification.check_cnn(seed=1, oracle_layers=20)
    assert_all_pass(rows)
    assert any(row.check == "alexnet total MACs" for row in rows)


def test_techniques_group():
    assert_all_pass(check_techniques(round_trips=500))


def test_energy_group():
    rows = check_energy()
    assert_all_pass(rows)
    dram = next(row for row in rows if "DRAM" in row.check)
    assert dram.verdict == "advisory"


def test_dram_advisory_never_fails(data_copy, caplog):
    path = data_copy / "chips.json"
    path.write_text(path.read_text(encoding="utf-8").replace('"dram_b_per_pixel": 74.7', '"dram_b_per_pixel": 20.0'),
                    encoding="utf-8")
    with caplog.at_level("WARNING"):
        rows = check_energy()
    dram = next(row for row in rows if "DRAM" in row.check)
    assert dram.verdict == "advisory"
    assert any("DRAM" in record.getMessage() for record in caplog.records)


def test_tradeoff_group():
    rows = check_tradeoff()
    assert len(rows) == 7
    assert_all_pass(rows)


def test_group_exception_becomes_failed_row(monkeypatch):
    def broken(seed=0):
        raise RuntimeError("boom")
    monkeypatch.setitem(verification.GROUPS, "tradeoff", broken)
    rows = run_verification(["tradeoff"])
    assert len(rows) == 1
    assert rows[0].failed and rows[0].observed == "boom"


def test_failed_check_in_dataset(data_copy):
    path = data_copy / "tradeoff.json"
    path.write_text(path.read_text(encoding="utf-8").replace('"map_percent": 51.0', '"map_percent": 30.0'),
                    encoding="utf-8")
    rows = run_verification(["tradeoff"])
    assert any(row.failed for row in rows)


def test_hog_rows_follow_the_analytical_model(monkeypatch):
    real = verification.hog_gop_per_mpixel

    def drifted(config, size=None):
        report = real(config, size)
        return report.copy(update={"macs": report.macs + 1})
    monkeypatch.setattr(verification, "hog_gop_per_mpixel", drifted)
    rows = check_hog()
    counts = [row for row in rows if row.check.startswith("analytical == instrumented")]
    assert counts and all(row.failed for row in counts)


def test_cnn_rows_follow_the_analytical_model(monkeypatch):
    real = verification.conv_layer_macs
    monkeypatch.setattr(verification, "conv_layer_macs", lambda layer, height, width: real(layer, height, width) + 1)
    rows = verification.check_cnn(oracle_layers=4)
    assert next(row for row in rows if row.check == "instrumented MACs == conv_layer_macs").failed


def test_techniques_group_checks_quantization():
    rows = check_techniques(round_trips=10)
    example = next(row for row in rows if row.check == "2-bit uniform example")
    assert example.verdict == "pass"
