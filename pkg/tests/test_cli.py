"""End-to-end tests of the normvol command line (interface.cli and interface.commands)."""

from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path
import csv
import io
import tempfile

from common.constants import ExitCode
from common.tester import run_tests_for_function, test_module
from interface.cli import main

EXPERIMENT = """\
[model]
type = sabr
sigma0 = 20
nu = 0.5
rho = {rho}

[market]
x0 = 100
maturities = 0.5, 1.0
strikes = 90:110:10

[sim]
n_paths = 2000
steps_per_year = 20
seed = 5

[series]
n_terms = 20
n_max = 30
"""


def _write_config(directory: Path, rho: float = 0.0, name: str = "experiment.cfg") -> Path:
    path = directory / name
    path.write_text(EXPERIMENT.format(rho=rho), encoding="utf-8")
    return path


def _run(*argv: str) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


def _read_report(path: Path) -> tuple[list[str], list[dict[str, str]]]:
    """Comment lines and data records of a report."""
    lines = path.read_text(encoding="utf-8").splitlines()
    comments = [line for line in lines if line.startswith("#")]
    records = list(csv.DictReader(line for line in lines if not line.startswith("#")))
    return comments, records


def test_usage_errors_exit_with_two():
    with tempfile.TemporaryDirectory() as tmp:
        broken = Path(tmp) / "broken.cfg"
        broken.write_text("[model]\ntype = heston\n", encoding="utf-8")
        assert run_tests_for_function(
            [((),), (("price",),), (("price", "--config", str(Path(tmp) / "missing.cfg")),),
             (("price", "--config", str(broken)),), (("price", "--config", str(broken), "--paths", "many"),),
             (("teleport", "--config", str(broken)),)],
            [ExitCode.USAGE] * 6,
            lambda argv: _run(*argv)[0],
            "usage and config errors",
        )
        code, _, err = _run("price", "--config", str(broken))
        assert err.startswith("normvol: ")


def test_correlated_model_is_rejected_by_price():
    with tempfile.TemporaryDirectory() as tmp:
        config = _write_config(Path(tmp), rho=-0.5)
        code, _, err = _run("price", "--config", str(config), "--out", str(Path(tmp) / "out"))
        assert code == ExitCode.NUMERICAL
        assert "DomainError" in err


def test_price_report():
    with tempfile.TemporaryDirectory() as tmp:
        config = _write_config(Path(tmp))
        out = Path(tmp) / "out"
        code, stdout, _ = _run("price", "--config", str(config), "--out", str(out), "--benchmark")
        assert code == ExitCode.OK
        assert f"wrote {out / 'price.csv'}" in stdout
        comments, records = _read_report(out / "price.csv")
        assert comments[0].startswith("# config_hash=") and comments[1] == "# seed=5"
        assert len(records) == 6
        assert all(record["n_used"] == "20" for record in records)
        assert all(record["series_in_ci"] == "true" for record in records)
        assert len(list((out / "tables").glob("sabr_T*.txt"))) == 2

        code, _, _ = _run("price", "--config", str(config), "--out", str(out), "--strike", "95",
                          "--maturity", "1", "--terms", "25")
        _, records = _read_report(out / "price.csv")
        assert code == ExitCode.OK
        assert [(record["T"], record["strike"], record["n_used"]) for record in records] == [("1", "95", "25")]


def test_every_command_writes_its_reports():
    expected = {
        "smile": ["smile.csv"],
        "nstar": ["nstar.csv"],
        "greeks": ["greeks.csv", "greeks_timing.csv"],
        "cv": ["cv.csv"],
        "moments": ["moments.csv", "moments_summary.csv"],
    }
    with tempfile.TemporaryDirectory() as tmp:
        plain = _write_config(Path(tmp))
        correlated = _write_config(Path(tmp), rho=-0.5, name="correlated.cfg")
        for command, files in expected.items():
            config = correlated if command == "cv" else plain
            out = Path(tmp) / command
            code, _, err = _run(command, "--config", str(config), "--out", str(out))
            assert code == ExitCode.OK, err
            for name in files:
                comments, records = _read_report(out / name)
                assert comments[0].startswith("# config_hash="), name
                assert records, name

        _, smile = _read_report(Path(tmp) / "smile" / "smile.csv")
        assert all(record["status"] in ("ok", "wing_divergence") for record in smile)
        _, nstar = _read_report(Path(tmp) / "nstar" / "nstar.csv")
        assert {record["strike"] for record in nstar if record["status"] == "ok"} >= {"100"}
        comments, timing = _read_report(Path(tmp) / "greeks" / "greeks_timing.csv")
        assert "# nondeterministic_columns=seconds" in comments
        assert {record["method"] for record in timing} == {"series", "conditional_mc", "fd_mc"}
        _, cv = _read_report(Path(tmp) / "cv" / "cv.csv")
        assert all(float(record["factor_cv4"]) >= 1.0 for record in cv)
        _, moments = _read_report(Path(tmp) / "moments" / "moments.csv")
        assert len(moments) == 2 * 31


def test_reruns_are_byte_identical():
    with tempfile.TemporaryDirectory() as tmp:
        config = _write_config(Path(tmp))
        first, second = Path(tmp) / "first", Path(tmp) / "second"
        assert _run("moments", "--config", str(config), "--out", str(first))[0] == ExitCode.OK
        assert _run("moments", "--config", str(config), "--out", str(second), "--workers", "3")[0] == ExitCode.OK
        for name in ("moments.csv", "moments_summary.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes()
        first_tables = sorted((first / "tables").iterdir())
        second_tables = sorted((second / "tables").iterdir())
        assert [path.read_bytes() for path in first_tables] == [path.read_bytes() for path in second_tables]

        # a damaged cache is rebuilt, not trusted
        first_tables[0].write_text("garbage\n", encoding="utf-8")
        assert _run("moments", "--config", str(config), "--out", str(first))[0] == ExitCode.OK
        assert first_tables[0].read_bytes() == second_tables[0].read_bytes()

        # a different seed is a different simulation
        assert _run("moments", "--config", str(config), "--out", str(first), "--seed", "6")[0] == ExitCode.OK
        assert len(list((first / "tables").iterdir())) == 4
        assert (first / "moments.csv").read_bytes() != (second / "moments.csv").read_bytes()


if __name__ == "__main__":
    test_module(
        "cli",
        [
            test_usage_errors_exit_with_two,
            test_correlated_model_is_rejected_by_price,
            test_price_report,
            test_every_command_writes_its_reports,
            test_reruns_are_byte_identical,
        ],
    )
