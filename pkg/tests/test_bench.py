import asyncio
import math
import orjson
import numpy as np
import pytest

from phunmix.errors import ConfigError, InvalidArgumentError
from phunmix.main import main
from phunmix.converter import dumps_instance
from phunmix.bench import settings, tasks, writer
from phunmix.bench.config import build_config, load_config, parse_config_text
from phunmix.bench.converter import ReportRow, SummaryRow
from phunmix.bench.processor import noise_slope, run_sweep, summarize
from phunmix.separation.audio import read_spectrogram
from phunmix.separation.stft import StftConfig
from tests.conftest import make_instance

SMALL_SWEEP = """
# two trials, three solvers
grid = 2x2
snr_db = noiseless
trials = 2
solvers = nmwf, phunalt, phunlift
seed = 3
"""


def make_row(**overrides) -> ReportRow:
    values = dict(m=2, k=2, snr_db=math.inf, solver="phunlift", trial_index=0, relative_error=1e-9,
                  residual=0.0, exact=True, iterations=10, wall_time_ms=None, seed=1, abs_error=1e-9,
                  noise_stddev=0.0)
    values.update(overrides)
    return ReportRow(**values)


def test_parse_config():
    cfg = parse_config_text(
        "grid = 2x2, 2x3\nsnr_db = noiseless, 30\ntrials = 5\nsolvers = nmwf, phunlift\n"
        "seed = 9\nalt_tol = 1e-4\nbcd_nu = 0.1\ntiming = yes\n"
    )
    assert cfg.grid == ((2, 2), (2, 3))
    assert cfg.snr_db_list == (math.inf, 30.0)
    assert (cfg.trials, cfg.master_seed, cfg.timing) == (5, 9, True)
    assert cfg.solvers == ("nmwf", "phunlift")
    assert cfg.alt.tol == 1e-4 and cfg.bcd.nu == 0.1
    assert cfg.to_payload()["snr_db_list"] == ["noiseless", "30"]


@pytest.mark.parametrize("text", [
    "trials = 5",
    "grid = 2x2\ncolour = blue",
    "grid = 2x2\ngrid = 3x3",
    "grid = 2by2",
    "grid = 2x2\ntrials = many",
    "grid = 2x2\ntrials = 0",
    "grid = 0x2",
    "grid = 2x2\nsolvers = nmwf, gradient",
    "grid = 2x3\nsolvers = ls, nmwf",
    "grid = 2x2\nbcd_nu = 1.5",
    "grid = 2x2\nthis line has no equals sign",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.conf"))
    with pytest.raises(ConfigError):
        build_config(grid=((2, 2),), snr_db_list=(-math.inf,))


def test_sweep_row_count_and_order():
    rows = run_sweep(parse_config_text(SMALL_SWEEP), workers=1)
    assert len(rows) == 6
    assert rows == sorted(rows, key=lambda row: row.sort_key)
    assert {row.solver for row in rows} == {"nmwf", "phunalt", "phunlift"}
    assert all(row.wall_time_ms is None for row in rows)
    # Every solver of a trial sees the same instance.
    assert len({row.seed for row in rows if row.trial_index == 0}) == 1


def test_csv_is_independent_of_thread_count(tmp_path):
    cfg = parse_config_text(SMALL_SWEEP.replace("trials = 2", "trials = 6"))
    paths = []
    for workers in (1, 4):
        path = tmp_path / f"report_{workers}.csv"
        asyncio.run(writer.write_report_csv(str(path), run_sweep(cfg, workers=workers)))
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_csv_round_trip(tmp_path):
    rows = [make_row(), make_row(snr_db=30.0, solver="nmwf", trial_index=1, relative_error=0.25,
                                 exact=False, wall_time_ms=1.5, noise_stddev=0.01)]
    path = str(tmp_path / "report.csv")
    asyncio.run(writer.write_report_csv(path, rows))
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert lines[0].startswith("m,k,snr_db,solver,trial_index,relative_error,residual,exact,iterations")
    assert lines[1].split(",")[2] == "noiseless"
    assert writer.read_report_csv(path) == rows
    assert not list(tmp_path.glob("*.tmp"))


def test_summarize():
    rows = [
        make_row(trial_index=0, relative_error=1e-9, iterations=1, abs_error=1.0),
        make_row(trial_index=1, relative_error=3e-9, iterations=3, abs_error=3.0),
    ]
    (summary,) = summarize(rows)
    assert summary.count == 2
    assert summary.mean_relative_error == pytest.approx(2e-9)
    assert summary.mean_iterations == 2.0
    assert summary.exact_fraction == 1.0
    assert summary.mean_wall_time_ms is None
    with pytest.raises(InvalidArgumentError):
        summarize([])


def test_noise_slope():
    summary = [
        SummaryRow(m=2, k=2, snr_db=snr, solver="phunlift", count=10, mean_relative_error=0.0,
                   median_relative_error=0.0, exact_fraction=0.0, mean_iterations=1.0,
                   mean_wall_time_ms=None, median_abs_error=2 * sigma, mean_noise_stddev=sigma)
        for snr, sigma in ((20.0, 0.1), (40.0, 0.01), (60.0, 0.001))
    ]
    assert noise_slope(summary, "phunlift") == pytest.approx(1.0)
    with pytest.raises(InvalidArgumentError):
        noise_slope(summary[:1], "phunlift")


def test_failure_dumps_instance(tmp_path, monkeypatch):
    def failing_solver(*args, **kwargs):
        raise InvalidArgumentError("solver blew up")

    monkeypatch.setattr(tasks, "run_solver", failing_solver)
    monkeypatch.setattr(settings, "DUMP_DIR", str(tmp_path))
    cfg = parse_config_text(SMALL_SWEEP)
    with pytest.raises(InvalidArgumentError):
        tasks.run_trial(cfg, 2, 2, math.inf, 0)
    seed = tasks.trial_seed(cfg.master_seed, 2, 2, math.inf, 0)
    payload = orjson.loads((tmp_path / f"{seed}.json").read_bytes())
    assert payload["failure"]["solver"] == "nmwf"
    assert payload["m"] == 2 and len(payload["a"]) == 4


def test_cli_sweep(tmp_path):
    config = tmp_path / "sweep.conf"
    config.write_text(SMALL_SWEEP)
    csv_path, json_path = tmp_path / "out" / "report.csv", tmp_path / "summary.json"
    code = main(["sweep", "--config", str(config), "--out", str(csv_path), "--json", str(json_path), "--threads", "2"])
    assert code == settings.EXIT_OK
    assert len(csv_path.read_text().splitlines()) == 7
    report = orjson.loads(json_path.read_bytes())
    assert report["config"]["grid"] == ["2x2"]
    assert len(report["summary"]) == 3


def test_cli_exit_codes(tmp_path):
    config = tmp_path / "bad.conf"
    config.write_text("grid = 2x3\nsolvers = ls\n")
    assert main(["sweep", "--config", str(config)]) == settings.EXIT_CONFIG_ERROR
    assert main(["sweep", "--config", str(tmp_path / "absent.conf")]) == settings.EXIT_CONFIG_ERROR

    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["solve", "--instance", str(broken), "--solver", "phunlift"]) == settings.EXIT_RUNTIME_ERROR
    assert main(["solve", "--instance", str(tmp_path / "absent.json"), "--solver", "phunlift"]) == settings.EXIT_RUNTIME_ERROR


def test_cli_solve(tmp_path, capsys):
    path = tmp_path / "instance.json"
    path.write_bytes(dumps_instance(make_instance(2, 2, seed=5)))
    assert main(["solve", "--instance", str(path), "--solver", "phunlift"]) == settings.EXIT_OK
    payload = orjson.loads(capsys.readouterr().out)
    assert payload["method"] == "phunlift"
    assert payload["relative_error"] < 1e-6
    assert payload["duality_gap"] >= -1e-9


def test_cli_separate_dumps_spectrograms(tmp_path, capsys):
    dump_dir = tmp_path / "spectra"
    code = main(["separate", "--synthetic", "2", "--m", "2", "--rate", "8000", "--window", "64", "--hop", "32",
                 "--solvers", "nmwf+,phunalt*5", "--dump-spectrograms", str(dump_dir)])
    assert code == settings.EXIT_OK
    assert "phunalt*5" in capsys.readouterr().out
    names = sorted(path.name for path in dump_dir.iterdir())
    assert names == sorted(f"{label}_{i}.spec" for label in ("mixture", "source", "nmwfplus", "phunaltx5") for i in (0, 1))
    cfg = StftConfig(sample_rate=8000, window_len=64, hop=32)
    source = read_spectrogram(str(dump_dir / "source_0.spec"))
    assert source.shape == (cfg.bins, cfg.frame_count(8000))
    estimate = read_spectrogram(str(dump_dir / "nmwfplus_0.spec"))
    np.testing.assert_allclose(np.abs(estimate), np.abs(source), rtol=1e-10)
