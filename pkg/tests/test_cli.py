"""CLI tests."""
# Import future modules
from __future__ import annotations

# Import built-in modules
import json
import os
from unittest.mock import MagicMock
from unittest.mock import patch

# Import third-party modules
import pytest

# Import local modules
from porous_bingham.cli import build_config
from porous_bingham.cli import create_parser
from porous_bingham.cli import deep_merge
from porous_bingham.cli import load_config
from porous_bingham.cli import main
from porous_bingham.exceptions import IOFailure


def _read_manifest(directory) -> dict:
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as f:
        return json.load(f)


def test_create_parser(monkeypatch) -> None:
    """Test argument parser creation."""
    monkeypatch.delenv("POROUS_BINGHAM_LOG_LEVEL", raising=False)
    monkeypatch.delenv("POROUS_BINGHAM_OUTPUT", raising=False)
    parser = create_parser()
    args = parser.parse_args(["validate-geometry"])

    assert args.command == "validate-geometry"
    assert args.log_level == "INFO"
    assert args.output is None
    assert args.geometry is None
    cfg = build_config(args)
    assert cfg.geometry == "default"
    assert cfg.output_dir == "results"
    assert cfg.epsilons == [0.5, 0.25, 0.125]


def test_create_parser_custom_values() -> None:
    """Test argument parser with custom values."""
    parser = create_parser()
    args = parser.parse_args([
        "converge",
        "--g", "0.1",
        "--epsilons", "0.25", "0.125",
        "--delta-mode", "proportional",
        "--cell-resolution", "4", "8",
        "--strategy", "two_level",
        "--aitken",
        "--log-level", "DEBUG",
        "--poincare",
    ])

    assert args.log_level == "DEBUG"
    assert args.poincare
    cfg = build_config(args)
    assert cfg.physics.g == 0.1
    assert cfg.epsilons == [0.25, 0.125]
    assert cfg.delta_mode == "proportional"
    assert (cfg.cell.resolution_y, cfg.cell.resolution_z) == (4, 8)
    assert cfg.cell.strategy == "two_level"
    assert cfg.macro.aitken


def test_parser_environment_defaults(monkeypatch, tmp_path) -> None:
    monkeypatch.setenv("POROUS_BINGHAM_OUTPUT", str(tmp_path))
    monkeypatch.setenv("POROUS_BINGHAM_LOG_LEVEL", "WARNING")
    args = create_parser().parse_args(["properties"])
    assert args.output == str(tmp_path)
    assert args.log_level == "WARNING"


def test_config_file_is_merged_on_top(test_data_root) -> None:
    args = create_parser().parse_args([
        "cell-linear",
        "--g", "0.1",
        "--mu", "2.0",
        "--config", os.path.join(test_data_root, "study.json"),
    ])
    cfg = build_config(args)
    assert cfg.physics.g == 0.25
    assert cfg.physics.mu == 2.0
    assert cfg.cell.resolution_y == 4
    assert cfg.seed == 7


def test_deep_merge() -> None:
    merged = deep_merge({"physics": {"g": 0.0, "mu": 1.0}, "seed": 1}, {"physics": {"g": 0.5}})
    assert merged == {"physics": {"g": 0.5, "mu": 1.0}, "seed": 1}


def test_load_config_errors(tmp_path) -> None:
    listing = tmp_path / "list.json"
    listing.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(IOFailure):
        load_config(listing)
    with pytest.raises(IOFailure):
        load_config(tmp_path / "missing.json")


def test_invalid_epsilons_exit() -> None:
    with pytest.raises(SystemExit) as exc_info:
        main(["converge", "--epsilons", "0.5", "0.3"])
    assert exc_info.value.code == 1


@pytest.mark.parametrize("passed, code", [(True, 0), (False, 1)])
@patch("porous_bingham.cli.run_command")
def test_main_exit_status(mock_run: MagicMock, passed: bool, code: int) -> None:
    """Exit status follows the command's checks."""
    mock_run.return_value = passed
    with patch("sys.argv", ["porous-bingham", "properties"]):
        with pytest.raises(SystemExit) as exc_info:
            main()
        assert exc_info.value.code == code
    mock_run.assert_called_once()


@patch("porous_bingham.cli.run_command")
def test_main_error(mock_run: MagicMock) -> None:
    mock_run.side_effect = RuntimeError("boom")
    with pytest.raises(SystemExit) as exc_info:
        main(["darcy"])
    assert exc_info.value.code == 1


def test_version() -> None:
    with pytest.raises(SystemExit) as exc_info:
        main(["--version"])
    assert exc_info.value.code == 0


def test_validate_geometry_run(tmp_path) -> None:
    with pytest.raises(SystemExit) as exc_info:
        main(["validate-geometry", "--output", str(tmp_path)])
    assert exc_info.value.code == 0
    manifest = _read_manifest(tmp_path)
    assert manifest["command"] == "validate-geometry"
    assert manifest["passed"] is True
    assert len(manifest["geometry_hash"]) == 64
    assert manifest["results"]["fluid_fraction"] == 0.5625
    for name in ("geometry_report.json", "y_star.pgm", "z_star.csv", "y_fluid.pgm"):
        assert (tmp_path / name).is_file()


def test_validate_geometry_failure(tmp_path) -> None:
    geometry = {
        "y_cell": {"lengths": [1.0, 1.0], "obstacles": [{"corner": [0.3, 0.25], "extents": [0.45, 0.5]}]},
        "z_cell": {"lengths": [1.0, 1.0], "obstacles": [{"corner": [0.25, 0.25], "extents": [0.5, 0.5]}]},
        "subdivision": [4, 4],
    }
    path = tmp_path / "unaligned.json"
    path.write_text(json.dumps(geometry), encoding="utf-8")
    output = tmp_path / "out"
    with pytest.raises(SystemExit) as exc_info:
        main(["validate-geometry", "--geometry", str(path), "--output", str(output)])
    assert exc_info.value.code == 1
    manifest = _read_manifest(output)
    assert manifest["passed"] is False
    assert not (output / "y_star.pgm").exists()


def test_manifest_written_on_error(tmp_path) -> None:
    with pytest.raises(SystemExit) as exc_info:
        main(["cell-linear", "--geometry", "no-such-geometry", "--output", str(tmp_path)])
    assert exc_info.value.code == 1
    manifest = _read_manifest(tmp_path)
    assert manifest["passed"] is False
    assert manifest["results"]["error"].startswith("FileNotFoundError")
